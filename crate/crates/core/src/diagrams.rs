//! Wick powers of the stochastic convolution, the time-convolved trees and
//! the renormalized resonant products that make up the driver set `Z`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::besov::{holder_norm, sup_in_time, BesovNorm, LinearNorm, NormGrid, NormSpec};
use crate::error::{usage, Result};
use crate::hermite::{Field, FieldPath, SpectralBasis};
use crate::noise::{
    build_renorm_table, c1_truncated, covariance_truncated, write_path, NoiseConfig, OuSampler,
    PathHeader, RenormMethod, RenormTable, GENERATOR_ID,
};
use crate::paracalc::Paracalc;
use crate::stats::{linear_fit, median, Moments};

/// Probabilists' Hermite polynomial `He_k`.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    match k {
        0 => return 1.0,
        1 => return x,
        _ => {}
    }
    for j in 1..k {
        let c = x * b - j as f64 * a;
        a = b;
        b = c;
    }
    b
}

fn check_table(
    level: u32,
    path: &FieldPath,
    table: &RenormTable,
    nodes: &crate::hermite::QuadratureGrid,
) -> Result<()> {
    // table rows are indexed by steps since the path start
    table.check_grid(level, path.dt(), path.len() - 1, nodes.len())?;
    for (p, x) in table.points().iter().zip(nodes.nodes()) {
        if p.iter()
            .zip(x)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
        {
            return Err(usage(
                "renormalization table points are not the product nodes",
            ));
        }
    }
    Ok(())
}

fn map_nodes(
    level: u32,
    psi: &FieldPath,
    table: &RenormTable,
    para: &Paracalc,
    f: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<FieldPath> {
    let products = para.products();
    check_table(level, psi, table, products.grid())?;
    let fields = psi
        .fields()
        .par_iter()
        .enumerate()
        .map(|(m, u)| {
            let v: Vec<f64> = products
                .values(u)?
                .iter()
                .zip(table.c1_row(m))
                .map(|(&x, &c)| f(x, c))
                .collect();
            products.project(&v)
        })
        .collect::<Result<Vec<_>>>()?;
    FieldPath::new(psi.t0(), psi.dt(), fields)
}

/// `Ψ² − c¹` at the product nodes, projected.
pub fn wick_square(
    level: u32,
    psi: &FieldPath,
    table: &RenormTable,
    para: &Paracalc,
) -> Result<FieldPath> {
    map_nodes(level, psi, table, para, |x, c| x * x - c)
}

/// `Ψ³ − 3c¹Ψ` at the product nodes, projected.
pub fn wick_cube(
    level: u32,
    psi: &FieldPath,
    table: &RenormTable,
    para: &Paracalc,
) -> Result<FieldPath> {
    map_nodes(level, psi, table, para, |x, c| x * x * x - 3.0 * c * x)
}

/// `I f_t = ∫₀ᵗ e^{−(t−s)H} f_s ds` by the exponential Euler recursion
/// `I_{m+1} = e^{−ΔtH} I_m + Δt φ₁(ΔtH) f_m`.
pub fn mild_convolve(path: &FieldPath) -> Result<FieldPath> {
    let Some(basis) = path.basis() else {
        return Ok(path.clone());
    };
    let dt = path.dt();
    let mut acc = Field::zeros(basis);
    let mut out = Vec::with_capacity(path.len());
    out.push(acc.clone());
    for f in &path.fields()[..path.len() - 1] {
        acc = acc.apply_semigroup(dt)?;
        acc += &f.apply_phi1(dt);
        out.push(acc.clone());
    }
    FieldPath::new(path.t0(), dt, out)
}

/// The six components of the driver tuple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Component {
    Psi,
    Psi2,
    Tree3,
    PsiTree3,
    Psi2IPsi2,
    Psi2Tree3,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::Psi,
        Component::Psi2,
        Component::Tree3,
        Component::PsiTree3,
        Component::Psi2IPsi2,
        Component::Psi2Tree3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Psi => "psi",
            Component::Psi2 => "psi2",
            Component::Tree3 => "tree3",
            Component::PsiTree3 => "psi_res_tree3",
            Component::Psi2IPsi2 => "psi2_res_ipsi2",
            Component::Psi2Tree3 => "psi2_res_tree3",
        }
    }
}

/// Switches for `build_driver_set`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverOptions {
    /// Exponent slack in the norm summary.
    pub epsilon: f64,
    /// Replace `Ψ³ᵂ` by zero.
    pub zero_cubic: bool,
    /// Time points kept by Hölder norms (`0` keeps all).
    pub holder_points: usize,
    /// Skip the norm summary.
    pub skip_norms: bool,
}

impl Default for DriverOptions {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            zero_cubic: false,
            holder_points: 65,
            skip_norms: false,
        }
    }
}

/// Norms of the driver components at the regularities they converge in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormSummary {
    pub epsilon: f64,
    /// `sup_t ‖Ψ‖_{B^{−1/2−ε}}`.
    pub psi: f64,
    /// `sup_t ‖Ψ²ᵂ‖_{B^{−1−ε}}`.
    pub psi2: f64,
    /// `sup_t ‖𝚿‖_{B^{1/2−ε}}`.
    pub tree3_sup: f64,
    /// `‖𝚿‖_{C^{1/4−ε} B^{ε}}`.
    pub tree3_holder: f64,
    /// `‖Ψ∘𝚿‖_{C^{−ε/2} B^{−ε/2}}`.
    pub psi_tree3: f64,
    /// `‖Ψ²∘IΨ² − c²‖_{C^{−ε} B^{−ε/2}}`.
    pub psi2_ipsi2: f64,
    /// `‖Ψ²∘𝚿 − 3c²Ψ‖_{C^{−1/4−ε} B^{−1/4−2ε}}`.
    pub psi2_tree3: f64,
}

/// The diagrams built from one sample of `Ψ`.
#[derive(Clone, Debug)]
pub struct DriverSet {
    pub level: u32,
    pub psi: FieldPath,
    /// `Ψ²ᵂ = Ψ² − c¹`.
    pub psi2: FieldPath,
    /// `Ψ³ᵂ = Ψ³ − 3c¹Ψ`.
    pub psi3: FieldPath,
    /// `IΨ²`.
    pub ipsi2: FieldPath,
    /// `𝚿 = IΨ³ᵂ`.
    pub tree3: FieldPath,
    /// `Ψ∘𝚿`.
    pub psi_tree3: FieldPath,
    /// `Ψ²ᵂ∘IΨ² − c²`.
    pub psi2_ipsi2: FieldPath,
    /// `Ψ²ᵂ∘𝚿 − 3c²Ψ`.
    pub psi2_tree3: FieldPath,
    /// Antiderivatives of the last three, in the same order.
    pub antiderivatives: [FieldPath; 3],
    pub norms: Option<NormSummary>,
}

impl DriverSet {
    pub fn component(&self, c: Component) -> &FieldPath {
        match c {
            Component::Psi => &self.psi,
            Component::Psi2 => &self.psi2,
            Component::Tree3 => &self.tree3,
            Component::PsiTree3 => &self.psi_tree3,
            Component::Psi2IPsi2 => &self.psi2_ipsi2,
            Component::Psi2Tree3 => &self.psi2_tree3,
        }
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.psi.basis().expect("driver paths are non-empty")
    }

    pub fn dt(&self) -> f64 {
        self.psi.dt()
    }

    pub fn steps(&self) -> usize {
        self.psi.len() - 1
    }

    /// Named paths in a fixed order, as persisted.
    pub fn named_paths(&self) -> Vec<(&'static str, &FieldPath)> {
        vec![
            ("psi", &self.psi),
            ("psi2", &self.psi2),
            ("psi3", &self.psi3),
            ("ipsi2", &self.ipsi2),
            ("tree3", &self.tree3),
            ("psi_res_tree3", &self.psi_tree3),
            ("psi2_res_ipsi2", &self.psi2_ipsi2),
            ("psi2_res_tree3", &self.psi2_tree3),
            ("psi_res_tree3_anti", &self.antiderivatives[0]),
            ("psi2_res_ipsi2_anti", &self.antiderivatives[1]),
            ("psi2_res_tree3_anti", &self.antiderivatives[2]),
        ]
    }
}

fn zip_map(
    a: &FieldPath,
    b: &FieldPath,
    f: impl Fn(usize, &Field, &Field) -> Result<Field> + Sync,
) -> Result<FieldPath> {
    let fields = a
        .fields()
        .par_iter()
        .zip(b.fields())
        .enumerate()
        .map(|(m, (x, y))| f(m, x, y))
        .collect::<Result<Vec<_>>>()?;
    FieldPath::new(a.t0(), a.dt(), fields)
}

/// Composes the Wick powers, time convolutions and resonant products.
pub fn build_driver_set(
    level: u32,
    psi: &FieldPath,
    table: &RenormTable,
    para: &Paracalc,
    grid: &Arc<NormGrid>,
    opts: &DriverOptions,
) -> Result<DriverSet> {
    let products = para.products();
    let psi2 = wick_square(level, psi, table, para)?;
    let psi3 = if opts.zero_cubic {
        FieldPath::zeros(para.basis(), psi.t0(), psi.dt(), psi.len() - 1)
    } else {
        wick_cube(level, psi, table, para)?
    };
    let ipsi2 = mild_convolve(&psi2)?;
    let tree3 = mild_convolve(&psi3)?;
    let psi_tree3 = zip_map(psi, &tree3, |_, a, b| para.para_res(a, b))?;
    let psi2_ipsi2 = zip_map(&psi2, &ipsi2, |m, a, b| {
        let r = para.para_res(a, b)?;
        let c2 = products.project(table.c2_row(m))?;
        Ok(&r - &c2)
    })?;
    let psi2_tree3 = zip_map(&psi2, &tree3, |m, a, b| {
        let r = para.para_res(a, b)?;
        let c2psi = products.mul_nodes(psi.get(m), table.c2_row(m))?;
        Ok(&r - &c2psi.scaled(3.0))
    })?;
    let antiderivatives = [
        psi_tree3.antiderivative(),
        psi2_ipsi2.antiderivative(),
        psi2_tree3.antiderivative(),
    ];
    let mut set = DriverSet {
        level,
        psi: psi.clone(),
        psi2,
        psi3,
        ipsi2,
        tree3,
        psi_tree3,
        psi2_ipsi2,
        psi2_tree3,
        antiderivatives,
        norms: None,
    };
    if !opts.skip_norms {
        set.norms = Some(norm_summary(&set, grid, opts)?);
    }
    Ok(set)
}

fn besov(grid: &Arc<NormGrid>, sigma: f64) -> BesovNorm {
    BesovNorm::new(NormSpec::holder_zygmund(grid.basis(), sigma), grid)
}

fn stride_for(len: usize, points: usize) -> usize {
    if points < 2 || len <= points {
        1
    } else {
        (len - 1).div_ceil(points - 1)
    }
}

/// `‖f‖_{C^{−λ}E}` computed on the antiderivative, thinned to the
/// configured number of Hölder points.
fn neg_holder(path: &FieldPath, lambda: f64, norm: &dyn LinearNorm, points: usize) -> Result<f64> {
    let anti = path.antiderivative();
    let s = stride_for(anti.len(), points);
    holder_norm(&anti.subsample(s), 1.0 - lambda, norm)
}

/// Norm of one component (or of a difference of components) in its
/// driver-space topology.
pub fn component_norm(
    c: Component,
    path: &FieldPath,
    grid: &Arc<NormGrid>,
    epsilon: f64,
    holder_points: usize,
) -> Result<f64> {
    let e = epsilon;
    Ok(match c {
        Component::Psi => sup_in_time(path, &besov(grid, -0.5 - e)),
        Component::Psi2 => sup_in_time(path, &besov(grid, -1.0 - e)),
        Component::Tree3 => {
            let s = stride_for(path.len(), holder_points);
            let sup = sup_in_time(path, &besov(grid, 0.5 - e));
            let hol = holder_norm(&path.subsample(s), 0.25 - e, &besov(grid, e))?;
            sup.max(hol)
        }
        Component::PsiTree3 => neg_holder(path, e / 2.0, &besov(grid, -e / 2.0), holder_points)?,
        Component::Psi2IPsi2 => neg_holder(path, e, &besov(grid, -e / 2.0), holder_points)?,
        Component::Psi2Tree3 => {
            neg_holder(path, 0.25 + e, &besov(grid, -0.25 - 2.0 * e), holder_points)?
        }
    })
}

pub fn norm_summary(
    set: &DriverSet,
    grid: &Arc<NormGrid>,
    opts: &DriverOptions,
) -> Result<NormSummary> {
    let e = opts.epsilon;
    let hp = opts.holder_points;
    let s = stride_for(set.tree3.len(), hp);
    Ok(NormSummary {
        epsilon: e,
        psi: component_norm(Component::Psi, &set.psi, grid, e, hp)?,
        psi2: component_norm(Component::Psi2, &set.psi2, grid, e, hp)?,
        tree3_sup: sup_in_time(&set.tree3, &besov(grid, 0.5 - e)),
        tree3_holder: holder_norm(&set.tree3.subsample(s), 0.25 - e, &besov(grid, e))?,
        psi_tree3: component_norm(Component::PsiTree3, &set.psi_tree3, grid, e, hp)?,
        psi2_ipsi2: component_norm(Component::Psi2IPsi2, &set.psi2_ipsi2, grid, e, hp)?,
        psi2_tree3: component_norm(Component::Psi2Tree3, &set.psi2_tree3, grid, e, hp)?,
    })
}

/// Renormalization table on a path's time grid and the product nodes,
/// from the closed-form truncated sums.
pub fn truncated_table(level: u32, para: &Paracalc, dt: f64, steps: usize) -> Result<RenormTable> {
    let times: Vec<f64> = (0..=steps).map(|m| m as f64 * dt).collect();
    let points: Vec<Vec<f64>> = para
        .products()
        .grid()
        .nodes()
        .map(<[f64]>::to_vec)
        .collect();
    build_renorm_table(
        level,
        &times,
        &points,
        &RenormMethod::Truncated(para.basis().clone()),
    )
}

/// A space-time point pair for moment checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentPoint {
    pub s1: f64,
    pub s2: f64,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

/// Monte Carlo estimate against the Gaussian closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentCheck {
    pub point: MomentPoint,
    pub exact: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Which product moment to estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MomentKind {
    /// `E[Ψ_{s₁}(y₁)Ψ_{s₂}(y₂)] = C`.
    Covariance,
    /// `E[Ψ²ᵂΨ²ᵂ] = 2C²`.
    WickSquare,
    /// `E[Ψ³ᵂΨ³ᵂ] = 6C³`.
    WickCube,
}

/// Pointwise samples of `Ψ` at `(s, y)` pairs for replicas `0..count`.
///
/// Returns, per point, the replica values at both ends.
pub fn sample_point_pairs(
    sampler: &OuSampler,
    points: &[MomentPoint],
    count: u64,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let cfg = sampler.config();
    let basis = sampler.basis();
    let step_of = |t: f64| -> Result<usize> {
        let s = t / cfg.dt;
        if (s - s.round()).abs() > 1e-9 * s.max(1.0) {
            return Err(usage(format!("time {t} is not on the sampling grid")));
        }
        Ok(s.round() as usize)
    };
    let mut steps: Vec<usize> = Vec::new();
    for p in points {
        steps.push(step_of(p.s1)?);
        steps.push(step_of(p.s2)?);
    }
    steps.sort_unstable();
    steps.dedup();
    let phis: Vec<(Vec<f64>, Vec<f64>)> = points
        .iter()
        .map(|p| (basis.eval_all(&p.y1), basis.eval_all(&p.y2)))
        .collect();
    let idx: Vec<(usize, usize)> = points
        .iter()
        .map(|p| {
            let a = steps.binary_search(&step_of(p.s1).unwrap()).unwrap();
            let b = steps.binary_search(&step_of(p.s2).unwrap()).unwrap();
            (a, b)
        })
        .collect();
    let per_rep: Vec<Vec<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|r| -> Result<Vec<(f64, f64)>> {
            let rows = sampler.sample_at(r, &steps)?;
            Ok(idx
                .iter()
                .zip(&phis)
                .map(|(&(a, b), (pa, pb))| {
                    let dot = |c: &[f64], p: &[f64]| c.iter().zip(p).map(|(x, y)| x * y).sum();
                    (dot(&rows[a], pa), dot(&rows[b], pb))
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..points.len())
        .map(|i| per_rep.iter().map(|r| r[i]).collect())
        .collect())
}

/// Monte Carlo check of a second-order product moment at each point.
///
/// Wick powers are centred with the truncated variance of the sampled
/// basis; the closed form uses `exact_cov` (one entry per point).
pub fn moment_checks(
    sampler: &OuSampler,
    points: &[MomentPoint],
    count: u64,
    kind: MomentKind,
    exact_cov: &[f64],
) -> Result<Vec<MomentCheck>> {
    if exact_cov.len() != points.len() {
        return Err(usage("one closed-form covariance per point is required"));
    }
    let level = sampler.config().level;
    let basis = sampler.basis();
    let samples = sample_point_pairs(sampler, points, count)?;
    Ok(points
        .iter()
        .zip(samples)
        .zip(exact_cov)
        .map(|((p, pairs), &c)| {
            let v1 = c1_truncated(basis, level, p.s1, &p.y1);
            let v2 = c1_truncated(basis, level, p.s2, &p.y2);
            let (obs, exact): (Vec<f64>, f64) = match kind {
                MomentKind::Covariance => (pairs.iter().map(|(a, b)| a * b).collect(), c),
                MomentKind::WickSquare => (
                    pairs
                        .iter()
                        .map(|(a, b)| (a * a - v1) * (b * b - v2))
                        .collect(),
                    2.0 * c * c,
                ),
                MomentKind::WickCube => (
                    pairs
                        .iter()
                        .map(|(a, b)| (a * a * a - 3.0 * v1 * a) * (b * b * b - 3.0 * v2 * b))
                        .collect(),
                    6.0 * c * c * c,
                ),
            };
            let m = Moments::of(&obs);
            MomentCheck {
                point: p.clone(),
                exact,
                mean: m.mean,
                std_error: m.std_error(),
                z: m.z_score(exact),
            }
        })
        .collect())
}

/// Truncated covariance at each point, the closed form matching a
/// finite-basis ensemble.
pub fn truncated_covariances(
    basis: &SpectralBasis,
    level: u32,
    points: &[MomentPoint],
) -> Vec<f64> {
    points
        .iter()
        .map(|p| covariance_truncated(basis, level, p.s1, p.s2, &p.y1, &p.y2))
        .collect()
}

/// Settings of a common-stream driver convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct DriverStudyConfig {
    pub levels: Vec<u32>,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub replicas: u64,
    pub options: DriverOptions,
}

/// Median difference norms for one component across consecutive levels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentTrend {
    pub component: Component,
    pub name: &'static str,
    /// One entry per consecutive pair of levels.
    pub medians: Vec<f64>,
    pub decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriverStudyReport {
    pub levels: Vec<u32>,
    pub epsilon: f64,
    pub replicas: u64,
    pub trends: Vec<ComponentTrend>,
    /// `κ` from fitting the `Ψ` medians to `2^{−κn/2}`.
    pub kappa: f64,
}

impl DriverStudyReport {
    pub fn trend(&self, c: Component) -> &ComponentTrend {
        self.trends
            .iter()
            .find(|t| t.component == c)
            .expect("all components are tracked")
    }
}

/// Driver sets at every level of one replica, on common Brownian streams.
pub fn driver_sets_for_replica(
    para: &Paracalc,
    grid: &Arc<NormGrid>,
    cfg: &DriverStudyConfig,
    tables: &[RenormTable],
    replica: u64,
) -> Result<Vec<DriverSet>> {
    let basis = para.basis();
    cfg.levels
        .iter()
        .zip(tables)
        .map(|(&n, table)| {
            let nc = NoiseConfig::new(n, cfg.seed, cfg.dt, cfg.horizon);
            let psi = OuSampler::new(basis, nc)?.sample_path(replica)?;
            let mut opts = cfg.options;
            opts.skip_norms = true;
            build_driver_set(n, &psi.path, table, para, grid, &opts)
        })
        .collect()
}

/// Norms of `Z⁽ⁿ⁾ − Z⁽ⁿ'⁾` for consecutive levels, with ensemble medians.
pub fn driver_convergence_study(
    para: &Paracalc,
    grid: &Arc<NormGrid>,
    cfg: &DriverStudyConfig,
) -> Result<DriverStudyReport> {
    if cfg.levels.len() < 2 {
        return Err(usage("a convergence study needs at least two levels"));
    }
    if cfg.replicas == 0 {
        return Err(usage("a convergence study needs at least one replica"));
    }
    NoiseConfig::new(cfg.levels[0], cfg.seed, cfg.dt, cfg.horizon).validate()?;
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let tables = cfg
        .levels
        .iter()
        .map(|&n| truncated_table(n, para, cfg.dt, steps))
        .collect::<Result<Vec<_>>>()?;
    let e = cfg.options.epsilon;
    let hp = cfg.options.holder_points;
    // per replica → per pair → per component
    let diffs: Vec<Vec<Vec<f64>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let sets = driver_sets_for_replica(para, grid, cfg, &tables, r)?;
            sets.windows(2)
                .map(|w| {
                    Component::ALL
                        .iter()
                        .map(|&c| {
                            let d = w[1].component(c).difference(w[0].component(c))?;
                            component_norm(c, &d, grid, e, hp)
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let pairs = cfg.levels.len() - 1;
    let trends: Vec<ComponentTrend> = Component::ALL
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let medians: Vec<f64> = (0..pairs)
                .map(|p| median(&diffs.iter().map(|r| r[p][ci]).collect::<Vec<_>>()))
                .collect();
            ComponentTrend {
                component: c,
                name: c.name(),
                decreasing: medians.windows(2).all(|w| w[1] < w[0]),
                medians,
            }
        })
        .collect();
    let xs: Vec<f64> = cfg.levels[..pairs].iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = trends[0].medians.iter().map(|m| m.log2()).collect();
    let kappa = if pairs >= 2 && ys.iter().all(|y| y.is_finite()) {
        -2.0 * linear_fit(&xs, &ys).slope
    } else {
        f64::NAN
    };
    Ok(DriverStudyReport {
        levels: cfg.levels.clone(),
        epsilon: e,
        replicas: cfg.replicas,
        trends,
        kappa,
    })
}

/// Writes every path of `set` in the binary path format plus a JSON
/// manifest naming each file; returns the manifest path.
pub fn persist_driver_set(
    dir: &std::path::Path,
    set: &DriverSet,
    seed: u64,
    replica: u64,
) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let basis = set.basis();
    let mut files = Vec::new();
    for (name, path) in set.named_paths() {
        let header = PathHeader {
            dimension: basis.dim(),
            modes: basis.len(),
            n: set.level,
            dt: path.dt(),
            horizon: path.end_time(),
            seed,
            generator: GENERATOR_ID.to_string(),
            rows: path.len(),
            name: Some(name.to_string()),
            replica: Some(replica),
        };
        let file = format!("n{}_r{}_{}.bin", set.level, replica, name);
        write_path(&dir.join(&file), &header, path)?;
        files.push(serde_json::json!({ "diagram": name, "file": file }));
    }
    let manifest = serde_json::json!({
        "level": set.level,
        "seed": seed,
        "replica": replica,
        "dimension": basis.dim(),
        "K": basis.len(),
        "dt": set.dt(),
        "T": set.psi.end_time(),
        "generator": GENERATOR_ID,
        "antiderivative": "cumulative trapezoid",
        "paths": files,
    });
    let out = dir.join(format!("n{}_r{}_manifest.json", set.level, replica));
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| crate::Error::Format(e.to_string()))?;
    std::fs::write(&out, text + "\n")?;
    Ok(out)
}

/// Ensemble statistics of `Ψ²ᵂ∘IΨ² − c²` at one time and node: the mean
/// estimates the gap between the resonant and the full-product centring.
pub fn resonant_gap(sets: &[DriverSet], m: usize, node: usize, para: &Paracalc) -> Result<Moments> {
    let vals = sets
        .iter()
        .map(|s| Ok(para.products().values(s.psi2_ipsi2.get(m))?[node]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Moments::of(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{ProductRule, Products};
    use crate::paracalc::ParaConfig;

    fn setup(k: usize, rule: ProductRule) -> (Paracalc, Arc<NormGrid>) {
        let b = Arc::new(SpectralBasis::new(1, k).unwrap());
        let para = Paracalc::new(Products::new(&b, rule).unwrap(), ParaConfig::default()).unwrap();
        let grid = Arc::new(NormGrid::new(&b).unwrap());
        (para, grid)
    }

    #[test]
    fn he_polynomials() {
        assert_eq!(hermite_he(2, 3.0), 8.0);
        assert_eq!(hermite_he(3, 2.0), 2.0);
        assert_eq!(hermite_he(4, 1.0), -2.0);
    }

    #[test]
    fn mild_convolve_constant_mode() {
        let b = Arc::new(SpectralBasis::new(1, 6).unwrap());
        let dt = 1e-3;
        let f = FieldPath::new(0.0, dt, vec![Field::unit(&b, 2); 501]).unwrap();
        let i = mild_convolve(&f).unwrap();
        let l = b.eigenvalues()[2];
        let t = 0.5;
        let exact = -(-l * t).exp_m1() / l;
        // constant forcing is integrated exactly by the exponential step
        assert!((i.last().coeffs()[2] - exact).abs() < 1e-13);
        assert_eq!(i.get(0).l2_norm(), 0.0);
    }

    #[test]
    fn mild_convolve_is_first_order() {
        let b = Arc::new(SpectralBasis::new(1, 4).unwrap());
        let run = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let fields = (0..=steps)
                .map(|m| Field::unit(&b, 1).scaled((m as f64 * dt).sin()))
                .collect();
            mild_convolve(&FieldPath::new(0.0, dt, fields).unwrap())
                .unwrap()
                .last()
                .coeffs()[1]
        };
        // ∫₀¹ e^{−3(1−s)} sin s ds
        let exact = (3.0 * 1f64.sin() - 1f64.cos() + (-3.0f64).exp()) / 10.0;
        let e1 = (run(0.01) - exact).abs();
        let e2 = (run(0.005) - exact).abs();
        assert!((e1 / e2 - 2.0).abs() < 0.05, "ratio {}", e1 / e2);
    }

    #[test]
    fn wick_matches_hermite_identity_at_nodes() {
        let (para, _) = setup(12, ProductRule::Collocation);
        let basis = para.basis().clone();
        let cfg = NoiseConfig::new(3, 11, 0.01, 0.2);
        let psi = OuSampler::new(&basis, cfg)
            .unwrap()
            .sample_path(0)
            .unwrap()
            .path;
        let table = truncated_table(3, &para, 0.01, 20).unwrap();
        let w2 = wick_square(3, &psi, &table, &para).unwrap();
        let w3 = wick_cube(3, &psi, &table, &para).unwrap();
        let pr = para.products();
        for m in [5, 20] {
            let g = pr.values(psi.get(m)).unwrap();
            let a = pr.values(w2.get(m)).unwrap();
            let c = pr.values(w3.get(m)).unwrap();
            for i in 0..g.len() {
                let v = table.c1_row(m)[i];
                let s = v.sqrt();
                assert!((a[i] - v * hermite_he(2, g[i] / s)).abs() < 1e-12);
                assert!((c[i] - v * s * hermite_he(3, g[i] / s)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn level_mismatch_is_usage_error() {
        let (para, _) = setup(8, ProductRule::Collocation);
        let psi = FieldPath::zeros(para.basis(), 0.0, 0.1, 2);
        let table = truncated_table(4, &para, 0.1, 2).unwrap();
        assert!(matches!(
            wick_square(5, &psi, &table, &para),
            Err(crate::Error::Usage(_))
        ));
    }

    #[test]
    fn zero_cubic_gives_zero_trees() {
        let (para, grid) = setup(10, ProductRule::Collocation);
        let basis = para.basis().clone();
        let cfg = NoiseConfig::new(4, 3, 0.01, 0.1);
        let psi = OuSampler::new(&basis, cfg)
            .unwrap()
            .sample_path(1)
            .unwrap()
            .path;
        let table = truncated_table(4, &para, 0.01, 10).unwrap();
        let opts = DriverOptions {
            zero_cubic: true,
            ..Default::default()
        };
        let z = build_driver_set(4, &psi, &table, &para, &grid, &opts).unwrap();
        assert!(z.tree3.fields().iter().all(|f| f.l2_norm() == 0.0));
        assert!(z.psi_tree3.fields().iter().all(|f| f.l2_norm() == 0.0));
        for (_, p) in z.named_paths() {
            assert!(p.get(0).l2_norm() < 1e-14);
        }
        let n = z.norms.unwrap();
        assert!(n.psi.is_finite() && n.psi2.is_finite() && n.psi2_ipsi2.is_finite());
    }
}
