//! Two time steppers for the renormalized equation: exponential Euler on
//! `X` directly, and Picard sweeps of the paracontrolled `(v, w)` system,
//! with reconstruction `X = Ψ − 𝚿 + v + w` and blow-up monitoring.

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::besov::{besov_norm, sup_in_time, BesovNorm, NormGrid, NormSpec};
use crate::diagrams::{build_driver_set, truncated_table, DriverOptions, DriverSet};
use crate::error::{usage, Error, Result};
use crate::hermite::{Field, FieldPath, Products};
use crate::noise::{NoiseConfig, OuSampler, RenormTable};
use crate::paracalc::{BlockSplit, Paracalc};
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveMode {
    Direct,
    Auxiliary,
    Both,
}

impl FromStr for SolveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "auxiliary" => Ok(Self::Auxiliary),
            "both" => Ok(Self::Both),
            _ => Err(usage(format!("unknown solve mode `{s}`"))),
        }
    }
}

/// Run parameters shared by both solvers.
#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub x0: Field,
    pub level: u32,
    pub dt: f64,
    pub horizon: f64,
    pub picard_iters: usize,
    /// Sweep-to-sweep tolerance in the sup-in-time coefficient norm.
    pub picard_tol: f64,
    pub blowup_threshold: f64,
    pub mode: SolveMode,
    /// Dyadic level of the Young cross-check.
    pub young_level: u32,
    /// Drop `−X³ + cX` from the direct scheme.
    pub linear_only: bool,
}

impl SolveConfig {
    pub fn new(x0: Field, level: u32, dt: f64, horizon: f64) -> Self {
        Self {
            x0,
            level,
            dt,
            horizon,
            picard_iters: 60,
            picard_tol: 1e-11,
            blowup_threshold: f64::INFINITY,
            mode: SolveMode::Both,
            young_level: 6,
            linear_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.picard_iters == 0 {
            return Err(usage("picard_iters must be at least 1"));
        }
        if self.blowup_threshold.is_nan() || self.blowup_threshold <= 0.0 {
            return Err(usage("blow-up threshold must be positive"));
        }
        let r = self.horizon / self.dt;
        if !(self.horizon > 0.0) || (r - r.round()).abs() > 1e-9 * r {
            return Err(usage(format!(
                "horizon {} is not a positive whole number of steps {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum StopReason {
    Horizon,
    Blowup,
}

/// Young versus ordinary evaluation of `∫₀ᵀ e^{−(T−r)H}(u_r·d(Ψ∘𝚿)~_r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct YoungCheck {
    pub level: u32,
    pub relative_gap: f64,
    /// Cauchy increment of the dyadic sums at `level`.
    pub increment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardReport {
    pub sweeps: usize,
    /// `max_t ‖(v,w)^{k+1} − (v,w)^k‖` per sweep.
    pub differences: Vec<f64>,
    pub converged: bool,
    /// Largest horizon on which the last sweep still contracted, or met
    /// the tolerance: an empirical stand-in for the existence time.
    pub t_star: f64,
    pub young: Option<YoungCheck>,
}

/// Output of a solve.
#[derive(Clone, Debug)]
pub struct SolutionBundle {
    pub direct: Option<FieldPath>,
    pub v: Option<FieldPath>,
    pub w: Option<FieldPath>,
    /// `Ψ − 𝚿 + v + w`, present when both solvers ran.
    pub reconstructed: Option<FieldPath>,
    /// `‖X̂_m − X_m‖` per step.
    pub residuals: Vec<f64>,
    pub stop: StopReason,
    /// Time of the first proxy exceedance.
    pub t_max: Option<f64>,
    pub picard: Option<PicardReport>,
}

impl SolutionBundle {
    fn empty() -> Self {
        Self {
            direct: None,
            v: None,
            w: None,
            reconstructed: None,
            residuals: Vec::new(),
            stop: StopReason::Horizon,
            t_max: None,
            picard: None,
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Stop decision of the blow-up monitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupDecision {
    pub stop_index: Option<usize>,
    pub t_max: Option<f64>,
}

/// `max_i |u(x_i)|` over the product nodes, a lower bound for `‖u‖_∞`.
pub fn sup_proxy(products: &Products, u: &Field) -> Result<f64> {
    Ok(products.values(u)?.iter().fold(0.0f64, |a, v| {
        if v.is_nan() {
            f64::INFINITY
        } else {
            a.max(v.abs())
        }
    }))
}

/// First time point whose proxy exceeds `threshold`.
pub fn blowup_monitor(
    path: &FieldPath,
    threshold: f64,
    proxy: impl Fn(&Field) -> f64,
) -> BlowupDecision {
    for (m, f) in path.fields().iter().enumerate() {
        let p = proxy(f);
        if p > threshold || p.is_nan() {
            return BlowupDecision {
                stop_index: Some(m),
                t_max: Some(path.time(m)),
            };
        }
    }
    BlowupDecision {
        stop_index: None,
        t_max: None,
    }
}

fn check_psi(psi: &FieldPath, cfg: &SolveConfig) -> Result<()> {
    if psi.len() < cfg.steps() + 1 || (psi.dt() - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(usage(
            "stochastic convolution path does not cover the run grid",
        ));
    }
    Ok(())
}

/// `X_{m+1} = e^{−ΔtH}X_m + Δtφ₁(ΔtH)Π(−X_m³ + cX_m) + η_m` with
/// `η_m = Ψ_{m+1} − e^{−ΔtH}Ψ_m`.
pub fn solve_direct(
    cfg: &SolveConfig,
    psi: &FieldPath,
    table: &RenormTable,
    products: &Products,
) -> Result<SolutionBundle> {
    cfg.validate()?;
    check_psi(psi, cfg)?;
    cfg.x0.check_basis(psi.get(0))?;
    let steps = cfg.steps();
    table.check_grid(cfg.level, cfg.dt, steps, products.grid().len())?;
    let h = cfg.dt;
    let mut x = cfg.x0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    let mut bundle = SolutionBundle::empty();
    if sup_proxy(products, &x)? > cfg.blowup_threshold {
        bundle.stop = StopReason::Blowup;
        bundle.t_max = Some(psi.t0());
        bundle.direct = Some(FieldPath::new(psi.t0(), h, vec![x])?);
        return Ok(bundle);
    }
    out.push(x.clone());
    for m in 0..steps {
        let mut next = x.apply_semigroup(h)?;
        if !cfg.linear_only {
            let c = table.combined_row(m);
            let vals: Vec<f64> = products
                .values(&x)?
                .iter()
                .zip(c)
                .map(|(&u, &c)| -u * u * u + c * u)
                .collect();
            next += &products.project(&vals)?.apply_phi1(h);
        }
        next += psi.get(m + 1);
        next -= &psi.get(m).apply_semigroup(h)?;
        x = next;
        out.push(x.clone());
        let p = sup_proxy(products, &x)?;
        if p > cfg.blowup_threshold || !p.is_finite() {
            bundle.stop = StopReason::Blowup;
            bundle.t_max = Some(psi.time(m + 1));
            break;
        }
    }
    bundle.direct = Some(FieldPath::new(psi.t0(), h, out)?);
    Ok(bundle)
}

/// Driver-only pieces of the auxiliary right-hand side at one time.
struct StepDrivers {
    psi2: BlockSplit,
    ipsi2: BlockSplit,
    /// `IΨ²∘Ψ²`.
    q: Field,
    /// `τ⁽⁰⁾` without its Young terms.
    tau0: Field,
    /// `τ⁽¹⁾` without its Young terms.
    tau1: Field,
    tau2: Field,
    /// Increments of the three antiderivatives over `[t_m, t_{m+1}]`.
    young: [Field; 3],
    /// `e^{−t_m H} v₀`.
    free_v: Field,
}

fn step_drivers(z: &DriverSet, para: &Paracalc, v0: &Field) -> Result<Vec<StepDrivers>> {
    let pr = para.products();
    let steps = z.steps();
    (0..=steps)
        .into_par_iter()
        .map(|m| {
            let psi = z.psi.get(m);
            let t3 = z.tree3.get(m);
            let psi2 = para.split(z.psi2.get(m))?;
            let ipsi2 = para.split(z.ipsi2.get(m))?;
            let q = para.res_split(&ipsi2, &psi2)?;
            let t3sq = pr.square(t3)?;
            let (lo, _, hi) = para.bony(t3, psi)?;
            let t3_res_t3 = para.para_res(t3, t3)?;
            let mut bracket = para.para_hi(psi, &t3sq)?;
            bracket += &para.para_lo(psi, &t3sq)?;
            bracket += &para.para_res(psi, &t3_res_t3)?;
            bracket += &para.commutator_para_res(t3, t3, psi)?.scaled(2.0);
            let tau0 = &pr.cube(t3)? - &bracket.scaled(3.0);
            let tau1 = &(&(&hi + &lo) * 6.0) - &t3sq.scaled(3.0);
            let tau2 = &(t3 - psi) * 3.0;
            let young = if m < steps {
                [0, 1, 2].map(|i| {
                    let a = &z.antiderivatives[i];
                    a.get(m + 1) - a.get(m)
                })
            } else {
                [0, 1, 2].map(|_| Field::zeros(z.basis()))
            };
            Ok(StepDrivers {
                psi2,
                ipsi2,
                q,
                tau0,
                tau1,
                tau2,
                young,
                free_v: v0.apply_semigroup(m as f64 * z.dt())?,
            })
        })
        .collect()
}

/// Right-hand sides `(F, G)` at every step from the current iterate.
fn sweep_forcing(
    para: &Paracalc,
    z: &DriverSet,
    d: &[StepDrivers],
    v: &[Field],
    w: &[Field],
) -> Result<(Vec<Field>, Vec<Field>)> {
    let pr = para.products();
    let h = z.dt();
    let steps = z.steps();
    // Y≺Ψ² and Y≺IΨ² with Y = v + w − 𝚿
    let parts: Vec<(Field, Field, Field, BlockSplit)> = (0..steps)
        .into_par_iter()
        .map(|m| {
            let u = &v[m] + &w[m];
            let y = &u - z.tree3.get(m);
            let ys = para.split(&y)?;
            let a = para.lo_split(&ys, &d[m].psi2)?;
            let b = para.lo_split(&ys, &d[m].ipsi2)?;
            Ok((y, a, b, ys))
        })
        .collect::<Result<_>>()?;
    // J_m = ∫₀^{t_m} e^{−(t_m−s)H}(Y≺Ψ²)_s ds, same recursion as v
    let mut j = Vec::with_capacity(steps);
    let mut acc = Field::zeros(z.basis());
    for p in &parts {
        j.push(acc.clone());
        acc = acc.apply_semigroup(h)?;
        acc += &p.1.apply_phi1(h);
    }
    let forcing: Vec<(Field, Field)> = (0..steps)
        .into_par_iter()
        .map(|m| {
            let (y, a, b, ys) = &parts[m];
            let dm = &d[m];
            let u = &v[m] + &w[m];
            let f = a.scaled(-3.0);
            let com1 = &dm.free_v - &(&j[m] - b).scaled(3.0);
            let mut com = para.res_split(&para.split(&com1)?, &dm.psi2)?;
            // [≺,∘](−3Y, IΨ², Ψ²) = (−3Y≺IΨ²)∘Ψ² + 3Y(IΨ²∘Ψ²)
            com -= &para.res_split(&para.split(b)?, &dm.psi2)?.scaled(3.0);
            com += &pr.mul(y, &dm.q)?.scaled(3.0);
            let w_res = para.res_split(&para.split(&w[m])?, &dm.psi2)?;
            let y_hi = para.lo_split(&dm.psi2, ys)?;
            let mut g = pr.cube(&u)?.scaled(-1.0);
            g -= &com.scaled(3.0);
            g -= &w_res.scaled(3.0);
            g -= &y_hi.scaled(3.0);
            g += &dm.tau0;
            g += &pr.mul(&dm.tau1, &u)?;
            g += &pr.mul3(&dm.tau2, &u, &u)?;
            // Young-interpreted drivers enter through antiderivative increments
            let mut yi = pr.mul(y, &dm.young[0])?.scaled(6.0);
            yi += &pr.mul(y, &dm.young[1])?.scaled(9.0);
            yi += &dm.young[2].scaled(3.0);
            g += &yi.scaled(1.0 / h);
            Ok((f, g))
        })
        .collect::<Result<_>>()?;
    Ok(forcing.into_iter().unzip())
}

fn convolve_from(x0: &Field, forcing: &[Field], h: f64) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(forcing.len() + 1);
    let mut acc = x0.clone();
    out.push(acc.clone());
    for f in forcing {
        acc = acc.apply_semigroup(h)?;
        acc += &f.apply_phi1(h);
        out.push(acc.clone());
    }
    Ok(out)
}

/// Running maximum over time of `max(‖v'−v‖, ‖w'−w‖)`.
fn prefix_diffs(nv: &[Field], v: &[Field], nw: &[Field], w: &[Field]) -> Vec<f64> {
    let mut m = 0.0f64;
    nv.iter()
        .zip(v)
        .zip(nw.iter().zip(w))
        .map(|((a, b), (c, d))| {
            let e = (a - b).l2_norm().max((c - d).l2_norm());
            m = if e.is_nan() { f64::INFINITY } else { m.max(e) };
            m
        })
        .collect()
}

fn contraction_steps(last: &[f64], prev: Option<&[f64]>, tol: f64) -> usize {
    (0..last.len())
        .rev()
        .find(|&m| last[m] < tol || prev.is_some_and(|p| last[m] < p[m]))
        .unwrap_or(0)
}

/// Picard sweeps of the mild `(v, w)` system driven by `z`.
pub fn solve_auxiliary(
    v0: &Field,
    w0: &Field,
    z: &DriverSet,
    cfg: &SolveConfig,
    para: &Paracalc,
) -> Result<SolutionBundle> {
    cfg.validate()?;
    check_psi(&z.psi, cfg)?;
    if z.level != cfg.level {
        return Err(usage(format!(
            "drivers are at level {}, run is at level {}",
            z.level, cfg.level
        )));
    }
    v0.check_basis(z.psi.get(0))?;
    w0.check_basis(v0)?;
    let steps = cfg.steps();
    let z = &truncate_drivers(z, steps)?;
    let h = cfg.dt;
    let d = step_drivers(z, para, v0)?;
    let mut v: Vec<Field> = (0..=steps)
        .map(|m| v0.apply_semigroup(m as f64 * h))
        .collect::<Result<_>>()?;
    let mut w: Vec<Field> = (0..=steps)
        .map(|m| w0.apply_semigroup(m as f64 * h))
        .collect::<Result<_>>()?;
    let mut diffs = Vec::new();
    let mut growth = 0;
    let mut converged = false;
    let (mut last, mut prev): (Vec<f64>, Option<Vec<f64>>) = (Vec::new(), None);
    for _ in 0..cfg.picard_iters {
        let (f, g) = sweep_forcing(para, z, &d, &v, &w)?;
        let nv = convolve_from(v0, &f, h)?;
        let nw = convolve_from(w0, &g, h)?;
        let pd = prefix_diffs(&nv, &v, &nw, &w);
        let diff = pd[steps];
        prev = Some(std::mem::replace(&mut last, pd)).filter(|p| !p.is_empty());
        v = nv;
        w = nw;
        if !diff.is_finite() {
            return Err(Error::Convergence(format!(
                "Picard sweep {} produced non-finite iterates; differences {diffs:?}",
                diffs.len() + 1
            )));
        }
        if let Some(&prev) = diffs.last() {
            growth = if diff > prev { growth + 1 } else { 0 };
        }
        diffs.push(diff);
        if diff < cfg.picard_tol {
            converged = true;
            break;
        }
        if growth >= 3 {
            return Err(Error::Convergence(format!(
                "Picard differences grew three sweeps in a row: {diffs:?}"
            )));
        }
    }
    let v = FieldPath::new(z.psi.t0(), h, v)?;
    let w = FieldPath::new(z.psi.t0(), h, w)?;
    let young = young_check(&v, &w, z, para, cfg.young_level)?;
    let t_star = v.time(contraction_steps(&last, prev.as_deref(), cfg.picard_tol));
    let mut bundle = SolutionBundle::empty();
    bundle.picard = Some(PicardReport {
        sweeps: diffs.len(),
        differences: diffs,
        converged,
        t_star,
        young,
    });
    bundle.v = Some(v);
    bundle.w = Some(w);
    Ok(bundle)
}

fn truncate_drivers(z: &DriverSet, steps: usize) -> Result<DriverSet> {
    if z.steps() == steps {
        return Ok(z.clone());
    }
    let cut = |p: &FieldPath| FieldPath::new(p.t0(), p.dt(), p.fields()[..=steps].to_vec());
    Ok(DriverSet {
        level: z.level,
        psi: cut(&z.psi)?,
        psi2: cut(&z.psi2)?,
        psi3: cut(&z.psi3)?,
        ipsi2: cut(&z.ipsi2)?,
        tree3: cut(&z.tree3)?,
        psi_tree3: cut(&z.psi_tree3)?,
        psi2_ipsi2: cut(&z.psi2_ipsi2)?,
        psi2_tree3: cut(&z.psi2_tree3)?,
        antiderivatives: [
            cut(&z.antiderivatives[0])?,
            cut(&z.antiderivatives[1])?,
            cut(&z.antiderivatives[2])?,
        ],
        norms: z.norms,
    })
}

/// Dyadic Young sums against the stored antiderivative of `Ψ∘𝚿` versus
/// exponential-Euler quadrature of the ordinary product.
fn young_check(
    v: &FieldPath,
    w: &FieldPath,
    z: &DriverSet,
    para: &Paracalc,
    level: u32,
) -> Result<Option<YoungCheck>> {
    let (s, t) = (v.t0(), v.end_time());
    if t <= s {
        return Ok(None);
    }
    let fields: Vec<Field> = v
        .fields()
        .iter()
        .zip(w.fields())
        .map(|(a, b)| a + b)
        .collect();
    let u = FieldPath::new(s, v.dt(), fields)?;
    let y = para.young_mild_integral(&u, &z.antiderivatives[0], s, t, level)?;
    let prod = u
        .fields()
        .iter()
        .zip(z.psi_tree3.fields())
        .map(|(a, b)| para.products().mul(a, b))
        .collect::<Result<Vec<_>>>()?;
    let ord = crate::diagrams::mild_convolve(&FieldPath::new(s, v.dt(), prod)?)?;
    let ord = ord.last();
    let scale = ord.l2_norm();
    let gap = (&y.value - ord).l2_norm();
    Ok(Some(YoungCheck {
        level,
        relative_gap: if scale > 0.0 { gap / scale } else { gap },
        increment: y.increment,
    }))
}

/// Reconstruction residuals `‖Ψ − 𝚿 + v + w − X‖` per step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub max: f64,
    pub initial: f64,
}

/// Forms `X̂ = Ψ − 𝚿 + v + w` and compares it with the direct path.
pub fn reconstruct_and_compare(
    bundle: &mut SolutionBundle,
    z: &DriverSet,
) -> Result<ResidualReport> {
    let (Some(x), Some(v), Some(w)) = (&bundle.direct, &bundle.v, &bundle.w) else {
        return Err(usage(
            "reconstruction needs both the direct and the auxiliary solution",
        ));
    };
    let n = x.len().min(v.len());
    let mut rec = Vec::with_capacity(n);
    let mut res = Vec::with_capacity(n);
    for m in 0..n {
        let mut r = z.psi.get(m) - z.tree3.get(m);
        r += v.get(m);
        r += w.get(m);
        res.push((&r - x.get(m)).l2_norm());
        rec.push(r);
    }
    bundle.reconstructed = Some(FieldPath::new(x.t0(), x.dt(), rec)?);
    bundle.residuals = res.clone();
    Ok(ResidualReport {
        max: res.iter().copied().fold(0.0, f64::max),
        initial: res[0],
        residuals: res,
    })
}

/// Runs the solvers selected by `cfg.mode` on one noise path.
pub fn solve(
    cfg: &SolveConfig,
    psi: &FieldPath,
    table: &RenormTable,
    para: &Paracalc,
    grid: &Arc<NormGrid>,
) -> Result<(SolutionBundle, Option<DriverSet>)> {
    cfg.validate()?;
    let mut bundle = SolutionBundle::empty();
    if cfg.mode != SolveMode::Auxiliary {
        bundle = solve_direct(cfg, psi, table, para.products())?;
    }
    if cfg.mode == SolveMode::Direct {
        return Ok((bundle, None));
    }
    let opts = DriverOptions {
        skip_norms: true,
        ..Default::default()
    };
    let z = build_driver_set(cfg.level, psi, table, para, grid, &opts)?;
    let zero = Field::zeros(para.basis());
    let aux = solve_auxiliary(&cfg.x0, &zero, &z, cfg, para)?;
    bundle.v = aux.v;
    bundle.w = aux.w;
    bundle.picard = aux.picard;
    if cfg.mode == SolveMode::Both {
        reconstruct_and_compare(&mut bundle, &z)?;
    }
    Ok((bundle, Some(z)))
}

/// `log₂(coarse / fine)` of a quantity under step halving.
pub fn halving_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Settings of the common-stream solution convergence study.
#[derive(Clone, Debug)]
pub struct SolutionStudyConfig {
    pub levels: Vec<u32>,
    pub seed: u64,
    pub replicas: u64,
    pub x0: Field,
    pub dt: f64,
    pub horizon: f64,
    /// Exponent slack `η` of the `B^{−1/2−η}` proxy norm.
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionStudyReport {
    pub levels: Vec<u32>,
    /// Median of `sup_t ‖X⁽ⁿ⁾ − X⁽ⁿ'⁾‖_{B^{−1/2−η}}` per consecutive pair.
    pub difference_medians: Vec<f64>,
    pub decreasing: bool,
    /// Median of `‖X_T − Ψ_T + 𝚿_T‖_{B^{1/2}}` per level.
    pub remainder_half: Vec<f64>,
    /// Median of `‖X_T‖_{B^{1/2}}` per level.
    pub raw_half: Vec<f64>,
    /// Median of `‖X_T‖_{B^{−1/2}}` per level.
    pub raw_neg_half: Vec<f64>,
    pub blowups: usize,
}

/// Direct solves across levels on shared Brownian streams.
pub fn solution_convergence_study(
    para: &Paracalc,
    grid: &Arc<NormGrid>,
    cfg: &SolutionStudyConfig,
) -> Result<SolutionStudyReport> {
    if cfg.levels.is_empty() || cfg.replicas == 0 {
        return Err(usage("a convergence study needs levels and replicas"));
    }
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let tables = cfg
        .levels
        .iter()
        .map(|&n| truncated_table(n, para, cfg.dt, steps))
        .collect::<Result<Vec<_>>>()?;
    let basis = para.basis();
    let proxy = BesovNorm::new(NormSpec::holder_zygmund(basis, -0.5 - cfg.eta), grid);
    let half = NormSpec::holder_zygmund(basis, 0.5);
    let neg_half = NormSpec::holder_zygmund(basis, -0.5);
    struct Run {
        x: FieldPath,
        remainder: f64,
        raw: f64,
        raw_neg: f64,
        blowup: bool,
    }
    let runs: Vec<Vec<Run>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            cfg.levels
                .iter()
                .zip(&tables)
                .map(|(&n, table)| {
                    let nc = NoiseConfig::new(n, cfg.seed, cfg.dt, cfg.horizon);
                    let psi = OuSampler::new(basis, nc)?.sample_path(r)?.path;
                    let mut sc = SolveConfig::new(cfg.x0.clone(), n, cfg.dt, cfg.horizon);
                    sc.mode = SolveMode::Direct;
                    let b = solve_direct(&sc, &psi, table, para.products())?;
                    let x = b.direct.expect("direct path");
                    let psi3 = crate::diagrams::wick_cube(n, &psi, table, para)?;
                    let tree3 = crate::diagrams::mild_convolve(&psi3)?;
                    let m = x.len() - 1;
                    let rem = &(x.get(m) - psi.get(m)) + tree3.get(m);
                    Ok(Run {
                        remainder: besov_norm(&rem, half, grid),
                        raw: besov_norm(x.get(m), half, grid),
                        raw_neg: besov_norm(x.get(m), neg_half, grid),
                        blowup: b.stop == StopReason::Blowup,
                        x,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let pairs = cfg.levels.len().saturating_sub(1);
    let mut difference_medians = Vec::with_capacity(pairs);
    for p in 0..pairs {
        let vals = runs
            .iter()
            .map(|r| {
                let (a, b) = (&r[p].x, &r[p + 1].x);
                if a.len() != b.len() {
                    return Ok(f64::INFINITY);
                }
                Ok(sup_in_time(&b.difference(a)?, &proxy))
            })
            .collect::<Result<Vec<f64>>>()?;
        difference_medians.push(median(&vals));
    }
    let per_level = |f: &dyn Fn(&Run) -> f64| -> Vec<f64> {
        (0..cfg.levels.len())
            .map(|i| median(&runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>()))
            .collect()
    };
    Ok(SolutionStudyReport {
        levels: cfg.levels.clone(),
        decreasing: difference_medians.windows(2).all(|w| w[1] < w[0]),
        difference_medians,
        remainder_half: per_level(&|r| r.remainder),
        raw_half: per_level(&|r| r.raw),
        raw_neg_half: per_level(&|r| r.raw_neg),
        blowups: runs.iter().flatten().filter(|r| r.blowup).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{ProductRule, SpectralBasis};
    use crate::noise::{build_renorm_table, RenormMethod};
    use crate::paracalc::ParaConfig;

    fn para(k: usize, rule: ProductRule) -> Paracalc {
        let b = Arc::new(SpectralBasis::new(1, k).unwrap());
        Paracalc::new(Products::new(&b, rule).unwrap(), ParaConfig::default()).unwrap()
    }

    fn zero_table(level: u32, p: &Paracalc, dt: f64, steps: usize) -> RenormTable {
        let times: Vec<f64> = (0..=steps).map(|m| m as f64 * dt).collect();
        let pts: Vec<Vec<f64>> = p.products().grid().nodes().map(<[f64]>::to_vec).collect();
        build_renorm_table(level, &times, &pts, &RenormMethod::Zero).unwrap()
    }

    #[test]
    fn linear_scheme_reproduces_ou() {
        let p = para(8, ProductRule::Dealiased);
        let b = p.basis().clone();
        let psi = OuSampler::new(&b, NoiseConfig::new(4, 9, 0.01, 0.3))
            .unwrap()
            .sample_path(2)
            .unwrap()
            .path;
        let x0 = Field::from_coeffs(&b, (0..8).map(|k| 0.3 / (k + 1) as f64).collect()).unwrap();
        let mut cfg = SolveConfig::new(x0.clone(), 4, 0.01, 0.3);
        cfg.linear_only = true;
        let t = zero_table(4, &p, 0.01, 30);
        let x = solve_direct(&cfg, &psi, &t, p.products())
            .unwrap()
            .direct
            .unwrap();
        for m in [0, 7, 30] {
            let exact = &x0.apply_semigroup(m as f64 * 0.01).unwrap() + psi.get(m);
            assert!((&exact - x.get(m)).l2_norm() < 1e-13);
        }
    }

    #[test]
    fn cubic_drift_dissipates() {
        let p = para(8, ProductRule::Dealiased);
        let b = p.basis().clone();
        let x0 = Field::unit(&b, 0).scaled(10.0);
        let cfg = SolveConfig::new(x0.clone(), 4, 1e-4, 0.01);
        let psi = FieldPath::zeros(&b, 0.0, 1e-4, 100);
        let t = zero_table(4, &p, 1e-4, 100);
        let x = solve_direct(&cfg, &psi, &t, p.products())
            .unwrap()
            .direct
            .unwrap();
        assert!(x.get(1).l2_norm() < x0.l2_norm());
        let d = blowup_monitor(&x, 10.0 * sup_proxy(p.products(), &x0).unwrap(), |f| {
            sup_proxy(p.products(), f).unwrap()
        });
        assert_eq!(d.stop_index, None);
    }

    #[test]
    fn monitor_catches_cubic_growth() {
        // ẋ = x³ from x₀ = 1 blows up at t = 1/2
        let b = Arc::new(SpectralBasis::new(1, 1).unwrap());
        let dt = 1e-5;
        let mut x = 1.0f64;
        let mut fields = vec![Field::unit(&b, 0)];
        for _ in 0..60_000 {
            x += dt * x * x * x;
            fields.push(Field::unit(&b, 0).scaled(x));
            if !x.is_finite() || x > 1e8 {
                break;
            }
        }
        let path = FieldPath::new(0.0, dt, fields).unwrap();
        let d = blowup_monitor(&path, 1e3, |f| f.coeffs()[0].abs());
        let tm = d.t_max.unwrap();
        // exact crossing time of 10³ is (1 − 10⁻⁶)/2
        assert!((tm - 0.5).abs() < 5e-3, "{tm}");
        assert_eq!(
            blowup_monitor(&path, f64::INFINITY, |f| f.coeffs()[0]).stop_index,
            None
        );
    }

    #[test]
    fn zero_drivers_match_direct() {
        let p = para(8, ProductRule::Collocation);
        let b = p.basis().clone();
        let grid = Arc::new(NormGrid::new(&b).unwrap());
        let dt = 1e-2;
        let psi = FieldPath::zeros(&b, 0.0, dt, 20);
        let t = zero_table(5, &p, dt, 20);
        let x0 = Field::from_coeffs(&b, vec![0.5, 0.0, 0.2, 0.0, 0.1, 0.0, 0.0, 0.0]).unwrap();
        let cfg = SolveConfig::new(x0.clone(), 5, dt, 0.2);
        let (mut bundle, z) = solve(&cfg, &psi, &t, &p, &grid).unwrap();
        let z = z.unwrap();
        let r = reconstruct_and_compare(&mut bundle, &z).unwrap();
        assert!(r.max < 1e-12, "{}", r.max);
        assert_eq!(r.initial, 0.0);
        let pr = bundle.picard.unwrap();
        assert!(pr.converged);
        assert!((pr.t_star - 0.2).abs() < 1e-15);
        // the v equation is linear when Ψ² vanishes
        let v = bundle.v.unwrap();
        assert!((&v.get(20).clone() - &x0.apply_semigroup(0.2).unwrap()).l2_norm() < 1e-14);
    }

    #[test]
    fn contraction_horizon_stops_where_differences_grow() {
        let prev = [0.0, 1e-3, 2e-3, 3e-3, 4e-3];
        let last = [0.0, 1e-4, 1e-3, 5e-3, 9e-3];
        assert_eq!(contraction_steps(&last, Some(&prev), 1e-11), 2);
        assert_eq!(contraction_steps(&last, None, 1e-2), 4);
        assert_eq!(contraction_steps(&last, None, 1e-11), 0);
    }
}
