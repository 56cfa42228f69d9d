//! The batch studies. Each one reads its keys from a [`Config`], runs on
//! the core crate, and returns tables, checks and a JSON result block.

use std::sync::Arc;

use hphi4_core::besov::NormGrid;
use hphi4_core::diagrams::{
    build_driver_set, driver_convergence_study, hermite_he, moment_checks, truncated_covariances,
    truncated_table, wick_cube, wick_square, Component, DriverOptions, DriverSet,
    DriverStudyConfig, DriverStudyReport, MomentCheck, MomentKind, MomentPoint,
};
use hphi4_core::noise::{
    c1_truncated, compute_c1, compute_c2, covariance_exact, C2Options, NoiseConfig, OuSampler,
    PathHeader, RenormTable, GENERATOR_ID,
};
use hphi4_core::paracalc::{ParaConfig, Paracalc};
use hphi4_core::solver::{
    halving_order, solution_convergence_study, solve, SolutionStudyConfig, SolveConfig, SolveMode,
};
use hphi4_core::stats::{log2_slope, Moments};
use hphi4_core::{Field, FieldPath, ProductRule, Products, SpectralBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::CliError;
use crate::report::{Cell, Check, Comparator, Table};

pub const STUDIES: [&str; 7] = [
    "renorm-study",
    "covariance-check",
    "wick-moments",
    "driver-study",
    "solve",
    "reconcile",
    "converge",
];

/// A persisted path requested by a study.
pub struct PathOutput {
    pub file: String,
    pub header: PathHeader,
    pub path: FieldPath,
}

pub struct StudyOutput {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub results: Value,
    pub paths: Vec<PathOutput>,
    /// Driver sets to persist with their manifests.
    pub driver_sets: Vec<(DriverSet, u64, u64)>,
}

impl StudyOutput {
    fn new(results: Value) -> Self {
        Self {
            tables: Vec::new(),
            checks: Vec::new(),
            results,
            paths: Vec::new(),
            driver_sets: Vec::new(),
        }
    }
}

pub fn run_study(name: &str, cfg: &Config) -> Result<StudyOutput, CliError> {
    match name {
        "renorm-study" => renorm_study(cfg),
        "covariance-check" => covariance_check(cfg),
        "wick-moments" => wick_moments(cfg),
        "driver-study" => driver_study(cfg),
        "solve" => solve_study(cfg),
        "reconcile" => reconcile(cfg),
        "converge" => converge(cfg),
        _ => Err(CliError::config(
            None,
            name,
            &format!("unknown study; expected one of {}", STUDIES.join(", ")),
        )),
    }
}

fn basis(cfg: &Config, dim: u64, modes: Option<u64>) -> Result<Arc<SpectralBasis>, CliError> {
    let d = cfg.u64_or("basis.dimension", dim, 1, 3)? as usize;
    let k = match modes {
        Some(m) => cfg.u64_or("basis.modes", m, 1, 1 << 20)?,
        None => cfg.require_u64("basis.modes", 1, 1 << 20)?,
    } as usize;
    Ok(SpectralBasis::new(d, k)?)
}

fn paracalc(
    cfg: &Config,
    b: &Arc<SpectralBasis>,
    default_rule: &str,
) -> Result<Paracalc, CliError> {
    let rule: ProductRule = cfg
        .str_or("basis.products", default_rule)
        .parse()
        .map_err(|_| {
            CliError::config(
                None,
                "basis.products",
                "expected `collocation` or `dealiased`",
            )
        })?;
    let pc = ParaConfig {
        separation: cfg.u64_or("paracalc.separation", 4, 1, 16)? as i32,
        resonance_width: cfg.u64_or("paracalc.resonance_width", 3, 0, 16)? as i32,
    };
    Ok(Paracalc::new(Products::new(b, rule)?, pc)?)
}

fn seed(cfg: &Config) -> Result<u64, CliError> {
    cfg.require_u64("run.seed", 0, u64::MAX)
}

fn x0_field(cfg: &Config, b: &Arc<SpectralBasis>) -> Result<Field, CliError> {
    let mut c = cfg.f64_list_or("solve.x0", &[0.5, 0.0, 0.2])?;
    if c.len() > b.len() {
        return Err(CliError::config(
            None,
            "solve.x0",
            "more coefficients than basis modes",
        ));
    }
    c.resize(b.len(), 0.0);
    Ok(Field::from_coeffs(b, c)?)
}

fn ratio_check(name: &str, medians: &[f64]) -> Check {
    let worst = medians
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(
            0.0,
            |a: f64, r| if r.is_nan() { f64::INFINITY } else { a.max(r) },
        );
    Check::new(name, worst, Comparator::Lt, 1.0)
}

// ---------------------------------------------------------------- renorm

fn renorm_study(cfg: &Config) -> Result<StudyOutput, CliError> {
    let dim = cfg.u64_or("basis.dimension", 3, 1, 3)? as usize;
    let levels = cfg.require_levels("renorm.levels")?;
    let t = cfg.require_f64("renorm.t", 1e-6, 1e3)?;
    let origin = vec!["0"; dim].join(",");
    let points = cfg.points_or("renorm.points", &origin, dim)?;
    let opts = C2Options {
        w_order: cfg.u64_or("renorm.w_order", 48, 4, 512)? as usize,
        sigma_order: cfg.u64_or("renorm.sigma_order", 16, 2, 256)? as usize,
        time_tol: cfg.f64_or("renorm.time_tol", 1e-10, 1e-16, 1e-2)?,
        analytic_w: cfg.bool_or("renorm.analytic_w", false)?,
    };
    let slope_lo = cfg.f64_or("checks.slope_min", 0.45, -10.0, 10.0)?;
    let slope_hi = cfg.f64_or("checks.slope_max", 0.55, -10.0, 10.0)?;
    let spread_max = cfg.f64_or("checks.c2_spread_max", 3.0, 1.0, 1e6)?;
    let cells: Vec<(u32, usize)> = levels
        .iter()
        .flat_map(|&n| (0..points.len()).map(move |i| (n, i)))
        .collect();
    let vals = cells
        .par_iter()
        .map(|&(n, i)| {
            let c1 = compute_c1(n, t, &points[i])?;
            let c2 = compute_c2(n, t, &points[i], &opts)?;
            Ok((c1, c2.value, c2.error))
        })
        .collect::<hphi4_core::Result<Vec<_>>>()?;
    let mut header = vec!["n".to_string()];
    header.extend((0..dim).map(|k| format!("x{}", k + 1)));
    header.extend(["c1", "c2", "combined"].map(String::from));
    let mut table = Table {
        name: "renorm".into(),
        header,
        rows: Vec::new(),
    };
    for (&(n, i), &(c1, c2, _)) in cells.iter().zip(&vals) {
        let mut row = vec![Cell::from(n)];
        row.extend(points[i].iter().map(|&x| Cell::from(x)));
        row.extend([c1, c2, 3.0 * c1 - 9.0 * c2].map(Cell::from));
        table.push(row);
    }
    let at = |i: usize| -> Vec<(f64, f64, f64)> {
        cells
            .iter()
            .zip(&vals)
            .filter(|((_, j), _)| *j == i)
            .map(|(&(n, _), &(c1, c2, _))| (n as f64, c1, c2))
            .collect()
    };
    let first = at(0);
    let ns: Vec<f64> = first.iter().map(|r| r.0).collect();
    let c1s: Vec<f64> = first.iter().map(|r| r.1).collect();
    let slope = if ns.len() >= 2 {
        log2_slope(&ns, &c1s)
    } else {
        f64::NAN
    };
    // envelope constants over all (n, x)
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (&(n, i), &(c1, _, _)) in cells.iter().zip(&vals) {
        let r2: f64 = points[i].iter().map(|x| x * x).sum();
        let scale = 2f64.powf(n as f64 / 2.0);
        let e = 2f64.powi(-(n as i32));
        lo = lo.min(c1 / ((-4.0 * r2 * e).exp() * scale));
        hi = hi.max(c1 / ((-2.0 * r2 * e).exp() * scale));
    }
    let per_n: Vec<f64> = first.iter().map(|r| r.2 / r.0.max(1.0)).collect();
    let spread = per_n.iter().copied().fold(0.0, f64::max)
        / per_n.iter().copied().fold(f64::INFINITY, f64::min);
    let c2_min = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let mut out = StudyOutput::new(json!({
        "dimension": dim,
        "t": t,
        "c1_log2_slope": slope,
        "c1_envelope": { "lower": lo, "upper": hi },
        "c2_over_n": per_n,
        "c2_quadrature_error": vals.iter().map(|v| v.2).collect::<Vec<_>>(),
        "c2_options": { "w_order": opts.w_order, "sigma_order": opts.sigma_order, "analytic_w": opts.analytic_w },
    }));
    out.tables.push(table);
    out.checks.extend([
        Check::new("c1_log2_slope_min", slope, Comparator::Ge, slope_lo),
        Check::new("c1_log2_slope_max", slope, Comparator::Le, slope_hi),
        Check::new("c1_envelope_lower", lo, Comparator::Gt, 0.0),
        Check::new("c1_envelope_upper", hi, Comparator::Lt, f64::INFINITY),
        Check::new("c2_over_n_spread", spread, Comparator::Lt, spread_max),
        Check::new("c2_nonnegative", c2_min, Comparator::Ge, 0.0),
    ]);
    Ok(out)
}

// ---------------------------------------------------------------- moments

struct Ensemble {
    basis: Arc<SpectralBasis>,
    sampler: OuSampler,
    level: u32,
    replicas: u64,
    points: Vec<MomentPoint>,
    z_max: f64,
}

fn ensemble(
    cfg: &Config,
    min_pass_default: u64,
    z_default: f64,
) -> Result<(Ensemble, u64), CliError> {
    let b = basis(cfg, 1, Some(64))?;
    let level = cfg.require_u64("noise.level", 0, 30)? as u32;
    let dt = cfg.require_f64("noise.dt", 1e-9, 1.0)?;
    let horizon = cfg.require_f64("noise.horizon", 1e-9, 1e3)?;
    let replicas = cfg.require_u64("noise.replicas", 2, 1 << 32)?;
    let s = seed(cfg)?;
    let count = cfg.u64_or("moments.points", 20, 1, 10_000)? as usize;
    let y_max = cfg.f64_or("moments.y_max", 2.0, 0.0, 50.0)?;
    let gap = cfg.u64_or("moments.min_gap_steps", 2, 0, 1 << 20)? as i64;
    let z_max = cfg.f64_or("checks.z_max", z_default, 0.0, 100.0)?;
    let min_pass = cfg.u64_or("checks.min_pass", min_pass_default, 0, 10_000)?;
    let nc = NoiseConfig::new(level, s, dt, horizon);
    nc.validate()?;
    let steps = nc.steps() as i64;
    if steps <= gap {
        return Err(CliError::config(
            None,
            "noise.horizon",
            "horizon too short for the step gap",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let d = b.dim();
    let points = (0..count)
        .map(|_| {
            let (a, c) = loop {
                let a: i64 = rng.random_range(1..=steps);
                let c: i64 = rng.random_range(1..=steps);
                if (a - c).abs() >= gap {
                    break (a, c);
                }
            };
            let mut y = || {
                (0..d)
                    .map(|_| rng.random_range(-y_max..=y_max))
                    .collect::<Vec<f64>>()
            };
            let (y1, y2) = (y(), y());
            MomentPoint {
                s1: a as f64 * dt,
                s2: c as f64 * dt,
                y1,
                y2,
            }
        })
        .collect();
    Ok((
        Ensemble {
            sampler: OuSampler::new(&b, nc)?,
            basis: b,
            level,
            replicas,
            points,
            z_max,
        },
        min_pass,
    ))
}

fn moment_table(name: &str, d: usize, checks: &[MomentCheck], kind: Option<&str>) -> Table {
    let mut header: Vec<String> = Vec::new();
    if kind.is_some() {
        header.push("kind".into());
    }
    header.extend(["t1", "t2"].map(String::from));
    for end in ["y1", "y2"] {
        if d == 1 {
            header.push(end.into());
        } else {
            header.extend((0..d).map(|k| format!("{end}_{}", k + 1)));
        }
    }
    header.extend(["exact", "mc_mean", "mc_se", "z"].map(String::from));
    let mut t = Table {
        name: name.into(),
        header,
        rows: Vec::new(),
    };
    for c in checks {
        let mut row = Vec::new();
        if let Some(k) = kind {
            row.push(Cell::from(k));
        }
        row.push(c.point.s1.into());
        row.push(c.point.s2.into());
        row.extend(c.point.y1.iter().chain(&c.point.y2).map(|&v| Cell::from(v)));
        row.extend([c.exact, c.mean, c.std_error, c.z].map(Cell::from));
        t.push(row);
    }
    t
}

fn z_stats(checks: &[MomentCheck], z_max: f64) -> (usize, f64) {
    let pass = checks.iter().filter(|c| c.z.abs() <= z_max).count();
    let worst = checks.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    (pass, worst)
}

fn covariance_check(cfg: &Config) -> Result<StudyOutput, CliError> {
    let (e, min_pass) = ensemble(cfg, 19, 4.0)?;
    let exact = e
        .points
        .par_iter()
        .map(|p| covariance_exact(e.level, p.s1, p.s2, &p.y1, &p.y2))
        .collect::<hphi4_core::Result<Vec<_>>>()?;
    let checks = moment_checks(
        &e.sampler,
        &e.points,
        e.replicas,
        MomentKind::Covariance,
        &exact,
    )?;
    let (pass, worst) = z_stats(&checks, e.z_max);
    let mut out = StudyOutput::new(json!({
        "replicas": e.replicas,
        "points": e.points.len(),
        "max_abs_z": worst,
        "within_z": pass,
    }));
    out.tables
        .push(moment_table("covariance", e.basis.dim(), &checks, None));
    out.checks.push(Check::new(
        "covariance_z_pass_count",
        pass as f64,
        Comparator::Ge,
        min_pass as f64,
    ));
    Ok(out)
}

fn wick_moments(cfg: &Config) -> Result<StudyOutput, CliError> {
    let (e, min_pass) = ensemble(cfg, 18, 5.0)?;
    let cov = truncated_covariances(&e.basis, e.level, &e.points);
    let sq = moment_checks(
        &e.sampler,
        &e.points,
        e.replicas,
        MomentKind::WickSquare,
        &cov,
    )?;
    let cu = moment_checks(
        &e.sampler,
        &e.points,
        e.replicas,
        MomentKind::WickCube,
        &cov,
    )?;
    let (p2, w2) = z_stats(&sq, e.z_max);
    let (p3, w3) = z_stats(&cu, e.z_max);
    let hermite = hermite_identity(cfg, &e)?;
    let mut table = moment_table("wick", e.basis.dim(), &sq, Some("square"));
    table
        .rows
        .extend(moment_table("wick", e.basis.dim(), &cu, Some("cube")).rows);
    let mut out = StudyOutput::new(json!({
        "replicas": e.replicas,
        "square": { "within_z": p2, "max_abs_z": w2 },
        "cube": { "within_z": p3, "max_abs_z": w3 },
        "hermite_identity_max_error": hermite.0,
        "hermite_identity_samples": hermite.1,
    }));
    out.tables.push(table);
    out.checks.extend([
        Check::new(
            "wick_square_z_pass_count",
            p2 as f64,
            Comparator::Ge,
            min_pass as f64,
        ),
        Check::new(
            "wick_cube_z_pass_count",
            p3 as f64,
            Comparator::Ge,
            min_pass as f64,
        ),
        Check::new(
            "hermite_identity_max_error",
            hermite.0,
            Comparator::Le,
            cfg.f64_or("checks.hermite_tol", 1e-10, 0.0, 1.0)?,
        ),
    ]);
    Ok(out)
}

/// Projected Wick powers at collocation nodes against `v·He_k(g/√v)`.
fn hermite_identity(cfg: &Config, e: &Ensemble) -> Result<(f64, usize), CliError> {
    let count = cfg.u64_or("moments.hermite_points", 100, 1, 100_000)? as usize;
    let para = Paracalc::new(
        Products::new(&e.basis, ProductRule::Collocation)?,
        ParaConfig::default(),
    )?;
    let nc = *e.sampler.config();
    let steps = nc.steps();
    let nodes: Vec<Vec<f64>> = para
        .products()
        .grid()
        .nodes()
        .map(<[f64]>::to_vec)
        .collect();
    let times: Vec<f64> = (0..=steps).map(|m| m as f64 * nc.dt).collect();
    let c1: Vec<f64> = times
        .par_iter()
        .flat_map_iter(|&t| {
            nodes
                .iter()
                .map(move |x| c1_truncated(&e.basis, e.level, t, x))
        })
        .collect();
    let zeros = vec![0.0; c1.len()];
    let table = RenormTable::from_parts(e.level, times, nodes.clone(), c1, zeros)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed(cfg)?.wrapping_add(1));
    let triples: Vec<(u64, usize, usize)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0..e.replicas),
                rng.random_range(1..=steps),
                rng.random_range(0..nodes.len()),
            )
        })
        .collect();
    let errs = triples
        .par_iter()
        .map(|&(r, m, i)| -> Result<f64, CliError> {
            let rows = e.sampler.sample_at(r, &(0..=m).collect::<Vec<_>>())?;
            let fields = rows
                .into_iter()
                .map(|c| Field::from_coeffs(&e.basis, c))
                .collect::<hphi4_core::Result<Vec<_>>>()?;
            let psi = FieldPath::new(0.0, nc.dt, fields)?;
            let w2 = wick_square(e.level, &psi, &table, &para)?;
            let w3 = wick_cube(e.level, &psi, &table, &para)?;
            let pr = para.products();
            let g = pr.values(psi.get(m))?[i];
            let v = table.c1_row(m)[i];
            let s = v.sqrt();
            let a = (pr.values(w2.get(m))?[i] - v * hermite_he(2, g / s)).abs();
            let b = (pr.values(w3.get(m))?[i] - v * s * hermite_he(3, g / s)).abs();
            Ok(a.max(b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((errs.iter().copied().fold(0.0, f64::max), errs.len()))
}

// ---------------------------------------------------------------- drivers

struct DriverSetup {
    para: Paracalc,
    grid: Arc<NormGrid>,
    study: DriverStudyConfig,
}

fn driver_setup(cfg: &Config) -> Result<DriverSetup, CliError> {
    let b = basis(cfg, 1, Some(32))?;
    let para = paracalc(cfg, &b, "collocation")?;
    let grid = Arc::new(NormGrid::new(&b)?);
    let options = DriverOptions {
        epsilon: cfg.f64_or("diagrams.epsilon", 0.05, 1e-6, 0.2499)?,
        holder_points: cfg.u64_or("diagrams.holder_points", 65, 2, 1 << 20)? as usize,
        ..Default::default()
    };
    let study = DriverStudyConfig {
        levels: cfg.require_levels("noise.levels")?,
        seed: seed(cfg)?,
        dt: cfg.require_f64("noise.dt", 1e-9, 1.0)?,
        horizon: cfg.require_f64("noise.horizon", 1e-9, 1e3)?,
        replicas: cfg.require_u64("noise.replicas", 1, 1 << 32)?,
        options,
    };
    Ok(DriverSetup { para, grid, study })
}

fn trend_table(r: &DriverStudyReport) -> Table {
    let mut t = Table::new("trends", &["component", "n_lo", "n_hi", "median_norm"]);
    for tr in &r.trends {
        for (i, m) in tr.medians.iter().enumerate() {
            t.push(vec![
                tr.name.into(),
                r.levels[i].into(),
                r.levels[i + 1].into(),
                (*m).into(),
            ]);
        }
    }
    t
}

fn driver_study(cfg: &Config) -> Result<StudyOutput, CliError> {
    let s = driver_setup(cfg)?;
    let report = driver_convergence_study(&s.para, &s.grid, &s.study)?;
    let write = cfg.bool_or("output.write_paths", false)?;
    let steps = (s.study.horizon / s.study.dt).round() as usize;
    // norm summaries of replica 0 at every level
    let mut norms = Table::new(
        "norms",
        &[
            "n",
            "psi",
            "psi2",
            "tree3_sup",
            "tree3_holder",
            "psi_res_tree3",
            "psi2_res_ipsi2",
            "psi2_res_tree3",
        ],
    );
    let mut nonfinite = 0usize;
    let mut sets = Vec::new();
    for &n in &s.study.levels {
        let table = truncated_table(n, &s.para, s.study.dt, steps)?;
        let nc = NoiseConfig::new(n, s.study.seed, s.study.dt, s.study.horizon);
        let psi = OuSampler::new(s.para.basis(), nc)?.sample_path(0)?.path;
        let z = build_driver_set(n, &psi, &table, &s.para, &s.grid, &s.study.options)?;
        let m = z.norms.expect("norms requested");
        let v = [
            m.psi,
            m.psi2,
            m.tree3_sup,
            m.tree3_holder,
            m.psi_tree3,
            m.psi2_ipsi2,
            m.psi2_tree3,
        ];
        nonfinite += v.iter().filter(|x| !x.is_finite()).count();
        let mut row = vec![Cell::from(n)];
        row.extend(v.map(Cell::from));
        norms.push(row);
        if write {
            sets.push((z, s.study.seed, 0));
        }
    }
    // centring of the fourth-order diagram at the top level, final time, node nearest 0
    let top = *s.study.levels.iter().max().expect("levels");
    let centring_replicas = cfg.u64_or("diagrams.centring_replicas", 64, 2, 1 << 24)?;
    let centring = centring_report(&s, top, steps, centring_replicas)?;
    let mut out = StudyOutput::new(json!({
        "levels": report.levels,
        "epsilon": report.epsilon,
        "replicas": report.replicas,
        "kappa": report.kappa,
        "trends": report.trends,
        "centring": centring,
    }));
    out.tables.push(trend_table(&report));
    out.tables.push(norms);
    out.driver_sets = sets;
    for c in [Component::Psi, Component::Psi2, Component::Tree3] {
        out.checks.push(ratio_check(
            &format!("{}_median_ratio", c.name()),
            &report.trend(c).medians,
        ));
    }
    if report.levels.len() >= 3 {
        out.checks.push(Check::new(
            "psi_rate_kappa",
            report.kappa,
            Comparator::Gt,
            0.0,
        ));
    }
    out.checks.push(Check::new(
        "norm_summary_nonfinite",
        nonfinite as f64,
        Comparator::Le,
        0.0,
    ));
    out.checks.push(Check::new(
        "full_product_centring_abs_z",
        centring["full_product"]["z"]
            .as_f64()
            .unwrap_or(f64::NAN)
            .abs(),
        Comparator::Le,
        cfg.f64_or("checks.centring_z_max", 5.0, 0.0, 100.0)?,
    ));
    Ok(out)
}

/// Ensemble means of `Ψ²ᵂ·IΨ² − c²` (full product) and `Ψ²ᵂ∘IΨ² − c²`.
fn centring_report(
    s: &DriverSetup,
    level: u32,
    steps: usize,
    replicas: u64,
) -> Result<Value, CliError> {
    let table = truncated_table(level, &s.para, s.study.dt, steps)?;
    let pr = s.para.products();
    let node = pr
        .grid()
        .nodes()
        .enumerate()
        .min_by(|a, b| {
            let r = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
            r(a.1).total_cmp(&r(b.1))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let nc = NoiseConfig::new(level, s.study.seed, s.study.dt, s.study.horizon);
    let sampler = OuSampler::new(s.para.basis(), nc)?;
    let opts = DriverOptions {
        skip_norms: true,
        ..s.study.options
    };
    let pairs = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<(f64, f64), CliError> {
            let psi = sampler.sample_path(r)?.path;
            let z = build_driver_set(level, &psi, &table, &s.para, &s.grid, &opts)?;
            let a = pr.values(z.psi2.get(steps))?[node];
            let b = pr.values(z.ipsi2.get(steps))?[node];
            let c2 = table.c2_row(steps)[node];
            let res = pr.values(z.psi2_ipsi2.get(steps))?[node];
            Ok((a * b - c2, res))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let full = Moments::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let res = Moments::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let x: Vec<f64> = pr.grid().node(node).to_vec();
    Ok(json!({
        "level": level,
        "replicas": replicas,
        "t": steps as f64 * s.study.dt,
        "x": x,
        "c2": table.c2_row(steps)[node],
        "full_product": { "mean": full.mean, "se": full.std_error(), "z": full.z_score(0.0) },
        "resonant_gap": { "mean": res.mean, "se": res.std_error(), "z": res.z_score(0.0) },
    }))
}

// ---------------------------------------------------------------- solvers

fn solve_config(cfg: &Config, b: &Arc<SpectralBasis>) -> Result<SolveConfig, CliError> {
    let mut sc = SolveConfig::new(
        x0_field(cfg, b)?,
        cfg.require_u64("noise.level", 0, 30)? as u32,
        cfg.require_f64("noise.dt", 1e-9, 1.0)?,
        cfg.require_f64("noise.horizon", 1e-9, 1e3)?,
    );
    sc.picard_iters = cfg.u64_or("solve.picard_iters", 60, 1, 100_000)? as usize;
    sc.picard_tol = cfg.f64_or("solve.picard_tol", 1e-11, 0.0, 1.0)?;
    sc.blowup_threshold =
        cfg.f64_or("solve.blowup_threshold", f64::INFINITY, 0.0, f64::INFINITY)?;
    sc.young_level = cfg.u64_or("solve.young_level", 6, 0, 24)? as u32;
    sc.mode = cfg.str_or("solve.mode", "both").parse().map_err(|_| {
        CliError::config(
            None,
            "solve.mode",
            "expected `direct`, `auxiliary` or `both`",
        )
    })?;
    sc.validate()?;
    Ok(sc)
}

fn header(
    b: &SpectralBasis,
    sc: &SolveConfig,
    seed: u64,
    replica: u64,
    name: &str,
    rows: usize,
) -> PathHeader {
    PathHeader {
        dimension: b.dim(),
        modes: b.len(),
        n: sc.level,
        dt: sc.dt,
        horizon: sc.horizon,
        seed,
        generator: GENERATOR_ID.to_string(),
        rows,
        name: Some(name.to_string()),
        replica: Some(replica),
    }
}

fn solve_study(cfg: &Config) -> Result<StudyOutput, CliError> {
    let b = basis(cfg, 1, None)?;
    let para = paracalc(cfg, &b, "collocation")?;
    let grid = Arc::new(NormGrid::new(&b)?);
    let sc = solve_config(cfg, &b)?;
    let s = seed(cfg)?;
    let replica = cfg.u64_or("noise.replica", 0, 0, u64::MAX)?;
    let substeps = cfg.u64_or("noise.substeps", 1, 1, 1 << 16)? as u32;
    let nc = NoiseConfig::new(sc.level, s, sc.dt, sc.horizon).with_substeps(substeps);
    let psi = OuSampler::new(&b, nc)?.sample_path(replica)?.path;
    let table = truncated_table(sc.level, &para, sc.dt, sc.steps())?;
    let (bundle, _) = solve(&sc, &psi, &table, &para, &grid)?;
    let pr = para.products();
    let mut t = Table::new(
        "trajectory",
        &["t", "sup_proxy", "x_l2", "v_l2", "w_l2", "residual"],
    );
    let rows = bundle
        .direct
        .as_ref()
        .or(bundle.v.as_ref())
        .map(FieldPath::len)
        .unwrap_or(0);
    for m in 0..rows {
        let x = bundle.direct.as_ref().map(|p| p.get(m));
        let norm = |p: &Option<FieldPath>| {
            p.as_ref()
                .filter(|p| m < p.len())
                .map_or(f64::NAN, |p| p.get(m).l2_norm())
        };
        t.push(vec![
            (m as f64 * sc.dt).into(),
            x.map_or(Ok(f64::NAN), |x| hphi4_core::solver::sup_proxy(pr, x))?
                .into(),
            norm(&bundle.direct).into(),
            norm(&bundle.v).into(),
            norm(&bundle.w).into(),
            bundle.residuals.get(m).copied().unwrap_or(f64::NAN).into(),
        ]);
    }
    let mut out = StudyOutput::new(json!({
        "mode": sc.mode,
        "stop_reason": bundle.stop,
        "t_max": bundle.t_max,
        "picard": bundle.picard,
        "max_residual": bundle.max_residual(),
    }));
    out.tables.push(t);
    if let Some(p) = &bundle.picard {
        let last = p.differences.last().copied().unwrap_or(f64::NAN);
        out.checks.push(Check::new(
            "picard_final_difference",
            last,
            Comparator::Lt,
            sc.picard_tol.max(f64::MIN_POSITIVE),
        ));
    }
    if !bundle.residuals.is_empty() {
        out.checks.push(Check::new(
            "initial_residual",
            bundle.residuals[0],
            Comparator::Le,
            1e-12,
        ));
    }
    if cfg.bool_or("output.write_paths", false)? {
        let named = [
            ("x", &bundle.direct),
            ("v", &bundle.v),
            ("w", &bundle.w),
            ("reconstructed", &bundle.reconstructed),
        ];
        for (name, p) in named {
            if let Some(p) = p {
                out.paths.push(PathOutput {
                    file: format!("solve_{name}.bin"),
                    header: header(&b, &sc, s, replica, name, p.len()),
                    path: p.clone(),
                });
            }
        }
    }
    Ok(out)
}

fn reconcile(cfg: &Config) -> Result<StudyOutput, CliError> {
    let b = basis(cfg, 1, Some(32))?;
    let para = paracalc(cfg, &b, "collocation")?;
    let grid = Arc::new(NormGrid::new(&b)?);
    let mut sc = solve_config(cfg, &b)?;
    sc.mode = SolveMode::Both;
    let s = seed(cfg)?;
    let replicas = cfg.u64_or("noise.replicas", 8, 1, 1 << 20)?;
    let min_order = cfg.f64_or("checks.min_order", 0.8, -10.0, 10.0)?;
    let min_pass = cfg.u64_or("checks.min_pass", 6, 0, 1 << 20)?;
    let coarse = sc.clone();
    let mut fine = sc.clone();
    fine.dt = sc.dt / 2.0;
    let tables = [
        truncated_table(sc.level, &para, coarse.dt, coarse.steps())?,
        truncated_table(sc.level, &para, fine.dt, fine.steps())?,
    ];
    let runs = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<(f64, f64, usize, f64)>, CliError> {
            [(&coarse, 2u32, &tables[0]), (&fine, 1, &tables[1])]
                .into_iter()
                .map(|(c, sub, table)| {
                    let nc = NoiseConfig::new(c.level, s, c.dt, c.horizon).with_substeps(sub);
                    let psi = OuSampler::new(&b, nc)?.sample_path(r)?.path;
                    let (bundle, _) = solve(c, &psi, table, &para, &grid)?;
                    let p = bundle.picard.as_ref().expect("auxiliary ran");
                    Ok((
                        bundle.max_residual(),
                        bundle.residuals[0],
                        p.sweeps,
                        p.young.map_or(f64::NAN, |y| y.relative_gap),
                    ))
                })
                .collect()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut res = Table::new(
        "residuals",
        &[
            "replica",
            "dt",
            "max_residual",
            "initial_residual",
            "picard_sweeps",
            "young_gap",
        ],
    );
    let mut ord = Table::new("orders", &["replica", "order"]);
    let mut orders = Vec::new();
    let mut initial = 0.0f64;
    for (r, run) in runs.iter().enumerate() {
        for (c, v) in [&coarse, &fine].iter().zip(run) {
            res.push(vec![
                r.into(),
                c.dt.into(),
                v.0.into(),
                v.1.into(),
                v.2.into(),
                v.3.into(),
            ]);
            initial = initial.max(v.1);
        }
        let o = halving_order(run[0].0, run[1].0);
        ord.push(vec![r.into(), o.into()]);
        orders.push(o);
    }
    let pass = orders.iter().filter(|&&o| o >= min_order).count();
    let mut out = StudyOutput::new(json!({
        "dt": [coarse.dt, fine.dt],
        "orders": orders,
        "within_order": pass,
    }));
    out.tables.extend([res, ord]);
    out.checks.extend([
        Check::new(
            "order_pass_count",
            pass as f64,
            Comparator::Ge,
            min_pass as f64,
        ),
        Check::new("initial_residual", initial, Comparator::Le, 1e-12),
    ]);
    Ok(out)
}

fn converge(cfg: &Config) -> Result<StudyOutput, CliError> {
    let s = driver_setup(cfg)?;
    let report = driver_convergence_study(&s.para, &s.grid, &s.study)?;
    let b = s.para.basis().clone();
    let solve_para = paracalc(cfg, &b, cfg.str_or("solve.products", "dealiased").as_str())?;
    let sol = solution_convergence_study(
        &solve_para,
        &s.grid,
        &SolutionStudyConfig {
            levels: s.study.levels.clone(),
            seed: s.study.seed,
            replicas: s.study.replicas,
            x0: x0_field(cfg, &b)?,
            dt: s.study.dt,
            horizon: s.study.horizon,
            eta: cfg.f64_or("converge.eta", s.study.options.epsilon, 0.0, 1.0)?,
        },
    )?;
    let mut t = trend_table(&report);
    for (i, m) in sol.difference_medians.iter().enumerate() {
        t.push(vec![
            "solution".into(),
            sol.levels[i].into(),
            sol.levels[i + 1].into(),
            (*m).into(),
        ]);
    }
    let mut reg = Table::new(
        "regularity",
        &["n", "remainder_half", "raw_half", "raw_neg_half"],
    );
    for (i, &n) in sol.levels.iter().enumerate() {
        reg.push(vec![
            n.into(),
            sol.remainder_half[i].into(),
            sol.raw_half[i].into(),
            sol.raw_neg_half[i].into(),
        ]);
    }
    let growth =
        |v: &[f64]| v.last().copied().unwrap_or(f64::NAN) / v.first().copied().unwrap_or(f64::NAN);
    let mut out = StudyOutput::new(json!({
        "levels": report.levels,
        "kappa": report.kappa,
        "drivers": report.trends,
        "solution": sol,
        "remainder_growth": growth(&sol.remainder_half),
        "raw_growth": growth(&sol.raw_half),
    }));
    out.tables.extend([t, reg]);
    for c in [Component::Psi, Component::Psi2, Component::Tree3] {
        out.checks.push(ratio_check(
            &format!("{}_median_ratio", c.name()),
            &report.trend(c).medians,
        ));
    }
    out.checks.push(ratio_check(
        "solution_median_ratio",
        &sol.difference_medians,
    ));
    out.checks.push(Check::new(
        "solution_blowups",
        sol.blowups as f64,
        Comparator::Le,
        0.0,
    ));
    Ok(out)
}
