//! Littlewood–Paley calculus built on the spectrum of `H`.
//!
//! Block `j ≥ 0` multiplies the coefficient of mode `k` by `χ(√λ_k / 2^j)`,
//! block `−1` by `χ_{−1}(√λ_k)`. Spatial `L^p` norms use Gauss–Hermite
//! quadrature for `p < ∞` (exact coefficient sums for `p = 2`) and a node
//! maximum for `p = ∞`, which is a lower bound for the true supremum.

use std::sync::Arc;

use crate::error::{usage, Result};
use crate::hermite::{
    hermite_functions, Field, FieldPath, QuadratureGrid, SpectralBasis, Transform,
};

/// `h(s) = e^{-1/s}` for `s > 0`, else 0.
fn mollifier(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`.
fn smooth_step(s: f64) -> f64 {
    let a = mollifier(s);
    let b = mollifier(1.0 - s);
    if a == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// The dyadic partition of unity.
///
/// `ψ` equals 1 on `[0, 3/4]`, vanishes beyond `4/3`, and `χ(ξ) = ψ(ξ/2) − ψ(ξ)`
/// is supported in `[3/4, 8/3]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DyadicCutoff;

impl DyadicCutoff {
    pub const INNER: f64 = 0.75;
    pub const OUTER: f64 = 4.0 / 3.0;

    pub fn new() -> Self {
        Self
    }

    /// `χ_{−1}`.
    pub fn chi_low(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        smooth_step((Self::OUTER - xi) / (Self::OUTER - Self::INNER))
    }

    /// `χ`, the annulus profile.
    pub fn chi(&self, xi: f64) -> f64 {
        self.chi_low(0.5 * xi) - self.chi_low(xi)
    }

    /// `χ_j(ξ)`; `j = −1` is the low block.
    pub fn chi_j(&self, j: i32, xi: f64) -> f64 {
        if j < 0 {
            self.chi_low(xi)
        } else {
            self.chi(xi / 2f64.powi(j))
        }
    }

    /// Block weight of an eigenvalue, `χ_j(√λ)`.
    pub fn block_weight(&self, j: i32, lambda: f64) -> f64 {
        self.chi_j(j, lambda.sqrt())
    }

    /// `θ(x) = χ(√|x|)`, so that `χ_j(√λ) = θ(λ / 2^{2j})`.
    pub fn theta(&self, x: f64) -> f64 {
        self.chi(x.abs().sqrt())
    }

    /// Blocks that can be non-zero at `√λ = xi`.
    pub fn active_blocks(&self, xi: f64) -> std::ops::RangeInclusive<i32> {
        let lo = if xi <= Self::OUTER {
            -1
        } else {
            (xi / (2.0 * Self::OUTER)).log2().floor().max(0.0) as i32
        };
        let hi = if xi < Self::INNER {
            -1
        } else {
            (xi / Self::INNER).log2().floor().max(0.0) as i32
        };
        lo..=hi
    }

    pub fn describe(&self) -> &'static str {
        "chi_low(xi) = g((4/3 - xi)/(7/12)), g(s) = h(s)/(h(s)+h(1-s)), h(s) = exp(-1/s); chi(xi) = chi_low(xi/2) - chi_low(xi)"
    }
}

/// Smallest `J` with `χ_{−1} + … + χ_J ≡ 1` on the basis spectrum.
pub fn max_block(basis: &SpectralBasis) -> i32 {
    let top = basis.max_eigenvalue().sqrt();
    let mut j = 0;
    while 1.5 * 2f64.powi(j) < top {
        j += 1;
    }
    j
}

/// `δ_j u`.
pub fn apply_block(u: &Field, j: i32, cutoff: &DyadicCutoff) -> Field {
    u.spectral_multiply(|l| cutoff.block_weight(j, l))
}

/// `S_j u = Σ_{i ≤ j−1} δ_i u`, i.e. multiplication by `χ_{−1}(√λ / 2^j)`.
pub fn apply_low_pass(u: &Field, j: i32, cutoff: &DyadicCutoff) -> Field {
    if j < 0 {
        return Field::zeros(u.basis());
    }
    u.spectral_multiply(|l| cutoff.chi_low(l.sqrt() / 2f64.powi(j)))
}

/// All blocks `δ_{−1}u, …, δ_J u` with `J = max_block`.
pub fn blocks(u: &Field, cutoff: &DyadicCutoff) -> Vec<Field> {
    let top = max_block(u.basis());
    (-1..=top).map(|j| apply_block(u, j, cutoff)).collect()
}

/// Regularity, integrability and summability of a Besov norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormSpec {
    pub sigma: f64,
    pub p: f64,
    pub q: f64,
    pub max_block: i32,
}

impl NormSpec {
    pub fn new(basis: &SpectralBasis, sigma: f64, p: f64, q: f64) -> Self {
        Self {
            sigma,
            p,
            q,
            max_block: max_block(basis),
        }
    }

    /// `B^σ_{∞,∞}`, the scale the driver norms live in.
    pub fn holder_zygmund(basis: &SpectralBasis, sigma: f64) -> Self {
        Self::new(basis, sigma, f64::INFINITY, f64::INFINITY)
    }
}

/// Point sets used to evaluate spatial `L^p` norms of a basis.
#[derive(Debug)]
pub struct NormGrid {
    basis: Arc<SpectralBasis>,
    quad: Transform,
    /// Quadrature nodes plus a uniform box, flattened `points × K`.
    sup_table: Vec<f64>,
    sup_points: usize,
}

impl NormGrid {
    pub fn new(basis: &Arc<SpectralBasis>) -> Result<Self> {
        let dim = basis.dim();
        let deg = basis.max_axis_degree();
        let order = 2 * (deg + 1);
        let quad = Transform::new(basis, QuadratureGrid::gauss_hermite(dim, order, 1.0)?)?;
        // Box covering the oscillatory region of the highest mode.
        let radius = (2.0 * deg as f64 + 1.0).sqrt() + 1.0;
        let per_axis = 2 * (deg + 1) + 1;
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64)
            .collect();
        let k = basis.len();
        let box_len = per_axis.pow(dim as u32);
        let mut sup_table = Vec::with_capacity((quad.grid().len() + box_len) * k);
        for i in 0..quad.grid().len() {
            sup_table.extend_from_slice(quad.row(i));
        }
        let axis_tabs: Vec<Vec<f64>> = axis
            .iter()
            .map(|&x| {
                let mut v = vec![0.0; deg + 1];
                hermite_functions(x, &mut v);
                v
            })
            .collect();
        for flat in 0..box_len {
            let mut rem = flat;
            let mut idx = [0usize; 3];
            for a in (0..dim).rev() {
                idx[a] = rem % per_axis;
                rem /= per_axis;
            }
            for m in basis.modes() {
                sup_table.push(
                    m.multi_index()
                        .iter()
                        .enumerate()
                        .map(|(a, &l)| axis_tabs[idx[a]][l as usize])
                        .product(),
                );
            }
        }
        Ok(Self {
            basis: basis.clone(),
            sup_points: quad.grid().len() + box_len,
            quad,
            sup_table,
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn quadrature(&self) -> &Transform {
        &self.quad
    }

    fn coeff_lp(&self, coeffs: &[f64], p: f64) -> f64 {
        if p == 2.0 {
            return coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        }
        let k = self.basis.len();
        if p.is_infinite() {
            return self
                .sup_table
                .chunks(k)
                .map(|row| {
                    row.iter()
                        .zip(coeffs)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .abs()
                })
                .fold(0.0, f64::max);
        }
        let mut vals = vec![0.0; self.quad.grid().len()];
        self.quad.inverse_into(coeffs, &mut vals);
        vals.iter()
            .zip(self.quad.grid().weights())
            .map(|(v, w)| w * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }

    /// `‖u‖_{L^p}`.
    pub fn lp_norm(&self, u: &Field, p: f64) -> f64 {
        self.coeff_lp(u.coeffs(), p)
    }

    /// `max |u|` over the quadrature nodes and the box grid.
    pub fn sup_norm(&self, u: &Field) -> f64 {
        self.coeff_lp(u.coeffs(), f64::INFINITY)
    }

    pub fn sup_points(&self) -> usize {
        self.sup_points
    }
}

/// A norm that is a function of a linear image of the Field.
///
/// Hölder norms in time evaluate `‖f(v) − f(u)‖` for all pairs; embedding
/// every time slice once lets each pair cost a subtraction and a reduction.
pub trait LinearNorm: Sync {
    fn embed(&self, f: &Field) -> Vec<f64>;
    fn norm_embedded(&self, e: &[f64]) -> f64;
    fn norm(&self, f: &Field) -> f64 {
        self.norm_embedded(&self.embed(f))
    }
}

/// Coefficient ℓ² norm (equal to `L²`).
#[derive(Clone, Copy, Debug, Default)]
pub struct L2Norm;

impl LinearNorm for L2Norm {
    fn embed(&self, f: &Field) -> Vec<f64> {
        f.coeffs().to_vec()
    }
    fn norm_embedded(&self, e: &[f64]) -> f64 {
        e.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// `‖u‖_{B^σ_{p,q}} = ‖(2^{jσ}‖δ_j u‖_{L^p})_j‖_{ℓ^q}`.
#[derive(Clone, Debug)]
pub struct BesovNorm {
    spec: NormSpec,
    grid: Arc<NormGrid>,
    cutoff: DyadicCutoff,
    /// `weights[b·K + k] = χ_{b−1}(√λ_k)`.
    weights: Vec<f64>,
}

impl BesovNorm {
    pub fn new(spec: NormSpec, grid: &Arc<NormGrid>) -> Self {
        let cutoff = DyadicCutoff::new();
        let mut weights = Vec::new();
        for j in -1..=spec.max_block {
            weights.extend(
                grid.basis()
                    .eigenvalues()
                    .iter()
                    .map(|&l| cutoff.block_weight(j, l)),
            );
        }
        Self {
            spec,
            grid: grid.clone(),
            cutoff,
            weights,
        }
    }

    pub fn spec(&self) -> &NormSpec {
        &self.spec
    }

    pub fn cutoff(&self) -> &DyadicCutoff {
        &self.cutoff
    }

    /// `‖δ_j u‖_{L^p}` for `j = −1..=J`.
    pub fn block_norms(&self, u: &Field) -> Vec<f64> {
        let k = self.grid.basis().len();
        self.weights
            .chunks(k)
            .map(|w| {
                let c: Vec<f64> = w.iter().zip(u.coeffs()).map(|(a, b)| a * b).collect();
                self.grid.coeff_lp(&c, self.spec.p)
            })
            .collect()
    }

    fn combine(&self, block_norms: impl Iterator<Item = f64>) -> f64 {
        let q = self.spec.q;
        let mut acc = 0.0;
        for (b, n) in block_norms.enumerate() {
            let j = b as i32 - 1;
            let term = 2f64.powf(j as f64 * self.spec.sigma) * n;
            if q.is_infinite() {
                acc = f64::max(acc, term);
            } else {
                acc += term.powf(q);
            }
        }
        if q.is_infinite() {
            acc
        } else {
            acc.powf(1.0 / q)
        }
    }
}

impl LinearNorm for BesovNorm {
    /// Block coefficients for `p = 2`, block values at the norm points
    /// otherwise.
    fn embed(&self, f: &Field) -> Vec<f64> {
        let k = self.grid.basis().len();
        let p = self.spec.p;
        let mut out = Vec::new();
        for w in self.weights.chunks(k) {
            let c: Vec<f64> = w.iter().zip(f.coeffs()).map(|(a, b)| a * b).collect();
            if p == 2.0 {
                out.extend_from_slice(&c);
            } else if p.is_infinite() {
                out.extend(
                    self.grid
                        .sup_table
                        .chunks(k)
                        .map(|row| row.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()),
                );
            } else {
                let mut vals = vec![0.0; self.grid.quad.grid().len()];
                self.grid.quad.inverse_into(&c, &mut vals);
                out.extend(vals);
            }
        }
        out
    }

    fn norm_embedded(&self, e: &[f64]) -> f64 {
        let blocks = (self.spec.max_block + 2) as usize;
        let chunk = e.len() / blocks;
        let p = self.spec.p;
        let weights = self.grid.quad.grid().weights();
        self.combine(e.chunks(chunk).map(|v| {
            if p == 2.0 {
                v.iter().map(|c| c * c).sum::<f64>().sqrt()
            } else if p.is_infinite() {
                v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
            } else {
                v.iter()
                    .zip(weights)
                    .map(|(x, w)| w * x.abs().powf(p))
                    .sum::<f64>()
                    .powf(1.0 / p)
            }
        }))
    }

    fn norm(&self, f: &Field) -> f64 {
        self.combine(self.block_norms(f).into_iter())
    }
}

/// `‖u‖_{H^{σ,p}} = ‖H^{σ/2} u‖_{L^p}`.
#[derive(Clone, Debug)]
pub struct SobolevNorm {
    pub sigma: f64,
    pub p: f64,
    grid: Arc<NormGrid>,
}

impl SobolevNorm {
    pub fn new(sigma: f64, p: f64, grid: &Arc<NormGrid>) -> Self {
        Self {
            sigma,
            p,
            grid: grid.clone(),
        }
    }
}

impl LinearNorm for SobolevNorm {
    fn embed(&self, f: &Field) -> Vec<f64> {
        f.apply_fractional_power(self.sigma / 2.0).into_coeffs()
    }
    fn norm_embedded(&self, e: &[f64]) -> f64 {
        self.grid.coeff_lp(e, self.p)
    }
}

/// `besov_norm(u, spec, grid)`.
pub fn besov_norm(u: &Field, spec: NormSpec, grid: &Arc<NormGrid>) -> f64 {
    BesovNorm::new(spec, grid).norm(u)
}

/// `sobolev_norm(u, σ, p, grid)`.
pub fn sobolev_norm(u: &Field, sigma: f64, p: f64, grid: &Arc<NormGrid>) -> f64 {
    SobolevNorm::new(sigma, p, grid).norm(u)
}

/// `sup_{u≠v} ‖f(v) − f(u)‖ / |v − u|^η` over the grid pairs.
pub fn holder_seminorm(path: &FieldPath, eta: f64, norm: &dyn LinearNorm) -> Result<f64> {
    if path.len() < 2 {
        return Err(usage("a Hölder norm needs at least two time points"));
    }
    let emb: Vec<Vec<f64>> = path.fields().iter().map(|f| norm.embed(f)).collect();
    let mut diff = vec![0.0; emb[0].len()];
    let mut best = 0.0f64;
    for a in 0..emb.len() {
        for b in a + 1..emb.len() {
            for ((d, x), y) in diff.iter_mut().zip(&emb[b]).zip(&emb[a]) {
                *d = x - y;
            }
            let lag = (b - a) as f64 * path.dt();
            best = best.max(norm.norm_embedded(&diff) / lag.powf(eta));
        }
    }
    Ok(best)
}

/// `‖f(T₁)‖ + holder_seminorm`.
pub fn holder_norm(path: &FieldPath, eta: f64, norm: &dyn LinearNorm) -> Result<f64> {
    let semi = holder_seminorm(path, eta, norm)?;
    Ok(norm.norm(path.get(0)) + semi)
}

/// `C^{−λ}` norm: the `C^{1−λ}` norm of the antiderivative from the path start.
pub fn neg_holder_norm(path: &FieldPath, lambda: f64, norm: &dyn LinearNorm) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(usage(format!(
            "negative Hölder exponent must lie in (0,1), got {lambda}"
        )));
    }
    if path.len() < 2 {
        return Err(usage("a Hölder norm needs at least two time points"));
    }
    holder_norm(&path.antiderivative(), 1.0 - lambda, norm)
}

/// `sup_t ‖f(t)‖`.
pub fn sup_in_time(path: &FieldPath, norm: &dyn LinearNorm) -> f64 {
    path.fields()
        .iter()
        .map(|f| norm.norm(f))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity_and_supports() {
        let c = DyadicCutoff::new();
        let top = 10;
        let limit = 2f64.powi(top - 1);
        let mut worst = 0.0f64;
        for i in 0..10_000 {
            let xi = limit * i as f64 / 9_999.0;
            let s: f64 = (-1..=top).map(|j| c.chi_j(j, xi)).sum();
            worst = worst.max((s - 1.0).abs());
        }
        assert!(worst < 1e-12, "{worst}");
        for i in 0..1000 {
            let xi = 4.0 * i as f64 / 999.0;
            if !(0.75..=8.0 / 3.0).contains(&xi) {
                assert_eq!(c.chi(xi), 0.0);
            }
            let v = c.chi(xi);
            assert!((0.0..=1.0).contains(&v));
            for j in 0..6 {
                assert_eq!(c.chi_j(j, xi * 8.0) * c.chi_j(j + 2, xi * 8.0), 0.0);
            }
        }
        assert_eq!(c.chi_low(0.7), 1.0);
        assert_eq!(c.chi_low(1.34), 0.0);
    }

    #[test]
    fn active_blocks_cover_support() {
        let c = DyadicCutoff::new();
        for i in 0..4000 {
            let xi = 0.01 + 60.0 * i as f64 / 3999.0;
            let active = c.active_blocks(xi);
            for j in -1..8 {
                if c.chi_j(j, xi) != 0.0 {
                    assert!(active.contains(&j), "xi={xi} j={j} {active:?}");
                }
            }
        }
    }

    #[test]
    fn blocks_reconstruct() {
        let b = SpectralBasis::new(2, 40).unwrap();
        let c = DyadicCutoff::new();
        let u = Field::from_coeffs(&b, (0..40).map(|k| (k as f64 * 0.7).cos()).collect()).unwrap();
        let sum = blocks(&u, &c)
            .iter()
            .fold(Field::zeros(&b), |acc, f| &acc + f);
        assert!((&sum - &u).l2_norm() < 1e-13);
        let top = max_block(&b);
        assert!(4f64.powi(top + 1) >= b.max_eigenvalue());
    }

    #[test]
    fn ground_state_norm_against_quadrature() {
        let b = SpectralBasis::new(1, 12).unwrap();
        let grid = Arc::new(NormGrid::new(&b).unwrap());
        let c = DyadicCutoff::new();
        let u = Field::unit(&b, 0);
        let sigma = 0.7;
        let a = c.chi_low(1.0);
        let z = c.chi_j(0, 1.0);
        for p in [1.0, 2.0, 3.0] {
            // ‖φ₀‖_p by a fine rule.
            let (x, w) = crate::quad::gauss_legendre(400);
            let lp: f64 = x
                .iter()
                .zip(&w)
                .map(|(x, w)| 12.0 * w * crate::hermite::hermite_function(0, 12.0 * x).powf(p))
                .sum::<f64>()
                .powf(1.0 / p);
            let want = ((2f64.powf(-sigma) * a * lp).powi(2) + (z * lp).powi(2)).sqrt();
            let got = besov_norm(&u, NormSpec::new(&b, sigma, p, 2.0), &grid);
            assert!((got - want).abs() < 1e-10, "p={p} {got} {want}");
        }
    }

    #[test]
    fn holder_examples() {
        let b = SpectralBasis::new(1, 6).unwrap();
        let u0 = Field::from_coeffs(&b, vec![1.0, -2.0, 0.5, 0.0, 0.0, 0.3]).unwrap();
        let n = u0.l2_norm();
        let constant = FieldPath::new(0.0, 0.1, vec![u0.clone(); 6]).unwrap();
        assert_eq!(holder_seminorm(&constant, 0.5, &L2Norm).unwrap(), 0.0);
        let linear = FieldPath::new(
            1.0,
            0.1,
            (0..=10).map(|m| u0.scaled(1.0 + 0.1 * m as f64)).collect(),
        )
        .unwrap();
        assert!((holder_norm(&linear, 1.0, &L2Norm).unwrap() - 2.0 * n).abs() < 1e-12);
        let neg = neg_holder_norm(&constant, 0.5, &L2Norm).unwrap();
        let short = FieldPath::new(
            0.0,
            0.1,
            (0..6).map(|m| u0.scaled(0.1 * m as f64)).collect(),
        )
        .unwrap();
        assert!((neg - holder_norm(&short, 0.5, &L2Norm).unwrap()).abs() < 1e-12);
        let single = FieldPath::new(0.0, 0.1, vec![u0]).unwrap();
        assert!(holder_norm(&single, 0.5, &L2Norm).is_err());
    }

    #[test]
    fn embedded_norm_matches_direct() {
        let b = SpectralBasis::new(1, 20).unwrap();
        let grid = Arc::new(NormGrid::new(&b).unwrap());
        let u = Field::from_coeffs(&b, (0..20).map(|k| 1.0 / (1.0 + k as f64)).collect()).unwrap();
        for (p, q) in [
            (1.0, 1.0),
            (2.0, 2.0),
            (f64::INFINITY, f64::INFINITY),
            (4.0, 2.0),
        ] {
            let nrm = BesovNorm::new(NormSpec::new(&b, -0.3, p, q), &grid);
            let a = nrm.norm(&u);
            let e = nrm.norm_embedded(&nrm.embed(&u));
            assert!((a - e).abs() < 1e-12 * a);
        }
    }
}
