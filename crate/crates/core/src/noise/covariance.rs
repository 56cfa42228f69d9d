//! Covariance of `Ψ⁽ⁿ⁾` and the renormalization functions `c¹`, `c²`.
//!
//! The `*_exact` and `compute_*` functions integrate the closed-form Mehler
//! kernel (no truncation). The `*_truncated` variants use the same
//! formulas restricted to a finite basis, in closed form where possible.

use std::f64::consts::PI;

use super::ou::epsilon;
use crate::error::{Error, Result};
use crate::hermite::{mehler_kernel, mehler_kernel_1d, QuadratureGrid, SpectralBasis, Transform};
use crate::quad::{gauss_hermite, geometric_breaks, integrate_adaptive, Legendre};

const SIGMA_TOL: f64 = 1e-10;

fn check_point(x: &[f64]) -> Result<()> {
    if x.is_empty() || x.len() > 3 || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "points must be finite with dimension 1..=3".into(),
        ));
    }
    Ok(())
}

/// `C(t₁,t₂,y₁,y₂) = ½∫_{|t₂−t₁|+2ε}^{t₁+t₂+2ε} K_σ(y₁,y₂) dσ`.
pub fn covariance_exact(level: u32, t1: f64, t2: f64, y1: &[f64], y2: &[f64]) -> Result<f64> {
    if !(t1 >= 0.0 && t2 >= 0.0) {
        return Err(Error::Domain(format!("times must be ≥ 0, got {t1}, {t2}")));
    }
    check_point(y1)?;
    if y1.len() != y2.len() {
        return Err(Error::Domain("points must share a dimension".into()));
    }
    let eps = epsilon(level);
    let lo = (t2 - t1).abs() + 2.0 * eps;
    let hi = t1 + t2 + 2.0 * eps;
    if hi <= lo {
        return Ok(0.0);
    }
    let r = integrate_adaptive(&geometric_breaks(lo, hi), SIGMA_TOL, |s| {
        mehler_kernel(s, y1, y2).expect("σ > 0")
    });
    Ok(0.5 * r.value)
}

/// Mode-sum covariance of the truncated field.
pub fn covariance_truncated(
    basis: &SpectralBasis,
    level: u32,
    t1: f64,
    t2: f64,
    y1: &[f64],
    y2: &[f64],
) -> f64 {
    let eps = epsilon(level);
    let (a, b) = (basis.eval_all(y1), basis.eval_all(y2));
    let lag = (t2 - t1).abs();
    a.iter()
        .zip(&b)
        .zip(basis.eigenvalues())
        .map(|((p, q), &l)| {
            (-2.0 * eps * l).exp() * p * q * ((-l * lag).exp() - (-l * (t1 + t2)).exp()) / (2.0 * l)
        })
        .sum()
}

/// `c¹(t,x) = ∫_ε^{t+ε} K_{2σ}(x,x) dσ`.
pub fn compute_c1(level: u32, t: f64, x: &[f64]) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be ≥ 0, got {t}")));
    }
    check_point(x)?;
    let eps = epsilon(level);
    let r = integrate_adaptive(&geometric_breaks(eps, t + eps), SIGMA_TOL, |s| {
        mehler_kernel(2.0 * s, x, x).expect("σ > 0")
    });
    Ok(r.value)
}

/// `Σ_k e^{−2ελ_k}φ_k(x)²(1 − e^{−2λ_k t})/(2λ_k)`.
pub fn c1_truncated(basis: &SpectralBasis, level: u32, t: f64, x: &[f64]) -> f64 {
    let eps = epsilon(level);
    basis
        .eval_all(x)
        .iter()
        .zip(basis.eigenvalues())
        .map(|(p, &l)| (-2.0 * eps * l).exp() * p * p * -(-2.0 * l * t).exp_m1() / (2.0 * l))
        .sum()
}

/// Quadrature settings for [`compute_c2`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C2Options {
    /// Gauss–Hermite order per axis for the `w` integral.
    pub w_order: usize,
    /// Gauss–Legendre order per geometric `σ` panel.
    pub sigma_order: usize,
    /// Absolute tolerance of the outer time integral.
    pub time_tol: f64,
    /// Evaluate the `w` integral in closed form instead of by quadrature.
    pub analytic_w: bool,
}

impl Default for C2Options {
    fn default() -> Self {
        Self {
            w_order: 48,
            sigma_order: 16,
            time_tol: 1e-10,
            analytic_w: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C2Value {
    pub value: f64,
    /// Error estimate of the outer adaptive integral.
    pub error: f64,
    pub evaluations: usize,
}

/// Gaussian coefficients of `w ↦ K_σ(x, w)` on one axis:
/// `norm·exp(−A w² + B w − C)`.
fn gaussian_coeffs(sigma: f64, x: f64) -> (f64, f64, f64, f64) {
    let th = sigma.tanh();
    let a = 1.0 / (4.0 * th) + th / 4.0;
    let b = x * (1.0 / (2.0 * th) - th / 2.0);
    let norm = (2.0 * PI * (2.0 * sigma).sinh()).powf(-0.5);
    (norm, a, b, x * x * a)
}

/// `c²(t,x) = 2∫_0^t ds ∫dw K_{t−s}(x,w) C_{t,s}(x,w)²`.
pub fn compute_c2(level: u32, t: f64, x: &[f64], opts: &C2Options) -> Result<C2Value> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be ≥ 0, got {t}")));
    }
    check_point(x)?;
    if t == 0.0 {
        return Ok(C2Value {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let eps = epsilon(level);
    let legendre = Legendre::new(opts.sigma_order);
    let (gh_nodes, gh_weights) = gauss_hermite(opts.w_order);
    let same_axes = x.windows(2).all(|w| w[0] == w[1]);
    // Integrand in τ = t − s.
    let integrand = |tau: f64| -> f64 {
        let lo = tau + 2.0 * eps;
        let hi = 2.0 * t - tau + 2.0 * eps;
        let mut sigmas = Vec::new();
        let mut omegas = Vec::new();
        for w in geometric_breaks(lo, hi).windows(2) {
            for (s, wt) in legendre.mapped(w[0], w[1]) {
                sigmas.push(s);
                omegas.push(0.5 * wt);
            }
        }
        let q = sigmas.len();
        let axes = if same_axes { 1 } else { x.len() };
        let mut mats: Vec<Vec<f64>> = Vec::with_capacity(axes);
        for &xa in &x[..axes] {
            let mut m = vec![0.0; q * q];
            if opts.analytic_w {
                let kt = (tau > 0.0).then(|| gaussian_coeffs(tau, xa));
                let cs: Vec<_> = sigmas.iter().map(|&s| gaussian_coeffs(s, xa)).collect();
                for i in 0..q {
                    for j in i..q {
                        let (n1, a1, b1, c1) = cs[i];
                        let (n2, a2, b2, c2) = cs[j];
                        let v = match kt {
                            // K_0(x,·) is the Dirac mass at x.
                            None => {
                                mehler_kernel_1d(sigmas[i], xa, xa)
                                    * mehler_kernel_1d(sigmas[j], xa, xa)
                            }
                            Some((n0, a0, b0, c0)) => {
                                let a = a0 + a1 + a2;
                                let b = b0 + b1 + b2;
                                let c = c0 + c1 + c2;
                                n0 * n1 * n2 * (PI / a).sqrt() * (b * b / (4.0 * a) - c).exp()
                            }
                        };
                        m[i * q + j] = v;
                        m[j * q + i] = v;
                    }
                }
            } else if tau == 0.0 {
                for i in 0..q {
                    for j in i..q {
                        let v = mehler_kernel_1d(sigmas[i], xa, xa)
                            * mehler_kernel_1d(sigmas[j], xa, xa);
                        m[i * q + j] = v;
                        m[j * q + i] = v;
                    }
                }
            } else {
                // Gauss–Hermite nodes centred on the Gaussian of K_τ(x,·).
                let th = tau.tanh();
                let prec = 1.0 / (4.0 * th) + th / 4.0;
                let mu = xa * (1.0 - th * th) / (1.0 + th * th);
                let sc = prec.sqrt();
                let ws: Vec<f64> = gh_nodes.iter().map(|z| mu + z / sc).collect();
                let bw: Vec<f64> = ws
                    .iter()
                    .zip(&gh_weights)
                    .map(|(&w, &g)| g / sc * mehler_kernel_1d(tau, xa, w))
                    .collect();
                let kern: Vec<Vec<f64>> = sigmas
                    .iter()
                    .map(|&s| ws.iter().map(|&w| mehler_kernel_1d(s, xa, w)).collect())
                    .collect();
                for i in 0..q {
                    let wi: Vec<f64> = kern[i].iter().zip(&bw).map(|(a, b)| a * b).collect();
                    for j in i..q {
                        let v: f64 = wi.iter().zip(&kern[j]).map(|(a, b)| a * b).sum();
                        m[i * q + j] = v;
                        m[j * q + i] = v;
                    }
                }
            }
            mats.push(m);
        }
        let mut total = 0.0;
        for i in 0..q {
            for j in 0..q {
                let mut prod = omegas[i] * omegas[j];
                if same_axes {
                    prod *= mats[0][i * q + j].powi(x.len() as i32);
                } else {
                    for m in &mats {
                        prod *= m[i * q + j];
                    }
                }
                total += prod;
            }
        }
        2.0 * total
    };
    let mut breaks = vec![0.0];
    breaks.extend(geometric_breaks(eps.min(t), t));
    breaks.dedup();
    let r = integrate_adaptive(&breaks, opts.time_tol, integrand);
    Ok(C2Value {
        value: r.value,
        error: r.error,
        evaluations: r.evaluations,
    })
}

/// `∫_0^t e^{−(c₀ + rτ)} dτ` without overflow for negative `r`.
fn int_exp(c0: f64, r: f64, t: f64) -> f64 {
    let e = (r * t).abs();
    let base = c0.min(c0 + r * t);
    let len = if e < 1e-12 {
        t
    } else {
        -(-e).exp_m1() / r.abs()
    };
    (-base).exp() * len
}

/// Triple-product data shared by every `(t, x)` of a truncated `c²` table.
#[derive(Clone, Debug)]
pub(crate) struct TruncatedC2 {
    lambdas: Vec<f64>,
    weights: Vec<f64>,
    /// Non-zero `∫φ_aφ_bφ_c` with their indices.
    triples: Vec<(u32, u32, u32, f64)>,
}

impl TruncatedC2 {
    pub(crate) fn new(basis: &std::sync::Arc<SpectralBasis>, level: u32) -> Result<Self> {
        let t = Transform::for_products(basis, 3)?;
        let k = basis.len();
        let grid: &QuadratureGrid = t.grid();
        let mut triples = Vec::new();
        let mut tens = vec![0.0; k * k * k];
        for i in 0..grid.len() {
            let row = t.row(i);
            let w = grid.weights()[i];
            for a in 0..k {
                let wa = w * row[a];
                for b in a..k {
                    let wab = wa * row[b];
                    let base = (a * k + b) * k;
                    for c in b..k {
                        tens[base + c] += wab * row[c];
                    }
                }
            }
        }
        let scale = tens.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..k {
            for b in a..k {
                for c in b..k {
                    let v = tens[(a * k + b) * k + c];
                    if v.abs() > 1e-14 * scale {
                        triples.push((a as u32, b as u32, c as u32, v));
                    }
                }
            }
        }
        let eps = epsilon(level);
        let lambdas = basis.eigenvalues().to_vec();
        let weights = lambdas
            .iter()
            .map(|&l| (-2.0 * eps * l).exp() / (2.0 * l))
            .collect();
        Ok(Self {
            lambdas,
            weights,
            triples,
        })
    }

    /// `S_{abc}(t)` for every stored triple and all index orders needed by
    /// the symmetric contraction.
    fn time_factors(&self, t: f64) -> Vec<f64> {
        // For each sorted triple the three distinct roles of the K_{t−s} index.
        let mut out = Vec::with_capacity(self.triples.len());
        for &(a, b, c, _) in &self.triples {
            let idx = [a as usize, b as usize, c as usize];
            let mut acc = 0.0;
            // Sum over the distinct permutations (a; b, c) with a the kernel index.
            for (r, p, q) in distinct_roles(idx) {
                acc += self.s_factor(r, p, q, t);
            }
            out.push(acc);
        }
        out
    }

    /// `∫_0^t e^{−λ_a τ} g_b g_c dτ`, `τ = t − s`.
    fn s_factor(&self, a: usize, b: usize, c: usize, t: f64) -> f64 {
        let (la, lb, lc) = (self.lambdas[a], self.lambdas[b], self.lambdas[c]);
        let pref = self.weights[b] * self.weights[c];
        let t1 = int_exp(0.0, la + lb + lc, t);
        let t2 = int_exp(2.0 * lc * t, la + lb - lc, t);
        let t3 = int_exp(2.0 * lb * t, la + lc - lb, t);
        let t4 = int_exp(2.0 * (lb + lc) * t, la - lb - lc, t);
        pref * (t1 - t2 - t3 + t4)
    }

    /// `c²_K(t, x)` from basis values `phi = (φ_k(x))_k`.
    fn evaluate(&self, factors: &[f64], phi: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&(a, b, c, tabc), f) in self.triples.iter().zip(factors) {
            s += tabc * f * phi[a as usize] * phi[b as usize] * phi[c as usize];
        }
        2.0 * s
    }

    pub(crate) fn table(
        &self,
        basis: &SpectralBasis,
        times: &[f64],
        points: &[Vec<f64>],
    ) -> Vec<f64> {
        let phis: Vec<Vec<f64>> = points.iter().map(|x| basis.eval_all(x)).collect();
        let mut out = Vec::with_capacity(times.len() * points.len());
        for &t in times {
            if t <= 0.0 {
                out.extend(std::iter::repeat_n(0.0, points.len()));
                continue;
            }
            let f = self.time_factors(t);
            for phi in &phis {
                out.push(self.evaluate(&f, phi));
            }
        }
        out
    }
}

/// Distinct assignments `(kernel index; covariance indices)` of a sorted
/// triple, each counted with the multiplicity of the unordered sum.
fn distinct_roles(idx: [usize; 3]) -> Vec<(usize, usize, usize)> {
    let [a, b, c] = idx;
    // The full sum Σ_{a,b,c} over ordered triples of a symmetric tensor
    // equals Σ over sorted triples of all distinct permutations.
    let mut perms = vec![
        (a, b, c),
        (a, c, b),
        (b, a, c),
        (b, c, a),
        (c, a, b),
        (c, b, a),
    ];
    perms.sort_unstable();
    perms.dedup();
    perms
}

/// `c²` of the truncated field, in closed form.
pub fn c2_truncated(
    basis: &std::sync::Arc<SpectralBasis>,
    level: u32,
    t: f64,
    x: &[f64],
) -> Result<f64> {
    let tc = TruncatedC2::new(basis, level)?;
    Ok(tc.table(basis, &[t], &[x.to_vec()])[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_basics() {
        assert_eq!(covariance_exact(4, 0.0, 0.0, &[0.3], &[0.3]).unwrap(), 0.0);
        let a = covariance_exact(3, 0.2, 0.5, &[0.1, -0.4], &[0.7, 0.0]).unwrap();
        let b = covariance_exact(3, 0.5, 0.2, &[0.7, 0.0], &[0.1, -0.4]).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(covariance_exact(3, -0.1, 0.2, &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn c1_is_the_diagonal_covariance() {
        for &(n, t, x) in &[(4u32, 1.0, 0.0), (8, 0.3, 1.2), (12, 1.0, 0.5)] {
            let p = [x, 0.0, -x];
            let c1 = compute_c1(n, t, &p).unwrap();
            let cov = covariance_exact(n, t, t, &p, &p).unwrap();
            assert!((c1 - cov).abs() < 1e-10, "{c1} {cov}");
        }
    }

    #[test]
    fn truncated_c1_matches_kernel_quadrature() {
        let b = SpectralBasis::new(1, 40).unwrap();
        let (n, t, x) = (3, 0.7, 0.4);
        let eps = epsilon(n);
        let phi = b.eval_all(&[x]);
        let r = integrate_adaptive(&geometric_breaks(eps, t + eps), 1e-13, |s| {
            phi.iter()
                .zip(b.eigenvalues())
                .map(|(p, l)| (-2.0 * s * l).exp() * p * p)
                .sum()
        });
        assert!((r.value - c1_truncated(&b, n, t, &[x])).abs() < 1e-10);
        // Truncated and full covariances agree when e^{-2ελ} kills the tail.
        let big = SpectralBasis::new(1, 128).unwrap();
        let full = covariance_exact(2, 0.4, 0.3, &[0.2], &[-0.5]).unwrap();
        let trunc = covariance_truncated(&big, 2, 0.4, 0.3, &[0.2], &[-0.5]);
        assert!((full - trunc).abs() < 1e-10, "{full} {trunc}");
    }

    #[test]
    fn c2_quadrature_matches_closed_form_w_integral() {
        let opts = C2Options {
            w_order: 32,
            sigma_order: 12,
            time_tol: 1e-11,
            analytic_w: false,
        };
        let analytic = C2Options {
            analytic_w: true,
            ..opts
        };
        for x in [[0.0, 0.0, 0.0], [0.5, -0.2, 1.0]] {
            let a = compute_c2(3, 0.5, &x, &opts).unwrap().value;
            let b = compute_c2(3, 0.5, &x, &analytic).unwrap().value;
            assert!(a > 0.0);
            assert!(((a - b) / b).abs() < 1e-8, "{a} {b}");
        }
        assert_eq!(compute_c2(3, 0.0, &[0.0], &opts).unwrap().value, 0.0);
    }

    #[test]
    fn truncated_c2_matches_exact_in_one_dimension() {
        // ε_2 = 1/4 damps modes beyond K = 60 below double precision.
        let b = SpectralBasis::new(1, 60).unwrap();
        let opts = C2Options {
            analytic_w: true,
            ..C2Options::default()
        };
        for x in [0.0, 0.8] {
            let exact = compute_c2(2, 0.6, &[x], &opts).unwrap().value;
            let trunc = c2_truncated(&b, 2, 0.6, &[x]).unwrap();
            assert!(
                ((exact - trunc) / exact).abs() < 1e-7,
                "x={x} {exact} {trunc}"
            );
        }
    }
}
