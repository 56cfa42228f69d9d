use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::gauss_hermite;

/// One-dimensional Mehler kernel
/// `(2π sinh 2t)^{-1/2} exp(−(x−y)²/(4 tanh t) − tanh t·(x+y)²/4)`.
pub fn mehler_kernel_1d(t: f64, x: f64, y: f64) -> f64 {
    let th = t.tanh();
    let d = x - y;
    let s = x + y;
    (2.0 * PI * (2.0 * t).sinh()).powf(-0.5) * (-d * d / (4.0 * th) - th * s * s / 4.0).exp()
}

/// Kernel of `e^{-tH}` on ℝ^d, `d = x.len()`.
pub fn mehler_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("Mehler kernel needs t > 0, got {t}")));
    }
    if x.len() != y.len() || x.is_empty() || x.len() > 3 {
        return Err(Error::Domain(
            "points must share a dimension in 1..=3".into(),
        ));
    }
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| mehler_kernel_1d(t, a, b))
        .product())
}

/// Gaussian form of `y ↦ K_t(x, y)` along one axis: `peak·exp(−A(y−μ)²)`.
pub(crate) fn axis_gaussian(t: f64, x: f64) -> (f64, f64, f64) {
    let th = t.tanh();
    let a = 1.0 / (4.0 * th) + th / 4.0;
    let mu = x * (1.0 - th * th) / (1.0 + th * th);
    (mehler_kernel_1d(t, x, mu), a, mu)
}

/// `‖K_t(x, ·)‖_{L^p(ℝ^d)}` for `p ∈ [1, ∞]`, by Gauss–Hermite quadrature
/// centred on the kernel's Gaussian profile (`p = ∞` takes the peak).
pub fn mehler_lp_norm(t: f64, x: &[f64], p: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("Mehler kernel needs t > 0, got {t}")));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p exponent must be ≥ 1, got {p}")));
    }
    if x.is_empty() || x.len() > 3 {
        return Err(Error::Domain("dimension must be 1, 2 or 3".into()));
    }
    if p.is_infinite() {
        return Ok(x.iter().map(|&xa| axis_gaussian(t, xa).0).product());
    }
    let (nodes, weights) = gauss_hermite(24);
    let mut total_log = 0.0;
    for &xa in x {
        let (_, a, mu) = axis_gaussian(t, xa);
        // Substitute y = μ + z/√(pA) so k(y)^p carries e^{-z²}.
        let s = (p * a).sqrt();
        let integral: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&z, &w)| w * mehler_kernel_1d(t, xa, mu + z / s).powf(p))
            .sum::<f64>()
            / s;
        total_log += integral.ln();
    }
    Ok((total_log / p).exp())
}
