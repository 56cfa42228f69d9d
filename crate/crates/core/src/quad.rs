//! One-dimensional quadrature rules.
//!
//! Gauss–Hermite nodes are computed by Newton iteration on the normalized
//! Hermite *functions* rather than the polynomials, so the returned weights
//! already carry the `e^{x²}` factor and stay representable for orders in
//! the hundreds. Gauss–Legendre uses the same Newton approach, and the
//! adaptive integrator is a 7/15-point Gauss–Kronrod bisection scheme.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss–Hermite rule in the form
/// `∫ f(x) dx ≈ Σ w_i f(x_i)`, exact whenever `f = P·e^{-x²}` with
/// `deg P ≤ 2n − 1`. Nodes are returned in increasing order.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Hermite order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        for _ in 0..100 {
            let (phi_n, phi_nm1) = hermite_pair(n, z);
            // φ_n' = √(2n) φ_{n-1} − z φ_n
            let dphi = (2.0 * nf).sqrt() * phi_nm1 - z * phi_n;
            let step = phi_n / dphi;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, phi_nm1) = hermite_pair(n, z);
        let weight = 1.0 / (nf * phi_nm1 * phi_nm1);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let mut pairs: Vec<(f64, f64)> = x.into_iter().zip(w).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Returns `(φ_n(z), φ_{n-1}(z))` for the normalized Hermite functions.
fn hermite_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = PI.powf(-0.25) * (-0.5 * z * z).exp();
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A Gauss–Legendre rule mapped to `[a, b]`.
#[derive(Clone, Debug)]
pub struct Legendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Legendre {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Nodes and weights already mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// Breakpoints `a, a·2, a·4, …, b` (or `[a, b]` when `a ≤ 0`).
/// Geometric panels resolve integrands that are singular just left of `a`.
pub fn geometric_breaks(a: f64, b: f64) -> Vec<f64> {
    let mut edges = vec![a];
    if a > 0.0 {
        let mut e = 2.0 * a;
        while e < b {
            edges.push(e);
            e *= 2.0;
        }
    }
    if b > a {
        edges.push(b);
    }
    edges
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Adaptive Gauss–Kronrod integration over the panels delimited by
/// `breaks`, with a global absolute tolerance.
pub fn integrate_adaptive(breaks: &[f64], abs_tol: f64, mut f: impl FnMut(f64) -> f64) -> Integral {
    const MAX_PANELS: usize = 4000;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (v, e) = kronrod15(w[0], w[1], &mut f);
            evaluations += 15;
            panels.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= abs_tol || panels.len() >= MAX_PANELS {
            break;
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("at least one panel");
        let (a, b, _, _) = panels.swap_remove(idx);
        let m = 0.5 * (a + b);
        let (v1, e1) = kronrod15(a, m, &mut f);
        let (v2, e2) = kronrod15(m, b, &mut f);
        evaluations += 30;
        panels.push((a, m, v1, e1));
        panels.push((m, b, v2, e2));
    }
    // Sum in position order so the result does not depend on refinement history.
    panels.sort_by(|p, q| p.0.total_cmp(&q.0));
    Integral {
        value: panels.iter().map(|p| p.2).sum(),
        error: panels.iter().map(|p| p.3).sum(),
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        for n in [1, 2, 5, 20, 64, 129, 257] {
            let (x, w) = gauss_hermite(n);
            let mass: f64 = x.iter().zip(&w).map(|(x, w)| w * (-x * x).exp()).sum();
            assert!((mass - PI.sqrt()).abs() < 1e-12, "n={n} mass={mass}");
            if n >= 2 {
                let m2: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(x, w)| w * x * x * (-x * x).exp())
                    .sum();
                assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12, "n={n}");
            }
            assert!(w.iter().all(|&w| w > 0.0));
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn legendre_is_exact_for_polynomials() {
        let rule = Legendre::new(6);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(11));
        assert!((v - 2f64.powi(12) / 12.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_handles_inverse_sqrt_singularity() {
        let eps = 1e-4;
        let r = integrate_adaptive(&geometric_breaks(eps, 1.0), 1e-12, |s| s.powf(-1.5));
        let exact = 2.0 * (eps.powf(-0.5) - 1.0);
        assert!((r.value - exact).abs() < 1e-9, "{} vs {}", r.value, exact);
    }
}
