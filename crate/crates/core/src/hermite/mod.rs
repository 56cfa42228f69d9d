//! Eigenbasis of the harmonic oscillator `H = −Δ + |x|²` on ℝ^d, d ≤ 3.
//!
//! Eigenfunctions are tensor products of normalized Hermite functions
//! `φ_ℓ(x) = φ_{ℓ₁}(x₁)⋯φ_{ℓ_d}(x_d)` with eigenvalue `2|ℓ| + d`. The basis
//! keeps the first `K` modes ordered by eigenvalue, ties broken
//! lexicographically on the multi-index.

mod field;
mod grid;
mod mehler;
mod transform;

pub use field::{Field, FieldPath};
pub use grid::QuadratureGrid;
pub use mehler::{mehler_kernel, mehler_kernel_1d, mehler_lp_norm};
pub use transform::{ProductRule, Products, Transform};

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest per-axis Hermite degree the recurrences are trusted for.
pub const MAX_AXIS_DEGREE: usize = 256;
/// Largest number of modes a basis may hold.
pub const MAX_MODES: usize = 1 << 20;

/// A single eigenmode: multi-index `ℓ` and eigenvalue `2|ℓ| + d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EigenMode {
    index: [u16; 3],
    dim: u8,
}

impl EigenMode {
    pub fn new(index: &[usize]) -> Result<Self> {
        if index.is_empty() || index.len() > 3 {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3, got {}",
                index.len()
            )));
        }
        let mut idx = [0u16; 3];
        for (slot, &l) in idx.iter_mut().zip(index) {
            if l > MAX_AXIS_DEGREE {
                return Err(Error::Capacity {
                    what: "per-axis Hermite degree",
                    requested: l,
                    limit: MAX_AXIS_DEGREE,
                });
            }
            *slot = l as u16;
        }
        Ok(Self {
            index: idx,
            dim: index.len() as u8,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn multi_index(&self) -> &[u16] {
        &self.index[..self.dim()]
    }

    /// Total degree `|ℓ|`.
    pub fn degree(&self) -> usize {
        self.multi_index().iter().map(|&l| l as usize).sum()
    }

    pub fn eigenvalue(&self) -> f64 {
        (2 * self.degree() + self.dim()) as f64
    }

    /// `φ_ℓ(x)`; `x` must have `dim` coordinates.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.multi_index()
            .iter()
            .zip(x)
            .map(|(&l, &xi)| hermite_function(l as usize, xi))
            .product()
    }
}

/// Normalized Hermite function `φ_n(x) = (2ⁿ n! √π)^{-1/2} H_n(x) e^{-x²/2}`,
/// evaluated by the three-term recurrence on the functions themselves.
pub fn hermite_function(n: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = φ_k(x)` for `k < out.len()`.
pub fn hermite_functions(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = 2f64.sqrt() * x * out[0];
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// `φ_ℓ(x)` for a mode; free-function form of [`EigenMode::eval`].
pub fn eval_eigenfunction(mode: &EigenMode, x: &[f64]) -> f64 {
    mode.eval(x)
}

/// The first `K` eigenmodes of `H` in dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    dim: usize,
    modes: Vec<EigenMode>,
    eigenvalues: Vec<f64>,
    /// Largest eigenvalue level for which every mode is present.
    complete_level: f64,
}

impl SpectralBasis {
    /// Builds the basis of the first `k` modes.
    pub fn new(dim: usize, k: usize) -> Result<Arc<Self>> {
        Self::with_limits(dim, k, MAX_AXIS_DEGREE, MAX_MODES)
    }

    pub fn with_limits(
        dim: usize,
        k: usize,
        max_axis_degree: usize,
        max_modes: usize,
    ) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if k == 0 {
            return Err(Error::Domain("a basis needs at least one mode".into()));
        }
        if k > max_modes {
            return Err(Error::Capacity {
                what: "basis size",
                requested: k,
                limit: max_modes,
            });
        }
        let mut modes = Vec::with_capacity(k);
        let mut level = 0usize;
        let mut complete_level = -1.0;
        while modes.len() < k {
            let mut shell = Vec::new();
            enumerate_shell(dim, level, &mut Vec::with_capacity(dim), &mut shell);
            shell.sort();
            let take = (k - modes.len()).min(shell.len());
            if take == shell.len() {
                complete_level = (2 * level + dim) as f64;
            }
            for idx in shell.into_iter().take(take) {
                if let Some(&l) = idx.iter().max() {
                    if l > max_axis_degree {
                        return Err(Error::Capacity {
                            what: "per-axis Hermite degree",
                            requested: l,
                            limit: max_axis_degree,
                        });
                    }
                }
                modes.push(EigenMode::new(&idx)?);
            }
            level += 1;
        }
        let eigenvalues = modes.iter().map(EigenMode::eigenvalue).collect();
        Ok(Arc::new(Self {
            dim,
            modes,
            eigenvalues,
            complete_level,
        }))
    }

    /// The full tensor basis `{ℓ : ℓ_a < n for every axis}`, in eigenvalue order.
    pub fn tensor(dim: usize, n: usize) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if n == 0 || n > MAX_AXIS_DEGREE + 1 {
            return Err(Error::Capacity {
                what: "per-axis Hermite degree",
                requested: n.saturating_sub(1),
                limit: MAX_AXIS_DEGREE,
            });
        }
        let total = n.pow(dim as u32);
        let mut idx: Vec<Vec<usize>> = (0..total)
            .map(|mut flat| {
                let mut v = vec![0; dim];
                for slot in v.iter_mut().rev() {
                    *slot = flat % n;
                    flat /= n;
                }
                v
            })
            .collect();
        idx.sort_by(|a, b| {
            let da: usize = a.iter().sum();
            let db: usize = b.iter().sum();
            da.cmp(&db).then_with(|| a.cmp(b))
        });
        let modes: Vec<EigenMode> = idx
            .iter()
            .map(|v| EigenMode::new(v))
            .collect::<Result<_>>()?;
        let eigenvalues = modes.iter().map(EigenMode::eigenvalue).collect();
        // Complete through total degree n − 1.
        let complete_level = (2 * (n - 1) + dim) as f64;
        Ok(Arc::new(Self {
            dim,
            modes,
            eigenvalues,
            complete_level,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[EigenMode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty basis")
    }

    /// Largest eigenvalue `Λ` such that every mode with `λ ≤ Λ` is present.
    pub fn complete_level(&self) -> f64 {
        self.complete_level
    }

    /// Highest Hermite degree along any axis.
    pub fn max_axis_degree(&self) -> usize {
        self.modes
            .iter()
            .flat_map(|m| m.multi_index().iter().copied())
            .max()
            .unwrap_or(0) as usize
    }

    /// True when the modes form a full tensor set `{ℓ : ℓ_a < n}`.
    pub fn is_tensor(&self) -> bool {
        let n = self.max_axis_degree() + 1;
        n.pow(self.dim as u32) == self.len()
    }

    /// Values of all basis functions at `x`.
    pub fn eval_all(&self, x: &[f64]) -> Vec<f64> {
        let deg = self.max_axis_degree() + 1;
        let mut axis = vec![vec![0.0; deg]; self.dim];
        for (a, tab) in axis.iter_mut().enumerate() {
            hermite_functions(x[a], tab);
        }
        self.modes
            .iter()
            .map(|m| {
                m.multi_index()
                    .iter()
                    .enumerate()
                    .map(|(a, &l)| axis[a][l as usize])
                    .product()
            })
            .collect()
    }

    /// `h_γ(x, x) = Σ_k λ_k^γ φ_k(x)²` over the truncated basis.
    pub fn h_gamma_diag(&self, gamma: f64, x: &[f64]) -> f64 {
        self.eval_all(x)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(p, l)| l.powf(gamma) * p * p)
            .sum()
    }

    /// `h_γ(x, y) = Σ_k λ_k^γ φ_k(x)φ_k(y)` over the truncated basis.
    pub fn h_gamma(&self, gamma: f64, x: &[f64], y: &[f64]) -> f64 {
        let px = self.eval_all(x);
        let py = self.eval_all(y);
        px.iter()
            .zip(&py)
            .zip(&self.eigenvalues)
            .map(|((a, b), l)| l.powf(gamma) * a * b)
            .sum()
    }

    /// Spectral function `Ψ_j(x) = Σ_{2^{2j} ≤ λ_k ≤ 2^{2j+2}} φ_k(x)²`.
    pub fn spectral_function(&self, j: u32, x: &[f64]) -> Result<f64> {
        let lo = 4f64.powi(j as i32);
        let hi = 4.0 * lo;
        if hi > self.complete_level {
            return Err(Error::Capacity {
                what: "eigenvalue coverage for the spectral function",
                requested: hi as usize,
                limit: self.complete_level.max(0.0) as usize,
            });
        }
        Ok(self
            .eval_all(x)
            .iter()
            .zip(&self.eigenvalues)
            .filter(|(_, &l)| l >= lo && l <= hi)
            .map(|(p, _)| p * p)
            .sum())
    }

    /// Number of modes with eigenvalue in `[lo, hi]`.
    pub fn count_in_band(&self, lo: f64, hi: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|&&l| l >= lo && l <= hi)
            .count()
    }
}

/// `build_basis(d, K)`.
pub fn build_basis(dim: usize, k: usize) -> Result<Arc<SpectralBasis>> {
    SpectralBasis::new(dim, k)
}

fn enumerate_shell(
    dim: usize,
    remaining: usize,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if prefix.len() + 1 == dim {
        let mut v = prefix.clone();
        v.push(remaining);
        out.push(v);
        return;
    }
    for l in 0..=remaining {
        prefix.push(l);
        enumerate_shell(dim, remaining - l, prefix, out);
        prefix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_hermite;

    #[test]
    fn ground_state_in_three_dimensions() {
        let b = SpectralBasis::new(3, 1).unwrap();
        assert_eq!(b.modes()[0].multi_index(), &[0, 0, 0]);
        assert_eq!(b.eigenvalues(), &[3.0]);
    }

    #[test]
    fn one_dimensional_eigenvalues_are_odd_integers() {
        let b = SpectralBasis::new(1, 4).unwrap();
        assert_eq!(b.eigenvalues(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn first_excited_shell_in_three_dimensions() {
        // Enumerate |ℓ| = 1 by brute force over a small cube.
        let mut expected = Vec::new();
        for a in 0..3u16 {
            for b in 0..3u16 {
                for c in 0..3u16 {
                    if a + b + c == 1 {
                        expected.push([a, b, c]);
                    }
                }
            }
        }
        expected.sort();
        let basis = SpectralBasis::new(3, 10).unwrap();
        let shell: Vec<[u16; 3]> = basis
            .modes()
            .iter()
            .filter(|m| m.eigenvalue() == 5.0)
            .map(|m| [m.multi_index()[0], m.multi_index()[1], m.multi_index()[2]])
            .collect();
        assert_eq!(shell, expected);
        assert_eq!(basis.len(), 10);
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn capacity_limit_is_enforced() {
        let err = SpectralBasis::new(1, 300).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        assert!(matches!(SpectralBasis::new(4, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn hermite_values_at_origin() {
        assert!((hermite_function(0, 0.0) - PI.powf(-0.25)).abs() < 1e-15);
        assert_eq!(hermite_function(1, 0.0), 0.0);
        let mut tab = vec![0.0; 8];
        hermite_functions(0.7, &mut tab);
        for (n, v) in tab.iter().enumerate() {
            assert!((v - hermite_function(n, 0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn phi5_is_normalized() {
        let (x, w) = gauss_hermite(40);
        let s: f64 = x
            .iter()
            .zip(&w)
            .map(|(x, w)| w * hermite_function(5, *x).powi(2))
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_matrix_is_identity() {
        let basis = SpectralBasis::new(1, 64).unwrap();
        let (x, w) = gauss_hermite(65);
        let vals: Vec<Vec<f64>> = x.iter().map(|&xi| basis.eval_all(&[xi])).collect();
        for j in 0..64 {
            for k in 0..64 {
                let g: f64 = vals.iter().zip(&w).map(|(v, w)| w * v[j] * v[k]).sum();
                let target = if j == k { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 1e-10, "({j},{k}) -> {g}");
            }
        }
    }

    #[test]
    fn h_gamma_diagonal_matches_l2_norm_of_row() {
        let basis = SpectralBasis::new(1, 30).unwrap();
        let (xs, ws) = gauss_hermite(40);
        let x = [0.4];
        let gamma = -0.75;
        let l2sq: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(y, w)| w * basis.h_gamma(gamma, &x, &[*y]).powi(2))
            .sum();
        assert!((l2sq - basis.h_gamma_diag(2.0 * gamma, &x)).abs() < 1e-12);
    }

    #[test]
    fn spectral_function_integrates_to_band_count() {
        let basis = SpectralBasis::new(1, 40).unwrap();
        let (xs, ws) = gauss_hermite(60);
        for j in 0..3 {
            let mass: f64 = xs
                .iter()
                .zip(&ws)
                .map(|(x, w)| w * basis.spectral_function(j, &[*x]).unwrap())
                .sum();
            let lo = 4f64.powi(j as i32);
            assert!((mass - basis.count_in_band(lo, 4.0 * lo) as f64).abs() < 1e-10);
        }
        assert!(basis.spectral_function(3, &[0.0]).is_err());
    }

    #[test]
    fn tensor_basis_is_full() {
        let b = SpectralBasis::tensor(2, 4).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.is_tensor());
        assert!(!SpectralBasis::new(2, 10).unwrap().is_tensor());
        assert!(SpectralBasis::new(1, 7).unwrap().is_tensor());
    }
}
