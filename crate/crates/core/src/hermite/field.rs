use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use super::SpectralBasis;
use crate::error::{usage, Error, Result};

/// A real function on ℝ^d stored by its coefficients in a [`SpectralBasis`].
#[derive(Clone, Debug)]
pub struct Field {
    basis: Arc<SpectralBasis>,
    coeffs: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_basis(other) && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Self {
        Self {
            basis: basis.clone(),
            coeffs: vec![0.0; basis.len()],
        }
    }

    pub fn from_coeffs(basis: &Arc<SpectralBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(usage(format!(
                "coefficient vector has length {}, basis has {} modes",
                coeffs.len(),
                basis.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("field coefficients must be finite".into()));
        }
        Ok(Self {
            basis: basis.clone(),
            coeffs,
        })
    }

    /// The `k`-th basis function.
    pub fn unit(basis: &Arc<SpectralBasis>, k: usize) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn same_basis(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) || *self.basis == *other.basis
    }

    pub(crate) fn check_basis(&self, other: &Field) -> Result<()> {
        if self.same_basis(other) {
            Ok(())
        } else {
            Err(usage("fields live on different bases"))
        }
    }

    /// `‖u‖_{L²}`, which equals the coefficient ℓ² norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `(Σ λ_k^s c_k²)^{1/2}`, the `H^s` norm built from `H`.
    pub fn sobolev_l2(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(c, l)| l.powf(s) * c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `m(H) u` for a spectral multiplier `m`.
    pub fn spectral_multiply(&self, m: impl Fn(f64) -> f64) -> Field {
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.basis.eigenvalues())
            .map(|(c, &l)| c * m(l))
            .collect();
        Field {
            basis: self.basis.clone(),
            coeffs,
        }
    }

    /// `e^{-tH} u`.
    pub fn apply_semigroup(&self, t: f64) -> Result<Field> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!(
                "semigroup time must be ≥ 0, got {t}"
            )));
        }
        Ok(self.spectral_multiply(|l| (-t * l).exp()))
    }

    /// `H^γ u`.
    pub fn apply_fractional_power(&self, gamma: f64) -> Field {
        self.spectral_multiply(|l| l.powf(gamma))
    }

    /// `Δt·φ₁(Δt H) u` with `φ₁(z) = (1 − e^{-z})/z`.
    pub fn apply_phi1(&self, dt: f64) -> Field {
        self.spectral_multiply(|l| -(-dt * l).exp_m1() / l)
    }

    /// Pointwise evaluation at `x` (direct eigenfunction sum).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.basis
            .eval_all(x)
            .iter()
            .zip(&self.coeffs)
            .map(|(p, c)| p * c)
            .sum()
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        debug_assert!(self.same_basis(x));
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            basis: self.basis.clone(),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn assert_compatible(a: &Field, b: &Field) {
    assert!(a.same_basis(b), "field arithmetic across different bases");
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        assert_compatible(self, rhs);
        Field {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        assert_compatible(self, rhs);
        Field {
            basis: self.basis.clone(),
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scaled(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        assert_compatible(self, rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        assert_compatible(self, rhs);
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

/// Fields sampled on a uniform time grid `t_m = t0 + m·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPath {
    t0: f64,
    dt: f64,
    fields: Vec<Field>,
}

impl FieldPath {
    pub fn new(t0: f64, dt: f64, fields: Vec<Field>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if let Some(first) = fields.first() {
            if fields.iter().any(|f| !f.same_basis(first)) {
                return Err(usage("path fields live on different bases"));
            }
        }
        Ok(Self { t0, dt, fields })
    }

    pub fn zeros(basis: &Arc<SpectralBasis>, t0: f64, dt: f64, steps: usize) -> Self {
        Self {
            t0,
            dt,
            fields: vec![Field::zeros(basis); steps + 1],
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of stored time points.
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn time(&self, m: usize) -> f64 {
        self.t0 + m as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.fields.len().saturating_sub(1))
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [Field] {
        &mut self.fields
    }

    pub fn get(&self, m: usize) -> &Field {
        &self.fields[m]
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("non-empty path")
    }

    pub fn basis(&self) -> Option<&Arc<SpectralBasis>> {
        self.fields.first().map(Field::basis)
    }

    pub fn push(&mut self, f: Field) {
        self.fields.push(f);
    }

    pub fn same_grid(&self, other: &FieldPath) -> bool {
        self.len() == other.len()
            && (self.dt - other.dt).abs() <= 1e-14 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-14 * self.dt.max(self.t0.abs())
    }

    /// Value at time `t` with piecewise-linear interpolation in the
    /// coefficients; the flag reports whether interpolation was needed.
    pub fn value_at(&self, t: f64) -> Result<(Field, bool)> {
        let s = (t - self.t0) / self.dt;
        let last = (self.len() - 1) as f64;
        if s < -1e-9 || s > last + 1e-9 {
            return Err(Error::Domain(format!(
                "time {t} outside path range [{}, {}]",
                self.t0,
                self.end_time()
            )));
        }
        let s = s.clamp(0.0, last);
        let nearest = s.round();
        if (s - nearest).abs() <= 1e-9 {
            return Ok((self.fields[nearest as usize].clone(), false));
        }
        let m = s.floor() as usize;
        let theta = s - m as f64;
        let mut out = self.fields[m].scaled(1.0 - theta);
        out.axpy(theta, &self.fields[m + 1]);
        Ok((out, true))
    }

    /// Cumulative-trapezoid antiderivative `F_t = ∫_{t0}^t f_s ds`.
    pub fn antiderivative(&self) -> FieldPath {
        let mut out = Vec::with_capacity(self.len());
        let Some(first) = self.fields.first() else {
            return self.clone();
        };
        let mut acc = Field::zeros(first.basis());
        out.push(acc.clone());
        for w in self.fields.windows(2) {
            acc.axpy(0.5 * self.dt, &w[0]);
            acc.axpy(0.5 * self.dt, &w[1]);
            out.push(acc.clone());
        }
        FieldPath {
            t0: self.t0,
            dt: self.dt,
            fields: out,
        }
    }

    /// Pointwise difference of two paths on the same grid.
    pub fn difference(&self, other: &FieldPath) -> Result<FieldPath> {
        if !self.same_grid(other) {
            return Err(usage("paths live on different time grids"));
        }
        let fields = self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| {
                a.check_basis(b)?;
                Ok(a - b)
            })
            .collect::<Result<_>>()?;
        Ok(FieldPath {
            t0: self.t0,
            dt: self.dt,
            fields,
        })
    }

    /// Keeps every `stride`-th time point.
    pub fn subsample(&self, stride: usize) -> FieldPath {
        let stride = stride.max(1);
        FieldPath {
            t0: self.t0,
            dt: self.dt * stride as f64,
            fields: self.fields.iter().step_by(stride).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semigroup_law_and_identity() {
        let b = SpectralBasis::new(1, 8).unwrap();
        let u = Field::from_coeffs(&b, (0..8).map(|k| 1.0 / (k as f64 + 1.0)).collect()).unwrap();
        assert_eq!(u.apply_semigroup(0.0).unwrap(), u);
        let a = u
            .apply_semigroup(0.3)
            .unwrap()
            .apply_semigroup(0.2)
            .unwrap();
        let c = u.apply_semigroup(0.5).unwrap();
        for (x, y) in a.coeffs().iter().zip(c.coeffs()) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-300));
        }
        let e3 = Field::unit(&b, 3).apply_semigroup(0.1).unwrap();
        assert!((e3.coeffs()[3] - (-0.7f64).exp()).abs() < 1e-15);
        assert!(u.apply_semigroup(-1.0).is_err());
    }

    #[test]
    fn fractional_powers_compose() {
        let b = SpectralBasis::new(2, 12).unwrap();
        let u = Field::from_coeffs(&b, (0..12).map(|k| (k as f64).sin()).collect()).unwrap();
        assert_eq!(u.apply_fractional_power(0.0), u);
        let half = u.apply_fractional_power(0.5).apply_fractional_power(0.5);
        let full = u.apply_fractional_power(1.0);
        for (x, y) in half.coeffs().iter().zip(full.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_path_interpolates_exactly() {
        let b = SpectralBasis::new(1, 3).unwrap();
        let u = Field::unit(&b, 1);
        let path =
            FieldPath::new(0.0, 0.1, (0..5).map(|m| u.scaled(m as f64 * 0.1)).collect()).unwrap();
        let (v, interp) = path.value_at(0.25).unwrap();
        assert!(interp);
        assert!((v.coeffs()[1] - 0.25).abs() < 1e-15);
        let (_, interp) = path.value_at(0.2).unwrap();
        assert!(!interp);
        assert!(path.value_at(0.5).is_err());
        let anti = path.antiderivative();
        assert!((anti.last().coeffs()[1] - 0.08).abs() < 1e-15);
    }
}
