use std::sync::Arc;

use super::{hermite_functions, Field, QuadratureGrid, SpectralBasis};
use crate::error::{usage, Error, Result};

/// Hermite transform between coefficients on a basis and values on a
/// quadrature grid.
///
/// `forward` computes `c_k = Σ_i w_i φ_k(x_i) v_i`; `inverse` evaluates
/// `Σ_k c_k φ_k(x_i)` at every node.
#[derive(Clone, Debug)]
pub struct Transform {
    basis: Arc<SpectralBasis>,
    grid: QuadratureGrid,
    /// `table[i·K + k] = φ_k(x_i)`.
    table: Vec<f64>,
}

impl Transform {
    pub fn new(basis: &Arc<SpectralBasis>, grid: QuadratureGrid) -> Result<Self> {
        if basis.dim() != grid.dim() {
            return Err(usage(format!(
                "basis dimension {} does not match grid dimension {}",
                basis.dim(),
                grid.dim()
            )));
        }
        let k = basis.len();
        let dim = basis.dim();
        let deg = basis.max_axis_degree() + 1;
        // Per-axis Hermite tables, shared across the tensor nodes.
        let axis: Vec<Vec<f64>> = grid
            .axis_nodes()
            .iter()
            .map(|&x| {
                let mut v = vec![0.0; deg];
                hermite_functions(x, &mut v);
                v
            })
            .collect();
        let order = grid.order();
        let mut table = vec![0.0; grid.len() * k];
        for (i, row) in table.chunks_mut(k).enumerate() {
            let mut idx = [0usize; 3];
            let mut rem = i;
            for a in (0..dim).rev() {
                idx[a] = rem % order;
                rem /= order;
            }
            for (slot, mode) in row.iter_mut().zip(basis.modes()) {
                *slot = mode
                    .multi_index()
                    .iter()
                    .enumerate()
                    .map(|(a, &l)| axis[idx[a]][l as usize])
                    .product();
            }
        }
        Ok(Self {
            basis: basis.clone(),
            grid,
            table,
        })
    }

    /// Grid exact for projecting products of `factors − 1` basis functions.
    pub fn for_products(basis: &Arc<SpectralBasis>, factors: usize) -> Result<Self> {
        let grid = QuadratureGrid::for_products(basis.dim(), basis.max_axis_degree(), factors)?;
        Self::new(basis, grid)
    }

    /// Square transform on a tensor basis: `n` Gauss–Hermite nodes per axis
    /// for `n` Hermite degrees, so grid values and coefficients are in
    /// one-to-one correspondence.
    pub fn collocation(basis: &Arc<SpectralBasis>) -> Result<Self> {
        if !basis.is_tensor() {
            return Err(usage("collocation needs a full tensor basis"));
        }
        let grid = QuadratureGrid::gauss_hermite(basis.dim(), basis.max_axis_degree() + 1, 1.0)?;
        Self::new(basis, grid)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// `φ_k(x_i)` for node `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.basis.len();
        &self.table[i * k..(i + 1) * k]
    }

    pub fn forward(&self, values: &[f64]) -> Result<Field> {
        if values.len() != self.grid.len() {
            return Err(usage(format!(
                "expected {} grid values, got {}",
                self.grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid values must be finite".into()));
        }
        let mut c = vec![0.0; self.basis.len()];
        self.forward_into(values, &mut c);
        Field::from_coeffs(&self.basis, c)
    }

    /// Unchecked forward transform into a coefficient buffer.
    pub fn forward_into(&self, values: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        let k = self.basis.len();
        for ((row, &w), &v) in self.table.chunks(k).zip(self.grid.weights()).zip(values) {
            let wv = w * v;
            if wv == 0.0 {
                continue;
            }
            for (c, p) in out.iter_mut().zip(row) {
                *c += wv * p;
            }
        }
    }

    pub fn inverse(&self, f: &Field) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(f.basis(), &self.basis) && **f.basis() != *self.basis {
            return Err(usage("field basis does not match the transform basis"));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.inverse_into(f.coeffs(), &mut out);
        Ok(out)
    }

    /// Unchecked inverse transform of a coefficient slice.
    pub fn inverse_into(&self, coeffs: &[f64], out: &mut [f64]) {
        let k = self.basis.len();
        for (v, row) in out.iter_mut().zip(self.table.chunks(k)) {
            *v = row.iter().zip(coeffs).map(|(p, c)| p * c).sum();
        }
    }
}

/// How pointwise products are turned back into basis coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProductRule {
    /// Multiply on a fine Gauss–Hermite grid and project (Galerkin
    /// product, accurate to round-off up to cubic nonlinearities).
    Dealiased,
    /// Multiply on the square collocation grid (pseudo-spectral product).
    /// Products are associative, so algebraic identities between
    /// polynomial expressions hold to round-off.
    #[default]
    Collocation,
}

impl std::str::FromStr for ProductRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dealiased" => Ok(Self::Dealiased),
            "collocation" => Ok(Self::Collocation),
            other => Err(usage(format!("unknown product rule '{other}'"))),
        }
    }
}

impl std::fmt::Display for ProductRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dealiased => "dealiased",
            Self::Collocation => "collocation",
        })
    }
}

/// Pointwise products of Fields on a single product grid.
#[derive(Clone, Debug)]
pub struct Products {
    rule: ProductRule,
    transform: Arc<Transform>,
}

impl Products {
    pub fn new(basis: &Arc<SpectralBasis>, rule: ProductRule) -> Result<Self> {
        let transform = match rule {
            ProductRule::Dealiased => Transform::new(
                basis,
                QuadratureGrid::galerkin(basis.dim(), basis.max_axis_degree())?,
            )?,
            ProductRule::Collocation => Transform::collocation(basis)?,
        };
        Ok(Self {
            rule,
            transform: Arc::new(transform),
        })
    }

    pub fn rule(&self) -> ProductRule {
        self.rule
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.transform.basis()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.transform.grid()
    }

    fn check(&self, f: &Field) -> Result<()> {
        let b = self.basis();
        if Arc::ptr_eq(f.basis(), b) || **f.basis() == **b {
            Ok(())
        } else {
            Err(usage("field basis does not match the product grid"))
        }
    }

    /// Values of `f` at the product nodes.
    pub fn values(&self, f: &Field) -> Result<Vec<f64>> {
        self.check(f)?;
        let mut out = vec![0.0; self.grid().len()];
        self.transform.inverse_into(f.coeffs(), &mut out);
        Ok(out)
    }

    /// Projection of node values onto the basis.
    pub fn project(&self, values: &[f64]) -> Result<Field> {
        self.transform.forward(values)
    }

    pub fn mul(&self, f: &Field, g: &Field) -> Result<Field> {
        let mut a = self.values(f)?;
        let b = self.values(g)?;
        a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
        self.project(&a)
    }

    pub fn mul3(&self, f: &Field, g: &Field, h: &Field) -> Result<Field> {
        let mut a = self.values(f)?;
        let b = self.values(g)?;
        let c = self.values(h)?;
        for ((x, y), z) in a.iter_mut().zip(&b).zip(&c) {
            *x *= y * z;
        }
        self.project(&a)
    }

    pub fn square(&self, f: &Field) -> Result<Field> {
        let mut a = self.values(f)?;
        a.iter_mut().for_each(|x| *x *= *x);
        self.project(&a)
    }

    pub fn cube(&self, f: &Field) -> Result<Field> {
        let mut a = self.values(f)?;
        a.iter_mut().for_each(|x| *x = *x * *x * *x);
        self.project(&a)
    }

    /// Projection of `m·f` for a multiplier known at the product nodes.
    pub fn mul_nodes(&self, f: &Field, m: &[f64]) -> Result<Field> {
        if m.len() != self.grid().len() {
            return Err(usage("node multiplier has the wrong length"));
        }
        let mut a = self.values(f)?;
        a.iter_mut().zip(m).for_each(|(x, y)| *x *= y);
        self.project(&a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_unit_vectors() {
        for (dim, k) in [(1, 16), (2, 21), (3, 20)] {
            let b = SpectralBasis::new(dim, k).unwrap();
            let t = Transform::for_products(&b, 2).unwrap();
            for j in 0..k {
                let e = Field::unit(&b, j);
                let back = t.forward(&t.inverse(&e).unwrap()).unwrap();
                for (i, c) in back.coeffs().iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((c - want).abs() < 1e-12, "d={dim} j={j} i={i} c={c}");
                }
            }
        }
    }

    #[test]
    fn ground_state_square_linearization() {
        // φ₀² = π^{-1/2} e^{-x²}; ⟨φ₀², φ_{2m}⟩ in closed form.
        let b = SpectralBasis::new(1, 9).unwrap();
        let t = Transform::for_products(&b, 3).unwrap();
        let vals: Vec<f64> = t
            .grid()
            .nodes()
            .map(|x| super::super::hermite_function(0, x[0]).powi(2))
            .collect();
        let f = t.forward(&vals).unwrap();
        for m in 0..=4usize {
            let mut fact2m = 1.0;
            for i in 1..=2 * m {
                fact2m *= i as f64;
            }
            let mut factm = 1.0;
            for i in 1..=m {
                factm *= i as f64;
            }
            // ∫ e^{-3x²/2} H_{2m}(x) dx = √(2π/3)·(2m)!/m!·(−1/3)^m
            let integral = (2.0 * std::f64::consts::PI / 3.0).sqrt() * fact2m / factm
                * (-1.0f64 / 3.0).powi(m as i32);
            let norm = (4f64.powi(m as i32) * fact2m).sqrt();
            let want = std::f64::consts::PI.powf(-0.75) * integral / norm;
            assert!((f.coeffs()[2 * m] - want).abs() < 1e-13, "m={m}");
            if 2 * m + 1 < 9 {
                assert!(f.coeffs()[2 * m + 1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_and_mismatch() {
        let b = SpectralBasis::new(1, 8).unwrap();
        let t = Transform::for_products(&b, 2).unwrap();
        let z = t.forward(&vec![0.0; t.grid().len()]).unwrap();
        assert_eq!(z.max_abs_coeff(), 0.0);
        assert!(t.forward(&[1.0]).is_err());
        let other = SpectralBasis::new(1, 9).unwrap();
        assert!(t.inverse(&Field::zeros(&other)).is_err());
    }

    #[test]
    fn collocation_is_bijective() {
        let b = SpectralBasis::new(1, 24).unwrap();
        let t = Transform::collocation(&b).unwrap();
        assert_eq!(t.grid().len(), 24);
        let vals: Vec<f64> = (0..24).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let f = t.forward(&vals).unwrap();
        let back = t.inverse(&f).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn dealiased_products_match_a_fine_grid() {
        // top mode cubed and round-tripped, against a much finer grid
        for k in [10, 32, 48] {
            let b = SpectralBasis::new(1, k).unwrap();
            let p = Products::new(&b, ProductRule::Dealiased).unwrap();
            let f = Field::unit(&b, k - 1);
            let c = p.cube(&f).unwrap();
            let fine =
                Transform::new(&b, QuadratureGrid::gauss_hermite(1, 12 * k, 2.0).unwrap()).unwrap();
            let vals: Vec<f64> = fine
                .inverse(&f)
                .unwrap()
                .iter()
                .map(|v| v * v * v)
                .collect();
            let reference = fine.forward(&vals).unwrap();
            for (a, r) in c.coeffs().iter().zip(reference.coeffs()) {
                assert!((a - r).abs() < 1e-12, "K={k}: {}", (a - r).abs());
            }
            let back = p.project(&p.values(&f).unwrap()).unwrap();
            assert!(
                (&back - &f).l2_norm() < 1e-12,
                "K={k}: {}",
                (&back - &f).l2_norm()
            );
        }
    }
}
