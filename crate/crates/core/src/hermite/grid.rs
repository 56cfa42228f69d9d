use crate::error::{Error, Result};
use crate::quad::gauss_hermite;

/// Tensor Gauss–Hermite grid on ℝ^d.
///
/// A grid with Gaussian exponent `a` integrates `P(x)·e^{-a|x|²}` exactly
/// when `P` has degree `≤ 2·order − 1` along each axis. A product of `m`
/// Hermite functions carries the weight `e^{-m|x|²/2}`, so `a = m/2` makes
/// the projection of `m − 1` factors onto the basis exact.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    dim: usize,
    order: usize,
    exponent: f64,
    axis_nodes: Vec<f64>,
    axis_weights: Vec<f64>,
    nodes: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn gauss_hermite(dim: usize, order: usize, exponent: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!(
                "dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if order == 0 || exponent <= 0.0 {
            return Err(Error::Domain(
                "grid order and exponent must be positive".into(),
            ));
        }
        if order > 4096 {
            return Err(Error::Capacity {
                what: "quadrature order",
                requested: order,
                limit: 4096,
            });
        }
        let (y, w) = gauss_hermite(order);
        let s = exponent.sqrt();
        let axis_nodes: Vec<f64> = y.iter().map(|y| y / s).collect();
        let axis_weights: Vec<f64> = w.iter().map(|w| w / s).collect();
        let total = order.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = [0.0; 3];
            let mut wt = 1.0;
            for a in (0..dim).rev() {
                let i = rem % order;
                rem /= order;
                p[a] = axis_nodes[i];
                wt *= axis_weights[i];
            }
            nodes.push(p);
            weights.push(wt);
        }
        Ok(Self {
            dim,
            order,
            exponent,
            axis_nodes,
            axis_weights,
            nodes,
            weights,
        })
    }

    /// Grid exact for projecting a product of `factors − 1` functions of
    /// per-axis degree `≤ max_degree` onto the same span.
    pub fn for_products(dim: usize, max_degree: usize, factors: usize) -> Result<Self> {
        let order = (factors * max_degree + 1).div_ceil(2);
        Self::gauss_hermite(dim, order.max(1), factors as f64 / 2.0)
    }

    /// One grid for nodewise polynomials of degree ≤ 3 in a field: weight
    /// `e^{−3x²/2}` sits between the linear and cubic projection weights,
    /// and 2.5 times the cubic-exact order brings every arity to round-off.
    pub fn galerkin(dim: usize, max_degree: usize) -> Result<Self> {
        let order = (5 * (4 * max_degree + 1)).div_ceil(4);
        Self::gauss_hermite(dim, order, 1.5)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i][..self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.nodes.iter().map(move |p| &p[..self.dim])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis_nodes
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    /// `Σ w_i f(x_i)`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.nodes().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_grid_is_exact_for_its_gaussian() {
        let g = QuadratureGrid::gauss_hermite(1, 6, 2.0).unwrap();
        // ∫ x⁴ e^{-2x²} dx = 3√π / (4·2^{5/2})
        let v = g.integrate(|x| x[0].powi(4) * (-2.0 * x[0] * x[0]).exp());
        let exact = 3.0 * std::f64::consts::PI.sqrt() / (4.0 * 2f64.powf(2.5));
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn tensor_grid_has_order_power_nodes() {
        let g = QuadratureGrid::gauss_hermite(3, 5, 1.0).unwrap();
        assert_eq!(g.len(), 125);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let mass = g.integrate(|x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        assert!((mass - std::f64::consts::PI.powf(1.5)).abs() < 1e-12);
    }
}
