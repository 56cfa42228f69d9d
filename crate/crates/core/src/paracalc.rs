//! Paraproducts, resonant products, commutators, the resonance operator
//! and the Young mild integral.
//!
//! With blocks `δ_j`, `j ≥ −1`, and the default gap 4 / width 3:
//! `f≺g = Σ_{j ≤ k−4} δ_j f·δ_k g`, `f∘g = Σ_{|j−k| ≤ 3} δ_j f·δ_k g`,
//! `f≻g = g≺f`. The three index sets partition all pairs, so
//! `f≺g + f∘g + f≻g` is the projected product `fg`.

use std::sync::Arc;

use crate::besov::{max_block, DyadicCutoff};
use crate::error::{usage, Error, Result};
use crate::hermite::{Field, FieldPath, Products, SpectralBasis};

/// Frequency bookkeeping for paraproducts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParaConfig {
    /// `f≺g` pairs `δ_j f` with `δ_k g` for `j ≤ k − separation`.
    pub separation: i32,
    /// `f∘g` pairs blocks with `|j − k| ≤ resonance_width`.
    pub resonance_width: i32,
}

impl Default for ParaConfig {
    fn default() -> Self {
        Self {
            separation: 4,
            resonance_width: 3,
        }
    }
}

impl ParaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resonance_width < 0 || self.separation < self.resonance_width + 1 {
            return Err(usage(format!(
                "paraproduct gap {} must exceed the resonance width {}",
                self.separation, self.resonance_width
            )));
        }
        Ok(())
    }

    /// True when `≺`, `∘` and `≻` cover every block pair exactly once.
    pub fn is_partition(&self) -> bool {
        self.separation == self.resonance_width + 1
    }
}

/// Block images of a Field at the product nodes, index `b = j + 1`.
#[derive(Clone, Debug)]
pub struct BlockSplit {
    values: Vec<Vec<f64>>,
}

impl BlockSplit {
    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Node values of the whole field.
    pub fn total(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values[0].len()];
        for b in &self.values {
            out.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Paraproduct engine over one basis and product grid.
#[derive(Clone, Debug)]
pub struct Paracalc {
    products: Products,
    cutoff: DyadicCutoff,
    config: ParaConfig,
    top: i32,
    /// `weights[b][k] = χ_{b−1}(√λ_k)`.
    weights: Vec<Vec<f64>>,
}

impl Paracalc {
    pub fn new(products: Products, config: ParaConfig) -> Result<Self> {
        config.validate()?;
        let cutoff = DyadicCutoff::new();
        let basis = products.basis().clone();
        let top = max_block(&basis);
        let weights = (-1..=top)
            .map(|j| {
                basis
                    .eigenvalues()
                    .iter()
                    .map(|&l| cutoff.block_weight(j, l))
                    .collect()
            })
            .collect();
        Ok(Self {
            products,
            cutoff,
            config,
            top,
            weights,
        })
    }

    pub fn products(&self) -> &Products {
        &self.products
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        self.products.basis()
    }

    pub fn config(&self) -> ParaConfig {
        self.config
    }

    pub fn cutoff(&self) -> &DyadicCutoff {
        &self.cutoff
    }

    /// Highest block index `J`.
    pub fn top_block(&self) -> i32 {
        self.top
    }

    /// `δ_j f` as a Field.
    pub fn block(&self, f: &Field, j: i32) -> Field {
        if j < -1 || j > self.top {
            return Field::zeros(f.basis());
        }
        let w = &self.weights[(j + 1) as usize];
        let c = f.coeffs().iter().zip(w).map(|(a, b)| a * b).collect();
        Field::from_coeffs(f.basis(), c).expect("finite block")
    }

    pub fn split(&self, f: &Field) -> Result<BlockSplit> {
        let t = self.products.transform();
        if !f.same_basis(&Field::zeros(self.basis())) {
            return Err(usage("field basis does not match the paraproduct basis"));
        }
        let n = t.grid().len();
        let values = self
            .weights
            .iter()
            .map(|w| {
                let c: Vec<f64> = f.coeffs().iter().zip(w).map(|(a, b)| a * b).collect();
                let mut v = vec![0.0; n];
                t.inverse_into(&c, &mut v);
                v
            })
            .collect();
        Ok(BlockSplit { values })
    }

    /// Node values of `f≺g`.
    pub fn lo_values(&self, f: &BlockSplit, g: &BlockSplit) -> Vec<f64> {
        let n = f.values[0].len();
        let mut out = vec![0.0; n];
        let mut low = vec![0.0; n];
        let nb = self.weights.len() as i32;
        let mut next = 0i32;
        for kb in 0..nb {
            // Blocks jb ≤ kb − separation join the low-frequency sum.
            while next <= kb - self.config.separation {
                low.iter_mut()
                    .zip(&f.values[next as usize])
                    .for_each(|(l, v)| *l += v);
                next += 1;
            }
            if next > 0 {
                for ((o, l), g) in out.iter_mut().zip(&low).zip(&g.values[kb as usize]) {
                    *o += l * g;
                }
            }
        }
        out
    }

    /// Node values of `f∘g`.
    pub fn res_values(&self, f: &BlockSplit, g: &BlockSplit) -> Vec<f64> {
        let n = f.values[0].len();
        let mut out = vec![0.0; n];
        let nb = self.weights.len() as i32;
        let w = self.config.resonance_width;
        for jb in 0..nb {
            for kb in (jb - w).max(0)..=(jb + w).min(nb - 1) {
                for ((o, a), b) in out
                    .iter_mut()
                    .zip(&f.values[jb as usize])
                    .zip(&g.values[kb as usize])
                {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn project(&self, values: &[f64]) -> Result<Field> {
        self.products.project(values)
    }

    pub fn lo_split(&self, f: &BlockSplit, g: &BlockSplit) -> Result<Field> {
        self.project(&self.lo_values(f, g))
    }

    pub fn res_split(&self, f: &BlockSplit, g: &BlockSplit) -> Result<Field> {
        self.project(&self.res_values(f, g))
    }

    fn check(&self, f: &Field, g: &Field) -> Result<()> {
        f.check_basis(g)?;
        if !f.same_basis(&Field::zeros(self.basis())) {
            return Err(usage("field basis does not match the paraproduct basis"));
        }
        Ok(())
    }

    /// `f≺g`.
    pub fn para_lo(&self, f: &Field, g: &Field) -> Result<Field> {
        self.check(f, g)?;
        self.lo_split(&self.split(f)?, &self.split(g)?)
    }

    /// `f∘g`.
    pub fn para_res(&self, f: &Field, g: &Field) -> Result<Field> {
        self.check(f, g)?;
        self.res_split(&self.split(f)?, &self.split(g)?)
    }

    /// `f≻g = g≺f`.
    pub fn para_hi(&self, f: &Field, g: &Field) -> Result<Field> {
        self.para_lo(g, f)
    }

    /// `(f≺g, f∘g, f≻g)` sharing one block split of each argument.
    pub fn bony(&self, f: &Field, g: &Field) -> Result<(Field, Field, Field)> {
        self.check(f, g)?;
        let fs = self.split(f)?;
        let gs = self.split(g)?;
        Ok((
            self.lo_split(&fs, &gs)?,
            self.res_split(&fs, &gs)?,
            self.lo_split(&gs, &fs)?,
        ))
    }

    /// Projected full product `fg`.
    pub fn product(&self, f: &Field, g: &Field) -> Result<Field> {
        self.check(f, g)?;
        self.products.mul(f, g)
    }

    /// `[δ_k, f](g) = δ_k(fg) − f·δ_k g`.
    pub fn commutator_block(&self, k: i32, f: &Field, g: &Field) -> Result<Field> {
        self.check(f, g)?;
        let fg = self.products.mul(f, g)?;
        let fdg = self.products.mul(f, &self.block(g, k))?;
        Ok(&self.block(&fg, k) - &fdg)
    }

    /// `[≺,∘](f, g, h) = (f≺g)∘h − f·(g∘h)`.
    pub fn commutator_para_res(&self, f: &Field, g: &Field, h: &Field) -> Result<Field> {
        self.check(f, g)?;
        self.check(g, h)?;
        let lo = self.para_lo(f, g)?;
        let a = self.para_res(&lo, h)?;
        let gh = self.para_res(g, h)?;
        let b = self.products.mul(f, &gh)?;
        Ok(&a - &b)
    }

    /// `e^{−tH}(f≺g) − f≺(e^{−tH}g)`.
    pub fn heat_commutator(&self, t: f64, f: &Field, g: &Field) -> Result<Field> {
        self.check(f, g)?;
        let a = self.para_lo(f, g)?.apply_semigroup(t)?;
        let b = self.para_lo(f, &g.apply_semigroup(t)?)?;
        Ok(&a - &b)
    }

    /// `ρ(λ, λ') = Σ_{|i−i'| ≤ width} χ_i(√λ) χ_{i'}(√λ')`.
    pub fn resonance_weight(&self, l1: f64, l2: f64) -> f64 {
        let w = self.config.resonance_width;
        let a: Vec<f64> = (-1..=self.top)
            .map(|i| self.cutoff.block_weight(i, l1))
            .collect();
        let b: Vec<f64> = (-1..=self.top)
            .map(|i| self.cutoff.block_weight(i, l2))
            .collect();
        let nb = a.len() as i32;
        let mut s = 0.0;
        for i in 0..nb {
            for k in (i - w).max(0)..=(i + w).min(nb - 1) {
                s += a[i as usize] * b[k as usize];
            }
        }
        s
    }

    /// `𝓡F` at one point.
    pub fn resonance_operator_at(&self, f: &FourVarFunction, x: &[f64]) -> Result<f64> {
        f.check(self.basis())?;
        let k = f.k;
        let phi = self.basis().eval_all(x);
        let rho = self.rho_matrix();
        // A_{ac} = ρ(λ_a, λ_c) φ_a(x) φ_c(x)
        let mut a_mat = vec![0.0; k * k];
        for a in 0..k {
            for c in 0..k {
                a_mat[a * k + c] = rho[a * k + c] * phi[a] * phi[c];
            }
        }
        Ok(f.contract(&a_mat))
    }

    /// `𝓡F` projected onto the basis from the product nodes.
    pub fn resonance_operator(&self, f: &FourVarFunction) -> Result<Field> {
        f.check(self.basis())?;
        let k = f.k;
        let rho = self.rho_matrix();
        let t = self.products.transform();
        let mut vals = Vec::with_capacity(t.grid().len());
        let mut a_mat = vec![0.0; k * k];
        for i in 0..t.grid().len() {
            let phi = t.row(i);
            for a in 0..k {
                for c in 0..k {
                    a_mat[a * k + c] = rho[a * k + c] * phi[a] * phi[c];
                }
            }
            vals.push(f.contract(&a_mat));
        }
        self.project(&vals)
    }

    fn rho_matrix(&self) -> Vec<f64> {
        let l = self.basis().eigenvalues();
        let k = l.len();
        let mut rho = vec![0.0; k * k];
        for a in 0..k {
            for c in 0..k {
                rho[a * k + c] = self.resonance_weight(l[a], l[c]);
            }
        }
        rho
    }

    /// Dyadic Riemann sum of `∫_s^t e^{−(t−r)H}(u_r·df_r)` at `level`.
    pub fn young_mild_integral(
        &self,
        u: &FieldPath,
        f: &FieldPath,
        s: f64,
        t: f64,
        level: u32,
    ) -> Result<YoungIntegral> {
        if !(s < t) {
            return Err(usage(format!(
                "Young integral needs s < t, got s={s}, t={t}"
            )));
        }
        if level > 24 {
            return Err(Error::Capacity {
                what: "dyadic level",
                requested: level as usize,
                limit: 24,
            });
        }
        let fine = self.riemann_sum(u, f, s, t, level)?;
        let increment = if level == 0 {
            fine.0.l2_norm()
        } else {
            let coarse = self.riemann_sum(u, f, s, t, level - 1)?;
            (&fine.0 - &coarse.0).l2_norm()
        };
        Ok(YoungIntegral {
            value: fine.0,
            level,
            increment,
            interpolated: fine.1,
        })
    }

    fn riemann_sum(
        &self,
        u: &FieldPath,
        f: &FieldPath,
        s: f64,
        t: f64,
        level: u32,
    ) -> Result<(Field, bool)> {
        let steps = 1usize << level;
        let h = (t - s) / steps as f64;
        let mut acc = Field::zeros(self.basis());
        let mut interpolated = false;
        let (mut f_prev, flag) = f.value_at(s)?;
        interpolated |= flag;
        for i in 0..steps {
            let ti = s + i as f64 * h;
            let (ui, a) = u.value_at(ti)?;
            let (f_next, b) = f.value_at(s + (i + 1) as f64 * h)?;
            interpolated |= a | b;
            let df = &f_next - &f_prev;
            let term = self.products.mul(&ui, &df)?;
            acc.axpy(1.0, &term.apply_semigroup(t - ti)?);
            f_prev = f_next;
        }
        Ok((acc, interpolated))
    }
}

/// One level of the dyadic Riemann sums.
#[derive(Clone, Debug)]
pub struct YoungIntegral {
    pub value: Field,
    pub level: u32,
    /// `‖S^{(n)} − S^{(n−1)}‖_{L²}`.
    pub increment: f64,
    /// Whether stored paths were interpolated between time points.
    pub interpolated: bool,
}

/// Largest basis the resonance operator accepts.
pub const MAX_RESONANCE_MODES: usize = 32;

/// `F(y₁, y₂, z₁, z₂) = Σ F_{abce} φ_a(y₁)φ_b(y₂)φ_c(z₁)φ_e(z₂)`.
#[derive(Clone, Debug)]
pub struct FourVarFunction {
    basis: Arc<SpectralBasis>,
    k: usize,
    /// Row-major over `(a, b, c, e)`.
    coeffs: Vec<f64>,
}

impl FourVarFunction {
    pub fn zeros(basis: &Arc<SpectralBasis>) -> Result<Self> {
        let k = basis.len();
        if k > MAX_RESONANCE_MODES {
            return Err(Error::Capacity {
                what: "resonance operator basis size",
                requested: k,
                limit: MAX_RESONANCE_MODES,
            });
        }
        Ok(Self {
            basis: basis.clone(),
            k,
            coeffs: vec![0.0; k * k * k * k],
        })
    }

    /// `a(y₁) b(y₂) c(z₁) e(z₂)`.
    pub fn separable(a: &Field, b: &Field, c: &Field, e: &Field) -> Result<Self> {
        let mut out = Self::zeros(a.basis())?;
        out.add_separable(1.0, a, b, c, e)?;
        Ok(out)
    }

    pub fn add_separable(
        &mut self,
        w: f64,
        a: &Field,
        b: &Field,
        c: &Field,
        e: &Field,
    ) -> Result<()> {
        for f in [a, b, c, e] {
            if !(Arc::ptr_eq(f.basis(), &self.basis) || **f.basis() == *self.basis) {
                return Err(usage("separable factors must share the function's basis"));
            }
        }
        let k = self.k;
        let (a, b, c, e) = (a.coeffs(), b.coeffs(), c.coeffs(), e.coeffs());
        for (i, &ai) in a.iter().enumerate() {
            for (j, &bj) in b.iter().enumerate() {
                let ab = w * ai * bj;
                if ab == 0.0 {
                    continue;
                }
                for (l, &cl) in c.iter().enumerate() {
                    let abc = ab * cl;
                    let base = ((i * k + j) * k + l) * k;
                    for (dst, &em) in self.coeffs[base..base + k].iter_mut().zip(e) {
                        *dst += abc * em;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    fn check(&self, basis: &Arc<SpectralBasis>) -> Result<()> {
        if Arc::ptr_eq(basis, &self.basis) || **basis == *self.basis {
            Ok(())
        } else {
            Err(usage("four-variable function lives on another basis"))
        }
    }

    /// `Σ F_{abce} A_{ac} A_{be}`.
    fn contract(&self, a_mat: &[f64]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    let w = a_mat[a * k + c];
                    if w == 0.0 {
                        continue;
                    }
                    let base = ((a * k + b) * k + c) * k;
                    let row = &self.coeffs[base..base + k];
                    let be = &a_mat[b * k..(b + 1) * k];
                    total += w * row.iter().zip(be).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
        total
    }
}
