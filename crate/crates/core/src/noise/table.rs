use std::sync::Arc;

use rayon::prelude::*;

use super::covariance::{c1_truncated, compute_c1, compute_c2, C2Options, TruncatedC2};
use crate::error::{usage, Result};
use crate::hermite::SpectralBasis;

/// How the table entries are computed.
#[derive(Clone, Debug)]
pub enum RenormMethod {
    /// Closed-form mode sums over a finite basis.
    Truncated(Arc<SpectralBasis>),
    /// Quadrature of the untruncated Mehler kernel.
    Exact(C2Options),
    /// All entries zero (switches renormalization off).
    Zero,
}

/// `c¹`, `c²` and `3c¹ − 9c²` sampled on a time grid × point set.
#[derive(Clone, Debug, PartialEq)]
pub struct RenormTable {
    level: u32,
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    combined: Vec<f64>,
}

impl RenormTable {
    pub fn from_parts(
        level: u32,
        times: Vec<f64>,
        points: Vec<Vec<f64>>,
        c1: Vec<f64>,
        c2: Vec<f64>,
    ) -> Result<Self> {
        let cells = times.len() * points.len();
        if c1.len() != cells || c2.len() != cells {
            return Err(usage("renormalization arrays do not match the grid"));
        }
        let combined = c1.iter().zip(&c2).map(|(a, b)| 3.0 * a - 9.0 * b).collect();
        Ok(Self {
            level,
            times,
            points,
            c1,
            c2,
            combined,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn row<'a>(&self, data: &'a [f64], m: usize) -> &'a [f64] {
        let p = self.points.len();
        &data[m * p..(m + 1) * p]
    }

    /// `c¹(t_m, ·)` at every point.
    pub fn c1_row(&self, m: usize) -> &[f64] {
        self.row(&self.c1, m)
    }

    pub fn c2_row(&self, m: usize) -> &[f64] {
        self.row(&self.c2, m)
    }

    pub fn combined_row(&self, m: usize) -> &[f64] {
        self.row(&self.combined, m)
    }

    pub fn c1(&self) -> &[f64] {
        &self.c1
    }

    pub fn c2(&self) -> &[f64] {
        &self.c2
    }

    pub fn combined(&self) -> &[f64] {
        &self.combined
    }

    /// Index of a time sample within `tol` of `t`.
    pub fn time_index(&self, t: f64, tol: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// Checks the table covers a uniform grid `m·dt`, `m ≤ steps`, on
    /// `points` nodes.
    pub fn check_grid(&self, level: u32, dt: f64, steps: usize, points: usize) -> Result<()> {
        if level != self.level {
            return Err(usage(format!(
                "renormalization table is at level {}, run is at level {level}",
                self.level
            )));
        }
        if self.points.len() != points || self.times.len() < steps + 1 {
            return Err(usage("renormalization table does not cover the run grid"));
        }
        for m in 0..=steps {
            if (self.times[m] - m as f64 * dt).abs() > 1e-9 * dt.max(1e-300) {
                return Err(usage(
                    "renormalization table time grid differs from the run",
                ));
            }
        }
        Ok(())
    }
}

/// `build_renorm_table(n, times, points)`.
pub fn build_renorm_table(
    level: u32,
    times: &[f64],
    points: &[Vec<f64>],
    method: &RenormMethod,
) -> Result<RenormTable> {
    let cells = times.len() * points.len();
    let (c1, c2) = match method {
        RenormMethod::Zero => (vec![0.0; cells], vec![0.0; cells]),
        RenormMethod::Truncated(basis) => {
            let mut c1 = Vec::with_capacity(cells);
            for &t in times {
                for x in points {
                    c1.push(c1_truncated(basis, level, t.max(0.0), x));
                }
            }
            let c2 = TruncatedC2::new(basis, level)?.table(basis, times, points);
            (c1, c2)
        }
        RenormMethod::Exact(opts) => {
            let cellv: Vec<(f64, &Vec<f64>)> = times
                .iter()
                .flat_map(|&t| points.iter().map(move |x| (t, x)))
                .collect();
            let vals: Vec<(f64, f64)> = cellv
                .par_iter()
                .map(|&(t, x)| -> Result<(f64, f64)> {
                    Ok((
                        compute_c1(level, t, x)?,
                        compute_c2(level, t, x, opts)?.value,
                    ))
                })
                .collect::<Result<_>>()?;
            vals.into_iter().unzip()
        }
    };
    RenormTable::from_parts(level, times.to_vec(), points.to_vec(), c1, c2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_is_three_c1_minus_nine_c2() {
        let b = SpectralBasis::new(1, 12).unwrap();
        let times: Vec<f64> = (0..5).map(|m| 0.1 * m as f64).collect();
        let points = vec![vec![0.0], vec![0.7]];
        let t =
            build_renorm_table(3, &times, &points, &RenormMethod::Truncated(b.clone())).unwrap();
        for i in 0..t.combined().len() {
            assert_eq!(t.combined()[i], 3.0 * t.c1()[i] - 9.0 * t.c2()[i]);
        }
        assert_eq!(t.c1_row(0), &[0.0, 0.0]);
        assert!(t.c1_row(3)[1] > 0.0 && t.c2_row(3)[1] >= 0.0);
        assert_eq!(t.c1_row(2)[1], c1_truncated(&b, 3, 0.2, &[0.7]));
        assert!(t.check_grid(3, 0.1, 4, 2).is_ok());
        assert!(t.check_grid(4, 0.1, 4, 2).is_err());
    }
}
