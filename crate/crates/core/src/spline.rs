//! B-spline bases with knots at empirical quantiles, plus the first-difference
//! smoothness penalty used by P-splines.
//!
//! `order` is the spline order (polynomial degree + 1), so a cubic basis has
//! `order = 4` and `num_basis = inner_knots + order`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{GamError, Result};

/// Per-feature B-spline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub order: usize,
    pub num_basis: usize,
    pub inner_knots: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

/// Quantile by linear interpolation of order statistics of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

impl BasisSpec {
    /// Place `num_basis - order` inner knots at the empirical quantiles
    /// `k / (K + 1)` of `x_col`, with the boundary at the sample range.
    ///
    /// Tied quantiles collapse to one knot, which lowers `num_basis` for this
    /// feature; a warning is logged when that happens.
    pub fn from_sample(x_col: &[f64], order: usize, num_basis: usize) -> Result<Self> {
        Self::from_sample_for_feature(x_col, order, num_basis, 0)
    }

    pub(crate) fn from_sample_for_feature(
        x_col: &[f64],
        order: usize,
        num_basis: usize,
        feature: usize,
    ) -> Result<Self> {
        if order < 1 {
            return Err(GamError::config("spline order must be at least 1"));
        }
        if num_basis <= order {
            return Err(GamError::config(format!(
                "num_basis ({num_basis}) must exceed the spline order ({order})"
            )));
        }
        if let Some(row) = x_col.iter().position(|v| !v.is_finite()) {
            return Err(GamError::Data {
                row,
                column: format!("x{feature}"),
                message: "non-finite value".into(),
            });
        }
        let mut sorted = x_col.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < num_basis {
            return Err(GamError::DegenerateFeature {
                feature,
                distinct: distinct.len(),
                required: num_basis,
            });
        }

        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let n_inner = num_basis - order;
        let mut inner_knots: Vec<f64> = (1..=n_inner)
            .map(|k| quantile_sorted(&sorted, k as f64 / (n_inner + 1) as f64))
            .filter(|&k| k > lo && k < hi)
            .collect();
        inner_knots.dedup();
        if inner_knots.len() < n_inner {
            log::warn!(
                "feature {feature}: {} of {n_inner} quantile knots collapsed on ties; using {} basis functions",
                n_inner - inner_knots.len(),
                inner_knots.len() + order
            );
        }
        Ok(BasisSpec {
            order,
            num_basis: inner_knots.len() + order,
            inner_knots,
            lo,
            hi,
        })
    }

    /// Boundary knots repeated `order` times around the inner knots.
    pub fn padded_knots(&self) -> Vec<f64> {
        let mut knots = Vec::with_capacity(self.inner_knots.len() + 2 * self.order);
        knots.extend(std::iter::repeat_n(self.lo, self.order));
        knots.extend_from_slice(&self.inner_knots);
        knots.extend(std::iter::repeat_n(self.hi, self.order));
        knots
    }

    /// Evaluate all `num_basis` functions at `x`; `x` is clamped to `[lo, hi]`.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis];
        self.evaluate_into(x, &mut out);
        out
    }

    pub fn evaluate_into(&self, x: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.num_basis);
        out.fill(0.0);
        let knots = self.padded_knots();
        let x = x.clamp(self.lo, self.hi);
        let degree = self.order - 1;
        let span = self.find_span(&knots, x);

        // Triangular Cox-de Boor scheme over the `order` nonzero functions.
        let mut vals = vec![0.0; self.order];
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        vals[0] = 1.0;
        for j in 1..=degree {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        let first = span - degree;
        out[first..first + self.order].copy_from_slice(&vals);
    }

    /// Index `i` with `knots[i] <= x < knots[i+1]`, restricted to the valid
    /// span range; `x == hi` maps to the last span.
    fn find_span(&self, knots: &[f64], x: f64) -> usize {
        let degree = self.order - 1;
        let last = self.num_basis - 1;
        if x >= knots[last + 1] {
            return last;
        }
        // knots[degree..=last+1] is strictly increasing.
        let mut low = degree;
        let mut high = last + 1;
        while high - low > 1 {
            let mid = (low + high) / 2;
            if x < knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// Trapezoidal approximation of the L2 norm of `sum_k beta_k phi_k` on
    /// `[lo, hi]` using `grid_size` points.
    pub fn function_norm(&self, beta: &[f64], grid_size: usize) -> f64 {
        self.component_norm(beta, None, grid_size)
    }

    /// Like [`function_norm`](Self::function_norm) but with each basis
    /// function shifted by `center` first, i.e. the norm of the centered
    /// component actually used in a fitted model.
    pub fn component_norm(&self, beta: &[f64], center: Option<&[f64]>, grid_size: usize) -> f64 {
        assert_eq!(beta.len(), self.num_basis);
        debug_assert!(grid_size >= 100);
        let grid_size = grid_size.max(2);
        let offset: f64 = center
            .map(|c| c.iter().zip(beta).map(|(c, b)| c * b).sum())
            .unwrap_or(0.0);
        let h = (self.hi - self.lo) / (grid_size - 1) as f64;
        let mut phi = vec![0.0; self.num_basis];
        let mut integral = 0.0;
        for g in 0..grid_size {
            let x = if g + 1 == grid_size {
                self.hi
            } else {
                self.lo + g as f64 * h
            };
            self.evaluate_into(x, &mut phi);
            let f: f64 = phi.iter().zip(beta).map(|(p, b)| p * b).sum::<f64>() - offset;
            let w = if g == 0 || g + 1 == grid_size {
                0.5
            } else {
                1.0
            };
            integral += w * f * f;
        }
        (integral * h).sqrt()
    }
}

/// `D = R^T R` for the first-difference operator `R`, together with its
/// eigendecomposition (used by the smoothed group update).
#[derive(Debug, Clone)]
pub struct DiffPenaltyMatrix {
    pub entries: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl DiffPenaltyMatrix {
    pub fn new(m: usize) -> Self {
        let mut entries = DMatrix::zeros(m, m);
        for k in 0..m.saturating_sub(1) {
            entries[(k, k)] += 1.0;
            entries[(k + 1, k + 1)] += 1.0;
            entries[(k, k + 1)] -= 1.0;
            entries[(k + 1, k)] -= 1.0;
        }
        let eig = SymmetricEigen::new(entries.clone());
        let eigenvalues = eig.eigenvalues.iter().map(|v: &f64| v.max(0.0)).collect();
        DiffPenaltyMatrix {
            entries,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `beta^T D beta`, evaluated as the sum of squared consecutive differences.
    pub fn quad_form(&self, beta: &[f64]) -> f64 {
        beta.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
    }

    /// `D beta`.
    pub fn apply(&self, beta: &[f64]) -> Vec<f64> {
        let m = beta.len();
        (0..m)
            .map(|k| {
                let mut v = 0.0;
                if k > 0 {
                    v += beta[k] - beta[k - 1];
                }
                if k + 1 < m {
                    v += beta[k] - beta[k + 1];
                }
                v
            })
            .collect()
    }
}
