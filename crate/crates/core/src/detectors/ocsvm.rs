//! One-class SVM with an RBF kernel, solved by sequential minimal
//! optimisation with second-order working-set selection.
//!
//! The solver works on `beta = nu * n * alpha`, where `0 <= beta_i <= 1` and
//! `sum(beta) = nu * n`; the stored duals are rescaled back so that
//! `0 <= alpha_i <= 1 / (nu * n)` and `sum(alpha) = 1`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::FeatureMatrix;
use crate::error::{Error, Result};

/// KKT tolerance, measured on the gradient in `alpha` units.
pub const KKT_TOLERANCE: f64 = 1e-6;
const TAU: f64 = 1e-12;
const CACHE_BYTES: usize = 256 << 20;

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d).exp()
}

/// `1 / (n_features * var(X))` over all cells; 1 for constant data.
pub fn scale_gamma(x: &FeatureMatrix) -> f64 {
    let v = x.values();
    if v.is_empty() {
        return 1.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / v.len() as f64;
    if var > 0.0 {
        1.0 / (x.n_cols() as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub n_cols: usize,
    /// Rows with non-zero dual coefficient, row-major.
    pub support_vectors: Vec<f64>,
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub n_train: usize,
    pub iterations: usize,
}

struct KernelRows<'a> {
    x: &'a [f64],
    d: usize,
    n: usize,
    gamma: f64,
    rows: Vec<Option<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [f64], d: usize, gamma: f64) -> Self {
        let n = x.len().checked_div(d).unwrap_or(0);
        let capacity = (CACHE_BYTES / (8 * n.max(1))).max(2);
        Self {
            x,
            d,
            n,
            gamma,
            rows: vec![None; n],
            order: VecDeque::new(),
            capacity,
        }
    }

    fn compute(&self, i: usize) -> Vec<f64> {
        let xi = &self.x[i * self.d..(i + 1) * self.d];
        (0..self.n)
            .into_par_iter()
            .map(|j| rbf(xi, &self.x[j * self.d..(j + 1) * self.d], self.gamma))
            .collect()
    }

    fn ensure(&mut self, i: usize) {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                if let Some(old) = self.order.pop_front() {
                    self.rows[old] = None;
                }
            }
            self.rows[i] = Some(self.compute(i));
            self.order.push_back(i);
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        self.rows[i].as_deref().expect("kernel row ensured")
    }
}

pub fn ocsvm_fit(x: &FeatureMatrix, nu: f64, gamma: Option<f64>) -> Result<OcsvmModel> {
    let n = x.n_rows();
    let d = x.n_cols();
    if n == 0 {
        return Err(Error::InvalidArgument("one-class SVM needs training rows".into()));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Config(format!("nu {nu} outside (0, 1]")));
    }
    let gamma = gamma.unwrap_or_else(|| scale_gamma(x));
    let data = x.values();
    let total = nu * n as f64;

    // Feasible start: the first floor(nu n) coefficients at the bound, the
    // remainder on the next one.
    let mut beta = vec![0.0; n];
    let full = (total.floor() as usize).min(n);
    beta[..full].iter_mut().for_each(|b| *b = 1.0);
    if full < n {
        beta[full] = total - full as f64;
    }

    let mut kernel = KernelRows::new(data, d, gamma);
    let mut grad = vec![0.0; n];
    for (i, &b) in beta.iter().enumerate() {
        if b > 0.0 {
            let row = kernel.compute(i);
            for (g, k) in grad.iter_mut().zip(&row) {
                *g += b * k;
            }
        }
    }

    let max_iter = (100 * n).max(10_000_000);
    let tol = KKT_TOLERANCE * total;
    let mut iterations = 0;
    loop {
        // i: steepest feasible ascent among coefficients below the bound.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if beta[t] < 1.0 && -grad[t] > gmax {
                gmax = -grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        for t in 0..n {
            if beta[t] > 0.0 {
                gmax2 = gmax2.max(grad[t]);
            }
        }
        let residual = gmax + gmax2;
        if residual < tol || i_sel == usize::MAX {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: residual / total,
            });
        }
        iterations += 1;

        let i = i_sel;
        kernel.ensure(i);
        let qi = kernel.row(i);
        // j: largest second-order decrease among coefficients above zero.
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if beta[t] > 0.0 {
                let b = gmax + grad[t];
                if b > 0.0 {
                    let a = (2.0 - 2.0 * qi[t]).max(TAU);
                    let obj = -(b * b) / a;
                    if obj < best {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if j_sel == usize::MAX {
            break;
        }
        let j = j_sel;
        kernel.ensure(j);

        let qij = kernel.row(i)[j];
        let quad = (2.0 - 2.0 * qij).max(TAU);
        let delta = (grad[i] - grad[j]) / quad;
        let sum = beta[i] + beta[j];
        let (old_i, old_j) = (beta[i], beta[j]);
        let mut bi = old_i - delta;
        let mut bj = old_j + delta;
        if sum > 1.0 {
            if bi > 1.0 {
                bi = 1.0;
                bj = sum - 1.0;
            }
        } else if bj < 0.0 {
            bj = 0.0;
            bi = sum;
        }
        if sum > 1.0 {
            if bj > 1.0 {
                bj = 1.0;
                bi = sum - 1.0;
            }
        } else if bi < 0.0 {
            bi = 0.0;
            bj = sum;
        }
        beta[i] = bi;
        beta[j] = bj;
        let (di, dj) = (bi - old_i, bj - old_j);
        let (qi, qj) = (kernel.row(i), kernel.row(j));
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    // Offset: mean gradient over free coefficients, else the bound midpoint.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        if beta[t] >= 1.0 {
            lb = lb.max(grad[t]);
        } else if beta[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            free_sum += grad[t];
            free += 1;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if beta[t] > 0.0 {
            support_vectors.extend_from_slice(&data[t * d..(t + 1) * d]);
            dual_coef.push(beta[t] / total);
        }
    }
    Ok(OcsvmModel {
        n_cols: d,
        support_vectors,
        dual_coef,
        rho: rho / total,
        gamma,
        n_train: n,
        iterations,
    })
}

impl OcsvmModel {
    /// `sum_i alpha_i K(x_i, x) - rho`; positive inside the learned support.
    pub fn decision(&self, row: &[f64]) -> f64 {
        let d = self.n_cols;
        self.dual_coef
            .iter()
            .enumerate()
            .map(|(i, a)| a * rbf(&self.support_vectors[i * d..(i + 1) * d], row, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    /// Anomaly score `rho - sum_i alpha_i K(x_i, x)`; flagged when positive.
    pub fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_cols {
            return Err(Error::InvalidArgument(format!(
                "expected {} columns, got {}",
                self.n_cols,
                x.n_cols()
            )));
        }
        let rows: Vec<&[f64]> = x.rows().collect();
        Ok(rows.par_iter().map(|r| -self.decision(r)).collect())
    }

    pub fn n_support(&self) -> usize {
        self.dual_coef.len()
    }
}
