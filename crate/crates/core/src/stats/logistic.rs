//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// Coefficients beyond this size are treated as diverging toward infinity.
pub const SEPARATION_BOUND: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient exceeded the separation bound: the data are (quasi-)separated
    /// and the likelihood has no finite maximizer.
    pub separation: bool,
}

impl LogisticFit {
    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi == 1 { -softplus(-e) } else { -softplus(e) })
        .sum()
}

/// Modified Gram-Schmidt; returns the first column that lies in the span of the
/// earlier ones.
fn dependent_column(x: &DMatrix<f64>) -> Option<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let scale = col.norm();
        let mut v = col;
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let rest = v.norm();
        if scale == 0.0 || rest <= 1e-10 * scale.max(1.0) {
            return Some(j);
        }
        basis.push(v / rest);
    }
    None
}

/// Fits `P(y = 1) = logistic(X beta)`. `rows` must include the intercept column;
/// `names` labels columns in error messages.
///
/// Starts at zero, takes Newton steps halved until the likelihood does not drop,
/// and stops when the gradient norm falls below 1e-8 or after 100 iterations.
pub fn fit_logistic(rows: &[Vec<f64>], names: &[String], y: &[u8]) -> Result<LogisticFit> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if y.len() != n {
        return Err(Error::invalid("outcome", "outcome length differs from design rows"));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass(n));
    }
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if let Some(column) = dependent_column(&x) {
        return Err(Error::RankDeficient {
            column,
            name: names.get(column).cloned().unwrap_or_else(|| format!("x{column}")),
        });
    }
    let yv = DVector::from_iterator(n, y.iter().map(|&v| f64::from(v)));
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(&x, y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let eta = &x * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = x.transpose() * (&yv - &mu);
        if grad.norm() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let w = mu.map(|m| m * (1.0 - m));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let hess = x.transpose() * xw;
        let Some(chol) = Cholesky::new(hess) else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let cand_ll = log_likelihood(&x, y, &cand);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let separation = beta.iter().any(|b| b.abs() > SEPARATION_BOUND);
    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        log_likelihood: ll,
        iterations,
        converged: converged && !separation,
        separation,
    })
}
