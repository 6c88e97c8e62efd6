//! Gaussian mixture fitted by MAP-EM.
//!
//! Priors: a symmetric Dirichlet(alpha) on the weights, and on each covariance an
//! improper inverse-Wishart term `-tr(Psi Sigma^-1) / 2` with `Psi = diag(eps)`,
//! `eps_d = 1e-6 * var(column d)`. The covariance update is then
//! `(scatter + Psi) / N_j`, which keeps every covariance positive definite, and EM
//! never decreases the penalized objective `log-likelihood + log prior`.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{kmeans, CovarianceType};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_RESEEDS: usize = 5;
const MAX_RESTARTS: usize = 5;
const FLOOR_SCALE: f64 = 1e-6;
/// Soft counts below this mark a component as empty.
const MIN_MASS: f64 = 1.0;

#[derive(Debug, Clone)]
pub(crate) struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal: d variances per component. Full: d*d row-major matrix.
    pub covariances: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub log_likelihood: f64,
    /// Penalized objective after each E-step of the final EM run.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeds: usize,
    pub restarts: usize,
}

pub(crate) struct Options {
    pub k: usize,
    pub covariance: CovarianceType,
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub kmeans_restarts: usize,
    pub seed: u64,
}

enum Cov {
    Diag { var: Vec<f64> },
    Full { sigma: DMatrix<f64>, chol: Cholesky<f64, nalgebra::Dyn> },
}

struct Component {
    weight: f64,
    mean: Vec<f64>,
    cov: Cov,
}

impl Component {
    fn log_det(&self) -> f64 {
        match &self.cov {
            Cov::Diag { var } => var.iter().map(|v| v.ln()).sum(),
            Cov::Full { chol, .. } => 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        }
    }

    fn mahalanobis(&self, x: &[f64]) -> f64 {
        match &self.cov {
            Cov::Diag { var } => x
                .iter()
                .zip(&self.mean)
                .zip(var)
                .map(|((x, m), v)| (x - m).powi(2) / v)
                .sum(),
            Cov::Full { chol, .. } => {
                let diff = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
                let y = chol
                    .l()
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor has a positive diagonal");
                y.norm_squared()
            }
        }
    }

    /// `-tr(Psi Sigma^-1) / 2`.
    fn log_prior(&self, eps: &[f64]) -> f64 {
        match &self.cov {
            Cov::Diag { var } => -0.5 * eps.iter().zip(var).map(|(e, v)| e / v).sum::<f64>(),
            Cov::Full { chol, .. } => {
                let inv = chol.inverse();
                -0.5 * eps.iter().enumerate().map(|(d, e)| e * inv[(d, d)]).sum::<f64>()
            }
        }
    }

    fn export(&self) -> Vec<f64> {
        match &self.cov {
            Cov::Diag { var } => var.clone(),
            Cov::Full { sigma, .. } => {
                let d = sigma.nrows();
                (0..d * d).map(|i| sigma[(i / d, i % d)]).collect()
            }
        }
    }
}

fn make_cov(kind: CovarianceType, mut sigma: DMatrix<f64>, eps: &[f64]) -> Cov {
    match kind {
        CovarianceType::Diagonal => Cov::Diag {
            var: sigma.diagonal().iter().copied().collect(),
        },
        CovarianceType::Full => {
            sigma = (&sigma + sigma.transpose()) * 0.5;
            // The update is positive definite in exact arithmetic; guard against rounding.
            let mut bump = 0.0;
            loop {
                let trial = if bump > 0.0 {
                    &sigma + DMatrix::from_diagonal(&DVector::from_iterator(eps.len(), eps.iter().map(|e| e * bump)))
                } else {
                    sigma.clone()
                };
                if let Some(chol) = Cholesky::new(trial.clone()) {
                    return Cov::Full { sigma: trial, chol };
                }
                bump = if bump == 0.0 { 1.0 } else { bump * 10.0 };
            }
        }
    }
}

struct State<'a> {
    m: &'a FeatureMatrix,
    opts: &'a Options,
    eps: Vec<f64>,
    col_var: Vec<f64>,
    comps: Vec<Component>,
}

struct EStep {
    /// Per-row log of the mixture density.
    lse: Vec<f64>,
    /// Row-major n*k log responsibilities.
    log_resp: Vec<f64>,
    objective: f64,
    log_likelihood: f64,
    mass: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(m: &'a FeatureMatrix, opts: &'a Options) -> Self {
        let col_var: Vec<f64> = (0..m.d)
            .map(|j| {
                let c = m.column(j);
                let mu = c.iter().sum::<f64>() / m.n as f64;
                c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m.n as f64
            })
            .collect();
        let eps = col_var
            .iter()
            .map(|&v| FLOOR_SCALE * if v > 0.0 { v } else { 1.0 })
            .collect();
        State {
            m,
            opts,
            eps,
            col_var,
            comps: Vec::new(),
        }
    }

    fn m_step(&mut self, resp: &[f64], mass: &[f64]) {
        let (n, d, k) = (self.m.n, self.m.d, self.opts.k);
        let alpha = self.opts.alpha;
        let denom = n as f64 + k as f64 * (alpha - 1.0);
        self.comps = (0..k)
            .map(|j| {
                let nj = mass[j];
                let mut mean = vec![0.0; d];
                for (i, r) in self.m.rows().enumerate() {
                    let w = resp[i * k + j];
                    if w != 0.0 {
                        for (mu, x) in mean.iter_mut().zip(r) {
                            *mu += w * x;
                        }
                    }
                }
                mean.iter_mut().for_each(|v| *v /= nj);
                let mut sigma = DMatrix::<f64>::zeros(d, d);
                match self.opts.covariance {
                    CovarianceType::Diagonal => {
                        for (i, r) in self.m.rows().enumerate() {
                            let w = resp[i * k + j];
                            for t in 0..d {
                                sigma[(t, t)] += w * (r[t] - mean[t]).powi(2);
                            }
                        }
                    }
                    CovarianceType::Full => {
                        for (i, r) in self.m.rows().enumerate() {
                            let w = resp[i * k + j];
                            if w == 0.0 {
                                continue;
                            }
                            let diff = DVector::from_iterator(d, r.iter().zip(&mean).map(|(a, b)| a - b));
                            sigma.ger(w, &diff, &diff, 1.0);
                        }
                    }
                }
                for t in 0..d {
                    sigma[(t, t)] += self.eps[t];
                }
                sigma /= nj;
                Component {
                    weight: (nj + alpha - 1.0) / denom,
                    mean,
                    cov: make_cov(self.opts.covariance, sigma, &self.eps),
                }
            })
            .collect();
    }

    fn e_step(&self) -> EStep {
        let (n, k) = (self.m.n, self.opts.k);
        let d = self.m.d as f64;
        let consts: Vec<f64> = self
            .comps
            .iter()
            .map(|c| c.weight.ln() - 0.5 * (d * LN_2PI + c.log_det()))
            .collect();
        let mut log_resp = vec![0.0; n * k];
        let mut lse = vec![0.0; n];
        let mut mass = vec![0.0; k];
        for (i, r) in self.m.rows().enumerate() {
            let row = &mut log_resp[i * k..(i + 1) * k];
            for (j, c) in self.comps.iter().enumerate() {
                row[j] = consts[j] - 0.5 * c.mahalanobis(r);
            }
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            lse[i] = s;
            for (j, v) in row.iter_mut().enumerate() {
                *v -= s;
                mass[j] += v.exp();
            }
        }
        let log_likelihood: f64 = lse.iter().sum();
        let prior: f64 = self
            .comps
            .iter()
            .map(|c| (self.opts.alpha - 1.0) * c.weight.ln() + c.log_prior(&self.eps))
            .sum();
        EStep {
            lse,
            log_resp,
            objective: log_likelihood + prior,
            log_likelihood,
            mass,
        }
    }

    /// Moves each listed component onto a distinct worst-explained row.
    fn reseed(&mut self, empty: &[usize], lse: &[f64]) {
        let mut order: Vec<usize> = (0..self.m.n).collect();
        order.sort_by(|&a, &b| lse[a].total_cmp(&lse[b]).then(a.cmp(&b)));
        let k = self.opts.k as f64;
        for (&j, &row) in empty.iter().zip(&order) {
            let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
                self.m.d,
                self.col_var.iter().zip(&self.eps).map(|(v, e)| v + e),
            ));
            self.comps[j] = Component {
                weight: 1.0 / k,
                mean: self.m.row(row).to_vec(),
                cov: make_cov(self.opts.covariance, sigma, &self.eps),
            };
        }
        let total: f64 = self.comps.iter().map(|c| c.weight).sum();
        self.comps.iter_mut().for_each(|c| c.weight /= total);
    }
}

fn argmax_rows(log_resp: &[f64], k: usize) -> Vec<usize> {
    log_resp
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn fit(m: &FeatureMatrix, opts: &Options) -> Result<GmmFit> {
    let (n, k) = (m.n, opts.k);
    for attempt in 0..=MAX_RESTARTS {
        let init = kmeans::fit(m, k, opts.kmeans_restarts, opts.seed, attempt as u64 * 1_000_000);
        let mut st = State::new(m, opts);
        let mut resp = vec![0.0; n * k];
        let mut mass = vec![0.0; k];
        for (i, &a) in init.assignments.iter().enumerate() {
            resp[i * k + a] = 1.0;
            mass[a] += 1.0;
        }
        if mass.iter().any(|&v| v < MIN_MASS) {
            continue;
        }
        st.m_step(&resp, &mass);

        let mut reseeds = 0;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let outcome = loop {
            let mut converged = false;
            let mut e = st.e_step();
            let mut segment_iters = 0;
            loop {
                trace.push(e.objective);
                iterations += 1;
                segment_iters += 1;
                if trace.len() >= 2 {
                    let prev = trace[trace.len() - 2];
                    if (e.objective - prev).abs() / (n as f64) < opts.tol {
                        converged = true;
                        break;
                    }
                }
                if e.mass.iter().any(|&v| v < MIN_MASS) || segment_iters >= opts.max_iter {
                    break;
                }
                let resp: Vec<f64> = e.log_resp.iter().map(|v| v.exp()).collect();
                st.m_step(&resp, &e.mass);
                e = st.e_step();
            }
            let assignments = argmax_rows(&e.log_resp, k);
            let mut counts = vec![0usize; k];
            for &a in &assignments {
                counts[a] += 1;
            }
            let empty: Vec<usize> = (0..k)
                .filter(|&j| counts[j] == 0 || e.mass[j] < MIN_MASS)
                .collect();
            if empty.is_empty() {
                break Some((e, assignments, converged));
            }
            reseeds += 1;
            if reseeds > MAX_RESEEDS {
                break None;
            }
            st.reseed(&empty, &e.lse);
            trace.clear();
        };
        if let Some((e, assignments, converged)) = outcome {
            return Ok(GmmFit {
                weights: st.comps.iter().map(|c| c.weight).collect(),
                means: st.comps.iter().map(|c| c.mean.clone()).collect(),
                covariances: st.comps.iter().map(Component::export).collect(),
                assignments,
                log_likelihood: e.log_likelihood,
                objective_trace: trace,
                iterations,
                converged,
                reseeds,
                restarts: attempt,
            });
        }
    }
    Err(Error::EmFailure {
        k,
        attempts: MAX_RESTARTS + 1,
    })
}
