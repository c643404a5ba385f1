//! Working models: logistic propensity score and Cox proportional hazards
//! with a Breslow baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curve::{CurveKind, StepCurve};
use crate::data::{Covariates, SurvivalSample};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
/// Coefficient norm, on the column-scaled parametrization, beyond which a
/// fit is declared separated.
pub const SEPARATION_BOUND: f64 = 30.0;
const MAX_HALVINGS: usize = 20;

/// The score is a sum over subjects, so on large samples it can sit just
/// above the tolerance at rounding level; a negligible Newton step with a
/// small score is accepted as converged. Both are on the internal
/// standardized scale so covariate units don't matter.
fn stalled(step: f64, scaled_score: f64) -> bool {
    step < 1e-8 && scaled_score < 1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub theta: Vec<f64>,
    /// Inverse observed information at `theta`.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    /// Fitted probability for a design row (intercept included).
    pub fn predict(&self, design_row: &[f64]) -> f64 {
        expit(dot(&self.theta, design_row))
    }

    /// Per-subject influence `n * Cov * (y_i - p_i) x_i`, so that
    /// `sqrt(n)(theta_hat - theta)` is approximately `n^{-1/2} sum_i phi_i`.
    pub fn influence(&self, design: &Covariates, response: &[bool]) -> Vec<Vec<f64>> {
        let n = design.nrows() as f64;
        design
            .rows()
            .zip(response)
            .map(|(x, &y)| {
                let r = f64::from(u8::from(y)) - self.predict(x);
                self.covariance.iter().map(|row| n * r * dot(row, x)).collect()
            })
            .collect()
    }
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn to_matrix(design: &Covariates) -> DMatrix<f64> {
    DMatrix::from_row_iterator(design.nrows(), design.ncols(), design.rows().flatten().copied())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn full_rank(x: &DMatrix<f64>) -> bool {
    if x.ncols() == 0 {
        return true;
    }
    let sv = x.clone().singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > 1e-10 * max
}

/// Log-likelihood of the logistic model.
pub fn logistic_loglik(design: &Covariates, response: &[bool], theta: &[f64]) -> f64 {
    design
        .rows()
        .zip(response)
        .map(|(x, &y)| {
            let eta = dot(theta, x);
            if y {
                eta - log1pexp(eta)
            } else {
                -log1pexp(eta)
            }
        })
        .sum()
}

/// Score vector `X^T (y - p)` of the logistic model.
pub fn logistic_score(design: &Covariates, response: &[bool], theta: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; design.ncols()];
    for (x, &y) in design.rows().zip(response) {
        let r = f64::from(u8::from(y)) - expit(dot(theta, x));
        for (uj, xj) in u.iter_mut().zip(x) {
            *uj += r * xj;
        }
    }
    u
}

fn logistic_information(x: &DMatrix<f64>, theta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * theta;
    let mut xw = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let p = expit(*e);
        xw.row_mut(i).scale_mut(p * (1.0 - p));
    }
    x.transpose() * xw
}

/// Newton-Raphson maximum likelihood for `logit P(y = 1) = theta^T x`.
///
/// Columns are scaled by their root-mean-square internally; the returned
/// coefficients and covariance are on the original scale.
pub fn fit_logistic(design: &Covariates, response: &[bool]) -> Result<LogisticFit> {
    let (n, q) = (design.nrows(), design.ncols());
    if response.len() != n {
        return Err(Error::Validation("design and response lengths differ".into()));
    }
    if n <= q {
        return Err(Error::Validation(format!(
            "logistic fit needs more than {q} rows, got {n}"
        )));
    }
    let raw = to_matrix(design);
    let scale: Vec<f64> = (0..q)
        .map(|j| {
            let ms = raw.column(j).iter().map(|v| v * v).sum::<f64>() / n as f64;
            if ms > 0.0 {
                ms.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut x = raw.clone();
    for (j, s) in scale.iter().enumerate() {
        x.column_mut(j).unscale_mut(*s);
    }
    if !full_rank(&x) {
        return Err(Error::SingularDesign);
    }
    let y = DVector::from_iterator(n, response.iter().map(|&b| f64::from(u8::from(b))));
    let loglik = |th: &DVector<f64>| -> f64 {
        (&x * th)
            .iter()
            .zip(y.iter())
            .map(|(e, yi)| yi * e - log1pexp(*e))
            .sum()
    };

    let mut theta = DVector::zeros(q);
    let mut ll = loglik(&theta);
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm = f64::INFINITY;
    while iterations <= MAX_ITERATIONS {
        let eta = &x * &theta;
        let resid = DVector::from_iterator(n, eta.iter().zip(y.iter()).map(|(e, yi)| yi - expit(*e)));
        let score = x.transpose() * &resid;
        // convergence is judged on the original-scale score
        score_norm = score.iter().zip(&scale).map(|(u, s)| (u * s).abs()).fold(0.0, f64::max);
        if score_norm < TOLERANCE {
            converged = true;
            break;
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        let info = logistic_information(&x, &theta);
        let step = info.cholesky().ok_or(Error::SingularDesign)?.solve(&score);
        if stalled(step.amax(), score.amax()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut cand = &theta + &step;
        let mut cand_ll = loglik(&cand);
        for _ in 0..MAX_HALVINGS {
            if cand_ll >= ll {
                break;
            }
            t *= 0.5;
            cand = &theta + &step * t;
            cand_ll = loglik(&cand);
        }
        theta = cand;
        ll = cand_ll;
        iterations += 1;
        if theta.norm() > SEPARATION_BOUND {
            return Err(Error::Separation { model: "logistic" });
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            model: "logistic",
            score_norm,
        });
    }
    let p: Vec<f64> = (&x * &theta).iter().map(|e| expit(*e)).collect();
    if p.iter().zip(y.iter()).all(|(pi, yi)| (pi - yi).abs() < 1e-6) {
        return Err(Error::Separation { model: "logistic" });
    }
    let theta_raw = DVector::from_iterator(q, theta.iter().zip(&scale).map(|(t, s)| t / s));
    let info = logistic_information(&raw, &theta_raw);
    let cov = info.try_inverse().ok_or(Error::SingularDesign)?;
    Ok(LogisticFit {
        theta: theta_raw.iter().copied().collect(),
        covariance: matrix_rows(&cov),
        converged,
        iterations,
    })
}

/// Cox design `nu = (X, A, A X)` for each subject.
pub fn cox_design(sample: &SurvivalSample) -> Covariates {
    let p = sample.n_covariates();
    let mut data = Vec::with_capacity(sample.len() * (2 * p + 1));
    for (x, &a) in sample.covariates().rows().zip(sample.treatment()) {
        push_nu(&mut data, x, a);
    }
    Covariates::new(sample.len(), 2 * p + 1, data).expect("consistent design shape")
}

fn push_nu(out: &mut Vec<f64>, x: &[f64], a: bool) {
    let af = f64::from(u8::from(a));
    out.extend_from_slice(x);
    out.push(af);
    out.extend(x.iter().map(|v| af * v));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Coefficients over the design passed to the fit; for [`fit_cox`] the
    /// layout is `(X, A, A X)`.
    pub beta: Vec<f64>,
    /// Breslow cumulative baseline hazard for the uncentered design.
    pub baseline: StepCurve,
    /// Inverse observed information at `beta` (zero rows for fixed columns).
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    /// Design columns without variation; their coefficients are fixed at 0.
    pub fixed_columns: Vec<usize>,
    n_covariates: usize,
}

impl CoxFit {
    /// Number of covariates `p` behind the `(X, A, A X)` layout.
    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn linear_predictor(&self, a: bool, x: &[f64]) -> f64 {
        linear_predictor_nu(&self.beta, a, x)
    }

    /// `exp(-Lambda0(s) exp(beta^T nu(a, x)))`.
    pub fn predict_survival(&self, s: f64, a: bool, x: &[f64]) -> f64 {
        (-self.baseline.at(s) * self.linear_predictor(a, x).exp()).exp()
    }

    /// Increment `dLambda_T(s | a, x) = exp(beta^T nu) dLambda0(s)`.
    pub fn hazard_increment(&self, s: f64, a: bool, x: &[f64]) -> f64 {
        self.linear_predictor(a, x).exp() * self.baseline.jump_at(s)
    }

    /// Influence functions of `beta` (n x q) and of each Breslow jump
    /// (K x n), in the scaling `sqrt(n)(est - true) ~ n^{-1/2} sum_i phi_i`.
    pub fn influence(&self, time: &[f64], event: &[bool], design: &Covariates) -> CoxInfluence {
        let n = time.len();
        let q = self.beta.len();
        let nf = n as f64;
        let risk: Vec<f64> = design.rows().map(|z| dot(&self.beta, z).exp()).collect();
        let times = self.baseline.jump_times();
        let cum = self.baseline.values();
        let jumps: Vec<f64> = cum
            .iter()
            .enumerate()
            .map(|(k, v)| if k == 0 { *v } else { v - cum[k - 1] })
            .collect();
        let k_len = times.len();

        // S0 and S1 at each jump time via a descending sweep.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let mut s0 = vec![0.0; k_len];
        let mut s1 = vec![vec![0.0; q]; k_len];
        let (mut acc0, mut acc1) = (0.0, vec![0.0; q]);
        let mut pos = 0;
        for k in (0..k_len).rev() {
            while pos < n && time[order[pos]] >= times[k] {
                let i = order[pos];
                acc0 += risk[i];
                for (a, z) in acc1.iter_mut().zip(design.row(i)) {
                    *a += risk[i] * z;
                }
                pos += 1;
            }
            s0[k] = acc0;
            s1[k] = acc1.clone();
        }
        let ebar: Vec<Vec<f64>> = s1
            .iter()
            .zip(&s0)
            .map(|(v, d)| v.iter().map(|x| x / d).collect())
            .collect();

        let mut beta_inf = Vec::with_capacity(n);
        for i in 0..n {
            let z = design.row(i);
            let mut u = vec![0.0; q];
            for k in 0..k_len {
                if times[k] > time[i] {
                    break;
                }
                let dm = f64::from(u8::from(event[i] && times[k] == time[i])) - risk[i] * jumps[k];
                for j in 0..q {
                    u[j] += (z[j] - ebar[k][j]) * dm;
                }
            }
            let phi: Vec<f64> = self.covariance.iter().map(|row| nf * dot(row, &u)).collect();
            beta_inf.push(phi);
        }
        let mut jump_inf = vec![vec![0.0; n]; k_len];
        for k in 0..k_len {
            for i in 0..n {
                let dm = if time[i] >= times[k] {
                    f64::from(u8::from(event[i] && times[k] == time[i])) - risk[i] * jumps[k]
                } else {
                    0.0
                };
                jump_inf[k][i] = nf * dm / s0[k] - jumps[k] * dot(&ebar[k], &beta_inf[i]);
            }
        }
        CoxInfluence {
            beta: beta_inf,
            jumps: jump_inf,
        }
    }
}

pub(crate) fn linear_predictor_nu(beta: &[f64], a: bool, x: &[f64]) -> f64 {
    let p = x.len();
    debug_assert_eq!(beta.len(), 2 * p + 1);
    let mut lp = dot(&beta[..p], x);
    if a {
        lp += beta[p] + dot(&beta[p + 1..], x);
    }
    lp
}

#[derive(Debug, Clone)]
pub struct CoxInfluence {
    pub beta: Vec<Vec<f64>>,
    pub jumps: Vec<Vec<f64>>,
}

/// Breslow log partial likelihood.
pub fn cox_log_partial_likelihood(time: &[f64], event: &[bool], design: &Covariates, beta: &[f64]) -> f64 {
    let lp: Vec<f64> = design.rows().map(|z| dot(beta, z)).collect();
    let mut ll = 0.0;
    for_each_event_group(time, event, |group, risk_set| {
        let s0: f64 = risk_set.iter().map(|&j| lp[j].exp()).sum();
        for &i in group {
            ll += lp[i] - s0.ln();
        }
    });
    ll
}

/// Score of the Breslow partial likelihood.
pub fn cox_score(time: &[f64], event: &[bool], design: &Covariates, beta: &[f64]) -> Vec<f64> {
    let q = design.ncols();
    let lp: Vec<f64> = design.rows().map(|z| dot(beta, z)).collect();
    let mut u = vec![0.0; q];
    for_each_event_group(time, event, |group, risk_set| {
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; q];
        for &j in risk_set {
            let r = lp[j].exp();
            s0 += r;
            for (a, z) in s1.iter_mut().zip(design.row(j)) {
                *a += r * z;
            }
        }
        for &i in group {
            for (k, z) in design.row(i).iter().enumerate() {
                u[k] += z - s1[k] / s0;
            }
        }
    });
    u
}

/// Straightforward O(n^2) visitor over (events at a time, risk set there).
fn for_each_event_group(time: &[f64], event: &[bool], mut f: impl FnMut(&[usize], &[usize])) {
    let mut times: Vec<f64> = time.iter().zip(event).filter(|(_, &d)| d).map(|(t, _)| *t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for t in times {
        let group: Vec<usize> = (0..time.len()).filter(|&i| event[i] && time[i] == t).collect();
        let risk: Vec<usize> = (0..time.len()).filter(|&i| time[i] >= t).collect();
        f(&group, &risk);
    }
}

/// Cox model over `(X, A, A X)` for a single-stage sample.
pub fn fit_cox(sample: &SurvivalSample) -> Result<CoxFit> {
    let design = cox_design(sample);
    let mut fit = fit_cox_design(sample.time(), sample.event(), &design)?;
    fit.n_covariates = sample.n_covariates();
    Ok(fit)
}

struct CoxWork {
    order: Vec<usize>,
    /// `(start, end, n_events)` of tied blocks in `order` (descending time).
    blocks: Vec<(usize, usize, usize)>,
}

impl CoxWork {
    fn new(time: &[f64], event: &[bool]) -> Self {
        let n = time.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
        let mut blocks = Vec::new();
        let mut s = 0;
        while s < n {
            let mut e = s;
            let mut d = 0;
            while e < n && time[order[e]] == time[order[s]] {
                d += usize::from(event[order[e]]);
                e += 1;
            }
            blocks.push((s, e, d));
            s = e;
        }
        Self { order, blocks }
    }

    /// Log partial likelihood, score and information on centered columns.
    fn evaluate(&self, z: &DMatrix<f64>, event: &[bool], beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let q = z.ncols();
        let lp = z * beta;
        let shift = lp.max();
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(q);
        let mut s2 = DMatrix::zeros(q, q);
        let mut ll = 0.0;
        let mut u = DVector::zeros(q);
        let mut info = DMatrix::zeros(q, q);
        for &(start, end, d) in &self.blocks {
            for &i in &self.order[start..end] {
                let r = (lp[i] - shift).exp();
                let zi = z.row(i).transpose();
                s0 += r;
                s1.axpy(r, &zi, 1.0);
                s2.ger(r, &zi, &zi, 1.0);
            }
            if d == 0 {
                continue;
            }
            let df = d as f64;
            let mean = &s1 / s0;
            for &i in &self.order[start..end] {
                if event[i] {
                    ll += lp[i];
                    u += z.row(i).transpose();
                }
            }
            ll -= df * (s0.ln() + shift);
            u.axpy(-df, &mean, 1.0);
            let cov = &s2 / s0 - &mean * mean.transpose();
            info += cov * df;
        }
        (ll, u, info)
    }
}

/// Newton-Raphson Cox fit on an arbitrary design (Breslow ties).
///
/// Columns without variation are held at zero. Columns are centered and
/// scaled internally; coefficients are reported on the original scale.
pub fn fit_cox_design(time: &[f64], event: &[bool], design: &Covariates) -> Result<CoxFit> {
    let n = time.len();
    if event.len() != n || design.nrows() != n {
        return Err(Error::Validation("time, event and design lengths differ".into()));
    }
    if !event.iter().any(|&d| d) {
        return Err(Error::Validation("Cox fit needs at least one event".into()));
    }
    let q_all = design.ncols();
    let raw = to_matrix(design);
    let mut active = Vec::new();
    let mut fixed = Vec::new();
    let mut center = Vec::new();
    let mut scale = Vec::new();
    for j in 0..q_all {
        let col = raw.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 1e-12 * mean.abs().max(1.0) {
            active.push(j);
            center.push(mean);
            scale.push(sd);
        } else {
            fixed.push(j);
        }
    }
    let q = active.len();
    let mut z = DMatrix::zeros(n, q);
    for (c, &j) in active.iter().enumerate() {
        for i in 0..n {
            z[(i, c)] = (raw[(i, j)] - center[c]) / scale[c];
        }
    }
    if !full_rank(&z) {
        return Err(Error::SingularDesign);
    }
    let work = CoxWork::new(time, event);
    let mut beta = DVector::zeros(q);
    let (mut ll, mut u, mut info) = work.evaluate(&z, event, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut score_norm;
    loop {
        score_norm = u.iter().zip(&scale).map(|(v, s)| (v * s).abs()).fold(0.0, f64::max);
        if score_norm < TOLERANCE {
            converged = true;
            break;
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&u),
            None => return Err(Error::Separation { model: "cox" }),
        };
        if stalled(step.amax(), u.amax()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut cand = &beta + &step;
        let mut eval = work.evaluate(&z, event, &cand);
        for _ in 0..MAX_HALVINGS {
            if eval.0 >= ll {
                break;
            }
            t *= 0.5;
            cand = &beta + &step * t;
            eval = work.evaluate(&z, event, &cand);
        }
        beta = cand;
        (ll, u, info) = eval;
        iterations += 1;
        if beta.norm() > SEPARATION_BOUND {
            return Err(Error::Separation { model: "cox" });
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            model: "cox",
            score_norm,
        });
    }

    let mut beta_raw = vec![0.0; q_all];
    for (c, &j) in active.iter().enumerate() {
        beta_raw[j] = beta[c] / scale[c];
    }
    let mut covariance = vec![vec![0.0; q_all]; q_all];
    let inv = info.try_inverse().ok_or(Error::Separation { model: "cox" })?;
    for (a, &ja) in active.iter().enumerate() {
        for (b, &jb) in active.iter().enumerate() {
            covariance[ja][jb] = inv[(a, b)] / (scale[a] * scale[b]);
        }
    }
    let baseline = breslow(time, design, &beta_raw, &work);
    Ok(CoxFit {
        beta: beta_raw,
        baseline,
        covariance,
        converged,
        iterations,
        fixed_columns: fixed,
        n_covariates: q_all.saturating_sub(1) / 2,
    })
}

fn breslow(time: &[f64], design: &Covariates, beta: &[f64], work: &CoxWork) -> StepCurve {
    let lp: Vec<f64> = design.rows().map(|z| dot(beta, z)).collect();
    let shift = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s0 = 0.0;
    let mut desc = Vec::new();
    for &(start, end, d) in &work.blocks {
        for &i in &work.order[start..end] {
            s0 += (lp[i] - shift).exp();
        }
        if d > 0 {
            let t = time[work.order[start]];
            desc.push((t, d as f64 / s0 * (-shift).exp()));
        }
    }
    let mut times = Vec::with_capacity(desc.len());
    let mut values = Vec::with_capacity(desc.len());
    let mut cum = 0.0;
    for (t, j) in desc.into_iter().rev() {
        cum += j;
        times.push(t);
        values.push(cum);
    }
    StepCurve::from_parts(CurveKind::CumulativeHazard, times, values, None, false)
}
