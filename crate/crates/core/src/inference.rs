//! Standard errors and intervals for estimated regime values: plug-in
//! influence functions and the nonparametric bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analysis::{CensorModel, NuisanceSpec, PropensityFit, SingleStageFit, TwoStageFit, TwoStagePropensity};
use crate::data::{SurvivalSample, TwoStageSample};
use crate::error::{Error, Result};
use crate::estimators::km_factor;
use crate::models::{cox_design, linear_predictor_nu};
use crate::optimize::{derive_seed, maximize_value, LinearSpace, SearchConfig, TwoStageSpace};
use crate::regime::{
    consistency_weight, CensorLimit, Functional, LinearRegime, SmoothingSpec, TwoStageRegime, ValueEstimator,
};

/// Relative step of the central differences.
const FD_STEP: f64 = 1e-5;
/// Share of failed bootstrap replicates tolerated.
const MAX_FAILED_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    Plugin,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub value: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub method: InferenceMethod,
    pub level: f64,
    pub replicates: Option<usize>,
}

impl InferenceResult {
    pub fn covers(&self, target: f64) -> bool {
        self.ci_lower <= target && target <= self.ci_upper
    }
}

/// Two-sided standard-normal quantile for `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

pub fn wald_interval(value: f64, se: f64, level: f64) -> InferenceResult {
    let z = normal_quantile(level);
    InferenceResult {
        value,
        se,
        ci_lower: value - z * se,
        ci_upper: value + z * se,
        method: InferenceMethod::Plugin,
        level,
        replicates: None,
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation("confidence level must be in (0, 1)".into()))
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
fn quantile_sorted(x: &[f64], p: f64) -> f64 {
    let h = (x.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    x[lo] + (h - lo as f64) * (x[hi] - x[lo])
}

fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Plug-in estimate of `S(t)` for a fixed regime.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginEstimate {
    pub value: f64,
    pub se: f64,
    /// Per-subject influence of the value: `S_hat - S ~ mean(influence)`.
    pub influence: Vec<f64>,
}

impl PluginEstimate {
    fn from_hazard_influence(value: f64, zeta: Vec<f64>) -> Self {
        let n = zeta.len() as f64;
        let influence: Vec<f64> = zeta.into_iter().map(|z| -value * z).collect();
        let se = (influence.iter().map(|v| v * v).sum::<f64>() / (n * n)).sqrt();
        Self { value, se, influence }
    }

    pub fn variance(&self) -> f64 {
        self.se * self.se
    }

    pub fn interval(&self, level: f64) -> InferenceResult {
        wald_interval(self.value, self.se, level)
    }
}

/// Event grid up to `t` with each subject's position on it.
struct Grid {
    n: usize,
    times: Vec<f64>,
    /// Grid index of the subject's own event, if it is on the grid.
    event_at: Vec<Option<usize>>,
    /// Number of grid times `<= T~_i`, so `Y_i(s_k) = 1` iff `k < at_risk[i]`.
    at_risk: Vec<usize>,
}

impl Grid {
    fn new(time: &[f64], event: &[bool], t: f64) -> Self {
        let mut times: Vec<f64> = time
            .iter()
            .zip(event)
            .filter(|&(&s, &d)| d && s <= t)
            .map(|(&s, _)| s)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let at_risk = time.iter().map(|&s| times.partition_point(|&u| u <= s)).collect();
        let event_at = time
            .iter()
            .zip(event)
            .map(|(&s, &d)| {
                if d && s <= t {
                    times.binary_search_by(|u| u.total_cmp(&s)).ok()
                } else {
                    None
                }
            })
            .collect();
        Self {
            n: time.len(),
            times,
            event_at,
            at_risk,
        }
    }

    fn len(&self) -> usize {
        self.times.len()
    }

    /// Weighted `(dN_k, Y_k)` on the grid.
    fn counts(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k_len = self.len();
        let mut dn = vec![0.0; k_len];
        let mut ends = vec![0.0; k_len + 1];
        for i in 0..self.n {
            if let Some(k) = self.event_at[i] {
                dn[k] += w[i];
            }
            ends[self.at_risk[i]] += w[i];
        }
        let mut y = vec![0.0; k_len];
        let mut acc = 0.0;
        for k in (0..k_len).rev() {
            acc += ends[k + 1];
            y[k] = acc;
        }
        (dn, y)
    }
}

/// Weighted Nelson-Aalen at the end of the grid.
fn ipsw_cumhaz(grid: &Grid, w: &[f64]) -> Result<f64> {
    let (dn, y) = grid.counts(w);
    let mut cum = 0.0;
    for k in 0..grid.len() {
        if !(y[k] > 0.0) {
            return Err(Error::Truncation(grid.times[k]));
        }
        cum += dn[k] / y[k];
    }
    Ok(cum)
}

fn step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

/// Derivative of a hazard functional along each coefficient, by central
/// differences.
fn gradient(theta: &[f64], f: impl Fn(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(theta.len());
    let mut x = theta.to_vec();
    for j in 0..theta.len() {
        let h = step(theta[j]);
        x[j] = theta[j] + h;
        let up = f(&x)?;
        x[j] = theta[j] - h;
        let down = f(&x)?;
        x[j] = theta[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn regime_weights(sample: &SurvivalSample, g: &[f64], ps: &[f64]) -> Vec<f64> {
    sample
        .treatment()
        .iter()
        .zip(g)
        .zip(ps)
        .map(|((&a, &gi), &p)| consistency_weight(a, gi, p))
        .collect()
}

/// Adds `D^T phi_i` for a fitted propensity model to `zeta`.
fn add_propensity_term(
    zeta: &mut [f64],
    sample: &SurvivalSample,
    propensity: &PropensityFit,
    hazard_at: impl Fn(&[f64]) -> Result<f64>,
) -> Result<()> {
    let Some((fit, design)) = &propensity.logistic else {
        return Ok(());
    };
    let d = gradient(&fit.theta, |th| hazard_at(&propensity.probabilities_at(th)))?;
    for (z, phi) in zeta.iter_mut().zip(fit.influence(design, sample.treatment())) {
        *z += d.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(())
}

/// Plug-in value and standard error of the weighted Kaplan-Meier estimator
/// at `t`, treating the regime as fixed.
///
/// Fitted propensity scores contribute through their influence functions;
/// known ones do not.
pub fn plugin_ipsw(
    sample: &SurvivalSample,
    propensity: &PropensityFit,
    regime: &LinearRegime,
    smoothing: &SmoothingSpec,
    t: f64,
) -> Result<PluginEstimate> {
    let g = regime.assignments(sample.covariates(), smoothing)?;
    let w = regime_weights(sample, &g, &propensity.probabilities);
    let grid = Grid::new(sample.time(), sample.event(), t);
    let (dn, y) = grid.counts(&w);
    let nf = sample.len() as f64;
    let mut value = 1.0;
    // c[k] = sum_{l < k} n dLambda_l / Y_l
    let mut dlam = vec![0.0; grid.len()];
    let mut c = vec![0.0; grid.len() + 1];
    for k in 0..grid.len() {
        if !(y[k] > 0.0) {
            return Err(Error::Truncation(grid.times[k]));
        }
        dlam[k] = dn[k] / y[k];
        value *= km_factor(dn[k], y[k]).0;
        c[k + 1] = c[k] + nf * dlam[k] / y[k];
    }
    let mut zeta: Vec<f64> = (0..sample.len())
        .map(|i| {
            let jump = grid.event_at[i].map_or(0.0, |k| nf / y[k]);
            w[i] * (jump - c[grid.at_risk[i]])
        })
        .collect();
    add_propensity_term(&mut zeta, sample, propensity, |ps| {
        ipsw_cumhaz(&grid, &regime_weights(sample, &g, ps))
    })?;
    Ok(PluginEstimate::from_hazard_influence(value, zeta))
}

/// Variance of the weighted Kaplan-Meier value at `t`.
pub fn plugin_variance_ipsw(
    sample: &SurvivalSample,
    propensity: &PropensityFit,
    regime: &LinearRegime,
    smoothing: &SmoothingSpec,
    t: f64,
) -> Result<f64> {
    plugin_ipsw(sample, propensity, regime, smoothing, t).map(|p| p.variance())
}

/// Augmented increments on the grid, arranged for cheap perturbation.
#[derive(Clone)]
struct Augmented<'a> {
    grid: &'a Grid,
    sample: &'a SurvivalSample,
    g: &'a [f64],
    dn: Vec<f64>,
    y: Vec<f64>,
    /// `(1 - w) (1 - g)` and `(1 - w) g`
    coef: [Vec<f64>; 2],
    risk: [Vec<f64>; 2],
    /// `exp(-Lambda0(s_k-) r_i)` at `k * n + i`
    surv: [Vec<f64>; 2],
    jumps: Vec<f64>,
    sc: [Vec<f64>; 2],
}

impl<'a> Augmented<'a> {
    fn new(
        grid: &'a Grid,
        sample: &'a SurvivalSample,
        g: &'a [f64],
        w: &[f64],
        beta: &[f64],
        jumps: Vec<f64>,
        sc: [Vec<f64>; 2],
    ) -> Self {
        let mut a = Self {
            grid,
            sample,
            g,
            dn: Vec::new(),
            y: Vec::new(),
            coef: [Vec::new(), Vec::new()],
            risk: [Vec::new(), Vec::new()],
            surv: [Vec::new(), Vec::new()],
            jumps,
            sc,
        };
        a.set_weights(w);
        a.set_beta(beta);
        a
    }

    fn set_weights(&mut self, w: &[f64]) {
        let (dn, y) = self.grid.counts(w);
        self.dn = dn;
        self.y = y;
        self.coef = [
            w.iter().zip(self.g).map(|(wi, gi)| (1.0 - wi) * (1.0 - gi)).collect(),
            w.iter().zip(self.g).map(|(wi, gi)| (1.0 - wi) * gi).collect(),
        ];
    }

    fn set_beta(&mut self, beta: &[f64]) {
        let n = self.grid.n;
        let k_len = self.grid.len();
        for (arm, a) in [false, true].into_iter().enumerate() {
            let risk: Vec<f64> = self
                .sample
                .covariates()
                .rows()
                .map(|x| linear_predictor_nu(beta, a, x).exp())
                .collect();
            let mut surv = vec![0.0; k_len * n];
            let mut cum = 0.0;
            for k in 0..k_len {
                for i in 0..n {
                    surv[k * n + i] = (-cum * risk[i]).exp();
                }
                cum += self.jumps[k];
            }
            self.risk[arm] = risk;
            self.surv[arm] = surv;
        }
    }

    /// `(num_k, den_k)` with arm-specific factors on the survival terms.
    fn parts(&self, k: usize, sc: [f64; 2], jump: f64, shrink: Option<&[Vec<f64>; 2]>) -> (f64, f64) {
        let n = self.grid.n;
        let mut num = self.dn[k];
        let mut den = self.y[k];
        for arm in 0..2 {
            let coef = &self.coef[arm];
            let risk = &self.risk[arm];
            let surv = &self.surv[arm][k * n..(k + 1) * n];
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..n {
                let mut q = coef[i] * surv[i];
                if let Some(s) = shrink {
                    q *= s[arm][i];
                }
                a += q * risk[i];
                b += q;
            }
            num += sc[arm] * jump * a;
            den += sc[arm] * b;
        }
        (num, den)
    }

    fn term(&self, k: usize, sc: [f64; 2], jump: f64, shrink: Option<&[Vec<f64>; 2]>) -> Result<f64> {
        let (num, den) = self.parts(k, sc, jump, shrink);
        if !(den > 0.0) {
            return Err(Error::Truncation(self.grid.times[k]));
        }
        Ok(num / den)
    }

    fn sc_at(&self, k: usize) -> [f64; 2] {
        [self.sc[0][k], self.sc[1][k]]
    }

    fn cumhaz(&self) -> Result<f64> {
        (0..self.grid.len()).try_fold(
            0.0,
            |acc, k| Ok(acc + self.term(k, self.sc_at(k), self.jumps[k], None)?),
        )
    }

    /// Hazard with the jump at `l` moved by `h`.
    fn cumhaz_jump(&self, l: usize, h: f64) -> Result<f64> {
        let shrink = [0, 1].map(|arm| self.risk[arm].iter().map(|r| (-h * r).exp()).collect::<Vec<_>>());
        let mut acc = 0.0;
        for k in l..self.grid.len() {
            acc += if k == l {
                self.term(k, self.sc_at(k), self.jumps[k] + h, None)?
            } else {
                self.term(k, self.sc_at(k), self.jumps[k], Some(&shrink))?
            };
        }
        Ok(acc)
    }
}

/// Influence of the censoring survival left limits `S_C(s_k-)` on the grid,
/// indexed `[arm][k][i]`.
fn censoring_influence(
    sample: &SurvivalSample,
    model: CensorModel,
    grid: &Grid,
    sc: &[Vec<f64>; 2],
) -> [Vec<Vec<f64>>; 2] {
    let nf = sample.len() as f64;
    let arm_of = |i: usize| -> usize {
        match model {
            CensorModel::Marginal => 0,
            CensorModel::Stratified => usize::from(sample.treatment()[i]),
        }
    };
    let groups = match model {
        CensorModel::Marginal => 1,
        CensorModel::Stratified => 2,
    };
    let time = sample.time();
    let event = sample.event();
    let mut out: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for grp in 0..groups {
        let members: Vec<usize> = (0..sample.len()).filter(|&i| arm_of(i) == grp).collect();
        let mut ctimes: Vec<f64> = members.iter().filter(|&&i| !event[i]).map(|&i| time[i]).collect();
        ctimes.sort_by(f64::total_cmp);
        ctimes.dedup();
        // censoring risk set: T~ > c, or censored at c
        let mut r = vec![0.0; ctimes.len()];
        let mut d = vec![0.0; ctimes.len()];
        for &i in &members {
            let upto = ctimes.partition_point(|&c| c < time[i]);
            for rj in r.iter_mut().take(upto) {
                *rj += 1.0;
            }
            if !event[i] {
                let j = ctimes.partition_point(|&c| c < time[i]);
                r[j] += 1.0;
                d[j] += 1.0;
            }
        }
        // p[j] = sum_{l < j} n d_l / r_l^2
        let mut p = vec![0.0; ctimes.len() + 1];
        for j in 0..ctimes.len() {
            p[j + 1] = p[j] + nf * d[j] / (r[j] * r[j]);
        }
        let arms: Vec<usize> = match model {
            CensorModel::Marginal => vec![0, 1],
            CensorModel::Stratified => vec![grp],
        };
        let mut infl = vec![vec![0.0; sample.len()]; grid.len()];
        for (k, s) in grid.times.iter().enumerate() {
            let before = ctimes.partition_point(|&c| c < *s);
            for &i in &members {
                let mut v = 0.0;
                let own = ctimes.partition_point(|&c| c < time[i]);
                if !event[i] && own < before {
                    v += nf / r[own] - nf * d[own] / (r[own] * r[own]);
                }
                v -= p[own.min(before)];
                infl[k][i] = -sc[arms[0]][k] * v;
            }
        }
        for a in arms {
            out[a] = infl.clone();
        }
    }
    out
}

/// Plug-in value and standard error of the augmented estimator at `t`.
///
/// The nuisance correction pairs central-difference derivatives of the
/// cumulative hazard in each fitted quantity with that quantity's influence
/// functions.
pub fn plugin_aipsw(
    sample: &SurvivalSample,
    fit: &SingleStageFit,
    regime: &LinearRegime,
    smoothing: &SmoothingSpec,
    t: f64,
) -> Result<PluginEstimate> {
    let Some((cox, censor, censor_model)) = &fit.outcome else {
        return Err(Error::Validation("augmented inference needs an outcome model".into()));
    };
    let n = sample.len();
    let nf = n as f64;
    let g = regime.assignments(sample.covariates(), smoothing)?;
    let w = regime_weights(sample, &g, &fit.propensity.probabilities);
    let grid = Grid::new(sample.time(), sample.event(), t);
    let k_len = grid.len();
    let jumps: Vec<f64> = grid.times.iter().map(|&s| cox.baseline.jump_at(s)).collect();
    let sc = [false, true].map(|a| grid.times.iter().map(|&s| censor.arm(a).left(s)).collect::<Vec<f64>>());
    let aug = Augmented::new(&grid, sample, &g, &w, &cox.beta, jumps.clone(), sc.clone());

    // psi_1
    let mut value = 1.0;
    let mut psi = vec![0.0; n];
    for k in 0..k_len {
        let (num, den) = aug.parts(k, aug.sc_at(k), jumps[k], None);
        if !(den > 0.0) {
            return Err(Error::Truncation(grid.times[k]));
        }
        let dlam = num / den;
        value *= km_factor(num, den).0;
        let scale = nf / den;
        for i in 0..n {
            let y = f64::from(u8::from(k < grid.at_risk[i]));
            let dn = f64::from(u8::from(grid.event_at[i] == Some(k)));
            let mut dh = w[i] * (dn - y * dlam);
            for arm in 0..2 {
                let q = aug.coef[arm][i] * aug.surv[arm][k * n + i] * sc[arm][k];
                dh += q * (aug.risk[arm][i] * jumps[k] - dlam);
            }
            psi[i] += scale * dh;
        }
    }

    // propensity
    add_propensity_term(&mut psi, sample, &fit.propensity, |ps| {
        let mut a = aug.clone();
        a.set_weights(&regime_weights(sample, &g, ps));
        a.cumhaz()
    })?;

    // Cox coefficients and baseline jumps
    let design = cox_design(sample);
    let infl = cox.influence(sample.time(), sample.event(), &design);
    let d_beta = gradient(&cox.beta, |b| {
        let mut a = aug.clone();
        a.set_beta(b);
        a.cumhaz()
    })?;
    let mut d_jump = vec![0.0; k_len];
    for l in 0..k_len {
        // terms before l do not move
        let h = step(jumps[l]).min(0.5 * jumps[l].max(f64::MIN_POSITIVE));
        d_jump[l] = (aug.cumhaz_jump(l, h)? - aug.cumhaz_jump(l, -h)?) / (2.0 * h);
    }
    for i in 0..n {
        psi[i] += d_beta.iter().zip(&infl.beta[i]).map(|(a, b)| a * b).sum::<f64>();
        psi[i] += (0..k_len).map(|l| d_jump[l] * infl.jumps[l][i]).sum::<f64>();
    }

    // censoring curve
    let phi4 = censoring_influence(sample, *censor_model, &grid, &sc);
    for arm in 0..2 {
        for k in 0..k_len {
            let h = step(sc[arm][k]);
            let mut up = aug.sc_at(k);
            let mut down = up;
            up[arm] += h;
            down[arm] -= h;
            let d = (aug.term(k, up, jumps[k], None)? - aug.term(k, down, jumps[k], None)?) / (2.0 * h);
            for i in 0..n {
                psi[i] += d * phi4[arm][k][i];
            }
        }
    }
    Ok(PluginEstimate::from_hazard_influence(value.min(1.0), psi))
}

pub fn plugin_variance_aipsw(
    sample: &SurvivalSample,
    fit: &SingleStageFit,
    regime: &LinearRegime,
    smoothing: &SmoothingSpec,
    t: f64,
) -> Result<f64> {
    plugin_aipsw(sample, fit, regime, smoothing, t).map(|p| p.variance())
}

/// Plug-in estimate for whichever method `fit` was built for.
pub fn plugin(
    sample: &SurvivalSample,
    fit: &SingleStageFit,
    regime: &LinearRegime,
    smoothing: &SmoothingSpec,
    t: f64,
) -> Result<PluginEstimate> {
    match fit.outcome {
        None => plugin_ipsw(sample, &fit.propensity, regime, smoothing, t),
        Some(_) => plugin_aipsw(sample, fit, regime, smoothing, t),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    /// Refit the nuisance models on each resample.
    pub refit_models: bool,
    /// Re-run the regime search on each resample.
    pub re_optimize: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            level: 0.95,
            seed,
            refit_models: true,
            re_optimize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 50 {
            return Err(Error::Validation(
                "at least 50 bootstrap replicates are required".into(),
            ));
        }
        check_level(self.level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub result: InferenceResult,
    pub replicate_values: Vec<f64>,
    pub failed: usize,
}

/// Index vector of resample `b`.
pub fn resample_indices(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b as u64));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Runs `stat` on `replicates` resamples; the outcome depends only on the
/// seed.
pub fn bootstrap_statistic<F>(n: usize, estimate: f64, config: &BootstrapConfig, stat: F) -> Result<BootstrapOutcome>
where
    F: Fn(usize, &[usize]) -> Result<f64> + Sync,
{
    config.validate()?;
    let results: Vec<Option<f64>> = (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            stat(b, &resample_indices(n, config.seed, b))
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    let values: Vec<f64> = results.iter().flatten().copied().collect();
    let failed = config.replicates - values.len();
    if failed as f64 > MAX_FAILED_SHARE * config.replicates as f64 || values.len() < 2 {
        return Err(Error::BootstrapFailure {
            failed,
            total: config.replicates,
        });
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = (1.0 - config.level) / 2.0;
    Ok(BootstrapOutcome {
        result: InferenceResult {
            value: estimate,
            se: sample_sd(&values),
            ci_lower: quantile_sorted(&sorted, alpha),
            ci_upper: quantile_sorted(&sorted, 1.0 - alpha),
            method: InferenceMethod::Bootstrap,
            level: config.level,
            replicates: Some(values.len()),
        },
        replicate_values: values,
        failed,
    })
}

/// Resample and the nuisance fit used on it.
fn replicate_fit(
    sample: &SurvivalSample,
    spec: &NuisanceSpec,
    fit: &SingleStageFit,
    refit: bool,
    idx: &[usize],
) -> Result<(SurvivalSample, SingleStageFit)> {
    let rs = sample.resample(idx)?;
    let rfit = if refit {
        spec.resample(idx).fit(&rs)?
    } else {
        SingleStageFit {
            method: fit.method,
            propensity: PropensityFit::known(idx.iter().map(|&i| fit.propensity.probabilities[i]).collect()),
            outcome: fit.outcome.clone(),
        }
    };
    Ok((rs, rfit))
}

/// Value of `regime` on a resample, or of the regime re-estimated there.
fn replicate_value(
    est: &impl ValueEstimator<Regime = LinearRegime>,
    p: usize,
    regime: &LinearRegime,
    search: &SearchConfig,
    re_optimize: bool,
    seed: u64,
) -> Result<f64> {
    if re_optimize {
        let cfg = SearchConfig { seed, ..*search };
        Ok(maximize_value(est, &LinearSpace { p }, &cfg)?.value)
    } else {
        est.value(regime, &search.smoothing, &search.target)
    }
}

/// Bootstrap standard error and percentile interval for the value of the
/// estimated regime.
pub fn bootstrap_inference(
    sample: &SurvivalSample,
    spec: &NuisanceSpec,
    regime: &LinearRegime,
    search: &SearchConfig,
    boot: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    let fit = spec.fit(sample)?;
    let estimate = fit
        .estimator(sample)?
        .value(regime, &search.smoothing, &search.target)?;
    let search_seed = derive_seed(boot.seed, u64::MAX);
    bootstrap_statistic(sample.len(), estimate, boot, |b, idx| {
        let (rs, rfit) = replicate_fit(sample, spec, &fit, boot.refit_models, idx)?;
        let est = rfit.estimator(&rs)?;
        let seed = derive_seed(search_seed, b as u64);
        replicate_value(&est, sample.n_covariates(), regime, search, boot.re_optimize, seed)
    })
}

/// Bootstrap for the two-stage value; regimes are re-estimated when asked.
pub fn bootstrap_two_stage(
    sample: &TwoStageSample,
    propensity: &TwoStagePropensity,
    limit: CensorLimit,
    regime: &TwoStageRegime,
    search: &SearchConfig,
    boot: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    let fit = TwoStageFit::new(sample, propensity, limit)?;
    let estimate = fit
        .estimator(sample)?
        .value(regime, &search.smoothing, &search.target)?;
    let space = TwoStageSpace {
        p0: sample.baseline().ncols(),
        p1: sample.n_interim_covariates(),
        features: regime.features(),
    };
    let search_seed = derive_seed(boot.seed, u64::MAX);
    bootstrap_statistic(sample.len(), estimate, boot, |b, idx| {
        let rs = sample.resample(idx)?;
        let rfit = if boot.refit_models {
            TwoStageFit::new(&rs, propensity, limit)?
        } else {
            TwoStageFit {
                ps0: idx.iter().map(|&i| fit.ps0[i]).collect(),
                ps1: idx.iter().map(|&i| fit.ps1[i]).collect(),
                censor: fit.censor.clone(),
                limit,
            }
        };
        let est = rfit.estimator(&rs)?;
        if boot.re_optimize {
            let cfg = SearchConfig {
                seed: derive_seed(search_seed, b as u64),
                ..*search
            };
            Ok(maximize_value(&est, &space, &cfg)?.value)
        } else {
            est.value(regime, &search.smoothing, &search.target)
        }
    })
}

/// Estimated regime versus one simple regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub simple: String,
    pub estimate: f64,
    pub wald: InferenceResult,
    pub bootstrap: Option<InferenceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub value: f64,
    pub vs_treat_all: Difference,
    pub vs_treat_none: Difference,
}

/// `S(t; regime_hat) - S(t; simple)` for treat-all and treat-none, with
/// Wald intervals from paired influence functions and optional bootstrap.
pub fn compare_to_simple(
    sample: &SurvivalSample,
    spec: &NuisanceSpec,
    regime_hat: &LinearRegime,
    search: &SearchConfig,
    level: f64,
    boot: Option<&BootstrapConfig>,
) -> Result<Comparison> {
    check_level(level)?;
    let Functional::SurvivalAt { t } = search.target else {
        return Err(Error::Validation(
            "comparisons are defined for survival probabilities".into(),
        ));
    };
    let fit = spec.fit(sample)?;
    let smoothing = &search.smoothing;
    let main = plugin(sample, &fit, regime_hat, smoothing, t)?;
    let p = sample.n_covariates();
    let simples = [
        ("treat_all", LinearRegime::treat_all(p)),
        ("treat_none", LinearRegime::treat_none(p)),
    ];
    let mut diffs = Vec::with_capacity(2);
    for (b_index, (name, simple)) in simples.iter().enumerate() {
        let other = plugin(sample, &fit, simple, smoothing, t)?;
        let n = sample.len() as f64;
        let estimate = main.value - other.value;
        let se = (main
            .influence
            .iter()
            .zip(&other.influence)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / (n * n))
            .sqrt();
        let bootstrap = match boot {
            None => None,
            Some(cfg) => {
                let cfg = BootstrapConfig {
                    seed: derive_seed(cfg.seed, b_index as u64),
                    ..*cfg
                };
                let search_seed = derive_seed(cfg.seed, u64::MAX);
                let out = bootstrap_statistic(sample.len(), estimate, &cfg, |b, idx| {
                    let (rs, rfit) = replicate_fit(sample, spec, &fit, cfg.refit_models, idx)?;
                    let est = rfit.estimator(&rs)?;
                    let seed = derive_seed(search_seed, b as u64);
                    let v = replicate_value(&est, p, regime_hat, search, cfg.re_optimize, seed)?;
                    Ok(v - est.value(simple, smoothing, &search.target)?)
                })?;
                Some(out.result)
            }
        };
        diffs.push(Difference {
            simple: (*name).to_string(),
            estimate,
            wald: wald_interval(estimate, se, level),
            bootstrap,
        });
    }
    let vs_treat_none = diffs.pop().expect("two comparisons");
    let vs_treat_all = diffs.pop().expect("two comparisons");
    Ok(Comparison {
        t,
        value: main.value,
        vs_treat_all,
        vs_treat_none,
    })
}
