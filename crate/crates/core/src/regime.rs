//! Linear treatment regimes, regime-consistency weights and the weighted
//! Kaplan-Meier value estimators built on them.

use serde::{Deserialize, Serialize};

use crate::curve::{Side, StepCurve};
use crate::data::{Covariates, SurvivalSample, TwoStageSample};
use crate::error::{Error, Result};
use crate::estimators::{product_limit, weighted_km_with, Increment, RiskTable};
use crate::models::{dot, linear_predictor_nu, CoxFit};

/// Default smoothing constant `c0 = 4^(1/3)`.
pub const DEFAULT_C0: f64 = 1.587_401_051_968_199_4;
/// Propensities are clamped into `[PS_FLOOR, 1 - PS_FLOOR]` before weighting.
pub const PS_FLOOR: f64 = 0.01;
/// Smallest censoring survival accepted as an inverse weight denominator.
pub const POSITIVITY_FLOOR: f64 = 0.05;

fn normalize(eta: Vec<f64>) -> Result<Vec<f64>> {
    if eta.is_empty() || eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("regime coefficients must be finite".into()));
    }
    let norm = eta.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Validation("regime coefficients must not all be zero".into()));
    }
    Ok(eta.into_iter().map(|v| v / norm).collect())
}

/// `g(x) = I{eta^T (1, x) >= 0}` with `||eta|| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegime {
    eta: Vec<f64>,
}

impl LinearRegime {
    /// Normalizes `eta` (intercept first) to unit length.
    pub fn new(eta: Vec<f64>) -> Result<Self> {
        Ok(Self { eta: normalize(eta)? })
    }

    pub fn treat_all(p: usize) -> Self {
        let mut eta = vec![0.0; p + 1];
        eta[0] = 1.0;
        Self { eta }
    }

    pub fn treat_none(p: usize) -> Self {
        let mut eta = vec![0.0; p + 1];
        eta[0] = -1.0;
        Self { eta }
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn n_covariates(&self) -> usize {
        self.eta.len() - 1
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len() + 1, self.eta.len());
        self.eta[0] + dot(&self.eta[1..], x)
    }

    pub fn treats(&self, x: &[f64]) -> bool {
        self.linear_predictor(x) >= 0.0
    }

    /// Per-subject assignments, hard (0/1) or smoothed.
    pub fn assignments(&self, covariates: &Covariates, smoothing: &SmoothingSpec) -> Result<Vec<f64>> {
        if covariates.ncols() != self.n_covariates() {
            return Err(Error::Validation(format!(
                "regime has {} covariates, data has {}",
                self.n_covariates(),
                covariates.ncols()
            )));
        }
        let lp: Vec<f64> = covariates.rows().map(|x| self.linear_predictor(x)).collect();
        Ok(assign_all(&lp, smoothing))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `h = c0 n^(-1/3) sd(eta^T x~)`, recomputed for every `eta`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub enabled: bool,
    pub c0: f64,
    pub bandwidth: Bandwidth,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self::smooth()
    }
}

impl SmoothingSpec {
    pub fn hard() -> Self {
        Self {
            enabled: false,
            c0: DEFAULT_C0,
            bandwidth: Bandwidth::Auto,
        }
    }

    pub fn smooth() -> Self {
        Self {
            enabled: true,
            ..Self::hard()
        }
    }

    pub fn fixed(h: f64) -> Self {
        Self {
            enabled: true,
            c0: DEFAULT_C0,
            bandwidth: Bandwidth::Fixed(h),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Validation("c0 must be positive".into()));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Validation("bandwidth must be positive".into()));
            }
        }
        Ok(())
    }

    /// Bandwidth for a set of linear predictors, `None` in hard mode.
    ///
    /// An auto bandwidth on a constant predictor falls back to the hard rule,
    /// which is the `h -> 0` limit of the smoothed one.
    pub fn resolve(&self, lp: &[f64]) -> Option<f64> {
        if !self.enabled {
            return None;
        }
        match self.bandwidth {
            Bandwidth::Fixed(h) => Some(h),
            Bandwidth::Auto => select_bandwidth(lp, self.c0).ok(),
        }
    }
}

/// `h = c0 n^(-1/3) sd(lp)` with the sample (n - 1) standard deviation.
pub fn select_bandwidth(lp: &[f64], c0: f64) -> Result<f64> {
    let n = lp.len();
    if n < 2 {
        return Err(Error::DegenerateDirection);
    }
    let mean = lp.iter().sum::<f64>() / n as f64;
    let var = lp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok((c0 * (n as f64).powf(-1.0 / 3.0) * sd).max(1e-8 * sd))
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Assignment for a single linear predictor: `I{lp >= 0}` or `Phi(lp / h)`.
pub fn assign(lp: f64, bandwidth: Option<f64>) -> f64 {
    match bandwidth {
        None => f64::from(u8::from(lp >= 0.0)),
        Some(h) => std_normal_cdf(lp / h),
    }
}

fn assign_all(lp: &[f64], smoothing: &SmoothingSpec) -> Vec<f64> {
    let h = smoothing.resolve(lp);
    lp.iter().map(|&v| assign(v, h)).collect()
}

pub fn clamp_propensity(p: f64) -> f64 {
    p.clamp(PS_FLOOR, 1.0 - PS_FLOOR)
}

/// Regime-consistency weight `[A g + (1-A)(1-g)] / [pi A + (1-pi)(1-A)]`.
pub fn consistency_weight(a: bool, g: f64, propensity: f64) -> f64 {
    let p = clamp_propensity(propensity);
    if a {
        g / p
    } else {
        (1.0 - g) / (1.0 - p)
    }
}

fn check_propensity(p: &[f64], n: usize) -> Result<Vec<f64>> {
    if p.len() != n {
        return Err(Error::Validation("one propensity per subject required".into()));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Validation("propensities must lie in [0, 1]".into()));
    }
    Ok(p.iter().map(|&v| clamp_propensity(v)).collect())
}

/// Summary of a survival curve used as the optimization target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    SurvivalAt { t: f64 },
    RestrictedMean { horizon: f64 },
    Median,
}

impl Functional {
    /// Last time the functional looks at.
    pub fn horizon(&self) -> f64 {
        match *self {
            Functional::SurvivalAt { t } => t,
            Functional::RestrictedMean { horizon } => horizon,
            Functional::Median => f64::INFINITY,
        }
    }

    pub fn evaluate(&self, curve: &StepCurve) -> Result<f64> {
        match *self {
            Functional::SurvivalAt { t } => {
                if !(t >= 0.0) {
                    return Err(Error::Validation("target time must be non-negative".into()));
                }
                Ok(curve.at(t))
            }
            Functional::RestrictedMean { horizon } => {
                if !(horizon > 0.0) {
                    return Err(Error::Validation("restricted-mean horizon must be positive".into()));
                }
                let mut area = 0.0;
                let mut last_t = 0.0;
                let mut last_v = curve.initial_value();
                for (&t, &v) in curve.jump_times().iter().zip(curve.values()) {
                    if t >= horizon {
                        break;
                    }
                    area += last_v * (t - last_t);
                    last_t = t;
                    last_v = v;
                }
                Ok(area + last_v * (horizon - last_t))
            }
            Functional::Median => Ok(curve
                .jump_times()
                .iter()
                .zip(curve.values())
                .find(|(_, &v)| v < 0.5)
                .map_or(f64::INFINITY, |(&t, _)| t)),
        }
    }
}

/// Evaluates a regime's survival curve and scalar summaries.
pub trait ValueEstimator: Sync {
    type Regime;

    /// Curve up to `horizon` (pass infinity for the whole curve).
    fn curve(&self, regime: &Self::Regime, smoothing: &SmoothingSpec, horizon: f64) -> Result<StepCurve>;

    /// Functional of the curve; a curve whose weighted risk set empties
    /// before the functional's horizon is a truncation error.
    fn value(&self, regime: &Self::Regime, smoothing: &SmoothingSpec, functional: &Functional) -> Result<f64> {
        let horizon = functional.horizon();
        let curve = self.curve(regime, smoothing, horizon)?;
        if let Some(tau) = curve.truncated_at() {
            if tau < horizon {
                return Err(Error::Truncation(tau));
            }
        }
        functional.evaluate(&curve)
    }
}

/// Inverse-propensity-weighted Kaplan-Meier value of single-stage regimes.
#[derive(Debug, Clone)]
pub struct IpswValue<'a> {
    sample: &'a SurvivalSample,
    table: RiskTable,
    propensity: Vec<f64>,
}

impl<'a> IpswValue<'a> {
    pub fn new(sample: &'a SurvivalSample, propensity: &[f64]) -> Result<Self> {
        let propensity = check_propensity(propensity, sample.len())?;
        Ok(Self {
            sample,
            table: RiskTable::new(sample.time(), sample.event())?,
            propensity,
        })
    }

    pub fn sample(&self) -> &SurvivalSample {
        self.sample
    }

    pub fn table(&self) -> &RiskTable {
        &self.table
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn weights(&self, regime: &LinearRegime, smoothing: &SmoothingSpec) -> Result<Vec<f64>> {
        let g = regime.assignments(self.sample.covariates(), smoothing)?;
        Ok(weights_from(self.sample.treatment(), &g, &self.propensity))
    }
}

fn weights_from(treatment: &[bool], g: &[f64], propensity: &[f64]) -> Vec<f64> {
    treatment
        .iter()
        .zip(g)
        .zip(propensity)
        .map(|((&a, &gi), &p)| consistency_weight(a, gi, p))
        .collect()
}

impl ValueEstimator for IpswValue<'_> {
    type Regime = LinearRegime;

    fn curve(&self, regime: &LinearRegime, smoothing: &SmoothingSpec, horizon: f64) -> Result<StepCurve> {
        let w = self.weights(regime, smoothing)?;
        weighted_km_with(&self.table, &w, horizon)
    }
}

/// Censoring survival used by the augmentation, marginal or by arm.
#[derive(Debug, Clone, PartialEq)]
pub enum CensoringCurve {
    Marginal(StepCurve),
    Stratified { control: StepCurve, treated: StepCurve },
}

impl CensoringCurve {
    pub fn arm(&self, a: bool) -> &StepCurve {
        match self {
            CensoringCurve::Marginal(c) => c,
            CensoringCurve::Stratified { control, treated } => {
                if a {
                    treated
                } else {
                    control
                }
            }
        }
    }
}

/// Nuisance inputs of the augmented estimator on the sample's event grid.
///
/// Kept as plain vectors so the inference code can perturb each one.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationParts {
    /// Cox coefficients over `(X, A, A X)`.
    pub beta: Vec<f64>,
    /// Breslow baseline jump at each grid time.
    pub jumps: Vec<f64>,
    /// Left limits `S_C(s-)` at each grid time, for arm 0 and arm 1.
    pub censor_left: [Vec<f64>; 2],
}

/// Augmented IPSW Kaplan-Meier value of single-stage regimes.
///
/// The model terms use left limits `S_T(s-|a,x) S_C(s-)`, the probability
/// of still being at risk at `s`.
#[derive(Debug, Clone)]
pub struct AipswValue<'a> {
    sample: &'a SurvivalSample,
    table: RiskTable,
    propensity: Vec<f64>,
    grid: Vec<f64>,
    /// `q[a][k * n + i] = S_T(s_k-|a, x_i) S_C(s_k-)`
    q: [Vec<f64>; 2],
    /// `m[a][k * n + i] = q[a][k * n + i] * dLambda_T(s_k|a, x_i)`
    m: [Vec<f64>; 2],
}

impl<'a> AipswValue<'a> {
    /// `cox` must be fitted on this sample's `(X, A, A X)` design.
    pub fn new(sample: &'a SurvivalSample, propensity: &[f64], cox: &CoxFit, censor: &CensoringCurve) -> Result<Self> {
        let table = RiskTable::new(sample.time(), sample.event())?;
        let grid: Vec<f64> = table.event_times().collect();
        let parts = AugmentationParts {
            beta: cox.beta.clone(),
            jumps: grid.iter().map(|&s| cox.baseline.jump_at(s)).collect(),
            censor_left: [false, true].map(|a| grid.iter().map(|&s| censor.arm(a).eval(s, Side::Left)).collect()),
        };
        Self::with_table(sample, table, propensity, &parts)
    }

    pub fn from_parts(sample: &'a SurvivalSample, propensity: &[f64], parts: &AugmentationParts) -> Result<Self> {
        let table = RiskTable::new(sample.time(), sample.event())?;
        Self::with_table(sample, table, propensity, parts)
    }

    fn with_table(
        sample: &'a SurvivalSample,
        table: RiskTable,
        propensity: &[f64],
        parts: &AugmentationParts,
    ) -> Result<Self> {
        let n = sample.len();
        let p = sample.n_covariates();
        let propensity = check_propensity(propensity, n)?;
        if parts.beta.len() != 2 * p + 1 {
            return Err(Error::Validation(format!(
                "Cox coefficients have length {}, expected {}",
                parts.beta.len(),
                2 * p + 1
            )));
        }
        let grid: Vec<f64> = table.event_times().collect();
        let k_len = grid.len();
        if parts.jumps.len() != k_len || parts.censor_left.iter().any(|c| c.len() != k_len) {
            return Err(Error::Validation(
                "augmentation parts do not match the event grid".into(),
            ));
        }
        let mut q = [vec![0.0; k_len * n], vec![0.0; k_len * n]];
        let mut m = [vec![0.0; k_len * n], vec![0.0; k_len * n]];
        for (arm, a) in [false, true].into_iter().enumerate() {
            let risk: Vec<f64> = sample
                .covariates()
                .rows()
                .map(|x| linear_predictor_nu(&parts.beta, a, x).exp())
                .collect();
            let mut cum = 0.0;
            for k in 0..k_len {
                let sc = parts.censor_left[arm][k];
                let row = k * n;
                for (i, r) in risk.iter().enumerate() {
                    let qi = (-cum * r).exp() * sc;
                    q[arm][row + i] = qi;
                    m[arm][row + i] = qi * r * parts.jumps[k];
                }
                cum += parts.jumps[k];
            }
        }
        Ok(Self {
            sample,
            table,
            propensity,
            grid,
            q,
            m,
        })
    }

    pub fn sample(&self) -> &SurvivalSample {
        self.sample
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn weights(&self, regime: &LinearRegime, smoothing: &SmoothingSpec) -> Result<Vec<f64>> {
        let g = regime.assignments(self.sample.covariates(), smoothing)?;
        Ok(weights_from(self.sample.treatment(), &g, &self.propensity))
    }

    /// Model terms `(q_i(s_k), m_i(s_k))` mixed by the assignments `g`.
    pub fn model_terms(&self, g: &[f64], k: usize, i: usize) -> (f64, f64) {
        let at = k * self.sample.len() + i;
        (
            g[i] * self.q[1][at] + (1.0 - g[i]) * self.q[0][at],
            g[i] * self.m[1][at] + (1.0 - g[i]) * self.m[0][at],
        )
    }

    /// Augmented increments `(num_k, den_k)` at grid times `<= horizon`.
    pub(crate) fn increments(&self, g: &[f64], w: &[f64], horizon: f64) -> Vec<Increment> {
        let n = self.sample.len();
        let c1: Vec<f64> = g.iter().zip(w).map(|(gi, wi)| (1.0 - wi) * gi).collect();
        let c0: Vec<f64> = g.iter().zip(w).map(|(gi, wi)| (1.0 - wi) * (1.0 - gi)).collect();
        let mut inc = self.table.event_increments(w, horizon);
        for (k, slot) in inc.iter_mut().enumerate() {
            debug_assert_eq!(slot.time, self.grid[k]);
            let row = k * n;
            let (q1, q0) = (&self.q[1][row..row + n], &self.q[0][row..row + n]);
            let (m1, m0) = (&self.m[1][row..row + n], &self.m[0][row..row + n]);
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += c1[i] * m1[i] + c0[i] * m0[i];
                den += c1[i] * q1[i] + c0[i] * q0[i];
            }
            slot.d += num;
            slot.r += den;
        }
        inc
    }
}

impl ValueEstimator for AipswValue<'_> {
    type Regime = LinearRegime;

    fn curve(&self, regime: &LinearRegime, smoothing: &SmoothingSpec, horizon: f64) -> Result<StepCurve> {
        let g = regime.assignments(self.sample.covariates(), smoothing)?;
        let w = weights_from(self.sample.treatment(), &g, &self.propensity);
        let inc = self.increments(&g, &w, horizon);
        let tau = inc.iter().rev().find(|i| i.r > 0.0).map_or(0.0, |i| i.time);
        Ok(product_limit(&inc, tau))
    }
}

/// Features of the second decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Features {
    /// `(1, X0, g0(X0), X1)`
    Full,
    /// `(1, X1)`
    InterimOnly,
}

impl Stage1Features {
    pub fn dim(self, p0: usize, p1: usize) -> usize {
        match self {
            Stage1Features::Full => p0 + p1 + 2,
            Stage1Features::InterimOnly => p1 + 1,
        }
    }

    pub fn build(self, x0: &[f64], g0: bool, x1: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim(x0.len(), x1.len()));
        f.push(1.0);
        if self == Stage1Features::Full {
            f.extend_from_slice(x0);
            f.push(f64::from(u8::from(g0)));
        }
        f.extend_from_slice(x1);
        f
    }
}

/// Two-decision regime `(g0, g1)` with unit-norm coefficient blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageRegime {
    eta0: Vec<f64>,
    eta1: Vec<f64>,
    features: Stage1Features,
}

impl TwoStageRegime {
    pub fn new(eta0: Vec<f64>, eta1: Vec<f64>, features: Stage1Features) -> Result<Self> {
        Ok(Self {
            eta0: normalize(eta0)?,
            eta1: normalize(eta1)?,
            features,
        })
    }

    pub fn eta0(&self) -> &[f64] {
        &self.eta0
    }

    pub fn eta1(&self) -> &[f64] {
        &self.eta1
    }

    pub fn features(&self) -> Stage1Features {
        self.features
    }

    pub fn lp0(&self, x0: &[f64]) -> f64 {
        self.eta0[0] + dot(&self.eta0[1..], x0)
    }

    pub fn treats0(&self, x0: &[f64]) -> bool {
        self.lp0(x0) >= 0.0
    }

    pub fn lp1(&self, x0: &[f64], x1: &[f64]) -> f64 {
        let f = self.features.build(x0, self.treats0(x0), x1);
        dot(&self.eta1, &f)
    }

    pub fn treats1(&self, x0: &[f64], x1: &[f64]) -> bool {
        self.lp1(x0, x1) >= 0.0
    }

    fn check_dims(&self, sample: &TwoStageSample) -> Result<()> {
        let p0 = sample.baseline().ncols();
        let p1 = sample.n_interim_covariates();
        if self.eta0.len() != p0 + 1 || self.eta1.len() != self.features.dim(p0, p1) {
            return Err(Error::Validation(
                "two-stage regime dimensions do not match the data".into(),
            ));
        }
        Ok(())
    }

    /// Stage assignments `(g0, g1)`; `g1` is zero where the subject did not
    /// reach the interim time. Bandwidth `h1` uses only subjects who did.
    pub fn assignments(&self, sample: &TwoStageSample, smoothing: &SmoothingSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dims(sample)?;
        let lp0: Vec<f64> = sample.baseline().rows().map(|x| self.lp0(x)).collect();
        let g0 = assign_all(&lp0, smoothing);
        let alive = sample.alive_at_interim();
        let lp1: Vec<f64> = (0..sample.len())
            .filter(|&i| alive[i])
            .map(|i| self.lp1(sample.baseline().row(i), sample.interim_row(i).unwrap_or(&[])))
            .collect();
        let h1 = smoothing.resolve(&lp1);
        let mut g1 = vec![0.0; sample.len()];
        let mut it = lp1.iter();
        for (i, slot) in g1.iter_mut().enumerate() {
            if alive[i] {
                *slot = assign(*it.next().expect("one predictor per alive subject"), h1);
            }
        }
        Ok((g0, g1))
    }
}

/// Where the censoring survival enters the first-stage inverse weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CensorLimit {
    /// `S_C(T~-)`
    #[default]
    Left,
    /// `S_C(T~)`, as literally written for the two-stage weight.
    Right,
}

/// Two-stage inverse-weighted Kaplan-Meier value of dynamic regimes.
#[derive(Debug, Clone)]
pub struct TwoStageValue<'a> {
    sample: &'a TwoStageSample,
    table: RiskTable,
    /// `I(T~ <= s) delta / {S_C(T~-) pi_A0}`
    early: Vec<f64>,
    /// `I(T~ > s) / {S_C(s) pi_A0 pi_A1}`
    late: Vec<f64>,
}

impl<'a> TwoStageValue<'a> {
    /// `ps1[i]` is read only where the subject reached the interim time.
    pub fn new(
        sample: &'a TwoStageSample,
        ps0: &[f64],
        ps1: &[f64],
        censor: &StepCurve,
        limit: CensorLimit,
    ) -> Result<Self> {
        let n = sample.len();
        let ps0 = check_propensity(ps0, n)?;
        if ps1.len() != n {
            return Err(Error::Validation("one stage-1 propensity per subject required".into()));
        }
        let s = sample.interim_time();
        let mut early = vec![0.0; n];
        let mut late = vec![0.0; n];
        let guard = |t: f64, v: f64| -> Result<f64> {
            if v < POSITIVITY_FLOOR {
                Err(Error::Positivity { time: t, value: v })
            } else {
                Ok(v)
            }
        };
        for i in 0..n {
            let a0 = sample.stage0_treatment()[i];
            let pi0 = if a0 { ps0[i] } else { 1.0 - ps0[i] };
            let t = sample.time()[i];
            if sample.alive_at_interim()[i] {
                let p1 = ps1[i];
                if !(0.0..=1.0).contains(&p1) {
                    return Err(Error::Validation("propensities must lie in [0, 1]".into()));
                }
                let p1 = clamp_propensity(p1);
                let a1 = sample.stage1_treatment()[i].unwrap_or(false);
                let pi1 = if a1 { p1 } else { 1.0 - p1 };
                let sc = guard(s, censor.at(s))?;
                late[i] = 1.0 / (sc * pi0 * pi1);
            } else if sample.event()[i] {
                let side = match limit {
                    CensorLimit::Left => Side::Left,
                    CensorLimit::Right => Side::Right,
                };
                let sc = guard(t, censor.eval(t, side))?;
                early[i] = 1.0 / (sc * pi0);
            }
        }
        Ok(Self {
            sample,
            table: RiskTable::new(sample.time(), sample.event())?,
            early,
            late,
        })
    }

    pub fn sample(&self) -> &TwoStageSample {
        self.sample
    }

    pub fn weights(&self, regime: &TwoStageRegime, smoothing: &SmoothingSpec) -> Result<Vec<f64>> {
        let (g0, g1) = regime.assignments(self.sample, smoothing)?;
        let a0 = self.sample.stage0_treatment();
        let a1 = self.sample.stage1_treatment();
        Ok((0..self.sample.len())
            .map(|i| {
                let m0 = if a0[i] { g0[i] } else { 1.0 - g0[i] };
                let mut w = self.early[i] * m0;
                if let Some(a) = a1[i] {
                    let m1 = if a { g1[i] } else { 1.0 - g1[i] };
                    w += self.late[i] * m0 * m1;
                }
                w
            })
            .collect())
    }
}

impl ValueEstimator for TwoStageValue<'_> {
    type Regime = TwoStageRegime;

    fn curve(&self, regime: &TwoStageRegime, smoothing: &SmoothingSpec, horizon: f64) -> Result<StepCurve> {
        let w = self.weights(regime, smoothing)?;
        weighted_km_with(&self.table, &w, horizon)
    }
}

/// Weights of a single-stage regime.
pub fn ipsw_weights(
    sample: &SurvivalSample,
    regime: &LinearRegime,
    propensity: &[f64],
    smoothing: &SmoothingSpec,
) -> Result<Vec<f64>> {
    IpswValue::new(sample, propensity)?.weights(regime, smoothing)
}

pub fn value_curve_ipsw(
    sample: &SurvivalSample,
    regime: &LinearRegime,
    propensity: &[f64],
    smoothing: &SmoothingSpec,
) -> Result<StepCurve> {
    IpswValue::new(sample, propensity)?.curve(regime, smoothing, f64::INFINITY)
}

pub fn value_curve_aipsw(
    sample: &SurvivalSample,
    regime: &LinearRegime,
    propensity: &[f64],
    cox: &CoxFit,
    censor: &CensoringCurve,
    smoothing: &SmoothingSpec,
) -> Result<StepCurve> {
    AipswValue::new(sample, propensity, cox, censor)?.curve(regime, smoothing, f64::INFINITY)
}

pub fn two_stage_weights(
    sample: &TwoStageSample,
    regime: &TwoStageRegime,
    ps0: &[f64],
    ps1: &[f64],
    censor: &StepCurve,
    smoothing: &SmoothingSpec,
) -> Result<Vec<f64>> {
    TwoStageValue::new(sample, ps0, ps1, censor, CensorLimit::Left)?.weights(regime, smoothing)
}

pub fn value_curve_two_stage(
    sample: &TwoStageSample,
    regime: &TwoStageRegime,
    ps0: &[f64],
    ps1: &[f64],
    censor: &StepCurve,
    smoothing: &SmoothingSpec,
) -> Result<StepCurve> {
    TwoStageValue::new(sample, ps0, ps1, censor, CensorLimit::Left)?.curve(regime, smoothing, f64::INFINITY)
}
