//! Simulation designs, Monte-Carlo oracle values and the study runner.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Method, NuisanceSpec, PropensityModel, TwoStageFit, TwoStagePropensity};
use crate::data::{Covariates, SurvivalSample, TwoStageSample};
use crate::error::{Error, Result};
use crate::inference::{bootstrap_two_stage, plugin, wald_interval, BootstrapConfig};
use crate::optimize::{derive_seed, maximize_value, LinearSpace, SearchConfig, TwoStageSpace};
use crate::regime::{CensorLimit, Functional, LinearRegime, SmoothingSpec, Stage1Features, TwoStageRegime};

/// Share of failed replications a study tolerates.
const MAX_FAILED_SHARE: f64 = 0.05;
const CALIBRATION_DRAWS: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 20_160_901;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    /// Minimum-type extreme value, `P(e > x) = exp(-e^x)`; gives a PH model.
    ExtremeValue,
    /// Standard logistic; gives a proportional-odds model.
    Logistic,
}

impl ErrorDist {
    fn draw(self, rng: &mut impl Rng) -> f64 {
        match self {
            ErrorDist::ExtremeValue => {
                let e: f64 = Exp1.sample(rng);
                e.ln()
            }
            ErrorDist::Logistic => {
                let u: f64 = rng.random::<f64>();
                let u = u.max(f64::MIN_POSITIVE);
                (u / (1.0 - u)).ln()
            }
        }
    }
}

/// Single-decision design: `X1, X2 ~ U(-2, 2)`, `logit P(A=1) = X1 - 0.5 X2`,
/// `h(T) = -0.5 X1 + A (X1 - X2) + e` with `h(s) = log(e^s - 1) - 2`, and
/// `C ~ U(0, C0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleStageDesign {
    pub n: usize,
    pub error: ErrorDist,
    pub censor_rate: f64,
    pub t: f64,
    pub seed: u64,
}

impl SingleStageDesign {
    pub fn new(n: usize, error: ErrorDist, censor_rate: f64, t: f64, seed: u64) -> Self {
        Self {
            n,
            error,
            censor_rate,
            t,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Validation("simulated samples need at least 10 subjects".into()));
        }
        if !(self.censor_rate > 0.0 && self.censor_rate < 1.0) {
            return Err(Error::Validation("censoring rate must be in (0, 1)".into()));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::Validation("t must be positive".into()));
        }
        Ok(())
    }

    /// The optimal rule `I{X1 - X2 >= 0}`.
    pub fn optimal_regime() -> LinearRegime {
        LinearRegime::new(vec![0.0, 1.0, -1.0]).expect("nonzero")
    }

    fn key(&self) -> String {
        match self.error {
            ErrorDist::ExtremeValue => "single_extreme_value".into(),
            ErrorDist::Logistic => "single_logistic".into(),
        }
    }
}

/// `h^{-1}(z) = log(1 + e^{z + 2})`.
fn inverse_transform(z: f64) -> f64 {
    let x = z + 2.0;
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `h(s) = log(e^s - 1) - 2`.
fn transform(s: f64) -> f64 {
    s.exp_m1().ln() - 2.0
}

fn single_outcome_lp(x1: f64, x2: f64, a: bool) -> f64 {
    -0.5 * x1 + if a { x1 - x2 } else { 0.0 }
}

struct SingleDraw {
    x: [f64; 2],
    a: bool,
    eps: f64,
    u_c: f64,
}

fn single_draw(rng: &mut ChaCha8Rng, error: ErrorDist) -> SingleDraw {
    let x1: f64 = rng.random_range(-2.0..2.0);
    let x2: f64 = rng.random_range(-2.0..2.0);
    let pi = 1.0 / (1.0 + (-(x1 - 0.5 * x2)).exp());
    let a = rng.random::<f64>() < pi;
    let eps = error.draw(rng);
    let u_c = rng.random::<f64>();
    SingleDraw {
        x: [x1, x2],
        a,
        eps,
        u_c,
    }
}

pub fn generate_single_stage(design: &SingleStageDesign) -> Result<SurvivalSample> {
    design.validate()?;
    let c0 = censoring_constant(&design.key(), design.censor_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let n = design.n;
    let mut x = Vec::with_capacity(2 * n);
    let mut treatment = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for _ in 0..n {
        let d = single_draw(&mut rng, design.error);
        let t = inverse_transform(single_outcome_lp(d.x[0], d.x[1], d.a) + d.eps);
        let c = d.u_c * c0;
        x.extend_from_slice(&d.x);
        treatment.push(d.a);
        time.push(t.min(c));
        event.push(t <= c);
    }
    SurvivalSample::new(Covariates::new(n, 2, x)?, treatment, time, event)
}

/// Event rate before the interim time in scenario 1, 2 or 3.
pub fn lambda1(scenario: u8, a0: bool, x0: f64) -> f64 {
    let a0 = f64::from(u8::from(a0));
    match scenario {
        1 => 0.5 * (1.75 * (a0 - 0.5) * (x0 - 2.0)).exp(),
        2 => 0.1 * (2.0 * (a0 - 0.5) * (x0 - 2.0)).exp(),
        _ => 0.2 * (1.5 * (a0 - 0.3) * (x0 - 3.0)).exp(),
    }
}

/// Event rate after the interim time.
pub fn lambda2(scenario: u8, a0: bool, a1: bool, x0: f64, x1: f64) -> f64 {
    let a0 = f64::from(u8::from(a0));
    let a1 = f64::from(u8::from(a1));
    match scenario {
        1 => 0.3 * (2.5 * (a1 - 0.4) * (x1 - 2.0) - a0 * (x1 - 2.0)).exp(),
        2 => 0.2 * (3.0 * (a1 - 0.4) * (x1 - 2.0) - 3.0 * (a0 - 0.5) * (x0 - 2.0)).exp(),
        _ => 0.3 * (2.0 * (a1 - 0.5) * (x1 - 2.0) + 0.5 * (a0 - 0.7) * (x0 - 1.0)).exp(),
    }
}

fn interim_covariate(x0: f64, a0: bool, e: f64) -> f64 {
    0.5 * x0 - 0.4 * (f64::from(u8::from(a0)) - 0.5) + e
}

/// Two-decision design with the interim decision at `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageDesign {
    pub scenario: u8,
    pub n: usize,
    pub censor_rate: f64,
    pub seed: u64,
}

pub const INTERIM_TIME: f64 = 1.0;

impl TwoStageDesign {
    pub fn new(scenario: u8, n: usize, censor_rate: f64, seed: u64) -> Self {
        Self {
            scenario,
            n,
            censor_rate,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.scenario) {
            return Err(Error::Validation(format!("unknown scenario {}", self.scenario)));
        }
        if self.n < 10 {
            return Err(Error::Validation("simulated samples need at least 10 subjects".into()));
        }
        if !(self.censor_rate > 0.0 && self.censor_rate < 1.0) {
            return Err(Error::Validation("censoring rate must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Target time: 6 for scenario 2, else 3.
    pub fn t(&self) -> f64 {
        if self.scenario == 2 {
            6.0
        } else {
            3.0
        }
    }

    /// Best regime within the linear class, stage 0 by grid search.
    pub fn optimal_regime(&self) -> TwoStageRegime {
        let eta0 = match self.scenario {
            1 => vec![0.890, -0.456],
            2 => vec![-0.891, 0.454],
            _ => vec![0.908, -0.419],
        };
        TwoStageRegime::new(eta0, stage1_optimal(), Stage1Features::InterimOnly).expect("nonzero")
    }

    fn key(&self) -> String {
        format!("two_stage_{}", self.scenario)
    }
}

/// `I(2 - X1 > 0)`, normalized.
fn stage1_optimal() -> Vec<f64> {
    vec![2.0, -1.0]
}

struct TwoDraw {
    x0: f64,
    a0: bool,
    e1: f64,
    u_c: f64,
    e: f64,
    a1: bool,
    e2: f64,
}

fn two_draw(rng: &mut ChaCha8Rng) -> TwoDraw {
    TwoDraw {
        x0: rng.random_range(0.0..4.0),
        a0: rng.random::<bool>(),
        e1: Exp1.sample(rng),
        u_c: rng.random::<f64>(),
        e: rng.random_range(0.0..2.0),
        a1: rng.random::<bool>(),
        e2: Exp1.sample(rng),
    }
}

/// Survival time under decisions chosen by `pick(a0, x1)`.
fn two_stage_time(scenario: u8, d: &TwoDraw, a0: bool, pick_a1: impl Fn(f64) -> bool) -> (f64, f64) {
    let t1 = d.e1 / lambda1(scenario, a0, d.x0);
    let x1 = interim_covariate(d.x0, a0, d.e);
    if t1 <= INTERIM_TIME {
        return (t1, x1);
    }
    let a1 = pick_a1(x1);
    (INTERIM_TIME + d.e2 / lambda2(scenario, a0, a1, d.x0, x1), x1)
}

pub fn generate_two_stage(design: &TwoStageDesign) -> Result<TwoStageSample> {
    design.validate()?;
    let c0 = censoring_constant(&design.key(), design.censor_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let n = design.n;
    let mut x0 = Vec::with_capacity(n);
    let mut a0 = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut a1 = Vec::with_capacity(n);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for _ in 0..n {
        let d = two_draw(&mut rng);
        let (t, x1) = two_stage_time(design.scenario, &d, d.a0, |_| d.a1);
        let c = d.u_c * c0;
        let obs = t.min(c);
        x0.push(d.x0);
        a0.push(d.a0);
        if obs > INTERIM_TIME {
            rows.push(Some(vec![x1]));
            a1.push(Some(d.a1));
        } else {
            rows.push(None);
            a1.push(None);
        }
        time.push(obs);
        event.push(t <= c);
    }
    TwoStageSample::new(Covariates::new(n, 1, x0)?, a0, INTERIM_TIME, rows, a1, time, event)
}

/// `P(C < T)` for `C ~ U(0, c0)` is `E{min(T, c0)} / c0`; solved for `c0` by
/// bisection on a fixed large draw of `T`.
fn calibrate(times: &[f64], target: f64) -> f64 {
    let rate = |c0: f64| times.iter().map(|t| t.min(c0)).sum::<f64>() / (c0 * times.len() as f64);
    let (mut lo, mut hi) = (1e-6_f64, 1e6_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if rate(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Censoring constant for a design key such as `single_extreme_value` or
/// `two_stage_2`, computed from a fixed-seed draw.
pub fn calibrate_censoring(key: &str, target: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
    let times: Vec<f64> = match key {
        "single_extreme_value" | "single_logistic" => {
            let error = if key == "single_logistic" {
                ErrorDist::Logistic
            } else {
                ErrorDist::ExtremeValue
            };
            (0..CALIBRATION_DRAWS)
                .map(|_| {
                    let d = single_draw(&mut rng, error);
                    inverse_transform(single_outcome_lp(d.x[0], d.x[1], d.a) + d.eps)
                })
                .collect()
        }
        "two_stage_1" | "two_stage_2" | "two_stage_3" => {
            let scenario = key.as_bytes()[key.len() - 1] - b'0';
            (0..CALIBRATION_DRAWS)
                .map(|_| {
                    let d = two_draw(&mut rng);
                    two_stage_time(scenario, &d, d.a0, |_| d.a1).0
                })
                .collect()
        }
        _ => return Err(Error::Validation(format!("unknown design {key}"))),
    };
    Ok(calibrate(&times, target))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CensoringEntry {
    design: String,
    rate: f64,
    c0: f64,
}

fn stored_constants() -> &'static [CensoringEntry] {
    static TABLE: OnceLock<Vec<CensoringEntry>> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(include_str!("../data/censoring.json")).expect("valid censoring fixture"))
}

/// Stored calibration constant, or a fresh calibration for other rates.
pub fn censoring_constant(key: &str, rate: f64) -> Result<f64> {
    if let Some(e) = stored_constants().iter().find(|e| e.design == key && e.rate == rate) {
        return Ok(e.c0);
    }
    static CACHE: OnceLock<std::sync::Mutex<BTreeMap<(String, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let k = (key.to_string(), rate.to_bits());
    if let Some(c) = cache.lock().expect("cache lock").get(&k) {
        return Ok(*c);
    }
    let c = calibrate_censoring(key, rate)?;
    cache.lock().expect("cache lock").insert(k, c);
    Ok(c)
}

/// Every stored `(design, rate, c0)` triple.
pub fn stored_censoring_constants() -> Vec<(String, f64, f64)> {
    stored_constants()
        .iter()
        .map(|e| (e.design.clone(), e.rate, e.c0))
        .collect()
}

/// Fixed Monte-Carlo population of potential outcomes for oracle values.
pub struct SinglePopulation {
    x: Vec<[f64; 2]>,
    /// `T(a) > t` for `a = 0, 1`.
    survives: Vec<[bool; 2]>,
}

impl SinglePopulation {
    pub fn new(error: ErrorDist, t: f64, n_mc: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cut = transform(t);
        let mut x = Vec::with_capacity(n_mc);
        let mut survives = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let d = single_draw(&mut rng, error);
            x.push(d.x);
            survives.push([false, true].map(|a| single_outcome_lp(d.x[0], d.x[1], a) + d.eps > cut));
        }
        Self { x, survives }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn value(&self, regime: &LinearRegime) -> f64 {
        let hits = self
            .x
            .iter()
            .zip(&self.survives)
            .filter(|(x, s)| s[usize::from(regime.treats(&x[..]))])
            .count();
        hits as f64 / self.x.len() as f64
    }

    pub fn misclassification(&self, estimate: &LinearRegime, truth: &LinearRegime) -> f64 {
        misclassification_rate(estimate, truth, &self.covariates())
    }

    pub fn covariates(&self) -> Covariates {
        Covariates::new(self.x.len(), 2, self.x.iter().flatten().copied().collect()).expect("shape")
    }
}

/// Fraction of covariate rows on which two rules disagree.
pub fn misclassification_rate(estimate: &LinearRegime, truth: &LinearRegime, covariates: &Covariates) -> f64 {
    if covariates.nrows() == 0 {
        return 0.0;
    }
    let miss = covariates
        .rows()
        .filter(|x| estimate.treats(x) != truth.treats(x))
        .count();
    miss as f64 / covariates.nrows() as f64
}

pub struct TwoStagePopulation {
    scenario: u8,
    t: f64,
    draws: Vec<TwoDraw>,
}

impl TwoStagePopulation {
    pub fn new(scenario: u8, t: f64, n_mc: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            scenario,
            t,
            draws: (0..n_mc).map(|_| two_draw(&mut rng)).collect(),
        }
    }

    pub fn value(&self, regime: &TwoStageRegime) -> f64 {
        let hits = self
            .draws
            .iter()
            .filter(|d| {
                let x0 = [d.x0];
                let a0 = regime.treats0(&x0);
                let (t, _) = two_stage_time(self.scenario, d, a0, |x1| regime.treats1(&x0, &[x1]));
                t > self.t
            })
            .count();
        hits as f64 / self.draws.len() as f64
    }

    /// Disagreement at either decision along the trajectory of `truth`;
    /// the second decision counts only for members alive at the interim
    /// time.
    pub fn misclassification(&self, estimate: &TwoStageRegime, truth: &TwoStageRegime) -> f64 {
        let miss = self
            .draws
            .iter()
            .filter(|d| {
                let x0 = [d.x0];
                let a0 = truth.treats0(&x0);
                if estimate.treats0(&x0) != a0 {
                    return true;
                }
                let t1 = d.e1 / lambda1(self.scenario, a0, d.x0);
                if t1 <= INTERIM_TIME {
                    return false;
                }
                let x1 = [interim_covariate(d.x0, a0, d.e)];
                estimate.treats1(&x0, &x1) != truth.treats1(&x0, &x1)
            })
            .count();
        miss as f64 / self.draws.len() as f64
    }

    /// Best stage-0 rule over `steps` angles, stage 1 held at its optimum.
    pub fn stage0_grid_search(&self, steps: usize) -> (TwoStageRegime, f64) {
        let mut best: Option<(TwoStageRegime, f64)> = None;
        for k in 0..steps {
            let a = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
            let r = TwoStageRegime::new(vec![a.cos(), a.sin()], stage1_optimal(), Stage1Features::InterimOnly)
                .expect("unit vector");
            let v = self.value(&r);
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((r, v));
            }
        }
        best.expect("at least one angle")
    }
}

/// Regime for [`oracle_value`].
pub enum OracleTarget<'a> {
    Single { regime: &'a LinearRegime, error: ErrorDist },
    TwoStage { regime: &'a TwoStageRegime, scenario: u8 },
}

/// Monte-Carlo survival probability at `t` when everyone follows the regime.
pub fn oracle_value(target: OracleTarget<'_>, t: f64, n_mc: usize, seed: u64) -> Result<f64> {
    if n_mc < 100_000 {
        return Err(Error::Validation("oracle values need at least 1e5 draws".into()));
    }
    Ok(match target {
        OracleTarget::Single { regime, error } => {
            if regime.n_covariates() != 2 {
                return Err(Error::Validation("single-stage regimes have two covariates".into()));
            }
            SinglePopulation::new(error, t, n_mc, seed).value(regime)
        }
        OracleTarget::TwoStage { regime, scenario } => {
            if !(1..=3).contains(&scenario) {
                return Err(Error::Validation(format!("unknown scenario {scenario}")));
            }
            TwoStagePopulation::new(scenario, t, n_mc, seed).value(regime)
        }
    })
}

/// How the propensity score is modeled in a single-stage study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsSpec {
    /// Logistic on `(X1, X2)`, which contains the truth.
    TrueModel,
    /// Intercept only.
    InterceptOnly,
}

/// One estimator to run in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub label: String,
    pub method: Method,
    pub smoothing: SmoothingSpec,
    pub ps: PsSpec,
}

impl EstimatorConfig {
    pub fn new(method: Method, smoothed: bool, ps: PsSpec) -> Self {
        let name = match method {
            Method::Ipsw => "I",
            Method::Aipsw => "A",
        };
        let label = format!(
            "{}{}/{}",
            if smoothed { "S-" } else { "" },
            name,
            match ps {
                PsSpec::TrueModel => "T",
                PsSpec::InterceptOnly => "F",
            }
        );
        Self {
            label,
            method,
            smoothing: if smoothed {
                SmoothingSpec::smooth()
            } else {
                SmoothingSpec::hard()
            },
            ps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySettings {
    pub replications: usize,
    pub seed: u64,
    pub population_size: usize,
    pub generations: usize,
    pub restarts: usize,
    pub tolerance: f64,
    /// Oracle population size.
    pub n_mc: usize,
    pub level: f64,
    /// Bootstrap replicates per replication where no plug-in exists.
    pub bootstrap: usize,
}

impl StudySettings {
    pub fn new(replications: usize, seed: u64) -> Self {
        let d = SearchConfig::new(Functional::SurvivalAt { t: 1.0 }, SmoothingSpec::smooth(), 0);
        Self {
            replications,
            seed,
            population_size: d.population_size,
            generations: d.generations,
            restarts: d.restarts,
            tolerance: d.tolerance,
            n_mc: 500_000,
            level: 0.95,
            bootstrap: 100,
        }
    }

    fn search(&self, t: f64, smoothing: SmoothingSpec, seed: u64) -> SearchConfig {
        SearchConfig {
            population_size: self.population_size,
            generations: self.generations,
            restarts: self.restarts,
            tolerance: self.tolerance,
            ..SearchConfig::new(Functional::SurvivalAt { t }, smoothing, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyDesign {
    Single(SingleStageDesign),
    TwoStage(TwoStageDesign),
}

/// One estimator on one simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub label: String,
    pub eta: Vec<f64>,
    pub estimate: f64,
    pub se: f64,
    pub covers: bool,
    pub oracle: f64,
    pub misclassification: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub label: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub eta_mean: Vec<f64>,
    pub eta_sd: Vec<f64>,
    pub estimate_mean: f64,
    pub estimate_sd: f64,
    pub se_mean: f64,
    pub coverage: f64,
    pub oracle_mean: f64,
    pub oracle_sd: f64,
    pub misclassification_mean: f64,
    pub misclassification_sd: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub design: StudyDesign,
    pub settings: StudySettings,
    pub estimators: Vec<EstimatorConfig>,
    /// Oracle value of the optimal regime in the class.
    pub truth: f64,
    pub optimal_eta: Vec<f64>,
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    /// Wall-clock seconds; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    if x.len() < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (m, v.sqrt())
}

fn aggregate(label: &str, records: &[&ReplicationRecord], failures: usize) -> StudyRow {
    let dim = records.first().map_or(0, |r| r.eta.len());
    let col = |f: &dyn Fn(&ReplicationRecord) -> f64| -> Vec<f64> { records.iter().map(|r| f(r)).collect() };
    let (eta_mean, eta_sd): (Vec<f64>, Vec<f64>) = (0..dim).map(|j| mean_sd(&col(&|r| r.eta[j]))).unzip();
    let (estimate_mean, estimate_sd) = mean_sd(&col(&|r| r.estimate));
    let (se_mean, _) = mean_sd(&col(&|r| r.se));
    let (coverage, _) = mean_sd(&col(&|r| f64::from(u8::from(r.covers))));
    let (oracle_mean, oracle_sd) = mean_sd(&col(&|r| r.oracle));
    let (mr_mean, mr_sd) = mean_sd(&col(&|r| r.misclassification));
    StudyRow {
        label: label.to_string(),
        eta_mean,
        eta_sd,
        estimate_mean,
        estimate_sd,
        se_mean,
        coverage,
        oracle_mean,
        oracle_sd,
        misclassification_mean: mr_mean,
        misclassification_sd: mr_sd,
        successes: records.len(),
        failures,
    }
}

type Outcome = std::result::Result<ReplicationRecord, ReplicationFailure>;

fn single_replication(
    design: &SingleStageDesign,
    estimators: &[EstimatorConfig],
    settings: &StudySettings,
    population: &SinglePopulation,
    truth: f64,
    r: usize,
) -> Vec<Outcome> {
    let seed = derive_seed(settings.seed, r as u64);
    let fail = |label: &str, e: Error| ReplicationFailure {
        replication: r,
        label: label.to_string(),
        error: e.to_string(),
    };
    let sample = match generate_single_stage(&SingleStageDesign { seed, ..*design }) {
        Ok(s) => s,
        Err(e) => {
            return estimators
                .iter()
                .map(|c| Err(fail(&c.label, e.to_string_error())))
                .collect()
        }
    };
    let optimal = SingleStageDesign::optimal_regime();
    estimators
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let run = || -> Result<ReplicationRecord> {
                let ps = match cfg.ps {
                    PsSpec::TrueModel => PropensityModel::Logistic { columns: None },
                    PsSpec::InterceptOnly => PropensityModel::Constant,
                };
                let fit = NuisanceSpec::new(cfg.method, ps).fit(&sample)?;
                let est = fit.estimator(&sample)?;
                let search = settings.search(design.t, cfg.smoothing, derive_seed(seed, 1 + c as u64));
                let found = maximize_value(&est, &LinearSpace { p: 2 }, &search)?;
                let pl = plugin(&sample, &fit, &found.regime, &cfg.smoothing, design.t)?;
                let ci = wald_interval(found.value, pl.se, settings.level);
                Ok(ReplicationRecord {
                    replication: r,
                    label: cfg.label.clone(),
                    eta: found.regime.eta().to_vec(),
                    estimate: found.value,
                    se: pl.se,
                    covers: ci.covers(truth),
                    oracle: population.value(&found.regime),
                    misclassification: population.misclassification(&found.regime, &optimal),
                })
            };
            run().map_err(|e| fail(&cfg.label, e))
        })
        .collect()
}

trait IntoError {
    fn to_string_error(&self) -> Error;
}

impl IntoError for Error {
    fn to_string_error(&self) -> Error {
        Error::Validation(self.to_string())
    }
}

fn two_stage_replication(
    design: &TwoStageDesign,
    estimators: &[EstimatorConfig],
    settings: &StudySettings,
    population: &TwoStagePopulation,
    truth: f64,
    r: usize,
) -> Vec<Outcome> {
    let seed = derive_seed(settings.seed, r as u64);
    let fail = |label: &str, e: &Error| ReplicationFailure {
        replication: r,
        label: label.to_string(),
        error: e.to_string(),
    };
    let sample = match generate_two_stage(&TwoStageDesign { seed, ..*design }) {
        Ok(s) => s,
        Err(e) => return estimators.iter().map(|c| Err(fail(&c.label, &e))).collect(),
    };
    let optimal = design.optimal_regime();
    let ps = TwoStagePropensity::Known {
        stage0: 0.5,
        stage1: 0.5,
    };
    let space = TwoStageSpace {
        p0: 1,
        p1: 1,
        features: Stage1Features::InterimOnly,
    };
    estimators
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let run = || -> Result<ReplicationRecord> {
                let fit = TwoStageFit::new(&sample, &ps, CensorLimit::Left)?;
                let est = fit.estimator(&sample)?;
                let search = settings.search(design.t(), cfg.smoothing, derive_seed(seed, 1 + c as u64));
                let found = maximize_value(&est, &space, &search)?;
                let boot = BootstrapConfig {
                    replicates: settings.bootstrap,
                    level: settings.level,
                    seed: derive_seed(seed, 1000 + c as u64),
                    refit_models: true,
                    re_optimize: false,
                };
                let b = bootstrap_two_stage(&sample, &ps, CensorLimit::Left, &found.regime, &search, &boot)?;
                let ci = wald_interval(found.value, b.result.se, settings.level);
                let mut eta = found.regime.eta0().to_vec();
                eta.extend_from_slice(found.regime.eta1());
                Ok(ReplicationRecord {
                    replication: r,
                    label: cfg.label.clone(),
                    eta,
                    estimate: found.value,
                    se: b.result.se,
                    covers: ci.covers(truth),
                    oracle: population.value(&found.regime),
                    misclassification: population.misclassification(&found.regime, &optimal),
                })
            };
            run().map_err(|e| fail(&cfg.label, &e))
        })
        .collect()
}

/// Runs `replications` of generate, fit, search and evaluate for every
/// estimator; a given seed always produces the same report.
pub fn run_study(
    design: &StudyDesign,
    estimators: &[EstimatorConfig],
    settings: &StudySettings,
) -> Result<StudyReport> {
    if settings.replications < 1 {
        return Err(Error::Validation("at least one replication is required".into()));
    }
    if estimators.is_empty() {
        return Err(Error::Validation("at least one estimator is required".into()));
    }
    let start = Instant::now();
    let pop_seed = derive_seed(settings.seed, u64::MAX);
    let (outcomes, truth, optimal_eta): (Vec<Vec<Outcome>>, f64, Vec<f64>) = match design {
        StudyDesign::Single(d) => {
            d.validate()?;
            let population = SinglePopulation::new(d.error, d.t, settings.n_mc, pop_seed);
            let optimal = SingleStageDesign::optimal_regime();
            let truth = population.value(&optimal);
            let out = (0..settings.replications)
                .into_par_iter()
                .map(|r| single_replication(d, estimators, settings, &population, truth, r))
                .collect();
            (out, truth, optimal.eta().to_vec())
        }
        StudyDesign::TwoStage(d) => {
            d.validate()?;
            let population = TwoStagePopulation::new(d.scenario, d.t(), settings.n_mc, pop_seed);
            let optimal = d.optimal_regime();
            let truth = population.value(&optimal);
            let out = (0..settings.replications)
                .into_par_iter()
                .map(|r| two_stage_replication(d, estimators, settings, &population, truth, r))
                .collect();
            let mut eta = optimal.eta0().to_vec();
            eta.extend_from_slice(optimal.eta1());
            (out, truth, eta)
        }
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let total = settings.replications * estimators.len();
    if failures.len() as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::StudyFailure {
            failed: failures.len(),
            total,
        });
    }
    let rows = estimators
        .iter()
        .map(|c| {
            let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.label == c.label).collect();
            let failed = failures.iter().filter(|f| f.label == c.label).count();
            aggregate(&c.label, &recs, failed)
        })
        .collect();
    Ok(StudyReport {
        design: design.clone(),
        settings: *settings,
        estimators: estimators.to_vec(),
        truth,
        optimal_eta,
        rows,
        records,
        failures,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

impl StudyReport {
    pub fn row(&self, label: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table: mean (sd) of each coefficient, of the estimate, mean
    /// SE, coverage, oracle value and misclassification rate.
    pub fn to_text(&self) -> String {
        let dim = self.optimal_eta.len();
        let mut header = vec!["method".to_string()];
        header.extend((0..dim).map(|j| format!("eta{j}")));
        header.extend(["S(eta_hat)", "SE", "CP", "S_true(eta_hat)", "MR", "ok"].map(String::from));
        let pair = |m: f64, s: f64| format!("{m:.3} ({s:.3})");
        let mut table: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut line = vec![r.label.clone()];
            line.extend((0..dim).map(|j| {
                pair(
                    r.eta_mean.get(j).copied().unwrap_or(f64::NAN),
                    r.eta_sd.get(j).copied().unwrap_or(f64::NAN),
                )
            }));
            line.push(pair(r.estimate_mean, r.estimate_sd));
            line.push(format!("{:.3}", r.se_mean));
            line.push(format!("{:.3}", r.coverage));
            line.push(pair(r.oracle_mean, r.oracle_sd));
            line.push(pair(r.misclassification_mean, r.misclassification_sd));
            line.push(format!("{}/{}", r.successes, r.successes + r.failures));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|l| l[j].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "true optimal value {:.4}, optimal eta ({})",
            self.truth,
            self.optimal_eta
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
        for line in &table {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  "));
        }
        out
    }
}
