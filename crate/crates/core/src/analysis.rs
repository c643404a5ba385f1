//! Nuisance models behind the value estimators: propensity scores, the
//! outcome working model and the censoring distribution.

use serde::{Deserialize, Serialize};

use crate::curve::StepCurve;
use crate::data::{Covariates, SurvivalSample, TwoStageSample};
use crate::error::{Error, Result};
use crate::estimators::{censoring_km, stratified_censoring_km};
use crate::models::{fit_cox, fit_logistic, CoxFit, LogisticFit};
use crate::regime::{
    AipswValue, CensorLimit, CensoringCurve, IpswValue, LinearRegime, SmoothingSpec, TwoStageValue, ValueEstimator,
};

/// How propensity scores are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityModel {
    /// Logistic regression on the listed covariate columns (all when
    /// `None`); an empty list is intercept-only.
    Logistic { columns: Option<Vec<usize>> },
    /// Intercept-only logistic model, the right choice for randomized data.
    Constant,
    /// Probabilities supplied from outside.
    Known(Vec<f64>),
}

/// Fitted propensity scores together with what the inference code needs to
/// perturb them.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    pub probabilities: Vec<f64>,
    /// Logistic fit and its design (intercept first), absent for known scores.
    pub logistic: Option<(LogisticFit, Covariates)>,
}

impl PropensityFit {
    pub fn known(probabilities: Vec<f64>) -> Self {
        Self {
            probabilities,
            logistic: None,
        }
    }

    /// Probabilities under alternative coefficients.
    pub fn probabilities_at(&self, theta: &[f64]) -> Vec<f64> {
        match &self.logistic {
            Some((fit, design)) => {
                let alt = LogisticFit {
                    theta: theta.to_vec(),
                    ..fit.clone()
                };
                design.rows().map(|x| alt.predict(x)).collect()
            }
            None => self.probabilities.clone(),
        }
    }
}

pub fn fit_propensity(covariates: &Covariates, treatment: &[bool], model: &PropensityModel) -> Result<PropensityFit> {
    let columns: Vec<usize> = match model {
        PropensityModel::Known(p) => {
            if p.len() != treatment.len() {
                return Err(Error::Validation("one known propensity per subject required".into()));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Validation("propensities must lie in [0, 1]".into()));
            }
            return Ok(PropensityFit::known(p.clone()));
        }
        PropensityModel::Constant => Vec::new(),
        PropensityModel::Logistic { columns: None } => (0..covariates.ncols()).collect(),
        PropensityModel::Logistic { columns: Some(c) } => {
            if c.iter().any(|&j| j >= covariates.ncols()) {
                return Err(Error::Validation("propensity column index out of range".into()));
            }
            c.clone()
        }
    };
    let design = covariates.select_columns(&columns).with_intercept();
    let fit = fit_logistic(&design, treatment)?;
    let probabilities = design.rows().map(|x| fit.predict(x)).collect();
    Ok(PropensityFit {
        probabilities,
        logistic: Some((fit, design)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Ipsw,
    Aipsw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CensorModel {
    #[default]
    Marginal,
    Stratified,
}

pub fn fit_censoring(sample: &SurvivalSample, model: CensorModel) -> Result<CensoringCurve> {
    Ok(match model {
        CensorModel::Marginal => CensoringCurve::Marginal(censoring_km(sample.time(), sample.event())?),
        CensorModel::Stratified => {
            let (control, treated) = stratified_censoring_km(sample.time(), sample.event(), sample.treatment())?;
            CensoringCurve::Stratified { control, treated }
        }
    })
}

/// Everything fitted once per sample for a single-stage analysis.
#[derive(Debug, Clone)]
pub struct SingleStageFit {
    pub method: Method,
    pub propensity: PropensityFit,
    /// Outcome model and censoring curve, present for the augmented method.
    pub outcome: Option<(CoxFit, CensoringCurve, CensorModel)>,
}

impl SingleStageFit {
    pub fn new(sample: &SurvivalSample, method: Method, ps: &PropensityModel, censor: CensorModel) -> Result<Self> {
        let propensity = fit_propensity(sample.covariates(), sample.treatment(), ps)?;
        let outcome = match method {
            Method::Ipsw => None,
            Method::Aipsw => Some((fit_cox(sample)?, fit_censoring(sample, censor)?, censor)),
        };
        Ok(Self {
            method,
            propensity,
            outcome,
        })
    }

    pub fn estimator<'a>(&self, sample: &'a SurvivalSample) -> Result<SingleStageValue<'a>> {
        let ps = &self.propensity.probabilities;
        Ok(match &self.outcome {
            None => SingleStageValue::Ipsw(IpswValue::new(sample, ps)?),
            Some((cox, censor, _)) => SingleStageValue::Aipsw(AipswValue::new(sample, ps, cox, censor)?),
        })
    }
}

/// Either single-stage value estimator behind one type.
#[derive(Debug, Clone)]
pub enum SingleStageValue<'a> {
    Ipsw(IpswValue<'a>),
    Aipsw(AipswValue<'a>),
}

impl ValueEstimator for SingleStageValue<'_> {
    type Regime = LinearRegime;

    fn curve(&self, regime: &LinearRegime, smoothing: &SmoothingSpec, horizon: f64) -> Result<StepCurve> {
        match self {
            SingleStageValue::Ipsw(e) => e.curve(regime, smoothing, horizon),
            SingleStageValue::Aipsw(e) => e.curve(regime, smoothing, horizon),
        }
    }
}

/// Propensity scores for the two decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoStagePropensity {
    /// Same known probability for every subject at each stage.
    Known {
        stage0: f64,
        stage1: f64,
    },
    Constant,
    /// Stage 0 on the baseline covariates; stage 1 on `(X0, A0, X1)` among
    /// subjects who reached the interim time.
    Logistic,
}

#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub ps0: Vec<f64>,
    /// Zero where the subject did not reach the interim time.
    pub ps1: Vec<f64>,
    pub censor: StepCurve,
    pub limit: CensorLimit,
}

impl TwoStageFit {
    pub fn new(sample: &TwoStageSample, model: &TwoStagePropensity, limit: CensorLimit) -> Result<Self> {
        let n = sample.len();
        let alive = sample.alive_at_interim();
        let (ps0, ps1) = match model {
            TwoStagePropensity::Known { stage0, stage1 } => (
                vec![*stage0; n],
                alive.iter().map(|&a| if a { *stage1 } else { 0.0 }).collect(),
            ),
            TwoStagePropensity::Constant | TwoStagePropensity::Logistic => {
                let logistic = *model == TwoStagePropensity::Logistic;
                let x0 = if logistic {
                    sample.baseline().clone()
                } else {
                    sample.baseline().select_columns(&[])
                };
                let ps0 = fit_propensity(
                    &x0,
                    sample.stage0_treatment(),
                    &PropensityModel::Logistic { columns: None },
                )?
                .probabilities;
                let idx: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
                let mut ps1 = vec![0.0; n];
                if !idx.is_empty() {
                    let rows: Vec<Vec<f64>> = idx
                        .iter()
                        .map(|&i| {
                            if logistic {
                                let mut r = sample.baseline().row(i).to_vec();
                                r.push(f64::from(u8::from(sample.stage0_treatment()[i])));
                                r.extend_from_slice(sample.interim_row(i).unwrap_or(&[]));
                                r
                            } else {
                                Vec::new()
                            }
                        })
                        .collect();
                    let x1 = if logistic {
                        Covariates::from_rows(&rows)?
                    } else {
                        Covariates::new(idx.len(), 0, Vec::new())?
                    };
                    let a1: Vec<bool> = idx
                        .iter()
                        .map(|&i| sample.stage1_treatment()[i].unwrap_or(false))
                        .collect();
                    let fit = fit_propensity(&x1, &a1, &PropensityModel::Logistic { columns: None })?;
                    for (&i, p) in idx.iter().zip(fit.probabilities) {
                        ps1[i] = p;
                    }
                }
                (ps0, ps1)
            }
        };
        Ok(Self {
            ps0,
            ps1,
            censor: censoring_km(sample.time(), sample.event())?,
            limit,
        })
    }

    pub fn estimator<'a>(&self, sample: &'a TwoStageSample) -> Result<TwoStageValue<'a>> {
        TwoStageValue::new(sample, &self.ps0, &self.ps1, &self.censor, self.limit)
    }
}

/// Recipe for the single-stage nuisance fits, reusable on resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    pub method: Method,
    pub propensity: PropensityModel,
    pub censor: CensorModel,
}

impl NuisanceSpec {
    pub fn new(method: Method, propensity: PropensityModel) -> Self {
        Self {
            method,
            propensity,
            censor: CensorModel::Marginal,
        }
    }

    pub fn fit(&self, sample: &SurvivalSample) -> Result<SingleStageFit> {
        SingleStageFit::new(sample, self.method, &self.propensity, self.censor)
    }

    /// The same recipe for a resample; known scores follow their subjects.
    pub fn resample(&self, idx: &[usize]) -> Self {
        let propensity = match &self.propensity {
            PropensityModel::Known(p) => PropensityModel::Known(idx.iter().map(|&i| p[i]).collect()),
            other => other.clone(),
        };
        Self {
            propensity,
            ..self.clone()
        }
    }
}
