//! Estimation of optimal individualized treatment regimes that maximize a
//! t-year survival probability from right-censored data.

// `!(x > 0.0)` is how NaN gets rejected; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod curve;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod models;
pub mod optimize;
pub mod regime;
pub mod simulation;

pub use analysis::{
    CensorModel, Method, NuisanceSpec, PropensityFit, PropensityModel, SingleStageFit, TwoStageFit, TwoStagePropensity,
};
pub use curve::{CurveKind, Side, StepCurve};
pub use data::{
    load_survival_csv, load_two_stage_csv, write_survival_csv, write_two_stage_csv, Covariates, CsvSchema,
    SurvivalSample, TwoStageSample, TwoStageSchema,
};
pub use error::{Error, ErrorClass, Result};
pub use estimators::{censoring_km, weighted_km};
pub use inference::{
    bootstrap_inference, bootstrap_two_stage, compare_to_simple, plugin, BootstrapConfig, Comparison, InferenceMethod,
    InferenceResult, PluginEstimate,
};
pub use models::{fit_cox, fit_logistic, CoxFit, LogisticFit};
pub use optimize::{maximize_value, LinearSpace, SearchConfig, SearchResult, TwoStageSpace};
pub use regime::{
    AipswValue, CensorLimit, Functional, IpswValue, LinearRegime, SmoothingSpec, Stage1Features, TwoStageRegime,
    TwoStageValue, ValueEstimator,
};
pub use simulation::{
    oracle_value, run_study, ErrorDist, EstimatorConfig, OracleTarget, PsSpec, SingleStageDesign, StudyDesign,
    StudyReport, StudySettings, TwoStageDesign,
};
