//! Fixtures shared by the benchmarks.

use survregime::simulation::generate_single_stage;
use survregime::{
    ErrorDist, LinearRegime, Method, NuisanceSpec, PropensityModel, SingleStageDesign, SingleStageFit, SurvivalSample,
};

/// Single-stage simulated sample with 15% censoring.
pub fn sample(n: usize) -> SurvivalSample {
    generate_single_stage(&SingleStageDesign::new(n, ErrorDist::ExtremeValue, 0.15, 2.0, 17)).expect("valid design")
}

/// Nuisance models fitted with a logistic propensity.
pub fn fitted(sample: &SurvivalSample, method: Method) -> SingleStageFit {
    NuisanceSpec::new(method, PropensityModel::Logistic { columns: None })
        .fit(sample)
        .expect("fixture fits")
}

/// A regime near the truth, off by a few degrees.
pub fn regime() -> LinearRegime {
    LinearRegime::new(vec![0.05, 0.68, -0.73]).expect("valid")
}
