use survregime::optimize::angular_grid_search;
use survregime::simulation::generate_single_stage;
use survregime::{
    maximize_value, Covariates, ErrorDist, Functional, IpswValue, LinearSpace, SearchConfig, SingleStageDesign,
    SmoothingSpec, SurvivalSample, ValueEstimator,
};

/// Simulated sample reduced to its first covariate, so regimes live on the
/// unit circle and a dense angular grid is an exact reference.
fn one_covariate(seed: u64) -> SurvivalSample {
    let s = generate_single_stage(&SingleStageDesign::new(200, ErrorDist::ExtremeValue, 0.15, 2.0, seed)).unwrap();
    let x: Vec<f64> = s.covariates().column(0).collect();
    SurvivalSample::new(
        Covariates::new(s.len(), 1, x).unwrap(),
        s.treatment().to_vec(),
        s.time().to_vec(),
        s.event().to_vec(),
    )
    .unwrap()
}

#[test]
fn search_reaches_the_dense_grid_optimum() {
    for seed in 0..4 {
        let s = one_covariate(seed);
        let ps = vec![0.5; s.len()];
        let est = IpswValue::new(&s, &ps).unwrap();
        for smoothing in [SmoothingSpec::hard(), SmoothingSpec::smooth()] {
            let cfg = SearchConfig::new(Functional::SurvivalAt { t: 2.0 }, smoothing, 100 + seed);
            let (_, grid) = angular_grid_search(&est, &cfg, 3600).unwrap();
            let found = maximize_value(&est, &LinearSpace { p: 1 }, &cfg).unwrap();
            assert!(
                found.value >= grid - 1e-9,
                "seed {seed}: search {} < grid {grid}",
                found.value
            );
            let again = est.value(&found.regime, &cfg.smoothing, &cfg.target).unwrap();
            assert_eq!(again, found.value);
        }
    }
}

#[test]
fn search_is_reproducible_across_thread_counts() {
    let s = generate_single_stage(&SingleStageDesign::new(150, ErrorDist::Logistic, 0.4, 2.0, 5)).unwrap();
    let ps = vec![0.5; s.len()];
    let est = IpswValue::new(&s, &ps).unwrap();
    let cfg = SearchConfig::new(Functional::SurvivalAt { t: 2.0 }, SmoothingSpec::smooth(), 77);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| maximize_value(&est, &LinearSpace { p: 2 }, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.regime, b.regime);
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.diagnostics, b.diagnostics);
    let other = maximize_value(&est, &LinearSpace { p: 2 }, &SearchConfig { seed: 78, ..cfg }).unwrap();
    assert!(other.value <= a.value + 0.05);
}

#[test]
fn invalid_configurations_are_rejected() {
    let s = one_covariate(1);
    let ps = vec![0.5; s.len()];
    let est = IpswValue::new(&s, &ps).unwrap();
    let base = SearchConfig::new(Functional::SurvivalAt { t: 2.0 }, SmoothingSpec::smooth(), 1);
    for bad in [
        SearchConfig {
            population_size: 3,
            ..base
        },
        SearchConfig { generations: 0, ..base },
        SearchConfig { crossover: 1.5, ..base },
        SearchConfig { restarts: 0, ..base },
    ] {
        assert!(maximize_value(&est, &LinearSpace { p: 1 }, &bad).is_err());
    }
}
