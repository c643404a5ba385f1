use proptest::prelude::*;
use survregime::estimators::weighted_nelson_aalen;
use survregime::regime::IpswValue;
use survregime::{
    weighted_km, Covariates, Functional, LinearRegime, SmoothingSpec, StepCurve, SurvivalSample, ValueEstimator,
};

/// `(time on a lattice, event, weight)` per subject, at least one event.
fn subjects() -> impl Strategy<Value = Vec<(f64, bool, f64)>> {
    prop::collection::vec((1u32..15, any::<bool>(), 0.05f64..4.0), 2..30)
        .prop_map(|v| {
            v.into_iter()
                .map(|(t, d, w)| (f64::from(t) / 2.0, d, w))
                .collect::<Vec<_>>()
        })
        .prop_filter("needs an event", |v| v.iter().any(|s| s.1))
}

fn unzip(v: &[(f64, bool, f64)]) -> (Vec<f64>, Vec<bool>, Vec<f64>) {
    (
        v.iter().map(|s| s.0).collect(),
        v.iter().map(|s| s.1).collect(),
        v.iter().map(|s| s.2).collect(),
    )
}

fn sample_with_covariates() -> impl Strategy<Value = (SurvivalSample, Vec<f64>)> {
    (
        subjects(),
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, any::<bool>(), 0.05f64..0.95), 30),
    )
        .prop_map(|(s, extra)| {
            let n = s.len();
            let (t, d, _) = unzip(&s);
            let x: Vec<f64> = extra[..n].iter().flat_map(|e| [e.0, e.1]).collect();
            let a: Vec<bool> = extra[..n].iter().map(|e| e.2).collect();
            let ps: Vec<f64> = extra[..n].iter().map(|e| e.3).collect();
            (
                SurvivalSample::new(Covariates::new(n, 2, x).unwrap(), a, t, d).unwrap(),
                ps,
            )
        })
}

fn monotone(curve: &StepCurve, increasing: bool) -> bool {
    let mut prev = curve.initial_value();
    curve.values().iter().all(|&v| {
        let ok = if increasing { v >= prev } else { v <= prev };
        prev = v;
        ok
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    fn positive_scaling_leaves_value_unchanged(
        (s, ps) in sample_with_covariates(),
        eta in prop::array::uniform3(-1.0f64..1.0),
        c in 0.01f64..100.0,
        smooth in any::<bool>(),
        t in 0.5f64..7.0,
    ) {
        prop_assume!(eta.iter().map(|v| v * v).sum::<f64>() > 1e-4);
        let spec = if smooth { SmoothingSpec::smooth() } else { SmoothingSpec::hard() };
        let est = IpswValue::new(&s, &ps).unwrap();
        let r1 = LinearRegime::new(eta.to_vec()).unwrap();
        let r2 = LinearRegime::new(eta.iter().map(|v| c * v).collect()).unwrap();
        let f = Functional::SurvivalAt { t };
        let v1 = est.value(&r1, &spec, &f);
        let v2 = est.value(&r2, &spec, &f);
        match (v1, v2) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    fn constant_weights_cancel(s in subjects(), c in 0.01f64..100.0) {
        let (t, d, _) = unzip(&s);
        let one = weighted_km(&t, &d, &vec![1.0; t.len()]).unwrap();
        let scaled = weighted_km(&t, &d, &vec![c; t.len()]).unwrap();
        prop_assert_eq!(one.jump_times(), scaled.jump_times());
        for (a, b) in one.values().iter().zip(scaled.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    fn uncensored_km_is_empirical_survival(s in subjects()) {
        let (t, _, _) = unzip(&s);
        let d = vec![true; t.len()];
        let curve = weighted_km(&t, &d, &vec![1.0; t.len()]).unwrap();
        for k in 0..16 {
            let u = f64::from(k) / 2.0;
            let emp = t.iter().filter(|&&ti| ti > u).count() as f64 / t.len() as f64;
            prop_assert!((curve.at(u) - emp).abs() < 1e-12, "at {u}: {} vs {emp}", curve.at(u));
        }
    }

    fn km_below_exp_minus_nelson_aalen(s in subjects()) {
        let (t, d, w) = unzip(&s);
        let km = weighted_km(&t, &d, &w).unwrap();
        let na = weighted_nelson_aalen(&t, &d, &w).unwrap();
        for k in 0..16 {
            let u = f64::from(k) / 2.0;
            prop_assert!(km.at(u) <= (-na.at(u)).exp() + 1e-12);
        }
    }

    fn curves_are_monotone_and_bounded(s in subjects()) {
        let (t, d, w) = unzip(&s);
        let km = weighted_km(&t, &d, &w).unwrap();
        let na = weighted_nelson_aalen(&t, &d, &w).unwrap();
        prop_assert!(monotone(&km, false));
        prop_assert!(km.values().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(monotone(&na, true));
        prop_assert!(km.jump_times().windows(2).all(|p| p[0] < p[1]));
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("positive scaling", positive_scaling_leaves_value_unchanged),
    ("constant weights", constant_weights_cancel),
    ("uncensored km", uncensored_km_is_empirical_survival),
    ("km vs exp(-na)", km_below_exp_minus_nelson_aalen),
    ("monotone curves", curves_are_monotone_and_bounded),
];
