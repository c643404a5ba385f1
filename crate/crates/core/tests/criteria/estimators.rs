//! Each estimator against a from-scratch loop over the defining sums, on
//! small random instances with heavy ties.

use crate::common::*;
use rand::Rng;
use survregime::analysis::{fit_censoring, CensorModel};
use survregime::regime::{
    value_curve_aipsw, value_curve_ipsw, value_curve_two_stage, AipswValue, AugmentationParts, CensoringCurve,
};
use survregime::{
    censoring_km, fit_cox, weighted_km, CensorLimit, LinearRegime, SmoothingSpec, Stage1Features, SurvivalSample,
    TwoStageRegime, TwoStageSample, TwoStageValue, ValueEstimator,
};

const TOL: f64 = 1e-10;
const INSTANCES: usize = 100;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn smoothing(smooth: bool) -> SmoothingSpec {
    if smooth {
        SmoothingSpec::smooth()
    } else {
        SmoothingSpec::hard()
    }
}

fn weighted_km_matches_loop() {
    let mut rng = rng(11);
    for case in 0..INSTANCES {
        let n = rng.random_range(2..=20);
        let s = random_sample(&mut rng, n, 1);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        if case % 4 == 0 {
            w[0] = 0.0;
            w[n - 1] = 0.0;
        }
        if w.iter().all(|&v| v == 0.0) {
            w[0] = 1.0;
        }
        let curve = weighted_km(s.time(), s.event(), &w).unwrap();
        for u in query_points(s.time()) {
            let want = km_loop(s.time(), s.event(), &w, u);
            assert!(
                close(curve.at(u), want),
                "case {case} at {u}: {} vs {want}",
                curve.at(u)
            );
        }
    }
}

fn ipsw_weights_loop(s: &SurvivalSample, eta: &[f64], ps: &[f64], smooth: bool) -> Vec<f64> {
    let lp: Vec<f64> = s
        .covariates()
        .rows()
        .map(|x| eta[0] + x.iter().zip(&eta[1..]).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let g = assign_loop(&lp, smooth);
    (0..s.len())
        .map(|i| {
            let a = f64::from(u8::from(s.treatment()[i]));
            let p = clamp_ps(ps[i]);
            (a * g[i] + (1.0 - a) * (1.0 - g[i])) / (p * a + (1.0 - p) * (1.0 - a))
        })
        .collect()
}

fn ipsw_matches_loop() {
    let mut rng = rng(12);
    for case in 0..INSTANCES {
        let n = rng.random_range(3..=20);
        let p = rng.random_range(1..=3);
        let s = random_sample(&mut rng, n, p);
        let ps = random_propensity(&mut rng, n);
        let regime = LinearRegime::new(random_eta(&mut rng, p + 1)).unwrap();
        let smooth = case % 2 == 0;
        let w = ipsw_weights_loop(&s, regime.eta(), &ps, smooth);
        if w.iter().all(|&v| v == 0.0) {
            continue;
        }
        let curve = value_curve_ipsw(&s, &regime, &ps, &smoothing(smooth)).unwrap();
        for u in query_points(s.time()) {
            let want = km_loop(s.time(), s.event(), &w, u);
            assert!(
                close(curve.at(u), want),
                "case {case} at {u}: {} vs {want}",
                curve.at(u)
            );
        }
    }
}

/// Augmented product-limit with every sum written out per grid time.
#[allow(clippy::too_many_arguments)]
fn aipsw_loop(
    s: &SurvivalSample,
    eta: &[f64],
    ps: &[f64],
    smooth: bool,
    beta: &[f64],
    jumps: &[f64],
    censor_left: &dyn Fn(bool, usize) -> f64,
    u: f64,
) -> f64 {
    let n = s.len();
    let p = s.n_covariates();
    let w = ipsw_weights_loop(s, eta, ps, smooth);
    let lp: Vec<f64> = s
        .covariates()
        .rows()
        .map(|x| eta[0] + x.iter().zip(&eta[1..]).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let g = assign_loop(&lp, smooth);
    let mut grid: Vec<f64> = (0..n).filter(|&i| s.event()[i]).map(|i| s.time()[i]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let risk = |i: usize, a: bool| -> f64 {
        let x = s.covariates().row(i);
        let mut v: f64 = (0..p).map(|j| beta[j] * x[j]).sum();
        if a {
            v += beta[p] + (0..p).map(|j| beta[p + 1 + j] * x[j]).sum::<f64>();
        }
        v.exp()
    };
    let mut surv = 1.0;
    for (k, &sk) in grid.iter().enumerate() {
        if sk > u {
            break;
        }
        let cum: f64 = jumps[..k].iter().sum();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let ti = s.time()[i];
            if ti == sk && s.event()[i] {
                num += w[i];
            }
            if ti >= sk {
                den += w[i];
            }
            for (a, mix) in [(true, g[i]), (false, 1.0 - g[i])] {
                let r = risk(i, a);
                let q = (-cum * r).exp() * censor_left(a, k);
                num += (1.0 - w[i]) * mix * q * r * jumps[k];
                den += (1.0 - w[i]) * mix * q;
            }
        }
        if den <= 0.0 {
            break;
        }
        surv *= (1.0 - num / den).max(0.0);
    }
    surv.min(1.0)
}

fn event_grid(s: &SurvivalSample) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..s.len()).filter(|&i| s.event()[i]).map(|i| s.time()[i]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn aipsw_matches_loop_for_arbitrary_parts() {
    let mut rng = rng(13);
    for case in 0..INSTANCES {
        let n = rng.random_range(3..=20);
        let p = rng.random_range(1..=2);
        let s = random_sample(&mut rng, n, p);
        let ps = random_propensity(&mut rng, n);
        let regime = LinearRegime::new(random_eta(&mut rng, p + 1)).unwrap();
        let smooth = case % 2 == 1;
        let k = event_grid(&s).len();
        let parts = AugmentationParts {
            beta: (0..2 * p + 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            jumps: (0..k).map(|_| rng.random_range(0.0..0.6)).collect(),
            censor_left: [0, 1].map(|_| (0..k).map(|_| rng.random_range(0.2..1.0)).collect()),
        };
        let est = AipswValue::from_parts(&s, &ps, &parts).unwrap();
        let curve = est.curve(&regime, &smoothing(smooth), f64::INFINITY).unwrap();
        let cl = |a: bool, k: usize| parts.censor_left[usize::from(a)][k];
        for u in query_points(s.time()) {
            let want = aipsw_loop(&s, regime.eta(), &ps, smooth, &parts.beta, &parts.jumps, &cl, u);
            assert!(
                close(curve.at(u), want),
                "case {case} at {u}: {} vs {want}",
                curve.at(u)
            );
        }
    }
}

fn aipsw_matches_loop_with_fitted_nuisances() {
    let mut rng = rng(14);
    let mut done = 0;
    let mut tries = 0;
    while done < INSTANCES {
        tries += 1;
        assert!(tries < 20 * INSTANCES, "too few Cox fits succeeded");
        let n = rng.random_range(10..=20);
        let s = random_sample(&mut rng, n, 1);
        let Ok(cox) = fit_cox(&s) else { continue };
        if !cox.converged || cox.beta.iter().any(|b| b.abs() > 8.0) {
            continue;
        }
        let ps = random_propensity(&mut rng, n);
        let regime = LinearRegime::new(random_eta(&mut rng, 2)).unwrap();
        let smooth = done % 2 == 0;
        let model = if done % 3 == 0 {
            CensorModel::Stratified
        } else {
            CensorModel::Marginal
        };
        let Ok(censor) = fit_censoring(&s, model) else { continue };
        // Breslow jumps recomputed from the fitted coefficients.
        let grid = event_grid(&s);
        let lp = |i: usize| {
            let x = s.covariates().row(i)[0];
            let a = f64::from(u8::from(s.treatment()[i]));
            cox.beta[0] * x + a * (cox.beta[1] + cox.beta[2] * x)
        };
        let jumps: Vec<f64> = grid
            .iter()
            .map(|&sk| {
                let d = (0..n).filter(|&i| s.time()[i] == sk && s.event()[i]).count() as f64;
                let r: f64 = (0..n).filter(|&i| s.time()[i] >= sk).map(|i| lp(i).exp()).sum();
                d / r
            })
            .collect();
        let arm_left = |a: bool, k: usize| -> f64 {
            match model {
                CensorModel::Marginal => censor_left_loop(s.time(), s.event(), grid[k]),
                CensorModel::Stratified => {
                    let idx: Vec<usize> = (0..n).filter(|&i| s.treatment()[i] == a).collect();
                    let t: Vec<f64> = idx.iter().map(|&i| s.time()[i]).collect();
                    let d: Vec<bool> = idx.iter().map(|&i| s.event()[i]).collect();
                    censor_left_loop(&t, &d, grid[k])
                }
            }
        };
        let curve = value_curve_aipsw(&s, &regime, &ps, &cox, &censor, &smoothing(smooth)).unwrap();
        for u in query_points(s.time()) {
            let want = aipsw_loop(&s, regime.eta(), &ps, smooth, &cox.beta, &jumps, &arm_left, u);
            // Cox jumps enter through exp of a fitted predictor; agreement is
            // still to rounding.
            assert!(
                close(curve.at(u), want),
                "fit case {done} at {u}: {} vs {want}",
                curve.at(u)
            );
        }
        if let CensoringCurve::Marginal(c) = &censor {
            for u in query_points(s.time()) {
                assert!(close(c.left(u), censor_left_loop(s.time(), s.event(), u)));
            }
        }
        done += 1;
    }
}

fn two_stage_weights_loop(
    s: &TwoStageSample,
    regime: &TwoStageRegime,
    ps0: &[f64],
    ps1: &[f64],
    smooth: bool,
    limit: CensorLimit,
) -> Option<Vec<f64>> {
    let n = s.len();
    let alive: Vec<bool> = (0..n).map(|i| s.time()[i] > s.interim_time()).collect();
    let lp0: Vec<f64> = (0..n)
        .map(|i| {
            let x0 = s.baseline().row(i);
            regime.eta0()[0] + x0.iter().zip(&regime.eta0()[1..]).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    let g0 = assign_loop(&lp0, smooth);
    let alive_idx: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let lp1: Vec<f64> = alive_idx
        .iter()
        .map(|&i| {
            let x0 = s.baseline().row(i);
            let mut f = vec![1.0];
            if regime.features() == Stage1Features::Full {
                f.extend_from_slice(x0);
                f.push(if lp0[i] >= 0.0 { 1.0 } else { 0.0 });
            }
            f.extend_from_slice(s.interim_row(i).unwrap());
            f.iter().zip(regime.eta1()).map(|(a, b)| a * b).sum()
        })
        .collect();
    let g1_alive = assign_loop(&lp1, smooth);
    let mut g1 = vec![0.0; n];
    for (j, &i) in alive_idx.iter().enumerate() {
        g1[i] = g1_alive[j];
    }
    let mut w = vec![0.0; n];
    for i in 0..n {
        let a0 = s.stage0_treatment()[i];
        let p0 = clamp_ps(ps0[i]);
        let pi0 = if a0 { p0 } else { 1.0 - p0 };
        let m0 = if a0 { g0[i] } else { 1.0 - g0[i] };
        let t = s.time()[i];
        if alive[i] {
            let a1 = s.stage1_treatment()[i].unwrap();
            let p1 = clamp_ps(ps1[i]);
            let pi1 = if a1 { p1 } else { 1.0 - p1 };
            let m1 = if a1 { g1[i] } else { 1.0 - g1[i] };
            let sc = censor_right_loop(s.time(), s.event(), s.interim_time());
            if sc < 0.05 {
                return None;
            }
            w[i] = m0 * m1 / (sc * pi0 * pi1);
        } else if s.event()[i] {
            let sc = match limit {
                CensorLimit::Left => censor_left_loop(s.time(), s.event(), t),
                CensorLimit::Right => censor_right_loop(s.time(), s.event(), t),
            };
            if sc < 0.05 {
                return None;
            }
            w[i] = m0 / (sc * pi0);
        }
    }
    Some(w)
}

fn two_stage_matches_loop() {
    let mut rng = rng(15);
    let mut checked = 0;
    for case in 0..INSTANCES {
        let n = rng.random_range(4..=20);
        let (p0, p1) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let s = random_two_stage(&mut rng, n, p0, p1);
        let ps0 = random_propensity(&mut rng, n);
        let ps1 = random_propensity(&mut rng, n);
        let features = if case % 2 == 0 {
            Stage1Features::InterimOnly
        } else {
            Stage1Features::Full
        };
        let regime = TwoStageRegime::new(
            random_eta(&mut rng, p0 + 1),
            random_eta(&mut rng, features.dim(p0, p1)),
            features,
        )
        .unwrap();
        let smooth = case % 3 != 0;
        let limit = if case % 5 == 0 {
            CensorLimit::Right
        } else {
            CensorLimit::Left
        };
        let censor = censoring_km(s.time(), s.event()).unwrap();
        let Some(w) = two_stage_weights_loop(&s, &regime, &ps0, &ps1, smooth, limit) else {
            assert!(
                TwoStageValue::new(&s, &ps0, &ps1, &censor, limit).is_err(),
                "case {case}: positivity"
            );
            continue;
        };
        let est = TwoStageValue::new(&s, &ps0, &ps1, &censor, limit).unwrap();
        if w.iter().all(|&v| v == 0.0) {
            assert!(est.curve(&regime, &smoothing(smooth), f64::INFINITY).is_err());
            continue;
        }
        let curve = est.curve(&regime, &smoothing(smooth), f64::INFINITY).unwrap();
        if limit == CensorLimit::Left {
            let direct = value_curve_two_stage(&s, &regime, &ps0, &ps1, &censor, &smoothing(smooth)).unwrap();
            assert_eq!(direct, curve);
        }
        for u in query_points(s.time()) {
            let want = km_loop(s.time(), s.event(), &w, u);
            assert!(
                close(curve.at(u), want),
                "case {case} at {u}: {} vs {want}",
                curve.at(u)
            );
        }
        checked += 1;
    }
    assert!(checked >= INSTANCES / 2, "only {checked} instances passed positivity");
}

pub const CHECKS: &[(&str, fn())] = &[
    ("weighted_km", weighted_km_matches_loop),
    ("ipsw", ipsw_matches_loop),
    ("aipsw, arbitrary parts", aipsw_matches_loop_for_arbitrary_parts),
    ("aipsw, fitted nuisances", aipsw_matches_loop_with_fitted_nuisances),
    ("two-stage", two_stage_matches_loop),
];
