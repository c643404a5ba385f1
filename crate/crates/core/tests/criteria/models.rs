use crate::common::rng;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use survregime::estimators::weighted_nelson_aalen;
use survregime::models::{cox_score, expit, fit_cox_design, logistic_score};
use survregime::{fit_logistic, Covariates};

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Breslow log partial likelihood of a single covariate, written out.
fn loglik_1d(time: &[f64], event: &[bool], z: &[f64], beta: f64) -> f64 {
    let mut ll = 0.0;
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        let s0: f64 = (0..time.len())
            .filter(|&j| time[j] >= time[i])
            .map(|j| (beta * z[j]).exp())
            .sum();
        ll += beta * z[i] - s0.ln();
    }
    ll
}

fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    let steps = ((hi - lo) / step).round() as usize;
    let mut best = (lo, f(lo));
    for k in 1..=steps {
        let b = lo + k as f64 * step;
        let v = f(b);
        if v > best.1 {
            best = (b, v);
        }
    }
    best.0
}

fn ph_data(rng: &mut rand_chacha::ChaCha8Rng, n: usize, q: usize, beta: &[f64]) -> (Vec<f64>, Vec<bool>, Covariates) {
    let z: Vec<f64> = (0..n * q).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for i in 0..n {
        let lp: f64 = (0..q).map(|j| beta[j] * z[i * q + j]).sum();
        let e: f64 = Exp1.sample(rng);
        let t = e / lp.exp();
        let c = rng.random_range(0.0..3.0);
        time.push(t.min(c));
        event.push(t <= c);
    }
    (time, event, Covariates::new(n, q, z).unwrap())
}

fn logistic_score_vanishes_at_fit() {
    let mut rng = rng(31);
    for _ in 0..20 {
        let n = rng.random_range(60..200);
        let q = rng.random_range(1..=3);
        let x: Vec<f64> = (0..n * q).map(|_| rng.random_range(-2.0..2.0)).collect();
        let design = Covariates::new(n, q, x).unwrap().with_intercept();
        let theta: Vec<f64> = (0..=q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<bool> = design
            .rows()
            .map(|r| rng.random::<f64>() < expit(r.iter().zip(&theta).map(|(a, b)| a * b).sum()))
            .collect();
        let fit = fit_logistic(&design, &y).unwrap();
        assert!(fit.converged);
        let u = logistic_score(&design, &y, &fit.theta);
        assert!(max_abs(&u) < 1e-6, "score {u:?}");
        // Independent score: sum (y - p) x.
        let mut u2 = vec![0.0; q + 1];
        for (r, &yi) in design.rows().zip(&y) {
            let p = expit(r.iter().zip(&fit.theta).map(|(a, b)| a * b).sum());
            for (k, v) in r.iter().enumerate() {
                u2[k] += (f64::from(u8::from(yi)) - p) * v;
            }
        }
        assert!(max_abs(&u2) < 1e-6, "loop score {u2:?}");
    }
}

fn cox_score_vanishes_at_fit() {
    let mut rng = rng(32);
    for _ in 0..20 {
        let n = rng.random_range(60..150);
        let q = rng.random_range(1..=3);
        let beta: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (time, event, z) = ph_data(&mut rng, n, q, &beta);
        let fit = fit_cox_design(&time, &event, &z).unwrap();
        assert!(fit.converged);
        let u = cox_score(&time, &event, &z, &fit.beta);
        assert!(max_abs(&u) < 1e-6, "score {u:?}");
    }
}

fn cox_matches_one_dimensional_grid() {
    let mut rng = rng(33);
    for case in 0..20 {
        let n = rng.random_range(30..80);
        let b = rng.random_range(-1.5..1.5);
        let (mut time, event, z) = ph_data(&mut rng, n, 1, &[b]);
        if case % 2 == 0 {
            // Coarsen times so Breslow ties matter.
            for t in &mut time {
                *t = (*t * 4.0).ceil() / 4.0;
            }
        }
        let zc: Vec<f64> = z.column(0).collect();
        let fit = fit_cox_design(&time, &event, &z).unwrap();
        let f = |beta: f64| loglik_1d(&time, &event, &zc, beta);
        let coarse = grid_argmax(f, -5.0, 5.0, 0.01);
        let fine = grid_argmax(f, coarse - 0.01, coarse + 0.01, 1e-5);
        assert!(
            (fit.beta[0] - fine).abs() < 1e-3,
            "case {case}: fit {} grid {fine}",
            fit.beta[0]
        );
    }
}

fn breslow_at_zero_is_nelson_aalen() {
    let mut rng = rng(34);
    for _ in 0..20 {
        let n = rng.random_range(10..60);
        let time: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..20u32))).collect();
        let mut event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        event[0] = true;
        // A constant column carries no information; its coefficient stays 0.
        let design = Covariates::new(n, 1, vec![1.0; n]).unwrap();
        let fit = fit_cox_design(&time, &event, &design).unwrap();
        assert_eq!(fit.beta, vec![0.0]);
        let na = weighted_nelson_aalen(&time, &event, &vec![1.0; n]).unwrap();
        assert_eq!(fit.baseline.jump_times(), na.jump_times());
        assert_eq!(fit.baseline.values(), na.values());
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("logistic score", logistic_score_vanishes_at_fit),
    ("cox score", cox_score_vanishes_at_fit),
    ("cox vs 1-d grid", cox_matches_one_dimensional_grid),
    ("breslow at zero", breslow_at_zero_is_nelson_aalen),
];
