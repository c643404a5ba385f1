#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survregime::{Covariates, SurvivalSample, TwoStageSample};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Times on a coarse lattice so ties between deaths and censorings are common.
pub fn lattice_time(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.random_range(1..=12u32)) / 4.0
}

pub fn random_sample(rng: &mut ChaCha8Rng, n: usize, p: usize) -> SurvivalSample {
    loop {
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let t: Vec<f64> = (0..n).map(|_| lattice_time(rng)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        if let Ok(s) = SurvivalSample::new(Covariates::new(n, p, x).unwrap(), a, t, d) {
            return s;
        }
    }
}

pub fn random_propensity(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()
}

pub fn random_eta(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let e: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if e.iter().map(|v| v * v).sum::<f64>() > 1e-3 {
            return e;
        }
    }
}

/// Two-stage sample with interim time 1 on a lattice that straddles it.
pub fn random_two_stage(rng: &mut ChaCha8Rng, n: usize, p0: usize, p1: usize) -> TwoStageSample {
    loop {
        let x0: Vec<f64> = (0..n * p0).map(|_| rng.random_range(0.0..4.0)).collect();
        let a0: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let t: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..=16u32)) / 4.0).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.75)).collect();
        let rows: Vec<Option<Vec<f64>>> = t
            .iter()
            .map(|&ti| (ti > 1.0).then(|| (0..p1).map(|_| rng.random_range(0.0..3.0)).collect()))
            .collect();
        let a1: Vec<Option<bool>> = t.iter().map(|&ti| (ti > 1.0).then(|| rng.random())).collect();
        if let Ok(s) = TwoStageSample::new(Covariates::new(n, p0, x0).unwrap(), a0, 1.0, rows, a1, t, d) {
            return s;
        }
    }
}

pub fn phi(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

pub fn clamp_ps(p: f64) -> f64 {
    p.clamp(0.01, 0.99)
}

/// `I(lp >= 0)`, or `Phi(lp / h)` with `h = 4^(1/3) n^(-1/3) sd(lp)`.
pub fn assign_loop(lp: &[f64], smooth: bool) -> Vec<f64> {
    let n = lp.len() as f64;
    let mean = lp.iter().sum::<f64>() / n;
    let sd = (lp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    if !smooth || lp.len() < 2 || sd == 0.0 {
        return lp.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect();
    }
    let h = 4f64.powf(1.0 / 3.0) * n.powf(-1.0 / 3.0) * sd;
    lp.iter().map(|&v| phi(v / h)).collect()
}

/// Product over distinct event times `<= u` of `1 - d/r`, computed from
/// scratch for every query; stops where the risk mass is gone.
pub fn km_loop(time: &[f64], event: &[bool], w: &[f64], u: f64) -> f64 {
    let mut times: Vec<f64> = time.iter().zip(event).filter(|(_, &d)| d).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = 1.0;
    for &tk in times.iter().filter(|&&tk| tk <= u) {
        let mut d = 0.0;
        let mut r = 0.0;
        for i in 0..time.len() {
            if time[i] >= tk {
                r += w[i];
            }
            if time[i] == tk && event[i] {
                d += w[i];
            }
        }
        if r <= 0.0 {
            break;
        }
        s *= (1.0 - d / r).clamp(0.0, 1.0);
    }
    s
}

/// Censoring KM left limit `S_C(u-)`; deaths at a tied time are not at risk
/// of censoring there.
pub fn censor_left_loop(time: &[f64], event: &[bool], u: f64) -> f64 {
    let mut times: Vec<f64> = time.iter().zip(event).filter(|(_, &d)| !d).map(|(&t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = 1.0;
    for &c in times.iter().filter(|&&c| c < u) {
        let mut d = 0.0;
        let mut r = 0.0;
        for i in 0..time.len() {
            if time[i] > c || (time[i] == c && !event[i]) {
                r += 1.0;
            }
            if time[i] == c && !event[i] {
                d += 1.0;
            }
        }
        s *= 1.0 - d / r;
    }
    s
}

pub fn censor_right_loop(time: &[f64], event: &[bool], u: f64) -> f64 {
    censor_left_loop(time, event, u + 1e-9)
}

/// Query points: every observed time, midpoints, and a point past the end.
pub fn query_points(time: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = time.to_vec();
    q.sort_by(f64::total_cmp);
    q.dedup();
    let mids: Vec<f64> = q.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let end = q.last().copied().unwrap_or(0.0) + 1.0;
    q.extend(mids);
    q.push(0.0);
    q.push(end);
    q
}
