//! Derivative-free maximization of a regime value over unit-norm
//! coefficients (differential evolution, rand/1/bin).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regime::{Functional, LinearRegime, SmoothingSpec, Stage1Features, TwoStageRegime, ValueEstimator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub smoothing: SmoothingSpec,
    pub target: Functional,
    pub population_size: usize,
    pub generations: usize,
    pub restarts: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub seed: u64,
    /// A run stops early once the population's value spread is at most
    /// this and its members lie within `1e-3` of the best one.
    pub tolerance: f64,
}

impl SearchConfig {
    pub fn new(target: Functional, smoothing: SmoothingSpec, seed: u64) -> Self {
        Self {
            smoothing,
            target,
            population_size: 50,
            generations: 200,
            restarts: 3,
            crossover: 0.9,
            mutation: 0.8,
            seed,
            tolerance: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 10 {
            return Err(Error::Validation("population size must be at least 10".into()));
        }
        if self.restarts < 1 || self.generations < 1 {
            return Err(Error::Validation(
                "at least one restart and one generation are required".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover) || !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(Error::Validation(
                "crossover must be in [0, 1] and mutation in (0, 2]".into(),
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Validation("tolerance must be non-negative".into()));
        }
        self.smoothing.validate()
    }
}

/// Maps a flat coefficient vector to a regime; each block is a sphere.
pub trait RegimeSpace: Sync {
    type Regime: Clone + Send;

    fn blocks(&self) -> Vec<usize>;

    fn build(&self, flat: &[f64]) -> Result<Self::Regime>;

    fn flatten(&self, regime: &Self::Regime) -> Vec<f64>;

    /// Candidates placed in every initial population.
    fn seeds(&self) -> Vec<Vec<f64>> {
        let blocks = self.blocks();
        let axis = |d: usize| -> Vec<Vec<f64>> {
            (0..d)
                .flat_map(|j| {
                    [1.0, -1.0].map(|s| {
                        let mut e = vec![0.0; d];
                        e[j] = s;
                        e
                    })
                })
                .collect()
        };
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for &d in &blocks {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis(d).into_iter().map(move |e| {
                        let mut v = prefix.clone();
                        v.extend(e);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

/// Single-decision regimes over `p` covariates.
#[derive(Debug, Clone, Copy)]
pub struct LinearSpace {
    pub p: usize,
}

impl RegimeSpace for LinearSpace {
    type Regime = LinearRegime;

    fn blocks(&self) -> Vec<usize> {
        vec![self.p + 1]
    }

    fn build(&self, flat: &[f64]) -> Result<LinearRegime> {
        LinearRegime::new(flat.to_vec())
    }

    fn flatten(&self, regime: &LinearRegime) -> Vec<f64> {
        regime.eta().to_vec()
    }
}

/// Two-decision regimes; both rules are searched jointly.
#[derive(Debug, Clone, Copy)]
pub struct TwoStageSpace {
    pub p0: usize,
    pub p1: usize,
    pub features: Stage1Features,
}

impl RegimeSpace for TwoStageSpace {
    type Regime = TwoStageRegime;

    fn blocks(&self) -> Vec<usize> {
        vec![self.p0 + 1, self.features.dim(self.p0, self.p1)]
    }

    fn build(&self, flat: &[f64]) -> Result<TwoStageRegime> {
        let (a, b) = flat.split_at(self.p0 + 1);
        TwoStageRegime::new(a.to_vec(), b.to_vec(), self.features)
    }

    fn flatten(&self, regime: &TwoStageRegime) -> Vec<f64> {
        let mut v = regime.eta0().to_vec();
        v.extend_from_slice(regime.eta1());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub seed: u64,
    pub best_value: f64,
    pub best_eta: Vec<f64>,
    /// Best value after each generation.
    pub best_per_generation: Vec<f64>,
    pub generations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub evaluations: usize,
    pub degenerate_evaluations: usize,
    pub restarts: Vec<RestartTrace>,
}

#[derive(Debug, Clone)]
pub struct SearchResult<R> {
    pub regime: R,
    pub value: f64,
    pub diagnostics: SearchDiagnostics,
}

/// SplitMix64 step, used to derive independent sub-seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Sub-seed number `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

fn project(space: &impl RegimeSpace, v: &mut [f64]) -> bool {
    let mut start = 0;
    for d in space.blocks() {
        let block = &mut v[start..start + d];
        let norm = block.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return false;
        }
        block.iter_mut().for_each(|x| *x /= norm);
        start += d;
    }
    true
}

/// Maximizes `estimator.value` over `space`.
///
/// The result is a deterministic function of the seed: random draws happen
/// serially and candidate evaluations are collected in index order.
pub fn maximize_value<E, S>(estimator: &E, space: &S, config: &SearchConfig) -> Result<SearchResult<S::Regime>>
where
    E: ValueEstimator<Regime = S::Regime>,
    S: RegimeSpace,
{
    config.validate()?;
    let dim: usize = space.blocks().iter().sum();
    let objective = |flat: &[f64]| -> f64 {
        space
            .build(flat)
            .and_then(|r| estimator.value(&r, &config.smoothing, &config.target))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let evaluate = |pop: &[Vec<f64>]| -> Vec<f64> { pop.par_iter().map(|x| objective(x)).collect() };

    let np = config.population_size;
    let mut evaluations = 0;
    let mut degenerate = 0;
    let mut traces = Vec::with_capacity(config.restarts);
    let mut best: Option<(Vec<f64>, f64)> = None;

    for r in 0..config.restarts {
        let seed = derive_seed(config.seed, r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pop: Vec<Vec<f64>> = space.seeds().into_iter().take(np).collect();
        while pop.len() < np {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if project(space, &mut v) {
                pop.push(v);
            }
        }
        let mut fit = evaluate(&pop);
        evaluations += np;
        degenerate += fit.iter().filter(|f| !f.is_finite()).count();
        let mut trace = Vec::with_capacity(config.generations);
        let mut generations_run = 0;

        for _ in 0..config.generations {
            let trials: Vec<Vec<f64>> = (0..np)
                .map(|i| {
                    let pick = |rng: &mut ChaCha8Rng, taken: &[usize]| loop {
                        let c = rng.random_range(0..np);
                        if !taken.contains(&c) {
                            break c;
                        }
                    };
                    let r1 = pick(&mut rng, &[i]);
                    let r2 = pick(&mut rng, &[i, r1]);
                    let r3 = pick(&mut rng, &[i, r1, r2]);
                    let forced = rng.random_range(0..dim);
                    let mut trial = pop[i].clone();
                    for j in 0..dim {
                        if j == forced || rng.random::<f64>() < config.crossover {
                            trial[j] = pop[r1][j] + config.mutation * (pop[r2][j] - pop[r3][j]);
                        }
                    }
                    if project(space, &mut trial) {
                        trial
                    } else {
                        pop[i].clone()
                    }
                })
                .collect();
            let trial_fit = evaluate(&trials);
            evaluations += np;
            degenerate += trial_fit.iter().filter(|f| !f.is_finite()).count();
            for (i, (trial, f)) in trials.into_iter().zip(trial_fit).enumerate() {
                if f >= fit[i] {
                    pop[i] = trial;
                    fit[i] = f;
                }
            }
            generations_run += 1;
            let (b, fb) = argmax(&fit);
            trace.push(fb);
            if converged(&pop, &fit, b, config.tolerance) {
                break;
            }
        }

        let (b, fb) = argmax(&fit);
        traces.push(RestartTrace {
            seed,
            best_value: fb,
            best_eta: pop[b].clone(),
            best_per_generation: trace,
            generations_run,
        });
        if best.as_ref().is_none_or(|(_, v)| fb > *v) {
            best = Some((pop[b].clone(), fb));
        }
    }

    let diagnostics = SearchDiagnostics {
        evaluations,
        degenerate_evaluations: degenerate,
        restarts: traces,
    };
    match best {
        Some((eta, value)) if value.is_finite() => Ok(SearchResult {
            regime: space.build(&eta)?,
            value,
            diagnostics,
        }),
        _ => Err(Error::SearchFailure(format!(
            "no candidate regime produced a finite value in {} evaluations",
            diagnostics.evaluations
        ))),
    }
}

fn argmax(fit: &[f64]) -> (usize, f64) {
    let mut b = 0;
    for (i, &f) in fit.iter().enumerate() {
        if f > fit[b] {
            b = i;
        }
    }
    (b, fit[b])
}

fn converged(pop: &[Vec<f64>], fit: &[f64], best: usize, tol: f64) -> bool {
    let lo = fit.iter().copied().fold(f64::INFINITY, f64::min);
    if !(fit[best] - lo <= tol) {
        return false;
    }
    pop.iter().all(|x| {
        x.iter()
            .zip(&pop[best])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            < 1e-3
    })
}

/// Exhaustive search over `eta = (cos a, sin a)` on a grid of `steps`
/// angles; a reference for one-covariate problems.
pub fn angular_grid_search<E>(estimator: &E, config: &SearchConfig, steps: usize) -> Result<(LinearRegime, f64)>
where
    E: ValueEstimator<Regime = LinearRegime>,
{
    let mut best: Option<(LinearRegime, f64)> = None;
    for k in 0..steps {
        let a = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
        let regime = LinearRegime::new(vec![a.cos(), a.sin()])?;
        if let Ok(v) = estimator.value(&regime, &config.smoothing, &config.target) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((regime, v));
            }
        }
    }
    best.ok_or_else(|| Error::SearchFailure("every grid angle was degenerate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_cover_simple_regimes() {
        let seeds = LinearSpace { p: 2 }.seeds();
        assert_eq!(seeds.len(), 6);
        assert_eq!(seeds[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(seeds[1], vec![-1.0, 0.0, 0.0]);
        let two = TwoStageSpace {
            p0: 1,
            p1: 1,
            features: Stage1Features::InterimOnly,
        };
        assert_eq!(two.seeds().len(), 16);
        assert_eq!(two.seeds()[0], vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
