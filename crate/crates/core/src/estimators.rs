//! Weighted product-limit and Nelson-Aalen estimators.
//!
//! Tie convention: at a time shared by deaths and censorings, the censored
//! subjects are still in the risk set for those deaths, and deaths leave the
//! censoring risk set before the censorings at that time are counted.

use crate::curve::{CurveKind, StepCurve};
use crate::error::{Error, Result};

/// Subjects sorted by observed time and grouped into distinct times.
///
/// Built once per sample and reused for every weight vector, which is what
/// makes repeated value evaluation during policy search cheap.
#[derive(Debug, Clone)]
pub struct RiskTable {
    order: Vec<usize>,
    sorted_event: Vec<bool>,
    groups: Vec<TimeGroup>,
}

#[derive(Debug, Clone, Copy)]
struct TimeGroup {
    time: f64,
    start: usize,
    end: usize,
    has_event: bool,
}

/// Per distinct time: weighted event mass `d` and weighted risk set `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Increment {
    pub time: f64,
    pub d: f64,
    pub r: f64,
}

impl RiskTable {
    pub fn new(time: &[f64], event: &[bool]) -> Result<Self> {
        if time.len() != event.len() {
            return Err(Error::Validation("time and event lengths differ".into()));
        }
        if time.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Validation("times must be finite and non-negative".into()));
        }
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));
        let sorted_event: Vec<bool> = order.iter().map(|&i| event[i]).collect();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = time[order[start]];
            let mut end = start;
            let mut has_event = false;
            while end < order.len() && time[order[end]] == t {
                has_event |= sorted_event[end];
                end += 1;
            }
            groups.push(TimeGroup {
                time: t,
                start,
                end,
                has_event,
            });
            start = end;
        }
        Ok(Self {
            order,
            sorted_event,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Distinct times at which at least one event was observed.
    pub fn event_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.groups.iter().filter(|g| g.has_event).map(|g| g.time)
    }

    /// Weighted death increments and risk sets at event times `<= horizon`.
    ///
    /// Risk sets are suffix sums over sorted subjects, so a set that has
    /// emptied is exactly zero rather than a rounding residue.
    pub(crate) fn event_increments(&self, weights: &[f64], horizon: f64) -> Vec<Increment> {
        let mut suffix = 0.0;
        let mut risk = vec![0.0; self.groups.len()];
        for (k, g) in self.groups.iter().enumerate().rev() {
            for j in g.start..g.end {
                suffix += weights[self.order[j]];
            }
            risk[k] = suffix;
        }
        let mut out = Vec::new();
        for (k, g) in self.groups.iter().enumerate() {
            if g.time > horizon {
                break;
            }
            if !g.has_event {
                continue;
            }
            let mut d = 0.0;
            for j in g.start..g.end {
                if self.sorted_event[j] {
                    d += weights[self.order[j]];
                }
            }
            out.push(Increment {
                time: g.time,
                d,
                r: risk[k],
            });
        }
        out
    }

    /// Largest observed time carrying positive weight.
    pub(crate) fn last_weighted_time(&self, weights: &[f64]) -> f64 {
        match (0..self.order.len()).rev().find(|&p| weights[self.order[p]] > 0.0) {
            Some(pos) => self.groups[self.groups.partition_point(|g| g.end <= pos)].time,
            None => 0.0,
        }
    }

    /// Weighted censoring increments with deaths leaving the risk set first.
    pub(crate) fn censoring_increments(&self, weights: &[f64]) -> Vec<Increment> {
        let mut suffix = 0.0;
        let mut out = Vec::new();
        for g in self.groups.iter().rev() {
            let mut deaths = 0.0;
            let mut cens = 0.0;
            let mut all = 0.0;
            for j in g.start..g.end {
                let w = weights[self.order[j]];
                all += w;
                if self.sorted_event[j] {
                    deaths += w;
                } else {
                    cens += w;
                }
            }
            suffix += all;
            if cens > 0.0 {
                out.push(Increment {
                    time: g.time,
                    d: cens,
                    r: suffix - deaths,
                });
            }
        }
        out.reverse();
        out
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Validation("weights length differs from sample size".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Validation("weights must be finite and non-negative".into()));
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    Ok(())
}

/// `1 - d / r`, floored at 0; the flag reports the floor.
pub(crate) fn km_factor(d: f64, r: f64) -> (f64, bool) {
    let f = 1.0 - d / r;
    if f < 0.0 {
        (0.0, true)
    } else {
        (f, false)
    }
}

/// Product-limit curve from per-time `(d, r)` pairs.
///
/// A non-positive risk set freezes the curve and records truncation. A
/// negative factor is clamped to 0 and flagged. Factors above 1 are kept:
/// augmented increments can be negative, and capping them biases the
/// estimator downward. Only the reported value is capped at 1.
pub(crate) fn product_limit(increments: &[Increment], tau: f64) -> StepCurve {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut truncated = None;
    let mut clamped = false;
    for inc in increments {
        if !(inc.r > 0.0) {
            truncated = Some(tau);
            break;
        }
        if inc.d == 0.0 {
            continue;
        }
        let (factor, cut) = km_factor(inc.d, inc.r);
        clamped |= cut;
        if factor == 1.0 {
            continue;
        }
        surv *= factor;
        if surv > 1.0 {
            clamped = true;
        }
        times.push(inc.time);
        values.push(surv.min(1.0));
    }
    StepCurve::from_parts(CurveKind::Survival, times, values, truncated, clamped)
}

pub(crate) fn nelson_aalen(increments: &[Increment], tau: f64) -> StepCurve {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut cum = 0.0;
    let mut truncated = None;
    for inc in increments {
        if !(inc.r > 0.0) {
            truncated = Some(tau);
            break;
        }
        if inc.d == 0.0 {
            continue;
        }
        cum += inc.d / inc.r;
        times.push(inc.time);
        values.push(cum);
    }
    StepCurve::from_parts(CurveKind::CumulativeHazard, times, values, truncated, false)
}

/// Weighted Kaplan-Meier curve `prod_{s<=u} {1 - sum w dN(s) / sum w Y(s)}`.
pub fn weighted_km(time: &[f64], event: &[bool], weights: &[f64]) -> Result<StepCurve> {
    let table = RiskTable::new(time, event)?;
    weighted_km_with(&table, weights, f64::INFINITY)
}

/// Same as [`weighted_km`] on a prebuilt table, stopping after `horizon`.
///
/// A finite horizon beyond the last positively weighted observation marks
/// the curve as truncated there.
pub fn weighted_km_with(table: &RiskTable, weights: &[f64], horizon: f64) -> Result<StepCurve> {
    check_weights(weights, table.len())?;
    let tau = table.last_weighted_time(weights);
    let mut curve = product_limit(&table.event_increments(weights, horizon), tau);
    if horizon.is_finite() && tau < horizon {
        curve.mark_truncated(tau);
    }
    Ok(curve)
}

/// Weighted Nelson-Aalen cumulative hazard.
pub fn weighted_nelson_aalen(time: &[f64], event: &[bool], weights: &[f64]) -> Result<StepCurve> {
    let table = RiskTable::new(time, event)?;
    check_weights(weights, table.len())?;
    let tau = table.last_weighted_time(weights);
    Ok(nelson_aalen(&table.event_increments(weights, f64::INFINITY), tau))
}

/// Kaplan-Meier curve of the censoring distribution.
pub fn censoring_km(time: &[f64], event: &[bool]) -> Result<StepCurve> {
    weighted_censoring_km(time, event, &vec![1.0; time.len()])
}

/// Censoring Kaplan-Meier with case weights (bootstrap multiplicities).
pub fn weighted_censoring_km(time: &[f64], event: &[bool], weights: &[f64]) -> Result<StepCurve> {
    let table = RiskTable::new(time, event)?;
    check_weights(weights, table.len())?;
    let tau = table.last_weighted_time(weights);
    Ok(product_limit(&table.censoring_increments(weights), tau))
}

/// Treatment-stratified censoring curves `(arm 0, arm 1)`.
pub fn stratified_censoring_km(time: &[f64], event: &[bool], treatment: &[bool]) -> Result<(StepCurve, StepCurve)> {
    let arm = |a: bool| -> Result<StepCurve> {
        let w: Vec<f64> = treatment.iter().map(|&t| f64::from(u8::from(t == a))).collect();
        if !w.iter().any(|&x| x > 0.0) {
            return Ok(StepCurve::constant_survival());
        }
        weighted_censoring_km(time, event, &w)
    };
    Ok((arm(false)?, arm(true)?))
}
