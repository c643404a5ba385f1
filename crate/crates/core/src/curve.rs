use serde::{Deserialize, Serialize};

/// What a [`StepCurve`] represents; fixes its starting value and direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Survival,
    CumulativeHazard,
}

/// Which limit to take at a jump point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// Right-continuous piecewise-constant function of time.
///
/// `values[k]` holds on `[jump_times[k], jump_times[k + 1])`; before the first
/// jump the curve equals `initial_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    kind: CurveKind,
    jump_times: Vec<f64>,
    values: Vec<f64>,
    initial_value: f64,
    /// Last time with a positive weighted risk set, when the risk set
    /// emptied before the requested horizon.
    truncated_at: Option<f64>,
    /// Set when a product-limit factor had to be clamped into `[0, 1]`.
    clamped: bool,
}

impl StepCurve {
    pub(crate) fn from_parts(
        kind: CurveKind,
        jump_times: Vec<f64>,
        values: Vec<f64>,
        truncated_at: Option<f64>,
        clamped: bool,
    ) -> Self {
        debug_assert_eq!(jump_times.len(), values.len());
        debug_assert!(jump_times.windows(2).all(|w| w[0] < w[1]));
        let initial_value = match kind {
            CurveKind::Survival => 1.0,
            CurveKind::CumulativeHazard => 0.0,
        };
        Self {
            kind,
            jump_times,
            values,
            initial_value,
            truncated_at,
            clamped,
        }
    }

    pub(crate) fn mark_truncated(&mut self, tau: f64) {
        self.truncated_at = Some(self.truncated_at.map_or(tau, |t| t.min(tau)));
    }

    /// A survival curve that never drops.
    pub fn constant_survival() -> Self {
        Self::from_parts(CurveKind::Survival, Vec::new(), Vec::new(), None, false)
    }

    /// Build a survival curve from explicit steps. Used for tests and for
    /// curves supplied from outside.
    pub fn survival_from_steps(jump_times: Vec<f64>, values: Vec<f64>) -> crate::Result<Self> {
        if jump_times.len() != values.len()
            || !jump_times.windows(2).all(|w| w[0] < w[1])
            || !values.windows(2).all(|w| w[0] >= w[1])
            || values.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(crate::Error::Validation(
                "survival steps must have increasing times and nonincreasing values in [0, 1]".into(),
            ));
        }
        Ok(Self::from_parts(CurveKind::Survival, jump_times, values, None, false))
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial_value(&self) -> f64 {
        self.initial_value
    }

    pub fn truncated_at(&self) -> Option<f64> {
        self.truncated_at
    }

    pub fn was_clamped(&self) -> bool {
        self.clamped
    }

    /// Value at `t`, taking the right-continuous value or the left limit.
    pub fn eval(&self, t: f64, side: Side) -> f64 {
        let k = match side {
            Side::Right => self.jump_times.partition_point(|&s| s <= t),
            Side::Left => self.jump_times.partition_point(|&s| s < t),
        };
        if k == 0 {
            self.initial_value
        } else {
            self.values[k - 1]
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.eval(t, Side::Right)
    }

    #[inline]
    pub fn left(&self, t: f64) -> f64 {
        self.eval(t, Side::Left)
    }

    /// Size of the jump at `t` (zero away from jump points).
    pub fn jump_at(&self, t: f64) -> f64 {
        self.at(t) - self.left(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_sides() {
        let c = StepCurve::survival_from_steps(vec![2.0], vec![0.5]).unwrap();
        assert_eq!(c.eval(2.0, Side::Right), 0.5);
        assert_eq!(c.eval(2.0, Side::Left), 1.0);
        assert_eq!(c.eval(0.0, Side::Right), 1.0);
        assert_eq!(c.eval(10.0, Side::Left), 0.5);
        assert_eq!(c.jump_at(2.0), -0.5);
    }

    #[test]
    fn rejects_increasing_survival() {
        assert!(StepCurve::survival_from_steps(vec![1.0, 2.0], vec![0.5, 0.7]).is_err());
    }
}
