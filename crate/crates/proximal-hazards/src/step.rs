//! Right-continuous step functions, used for cumulative baseline hazards.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A right-continuous, piecewise-constant function that is zero before its
/// first knot. Values need not be monotone: additive-hazards baseline
/// estimates may decrease locally.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction<T> {
    knots: Vec<T>,
    values: Vec<T>,
}

/// Result of evaluating a [`StepFunction`] at a query time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEval<T> {
    pub value: T,
    /// True when the query lies beyond the last knot; the function carries no
    /// information there and the last value is returned unchanged.
    pub beyond_support: bool,
}

impl<T: Scalar> StepFunction<T> {
    /// Knots must be finite and strictly increasing; one value per knot.
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::Dimension(format!(
                "step function with {} knots but {} values",
                knots.len(),
                values.len()
            )));
        }
        if !knots.iter().all(|k| k.is_finite()) || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(
                "non-finite knot or value in step function".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Numerical(
                "step function knots must be strictly increasing".into(),
            ));
        }
        Ok(StepFunction { knots, values })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Value at `t`: zero before the first knot, the value of the latest knot
    /// at or before `t` otherwise.
    pub fn value_at(&self, t: T) -> T {
        self.evaluate(t).value
    }

    /// Like [`Self::value_at`], flagging queries past the last knot.
    pub fn evaluate(&self, t: T) -> StepEval<T> {
        let idx = self.knots.partition_point(|&k| k <= t);
        let value = if idx == 0 {
            T::zero()
        } else {
            self.values[idx - 1]
        };
        let beyond_support = match self.knots.last() {
            Some(&last) => t > last,
            None => true,
        };
        StepEval {
            value,
            beyond_support,
        }
    }
}
