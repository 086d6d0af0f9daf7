use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// A function of time given by samples, evaluated by linear interpolation and
/// held constant outside the sampled range. Repeated knot times encode jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", deny_unknown_fields)]
pub struct Curve<S: Scalar> {
    pub times: Vec<S>,
    pub values: Vec<S>,
}

impl<S: Scalar> Curve<S> {
    pub fn new(times: Vec<S>, values: Vec<S>) -> Self {
        Self { times, values }
    }

    pub fn constant(value: S) -> Self {
        Self {
            times: vec![S::zero()],
            values: vec![value],
        }
    }

    /// Samples `f` at `count + 1` evenly spaced points of `[0, horizon]`.
    pub fn sampled(horizon: S, count: usize, f: impl Fn(S) -> S) -> Self {
        let h = horizon / S::from_usize(count.max(1)).unwrap();
        let times: Vec<S> = (0..=count.max(1)).map(|k| h * S::from_usize(k).unwrap()).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self { times, values }
    }

    pub fn is_well_formed(&self) -> bool {
        !self.times.is_empty()
            && self.times.len() == self.values.len()
            && self.times.windows(2).all(|w| w[0] <= w[1])
            && self.times.iter().chain(&self.values).all(|v| v.is_finite())
    }

    pub fn at(&self, t: S) -> S {
        let ts = &self.times;
        let n = ts.len();
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= ts[n - 1] {
            return self.values[n - 1];
        }
        // First knot strictly after t.
        let hi = ts.partition_point(|&x| x <= t);
        let lo = hi - 1;
        let span = ts[hi] - ts[lo];
        if span <= S::zero() {
            return self.values[hi];
        }
        let w = (t - ts[lo]) / span;
        self.values[lo] + (self.values[hi] - self.values[lo]) * w
    }

    pub fn min_value(&self) -> S {
        self.values.iter().fold(S::infinity(), |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> S {
        self.values.iter().fold(S::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn last_value(&self) -> S {
        *self.values.last().expect("curve has samples")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let c = Curve::new(vec![0.0, 1.0, 3.0], vec![1.0, 3.0, 4.0]);
        assert_eq!(c.at(-1.0), 1.0);
        assert_eq!(c.at(0.5), 2.0);
        assert_eq!(c.at(2.0), 3.5);
        assert_eq!(c.at(10.0), 4.0);
    }

    #[test]
    fn repeated_knots_make_a_jump() {
        let c = Curve::new(vec![0.0, 2.0, 2.0, 4.0], vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(c.at(1.999), 1.0);
        assert_eq!(c.at(2.0), 0.0);
        assert_eq!(c.at(3.0), 0.0);
        assert!(c.is_well_formed());
    }
}
