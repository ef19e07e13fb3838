use crate::scalar::Scalar;

use super::problem::LpError;

/// Convex piecewise-linear under-approximation of `c2 p^2 + c1 p + c0` over
/// `[p_min, p_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseCost<T> {
    /// `segments + 1` equally spaced points from `p_min` to `p_max`.
    pub breakpoints: Vec<T>,
    /// Secant slope on each segment, nondecreasing.
    pub slopes: Vec<T>,
    /// Cost at `p_min`.
    pub base_cost: T,
    /// Largest gap between the quadratic and its secant interpolant.
    pub max_gap: T,
}

impl<T: Scalar> PiecewiseCost<T> {
    pub fn segment_width(&self, s: usize) -> T {
        self.breakpoints[s + 1] - self.breakpoints[s]
    }

    /// Evaluates the interpolant at `p` (clamped to the range).
    pub fn eval(&self, p: T) -> T {
        let mut cost = self.base_cost;
        for (s, &slope) in self.slopes.iter().enumerate() {
            let lo = self.breakpoints[s];
            let hi = self.breakpoints[s + 1];
            let used = (p.min(hi) - lo).max(T::zero());
            cost = cost + slope * used;
        }
        cost
    }
}

pub fn piecewise_cost<T: Scalar>(
    c2: T,
    c1: T,
    c0: T,
    p_min: T,
    p_max: T,
    segments: usize,
) -> Result<PiecewiseCost<T>, LpError> {
    if segments == 0 {
        return Err(LpError::Invalid("at least one segment required".into()));
    }
    if !(c2 >= T::zero()) || !c1.is_finite() || !c0.is_finite() || !c2.is_finite() {
        return Err(LpError::Invalid(
            "cost coefficients must be finite with c2 >= 0".into(),
        ));
    }
    if !p_min.is_finite() || !p_max.is_finite() || p_min > p_max {
        return Err(LpError::Invalid(format!(
            "invalid range [{p_min}, {p_max}]"
        )));
    }
    let q = |p: T| c2 * p * p + c1 * p + c0;
    let segments = if c2 == T::zero() || p_max == p_min {
        1
    } else {
        segments
    };
    let width = (p_max - p_min) / T::lit(segments as f64);
    let breakpoints: Vec<T> = (0..=segments)
        .map(|k| {
            if k == segments {
                p_max
            } else {
                p_min + width * T::lit(k as f64)
            }
        })
        .collect();
    let slopes = breakpoints
        .windows(2)
        .map(|w| {
            if w[1] > w[0] {
                // secant slope of the quadratic
                c2 * (w[0] + w[1]) + c1
            } else {
                c1 + T::lit(2.0) * c2 * w[0]
            }
        })
        .collect();
    Ok(PiecewiseCost {
        breakpoints,
        slopes,
        base_cost: q(p_min),
        max_gap: c2 * width * width / T::lit(4.0),
    })
}
