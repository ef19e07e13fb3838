//! Aggregated low-order frequency response model.
//!
//! The fleet is collapsed into one reheat governor
//! `(R + s F T)/(1 + s T)` in closed loop with `1/(2 H s + D)`. Parameters are
//! capacity-weighted averages over the participating units. The closed forms
//! here feed the linear RoCoF and nadir rows of the linearized OPF.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::PowerCase;
use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticError {
    #[error("no participating generators")]
    EmptyFleet,
    #[error("damping ratio {0} outside the oscillatory range (0, 1)")]
    NotOscillatory(f64),
    #[error("aggregate droop gain {r} does not exceed aggregate HP gain {f}")]
    NegativeRadicand { r: f64, f: f64 },
    #[error("zero in-service inertia")]
    ZeroInertia,
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Which units enter the capacity-weighted averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// The tripped unit neither provides inertia nor governor response.
    #[default]
    ExcludeContingency,
    AllUnits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowOrderParams<T> {
    pub h_sys: T,
    pub d: T,
    pub f_agg: T,
    pub r_agg: T,
    pub t_agg: T,
    pub omega_n: T,
    pub omega_d: T,
    pub xi: T,
    pub phi: T,
    pub f0: T,
}

impl<T: Scalar> LowOrderParams<T> {
    /// Derives the second-order quantities from the aggregated data.
    /// `xi >= 1` leaves `omega_d` and `phi` at zero; [`Self::check`] flags it.
    pub fn from_aggregates(h_sys: T, d: T, f_agg: T, r_agg: T, t_agg: T, f0: T) -> Self {
        let two = T::lit(2.0);
        let omega_n = ((d + r_agg) / (two * h_sys * t_agg)).sqrt();
        let xi = (two * h_sys + t_agg * (d + f_agg))
            / (two * (two * h_sys * t_agg * (d + r_agg)).sqrt());
        let s = (T::one() - xi * xi).max(T::zero()).sqrt();
        Self {
            h_sys,
            d,
            f_agg,
            r_agg,
            t_agg,
            omega_n,
            omega_d: omega_n * s,
            xi,
            phi: s.asin(),
            f0,
        }
    }

    pub fn check(&self) -> Result<(), AnalyticError> {
        if !(self.xi > T::zero() && self.xi < T::one()) || !(self.omega_d > T::zero()) {
            return Err(AnalyticError::NotOscillatory(self.xi.as_f64()));
        }
        if !(self.r_agg > self.f_agg) {
            return Err(AnalyticError::NegativeRadicand {
                r: self.r_agg.as_f64(),
                f: self.f_agg.as_f64(),
            });
        }
        Ok(())
    }

    /// Steady-state deviation per unit of lost power, Hz/pu.
    pub fn steady_state_gain(&self) -> T {
        -self.f0 / (self.r_agg + self.d)
    }

    /// Positive coefficient `c` such that the nadir is `f0 - c * delta_p_e`.
    pub fn nadir_coefficient(&self) -> Result<T, AnalyticError> {
        self.check()?;
        let tn = nadir_time(self)?;
        let two = T::lit(2.0);
        let overshoot = (-self.xi * self.omega_n * tn).exp()
            * (self.t_agg * (self.r_agg - self.f_agg) / (two * self.h_sys)).sqrt();
        Ok(self.f0 / (self.r_agg + self.d) * (T::one() + overshoot))
    }

    /// Largest `delta_p_e` (system base) keeping the predicted nadir at or above `f_lmt`.
    pub fn max_disturbance_for_nadir(&self, f_lmt: T) -> Result<T, AnalyticError> {
        Ok((self.f0 - f_lmt) / self.nadir_coefficient()?)
    }
}

/// Capacity-weighted aggregation of the fleet.
pub fn aggregate_low_order<T: Scalar>(
    case: &PowerCase,
    mode: Aggregation,
) -> Result<LowOrderParams<T>, AnalyticError> {
    let units: Vec<_> = match mode {
        Aggregation::ExcludeContingency => case.in_service().collect(),
        Aggregation::AllUnits => case.generators.iter().collect(),
    };
    let cap: f64 = units.iter().map(|g| g.p_max).sum();
    if units.is_empty() || !(cap > 0.0) {
        return Err(AnalyticError::EmptyFleet);
    }
    let wavg = |f: &dyn Fn(&crate::grid::Generator) -> f64| -> f64 {
        units.iter().map(|g| f(g) * g.p_max).sum::<f64>() / cap
    };
    let h_sys = wavg(&|g| g.inertia_h);
    let f_agg = wavg(&|g| g.governor.k * g.governor.f_hp / g.governor.r);
    let r_agg = wavg(&|g| g.governor.k / g.governor.r);
    let t_agg = wavg(&|g| g.governor.t5);
    let p = LowOrderParams::from_aggregates(
        T::lit(h_sys),
        T::lit(case.damping_d),
        T::lit(f_agg),
        T::lit(r_agg),
        T::lit(t_agg),
        T::lit(case.f0),
    );
    p.check()?;
    Ok(p)
}

/// Swing-equation RoCoF immediately after losing `p_d` MW, Hz/s.
pub fn worst_rocof<T: Scalar>(case: &PowerCase, p_d: T) -> Result<T, AnalyticError> {
    if !(p_d >= T::zero()) {
        return Err(AnalyticError::InvalidArgument("p_d must be non-negative"));
    }
    let h = case.in_service_inertia();
    if !(h > 0.0) {
        return Err(AnalyticError::ZeroInertia);
    }
    Ok(-T::lit(case.f0) * (p_d / T::lit(case.p_base)) / (T::lit(2.0) * T::lit(h)))
}

/// Time of the frequency nadir after a step loss.
///
/// `t = atan(w_d T / (xi w_n T - 1)) / w_d`, on the branch giving `t > 0`.
pub fn nadir_time<T: Scalar>(p: &LowOrderParams<T>) -> Result<T, AnalyticError> {
    p.check()?;
    let num = p.omega_d * p.t_agg;
    let den = p.xi * p.omega_n * p.t_agg - T::one();
    let mut angle = if den == T::zero() {
        T::FRAC_PI_2()
    } else {
        (num / den).atan()
    };
    if angle <= T::zero() {
        angle = angle + T::PI();
    }
    Ok(angle / p.omega_d)
}

/// Frequency deviation at the nadir, Hz. Linear in `delta_p_e`.
pub fn nadir_deviation<T: Scalar>(p: &LowOrderParams<T>, delta_p_e: T) -> Result<T, AnalyticError> {
    if !(delta_p_e >= T::zero()) {
        return Err(AnalyticError::InvalidArgument(
            "delta_p_e must be non-negative",
        ));
    }
    Ok(-p.nadir_coefficient()? * delta_p_e)
}

/// Step response of the low-order model at time `t`, Hz.
pub fn time_response<T: Scalar>(
    p: &LowOrderParams<T>,
    delta_p_e: T,
    t: T,
) -> Result<T, AnalyticError> {
    p.check()?;
    if !(t >= T::zero()) {
        return Err(AnalyticError::InvalidArgument("t must be non-negative"));
    }
    let two = T::lit(2.0);
    let sigma = p.xi * p.omega_n;
    let decay = (-sigma * t).exp();
    let (s, c) = (p.omega_d * t).sin_cos();
    // inverse Laplace of (1 + sT) / (2 H T s (s^2 + 2 xi w_n s + w_n^2))
    let step = (T::one() - decay * (c + sigma / p.omega_d * s)) / (p.omega_n * p.omega_n);
    let impulse = p.t_agg * decay * s / p.omega_d;
    Ok(-p.f0 * delta_p_e * (step + impulse) / (two * p.h_sys * p.t_agg))
}
