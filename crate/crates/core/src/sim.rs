//! Full-order system frequency response simulator.
//!
//! Every surviving unit contributes a turbine-governor branch
//!
//! ```text
//! G_i(s) = (K/R) (1 + s T2)/(1 + s T1) * 1/(1 + s T3) * (1 + s F T5)/((1 + s T4)(1 + s T5))
//! ```
//!
//! driven by the per-unit frequency deviation and scaled to the system base.
//! All branches feed a single aggregated swing block
//! `2 H dw/dt = sum(dPm) - dPe - D w`. Zero time constants drop their factor,
//! so a unit with `T2 = T4 = 0` yields a three-state branch.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::PowerCase;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no dispatch entry for generator `{0}`")]
    MissingDispatch(String),
    #[error("negative dispatch {mw} MW for generator `{id}`")]
    NegativeDispatch { id: String, mw: f64 },
    #[error("case has no designated contingency unit")]
    NoContingency,
    #[error("no in-service inertia after the contingency")]
    NoInertia,
    #[error("non-finite state at step {0}")]
    NonFinite(usize),
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(&'static str),
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("trace with {len} samples is shorter than the {window}-sample window")]
    TraceTooShort { len: usize, window: usize },
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Ascending-power polynomial product with `(1 + s*tau)`; `tau == 0` is a no-op.
fn mul_lead<T: Scalar>(poly: &[T], tau: T) -> Vec<T> {
    if tau == T::zero() {
        return poly.to_vec();
    }
    let mut out = vec![T::zero(); poly.len() + 1];
    for (i, &c) in poly.iter().enumerate() {
        out[i] = out[i] + c;
        out[i + 1] = out[i + 1] + c * tau;
    }
    out
}

/// One governor-turbine branch in controllable canonical form.
///
/// `x' = A x + B u`, `y = C x` with `A` the companion matrix of the monic
/// denominator. `den` holds the monic coefficients `a_0..a_{n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GovernorBranch<T> {
    pub unit_id: String,
    pub den: Vec<T>,
    pub num: Vec<T>,
    /// machine base to system base factor `mva_base / p_base`.
    pub scale: T,
}

impl<T: Scalar> GovernorBranch<T> {
    pub fn from_params(unit_id: &str, g: &crate::grid::GovernorParams, scale: T) -> Self {
        let one = [T::one()];
        let lit = T::lit;
        let gain = lit(g.k / g.r);
        let num = mul_lead(&mul_lead(&[gain], lit(g.t2)), lit(g.f_hp * g.t5));
        let mut den = one.to_vec();
        for tau in [g.t1, g.t3, g.t4, g.t5] {
            den = mul_lead(&den, lit(tau));
        }
        let lead = *den.last().expect("nonempty");
        let order = den.len() - 1;
        let den_monic: Vec<T> = den[..order].iter().map(|&a| a / lead).collect();
        let mut num_monic: Vec<T> = num.iter().map(|&b| b / lead).collect();
        num_monic.resize(order, T::zero());
        Self {
            unit_id: unit_id.to_string(),
            den: den_monic,
            num: num_monic,
            scale,
        }
    }

    pub fn order(&self) -> usize {
        self.den.len()
    }

    /// Static gain of the branch on the system base.
    pub fn dc_gain(&self) -> T {
        self.scale * self.num[0] / self.den[0]
    }

    #[inline]
    fn output(&self, x: &[T]) -> T {
        self.scale * self.num.iter().zip(x).map(|(&c, &xi)| c * xi).sum::<T>()
    }

    #[inline]
    fn derivative(&self, x: &[T], u: T, dx: &mut [T]) {
        let n = self.order();
        dx[..n - 1].copy_from_slice(&x[1..n]);
        let mut acc = u;
        for (&a, &xi) in self.den.iter().zip(x) {
            acc = acc - a * xi;
        }
        dx[n - 1] = acc;
    }
}

/// Linear model of the post-contingency system.
#[derive(Debug, Clone, PartialEq)]
pub struct SfrSystem<T> {
    pub branches: Vec<GovernorBranch<T>>,
    /// Sum of in-service inertia on the system base, seconds.
    pub h_sum: T,
    pub damping: T,
    /// Lost generation, per unit on the system base.
    pub delta_pe: T,
    pub f0: T,
}

/// Builds the full-order model for the case's designated contingency.
pub fn build_full_order<T: Scalar>(
    case: &PowerCase,
    dispatch: &BTreeMap<String, f64>,
) -> Result<SfrSystem<T>, SimError> {
    let ctg = case
        .contingency_unit
        .as_deref()
        .ok_or(SimError::NoContingency)?;
    for g in &case.generators {
        let mw = *dispatch
            .get(&g.id)
            .ok_or_else(|| SimError::MissingDispatch(g.id.clone()))?;
        if !(mw >= 0.0) {
            return Err(SimError::NegativeDispatch {
                id: g.id.clone(),
                mw,
            });
        }
    }
    let branches: Vec<GovernorBranch<T>> = case
        .in_service()
        .map(|g| GovernorBranch::from_params(&g.id, &g.governor, T::lit(g.mva_base / case.p_base)))
        .collect();
    let h_sum = case.in_service_inertia();
    if !(h_sum > 0.0) {
        return Err(SimError::NoInertia);
    }
    Ok(SfrSystem {
        branches,
        h_sum: T::lit(h_sum),
        damping: T::lit(case.damping_d),
        delta_pe: T::lit(dispatch[ctg] / case.p_base),
        f0: T::lit(case.f0),
    })
}

impl<T: Scalar> SfrSystem<T> {
    /// `sum_i K_i/R_i * mva_i/p_base` over the modelled branches.
    pub fn aggregate_droop_gain(&self) -> T {
        self.branches.iter().map(|b| b.dc_gain()).sum()
    }

    /// Final-value prediction of the frequency deviation in Hz.
    pub fn steady_state_deviation(&self) -> T {
        -self.f0 * self.delta_pe / (self.aggregate_droop_gain() + self.damping)
    }

    fn state_len(&self) -> usize {
        1 + self.branches.iter().map(|b| b.order()).sum::<usize>()
    }

    fn mechanical_power(&self, x: &[T]) -> T {
        let mut off = 1;
        let mut pm = T::zero();
        for b in &self.branches {
            pm = pm + b.output(&x[off..off + b.order()]);
            off += b.order();
        }
        pm
    }

    fn derivative(&self, x: &[T], dx: &mut [T]) {
        let w = x[0];
        let mut off = 1;
        let mut pm = T::zero();
        for b in &self.branches {
            let n = b.order();
            pm = pm + b.output(&x[off..off + n]);
            b.derivative(&x[off..off + n], -w, &mut dx[off..off + n]);
            off += n;
        }
        let two = T::lit(2.0);
        dx[0] = (pm - self.delta_pe - self.damping * w) / (two * self.h_sum);
    }
}

/// Uniformly sampled response to the step loss applied at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SfrTrace<T> {
    pub dt: T,
    pub t: Vec<T>,
    /// Frequency deviation, Hz.
    pub delta_f: Vec<T>,
    /// Total mechanical power change, per unit on the system base.
    pub delta_pm_total: Vec<T>,
    /// False when the last 10% of the horizon still drifts faster than 1e-4 Hz/s.
    pub settled: bool,
}

pub const SETTLE_SLOPE_HZ_PER_S: f64 = 1e-4;

/// Integrates the model with the classical fixed-step fourth-order Runge-Kutta scheme.
pub fn simulate<T: Scalar>(
    system: &SfrSystem<T>,
    duration: T,
    dt: T,
) -> Result<SfrTrace<T>, SimError> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(SimError::InvalidSetting("dt must be positive"));
    }
    if !(duration >= dt) || !duration.is_finite() {
        return Err(SimError::InvalidSetting(
            "duration must be at least one step",
        ));
    }
    let steps = (duration / dt).round().to_usize().unwrap_or(0);
    let n = system.state_len();
    let mut x = vec![T::zero(); n];
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
    );
    let mut tmp = vec![T::zero(); n];
    let mut t = Vec::with_capacity(steps + 1);
    let mut delta_f = Vec::with_capacity(steps + 1);
    let mut delta_pm = Vec::with_capacity(steps + 1);
    t.push(T::zero());
    delta_f.push(T::zero());
    delta_pm.push(T::zero());

    let half = T::lit(0.5);
    let sixth = T::lit(1.0 / 6.0);
    let two = T::lit(2.0);
    for step in 1..=steps {
        system.derivative(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + half * dt * k1[i];
        }
        system.derivative(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + half * dt * k2[i];
        }
        system.derivative(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        system.derivative(&tmp, &mut k4);
        for i in 0..n {
            x[i] = x[i] + sixth * dt * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite(step));
        }
        t.push(T::lit(step as f64) * dt);
        delta_f.push(x[0] * system.f0);
        delta_pm.push(system.mechanical_power(&x));
    }

    let tail_start = steps - steps / 10;
    let limit = T::lit(SETTLE_SLOPE_HZ_PER_S);
    let settled = delta_f[tail_start..]
        .windows(2)
        .all(|w| ((w[1] - w[0]) / dt).abs() < limit);
    if !settled {
        log::debug!("frequency response not settled within the {duration} s horizon");
    }
    Ok(SfrTrace {
        dt,
        t,
        delta_f,
        delta_pm_total: delta_pm,
        settled,
    })
}

/// Inertia-weighted centre-of-inertia frequency.
pub fn coi_frequency<T: Scalar>(traces: &[Vec<T>], inertias: &[T]) -> Result<Vec<T>, SimError> {
    if traces.is_empty() {
        return Err(SimError::Empty);
    }
    if traces.len() != inertias.len() {
        return Err(SimError::LengthMismatch(traces.len(), inertias.len()));
    }
    if inertias.iter().any(|&h| !(h > T::zero())) {
        return Err(SimError::InvalidSetting("inertias must be positive"));
    }
    let len = traces[0].len();
    if let Some(bad) = traces.iter().find(|tr| tr.len() != len) {
        return Err(SimError::LengthMismatch(len, bad.len()));
    }
    let total: T = inertias.iter().copied().sum();
    Ok((0..len)
        .map(|k| {
            traces
                .iter()
                .zip(inertias)
                .map(|(tr, &h)| tr[k] * h)
                .sum::<T>()
                / total
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics<T> {
    /// Most negative windowed slope, Hz/s.
    pub rocof_worst: T,
    /// Frequency nadir, Hz.
    #[serde(rename = "fn")]
    pub nadir: T,
    pub t_nadir: T,
    pub f_ss: T,
}

/// Number of samples spanned by a measurement window.
pub fn window_samples<T: Scalar>(dt: T, window: T) -> usize {
    (window / dt).round().to_usize().unwrap_or(0).max(1)
}

/// Extracts worst windowed RoCoF, nadir, nadir time and steady-state frequency.
pub fn compute_metrics<T: Scalar>(
    trace: &SfrTrace<T>,
    f0: T,
    window: T,
) -> Result<FrequencyMetrics<T>, SimError> {
    if trace.delta_f.is_empty() {
        return Err(SimError::Empty);
    }
    if !(window >= trace.dt * T::lit(1.0 - 1e-9)) {
        return Err(SimError::InvalidSetting(
            "window shorter than the time step",
        ));
    }
    let w = window_samples(trace.dt, window);
    let df = &trace.delta_f;
    if df.len() <= w {
        return Err(SimError::TraceTooShort {
            len: df.len(),
            window: w,
        });
    }
    let span = T::lit(w as f64) * trace.dt;
    let rocof = (0..df.len() - w)
        .map(|i| (df[i + w] - df[i]) / span)
        .fold(T::infinity(), T::min);
    let (imin, &dmin) =
        df.iter().enumerate().fold(
            (0, &df[0]),
            |best, cur| if *cur.1 < *best.1 { cur } else { best },
        );
    let tail = (df.len() / 20).max(1);
    let mean_tail = df[df.len() - tail..].iter().copied().sum::<T>() / T::lit(tail as f64);
    Ok(FrequencyMetrics {
        rocof_worst: rocof,
        nadir: f0 + dmin,
        t_nadir: trace.t[imin],
        f_ss: f0 + mean_tail,
    })
}

/// Writes `t,delta_f_hz,delta_pm_pu`.
pub fn write_trace_csv<T: Scalar, W: Write>(trace: &SfrTrace<T>, out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "delta_f_hz", "delta_pm_pu"])?;
    for k in 0..trace.t.len() {
        w.write_record([
            trace.t[k].to_string(),
            trace.delta_f[k].to_string(),
            trace.delta_pm_total[k].to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes `scenario_id,rocof,fn,t_nadir,f_ss` rows.
pub fn write_metrics_csv<T: Scalar, W: Write>(
    rows: &[(String, FrequencyMetrics<T>)],
    out: W,
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario_id", "rocof", "fn", "t_nadir", "f_ss"])?;
    for (id, m) in rows {
        w.write_record([
            id.clone(),
            m.rocof_worst.to_string(),
            m.nadir.to_string(),
            m.t_nadir.to_string(),
            m.f_ss.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GovernorParams;

    fn gov(t2: f64, t4: f64) -> GovernorParams {
        GovernorParams {
            t1: 0.1,
            t2,
            t3: 0.3,
            t4,
            t5: 7.0,
            f_hp: 0.3,
            k: 1.0,
            r: 0.05,
        }
    }

    fn system(delta_pe: f64) -> SfrSystem<f64> {
        SfrSystem {
            branches: vec![
                GovernorBranch::from_params("a", &gov(0.05, 0.2), 1.0),
                GovernorBranch::from_params("b", &gov(0.0, 0.0), 0.5),
            ],
            h_sum: 6.0,
            damping: 1.0,
            delta_pe,
            f0: 60.0,
        }
    }

    #[test]
    fn degenerate_time_constants_shrink_branch() {
        let full = GovernorBranch::<f64>::from_params("a", &gov(0.05, 0.2), 1.0);
        let reduced = GovernorBranch::<f64>::from_params("b", &gov(0.0, 0.0), 1.0);
        assert_eq!(full.order(), 4);
        assert_eq!(reduced.order(), 3);
        assert!((full.dc_gain() - 20.0).abs() < 1e-12);
        assert!((reduced.dc_gain() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_disturbance_stays_at_rest() {
        let trace = simulate(&system(0.0), 5.0, 1e-3).unwrap();
        assert!(trace.delta_f.iter().all(|&v| v == 0.0));
        assert_eq!(trace.t.len(), 5001);
    }

    #[test]
    fn rejects_bad_step() {
        assert!(simulate(&system(0.1), 5.0, 0.0).is_err());
        assert!(simulate(&system(0.1), 5.0, -1.0).is_err());
    }

    #[test]
    fn steady_state_matches_final_value() {
        let sys = system(0.2);
        let trace = simulate(&sys, 60.0, 1e-3).unwrap();
        let m = compute_metrics(&trace, 60.0, 10.0 / 60.0).unwrap();
        let expected = sys.steady_state_deviation();
        assert!(((m.f_ss - 60.0) - expected).abs() < 0.01 * expected.abs());
        assert!(m.nadir <= m.f_ss && m.f_ss <= 60.0);
        assert!(m.t_nadir > 0.0);
    }

    #[test]
    fn linearity_and_superposition() {
        let a = simulate(&system(0.1), 10.0, 1e-3).unwrap();
        let b = simulate(&system(0.25), 10.0, 1e-3).unwrap();
        let ab = simulate(&system(0.35), 10.0, 1e-3).unwrap();
        let a2 = simulate(&system(0.2), 10.0, 1e-3).unwrap();
        let scale = ab.delta_f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..a.delta_f.len() {
            assert!((a2.delta_f[k] - 2.0 * a.delta_f[k]).abs() <= 1e-9 * scale);
            assert!((ab.delta_f[k] - a.delta_f[k] - b.delta_f[k]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn coi_examples() {
        let out = coi_frequency::<f64>(&[vec![60.0], vec![59.8]], &[300.0, 100.0]).unwrap();
        assert!((out[0] - 59.95).abs() < 1e-12);
        let single = coi_frequency(&[vec![1.0, 2.0, 3.0]], &[5.0]).unwrap();
        assert_eq!(single, vec![1.0, 2.0, 3.0]);
        let eq = coi_frequency(&[vec![1.0, 4.0], vec![3.0, 0.0]], &[2.0, 2.0]).unwrap();
        assert_eq!(eq, vec![2.0, 2.0]);
        assert!(matches!(
            coi_frequency::<f64>(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 1.0]),
            Err(SimError::LengthMismatch(..))
        ));
        assert!(matches!(
            coi_frequency::<f64>(&[], &[]),
            Err(SimError::Empty)
        ));
    }

    fn synthetic(values: Vec<f64>, dt: f64) -> SfrTrace<f64> {
        let n = values.len();
        SfrTrace {
            dt,
            t: (0..n).map(|k| k as f64 * dt).collect(),
            delta_pm_total: vec![0.0; n],
            delta_f: values,
            settled: true,
        }
    }

    #[test]
    fn metrics_flat_and_ramp() {
        let flat = synthetic(vec![0.0; 100], 0.01);
        let m = compute_metrics(&flat, 60.0, 0.1).unwrap();
        assert_eq!(m.rocof_worst, 0.0);
        assert_eq!(m.nadir, 60.0);

        let ramp = synthetic((0..500).map(|k| -(k as f64) * 0.01).collect(), 0.01);
        for window in [0.01, 0.05, 0.167, 1.0] {
            let m = compute_metrics(&ramp, 60.0, window).unwrap();
            assert!((m.rocof_worst + 1.0).abs() < 1e-9, "window {window}");
        }
    }

    #[test]
    fn metrics_reject_short_trace() {
        let short = synthetic(vec![0.0; 5], 0.01);
        assert!(matches!(
            compute_metrics(&short, 60.0, 0.1),
            Err(SimError::TraceTooShort { .. })
        ));
    }

    #[test]
    fn csv_headers() {
        let trace = synthetic(vec![0.0, -0.1], 0.5);
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,delta_f_hz,delta_pm_pu\n0,0,0\n"));
        let m = compute_metrics(&synthetic(vec![0.0, -0.1, -0.2], 0.5), 60.0, 0.5).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&[("s1".to_string(), m)], &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("scenario_id,rocof,fn,t_nadir,f_ss\ns1,"));
    }
}
