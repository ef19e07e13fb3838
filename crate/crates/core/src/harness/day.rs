use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svg::{line_chart, Guide, Series};
use super::{write_file, HarnessError, StudyConfig};
use crate::grid::PowerCase;
use crate::neural::ModelFile;
use crate::opf::{
    build_dnnfcopf, build_lfcopf, build_topf, solve_variant, verify_dispatch, DispatchSolution,
    OpfError, Variant,
};
use crate::sim::{window_samples, SfrTrace};

/// One line of the day results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRow {
    pub hour: usize,
    pub variant: Variant,
    pub cost: Option<f64>,
    pub solve_ms: Option<f64>,
    pub pred_rocof: Option<f64>,
    pub pred_fn: Option<f64>,
    pub sim_rocof: Option<f64>,
    pub sim_fn: Option<f64>,
    pub err_rocof_pct: Option<f64>,
    pub err_fn_pct: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HourOutcome {
    pub hour: usize,
    pub variant: Variant,
    pub row: DayRow,
    pub solution: Option<DispatchSolution>,
    pub trace: Option<SfrTrace<f64>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct DayResults {
    pub outcomes: Vec<HourOutcome>,
}

impl DayResults {
    pub fn rows(&self) -> Vec<DayRow> {
        self.outcomes.iter().map(|o| o.row.clone()).collect()
    }

    pub fn get(&self, hour: usize, variant: Variant) -> Option<&HourOutcome> {
        self.outcomes
            .iter()
            .find(|o| o.hour == hour && o.variant == variant)
    }

    pub fn failures(&self) -> impl Iterator<Item = &HourOutcome> {
        self.outcomes.iter().filter(|o| o.failure.is_some())
    }
}

fn run_variant(
    case: &PowerCase,
    model: &ModelFile,
    cfg: &StudyConfig,
    variant: Variant,
) -> Result<(DispatchSolution, Option<f64>), OpfError> {
    let start = Instant::now();
    let built = match variant {
        Variant::Topf => build_topf(case, &cfg.opf)?,
        Variant::Lfcopf => build_lfcopf(case, &cfg.opf)?,
        Variant::DnnFcopf => build_dnnfcopf(case, model, &cfg.opf)?,
    };
    let sol = solve_variant(&built, cfg.pattern_repair)?;
    let ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    Ok((sol, ms))
}

fn run_hour(
    case: &PowerCase,
    model: &ModelFile,
    cfg: &StudyConfig,
    hour: usize,
) -> Vec<HourOutcome> {
    let empty = |variant| DayRow {
        hour,
        variant,
        cost: None,
        solve_ms: None,
        pred_rocof: None,
        pred_fn: None,
        sim_rocof: None,
        sim_fn: None,
        err_rocof_pct: None,
        err_fn_pct: None,
    };
    let scaled = match case.scale_loads(cfg.profile[hour - 1]) {
        Ok(c) => c,
        Err(e) => {
            return Variant::ALL
                .into_iter()
                .map(|variant| HourOutcome {
                    hour,
                    variant,
                    row: empty(variant),
                    solution: None,
                    trace: None,
                    failure: Some(e.to_string()),
                })
                .collect()
        }
    };
    Variant::ALL
        .into_iter()
        .map(|variant| {
            let result = run_variant(&scaled, model, cfg, variant).and_then(|(sol, ms)| {
                verify_dispatch(&scaled, &sol, &cfg.sim).map(|v| (sol, ms, v))
            });
            match result {
                Ok((sol, ms, v)) => HourOutcome {
                    hour,
                    variant,
                    row: DayRow {
                        hour,
                        variant,
                        cost: Some(sol.cost),
                        solve_ms: ms,
                        pred_rocof: sol.pred_rocof,
                        pred_fn: sol.pred_fn,
                        sim_rocof: Some(v.metrics.rocof_worst),
                        sim_fn: Some(v.metrics.nadir),
                        err_rocof_pct: v.err_rocof_pct,
                        err_fn_pct: v.err_fn_pct,
                    },
                    solution: Some(sol),
                    trace: Some(v.trace),
                    failure: None,
                },
                Err(e) => {
                    warn!("hour {hour} {}: {e}", variant.as_str());
                    HourOutcome {
                        hour,
                        variant,
                        row: empty(variant),
                        solution: None,
                        trace: None,
                        failure: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

/// Solves and verifies all three formulations for every profile hour.
pub fn run_day(
    case: &PowerCase,
    model: &ModelFile,
    cfg: &StudyConfig,
) -> Result<DayResults, HarnessError> {
    cfg.validate()?;
    case.validate()?;
    // fail fast on a model that does not fit the case
    build_dnnfcopf(case, model, &cfg.opf)?;
    let mut outcomes: Vec<HourOutcome> = (1..=24)
        .into_par_iter()
        .flat_map_iter(|h| run_hour(case, model, cfg, h))
        .collect();
    outcomes.sort_by_key(|o| (o.hour, o.variant));
    let failed = outcomes.iter().filter(|o| o.failure.is_some()).count();
    info!(
        "day run finished: {} solves, {failed} failed",
        outcomes.len()
    );
    Ok(DayResults { outcomes })
}

pub fn write_day_csv(rows: &[DayRow]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
}

pub fn read_day_csv(bytes: &[u8]) -> Result<Vec<DayRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<Vec<DayRow>, _>>()?)
}

/// Windowed slope of a frequency trace, Hz/s.
pub fn rocof_curve(trace: &SfrTrace<f64>, window: f64) -> Vec<(f64, f64)> {
    let w = window_samples(trace.dt, window);
    (w..trace.delta_f.len())
        .map(|k| {
            (
                trace.t[k],
                (trace.delta_f[k] - trace.delta_f[k - w]) / (w as f64 * trace.dt),
            )
        })
        .collect()
}

fn by_hour(rows: &[DayRow], variant: Variant, f: fn(&DayRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.variant == variant)
        .filter_map(|r| f(r).map(|v| (r.hour as f64, v)))
        .collect()
}

fn variant_series(
    rows: &[DayRow],
    variants: &[Variant],
    f: fn(&DayRow) -> Option<f64>,
) -> Vec<Series<'static>> {
    variants
        .iter()
        .map(|&v| Series {
            name: v.as_str(),
            points: by_hour(rows, v, f),
        })
        .collect()
}

/// Hour-by-hour figures drawn from the CSV rows alone.
pub fn hourly_figures(rows: &[DayRow], cfg: &StudyConfig) -> Vec<(String, String)> {
    let all = Variant::ALL;
    let predicted = [Variant::Lfcopf, Variant::DnnFcopf];
    vec![
        (
            "fig_fn_by_hour.svg".into(),
            line_chart(
                "Simulated frequency nadir",
                "hour",
                "Hz",
                &variant_series(rows, &all, |r| r.sim_fn),
                &[Guide {
                    label: "nadir limit",
                    y: cfg.opf.nadir_limit,
                }],
            ),
        ),
        (
            "fig_rocof_by_hour.svg".into(),
            line_chart(
                "Simulated RoCoF",
                "hour",
                "Hz/s",
                &variant_series(rows, &all, |r| r.sim_rocof),
                &[Guide {
                    label: "RoCoF limit",
                    y: cfg.opf.rocof_limit,
                }],
            ),
        ),
        (
            "fig_error_rocof_by_hour.svg".into(),
            line_chart(
                "RoCoF prediction error",
                "hour",
                "%",
                &variant_series(rows, &predicted, |r| r.err_rocof_pct),
                &[],
            ),
        ),
        (
            "fig_error_fn_by_hour.svg".into(),
            line_chart(
                "Nadir prediction error",
                "hour",
                "%",
                &variant_series(rows, &predicted, |r| r.err_fn_pct),
                &[],
            ),
        ),
    ]
}

/// Transient figures for the configured hours.
pub fn trace_figures(day: &DayResults, cfg: &StudyConfig, f0: f64) -> Vec<(String, String)> {
    let mut figs = Vec::new();
    let window = cfg.sim.window_cycles / f0;
    for &h in &cfg.trace_hours {
        let mut freq = Vec::new();
        let mut slope = Vec::new();
        for v in Variant::ALL {
            let Some(trace) = day.get(h, v).and_then(|o| o.trace.as_ref()) else {
                continue;
            };
            let step = (trace.t.len() / 1500).max(1);
            freq.push(Series {
                name: v.as_str(),
                points: trace
                    .t
                    .iter()
                    .zip(&trace.delta_f)
                    .step_by(step)
                    .take_while(|p| *p.0 <= 10.0)
                    .map(|(&t, &d)| (t, f0 + d))
                    .collect(),
            });
            slope.push(Series {
                name: v.as_str(),
                points: rocof_curve(trace, window)
                    .into_iter()
                    .step_by(step)
                    .take_while(|p| p.0 <= 10.0)
                    .collect(),
            });
        }
        figs.push((
            format!("fig_trace_freq_h{h}.svg"),
            line_chart(
                &format!("Frequency after the trip, hour {h}"),
                "time (s)",
                "Hz",
                &freq,
                &[Guide {
                    label: "nadir limit",
                    y: cfg.opf.nadir_limit,
                }],
            ),
        ));
        figs.push((
            format!("fig_trace_rocof_h{h}.svg"),
            line_chart(
                &format!("RoCoF after the trip, hour {h}"),
                "time (s)",
                "Hz/s",
                &slope,
                &[Guide {
                    label: "RoCoF limit",
                    y: cfg.opf.rocof_limit,
                }],
            ),
        ));
    }
    figs
}

/// Writes `day_results.csv` and the figures.
pub fn write_day_outputs(
    day: &DayResults,
    cfg: &StudyConfig,
    f0: f64,
    out_dir: &Path,
) -> Result<(), HarnessError> {
    let rows = day.rows();
    write_file(&out_dir.join("day_results.csv"), &write_day_csv(&rows)?)?;
    for (name, svg) in hourly_figures(&rows, cfg)
        .into_iter()
        .chain(trace_figures(day, cfg, f0))
    {
        write_file(&out_dir.join(name), svg.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(hour: usize, variant: Variant) -> DayRow {
        DayRow {
            hour,
            variant,
            cost: Some(1234.5),
            solve_ms: None,
            pred_rocof: (variant != Variant::Topf).then_some(-0.4),
            pred_fn: None,
            sim_rocof: Some(-0.41),
            sim_fn: Some(59.6),
            err_rocof_pct: None,
            err_fn_pct: Some(0.01),
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = vec![row(1, Variant::Topf), row(1, Variant::DnnFcopf)];
        let bytes = write_day_csv(&rows).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with(
            "hour,variant,cost,solve_ms,pred_rocof,pred_fn,sim_rocof,sim_fn,err_rocof_pct,err_fn_pct\n"
        ));
        assert!(text.contains("1,T-OPF,1234.5,,,,-0.41,59.6,,0.01"));
        assert_eq!(read_day_csv(&bytes).unwrap(), rows);
    }

    #[test]
    fn rocof_curve_of_ramp_is_constant() {
        let dt = 1e-3;
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * dt).collect();
        let trace = SfrTrace {
            dt,
            delta_f: t.iter().map(|x| -0.3 * x).collect(),
            delta_pm_total: vec![0.0; t.len()],
            t,
            settled: true,
        };
        let c = rocof_curve(&trace, 0.1);
        assert!(c.iter().all(|p| (p.1 + 0.3).abs() < 1e-9));
    }
}
