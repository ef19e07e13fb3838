use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{HarnessError, StudyConfig};
use crate::grid::PowerCase;
use crate::neural::{Sample, ScenarioDataset, Split};
use crate::opf::{build_topf, simulate_dispatch, solve_variant};

/// Input columns of the predictor for `case`.
pub fn feature_names(case: &PowerCase, contingencies: &[String]) -> Vec<String> {
    let mut names: Vec<String> = case
        .generators
        .iter()
        .map(|g| format!("gen_{}", g.id))
        .collect();
    names.extend(case.loads.keys().map(|b| format!("load_{b}")));
    names.extend(contingencies.iter().map(|id| format!("ctg_{id}")));
    names
}

/// Candidate tripped units for scenario generation.
pub fn contingency_set(case: &PowerCase, cfg: &StudyConfig) -> Result<Vec<String>, HarnessError> {
    let set = if cfg.contingencies.is_empty() {
        vec![case
            .contingency_unit
            .clone()
            .ok_or(HarnessError::Config("case has no contingency unit".into()))?]
    } else {
        cfg.contingencies.clone()
    };
    for id in &set {
        if case.generator(id).is_none() {
            return Err(HarnessError::Config(format!(
                "unknown contingency unit {id}"
            )));
        }
    }
    Ok(set)
}

/// Moves `dispatch` toward `total` using headroom (or footroom)
/// proportionally, staying inside the limits.
pub fn rebalance(case: &PowerCase, dispatch: &mut [f64], total: f64) {
    let gap = total - dispatch.iter().sum::<f64>();
    let room: Vec<f64> = case
        .generators
        .iter()
        .zip(dispatch.iter())
        .map(|(g, &p)| if gap > 0.0 { g.p_max - p } else { p - g.p_min })
        .collect();
    let sum: f64 = room.iter().sum();
    if sum <= 0.0 {
        return;
    }
    let share = (gap.abs() / sum).min(1.0);
    for (p, r) in dispatch.iter_mut().zip(room) {
        *p += gap.signum() * r * share;
    }
}

fn sample_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One labelled scenario, or `None` when the scaled case is infeasible.
fn scenario(
    case: &PowerCase,
    cfg: &StudyConfig,
    contingencies: &[String],
    index: usize,
) -> Result<Option<Vec<f64>>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(cfg.seed, index));
    let scale = if cfg.load_scale_max > cfg.load_scale_min {
        rng.random_range(cfg.load_scale_min..cfg.load_scale_max)
    } else {
        cfg.load_scale_min
    };
    let tripped = &contingencies[rng.random_range(0..contingencies.len())];
    let scaled = case.scale_loads(scale)?.select_contingency(tripped)?;
    let base = match build_topf(&scaled, &cfg.opf).and_then(|m| solve_variant(&m, false)) {
        Ok(s) => s.mw(),
        Err(e) => {
            warn!("sample {index}: skipped at load scale {scale:.4}: {e}");
            return Ok(None);
        }
    };
    let mut dispatch: Vec<f64> = base
        .iter()
        .zip(&scaled.generators)
        .map(|(&p, g)| {
            let span = cfg.perturbation * (g.p_max - g.p_min);
            let delta = if span > 0.0 {
                rng.random_range(-span..=span)
            } else {
                0.0
            };
            (p + delta).clamp(g.p_min, g.p_max)
        })
        .collect();
    rebalance(&scaled, &mut dispatch, scaled.total_load());
    let map: BTreeMap<String, f64> = scaled
        .generators
        .iter()
        .zip(&dispatch)
        .map(|(g, &p)| (g.id.clone(), p))
        .collect();
    let (metrics, _) = simulate_dispatch(&scaled, &map, &cfg.sim)?;
    let mut row = dispatch;
    row.extend(scaled.loads.values().copied());
    row.extend(
        contingencies
            .iter()
            .map(|id| if id == tripped { 1.0 } else { 0.0 }),
    );
    row.push(metrics.rocof_worst);
    row.push(metrics.nadir);
    Ok(Some(row))
}

/// Monte Carlo scenarios labelled by the full-order simulator.
pub fn generate_dataset(
    case: &PowerCase,
    cfg: &StudyConfig,
) -> Result<ScenarioDataset, HarnessError> {
    cfg.validate()?;
    case.validate()?;
    let contingencies = contingency_set(case, cfg)?;
    let rows: Vec<Option<Vec<f64>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| scenario(case, cfg, &contingencies, i))
        .collect::<Result<_, _>>()?;
    let mut data = ScenarioDataset::new(feature_names(case, &contingencies));
    let mut skipped = 0;
    for row in rows {
        let Some(mut row) = row else {
            skipped += 1;
            continue;
        };
        let fn_hz = row.pop().expect("label");
        let rocof = row.pop().expect("label");
        data.samples.push(Sample {
            features: row,
            rocof,
            fn_hz,
            split: Split::Train,
        });
    }
    if skipped > 0 {
        warn!("{skipped} of {} samples skipped as infeasible", cfg.samples);
    }
    data.assign_splits(cfg.seed);
    data.validate(case.f0)?;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin_case;

    #[test]
    fn rebalance_hits_total_within_limits() {
        let case = builtin_case("ieee9").unwrap();
        let mut d: Vec<f64> = case.generators.iter().map(|g| g.p_max).collect();
        rebalance(&case, &mut d, 300.0);
        assert!((d.iter().sum::<f64>() - 300.0).abs() < 1e-9);
        for (p, g) in d.iter().zip(&case.generators) {
            assert!(*p >= g.p_min - 1e-12 && *p <= g.p_max + 1e-12);
        }
        let mut d: Vec<f64> = case.generators.iter().map(|g| g.p_min).collect();
        rebalance(&case, &mut d, 300.0);
        assert!((d.iter().sum::<f64>() - 300.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_range_gives_single_deterministic_row() {
        let case = builtin_case("ieee9").unwrap();
        let cfg = StudyConfig {
            samples: 1,
            load_scale_min: 1.0,
            load_scale_max: 1.0,
            perturbation: 0.0,
            ..StudyConfig::default()
        };
        let a = generate_dataset(&case, &cfg).unwrap();
        let b = generate_dataset(&case, &cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a, b);
        let loads: Vec<f64> = case.loads.values().copied().collect();
        let s = &a.samples[0];
        assert_eq!(&s.features[9..12], loads.as_slice());
        assert_eq!(s.features[12], 1.0);
        assert!(s.rocof < 0.0 && s.fn_hz < 60.0);
    }
}
