use std::collections::BTreeMap;
use std::fmt::Write;

use super::day::DayRow;
use super::HarnessError;
use crate::opf::Variant;

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: Variant,
    pub rows: usize,
    pub failed: usize,
    pub mean_cost: Option<f64>,
    pub min_sim_fn: Option<f64>,
    pub min_sim_rocof: Option<f64>,
    pub mean_err_rocof_pct: Option<f64>,
    pub max_err_rocof_pct: Option<f64>,
    pub mean_err_fn_pct: Option<f64>,
    pub max_err_fn_pct: Option<f64>,
}

/// Per-hour check of cost(T-OPF) against both constrained variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostOrdering {
    pub hour: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub variants: Vec<VariantSummary>,
    pub ordering: Vec<CostOrdering>,
}

const COST_TOL: f64 = 1e-6;

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fold(v: &[f64], f: fn(f64, f64) -> f64) -> Option<f64> {
    v.iter().copied().reduce(f)
}

pub fn summarize(rows: &[DayRow]) -> Result<Report, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let mine: Vec<&DayRow> = rows.iter().filter(|r| r.variant == v).collect();
        if mine.is_empty() {
            continue;
        }
        let col =
            |f: fn(&DayRow) -> Option<f64>| mine.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        let (cost, fns, rocofs) = (col(|r| r.cost), col(|r| r.sim_fn), col(|r| r.sim_rocof));
        let (er, ef) = (col(|r| r.err_rocof_pct), col(|r| r.err_fn_pct));
        variants.push(VariantSummary {
            variant: v,
            rows: mine.len(),
            failed: mine.len() - cost.len(),
            mean_cost: mean(&cost),
            min_sim_fn: fold(&fns, f64::min),
            min_sim_rocof: fold(&rocofs, f64::min),
            mean_err_rocof_pct: mean(&er),
            max_err_rocof_pct: fold(&er, f64::max),
            mean_err_fn_pct: mean(&ef),
            max_err_fn_pct: fold(&ef, f64::max),
        });
    }
    let mut by_hour: BTreeMap<usize, BTreeMap<Variant, f64>> = BTreeMap::new();
    for r in rows {
        if let Some(c) = r.cost {
            by_hour.entry(r.hour).or_default().insert(r.variant, c);
        }
    }
    let ordering = by_hour
        .into_iter()
        .filter_map(|(hour, costs)| {
            let base = *costs.get(&Variant::Topf)?;
            let others: Vec<f64> = [Variant::Lfcopf, Variant::DnnFcopf]
                .iter()
                .filter_map(|v| costs.get(v).copied())
                .collect();
            (!others.is_empty()).then(|| CostOrdering {
                hour,
                holds: others
                    .iter()
                    .all(|&c| base <= c + COST_TOL * (1.0 + c.abs())),
            })
        })
        .collect();
    Ok(Report { variants, ordering })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Text tables: per-variant summary plus one block per requested hour.
pub fn render(rows: &[DayRow], hours: &[usize]) -> Result<String, HarnessError> {
    let rep = summarize(rows)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>5} {:>6} {:>12} {:>10} {:>10} {:>11} {:>11} {:>10} {:>10}",
        "variant",
        "rows",
        "failed",
        "mean cost",
        "min fn",
        "min rocof",
        "mean err r%",
        "max err r%",
        "mean err f%",
        "max err f%"
    );
    for s in &rep.variants {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>6} {:>12} {:>10} {:>10} {:>11} {:>11} {:>10} {:>10}",
            s.variant.as_str(),
            s.rows,
            s.failed,
            cell(s.mean_cost, 2),
            cell(s.min_sim_fn, 4),
            cell(s.min_sim_rocof, 4),
            cell(s.mean_err_rocof_pct, 3),
            cell(s.max_err_rocof_pct, 3),
            cell(s.mean_err_fn_pct, 4),
            cell(s.max_err_fn_pct, 4),
        );
    }
    let held = rep.ordering.iter().filter(|o| o.holds).count();
    let _ = writeln!(
        out,
        "\ncost ordering T-OPF <= constrained variants: {held}/{} hours",
        rep.ordering.len()
    );
    for &h in hours {
        let hour_rows: Vec<&DayRow> = rows.iter().filter(|r| r.hour == h).collect();
        if hour_rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\nhour {h}");
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "variant", "cost ($)", "solve ms", "rocof", "fn", "err r%", "err f%"
        );
        for r in hour_rows {
            let _ = writeln!(
                out,
                "{:<10} {:>12} {:>10} {:>10} {:>10} {:>10} {:>10}",
                r.variant.as_str(),
                cell(r.cost, 2),
                cell(r.solve_ms, 1),
                cell(r.sim_rocof, 4),
                cell(r.sim_fn, 4),
                cell(r.err_rocof_pct, 3),
                cell(r.err_fn_pct, 4),
            );
        }
        if let Some(o) = rep.ordering.iter().find(|o| o.hour == h) {
            let _ = writeln!(
                out,
                "cost ordering: {}",
                if o.holds { "holds" } else { "VIOLATED" }
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(hour: usize, variant: Variant, cost: f64) -> DayRow {
        DayRow {
            hour,
            variant,
            cost: Some(cost),
            solve_ms: None,
            pred_rocof: None,
            pred_fn: None,
            sim_rocof: Some(-0.4),
            sim_fn: Some(59.6),
            err_rocof_pct: None,
            err_fn_pct: None,
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(summarize(&[]), Err(HarnessError::EmptyReport)));
    }

    #[test]
    fn single_row_passes_through() {
        let rows = [row(1, Variant::Topf, 3500.0)];
        let rep = summarize(&rows).unwrap();
        assert_eq!(rep.variants.len(), 1);
        assert_eq!(rep.variants[0].mean_cost, Some(3500.0));
        assert!(rep.ordering.is_empty());
        let text = render(&rows, &[1]).unwrap();
        assert!(text.contains("3500.00"));
    }

    #[test]
    fn ordering_detects_violation() {
        let rows = [
            row(1, Variant::Topf, 100.0),
            row(1, Variant::Lfcopf, 101.0),
            row(2, Variant::Topf, 100.0),
            row(2, Variant::DnnFcopf, 99.0),
        ];
        let rep = summarize(&rows).unwrap();
        assert_eq!(
            rep.ordering,
            vec![
                CostOrdering {
                    hour: 1,
                    holds: true
                },
                CostOrdering {
                    hour: 2,
                    holds: false
                }
            ]
        );
        assert!(render(&rows, &[2]).unwrap().contains("VIOLATED"));
    }
}
