//! Subset of the CPLEX LP text format: one objective, rows, bounds, binaries.

use std::fmt::Write as _;

use crate::scalar::Scalar;

use super::problem::{LpError, LpProblem, MilpProblem, Sense};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.[]".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_expr<T: Scalar>(out: &mut String, terms: &[(usize, T)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names.first().cloned().unwrap_or_else(|| "x0".into()));
        return;
    }
    for (k, &(j, a)) in terms.iter().enumerate() {
        let v = a.as_f64();
        if k == 0 {
            let _ = write!(out, " {v:e} {}", names[j]);
        } else if v < 0.0 {
            let _ = write!(out, " - {:e} {}", -v, names[j]);
        } else {
            let _ = write!(out, " + {v:e} {}", names[j]);
        }
    }
}

/// Renders `problem` as LP text. Variable names are sanitized and suffixed
/// with their index so they stay unique.
pub fn write_lp<T: Scalar>(problem: &MilpProblem<T>) -> String {
    let lp = &problem.lp;
    let names: Vec<String> = lp
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| format!("{}_{j}", sanitize(&v.name)))
        .collect();
    let mut out = String::from("Minimize\n obj:");
    let terms: Vec<(usize, T)> = lp
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != T::zero())
        .map(|(j, &c)| (j, c))
        .collect();
    write_expr(&mut out, &terms, &names);
    let off = lp.objective_offset.as_f64();
    if off != 0.0 {
        let _ = write!(out, " + {off:e} constant");
    }
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " {}_{i}:", sanitize(&row.name));
        write_expr(&mut out, &row.coeffs, &names);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:e}", row.rhs.as_f64());
    }
    out.push_str("Bounds\n");
    if off != 0.0 {
        out.push_str(" constant = 1\n");
    }
    for (j, v) in lp.vars.iter().enumerate() {
        let (lo, hi) = (v.lower.as_f64(), v.upper.as_f64());
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {lo:e} <= {} <= {hi:e}", names[j]);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {lo:e}", names[j]);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {hi:e}", names[j]);
            }
            (false, false) => {
                let _ = writeln!(out, " {} free", names[j]);
            }
        }
    }
    if !problem.binaries.is_empty() {
        out.push_str("Binaries\n");
        for &b in &problem.binaries {
            let _ = writeln!(out, " {}", names[b]);
        }
    }
    out.push_str("End\n");
    out
}

#[derive(PartialEq, Clone, Copy)]
enum Section {
    Objective,
    Rows,
    Bounds,
    Binaries,
}

fn parse_num(tok: &str) -> Result<f64, LpError> {
    match tok {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse()
            .map_err(|_| LpError::Invalid(format!("expected number, found `{tok}`"))),
    }
}

/// Parses the subset emitted by [`write_lp`]: every term is `coef name`
/// separated by `+`/`-`, each row sits on one line.
pub fn parse_lp(text: &str) -> Result<MilpProblem<f64>, LpError> {
    let mut prob = MilpProblem::<f64>::new();
    let mut index = std::collections::HashMap::<String, usize>::new();
    let mut var = |name: &str, prob: &mut MilpProblem<f64>| -> usize {
        if let Some(&j) = index.get(name) {
            return j;
        }
        let j = prob.lp.add_var(name, 0.0, f64::INFINITY, 0.0);
        index.insert(name.to_string(), j);
        j
    };
    let parse_terms = |toks: &[&str]| -> Result<Vec<(f64, String)>, LpError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        let mut k = 0;
        while k < toks.len() {
            match toks[k] {
                "+" => sign = 1.0,
                "-" => sign = -1.0,
                t => {
                    let coef = parse_num(t)?;
                    let name = toks
                        .get(k + 1)
                        .ok_or_else(|| LpError::Invalid("dangling coefficient".into()))?;
                    terms.push((sign * coef, name.to_string()));
                    sign = 1.0;
                    k += 1;
                }
            }
            k += 1;
        }
        Ok(terms)
    };
    let mut section = None;
    let mut constant_var = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "minimize" => {
                section = Some(Section::Objective);
                continue;
            }
            "subject to" => {
                section = Some(Section::Rows);
                continue;
            }
            "bounds" => {
                section = Some(Section::Bounds);
                continue;
            }
            "binaries" => {
                section = Some(Section::Binaries);
                continue;
            }
            "end" => break,
            _ => {}
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match section {
            Some(Section::Objective) => {
                let body = toks.get(1..).unwrap_or(&[]);
                for (c, name) in parse_terms(body)? {
                    let j = var(&name, &mut prob);
                    if name == "constant" {
                        constant_var = Some(j);
                    }
                    prob.lp.objective[j] += c;
                }
            }
            Some(Section::Rows) => {
                let name = toks[0].trim_end_matches(':').to_string();
                let op_at = toks
                    .iter()
                    .position(|t| matches!(*t, "<=" | ">=" | "="))
                    .ok_or_else(|| LpError::Invalid(format!("row `{name}` lacks a sense")))?;
                let sense = match toks[op_at] {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let rhs = parse_num(toks.get(op_at + 1).copied().unwrap_or(""))?;
                let mut coeffs = Vec::new();
                for (c, n) in parse_terms(&toks[1..op_at])? {
                    let j = var(&n, &mut prob);
                    if c != 0.0 {
                        coeffs.push((j, c));
                    }
                }
                prob.lp.add_row(name, coeffs, sense, rhs);
            }
            Some(Section::Bounds) => match toks.as_slice() {
                [lo, "<=", n, "<=", hi] => {
                    let j = var(n, &mut prob);
                    prob.lp.vars[j].lower = parse_num(lo)?;
                    prob.lp.vars[j].upper = parse_num(hi)?;
                }
                [n, ">=", lo] => {
                    let j = var(n, &mut prob);
                    prob.lp.vars[j].lower = parse_num(lo)?;
                }
                [n, "<=", hi] => {
                    let j = var(n, &mut prob);
                    prob.lp.vars[j].upper = parse_num(hi)?;
                }
                [n, "=", v] => {
                    let j = var(n, &mut prob);
                    let v = parse_num(v)?;
                    prob.lp.vars[j].lower = v;
                    prob.lp.vars[j].upper = v;
                }
                [n, "free"] => {
                    let j = var(n, &mut prob);
                    prob.lp.vars[j].lower = f64::NEG_INFINITY;
                    prob.lp.vars[j].upper = f64::INFINITY;
                }
                _ => return Err(LpError::Invalid(format!("unrecognized bound `{line}`"))),
            },
            Some(Section::Binaries) => {
                for n in toks {
                    let j = var(n, &mut prob);
                    prob.lp.vars[j].lower = prob.lp.vars[j].lower.max(0.0);
                    prob.lp.vars[j].upper = prob.lp.vars[j].upper.min(1.0);
                    prob.binaries.push(j);
                }
            }
            None => {
                return Err(LpError::Invalid(format!(
                    "text before any section: `{line}`"
                )))
            }
        }
    }
    let _ = constant_var;
    Ok(prob)
}

/// Convenience for dumping a pure LP.
pub fn write_lp_relaxation<T: Scalar>(lp: &LpProblem<T>) -> String {
    write_lp(&MilpProblem::from_lp(lp.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, solve_milp, BnbConfig};

    fn sample() -> MilpProblem<f64> {
        let mut p = MilpProblem::new();
        let x = p.lp.add_var("x", -1.0, 4.0, 1.5);
        let y =
            p.lp.add_var("y flow", f64::NEG_INFINITY, f64::INFINITY, -1.0);
        let z = p.add_binary("z", 2.0);
        p.lp.objective_offset = 3.0;
        p.lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Sense::Le, 3.0);
        p.lp.add_row("b", vec![(x, -2.0), (y, 1.0), (z, 5.0)], Sense::Ge, -1.0);
        p.lp.add_row("c", vec![(y, 1.0), (z, -4.0)], Sense::Le, 1.0);
        p
    }

    #[test]
    fn round_trip_preserves_optimum() {
        let p = sample();
        let text = write_lp(&p);
        let q = parse_lp(&text).unwrap();
        let a = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        let b = solve_milp(&q, &BnbConfig::default(), None).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
        assert_eq!(q.binaries.len(), 1);
    }

    #[test]
    fn relaxation_dump_parses() {
        let p = sample();
        let text = write_lp_relaxation(&p.lp);
        let q = parse_lp(&text).unwrap();
        let a = solve_lp(&p.lp).unwrap();
        let b = solve_lp(&q.lp).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_lp("hello").is_err());
        assert!(parse_lp("Subject To\n r: 1 x\nEnd").is_err());
    }
}
