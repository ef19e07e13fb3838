//! Best-first branch and bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::scalar::Scalar;

use super::problem::{LpError, LpProblem, MilpProblem, Solution, SolveStats, Status};
use super::simplex::{solve_lp_with, SimplexConfig};

#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub node_limit: usize,
    /// Absolute optimality gap.
    pub gap_tol: f64,
    pub integrality_tol: f64,
    /// Row tolerance used to accept hook proposals.
    pub feasibility_tol: f64,
    pub simplex: SimplexConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            node_limit: 50_000,
            gap_tol: 1e-6,
            integrality_tol: 1e-6,
            feasibility_tol: 1e-6,
            simplex: SimplexConfig::default(),
        }
    }
}

/// Supplies integral candidates from a node's relaxation. Proposals are
/// checked for feasibility before they can become the incumbent.
pub trait IncumbentHook<T> {
    fn propose(&self, problem: &MilpProblem<T>, relaxation: &[T]) -> Option<Vec<T>>;
}

struct Node<T> {
    bound: T,
    depth: usize,
    id: usize,
    fixings: Vec<(usize, T)>,
    values: Vec<T>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Node<T> {}
impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Node<T> {
    // max-heap: the "greatest" node is the lowest bound, then deepest, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        crate::scalar::cmp(other.bound, self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

fn with_fixings<T: Scalar>(lp: &LpProblem<T>, fixings: &[(usize, T)]) -> LpProblem<T> {
    let mut lp = lp.clone();
    for &(j, v) in fixings {
        lp.vars[j].lower = v;
        lp.vars[j].upper = v;
    }
    lp
}

fn most_fractional<T: Scalar>(binaries: &[usize], x: &[T], tol: T) -> Option<usize> {
    let half = T::lit(0.5);
    let mut best: Option<(usize, T)> = None;
    for &b in binaries {
        let frac = (x[b] - x[b].floor()).min(x[b].ceil() - x[b]);
        if frac > tol {
            let score = (x[b] - x[b].floor() - half).abs();
            match best {
                Some((_, s)) if s <= score => {}
                _ => best = Some((b, score)),
            }
        }
    }
    best.map(|(b, _)| b)
}

pub fn solve_milp<T: Scalar>(
    problem: &MilpProblem<T>,
    cfg: &BnbConfig,
    hook: Option<&dyn IncumbentHook<T>>,
) -> Result<Solution<T>, LpError> {
    problem.validate()?;
    let started = Instant::now();
    let n = problem.lp.vars.len();
    let int_tol = T::lit(cfg.integrality_tol);
    let gap_tol = T::lit(cfg.gap_tol);
    let mut stats = SolveStats::default();

    let root = solve_lp_with(&problem.lp, &cfg.simplex)?;
    stats.iterations += root.stats.iterations;
    if root.status != Status::Optimal {
        stats.wall_time = started.elapsed();
        return Ok(Solution::without_point(root.status, n, stats));
    }

    let mut incumbent: Option<(T, Vec<T>)> = None;
    let mut heap = BinaryHeap::new();
    let mut next_id = 1usize;
    heap.push(Node {
        bound: root.objective,
        depth: 0,
        id: 0,
        fixings: Vec::new(),
        values: root.values,
    });

    let accept = |cand: Vec<T>, incumbent: &mut Option<(T, Vec<T>)>| -> bool {
        if cand.len() != n
            || problem.max_fractionality(&cand) > int_tol
            || problem.lp.max_violation(&cand) > T::lit(cfg.feasibility_tol)
        {
            return false;
        }
        let obj = problem.lp.objective_value(&cand);
        match incumbent {
            Some((best, _)) if *best <= obj => false,
            _ => {
                *incumbent = Some((obj, cand));
                true
            }
        }
    };

    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= *best - gap_tol {
                heap.clear();
                break;
            }
        }
        let Some(branch) = most_fractional(&problem.binaries, &node.values, int_tol) else {
            if accept(node.values, &mut incumbent) {
                stats.incumbent_updates += 1;
            }
            continue;
        };
        if let Some(h) = hook {
            if let Some(cand) = h.propose(problem, &node.values) {
                if accept(cand, &mut incumbent) {
                    stats.incumbent_updates += 1;
                    stats.hook_incumbents += 1;
                }
            }
        }
        if stats.nodes >= cfg.node_limit {
            heap.push(node);
            hit_limit = true;
            break;
        }
        for v in [T::zero(), T::one()] {
            let mut fixings = node.fixings.clone();
            fixings.push((branch, v));
            let child = solve_lp_with(&with_fixings(&problem.lp, &fixings), &cfg.simplex)?;
            stats.nodes += 1;
            stats.iterations += child.stats.iterations;
            if child.status != Status::Optimal {
                continue;
            }
            let slack = T::lit(1e-7) * (T::one() + node.bound.abs());
            if child.objective < node.bound - slack {
                stats.monotonicity_violations += 1;
            }
            if let Some((best, _)) = &incumbent {
                if child.objective >= *best - gap_tol {
                    continue;
                }
            }
            heap.push(Node {
                bound: child.objective.max(node.bound),
                depth: node.depth + 1,
                id: next_id,
                fixings,
                values: child.values,
            });
            next_id += 1;
        }
    }

    stats.wall_time = started.elapsed();
    match incumbent {
        Some((obj, values)) => {
            let status = if hit_limit {
                let lowest = heap.iter().map(|nd| nd.bound).fold(obj, T::min);
                stats.gap = (obj - lowest).as_f64().max(0.0);
                if stats.gap <= cfg.gap_tol {
                    Status::Optimal
                } else {
                    Status::NodeLimit
                }
            } else {
                Status::Optimal
            };
            Ok(Solution {
                status,
                values,
                objective: obj,
                stats,
            })
        }
        None if hit_limit => {
            stats.gap = f64::INFINITY;
            Ok(Solution::without_point(Status::NodeLimit, n, stats))
        }
        None => Ok(Solution::without_point(Status::Infeasible, n, stats)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, Sense};

    fn knapsack() -> MilpProblem<f64> {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut p = MilpProblem::new();
        let a = p.add_binary("a", -5.0);
        let b = p.add_binary("b", -4.0);
        let c = p.add_binary("c", -3.0);
        p.lp.add_row("r1", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 5.0);
        p.lp.add_row("r2", vec![(a, 4.0), (b, 1.0), (c, 2.0)], Sense::Le, 11.0);
        p.lp.add_row("r3", vec![(a, 3.0), (b, 4.0), (c, 2.0)], Sense::Le, 8.0);
        p
    }

    fn enumerate(p: &MilpProblem<f64>) -> Option<f64> {
        let k = p.binaries.len();
        let mut best: Option<f64> = None;
        for mask in 0..(1u32 << k) {
            let fix: Vec<(usize, f64)> = p
                .binaries
                .iter()
                .enumerate()
                .map(|(i, &b)| (b, ((mask >> i) & 1) as f64))
                .collect();
            let s = solve_lp(&with_fixings(&p.lp, &fix)).unwrap();
            if s.is_optimal() {
                best = Some(best.map_or(s.objective, |b: f64| b.min(s.objective)));
            }
        }
        best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        let p = knapsack();
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - enumerate(&p).unwrap()).abs() < 1e-9);
        assert_eq!(s.stats.monotonicity_violations, 0);
    }

    #[test]
    fn no_binaries_is_one_lp() {
        let mut p = MilpProblem::<f64>::new();
        let x = p.lp.add_var("x", 0.0, 3.0, 1.0);
        p.lp.add_row("r", vec![(x, 1.0)], Sense::Ge, 1.5);
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        assert_eq!(s.stats.nodes, 0);
        assert!((s.objective - 1.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_binaries_equal_lp() {
        let mut p = knapsack();
        p.lp.add_row("fa", vec![(0, 1.0)], Sense::Eq, 1.0);
        p.lp.add_row("fb", vec![(1, 1.0)], Sense::Eq, 0.0);
        p.lp.add_row("fc", vec![(2, 1.0)], Sense::Eq, 1.0);
        let lp = solve_lp(&p.lp).unwrap();
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        assert!((s.objective - lp.objective).abs() < 1e-12);
    }

    #[test]
    fn infeasible_root() {
        let mut p = knapsack();
        p.lp.add_row("bad", vec![(0, 1.0)], Sense::Ge, 2.0);
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn integrality_gap_instance() {
        // relaxation is fractional: x + y = 1, x - y with both binary and a parity row
        let mut p = MilpProblem::<f64>::new();
        let x = p.add_binary("x", -1.0);
        let y = p.add_binary("y", -1.0);
        p.lp.add_row("r", vec![(x, 2.0), (y, 2.0)], Sense::Le, 3.0);
        let s = solve_milp(&p, &BnbConfig::default(), None).unwrap();
        assert!((s.objective + 1.0).abs() < 1e-9);
        assert!(s.stats.nodes > 0);
    }

    struct RoundDown;
    impl IncumbentHook<f64> for RoundDown {
        fn propose(&self, p: &MilpProblem<f64>, x: &[f64]) -> Option<Vec<f64>> {
            let mut c = x.to_vec();
            for &b in &p.binaries {
                c[b] = c[b].floor();
            }
            Some(c)
        }
    }

    #[test]
    fn hook_proposals_are_checked() {
        let p = knapsack();
        let s = solve_milp(&p, &BnbConfig::default(), Some(&RoundDown)).unwrap();
        assert!((s.objective - enumerate(&p).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn node_limit_reports_gap() {
        let p = knapsack();
        let cfg = BnbConfig {
            node_limit: 0,
            ..BnbConfig::default()
        };
        let s = solve_milp(&p, &cfg, None).unwrap();
        assert_eq!(s.status, Status::NodeLimit);
    }
}
