//! Dense-tableau primal simplex with implicit variable bounds.
//!
//! Variables are shifted onto `[0, u]` (free variables are split), slack and
//! artificial columns give an identity start, and a two-phase method finds a
//! feasible basis first. Entering columns use the largest reduced cost until a
//! run of degenerate pivots is seen, then Bland's rule takes over until the
//! objective moves again. The final basic values are recomputed from the
//! original data to shed accumulated round-off.

use std::time::Instant;

use crate::scalar::Scalar;

use super::problem::{LpError, LpProblem, Sense, Solution, SolveStats, Status};

#[derive(Debug, Clone)]
pub struct SimplexConfig {
    pub max_iterations: usize,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub stall_limit: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            stall_limit: 50,
        }
    }
}

pub fn solve_lp<T: Scalar>(problem: &LpProblem<T>) -> Result<Solution<T>, LpError> {
    solve_lp_with(problem, &SimplexConfig::default())
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Structural,
    Slack,
    Artificial,
}

struct Column<T> {
    orig: usize,
    sign: T,
    kind: Kind,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Tableau<T> {
    m: usize,
    n: usize,
    tab: Vec<T>,
    xb: Vec<T>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
    at_upper: Vec<bool>,
    ub: Vec<T>,
    blocked: Vec<bool>,
    d: Vec<T>,
    iterations: usize,
}

impl<T: Scalar> Tableau<T> {
    fn price(&mut self, cost: &[T]) {
        let n = self.n;
        self.d.copy_from_slice(cost);
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != T::zero() {
                let row = &self.tab[i * n..(i + 1) * n];
                for (dj, &a) in self.d.iter_mut().zip(row) {
                    *dj = *dj - cb * a;
                }
            }
        }
        for &bj in &self.basis {
            self.d[bj] = T::zero();
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let piv = self.tab[r * n + q];
        for j in 0..n {
            self.tab[r * n + j] = self.tab[r * n + j] / piv;
        }
        self.tab[r * n + q] = T::one();
        let (before, rest) = self.tab.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        for row in before.chunks_mut(n).chain(after.chunks_mut(n)) {
            let f = row[q];
            if f != T::zero() {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x = *x - f * p;
                }
                row[q] = T::zero();
            }
        }
        let f = self.d[q];
        if f != T::zero() {
            for (dj, &p) in self.d.iter_mut().zip(prow.iter()) {
                *dj = *dj - f * p;
            }
            self.d[q] = T::zero();
        }
        let leaving = self.basis[r];
        self.row_of[leaving] = None;
        self.row_of[q] = Some(r);
        self.basis[r] = q;
    }

    fn iterate(&mut self, cfg: &SimplexConfig) -> Outcome {
        let n = self.n;
        let otol = T::lit(cfg.optimality_tol);
        let ptol = T::lit(cfg.pivot_tol);
        let tie = T::lit(1e-12);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= cfg.max_iterations {
                return Outcome::IterationLimit;
            }
            // entering column
            let mut enter: Option<usize> = None;
            let mut best = T::zero();
            for j in 0..n {
                if self.row_of[j].is_some() || self.blocked[j] || self.ub[j] == T::zero() {
                    continue;
                }
                let dj = self.d[j];
                let eligible = if self.at_upper[j] {
                    dj > otol
                } else {
                    dj < -otol
                };
                if !eligible {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Outcome::Optimal;
            };
            self.iterations += 1;
            let dir = if self.at_upper[q] {
                -T::one()
            } else {
                T::one()
            };

            // ratio test; `None` means the entering column hits its own bound
            let mut step = self.ub[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_alpha = T::zero();
            for i in 0..self.m {
                let alpha = self.tab[i * n + q] * dir;
                let (t, to_upper) = if alpha > ptol {
                    (self.xb[i].max(T::zero()) / alpha, false)
                } else if alpha < -ptol {
                    let u = self.ub[self.basis[i]];
                    if !u.is_finite() {
                        continue;
                    }
                    ((u - self.xb[i]).max(T::zero()) / (-alpha), true)
                } else {
                    continue;
                };
                let better = if t < step - tie {
                    true
                } else if t <= step + tie {
                    match leave {
                        None => false,
                        Some((r, _)) => {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                alpha.abs() > leave_alpha
                            }
                        }
                    }
                } else {
                    false
                };
                if better {
                    step = t;
                    leave = Some((i, to_upper));
                    leave_alpha = alpha.abs();
                }
            }
            if !step.is_finite() {
                return Outcome::Unbounded;
            }
            for i in 0..self.m {
                let a = self.tab[i * n + q];
                if a != T::zero() {
                    self.xb[i] = self.xb[i] - dir * step * a;
                }
            }
            match leave {
                None => self.at_upper[q] = !self.at_upper[q],
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[q] {
                        self.ub[q] - step
                    } else {
                        step
                    };
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.xb[r] = entering_value;
                    self.at_upper[q] = false;
                    self.at_upper[leaving] = to_upper;
                }
            }
            if step <= T::lit(1e-12) {
                degenerate_run += 1;
                if degenerate_run > cfg.stall_limit {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
    }

    fn column_values(&self) -> Vec<T> {
        (0..self.n)
            .map(|j| match self.row_of[j] {
                Some(r) => self.xb[r],
                None if self.at_upper[j] => self.ub[j],
                None => T::zero(),
            })
            .collect()
    }
}

/// Solves `B y = rhs` by Gaussian elimination with partial pivoting.
fn dense_solve<T: Scalar>(mut mat: Vec<T>, mut rhs: Vec<T>, m: usize) -> Option<Vec<T>> {
    for k in 0..m {
        let (p, pv) = (k..m)
            .map(|i| (i, mat[i * m + k].abs()))
            .fold((k, T::zero()), |a, b| if b.1 > a.1 { b } else { a });
        if pv <= T::lit(1e-14) {
            return None;
        }
        if p != k {
            for j in 0..m {
                mat.swap(k * m + j, p * m + j);
            }
            rhs.swap(k, p);
        }
        let piv = mat[k * m + k];
        for i in k + 1..m {
            let f = mat[i * m + k] / piv;
            if f != T::zero() {
                for j in k..m {
                    mat[i * m + j] = mat[i * m + j] - f * mat[k * m + j];
                }
                rhs[i] = rhs[i] - f * rhs[k];
            }
        }
    }
    let mut y = vec![T::zero(); m];
    for k in (0..m).rev() {
        let mut acc = rhs[k];
        for j in k + 1..m {
            acc = acc - mat[k * m + j] * y[j];
        }
        y[k] = acc / mat[k * m + k];
    }
    Some(y)
}

pub fn solve_lp_with<T: Scalar>(
    problem: &LpProblem<T>,
    cfg: &SimplexConfig,
) -> Result<Solution<T>, LpError> {
    problem.validate()?;
    let started = Instant::now();
    let nv = problem.vars.len();

    // column layout: structural (shifted/split) then slacks then artificials
    let mut cols: Vec<Column<T>> = Vec::new();
    let mut ub: Vec<T> = Vec::new();
    let mut shift = vec![T::zero(); nv];
    let mut cols_of: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (j, v) in problem.vars.iter().enumerate() {
        if v.lower.is_finite() {
            shift[j] = v.lower;
            cols_of[j].push(cols.len());
            cols.push(Column {
                orig: j,
                sign: T::one(),
                kind: Kind::Structural,
            });
            ub.push(v.upper - v.lower);
        } else if v.upper.is_finite() {
            shift[j] = v.upper;
            cols_of[j].push(cols.len());
            cols.push(Column {
                orig: j,
                sign: -T::one(),
                kind: Kind::Structural,
            });
            ub.push(T::infinity());
        } else {
            for sign in [T::one(), -T::one()] {
                cols_of[j].push(cols.len());
                cols.push(Column {
                    orig: j,
                    sign,
                    kind: Kind::Structural,
                });
                ub.push(T::infinity());
            }
        }
    }
    let n_struct = cols.len();
    let m = problem.rows.len();

    let mut rhs = Vec::with_capacity(m);
    let mut row_sign = Vec::with_capacity(m);
    for row in &problem.rows {
        let shifted = row.rhs - row.coeffs.iter().map(|&(j, a)| a * shift[j]).sum::<T>();
        let s = if shifted < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        rhs.push(shifted * s);
        row_sign.push(s);
    }
    let mut slack_of = vec![None; m];
    for (i, row) in problem.rows.iter().enumerate() {
        if row.sense != Sense::Eq {
            slack_of[i] = Some(cols.len());
            cols.push(Column {
                orig: i,
                sign: T::one(),
                kind: Kind::Slack,
            });
            ub.push(T::infinity());
        }
    }
    let mut basis = vec![usize::MAX; m];
    for (i, row) in problem.rows.iter().enumerate() {
        let slack_coef = match row.sense {
            Sense::Le => row_sign[i],
            Sense::Ge => -row_sign[i],
            Sense::Eq => T::zero(),
        };
        if slack_coef > T::zero() {
            basis[i] = slack_of[i].expect("inequality has slack");
        } else {
            basis[i] = cols.len();
            cols.push(Column {
                orig: i,
                sign: T::one(),
                kind: Kind::Artificial,
            });
            ub.push(T::infinity());
        }
    }
    let n = cols.len();

    let mut a0 = vec![T::zero(); m * n];
    for (i, row) in problem.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            for &k in &cols_of[j] {
                a0[i * n + k] = a0[i * n + k] + a * cols[k].sign * row_sign[i];
            }
        }
        if let Some(k) = slack_of[i] {
            let c = if row.sense == Sense::Le {
                T::one()
            } else {
                -T::one()
            };
            a0[i * n + k] = c * row_sign[i];
        }
    }
    for (i, &bj) in basis.iter().enumerate() {
        if cols[bj].kind == Kind::Artificial {
            a0[i * n + bj] = T::one();
        }
    }

    let mut row_of = vec![None; n];
    for (i, &bj) in basis.iter().enumerate() {
        row_of[bj] = Some(i);
    }
    let mut tb = Tableau {
        m,
        n,
        tab: a0.clone(),
        xb: rhs.clone(),
        basis,
        row_of,
        at_upper: vec![false; n],
        ub,
        blocked: vec![false; n],
        d: vec![T::zero(); n],
        iterations: 0,
    };

    let stats = |tb: &Tableau<T>| SolveStats {
        iterations: tb.iterations,
        wall_time: started.elapsed(),
        ..SolveStats::default()
    };

    let has_artificials = cols.iter().any(|c| c.kind == Kind::Artificial);
    if has_artificials {
        let phase1: Vec<T> = cols
            .iter()
            .map(|c| {
                if c.kind == Kind::Artificial {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        tb.price(&phase1);
        match tb.iterate(cfg) {
            Outcome::Optimal => {}
            Outcome::IterationLimit => {
                return Ok(Solution::without_point(
                    Status::IterationLimit,
                    nv,
                    stats(&tb),
                ))
            }
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
        }
        let infeas: T = tb
            .basis
            .iter()
            .zip(&tb.xb)
            .filter(|(&bj, _)| cols[bj].kind == Kind::Artificial)
            .map(|(_, &v)| v.max(T::zero()))
            .sum();
        let scale = T::one() + rhs.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()));
        if infeas > T::lit(cfg.feasibility_tol) * scale {
            return Ok(Solution::without_point(Status::Infeasible, nv, stats(&tb)));
        }
        // pivot remaining artificials out where possible
        for r in 0..m {
            if cols[tb.basis[r]].kind != Kind::Artificial {
                continue;
            }
            let cand = (0..n)
                .filter(|&j| cols[j].kind != Kind::Artificial && tb.row_of[j].is_none())
                .map(|j| (j, tb.tab[r * n + j].abs()))
                .filter(|&(_, a)| a > T::lit(1e-7))
                .fold(None, |best: Option<(usize, T)>, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((q, _)) = cand {
                let value = if tb.at_upper[q] { tb.ub[q] } else { T::zero() };
                tb.pivot(r, q);
                tb.xb[r] = value;
                tb.at_upper[q] = false;
            }
        }
        for (j, c) in cols.iter().enumerate() {
            if c.kind == Kind::Artificial {
                tb.blocked[j] = true;
                tb.ub[j] = T::zero();
            }
        }
    }

    let phase2: Vec<T> = cols
        .iter()
        .map(|c| match c.kind {
            Kind::Structural => problem.objective[c.orig] * c.sign,
            _ => T::zero(),
        })
        .collect();
    tb.price(&phase2);
    let status = match tb.iterate(cfg) {
        Outcome::Optimal => Status::Optimal,
        Outcome::Unbounded => {
            return Ok(Solution::without_point(Status::Unbounded, nv, stats(&tb)))
        }
        Outcome::IterationLimit => Status::IterationLimit,
    };

    let to_original = |y: &[T]| -> Vec<T> {
        let mut x = shift.clone();
        for (k, c) in cols.iter().enumerate().take(n_struct) {
            x[c.orig] = x[c.orig] + c.sign * y[k];
        }
        x
    };
    let mut y = tb.column_values();
    let mut x = to_original(&y);

    // recompute basic values from the original columns
    let mut bmat = vec![T::zero(); m * m];
    let mut r = rhs.clone();
    for i in 0..m {
        for (jj, &bj) in tb.basis.iter().enumerate() {
            bmat[i * m + jj] = a0[i * n + bj];
        }
        for j in 0..n {
            if tb.row_of[j].is_none() && y[j] != T::zero() {
                r[i] = r[i] - a0[i * n + j] * y[j];
            }
        }
    }
    if let Some(yb) = dense_solve(bmat, r, m) {
        let mut refined = y.clone();
        for (i, &bj) in tb.basis.iter().enumerate() {
            let mut v = yb[i];
            let eps = T::lit(cfg.feasibility_tol);
            if v < T::zero() && v > -eps {
                v = T::zero();
            }
            if tb.ub[bj].is_finite() && v > tb.ub[bj] && v < tb.ub[bj] + eps {
                v = tb.ub[bj];
            }
            refined[bj] = v;
        }
        let xr = to_original(&refined);
        if problem.max_violation(&xr) <= problem.max_violation(&x) {
            y = refined;
            x = xr;
        }
    }
    let _ = y;
    let objective = problem.objective_value(&x);
    Ok(Solution {
        status,
        values: x,
        objective,
        stats: stats(&tb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_variable_vertex() {
        let mut p = LpProblem::<f64>::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, -1.0);
        p.add_row("c", vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-9);
        // at a vertex one of the two coordinates is zero
        assert!(s.values[0].abs() < 1e-9 || s.values[1].abs() < 1e-9);
    }

    #[test]
    fn bounds_only() {
        let mut p = LpProblem::<f64>::new();
        p.add_var("a", -2.0, 3.0, 1.0);
        p.add_var("b", -2.0, 3.0, -1.0);
        p.add_var("c", -2.0, 3.0, 0.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.values[0], -2.0);
        assert_eq!(s.values[1], 3.0);
        assert!((s.objective + 5.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let mut p = LpProblem::<f64>::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        p.add_row("lo", vec![(x, 1.0)], Sense::Ge, 1.0);
        p.add_row("hi", vec![(x, 1.0)], Sense::Le, 0.0);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = LpProblem::<f64>::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, -1.0);
        let y = p.add_var("y", 0.0, f64::INFINITY, 0.0);
        p.add_row("r", vec![(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn free_and_upper_only_variables() {
        // min x - y, x free with x >= -4 via row, y <= 2 only
        let mut p = LpProblem::<f64>::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, 2.0, -1.0);
        p.add_row("r", vec![(x, 1.0)], Sense::Ge, -4.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.values[x] + 4.0).abs() < 1e-12);
        assert!((s.values[y] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equality_with_redundant_row() {
        let mut p = LpProblem::<f64>::new();
        let x = p.add_var("x", 0.0, 10.0, 1.0);
        let y = p.add_var("y", 0.0, 10.0, 2.0);
        p.add_row("e1", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 4.0);
        p.add_row("e2", vec![(x, 2.0), (y, 2.0)], Sense::Eq, 8.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn f32_instance() {
        let mut p = LpProblem::<f32>::new();
        let x = p.add_var("x", 0.0, 5.0, -2.0);
        let y = p.add_var("y", 0.0, 5.0, -1.0);
        p.add_row("c", vec![(x, 1.0), (y, 1.0)], Sense::Le, 6.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective + 11.0).abs() < 1e-4);
    }
}
