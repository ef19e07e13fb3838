use std::time::Duration;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("invalid problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row<T> {
    pub name: String,
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

impl<T: Scalar> Row<T> {
    pub fn activity(&self, x: &[T]) -> T {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[T]) -> T {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(T::zero()),
            Sense::Ge => (self.rhs - act).max(T::zero()),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// `minimize c x + offset` subject to linear rows and variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub vars: Vec<Variable<T>>,
    pub objective: Vec<T>,
    pub objective_offset: T,
    pub rows: Vec<Row<T>>,
}

impl<T: Scalar> Default for LpProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> LpProblem<T> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            objective: Vec::new(),
            objective_offset: T::zero(),
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T, cost: T) -> usize {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.objective.push(cost);
        self.vars.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, T)>,
        sense: Sense,
        rhs: T,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            coeffs,
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective_offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(&c, &v)| c * v)
                .sum::<T>()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let rows = self
            .rows
            .iter()
            .map(|r| r.violation(x))
            .fold(T::zero(), T::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(T::zero()))
            .fold(T::zero(), T::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.vars.len() {
            return Err(LpError::Invalid(
                "objective length differs from variable count".into(),
            ));
        }
        if !self.objective_offset.is_finite() || self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Invalid("non-finite objective coefficient".into()));
        }
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::Invalid(format!("bad bounds on `{}`", v.name)));
            }
            if v.lower == T::infinity() || v.upper == T::neg_infinity() {
                return Err(LpError::Invalid(format!("empty bounds on `{}`", v.name)));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(LpError::Invalid(format!("non-finite rhs in `{}`", r.name)));
            }
            for &(j, a) in &r.coeffs {
                if j >= self.vars.len() {
                    return Err(LpError::Invalid(format!(
                        "row `{}` references var {j}",
                        r.name
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Invalid(format!(
                        "non-finite coefficient in `{}`",
                        r.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// LP plus a set of binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpProblem<T> {
    pub lp: LpProblem<T>,
    pub binaries: Vec<usize>,
}

impl<T: Scalar> Default for MilpProblem<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MilpProblem<T> {
    pub fn new() -> Self {
        Self {
            lp: LpProblem::new(),
            binaries: Vec::new(),
        }
    }

    pub fn from_lp(lp: LpProblem<T>) -> Self {
        Self {
            lp,
            binaries: Vec::new(),
        }
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: T) -> usize {
        let id = self.lp.add_var(name, T::zero(), T::one(), cost);
        self.binaries.push(id);
        id
    }

    pub fn validate(&self) -> Result<(), LpError> {
        self.lp.validate()?;
        for &b in &self.binaries {
            let v = self
                .lp
                .vars
                .get(b)
                .ok_or_else(|| LpError::Invalid(format!("binary id {b} out of range")))?;
            if v.lower < T::zero() || v.upper > T::one() {
                return Err(LpError::Invalid(format!(
                    "binary `{}` bounds outside [0, 1]",
                    v.name
                )));
            }
        }
        Ok(())
    }

    /// Largest distance of a binary from the nearest integer.
    pub fn max_fractionality(&self, x: &[T]) -> T {
        self.binaries
            .iter()
            .map(|&b| (x[b] - x[b].round()).abs())
            .fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Branch and bound stopped early; `values` hold the incumbent if any.
    NodeLimit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub nodes: usize,
    pub wall_time: Duration,
    /// Absolute gap between incumbent and best bound.
    pub gap: f64,
    pub incumbent_updates: usize,
    pub hook_incumbents: usize,
    /// Child relaxations whose bound fell below the parent's (should stay zero).
    pub monotonicity_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub status: Status,
    pub values: Vec<T>,
    pub objective: T,
    pub stats: SolveStats,
}

impl<T: Scalar> Solution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn without_point(status: Status, n: usize, stats: SolveStats) -> Self {
        Self {
            status,
            values: vec![T::nan(); n],
            objective: T::nan(),
            stats,
        }
    }
}
