//! Linear and mixed-binary programming.

mod bnb;
mod lpformat;
mod problem;
mod pwl;
mod simplex;

pub use bnb::{solve_milp, BnbConfig, IncumbentHook};
pub use lpformat::{parse_lp, write_lp, write_lp_relaxation};
pub use problem::{
    LpError, LpProblem, MilpProblem, Row, Sense, Solution, SolveStats, Status, Variable,
};
pub use pwl::{piecewise_cost, PiecewiseCost};
pub use simplex::{solve_lp, solve_lp_with, SimplexConfig};
