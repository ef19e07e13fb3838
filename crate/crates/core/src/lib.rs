#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Frequency-constrained optimal power flow laboratory.

pub mod analytic;
pub mod encode;
pub mod grid;
pub mod harness;
pub mod lp;
pub mod neural;
pub mod opf;
pub mod scalar;
pub mod sim;

pub use scalar::Scalar;

pub type Mlp64 = neural::MlpParams<f64>;
pub type Mlp32 = neural::MlpParams<f32>;
pub type Normalizer64 = neural::Normalizer<f64>;
pub type SfrSystem64 = sim::SfrSystem<f64>;
pub type SfrTrace64 = sim::SfrTrace<f64>;
pub type LowOrder64 = analytic::LowOrderParams<f64>;
pub type Lp64 = lp::LpProblem<f64>;
pub type Milp64 = lp::MilpProblem<f64>;
