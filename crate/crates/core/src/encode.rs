//! Exact mixed-binary encoding of a ReLU network.
//!
//! Pre-activation bounds come from interval arithmetic over the input box.
//! Each hidden unit is classified as always active, always inactive, or
//! unstable; only unstable units receive a binary and the four big-M rows.

use thiserror::Error;

use crate::lp::{write_lp, MilpProblem, Row, Sense};
use crate::neural::MlpParams;
use crate::scalar::Scalar;

/// Absolute tolerance used to classify a unit as stable.
pub const STABLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("input {index}: interval [{lower}, {upper}] is empty or non-finite")]
    BadInput {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("network has {expected} inputs but {found} bindings were given")]
    Unmapped { expected: usize, found: usize },
    #[error("non-finite network parameter")]
    NonFinite,
    #[error("inverted bounds [{lower}, {upper}]")]
    InvertedBounds { lower: f64, upper: f64 },
    #[error("block has no output variables")]
    NoOutputs,
    #[error("external variable {0} does not exist in the target problem")]
    MissingExternal(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronBounds<T> {
    pub lower: T,
    pub upper: T,
}

/// Interval bounds on every pre-activation, layer by layer (the last entry
/// holds the output layer).
pub fn propagate_bounds<T: Scalar>(
    params: &MlpParams<T>,
    input: &[(T, T)],
) -> Result<Vec<Vec<NeuronBounds<T>>>, EncodeError> {
    if input.len() != params.input_dim() {
        return Err(EncodeError::Unmapped {
            expected: params.input_dim(),
            found: input.len(),
        });
    }
    for (index, &(lo, hi)) in input.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(EncodeError::BadInput {
                index,
                lower: lo.as_f64(),
                upper: hi.as_f64(),
            });
        }
    }
    if params.validate().is_err() {
        return Err(EncodeError::NonFinite);
    }
    let mut lo: Vec<T> = input.iter().map(|b| b.0).collect();
    let mut hi: Vec<T> = input.iter().map(|b| b.1).collect();
    let mut all = Vec::with_capacity(params.layers.len());
    for (k, layer) in params.layers.iter().enumerate() {
        let mut zl = layer.bias.clone();
        let mut zu = layer.bias.clone();
        for i in 0..layer.inputs {
            for (o, &w) in layer.row(i).iter().enumerate() {
                if w >= T::zero() {
                    zl[o] = zl[o] + w * lo[i];
                    zu[o] = zu[o] + w * hi[i];
                } else {
                    zl[o] = zl[o] + w * hi[i];
                    zu[o] = zu[o] + w * lo[i];
                }
            }
        }
        all.push(
            zl.iter()
                .zip(&zu)
                .map(|(&lower, &upper)| NeuronBounds { lower, upper })
                .collect(),
        );
        if k + 1 < params.layers.len() {
            lo = zl.iter().map(|&v| v.max(T::zero())).collect();
            hi = zu.iter().map(|&v| v.max(T::zero())).collect();
        }
    }
    Ok(all)
}

/// Reference to a variable owned by the block or by the host problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarRef {
    Local(usize),
    External(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockVar<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRow<T> {
    pub name: String,
    pub terms: Vec<(VarRef, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// How a network input enters the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputBinding<T> {
    /// Host-problem variable with its bounds.
    Variable {
        id: usize,
        lower: T,
        upper: T,
    },
    Constant(T),
}

impl<T: Scalar> InputBinding<T> {
    fn interval(&self) -> (T, T) {
        match *self {
            InputBinding::Variable { lower, upper, .. } => (lower, upper),
            InputBinding::Constant(c) => (c, c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluClass {
    Active,
    Inactive,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluEncoding {
    pub activation: VarRef,
    pub binary: Option<VarRef>,
    pub class: ReluClass,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConstraintBlock<T> {
    pub vars: Vec<BlockVar<T>>,
    pub rows: Vec<BlockRow<T>>,
    /// Output variables in network order (RoCoF, nadir).
    pub outputs: Vec<VarRef>,
    /// Per hidden layer, per unit: class and binary (if any).
    pub units: Vec<Vec<ReluEncoding>>,
}

fn classify<T: Scalar>(b: NeuronBounds<T>) -> Result<ReluClass, EncodeError> {
    if !(b.lower <= b.upper) {
        return Err(EncodeError::InvertedBounds {
            lower: b.lower.as_f64(),
            upper: b.upper.as_f64(),
        });
    }
    let tol = T::lit(STABLE_TOL);
    Ok(if b.upper <= tol {
        ReluClass::Inactive
    } else if b.lower >= -tol {
        ReluClass::Active
    } else {
        ReluClass::Unstable
    })
}

impl<T: Scalar> ConstraintBlock<T> {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            rows: Vec::new(),
            outputs: Vec::new(),
            units: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T, binary: bool) -> VarRef {
        self.vars.push(BlockVar {
            name: name.into(),
            lower,
            upper,
            binary,
        });
        VarRef::Local(self.vars.len() - 1)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarRef, T)>,
        sense: Sense,
        rhs: T,
    ) {
        self.rows.push(BlockRow {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.binary).count()
    }

    /// Emits `a = max(z, 0)` for a pre-activation variable `z` with the given
    /// bounds.
    pub fn encode_relu(
        &mut self,
        z: VarRef,
        bounds: NeuronBounds<T>,
        label: &str,
    ) -> Result<ReluEncoding, EncodeError> {
        let class = classify(bounds)?;
        let zero = T::zero();
        let one = T::one();
        let enc = match class {
            ReluClass::Inactive => ReluEncoding {
                activation: self.add_var(format!("a_{label}"), zero, zero, false),
                binary: None,
                class,
            },
            ReluClass::Active => {
                let a = self.add_var(format!("a_{label}"), zero, bounds.upper.max(zero), false);
                self.add_row(
                    format!("active_{label}"),
                    vec![(a, one), (z, -one)],
                    Sense::Eq,
                    zero,
                );
                ReluEncoding {
                    activation: a,
                    binary: None,
                    class,
                }
            }
            ReluClass::Unstable => {
                let (hl, hu) = (bounds.lower, bounds.upper);
                let a = self.add_var(format!("a_{label}"), zero, hu, false);
                let b = self.add_var(format!("b_{label}"), zero, one, true);
                // a <= z - hl (1 - b)
                self.add_row(
                    format!("relu_lo_{label}"),
                    vec![(a, one), (z, -one), (b, -hl)],
                    Sense::Le,
                    -hl,
                );
                // a >= z
                self.add_row(
                    format!("relu_ge_{label}"),
                    vec![(a, one), (z, -one)],
                    Sense::Ge,
                    zero,
                );
                // a <= hu b
                self.add_row(
                    format!("relu_on_{label}"),
                    vec![(a, one), (b, -hu)],
                    Sense::Le,
                    zero,
                );
                ReluEncoding {
                    activation: a,
                    binary: Some(b),
                    class,
                }
            }
        };
        Ok(enc)
    }

    /// Lower limits on the outputs; infinite limits add nothing.
    pub fn output_limits(&mut self, rocof_min: T, nadir_min: T) -> Result<(), EncodeError> {
        if self.outputs.len() < 2 {
            return Err(EncodeError::NoOutputs);
        }
        if rocof_min.is_finite() {
            let v = self.outputs[0];
            self.add_row("limit_rocof", vec![(v, T::one())], Sense::Ge, rocof_min);
        }
        if nadir_min.is_finite() {
            let v = self.outputs[1];
            self.add_row("limit_nadir", vec![(v, T::one())], Sense::Ge, nadir_min);
        }
        Ok(())
    }

    /// Appends the block to `problem`, returning the global id of every local
    /// variable.
    pub fn merge_into(&self, problem: &mut MilpProblem<T>) -> Result<Vec<usize>, EncodeError> {
        let n_ext = problem.lp.vars.len();
        for r in &self.rows {
            for &(v, _) in &r.terms {
                if let VarRef::External(id) = v {
                    if id >= n_ext {
                        return Err(EncodeError::MissingExternal(id));
                    }
                }
            }
        }
        let ids: Vec<usize> = self
            .vars
            .iter()
            .map(|v| {
                if v.binary {
                    let id = problem.add_binary(v.name.clone(), T::zero());
                    problem.lp.vars[id].lower = v.lower;
                    problem.lp.vars[id].upper = v.upper;
                    id
                } else {
                    problem
                        .lp
                        .add_var(v.name.clone(), v.lower, v.upper, T::zero())
                }
            })
            .collect();
        let map = |v: VarRef| match v {
            VarRef::Local(k) => ids[k],
            VarRef::External(id) => id,
        };
        for r in &self.rows {
            problem.lp.rows.push(Row {
                name: r.name.clone(),
                coeffs: r.terms.iter().map(|&(v, a)| (map(v), a)).collect(),
                sense: r.sense,
                rhs: r.rhs,
            });
        }
        Ok(ids)
    }

    /// Standalone LP-format text; external variables appear as free columns.
    pub fn to_lp_string(&self) -> String {
        let mut externals: Vec<usize> = self
            .rows
            .iter()
            .flat_map(|r| r.terms.iter())
            .filter_map(|&(v, _)| match v {
                VarRef::External(id) => Some(id),
                VarRef::Local(_) => None,
            })
            .collect();
        externals.sort_unstable();
        externals.dedup();
        let top = externals.last().map_or(0, |&m| m + 1);
        let mut p = MilpProblem::new();
        for k in 0..top {
            p.lp.add_var(
                format!("ext{k}"),
                T::neg_infinity(),
                T::infinity(),
                T::zero(),
            );
        }
        self.merge_into(&mut p).expect("externals created above");
        write_lp(&p)
    }
}

/// Standalone encoding of one unit, with the pre-activation as local
/// variable 0.
pub fn encode_relu<T: Scalar>(bounds: NeuronBounds<T>) -> Result<ConstraintBlock<T>, EncodeError> {
    let mut block = ConstraintBlock::new();
    let z = block.add_var("z", bounds.lower, bounds.upper, false);
    let enc = block.encode_relu(z, bounds, "0")?;
    block.units.push(vec![enc]);
    Ok(block)
}

/// Encodes the whole network on top of the given input bindings.
pub fn encode_network<T: Scalar>(
    params: &MlpParams<T>,
    inputs: &[InputBinding<T>],
) -> Result<ConstraintBlock<T>, EncodeError> {
    let intervals: Vec<(T, T)> = inputs.iter().map(InputBinding::interval).collect();
    let bounds = propagate_bounds(params, &intervals)?;
    let mut block = ConstraintBlock::new();
    let last = params.layers.len() - 1;
    // current layer inputs: either a variable or a constant
    let mut prev: Vec<Result<VarRef, T>> = inputs
        .iter()
        .map(|b| match *b {
            InputBinding::Variable { id, .. } => Ok(VarRef::External(id)),
            InputBinding::Constant(c) => Err(c),
        })
        .collect();
    for (k, layer) in params.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.outputs);
        let mut layer_units = Vec::new();
        for (o, &nb) in bounds[k].iter().enumerate().take(layer.outputs) {
            let name = if k == last {
                format!("out{o}")
            } else {
                format!("z{k}_{o}")
            };
            let z = block.add_var(name, nb.lower, nb.upper, false);
            let mut terms = vec![(z, T::one())];
            let mut rhs = layer.bias[o];
            for (i, src) in prev.iter().enumerate() {
                let w = layer.weight(i, o);
                if w == T::zero() {
                    continue;
                }
                match *src {
                    Ok(v) => terms.push((v, -w)),
                    Err(c) => rhs = rhs + w * c,
                }
            }
            block.add_row(format!("affine{k}_{o}"), terms, Sense::Eq, rhs);
            if k == last {
                block.outputs.push(z);
            } else {
                let enc = block.encode_relu(z, nb, &format!("{k}_{o}"))?;
                next.push(Ok(enc.activation));
                layer_units.push(enc);
            }
        }
        if k < last {
            block.units.push(layer_units);
        }
        prev = next;
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, solve_milp, BnbConfig, Status};
    use crate::neural::{forward, forward_trace, Layer, MlpSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64, spec: &MlpSpec) -> MlpParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::init_he(spec, &mut rng);
        for l in &mut p.layers {
            for b in &mut l.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        p
    }

    #[test]
    fn point_inputs_give_point_bounds() {
        let p = random_net(1, &MlpSpec::new(3, vec![5, 4]));
        let x = [0.3, -0.7, 1.1];
        let b = propagate_bounds(&p, &x.map(|v| (v, v))).unwrap();
        let tr = forward_trace(&p, &x).unwrap();
        for (layer, z) in b.iter().zip(tr.pre_activations.iter().chain([&tr.output])) {
            for (nb, &v) in layer.iter().zip(z) {
                assert!((nb.lower - v).abs() < 1e-12 && (nb.upper - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positive_weights_hand_example() {
        let p = MlpParams {
            layers: vec![
                Layer {
                    inputs: 2,
                    outputs: 2,
                    weights: vec![1.0, 2.0, 3.0, 4.0],
                    bias: vec![0.5, -1.0],
                },
                Layer {
                    inputs: 2,
                    outputs: 2,
                    weights: vec![1.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
            ],
        };
        let b = propagate_bounds(&p, &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(
            b[0][0],
            NeuronBounds {
                lower: 0.5,
                upper: 4.5
            }
        );
        assert_eq!(
            b[0][1],
            NeuronBounds {
                lower: -1.0,
                upper: 5.0
            }
        );
    }

    #[test]
    fn sampled_preactivations_are_contained() {
        let p = random_net(2, &MlpSpec::new(4, vec![8, 8]));
        let box_: Vec<(f64, f64)> = vec![(-1.0, 2.0), (0.0, 1.0), (5.0, 6.0), (-3.0, -1.0)];
        let b = propagate_bounds(&p, &box_).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x: Vec<f64> = box_.iter().map(|&(l, h)| rng.random_range(l..=h)).collect();
            let tr = forward_trace(&p, &x).unwrap();
            for (layer, z) in b.iter().zip(tr.pre_activations.iter().chain([&tr.output])) {
                for (nb, &v) in layer.iter().zip(z) {
                    assert!(nb.lower - 1e-12 <= v && v <= nb.upper + 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_intervals() {
        let p = random_net(2, &MlpSpec::new(2, vec![2]));
        assert!(matches!(
            propagate_bounds(&p, &[(1.0, 0.0), (0.0, 1.0)]),
            Err(EncodeError::BadInput { index: 0, .. })
        ));
        assert!(propagate_bounds(&p, &[(0.0, 1.0)]).is_err());
    }

    fn relu_feasible(bounds: NeuronBounds<f64>, z: f64, a: f64, b: Option<f64>) -> bool {
        let block = encode_relu(bounds).unwrap();
        let enc = block.units[0][0].clone();
        let mut p = MilpProblem::new();
        let ids = block.merge_into(&mut p).unwrap();
        let pin = |p: &mut MilpProblem<f64>, v: VarRef, val: f64| {
            if let VarRef::Local(k) = v {
                p.lp.add_row("pin", vec![(ids[k], 1.0)], Sense::Eq, val);
            }
        };
        pin(&mut p, VarRef::Local(0), z);
        pin(&mut p, enc.activation, a);
        if let (Some(bv), Some(val)) = (enc.binary, b) {
            pin(&mut p, bv, val);
        }
        solve_milp(&p, &BnbConfig::default(), None).unwrap().status == Status::Optimal
    }

    #[test]
    fn relu_stable_cases() {
        let block = encode_relu(NeuronBounds {
            lower: 1.0,
            upper: 5.0,
        })
        .unwrap();
        assert_eq!(block.num_binaries(), 0);
        assert_eq!(block.rows.len(), 1);
        assert_eq!(block.rows[0].sense, Sense::Eq);
        let dead = encode_relu(NeuronBounds {
            lower: -1e-9,
            upper: 1e-9,
        })
        .unwrap();
        assert_eq!(dead.num_binaries(), 0);
        assert_eq!(dead.units[0][0].class, ReluClass::Inactive);
        assert!(encode_relu(NeuronBounds {
            lower: 2.0,
            upper: 1.0
        })
        .is_err());
    }

    #[test]
    fn relu_unstable_enumeration() {
        let nb = NeuronBounds {
            lower: -5.0,
            upper: 3.0,
        };
        assert!(relu_feasible(nb, -2.0, 0.0, Some(0.0)));
        assert!(relu_feasible(nb, 2.0, 2.0, Some(1.0)));
        assert!(!relu_feasible(nb, -2.0, 0.0, Some(1.0)));
        assert!(!relu_feasible(nb, 2.0, 2.0, Some(0.0)));
        assert!(!relu_feasible(nb, 2.0, 0.0, None));
        assert!(!relu_feasible(nb, -2.0, 1.0, None));
    }

    fn fixed_input_problem(
        p: &MlpParams<f64>,
        x: &[f64],
        box_: &[(f64, f64)],
    ) -> (MilpProblem<f64>, ConstraintBlock<f64>, Vec<usize>) {
        let mut prob = MilpProblem::new();
        let bindings: Vec<InputBinding<f64>> = box_
            .iter()
            .enumerate()
            .map(|(i, &(l, h))| InputBinding::Variable {
                id: prob.lp.add_var(format!("x{i}"), l, h, 0.0),
                lower: l,
                upper: h,
            })
            .collect();
        for (i, &v) in x.iter().enumerate() {
            prob.lp.vars[i].lower = v;
            prob.lp.vars[i].upper = v;
        }
        let block = encode_network(p, &bindings).unwrap();
        let ids = block.merge_into(&mut prob).unwrap();
        (prob, block, ids)
    }

    fn global(ids: &[usize], v: VarRef) -> usize {
        match v {
            VarRef::Local(k) => ids[k],
            VarRef::External(id) => id,
        }
    }

    #[test]
    fn fixed_inputs_reproduce_forward_pass() {
        let spec = MlpSpec::new(3, vec![6, 5]);
        let box_ = vec![(-1.0, 1.0); 3];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let p = random_net(seed, &spec);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = forward(&p, &x).unwrap();
            let (mut prob, block, ids) = fixed_input_problem(&p, &x, &box_);
            for sign in [1.0, -1.0] {
                for (k, &o) in block.outputs.iter().enumerate() {
                    prob.lp.objective[global(&ids, o)] = sign * (k as f64 + 1.0);
                }
                let s = solve_milp(&prob, &BnbConfig::default(), None).unwrap();
                assert_eq!(s.status, Status::Optimal);
                for (k, &o) in block.outputs.iter().enumerate() {
                    assert!((s.values[global(&ids, o)] - y[k]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn pinned_outputs_off_by_a_tenth_are_infeasible() {
        let spec = MlpSpec::new(3, vec![6, 5]);
        let p = random_net(12, &spec);
        let x = [0.2, -0.4, 0.9];
        let y = forward(&p, &x).unwrap();
        let (prob, block, ids) = fixed_input_problem(&p, &x, &[(-1.0, 1.0); 3]);
        for delta in [0.0, 0.1, -0.1] {
            let mut q = prob.clone();
            q.lp.add_row(
                "pin",
                vec![(global(&ids, block.outputs[0]), 1.0)],
                Sense::Eq,
                y[0] + delta,
            );
            let s = solve_milp(&q, &BnbConfig::default(), None).unwrap();
            assert_eq!(s.status == Status::Optimal, delta == 0.0);
        }
    }

    #[test]
    fn constant_inputs_collapse() {
        let p = random_net(4, &MlpSpec::new(3, vec![4, 4]));
        let x = [0.1, 0.2, -0.3];
        let bindings: Vec<_> = x.iter().map(|&v| InputBinding::Constant(v)).collect();
        let block = encode_network(&p, &bindings).unwrap();
        assert_eq!(block.num_binaries(), 0);
        let mut prob = MilpProblem::new();
        let ids = block.merge_into(&mut prob).unwrap();
        let s = solve_lp(&prob.lp).unwrap();
        let y = forward(&p, &x).unwrap();
        for (k, &o) in block.outputs.iter().enumerate() {
            assert!((s.values[global(&ids, o)] - y[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn output_limits_rows() {
        let p = random_net(4, &MlpSpec::new(2, vec![3]));
        let bindings = [InputBinding::Constant(0.0), InputBinding::Constant(1.0)];
        let mut block = encode_network(&p, &bindings).unwrap();
        let n = block.rows.len();
        block
            .output_limits(f64::NEG_INFINITY, f64::NEG_INFINITY)
            .unwrap();
        assert_eq!(block.rows.len(), n);
        block.output_limits(-0.5, 59.5).unwrap();
        assert_eq!(block.rows.len(), n + 2);
        assert!(ConstraintBlock::<f64>::new()
            .output_limits(-0.5, 59.5)
            .is_err());
    }

    #[test]
    fn lp_dump_mentions_binaries() {
        let p = random_net(4, &MlpSpec::new(2, vec![3]));
        let bindings = [
            InputBinding::Variable {
                id: 0,
                lower: -1.0,
                upper: 1.0,
            },
            InputBinding::Variable {
                id: 1,
                lower: -1.0,
                upper: 1.0,
            },
        ];
        let block = encode_network(&p, &bindings).unwrap();
        let text = block.to_lp_string();
        assert!(text.contains("Subject To"));
        assert_eq!(text.contains("Binaries"), block.num_binaries() > 0);
        crate::lp::parse_lp(&text).unwrap();
    }
}
