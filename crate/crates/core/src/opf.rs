//! DC optimal power flow in three flavours: plain economic dispatch, with
//! linearized frequency rows, and with the embedded network predictor.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{aggregate_low_order, worst_rocof, Aggregation, AnalyticError};
use crate::encode::{encode_network, EncodeError, InputBinding, VarRef};
use crate::grid::{CaseError, PowerCase};
use crate::lp::{
    piecewise_cost, solve_lp_with, solve_milp, BnbConfig, IncumbentHook, LpError, MilpProblem,
    PiecewiseCost, Sense, SolveStats, Status,
};
use crate::neural::{forward, forward_trace, MlpParams, ModelFile, NeuralError};
use crate::sim::{
    build_full_order, compute_metrics, simulate, FrequencyMetrics, SfrTrace, SimError,
};

#[derive(Debug, Error)]
pub enum OpfError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("solver finished with status {0:?}")]
    NotOptimal(Status),
    #[error("model feature `{0}` has no counterpart in the case")]
    UnmappedFeature(String),
    #[error("case has no designated contingency unit")]
    NoContingency,
    #[error("dispatch check failed: {0}")]
    Check(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "T-OPF")]
    Topf,
    #[serde(rename = "L-FCOPF")]
    Lfcopf,
    #[serde(rename = "DNN-FCOPF")]
    DnnFcopf,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Topf, Variant::Lfcopf, Variant::DnnFcopf];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Topf => "T-OPF",
            Variant::Lfcopf => "L-FCOPF",
            Variant::DnnFcopf => "DNN-FCOPF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpfConfig {
    /// Cost segments per generator.
    pub segments: usize,
    /// Lower limit on RoCoF, Hz/s.
    pub rocof_limit: f64,
    /// Lower limit on the frequency nadir, Hz.
    pub nadir_limit: f64,
    /// Guard every generator instead of only the designated one.
    pub all_contingencies: bool,
    pub aggregation: Aggregation,
    /// Equalize identical units after solving.
    pub symmetrize: bool,
    pub node_limit: usize,
}

impl Default for OpfConfig {
    fn default() -> Self {
        Self {
            segments: 8,
            rocof_limit: -0.5,
            nadir_limit: 59.5,
            all_contingencies: false,
            aggregation: Aggregation::ExcludeContingency,
            symmetrize: true,
            node_limit: 50_000,
        }
    }
}

/// Linear frequency rows for one contingency unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGuard {
    pub unit: usize,
    /// RoCoF per MW lost (negative).
    pub rocof_per_mw: f64,
    /// Nadir drop per MW lost (positive).
    pub nadir_drop_per_mw: f64,
}

/// How the embedded network sees one of its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSource {
    Dispatch(usize),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedNet {
    /// Contingency unit this copy of the network guards.
    pub unit: usize,
    pub features: Vec<FeatureSource>,
    /// Global ids of the RoCoF and nadir output variables.
    pub outputs: [usize; 2],
    /// `(layer, unit, variable)` for each binary.
    pub binaries: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct OpfModel {
    pub variant: Variant,
    pub case: PowerCase,
    pub problem: MilpProblem<f64>,
    /// Dispatch variable of each generator.
    pub pg: Vec<usize>,
    pub theta: Vec<usize>,
    pub flow: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
    pub cost_curves: Vec<PiecewiseCost<f64>>,
    pub guards: Vec<LinearGuard>,
    pub nets: Vec<EmbeddedNet>,
    pub folded: Option<MlpParams<f64>>,
    pub config: OpfConfig,
}

fn contingency_units(case: &PowerCase, cfg: &OpfConfig) -> Result<Vec<usize>, OpfError> {
    if cfg.all_contingencies {
        Ok((0..case.generators.len()).collect())
    } else {
        case.contingency_index()
            .map(|i| vec![i])
            .ok_or(OpfError::NoContingency)
    }
}

/// Economic dispatch with B-theta flows and piecewise-linear costs.
pub fn build_topf(case: &PowerCase, cfg: &OpfConfig) -> Result<OpfModel, OpfError> {
    case.validate()?;
    let mut p = MilpProblem::new();
    let mut pg = Vec::new();
    let mut segments = Vec::new();
    let mut curves = Vec::new();
    for g in &case.generators {
        let curve = piecewise_cost(g.c2, g.c1, g.c0, g.p_min, g.p_max, cfg.segments)?;
        let v = p.lp.add_var(format!("pg_{}", g.id), g.p_min, g.p_max, 0.0);
        let mut seg_ids = Vec::new();
        let mut row = vec![(v, 1.0)];
        for (s, &slope) in curve.slopes.iter().enumerate() {
            let id = p.lp.add_var(
                format!("seg_{}_{s}", g.id),
                0.0,
                curve.segment_width(s),
                slope,
            );
            row.push((id, -1.0));
            seg_ids.push(id);
        }
        p.lp.add_row(format!("cost_{}", g.id), row, Sense::Eq, g.p_min);
        p.lp.objective_offset += curve.base_cost;
        pg.push(v);
        segments.push(seg_ids);
        curves.push(curve);
    }
    let theta: Vec<usize> = case
        .buses
        .iter()
        .map(|b| {
            let fixed = b.id == case.reference_bus;
            let (lo, hi) = if fixed {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            p.lp.add_var(format!("theta_{}", b.id), lo, hi, 0.0)
        })
        .collect();
    let bus = |id| case.bus_index(id).expect("validated bus");
    let mut flow = Vec::new();
    for l in &case.lines {
        let f = p.lp.add_var(
            format!("flow_{}", l.id),
            -l.thermal_limit,
            l.thermal_limit,
            0.0,
        );
        let b = case.p_base / l.reactance_x;
        p.lp.add_row(
            format!("dc_{}", l.id),
            vec![
                (f, 1.0),
                (theta[bus(l.from_bus)], -b),
                (theta[bus(l.to_bus)], b),
            ],
            Sense::Eq,
            0.0,
        );
        flow.push(f);
    }
    for (k, b) in case.buses.iter().enumerate() {
        let mut row = Vec::new();
        for (i, g) in case.generators.iter().enumerate() {
            if g.bus == b.id {
                row.push((pg[i], 1.0));
            }
        }
        for (j, l) in case.lines.iter().enumerate() {
            if bus(l.from_bus) == k {
                row.push((flow[j], -1.0));
            }
            if bus(l.to_bus) == k {
                row.push((flow[j], 1.0));
            }
        }
        let load = case.loads.get(&b.id).copied().unwrap_or(0.0);
        p.lp.add_row(format!("balance_{}", b.id), row, Sense::Eq, load);
    }
    Ok(OpfModel {
        variant: Variant::Topf,
        case: case.clone(),
        problem: p,
        pg,
        theta,
        flow,
        segments,
        cost_curves: curves,
        guards: Vec::new(),
        nets: Vec::new(),
        folded: None,
        config: cfg.clone(),
    })
}

/// Linear RoCoF and nadir guard coefficients for losing unit `unit`.
pub fn linear_guard(
    case: &PowerCase,
    unit: usize,
    aggregation: Aggregation,
) -> Result<LinearGuard, OpfError> {
    let c = case.select_contingency(&case.generators[unit].id)?;
    let rocof_per_mw = worst_rocof(&c, 1.0)?;
    let low = aggregate_low_order::<f64>(&c, aggregation)?;
    Ok(LinearGuard {
        unit,
        rocof_per_mw,
        nadir_drop_per_mw: low.nadir_coefficient()? / c.p_base,
    })
}

/// Economic dispatch plus the linearized RoCoF and nadir rows.
pub fn build_lfcopf(case: &PowerCase, cfg: &OpfConfig) -> Result<OpfModel, OpfError> {
    let mut m = build_topf(case, cfg)?;
    m.variant = Variant::Lfcopf;
    for unit in contingency_units(case, cfg)? {
        let guard = linear_guard(case, unit, cfg.aggregation)?;
        let v = m.pg[unit];
        let id = &case.generators[unit].id;
        if cfg.rocof_limit.is_finite() {
            // rocof_per_mw * P >= r_lmt
            m.problem.lp.add_row(
                format!("rocof_{id}"),
                vec![(v, -guard.rocof_per_mw)],
                Sense::Le,
                -cfg.rocof_limit,
            );
        }
        if cfg.nadir_limit.is_finite() {
            m.problem.lp.add_row(
                format!("nadir_{id}"),
                vec![(v, guard.nadir_drop_per_mw)],
                Sense::Le,
                case.f0 - cfg.nadir_limit,
            );
        }
        m.guards.push(guard);
    }
    Ok(m)
}

/// Resolves every model input for contingency unit `unit`.
pub fn feature_sources(
    case: &PowerCase,
    names: &[String],
    unit: usize,
) -> Result<Vec<FeatureSource>, OpfError> {
    let tripped = &case.generators[unit].id;
    names
        .iter()
        .map(|name| {
            if let Some(id) = name.strip_prefix("gen_") {
                case.generator_index(id)
                    .map(FeatureSource::Dispatch)
                    .ok_or_else(|| OpfError::UnmappedFeature(name.clone()))
            } else if let Some(bus) = name.strip_prefix("load_") {
                let bus: u32 = bus
                    .parse()
                    .map_err(|_| OpfError::UnmappedFeature(name.clone()))?;
                if case.bus_index(bus).is_none() {
                    return Err(OpfError::UnmappedFeature(name.clone()));
                }
                Ok(FeatureSource::Constant(
                    case.loads.get(&bus).copied().unwrap_or(0.0),
                ))
            } else if let Some(id) = name.strip_prefix("ctg_") {
                if case.generator(id).is_none() {
                    return Err(OpfError::UnmappedFeature(name.clone()));
                }
                Ok(FeatureSource::Constant(if id == tripped {
                    1.0
                } else {
                    0.0
                }))
            } else {
                Err(OpfError::UnmappedFeature(name.clone()))
            }
        })
        .collect()
}

/// Feature vector of the network at a given dispatch.
pub fn feature_vector(sources: &[FeatureSource], dispatch: &[f64]) -> Vec<f64> {
    sources
        .iter()
        .map(|s| match *s {
            FeatureSource::Dispatch(i) => dispatch[i],
            FeatureSource::Constant(c) => c,
        })
        .collect()
}

/// Economic dispatch constrained by the embedded network predictor.
pub fn build_dnnfcopf(
    case: &PowerCase,
    model: &ModelFile,
    cfg: &OpfConfig,
) -> Result<OpfModel, OpfError> {
    let folded = model.folded()?;
    let names = &model.metadata.feature_names;
    if names.len() != folded.input_dim() {
        return Err(OpfError::Neural(NeuralError::DimensionMismatch {
            expected: folded.input_dim(),
            found: names.len(),
        }));
    }
    let mut m = build_topf(case, cfg)?;
    m.variant = Variant::DnnFcopf;
    for unit in contingency_units(case, cfg)? {
        let sources = feature_sources(case, names, unit)?;
        let bindings: Vec<InputBinding<f64>> = sources
            .iter()
            .map(|s| match *s {
                FeatureSource::Dispatch(i) => InputBinding::Variable {
                    id: m.pg[i],
                    lower: case.generators[i].p_min,
                    upper: case.generators[i].p_max,
                },
                FeatureSource::Constant(c) => InputBinding::Constant(c),
            })
            .collect();
        let mut block = encode_network(&folded, &bindings)?;
        block.output_limits(cfg.rocof_limit, cfg.nadir_limit)?;
        let ids = block.merge_into(&mut m.problem)?;
        let global = |v: VarRef| match v {
            VarRef::Local(k) => ids[k],
            VarRef::External(id) => id,
        };
        let mut binaries = Vec::new();
        for (layer, units) in block.units.iter().enumerate() {
            for (k, enc) in units.iter().enumerate() {
                if let Some(b) = enc.binary {
                    binaries.push((layer, k, global(b)));
                }
            }
        }
        m.nets.push(EmbeddedNet {
            unit,
            features: sources,
            outputs: [global(block.outputs[0]), global(block.outputs[1])],
            binaries,
        });
    }
    m.folded = Some(folded);
    Ok(m)
}

/// Fixes every binary to the activation pattern of `dispatch`.
fn fix_pattern(
    model: &OpfModel,
    problem: &mut MilpProblem<f64>,
    dispatch: &[f64],
) -> Result<(), OpfError> {
    let Some(net) = &model.folded else {
        return Ok(());
    };
    for e in &model.nets {
        let x = feature_vector(&e.features, dispatch);
        let pattern = forward_trace(net, &x)?.pattern();
        for &(layer, unit, var) in &e.binaries {
            let v = if pattern[layer][unit] { 1.0 } else { 0.0 };
            problem.lp.vars[var].lower = v;
            problem.lp.vars[var].upper = v;
        }
    }
    Ok(())
}

/// Proposes the LP optimum under the activation pattern of the relaxed
/// dispatch. Patterns already tried are skipped.
pub struct PatternRepair<'a> {
    model: &'a OpfModel,
    tried: RefCell<HashSet<Vec<bool>>>,
}

impl<'a> PatternRepair<'a> {
    pub fn new(model: &'a OpfModel) -> Self {
        Self {
            model,
            tried: RefCell::new(HashSet::new()),
        }
    }
}

impl IncumbentHook<f64> for PatternRepair<'_> {
    fn propose(&self, problem: &MilpProblem<f64>, relaxation: &[f64]) -> Option<Vec<f64>> {
        let m = self.model;
        let dispatch: Vec<f64> =
            m.pg.iter()
                .zip(&m.case.generators)
                .map(|(&v, g)| relaxation[v].clamp(g.p_min, g.p_max))
                .collect();
        let mut fixed = problem.clone();
        fix_pattern(m, &mut fixed, &dispatch).ok()?;
        let key: Vec<bool> = m
            .nets
            .iter()
            .flat_map(|e| e.binaries.iter())
            .map(|&(_, _, v)| fixed.lp.vars[v].lower > 0.5)
            .collect();
        if !self.tried.borrow_mut().insert(key) {
            return None;
        }
        let s = solve_lp_with(&fixed.lp, &Default::default()).ok()?;
        s.is_optimal().then_some(s.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub variant: Variant,
    /// Generator ids with their MW setpoints, in case order.
    pub dispatch: Vec<(String, f64)>,
    pub angles: Vec<f64>,
    pub flows: Vec<f64>,
    /// Piecewise-linear objective, $/h.
    pub cost: f64,
    pub pred_rocof: Option<f64>,
    pub pred_fn: Option<f64>,
    /// Network outputs as reported by the solver (embedded variant only).
    pub solver_outputs: Option<[f64; 2]>,
    #[serde(skip)]
    pub stats: SolveStats,
}

impl DispatchSolution {
    pub fn dispatch_map(&self) -> BTreeMap<String, f64> {
        self.dispatch.iter().cloned().collect()
    }

    pub fn mw(&self) -> Vec<f64> {
        self.dispatch.iter().map(|d| d.1).collect()
    }

    /// Re-checks balance, flow, angle and limit constraints against `case`.
    pub fn check(&self, case: &PowerCase) -> Result<(), OpfError> {
        let fail = |msg: String| Err(OpfError::Check(msg));
        for ((id, mw), g) in self.dispatch.iter().zip(&case.generators) {
            if *mw < g.p_min - 1e-7 || *mw > g.p_max + 1e-7 {
                return fail(format!(
                    "{id} at {mw} MW outside [{}, {}]",
                    g.p_min, g.p_max
                ));
            }
        }
        let bus = |id| case.bus_index(id).expect("validated bus");
        let mut net = vec![0.0; case.buses.len()];
        for ((_, mw), g) in self.dispatch.iter().zip(&case.generators) {
            net[bus(g.bus)] += mw;
        }
        for (l, &f) in case.lines.iter().zip(&self.flows) {
            if f.abs() > l.thermal_limit + 1e-5 {
                return fail(format!("line {} carries {f} MW", l.id));
            }
            let dc = case.p_base * (self.angles[bus(l.from_bus)] - self.angles[bus(l.to_bus)])
                / l.reactance_x;
            if (dc - f).abs() > 1e-5 * (1.0 + f.abs()) {
                return fail(format!(
                    "line {} flow {f} disagrees with angles ({dc})",
                    l.id
                ));
            }
            net[bus(l.from_bus)] -= f;
            net[bus(l.to_bus)] += f;
        }
        for (k, b) in case.buses.iter().enumerate() {
            let load = case.loads.get(&b.id).copied().unwrap_or(0.0);
            if (net[k] - load).abs() > 1e-5 {
                return fail(format!("bus {} mismatch {} MW", b.id, net[k] - load));
            }
        }
        Ok(())
    }
}

/// Predicted RoCoF and nadir for the variant at `dispatch` (worst case over
/// guarded contingencies).
pub fn predict(model: &OpfModel, dispatch: &[f64]) -> Result<Option<(f64, f64)>, OpfError> {
    match model.variant {
        Variant::Topf => Ok(None),
        Variant::Lfcopf => Ok(model
            .guards
            .iter()
            .map(|g| {
                let p = dispatch[g.unit];
                (g.rocof_per_mw * p, model.case.f0 - g.nadir_drop_per_mw * p)
            })
            .reduce(|a, b| (a.0.min(b.0), a.1.min(b.1)))),
        Variant::DnnFcopf => {
            let net = model
                .folded
                .as_ref()
                .expect("embedded variant keeps its network");
            let mut worst: Option<(f64, f64)> = None;
            for e in &model.nets {
                let y = forward(net, &feature_vector(&e.features, dispatch))?;
                worst = Some(match worst {
                    None => (y[0], y[1]),
                    Some(w) => (w.0.min(y[0]), w.1.min(y[1])),
                });
            }
            Ok(worst)
        }
    }
}

const PINNED_TOL: f64 = 1e-8;

/// Re-solves the LP with dispatch pinned (and binaries fixed to the
/// resulting activation pattern).
fn resolve_at(model: &OpfModel, dispatch: &[f64]) -> Result<Option<Vec<f64>>, OpfError> {
    let mut p = model.problem.clone();
    for (&v, &mw) in model.pg.iter().zip(dispatch) {
        p.lp.vars[v].lower = mw;
        p.lp.vars[v].upper = mw;
    }
    fix_pattern(model, &mut p, dispatch)?;
    let s = solve_lp_with(&p.lp, &Default::default())?;
    Ok((s.is_optimal() && p.lp.max_violation(&s.values) <= PINNED_TOL).then_some(s.values))
}

/// Averages identical units' setpoints when that keeps the point feasible
/// and no costlier, first across whole groups and then leaving guarded
/// units out.
fn symmetrize(
    model: &OpfModel,
    values: Vec<f64>,
    objective: f64,
) -> Result<(Vec<f64>, f64), OpfError> {
    let groups = model.case.identical_unit_groups();
    if groups.is_empty() {
        return Ok((values, objective));
    }
    let guarded: Vec<usize> = model
        .guards
        .iter()
        .map(|g| g.unit)
        .chain(model.nets.iter().map(|e| e.unit))
        .collect();
    let dispatch: Vec<f64> = model.pg.iter().map(|&v| values[v]).collect();
    let average = |exclude_guarded: bool| -> Vec<f64> {
        let mut d = dispatch.clone();
        for g in &groups {
            let members: Vec<usize> = g
                .iter()
                .copied()
                .filter(|i| !(exclude_guarded && guarded.contains(i)))
                .collect();
            if members.len() < 2 {
                continue;
            }
            let mean = members.iter().map(|&i| dispatch[i]).sum::<f64>() / members.len() as f64;
            for &i in &members {
                d[i] = mean;
            }
        }
        d
    };
    for exclude in [false, true] {
        let target = average(exclude);
        if target == dispatch {
            return Ok((values, objective));
        }
        if let Some(v) = resolve_at(model, &target)? {
            let obj = model.problem.lp.objective_value(&v);
            if obj <= objective + 1e-6 * (1.0 + objective.abs())
                && model.problem.lp.max_violation(&v) <= 1e-6
            {
                return Ok((v, obj));
            }
        }
    }
    Ok((values, objective))
}

/// Rounds near-integral binaries and re-solves the LP so that continuous
/// values carry no big-M leakage.
fn snap_binaries(
    model: &OpfModel,
    values: Vec<f64>,
    objective: f64,
) -> Result<(Vec<f64>, f64), OpfError> {
    if model.problem.binaries.is_empty() {
        return Ok((values, objective));
    }
    let mut p = model.problem.clone();
    for &b in &p.binaries {
        let v = values[b].round();
        p.lp.vars[b].lower = v;
        p.lp.vars[b].upper = v;
    }
    let s = solve_lp_with(&p.lp, &Default::default())?;
    Ok(
        if s.is_optimal() && p.lp.max_violation(&s.values) <= PINNED_TOL {
            (s.values, s.objective)
        } else {
            (values, objective)
        },
    )
}

/// Solves a built formulation; the embedded variant may use the
/// pattern-repair incumbent hook.
pub fn solve_variant(model: &OpfModel, use_hook: bool) -> Result<DispatchSolution, OpfError> {
    let cfg = BnbConfig {
        node_limit: model.config.node_limit,
        ..BnbConfig::default()
    };
    let hook = PatternRepair::new(model);
    let hook_ref: Option<&dyn IncumbentHook<f64>> = if use_hook && !model.nets.is_empty() {
        Some(&hook)
    } else {
        None
    };
    let sol = solve_milp(&model.problem, &cfg, hook_ref)?;
    if sol.status != Status::Optimal {
        return Err(OpfError::NotOptimal(sol.status));
    }
    let (values, objective) = snap_binaries(model, sol.values, sol.objective)?;
    let (values, cost) = if model.config.symmetrize {
        symmetrize(model, values, objective)?
    } else {
        (values, objective)
    };
    let dispatch: Vec<f64> = model.pg.iter().map(|&v| values[v]).collect();
    let pred = predict(model, &dispatch)?;
    let out = DispatchSolution {
        variant: model.variant,
        dispatch: model
            .case
            .generators
            .iter()
            .zip(&dispatch)
            .map(|(g, &mw)| (g.id.clone(), mw))
            .collect(),
        angles: model.theta.iter().map(|&v| values[v]).collect(),
        flows: model.flow.iter().map(|&v| values[v]).collect(),
        cost,
        pred_rocof: pred.map(|p| p.0),
        pred_fn: pred.map(|p| p.1),
        solver_outputs: model
            .nets
            .first()
            .map(|e| [values[e.outputs[0]], values[e.outputs[1]]]),
        stats: sol.stats,
    };
    if let (Some(so), Some(p)) = (out.solver_outputs, pred) {
        if model.nets.len() == 1 && ((so[0] - p.0).abs() > 1e-6 || (so[1] - p.1).abs() > 1e-6) {
            return Err(OpfError::Check(format!(
                "solver outputs {so:?} differ from forward pass ({}, {})",
                p.0, p.1
            )));
        }
    }
    out.check(&model.case)?;
    Ok(out)
}

/// Simulation settings for closed-loop checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub horizon_s: f64,
    pub dt_s: f64,
    /// RoCoF measurement window in cycles of the nominal frequency.
    pub window_cycles: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon_s: 30.0,
            dt_s: 1e-3,
            window_cycles: 10.0,
        }
    }
}

/// Simulates the designated contingency at `dispatch`.
pub fn simulate_dispatch(
    case: &PowerCase,
    dispatch: &BTreeMap<String, f64>,
    sim: &SimSettings,
) -> Result<(FrequencyMetrics<f64>, SfrTrace<f64>), OpfError> {
    let system = build_full_order::<f64>(case, dispatch)?;
    let trace = simulate(&system, sim.horizon_s, sim.dt_s)?;
    let metrics = compute_metrics(&trace, case.f0, sim.window_cycles / case.f0)?;
    Ok((metrics, trace))
}

/// Relative prediction error in percent.
pub fn relative_error_pct(predicted: f64, simulated: f64) -> f64 {
    (predicted - simulated).abs() / simulated.abs() * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub metrics: FrequencyMetrics<f64>,
    pub err_rocof_pct: Option<f64>,
    pub err_fn_pct: Option<f64>,
    pub trace: SfrTrace<f64>,
}

/// Closed-loop check of a dispatch against the full-order simulator.
pub fn verify_dispatch(
    case: &PowerCase,
    sol: &DispatchSolution,
    sim: &SimSettings,
) -> Result<Verification, OpfError> {
    if case.contingency_unit.is_none() {
        return Err(OpfError::NoContingency);
    }
    let (metrics, trace) = simulate_dispatch(case, &sol.dispatch_map(), sim)?;
    Ok(Verification {
        err_rocof_pct: sol
            .pred_rocof
            .map(|p| relative_error_pct(p, metrics.rocof_worst)),
        err_fn_pct: sol.pred_fn.map(|p| relative_error_pct(p, metrics.nadir)),
        metrics,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_case;
    use crate::neural::{Layer, MlpSpec, ModelMetadata, Normalizer};

    fn one_bus() -> PowerCase {
        let text = r#"{
            "buses": [{"id": 1}],
            "lines": [],
            "generators": [{
                "id": "G1", "bus": 1, "p_min": 0.0, "p_max": 100.0,
                "c2": 0.01, "c1": 10.0, "c0": 5.0, "inertia_h": 4.0, "mva_base": 100.0,
                "governor": {"t1": 0.1, "t2": 0.0, "t3": 0.3, "t4": 0.0, "t5": 7.0, "f_hp": 0.3, "k": 1.0, "r": 0.05}
            }],
            "loads": {"1": 50.0},
            "reference_bus": 1
        }"#;
        parse_case(text).unwrap()
    }

    fn two_bus_two_gen(limit: f64) -> PowerCase {
        let gov = r#"{"t1": 0.1, "t2": 0.0, "t3": 0.3, "t4": 0.0, "t5": 7.0, "f_hp": 0.3, "k": 1.0, "r": 0.05}"#;
        let text = format!(
            r#"{{
            "buses": [{{"id": 1}}, {{"id": 2}}],
            "lines": [{{"id": "L", "from_bus": 1, "to_bus": 2, "reactance_x": 0.1, "thermal_limit": {limit}}}],
            "generators": [
              {{"id": "cheap", "bus": 1, "p_min": 0.0, "p_max": 100.0, "c2": 0.0, "c1": 10.0, "c0": 0.0,
                "inertia_h": 4.0, "mva_base": 100.0, "governor": {gov}}},
              {{"id": "dear", "bus": 2, "p_min": 0.0, "p_max": 100.0, "c2": 0.0, "c1": 30.0, "c0": 0.0,
                "inertia_h": 4.0, "mva_base": 100.0, "governor": {gov}}}
            ],
            "loads": {{"2": 60.0}},
            "contingency_unit": "cheap",
            "reference_bus": 1
        }}"#
        );
        parse_case(&text).unwrap()
    }

    #[test]
    fn forced_dispatch_single_bus() {
        let case = one_bus();
        let m = build_topf(&case, &OpfConfig::default()).unwrap();
        let s = solve_variant(&m, false).unwrap();
        assert!((s.dispatch[0].1 - 50.0).abs() < 1e-9);
        let pwl = &m.cost_curves[0];
        assert!((s.cost - pwl.eval(50.0)).abs() < 1e-9);
        assert_eq!(s.stats.nodes, 0);
        assert!(s.pred_rocof.is_none());
    }

    #[test]
    fn tight_line_binds() {
        let case = two_bus_two_gen(40.0);
        let s = solve_variant(&build_topf(&case, &OpfConfig::default()).unwrap(), false).unwrap();
        assert!((s.flows[0] - 40.0).abs() < 1e-7);
        assert!((s.dispatch[0].1 - 40.0).abs() < 1e-7);
        assert!((s.dispatch[1].1 - 20.0).abs() < 1e-7);
        assert!((s.cost - (400.0 + 600.0)).abs() < 1e-6);
        // angle difference carries the flow
        assert!((s.angles[0] - s.angles[1] - 40.0 * 0.1 / 100.0).abs() < 1e-9);
    }

    #[test]
    fn unlimited_guards_match_topf() {
        let case = two_bus_two_gen(100.0);
        let cfg = OpfConfig {
            rocof_limit: f64::NEG_INFINITY,
            nadir_limit: f64::NEG_INFINITY,
            ..OpfConfig::default()
        };
        let a = solve_variant(&build_topf(&case, &cfg).unwrap(), false).unwrap();
        let b = solve_variant(&build_lfcopf(&case, &cfg).unwrap(), false).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-9);
        assert_eq!(a.dispatch, b.dispatch);
    }

    #[test]
    fn rocof_row_binds_at_inverse() {
        let case = two_bus_two_gen(100.0);
        let cfg = OpfConfig {
            rocof_limit: -1.2,
            nadir_limit: f64::NEG_INFINITY,
            ..OpfConfig::default()
        };
        let s = solve_variant(&build_lfcopf(&case, &cfg).unwrap(), false).unwrap();
        // surviving inertia 4 s on 100 MVA: P <= 2 * 4 * 100 * 1.2 / 60 = 16 MW
        assert!((s.dispatch[0].1 - 16.0).abs() < 1e-7);
        assert!((s.pred_rocof.unwrap() + 1.2).abs() < 1e-9);
    }

    fn constant_model(case: &PowerCase, rocof: f64, nadir: f64) -> ModelFile {
        let mut names: Vec<String> = case
            .generators
            .iter()
            .map(|g| format!("gen_{}", g.id))
            .collect();
        names.extend(case.loads.keys().map(|b| format!("load_{b}")));
        names.push(format!("ctg_{}", case.contingency_unit.clone().unwrap()));
        let n = names.len();
        let spec = MlpSpec::new(n, vec![2]);
        let mut p = MlpParams::zeros(&spec);
        p.layers[1] = Layer {
            inputs: 2,
            outputs: 2,
            weights: vec![0.0; 4],
            bias: vec![rocof, nadir],
        };
        ModelFile::from_parts(
            &p,
            Normalizer::identity(n, 2),
            ModelMetadata {
                seed: 0,
                train_loss: 0.0,
                val_loss: 0.0,
                best_epoch: 0,
                feature_names: names,
            },
        )
    }

    #[test]
    fn vacuous_network_matches_topf() {
        let case = two_bus_two_gen(100.0);
        let cfg = OpfConfig::default();
        let model = constant_model(&case, -0.1, 59.9);
        let a = solve_variant(&build_topf(&case, &cfg).unwrap(), false).unwrap();
        let b = solve_variant(&build_dnnfcopf(&case, &model, &cfg).unwrap(), true).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-9);
        assert_eq!(b.pred_rocof, Some(-0.1));
    }

    #[test]
    fn impossible_network_limits_are_infeasible() {
        let case = two_bus_two_gen(100.0);
        let model = constant_model(&case, -0.9, 59.9);
        let m = build_dnnfcopf(&case, &model, &OpfConfig::default()).unwrap();
        assert!(matches!(
            solve_variant(&m, true),
            Err(OpfError::NotOptimal(Status::Infeasible))
        ));
    }

    #[test]
    fn unknown_feature_rejected() {
        let case = two_bus_two_gen(100.0);
        let mut model = constant_model(&case, -0.1, 59.9);
        model.metadata.feature_names[0] = "gen_missing".into();
        assert!(matches!(
            build_dnnfcopf(&case, &model, &OpfConfig::default()),
            Err(OpfError::UnmappedFeature(_))
        ));
    }

    #[test]
    fn relative_error_example() {
        assert!((relative_error_pct(-0.6, -0.5) - 20.0).abs() < 1e-12);
        assert_eq!(relative_error_pct(-0.5, -0.5), 0.0);
    }

    #[test]
    fn verification_reports_errors() {
        let case = two_bus_two_gen(100.0);
        let s = solve_variant(&build_lfcopf(&case, &OpfConfig::default()).unwrap(), false).unwrap();
        let v = verify_dispatch(&case, &s, &SimSettings::default()).unwrap();
        // windowed measurement sits slightly above the instantaneous slope
        let e = v.err_rocof_pct.unwrap();
        assert!(e > 0.0 && e < 5.0, "{e}");
        assert!(v.metrics.rocof_worst > s.pred_rocof.unwrap());
        let t = solve_variant(&build_topf(&case, &OpfConfig::default()).unwrap(), false).unwrap();
        let vt = verify_dispatch(&case, &t, &SimSettings::default()).unwrap();
        assert!(vt.err_rocof_pct.is_none());
        assert!(vt.metrics.nadir <= v.metrics.nadir);
    }
}
