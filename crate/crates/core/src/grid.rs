//! Static network data: buses, lines, generators with their governor data,
//! loads and the designated generation contingency.
//!
//! Cases are read from JSON. Dynamics quantities stay on the machine base in
//! the file; [`PowerCase::inertia_system_base`] and
//! [`PowerCase::governor_gain_system_base`] convert them to the system base.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type BusId = u32;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case schema violation: {0}")]
    Schema(String),
    #[error("invariant violated for {item}: {rule}")]
    Invariant { item: String, rule: String },
    #[error("{item} references unknown bus {bus}")]
    DanglingBus { item: String, bus: BusId },
    #[error("unknown generator `{0}`")]
    UnknownUnit(String),
    #[error("duplicate identifier `{0}`")]
    Duplicate(String),
    #[error("load scale factor must be positive, got {0}")]
    NonPositiveFactor(f64),
    #[error("cannot read case file: {0}")]
    Io(#[from] std::io::Error),
}

fn invariant(item: impl Into<String>, rule: impl Into<String>) -> CaseError {
    CaseError::Invariant {
        item: item.into(),
        rule: rule.into(),
    }
}

/// Turbine-governor block data of one reheat steam unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernorParams {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    /// High-pressure turbine power fraction.
    pub f_hp: f64,
    pub k: f64,
    /// Droop, per unit on the machine base.
    pub r: f64,
}

impl GovernorParams {
    fn validate(&self, item: &str) -> Result<(), CaseError> {
        let g = self;
        if !(g.t1 > 0.0 && g.t3 > 0.0 && g.t5 > 0.0) {
            return Err(invariant(item, "governor t1, t3, t5 must be > 0"));
        }
        if !(g.t2 >= 0.0 && g.t4 >= 0.0) {
            return Err(invariant(item, "governor t2, t4 must be >= 0"));
        }
        if !(g.f_hp > 0.0 && g.f_hp < 1.0) {
            return Err(invariant(item, "governor f_hp must lie in (0, 1)"));
        }
        if !(g.k > 0.0) {
            return Err(invariant(item, "governor k must be > 0"));
        }
        if !(g.r > 0.0) {
            return Err(invariant(item, "governor droop r must be > 0"));
        }
        let all = [g.t1, g.t2, g.t3, g.t4, g.t5, g.f_hp, g.k, g.r];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invariant(item, "governor parameters must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    /// Inertia constant in seconds on the machine base.
    pub inertia_h: f64,
    pub mva_base: f64,
    pub governor: GovernorParams,
}

impl Generator {
    /// True when every field other than the identifier matches.
    pub fn is_identical_to(&self, other: &Generator) -> bool {
        self.bus == other.bus
            && self.p_min == other.p_min
            && self.p_max == other.p_max
            && self.c2 == other.c2
            && self.c1 == other.c1
            && self.c0 == other.c0
            && self.inertia_h == other.inertia_h
            && self.mva_base == other.mva_base
            && self.governor == other.governor
    }

    fn validate(&self) -> Result<(), CaseError> {
        let item = format!("generator `{}`", self.id);
        let nums = [
            self.p_min,
            self.p_max,
            self.c2,
            self.c1,
            self.c0,
            self.inertia_h,
            self.mva_base,
        ];
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(invariant(&item, "numeric fields must be finite"));
        }
        if !(self.p_min >= 0.0 && self.p_min <= self.p_max) {
            return Err(invariant(&item, "0 <= p_min <= p_max"));
        }
        if !(self.inertia_h > 0.0) {
            return Err(invariant(&item, "inertia_h > 0"));
        }
        if !(self.mva_base > 0.0) {
            return Err(invariant(&item, "mva_base > 0"));
        }
        if !(self.c2 >= 0.0) {
            return Err(invariant(&item, "c2 >= 0 (convex cost)"));
        }
        self.governor.validate(&item)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// Series reactance, per unit on the system base.
    pub reactance_x: f64,
    /// MW.
    pub thermal_limit: f64,
}

fn default_f0() -> f64 {
    60.0
}

fn default_p_base() -> f64 {
    100.0
}

fn default_damping() -> f64 {
    1.0
}

/// A validated power system case. Immutable once parsed; the modifying
/// operations return new cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCase {
    #[serde(default = "default_f0")]
    pub f0: f64,
    #[serde(default = "default_p_base")]
    pub p_base: f64,
    #[serde(default = "default_damping")]
    pub damping_d: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// MW demand per bus.
    #[serde(default)]
    pub loads: BTreeMap<BusId, f64>,
    #[serde(default)]
    pub contingency_unit: Option<String>,
    pub reference_bus: BusId,
}

/// Parses and validates case-file JSON.
pub fn parse_case(text: &str) -> Result<PowerCase, CaseError> {
    let case: PowerCase =
        serde_json::from_str(text).map_err(|e| CaseError::Schema(e.to_string()))?;
    case.validate()?;
    Ok(case)
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerCase, CaseError> {
    let text = std::fs::read_to_string(path)?;
    parse_case(&text)
}

impl PowerCase {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(invariant("case", "f0 > 0"));
        }
        if !(self.p_base > 0.0 && self.p_base.is_finite()) {
            return Err(invariant("case", "p_base > 0"));
        }
        if !(self.damping_d >= 0.0 && self.damping_d.is_finite()) {
            return Err(invariant("case", "damping_d >= 0"));
        }
        if self.buses.is_empty() {
            return Err(invariant("case", "at least one bus"));
        }
        let mut bus_ids = HashSet::new();
        for b in &self.buses {
            if !bus_ids.insert(b.id) {
                return Err(CaseError::Duplicate(format!("bus {}", b.id)));
            }
        }
        if !bus_ids.contains(&self.reference_bus) {
            return Err(CaseError::DanglingBus {
                item: "reference_bus".into(),
                bus: self.reference_bus,
            });
        }
        let mut line_ids = HashSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.id.as_str()) {
                return Err(CaseError::Duplicate(format!("line {}", l.id)));
            }
            for bus in [l.from_bus, l.to_bus] {
                if !bus_ids.contains(&bus) {
                    return Err(CaseError::DanglingBus {
                        item: format!("line `{}`", l.id),
                        bus,
                    });
                }
            }
            let item = format!("line `{}`", l.id);
            if l.from_bus == l.to_bus {
                return Err(invariant(&item, "from_bus != to_bus"));
            }
            if !(l.reactance_x > 0.0 && l.reactance_x.is_finite()) {
                return Err(invariant(&item, "reactance_x > 0"));
            }
            if !(l.thermal_limit > 0.0 && l.thermal_limit.is_finite()) {
                return Err(invariant(&item, "thermal_limit > 0"));
            }
        }
        if self.generators.is_empty() {
            return Err(invariant("case", "at least one generator"));
        }
        let mut gen_ids = HashSet::new();
        for g in &self.generators {
            if !gen_ids.insert(g.id.as_str()) {
                return Err(CaseError::Duplicate(format!("generator {}", g.id)));
            }
            if !bus_ids.contains(&g.bus) {
                return Err(CaseError::DanglingBus {
                    item: format!("generator `{}`", g.id),
                    bus: g.bus,
                });
            }
            g.validate()?;
        }
        for (&bus, &mw) in &self.loads {
            if !bus_ids.contains(&bus) {
                return Err(CaseError::DanglingBus {
                    item: "load".into(),
                    bus,
                });
            }
            if !(mw >= 0.0 && mw.is_finite()) {
                return Err(invariant(format!("load at bus {bus}"), "load >= 0"));
            }
        }
        if let Some(unit) = &self.contingency_unit {
            if !gen_ids.contains(unit.as_str()) {
                return Err(CaseError::UnknownUnit(unit.clone()));
            }
        }
        let total_load = self.total_load();
        let capacity: f64 = self.in_service().map(|g| g.p_max).sum();
        if capacity < total_load {
            return Err(invariant(
                "case",
                "in-service p_max must cover total load (feasibility precheck)",
            ));
        }
        Ok(())
    }

    pub fn total_load(&self) -> f64 {
        self.loads.values().sum()
    }

    /// Multiplies every load by `factor`.
    pub fn scale_loads(&self, factor: f64) -> Result<PowerCase, CaseError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(CaseError::NonPositiveFactor(factor));
        }
        let mut case = self.clone();
        for mw in case.loads.values_mut() {
            *mw *= factor;
        }
        Ok(case)
    }

    pub fn select_contingency(&self, unit: &str) -> Result<PowerCase, CaseError> {
        if self.generator(unit).is_none() {
            return Err(CaseError::UnknownUnit(unit.to_string()));
        }
        let mut case = self.clone();
        case.contingency_unit = Some(unit.to_string());
        Ok(case)
    }

    pub fn generator(&self, id: &str) -> Option<&Generator> {
        self.generators.iter().find(|g| g.id == id)
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn contingency_index(&self) -> Option<usize> {
        self.contingency_unit
            .as_deref()
            .and_then(|id| self.generator_index(id))
    }

    /// Generators that survive the designated contingency.
    pub fn in_service(&self) -> impl Iterator<Item = &Generator> + '_ {
        let ctg = self.contingency_unit.clone();
        self.generators
            .iter()
            .filter(move |g| Some(&g.id) != ctg.as_ref())
    }

    /// H of one unit expressed in seconds on the system base.
    pub fn inertia_system_base(&self, g: &Generator) -> f64 {
        g.inertia_h * g.mva_base / self.p_base
    }

    /// Governor static gain K/R expressed on the system base.
    pub fn governor_gain_system_base(&self, g: &Generator) -> f64 {
        g.governor.k / g.governor.r * g.mva_base / self.p_base
    }

    /// Sum of system-base inertia over units surviving the contingency.
    pub fn in_service_inertia(&self) -> f64 {
        self.in_service().map(|g| self.inertia_system_base(g)).sum()
    }

    /// Groups of generator indices whose data are identical (same bus,
    /// limits, costs and dynamics). Singletons are omitted.
    pub fn identical_unit_groups(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.generators.len()];
        let mut groups = Vec::new();
        for i in 0..self.generators.len() {
            if seen[i] {
                continue;
            }
            let mut group = vec![i];
            for (j, s) in seen.iter_mut().enumerate().skip(i + 1) {
                if !*s && self.generators[i].is_identical_to(&self.generators[j]) {
                    *s = true;
                    group.push(j);
                }
            }
            if group.len() > 1 {
                groups.push(group);
            }
        }
        groups
    }
}
