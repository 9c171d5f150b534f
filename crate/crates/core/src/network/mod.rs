//! Power network model: buses, generators, loads and branches in per-unit on
//! the system MVA base, plus MATPOWER-style case ingestion and bus admittance
//! assembly.

mod case;
mod ybus;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use case::{parse_case, serialize_case, CaseError};
pub use ybus::{build_ybus, AdmittanceMatrix};

/// External bus number as it appears in the case file.
pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

impl BusKind {
    /// MATPOWER bus-type code (1=PQ, 2=PV, 3=reference).
    pub fn code(self) -> u8 {
        match self {
            BusKind::PQ => 1,
            BusKind::PV => 2,
            BusKind::Slack => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusKind::PQ),
            2 => Some(BusKind::PV),
            3 => Some(BusKind::Slack),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Regulated voltage magnitude (p.u.) for PV and slack buses.
    pub voltage_setpoint: Option<f64>,
    /// Initial voltage magnitude from the case (p.u.).
    pub vm: f64,
    /// Initial voltage angle from the case (rad).
    pub va: f64,
    pub base_kv: f64,
    /// Shunt conductance (p.u. at V = 1).
    pub gs: f64,
    /// Shunt susceptance (p.u. at V = 1).
    pub bs: f64,
}

/// Generator with injections and limits in per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus_id: BusId,
    pub p: f64,
    pub q: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Voltage magnitude setpoint (p.u.).
    pub vg: f64,
    pub in_service: bool,
}

/// Bus demand in per-unit. Positive values consume power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus_id: BusId,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance (p.u.).
    pub b_charging: f64,
    /// Off-nominal turns ratio; 1.0 for lines.
    pub tap_ratio: f64,
    /// Phase shift angle (rad).
    pub phase_shift: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub branches: Vec<Branch>,
}

/// A broken network invariant, naming the offending entity and the rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

impl PowerNetwork {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to its position in `buses`.
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn slack_bus(&self) -> Option<&Bus> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack)
    }

    /// Index of the first in-service generator at the slack bus.
    pub fn slack_generator(&self) -> Option<usize> {
        let slack = self.slack_bus()?.id;
        self.generators
            .iter()
            .position(|g| g.bus_id == slack && g.in_service)
    }

    /// Copy with the slack role moved to `bus_id`. The former slack bus
    /// becomes PV and keeps its voltage setpoint.
    pub fn with_slack(&self, bus_id: BusId) -> Result<PowerNetwork, Violation> {
        let entity = format!("bus {bus_id}");
        if !self.buses.iter().any(|b| b.id == bus_id) {
            return Err(Violation::new(entity, "slack target is not in the network"));
        }
        if !self.generators.iter().any(|g| g.bus_id == bus_id && g.in_service) {
            return Err(Violation::new(entity, "no in-service generator at slack bus"));
        }
        let vg = self
            .generators
            .iter()
            .find(|g| g.bus_id == bus_id && g.in_service)
            .map(|g| g.vg);
        let mut net = self.clone();
        for b in &mut net.buses {
            if b.id == bus_id {
                b.kind = BusKind::Slack;
                b.voltage_setpoint = b.voltage_setpoint.or(vg);
            } else if b.kind == BusKind::Slack {
                b.kind = BusKind::PV;
            }
        }
        Ok(net)
    }

    pub fn has_phase_shifters(&self) -> bool {
        self.branches
            .iter()
            .any(|br| br.in_service && br.phase_shift != 0.0)
    }

    /// Check every structural invariant. An empty list means the network is
    /// usable by the power flow solver.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                out.push(Violation::new(format!("bus {}", bus.id), "duplicate bus id"));
            }
            if let Some(v) = bus.voltage_setpoint {
                if !(v > 0.0) {
                    out.push(Violation::new(
                        format!("bus {}", bus.id),
                        "voltage setpoint must be positive",
                    ));
                }
            }
        }

        let slacks: Vec<_> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .collect();
        match slacks.len() {
            0 => out.push(Violation::new("network", "no slack bus")),
            1 => {
                if self.slack_generator().is_none() {
                    out.push(Violation::new(
                        format!("bus {}", slacks[0].id),
                        "no in-service generator at slack bus",
                    ));
                }
            }
            _ => out.push(Violation::new(
                format!(
                    "buses {}",
                    slacks
                        .iter()
                        .map(|b| b.id.to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                "multiple slack buses",
            )),
        }

        for (k, g) in self.generators.iter().enumerate() {
            let entity = format!("generator {} (bus {})", k, g.bus_id);
            if !seen.contains(&g.bus_id) {
                out.push(Violation::new(
                    entity.clone(),
                    format!("references absent bus {}", g.bus_id),
                ));
            }
            if g.p_min > g.p_max {
                out.push(Violation::new(entity.clone(), "p_min exceeds p_max"));
            }
            if g.q_min > g.q_max {
                out.push(Violation::new(entity, "q_min exceeds q_max"));
            }
        }

        for (k, l) in self.loads.iter().enumerate() {
            if !seen.contains(&l.bus_id) {
                out.push(Violation::new(
                    format!("load {} (bus {})", k, l.bus_id),
                    format!("references absent bus {}", l.bus_id),
                ));
            }
        }

        for (k, br) in self.branches.iter().enumerate() {
            let entity = format!("branch {} ({}-{})", k, br.from_bus, br.to_bus);
            for end in [br.from_bus, br.to_bus] {
                if !seen.contains(&end) {
                    out.push(Violation::new(
                        entity.clone(),
                        format!("dangling reference to bus {}", end),
                    ));
                }
            }
            if br.from_bus == br.to_bus {
                out.push(Violation::new(entity.clone(), "self loop"));
            }
            if br.r == 0.0 && br.x == 0.0 {
                out.push(Violation::new(entity.clone(), "zero series impedance"));
            }
            if !(br.tap_ratio > 0.0) {
                out.push(Violation::new(entity, "tap ratio must be positive"));
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn two_bus(x: f64, load_p: f64, b_charging: f64) -> PowerNetwork {
        PowerNetwork {
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    voltage_setpoint: Some(1.0),
                    vm: 1.0,
                    va: 0.0,
                    base_kv: 345.0,
                    gs: 0.0,
                    bs: 0.0,
                },
                Bus {
                    id: 2,
                    kind: BusKind::PQ,
                    voltage_setpoint: None,
                    vm: 1.0,
                    va: 0.0,
                    base_kv: 345.0,
                    gs: 0.0,
                    bs: 0.0,
                },
            ],
            generators: vec![Generator {
                bus_id: 1,
                p: 0.0,
                q: 0.0,
                p_min: 0.0,
                p_max: 100.0,
                q_min: -100.0,
                q_max: 100.0,
                vg: 1.0,
                in_service: true,
            }],
            loads: vec![Load {
                bus_id: 2,
                p: load_p,
                q: 0.0,
            }],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 2,
                r: 0.0,
                x,
                b_charging,
                tap_ratio: 1.0,
                phase_shift: 0.0,
                in_service: true,
            }],
        }
    }

    #[test]
    fn valid_two_bus_has_no_violations() {
        assert!(two_bus(0.1, 0.3, 0.0).validate().is_empty());
    }

    #[test]
    fn moving_the_slack() {
        let mut net = two_bus(0.1, 0.3, 0.0);
        net.generators.push(Generator {
            bus_id: 2,
            vg: 1.03,
            ..net.generators[0].clone()
        });
        let moved = net.with_slack(2).unwrap();
        assert_eq!(moved.slack_bus().unwrap().id, 2);
        assert_eq!(moved.buses[1].voltage_setpoint, Some(1.03));
        assert_eq!(moved.buses[0].kind, BusKind::PV);
        assert!(moved.validate().is_empty());
        assert!(two_bus(0.1, 0.3, 0.0).with_slack(2).is_err());
        assert!(net.with_slack(7).is_err());
    }

    #[test]
    fn generator_on_absent_bus() {
        let mut net = two_bus(0.1, 0.3, 0.0);
        net.generators.push(Generator {
            bus_id: 99,
            ..net.generators[0].clone()
        });
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("99"), "{}", v[0]);
    }

    #[test]
    fn zero_impedance_branch() {
        let mut net = two_bus(0.0, 0.3, 0.0);
        net.branches[0].r = 0.0;
        let v = net.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, "zero series impedance");
    }

    #[test]
    fn slack_rules() {
        let mut net = two_bus(0.1, 0.3, 0.0);
        net.buses[1].kind = BusKind::Slack;
        net.buses[1].voltage_setpoint = Some(1.0);
        assert!(net
            .validate()
            .iter()
            .any(|v| v.rule == "multiple slack buses"));

        let mut net = two_bus(0.1, 0.3, 0.0);
        net.buses[0].kind = BusKind::PQ;
        assert!(net.validate().iter().any(|v| v.rule == "no slack bus"));

        let mut net = two_bus(0.1, 0.3, 0.0);
        net.generators[0].in_service = false;
        assert!(net
            .validate()
            .iter()
            .any(|v| v.rule == "no in-service generator at slack bus"));
    }

    #[test]
    fn duplicate_bus_and_dangling_branch() {
        let mut net = two_bus(0.1, 0.3, 0.0);
        net.buses[1].id = 1;
        let v = net.validate();
        assert!(v.iter().any(|v| v.rule == "duplicate bus id"));
        assert!(v.iter().any(|v| v.rule.contains("dangling reference to bus 2")));
    }
}
