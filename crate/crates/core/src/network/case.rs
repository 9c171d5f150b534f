//! MATPOWER-style `.m` case files.
//!
//! Only the columns that enter the AC power flow equations are read:
//!
//! | table  | columns used                                        |
//! |--------|-----------------------------------------------------|
//! | bus    | bus_i type Pd Qd Gs Bs (area) Vm Va baseKV          |
//! | gen    | bus Pg Qg Qmax Qmin Vg (mBase) status Pmax Pmin     |
//! | branch | fbus tbus r x b (rateA rateB rateC) ratio angle status |
//!
//! Everything is converted to per-unit on `baseMVA` while parsing. Other
//! matrices (`gencost`, `areas`, ...) and cell arrays are skipped.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{Branch, Bus, BusKind, Generator, Load, PowerNetwork, Violation};

const BUS_COLS: usize = 10;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid network: {}", join_violations(.0))]
    Semantic(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

fn syntax(line: usize, msg: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line,
        msg: msg.into(),
    }
}

struct Matrix {
    /// Line of the opening bracket.
    line: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

enum Block {
    None,
    Matrix(String, Matrix, Vec<f64>, usize),
    Cell,
}

fn strip_comment(line: &str) -> &str {
    // '%' never appears inside the quoted strings of the tables we read.
    match line.find('%') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64, CaseError> {
    tok.parse::<f64>()
        .map_err(|_| syntax(line, format!("invalid number '{}'", tok)))
}

/// Split matrix content into tokens and row terminators.
fn push_matrix_tokens(
    content: &str,
    line: usize,
    rows: &mut Vec<(usize, Vec<f64>)>,
    current: &mut Vec<f64>,
    row_line: &mut usize,
) -> Result<(), CaseError> {
    for (k, seg) in content.split(';').enumerate() {
        if k > 0 && !current.is_empty() {
            rows.push((*row_line, std::mem::take(current)));
        }
        for tok in seg.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            if current.is_empty() {
                *row_line = line;
            }
            current.push(parse_number(tok, line)?);
        }
    }
    Ok(())
}

fn scan(text: &str) -> Result<(Option<(usize, f64)>, HashMap<String, Matrix>), CaseError> {
    let mut base_mva = None;
    let mut matrices = HashMap::new();
    let mut block = Block::None;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = strip_comment(raw).trim();
        match &mut block {
            Block::Cell => {
                if body.contains('}') {
                    block = Block::None;
                }
                continue;
            }
            Block::Matrix(name, m, current, row_line) => {
                let (content, closed) = match body.find(']') {
                    Some(p) => (&body[..p], true),
                    None => (body, false),
                };
                push_matrix_tokens(content, line, &mut m.rows, current, row_line)?;
                // Newlines also terminate rows.
                if !current.is_empty() {
                    m.rows.push((*row_line, std::mem::take(current)));
                }
                if closed {
                    let name = std::mem::take(name);
                    if let Block::Matrix(_, m, _, _) = std::mem::replace(&mut block, Block::None) {
                        matrices.insert(name, m);
                    }
                }
                continue;
            }
            Block::None => {}
        }

        if body.is_empty() || body.starts_with("function") {
            continue;
        }
        let Some(rest) = body.strip_prefix("mpc.") else {
            return Err(syntax(line, format!("unexpected statement '{}'", body)));
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(syntax(line, "expected assignment"));
        };
        let name = name.trim().to_string();
        let rhs = rhs.trim();

        if let Some(after) = rhs.strip_prefix('[') {
            let mut m = Matrix {
                line,
                rows: Vec::new(),
            };
            let mut current = Vec::new();
            let mut row_line = line;
            let (content, closed) = match after.find(']') {
                Some(p) => (&after[..p], true),
                None => (after, false),
            };
            push_matrix_tokens(content, line, &mut m.rows, &mut current, &mut row_line)?;
            if !current.is_empty() {
                m.rows.push((row_line, std::mem::take(&mut current)));
            }
            if closed {
                matrices.insert(name, m);
            } else {
                block = Block::Matrix(name, m, current, row_line);
            }
        } else if rhs.starts_with('{') {
            if !rhs.contains('}') {
                block = Block::Cell;
            }
        } else if name == "baseMVA" {
            let v = rhs.trim_end_matches(';').trim();
            base_mva = Some((line, parse_number(v, line)?));
        } else if !rhs.ends_with(';') && !rhs.starts_with('\'') {
            return Err(syntax(line, format!("unterminated assignment to mpc.{}", name)));
        }
    }

    if let Block::Matrix(name, m, _, _) = block {
        return Err(syntax(m.line, format!("unterminated matrix mpc.{}", name)));
    }
    if matches!(block, Block::Cell) {
        return Err(syntax(text.lines().count(), "unterminated cell array"));
    }
    Ok((base_mva, matrices))
}

fn take_table(
    matrices: &mut HashMap<String, Matrix>,
    name: &str,
    min_cols: usize,
    last_line: usize,
) -> Result<Vec<(usize, Vec<f64>)>, CaseError> {
    let m = matrices
        .remove(name)
        .ok_or_else(|| syntax(last_line, format!("missing mpc.{} table", name)))?;
    for (line, row) in &m.rows {
        if row.len() < min_cols {
            return Err(syntax(
                *line,
                format!(
                    "mpc.{} row has {} columns, need at least {}",
                    name,
                    row.len(),
                    min_cols
                ),
            ));
        }
    }
    Ok(m.rows)
}

fn as_bus_id(v: f64, line: usize) -> Result<u32, CaseError> {
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(syntax(line, format!("invalid bus number {}", v)));
    }
    Ok(v as u32)
}

/// Parse a MATPOWER-style case into a validated [`PowerNetwork`].
pub fn parse_case(text: &str) -> Result<PowerNetwork, CaseError> {
    let last_line = text.lines().count().max(1);
    let (base, mut matrices) = scan(text)?;
    let (base_line, base_mva) = base.ok_or_else(|| syntax(last_line, "missing mpc.baseMVA"))?;
    if !(base_mva > 0.0) {
        return Err(syntax(base_line, "baseMVA must be positive"));
    }

    let bus_rows = take_table(&mut matrices, "bus", BUS_COLS, last_line)?;
    let gen_rows = take_table(&mut matrices, "gen", GEN_COLS, last_line)?;
    let branch_rows = take_table(&mut matrices, "branch", BRANCH_COLS, last_line)?;

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut loads = Vec::new();
    for (line, r) in &bus_rows {
        let id = as_bus_id(r[0], *line)?;
        let kind = match r[1] {
            c if c == 1.0 || c == 2.0 || c == 3.0 => BusKind::from_code(c as u8).unwrap(),
            c => return Err(syntax(*line, format!("unsupported bus type {}", c))),
        };
        buses.push(Bus {
            id,
            kind,
            voltage_setpoint: None,
            vm: r[7],
            va: r[8].to_radians(),
            base_kv: r[9],
            gs: r[4] / base_mva,
            bs: r[5] / base_mva,
        });
        if r[2] != 0.0 || r[3] != 0.0 {
            loads.push(Load {
                bus_id: id,
                p: r[2] / base_mva,
                q: r[3] / base_mva,
            });
        }
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for (line, r) in &gen_rows {
        generators.push(Generator {
            bus_id: as_bus_id(r[0], *line)?,
            p: r[1] / base_mva,
            q: r[2] / base_mva,
            q_max: r[3] / base_mva,
            q_min: r[4] / base_mva,
            vg: r[5],
            in_service: r[7] > 0.0,
            p_max: r[8] / base_mva,
            p_min: r[9] / base_mva,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for (line, r) in &branch_rows {
        branches.push(Branch {
            from_bus: as_bus_id(r[0], *line)?,
            to_bus: as_bus_id(r[1], *line)?,
            r: r[2],
            x: r[3],
            b_charging: r[4],
            tap_ratio: if r[8] == 0.0 { 1.0 } else { r[8] },
            phase_shift: r[9].to_radians(),
            in_service: r[10] > 0.0,
        });
    }

    // Regulated buses take their setpoint from the first in-service generator.
    for bus in buses.iter_mut() {
        if bus.kind == BusKind::PQ {
            continue;
        }
        let vg = generators
            .iter()
            .find(|g| g.bus_id == bus.id && g.in_service)
            .map(|g| g.vg);
        bus.voltage_setpoint = Some(vg.unwrap_or(bus.vm));
    }

    let net = PowerNetwork {
        base_mva,
        buses,
        generators,
        loads,
        branches,
    };
    let violations = net.validate();
    if violations.is_empty() {
        Ok(net)
    } else {
        Err(CaseError::Semantic(violations))
    }
}

/// Write `net` back out as MATPOWER text. Columns outside the supported
/// subset are filled with neutral defaults.
pub fn serialize_case(net: &PowerNetwork) -> String {
    let base = net.base_mva;
    let mut demand: HashMap<u32, (f64, f64)> = HashMap::new();
    for l in &net.loads {
        let e = demand.entry(l.bus_id).or_default();
        e.0 += l.p * base;
        e.1 += l.q * base;
    }

    let mut s = String::new();
    s.push_str("function mpc = case\n\nmpc.version = '2';\n");
    let _ = writeln!(s, "mpc.baseMVA = {};\n", base);

    s.push_str("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n");
    s.push_str("mpc.bus = [\n");
    for b in &net.buses {
        let (pd, qd) = demand.get(&b.id).copied().unwrap_or((0.0, 0.0));
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t1.1\t0.9;",
            b.id,
            b.kind.code(),
            pd,
            qd,
            b.gs * base,
            b.bs * base,
            b.vm,
            b.va.to_degrees(),
            b.base_kv
        );
    }
    s.push_str("];\n\n");

    s.push_str("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\n");
    s.push_str("mpc.gen = [\n");
    for g in &net.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus_id,
            g.p * base,
            g.q * base,
            g.q_max * base,
            g.q_min * base,
            g.vg,
            base,
            u8::from(g.in_service),
            g.p_max * base,
            g.p_min * base
        );
    }
    s.push_str("];\n\n");

    s.push_str("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\n");
    s.push_str("mpc.branch = [\n");
    for br in &net.branches {
        let ratio = if br.tap_ratio == 1.0 { 0.0 } else { br.tap_ratio };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b_charging,
            ratio,
            br.phase_shift.to_degrees(),
            u8::from(br.in_service)
        );
    }
    s.push_str("];\n");
    s
}
