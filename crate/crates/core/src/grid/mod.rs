//! Feeder data model, grid files, synthetic feeders and scenario sampling.

mod file;
mod matrix;
mod phase;
mod scenario;
mod synthetic;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

pub use file::{BusRecord, Equivalent, GridFile, InverterRecord, LineRecord, SCHEMA_VERSION};
pub use matrix::PhaseMatrix;
pub use phase::{Phase, PhaseSet};
pub use scenario::{sample_scenario, Scenario, ScenarioSampler};
pub use synthetic::{generate_synthetic_feeder, SyntheticFeederConfig};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read grid file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("grid file {path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported grid schema version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("feeder is not radial: {buses} buses but {lines} lines")]
    NotRadial { buses: usize, lines: usize },
    #[error("feeder is not connected: bus {0} is unreachable from the substation")]
    Disconnected(u32),
    #[error("phase mismatch on line {from}->{to}: {detail}")]
    PhaseMismatch { from: u32, to: u32, detail: String },
    #[error("invalid synthetic feeder size: {0}")]
    InvalidSize(String),
}

fn invalid(msg: impl Into<String>) -> GridError {
    GridError::Invalid(msg.into())
}

/// Rating of a bus's PV inverter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverterSpec {
    /// Apparent power capacity S in kVA.
    pub s_kva: f64,
}

impl InverterSpec {
    /// Real-power ceiling imposed by the interconnection standard, 0.9 S.
    pub fn p_cap(&self) -> f64 {
        0.9 * self.s_kva
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub phases: PhaseSet,
    /// Per-phase consumption in kW + j kvar, ordered as `phases.iter()`.
    pub load: Vec<Complex64>,
    pub inverter: Option<InverterSpec>,
}

impl Bus {
    /// Total real-power load over all phases, kW.
    pub fn load_kw(&self) -> f64 {
        self.load.iter().map(|s| s.re).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    /// Upstream bus index (into [`NetworkModel::buses`]).
    pub from: usize,
    /// Downstream bus index.
    pub to: usize,
    pub phases: PhaseSet,
    pub z_ohm: PhaseMatrix,
    pub z_pu: PhaseMatrix,
    pub y_pu: PhaseMatrix,
}

/// Validated radial feeder. Buses are sorted by id and bus 0 is the
/// substation; lines are oriented away from the substation.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    name: Option<String>,
    equivalent: Equivalent,
    base_kv: f64,
    base_kva: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    parent_line: Vec<Option<usize>>,
    child_lines: Vec<Vec<usize>>,
    sweep_order: Vec<usize>,
    controllable: Vec<usize>,
}

/// Reads and validates a grid file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkModel::from_json_str(&text, &path.display().to_string())
}

impl NetworkModel {
    /// Parses grid-file JSON; `origin` is used in error messages.
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, GridError> {
        let doc = GridFile::from_json(text).map_err(|e| GridError::Parse {
            path: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(&doc)
    }

    pub fn from_file(doc: &GridFile) -> Result<Self, GridError> {
        if doc.schema != SCHEMA_VERSION {
            return Err(GridError::Schema(doc.schema));
        }
        if !(doc.base_kv.is_finite() && doc.base_kv > 0.0) {
            return Err(invalid(format!("base_kv must be positive, got {}", doc.base_kv)));
        }
        if !(doc.base_kva.is_finite() && doc.base_kva > 0.0) {
            return Err(invalid(format!("base_kva must be positive, got {}", doc.base_kva)));
        }
        let z_base = doc.base_kv * doc.base_kv * 1000.0 / doc.base_kva;

        let mut records: Vec<&BusRecord> = doc.buses.iter().collect();
        records.sort_by_key(|b| b.id);
        let mut index = HashMap::new();
        let mut buses = Vec::with_capacity(records.len());
        for (k, rec) in records.iter().enumerate() {
            if index.insert(rec.id, k).is_some() {
                return Err(invalid(format!("duplicate bus id {}", rec.id)));
            }
            buses.push(bus_from_record(rec, doc.equivalent)?);
        }
        if buses.first().map(|b| b.id) != Some(0) {
            return Err(invalid("bus 0 (substation) is missing"));
        }
        let sub = &buses[0];
        if sub.load.iter().any(|s| *s != Complex64::new(0.0, 0.0)) {
            return Err(invalid("substation bus 0 must not carry load"));
        }
        if sub.inverter.is_some() {
            return Err(invalid("substation bus 0 must not carry an inverter"));
        }

        if doc.lines.len() + 1 != buses.len() {
            return Err(GridError::NotRadial {
                buses: buses.len(),
                lines: doc.lines.len(),
            });
        }

        // Undirected adjacency, then orient by breadth-first search from bus 0.
        let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); buses.len()];
        for (li, rec) in doc.lines.iter().enumerate() {
            let a = *index
                .get(&rec.from)
                .ok_or_else(|| invalid(format!("line {li} references unknown bus {}", rec.from)))?;
            let b = *index
                .get(&rec.to)
                .ok_or_else(|| invalid(format!("line {li} references unknown bus {}", rec.to)))?;
            if a == b {
                return Err(invalid(format!("line {li} connects bus {} to itself", rec.from)));
            }
            adjacency[a].push((b, li));
            adjacency[b].push((a, li));
        }
        let mut parent_line = vec![None; buses.len()];
        let mut visited = vec![false; buses.len()];
        let mut sweep_order = Vec::with_capacity(buses.len());
        let mut upstream = vec![usize::MAX; doc.lines.len()];
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(u) = queue.pop_front() {
            sweep_order.push(u);
            for &(v, li) in &adjacency[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent_line[v] = Some(li);
                    upstream[li] = u;
                    queue.push_back(v);
                }
            }
        }
        if let Some(k) = visited.iter().position(|v| !v) {
            return Err(GridError::Disconnected(buses[k].id));
        }

        let mut lines = Vec::with_capacity(doc.lines.len());
        let mut child_lines = vec![Vec::new(); buses.len()];
        for (li, rec) in doc.lines.iter().enumerate() {
            let a = index[&rec.from];
            let b = index[&rec.to];
            let (from, to) = if upstream[li] == a { (a, b) } else { (b, a) };
            let line = line_from_record(rec, from, to, &buses, doc.equivalent, z_base)?;
            child_lines[from].push(li);
            lines.push(line);
        }
        for (k, bus) in buses.iter().enumerate().skip(1) {
            let line = &lines[parent_line[k].expect("non-root bus has a parent")];
            if !bus.phases.is_subset_of(line.phases) {
                return Err(GridError::PhaseMismatch {
                    from: buses[line.from].id,
                    to: bus.id,
                    detail: format!(
                        "bus {} has phases {} but is fed only by {}",
                        bus.id, bus.phases, line.phases
                    ),
                });
            }
        }

        let controllable: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.inverter.is_some())
            .map(|(k, _)| k)
            .collect();
        if controllable.is_empty() {
            return Err(invalid("no bus carries an inverter; at least one is required"));
        }

        Ok(NetworkModel {
            name: doc.name.clone(),
            equivalent: doc.equivalent,
            base_kv: doc.base_kv,
            base_kva: doc.base_kva,
            buses,
            lines,
            parent_line,
            child_lines,
            sweep_order,
            controllable,
        })
    }

    /// Back to the on-disk document. Lines are written in their oriented form.
    pub fn to_file(&self) -> GridFile {
        let buses = self
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                phases: b.phases,
                load_kw: b.load.iter().map(|s| s.re).collect(),
                load_kvar: b.load.iter().map(|s| s.im).collect(),
                inverter: b.inverter.map(|inv| InverterRecord { s_kva: inv.s_kva }),
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| {
                let n = l.phases.len();
                let part = |f: fn(Complex64) -> f64| -> Vec<Vec<f64>> {
                    (0..n).map(|i| (0..n).map(|j| f(l.z_ohm.get(i, j))).collect()).collect()
                };
                LineRecord {
                    from: self.buses[l.from].id,
                    to: self.buses[l.to].id,
                    phases: l.phases,
                    r_ohm: part(|z| z.re),
                    x_ohm: part(|z| z.im),
                }
            })
            .collect();
        GridFile {
            schema: SCHEMA_VERSION,
            name: self.name.clone(),
            equivalent: self.equivalent,
            base_kv: self.base_kv,
            base_kva: self.base_kva,
            buses,
            lines,
        }
    }

    pub fn to_json(&self) -> String {
        self.to_file().to_json()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn equivalent(&self) -> Equivalent {
        self.equivalent
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn base_kva(&self) -> f64 {
        self.base_kva
    }

    /// Base power of one phase in kVA.
    pub fn phase_base_kva(&self) -> f64 {
        match self.equivalent {
            Equivalent::PerPhase => self.base_kva / 3.0,
            Equivalent::SinglePhase => self.base_kva,
        }
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv * 1000.0 / self.base_kva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.binary_search_by_key(&id, |b| b.id).ok()
    }

    /// Line feeding bus `k`, `None` for the substation.
    pub fn parent_line(&self, k: usize) -> Option<usize> {
        self.parent_line[k]
    }

    pub fn child_lines(&self, k: usize) -> &[usize] {
        &self.child_lines[k]
    }

    /// Bus indices in breadth-first order from the substation.
    pub fn sweep_order(&self) -> &[usize] {
        &self.sweep_order
    }

    /// Indices of buses with inverters, ordered by bus id.
    pub fn controllable(&self) -> &[usize] {
        &self.controllable
    }

    pub fn num_agents(&self) -> usize {
        self.controllable.len()
    }

    pub fn inverter(&self, k: usize) -> InverterSpec {
        self.buses[k].inverter.expect("bus has an inverter")
    }

    /// Replace per-phase loads; used by scenarios and tests.
    pub fn with_loads(&self, loads: &[Vec<Complex64>]) -> NetworkModel {
        let mut out = self.clone();
        for (bus, load) in out.buses.iter_mut().zip(loads) {
            bus.load.clone_from(load);
        }
        out
    }
}

fn bus_from_record(rec: &BusRecord, eq: Equivalent) -> Result<Bus, GridError> {
    let n = rec.phases.len();
    if eq == Equivalent::SinglePhase && n != 1 {
        return Err(invalid(format!(
            "bus {}: single-phase equivalent feeders need exactly one phase per bus",
            rec.id
        )));
    }
    let column = |v: &[f64], what: &str| -> Result<Vec<f64>, GridError> {
        match v.len() {
            0 => Ok(vec![0.0; n]),
            m if m == n => Ok(v.to_vec()),
            m => Err(invalid(format!(
                "bus {}: {what} has {m} entries for {n} phases",
                rec.id
            ))),
        }
    };
    let kw = column(&rec.load_kw, "load_kw")?;
    let kvar = column(&rec.load_kvar, "load_kvar")?;
    if let Some(bad) = kw.iter().chain(&kvar).find(|x| !x.is_finite()) {
        return Err(invalid(format!("bus {}: non-finite load {bad}", rec.id)));
    }
    if let Some(neg) = kw.iter().find(|x| **x < 0.0) {
        return Err(invalid(format!("bus {}: negative real load {neg} kW", rec.id)));
    }
    let inverter = match &rec.inverter {
        Some(inv) if !(inv.s_kva.is_finite() && inv.s_kva > 0.0) => {
            return Err(invalid(format!(
                "bus {}: inverter s_kva must be positive, got {}",
                rec.id, inv.s_kva
            )))
        }
        Some(inv) => Some(InverterSpec { s_kva: inv.s_kva }),
        None => None,
    };
    Ok(Bus {
        id: rec.id,
        phases: rec.phases,
        load: kw.iter().zip(&kvar).map(|(p, q)| Complex64::new(*p, *q)).collect(),
        inverter,
    })
}

fn line_from_record(
    rec: &LineRecord,
    from: usize,
    to: usize,
    buses: &[Bus],
    eq: Equivalent,
    z_base: f64,
) -> Result<Line, GridError> {
    let (fid, tid) = (rec.from, rec.to);
    for bus in [&buses[from], &buses[to]] {
        if !rec.phases.is_subset_of(bus.phases) {
            return Err(GridError::PhaseMismatch {
                from: fid,
                to: tid,
                detail: format!(
                    "line phases {} not available at bus {} ({})",
                    rec.phases, bus.id, bus.phases
                ),
            });
        }
    }
    if eq == Equivalent::SinglePhase && rec.phases.len() != 1 {
        return Err(invalid(format!("line {fid}->{tid}: single-phase equivalent lines need one phase")));
    }
    let n = rec.phases.len();
    let square = |m: &[Vec<f64>]| m.len() == n && m.iter().all(|r| r.len() == n);
    if !square(&rec.r_ohm) || !square(&rec.x_ohm) {
        return Err(invalid(format!(
            "line {fid}->{tid}: impedance matrices must be {n}x{n} for phases {}",
            rec.phases
        )));
    }
    let z_ohm = PhaseMatrix::from_parts(&rec.r_ohm, &rec.x_ohm);
    for i in 0..n {
        for j in 0..n {
            let z = z_ohm.get(i, j);
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(invalid(format!("line {fid}->{tid}: non-finite impedance")));
            }
        }
        if z_ohm.get(i, i).norm() == 0.0 {
            return Err(invalid(format!("line {fid}->{tid}: zero self-impedance on phase {i}")));
        }
    }
    let tol = 1e-12 * (0..n).map(|i| z_ohm.get(i, i).norm()).fold(0.0, f64::max);
    if !z_ohm.is_symmetric(tol) {
        return Err(invalid(format!("line {fid}->{tid}: impedance matrix is not symmetric")));
    }
    let z_pu = z_ohm.scale(1.0 / z_base);
    let y_pu = z_pu
        .inverse()
        .ok_or_else(|| invalid(format!("line {fid}->{tid}: impedance matrix is singular")))?;
    Ok(Line {
        from,
        to,
        phases: rec.phases,
        z_ohm,
        z_pu,
        y_pu,
    })
}
