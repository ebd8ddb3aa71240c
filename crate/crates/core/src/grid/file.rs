//! On-disk grid description (schema version 1).
//!
//! Powers are in kW / kvar and impedances in ohms; conversion to per-unit
//! happens when the document is turned into a [`NetworkModel`](super::NetworkModel).

use serde::{Deserialize, Serialize};

use super::PhaseSet;

pub const SCHEMA_VERSION: u32 = 1;

/// How bus phases are interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equivalent {
    /// Every phase is modelled; per-phase base power is `base_kva / 3`.
    #[default]
    PerPhase,
    /// Balanced network reduced to one phase; powers are three-phase totals
    /// on `base_kva`, impedances are positive-sequence values.
    SinglePhase,
}

impl Equivalent {
    fn is_default(&self) -> bool {
        *self == Equivalent::PerPhase
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Equivalent::is_default")]
    pub equivalent: Equivalent,
    /// Line-to-line base voltage.
    pub base_kv: f64,
    /// Three-phase base power.
    pub base_kva: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: u32,
    pub phases: PhaseSet,
    #[serde(default, skip_serializing_if = "all_zero")]
    pub load_kw: Vec<f64>,
    #[serde(default, skip_serializing_if = "all_zero")]
    pub load_kvar: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverter: Option<InverterRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverterRecord {
    pub s_kva: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineRecord {
    pub from: u32,
    pub to: u32,
    pub phases: PhaseSet,
    pub r_ohm: Vec<Vec<f64>>,
    pub x_ohm: Vec<Vec<f64>>,
}

fn all_zero(v: &[f64]) -> bool {
    v.iter().all(|x| *x == 0.0)
}

impl GridFile {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("grid file serializes");
        s.push('\n');
        s
    }
}
