//! Feeders bundled with the crate.

use crate::grid::NetworkModel;

pub const TWO_BUS_JSON: &str = include_str!("../feeders/two_bus.json");
pub const THIRTEEN_BUS_JSON: &str = include_str!("../feeders/thirteen_bus.json");
pub const DEEP_PV_8_JSON: &str = include_str!("../feeders/deep_pv_8.json");
pub const FEEDER16_JSON: &str = include_str!("../feeders/feeder16.json");

fn parse(text: &str, name: &str) -> NetworkModel {
    NetworkModel::from_json_str(text, name).unwrap_or_else(|e| panic!("bundled feeder {name} is invalid: {e}"))
}

/// One line from the substation to a single loaded bus with an inverter.
pub fn two_bus() -> NetworkModel {
    parse(TWO_BUS_JSON, "two_bus.json")
}

/// Unbalanced 13-bus feeder with three-, two- and single-phase laterals and
/// five inverters.
pub fn thirteen_bus() -> NetworkModel {
    parse(THIRTEEN_BUS_JSON, "thirteen_bus.json")
}

/// Nine-bus single-phase feeder with an inverter at every load. With every
/// panel at full output the far end rises above 1.05 p.u.
pub fn deep_pv_8() -> NetworkModel {
    parse(DEEP_PV_8_JSON, "deep_pv_8.json")
}

/// Seventeen-bus single-phase feeder with 16 inverters.
pub fn feeder16() -> NetworkModel {
    parse(FEEDER16_JSON, "feeder16.json")
}
