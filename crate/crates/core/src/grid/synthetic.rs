use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BusRecord, Equivalent, GridError, GridFile, InverterRecord, LineRecord, NetworkModel, PhaseSet};

/// Knobs for random radial feeders. Generated feeders are single-phase
/// equivalents of balanced three-phase circuits.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFeederConfig {
    pub num_buses: usize,
    pub num_controllable: usize,
    pub base_kv: f64,
    pub base_kva: f64,
    /// Per-unit series resistance of each segment.
    pub r_pu: (f64, f64),
    /// Reactance-to-resistance ratio of each segment.
    pub x_over_r: (f64, f64),
    /// Base real load per bus, kW.
    pub load_kw: (f64, f64),
    pub power_factor: f64,
    /// Inverter rating as a multiple of the bus's base real load.
    pub inverter_ratio: f64,
    /// Probability that a new bus extends the most recent one, giving long laterals.
    pub chain_bias: f64,
}

impl SyntheticFeederConfig {
    pub fn new(num_buses: usize, num_controllable: usize) -> Self {
        SyntheticFeederConfig {
            num_buses,
            num_controllable,
            base_kv: 12.47,
            base_kva: 1000.0,
            r_pu: (0.02, 0.05),
            x_over_r: (0.5, 1.0),
            load_kw: (50.0, 150.0),
            power_factor: 0.98,
            inverter_ratio: 2.5,
            chain_bias: 0.7,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<NetworkModel, GridError> {
        NetworkModel::from_file(&self.generate_file(seed)?)
    }

    /// The grid document for this configuration; byte-identical for a fixed seed.
    pub fn generate_file(&self, seed: u64) -> Result<GridFile, GridError> {
        let n = self.num_buses;
        if n < 2 {
            return Err(GridError::InvalidSize(format!("need at least 2 buses, got {n}")));
        }
        if self.num_controllable == 0 || self.num_controllable > n - 1 {
            return Err(GridError::InvalidSize(format!(
                "controllable buses must be in 1..={}, got {}",
                n - 1,
                self.num_controllable
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z_base = self.base_kv * self.base_kv * 1000.0 / self.base_kva;
        let tan_phi = self.power_factor.acos().tan();

        let mut controllable = vec![false; n];
        for k in index::sample(&mut rng, n - 1, self.num_controllable) {
            controllable[k + 1] = true;
        }

        let mut buses = vec![BusRecord {
            id: 0,
            phases: PhaseSet::A,
            load_kw: vec![],
            load_kvar: vec![],
            inverter: None,
        }];
        let mut lines = Vec::with_capacity(n - 1);
        for (k, has_inverter) in controllable.iter().enumerate().skip(1) {
            let parent = if k == 1 || rng.random_bool(self.chain_bias) {
                k - 1
            } else {
                rng.random_range(0..k)
            };
            let r_pu = uniform(&mut rng, self.r_pu);
            let x_pu = r_pu * uniform(&mut rng, self.x_over_r);
            lines.push(LineRecord {
                from: parent as u32,
                to: k as u32,
                phases: PhaseSet::A,
                r_ohm: vec![vec![round_to(r_pu * z_base, 1e-4)]],
                x_ohm: vec![vec![round_to(x_pu * z_base, 1e-4)]],
            });
            let kw = round_to(uniform(&mut rng, self.load_kw), 0.1);
            buses.push(BusRecord {
                id: k as u32,
                phases: PhaseSet::A,
                load_kw: vec![kw],
                load_kvar: vec![round_to(kw * tan_phi, 0.1)],
                inverter: has_inverter.then(|| InverterRecord {
                    s_kva: round_to(kw * self.inverter_ratio, 0.1),
                }),
            });
        }
        Ok(GridFile {
            schema: super::SCHEMA_VERSION,
            name: Some(format!("synthetic-{n}-{}-seed{seed}", self.num_controllable)),
            equivalent: Equivalent::SinglePhase,
            base_kv: self.base_kv,
            base_kva: self.base_kva,
            buses,
            lines,
        })
    }
}

/// Random radial feeder with default impedance and load bands.
pub fn generate_synthetic_feeder(
    num_buses: usize,
    num_controllable: usize,
    seed: u64,
) -> Result<NetworkModel, GridError> {
    SyntheticFeederConfig::new(num_buses, num_controllable).generate(seed)
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    let r = (x / step).round() * step;
    // Trim representation noise so files read cleanly.
    format!("{r:.6}").parse().unwrap()
}
