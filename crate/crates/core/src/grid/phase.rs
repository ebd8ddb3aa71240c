use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One conductor of a three-phase system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Nominal 1.0 p.u. phasor with the standard ABC rotation.
    pub fn nominal(self) -> Complex64 {
        let deg: f64 = match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        };
        Complex64::from_polar(1.0, deg.to_radians())
    }

    fn letter(self) -> char {
        match self {
            Phase::A => 'A',
            Phase::B => 'B',
            Phase::C => 'C',
        }
    }
}

/// Nonempty subset of {A, B, C}.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);
    pub const A: PhaseSet = PhaseSet(0b001);

    pub fn from_phases(phases: impl IntoIterator<Item = Phase>) -> Option<Self> {
        let bits = phases.into_iter().fold(0u8, |acc, p| acc | (1 << p.index()));
        (bits != 0).then_some(PhaseSet(bits))
    }

    pub fn contains(self, phase: Phase) -> bool {
        self.0 & (1 << phase.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Phases in A, B, C order.
    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `phase` within this set's ordered phases.
    pub fn position(self, phase: Phase) -> Option<usize> {
        self.iter().position(|p| p == phase)
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{}", p.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhaseSet({self})")
    }
}

impl FromStr for PhaseSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut bits = 0u8;
        for ch in s.chars() {
            let p = match ch.to_ascii_uppercase() {
                'A' => Phase::A,
                'B' => Phase::B,
                'C' => Phase::C,
                other => return Err(format!("unknown phase '{other}' in \"{s}\"")),
            };
            if bits & (1 << p.index()) != 0 {
                return Err(format!("phase '{ch}' repeated in \"{s}\""));
            }
            bits |= 1 << p.index();
        }
        if bits == 0 {
            return Err("empty phase set".to_string());
        }
        // Canonical order only, so the file text and the model agree.
        let canonical = PhaseSet(bits).to_string();
        if canonical != s.to_ascii_uppercase() {
            return Err(format!("phases \"{s}\" must be written in order as \"{canonical}\""));
        }
        Ok(PhaseSet(bits))
    }
}

impl Serialize for PhaseSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
