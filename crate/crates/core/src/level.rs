//! Command levels and linguistic variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// SQL command level. Each level adds one clause family to the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "CS1")]
    Cs1,
    #[serde(rename = "CS2")]
    Cs2,
    #[serde(rename = "CS3")]
    Cs3,
    #[serde(rename = "CS4")]
    Cs4,
    #[serde(rename = "CS5")]
    Cs5,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::Cs1, Level::Cs2, Level::Cs3, Level::Cs4, Level::Cs5];

    pub fn number(self) -> u8 {
        match self {
            Level::Cs1 => 1,
            Level::Cs2 => 2,
            Level::Cs3 => 3,
            Level::Cs4 => 4,
            Level::Cs5 => 5,
        }
    }

    pub fn allows_order_by(self) -> bool {
        self >= Level::Cs2
    }

    pub fn allows_aggregates(self) -> bool {
        self >= Level::Cs3
    }

    pub fn allows_where(self) -> bool {
        self >= Level::Cs4
    }

    pub fn allows_join(self) -> bool {
        self >= Level::Cs5
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CS{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown level {0:?} (expected cs1..cs5)")]
pub struct UnknownLevel(pub String);

impl FromStr for Level {
    type Err = UnknownLevel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cs1" | "1" => Ok(Level::Cs1),
            "cs2" | "2" => Ok(Level::Cs2),
            "cs3" | "3" => Ok(Level::Cs3),
            "cs4" | "4" => Ok(Level::Cs4),
            "cs5" | "5" => Ok(Level::Cs5),
            _ => Err(UnknownLevel(s.to_string())),
        }
    }
}

/// Linguistic variant: `Base` names schema objects verbatim, `Syn` replaces
/// table names with probability 0.8 and field names with probability 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Syn,
}

impl Variant {
    pub fn p_table_synonym(self) -> f64 {
        match self {
            Variant::Base => 0.0,
            Variant::Syn => 0.8,
        }
    }

    pub fn p_field_synonym(self) -> f64 {
        match self {
            Variant::Base => 0.0,
            Variant::Syn => 0.5,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Syn => "syn",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant {0:?} (expected base or syn)")]
pub struct UnknownVariant(pub String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "syn" | "synonym" | "synonyms" => Ok(Variant::Syn),
            _ => Err(UnknownVariant(s.to_string())),
        }
    }
}
