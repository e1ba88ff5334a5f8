use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::RacError;

/// Corruption severity level, from clean (`s = 0`) to maximal (`s = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Clean,
    T02,
    T04,
    T06,
    T08,
    T10,
}

impl Level {
    pub const ALL: [Level; 6] = [
        Level::Clean,
        Level::T02,
        Level::T04,
        Level::T06,
        Level::T08,
        Level::T10,
    ];
    pub const CORRUPTED: [Level; 5] = [Level::T02, Level::T04, Level::T06, Level::T08, Level::T10];

    pub fn severity(self) -> f64 {
        match self {
            Level::Clean => 0.0,
            Level::T02 => 0.2,
            Level::T04 => 0.4,
            Level::T06 => 0.6,
            Level::T08 => 0.8,
            Level::T10 => 1.0,
        }
    }

    /// 0 for clean, 1..=5 for the corrupted levels.
    pub fn index(self) -> usize {
        self as usize
    }

    /// Map a severity value onto its level; values must lie within 1e-9 of
    /// one of `0.0, 0.2, ..., 1.0`.
    pub fn from_severity(s: f64) -> Option<Level> {
        Level::ALL
            .into_iter()
            .find(|l| (l.severity() - s).abs() <= 1e-9)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Clean => f.write_str("CLEAN"),
            other => write!(f, "T{:.1}", other.severity()),
        }
    }
}

impl FromStr for Level {
    type Err = RacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("clean") {
            return Ok(Level::Clean);
        }
        let digits = t.strip_prefix(['T', 't']).unwrap_or(t);
        let value = match digits {
            "02" => Some(0.2),
            "04" => Some(0.4),
            "06" => Some(0.6),
            "08" => Some(0.8),
            "10" => Some(1.0),
            "00" => Some(0.0),
            other => other.parse::<f64>().ok(),
        };
        value
            .and_then(Level::from_severity)
            .ok_or_else(|| RacError::validation(format!("unknown severity level {s:?}")))
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for level in Level::ALL {
            assert_eq!(level.to_string().parse::<Level>().unwrap(), level);
        }
        assert_eq!("T0.4".parse::<Level>().unwrap(), Level::T04);
        assert_eq!("T10".parse::<Level>().unwrap(), Level::T10);
        assert_eq!("0.6".parse::<Level>().unwrap(), Level::T06);
        assert_eq!("T0.0".parse::<Level>().unwrap(), Level::Clean);
        assert!("T0.3".parse::<Level>().is_err());
        assert_eq!(Level::T08.to_string(), "T0.8");
        assert_eq!(Level::T10.to_string(), "T1.0");
    }
}
