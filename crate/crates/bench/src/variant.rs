use std::fmt;
use std::str::FromStr;

use crate::error::BenchError;

/// The ablation rows: which of rearrangement, prediction and batching run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    TwoPc,
    LionR,
    LionRW,
    LionRB,
    Lion,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::TwoPc, Variant::LionR, Variant::LionRW, Variant::LionRB, Variant::Lion];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TwoPc => "2PC",
            Variant::LionR => "Lion(R)",
            Variant::LionRW => "Lion(RW)",
            Variant::LionRB => "Lion(RB)",
            Variant::Lion => "Lion",
        }
    }

    pub fn rearrangement(self) -> bool {
        self != Variant::TwoPc
    }

    pub fn prediction(self) -> bool {
        matches!(self, Variant::LionRW | Variant::Lion)
    }

    pub fn batch(self) -> bool {
        matches!(self, Variant::LionRB | Variant::Lion)
    }

    pub fn valid_names() -> String {
        Variant::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BenchError;

    /// Case-insensitive; `lion-rw` and `lion_rw` also work.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| !matches!(c, '(' | ')' | '-' | '_' | ' ')).collect();
        let v = match key.as_str() {
            "2pc" => Variant::TwoPc,
            "lionr" => Variant::LionR,
            "lionrw" => Variant::LionRW,
            "lionrb" => Variant::LionRB,
            "lion" => Variant::Lion,
            _ => return Err(BenchError::UnknownVariant { name: s.trim().to_string(), valid: Variant::valid_names() }),
        };
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_match_the_ablation_table() {
        let rows: Vec<(bool, bool, bool)> = Variant::ALL.iter().map(|v| (v.rearrangement(), v.prediction(), v.batch())).collect();
        assert_eq!(
            rows,
            vec![(false, false, false), (true, false, false), (true, true, false), (true, false, true), (true, true, true)]
        );
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("lion-rw".parse::<Variant>().unwrap(), Variant::LionRW);
        assert_eq!("2pc".parse::<Variant>().unwrap(), Variant::TwoPc);
        assert!("Lion(W)".parse::<Variant>().is_err());
    }
}
