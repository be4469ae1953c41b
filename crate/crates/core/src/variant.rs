use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// What feeds the policy: a recurrent belief, the per-step encoding, or the
/// masked observation itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeliefArch {
    Lstm,
    Ssm,
    EncoderOnly,
    Identity,
}

/// The six method rows of the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Ssm,
    Lstm,
    LstmPartial10,
    LstmNoRecon,
    MemorylessMlp,
    Memoryless,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Ssm,
        Variant::Lstm,
        Variant::LstmPartial10,
        Variant::LstmNoRecon,
        Variant::MemorylessMlp,
        Variant::Memoryless,
    ];

    /// Short CLI name.
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ssm => "ssm",
            Variant::Lstm => "lstm",
            Variant::LstmPartial10 => "lstm-partial10",
            Variant::LstmNoRecon => "lstm-norecon",
            Variant::MemorylessMlp => "memoryless-mlp",
            Variant::Memoryless => "memoryless",
        }
    }

    /// Method tag used in result tables.
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Ssm => "membot-ssm",
            Variant::Lstm => "membot-lstm-full",
            Variant::LstmPartial10 => "membot-lstm-partial10",
            Variant::LstmNoRecon => "membot-lstm-norecon",
            Variant::MemorylessMlp => "memoryless-mlp-encoder",
            Variant::Memoryless => "memoryless",
        }
    }

    pub fn arch(self) -> BeliefArch {
        match self {
            Variant::Ssm => BeliefArch::Ssm,
            Variant::Lstm | Variant::LstmPartial10 | Variant::LstmNoRecon => BeliefArch::Lstm,
            Variant::MemorylessMlp => BeliefArch::EncoderOnly,
            Variant::Memoryless => BeliefArch::Identity,
        }
    }

    /// Reconstruction weight during pretraining, before any config override.
    pub fn default_lambda(self) -> f64 {
        match self {
            Variant::LstmNoRecon | Variant::Memoryless => 0.0,
            _ => 1.0,
        }
    }

    pub fn bptt_truncation(self) -> Option<usize> {
        match self {
            Variant::LstmPartial10 => Some(10),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s || v.tag() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown variant '{s}' (expected ssm, lstm, lstm-partial10, lstm-norecon, memoryless-mlp or memoryless)"
                ))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_tags_parse() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
        }
        assert!("gru".parse::<Variant>().is_err());
    }
}
