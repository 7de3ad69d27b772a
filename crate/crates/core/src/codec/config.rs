use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::keynode::SelectionParams;
use crate::registration::RegistrationParams;
use crate::residual::ResidualConfig;
use crate::{Error, Result};

/// How the P-frames of a group are predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PredictionMode {
    /// Forward chain from the group's I-frame.
    Forward,
    /// Frames before the switch index chain forward, the rest chain
    /// backward from the next group's I-frame.
    FixedDual(u8),
    /// Switch index chosen per group by measured distortion.
    Adaptive,
}

impl PredictionMode {
    pub(crate) fn code(self) -> (u8, u8) {
        match self {
            PredictionMode::Forward => (0, 0),
            PredictionMode::FixedDual(s) => (1, s),
            PredictionMode::Adaptive => (2, 0),
        }
    }

    pub(crate) fn from_code(mode: u8, s: u8) -> Option<Self> {
        match (mode, s) {
            (0, 0) => Some(PredictionMode::Forward),
            (1, s) if s >= 1 => Some(PredictionMode::FixedDual(s)),
            (2, 0) => Some(PredictionMode::Adaptive),
            _ => None,
        }
    }
}

impl FromStr for PredictionMode {
    type Err = Error;

    /// Parses `ff`, `dual:<s>` or `adp`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "ff" => Ok(PredictionMode::Forward),
            "adp" => Ok(PredictionMode::Adaptive),
            _ => {
                let switch = lower
                    .strip_prefix("dual:")
                    .and_then(|v| v.parse::<u8>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "unknown prediction mode {s:?}; expected ff, dual:<s> or adp"
                        ))
                    })?;
                Ok(PredictionMode::FixedDual(switch))
            }
        }
    }
}

impl fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionMode::Forward => f.write_str("ff"),
            PredictionMode::FixedDual(s) => write!(f, "dual:{s}"),
            PredictionMode::Adaptive => f.write_str("adp"),
        }
    }
}

impl TryFrom<String> for PredictionMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PredictionMode> for String {
    fn from(m: PredictionMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecConfig {
    pub gof_size: usize,
    pub num_keynodes: usize,
    /// Key nodes influencing each vertex.
    pub q: usize,
    pub prediction_mode: PredictionMode,
    pub iframe_quant_bits: u8,
    /// Quantization levels for rotations and translations.
    pub rt_levels: usize,
    pub residual: ResidualConfig,
    pub registration: RegistrationParams,
    pub selection: SelectionParams,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            gof_size: 5,
            num_keynodes: 100,
            q: 4,
            prediction_mode: PredictionMode::Forward,
            iframe_quant_bits: 12,
            rt_levels: 64,
            residual: ResidualConfig::default(),
            registration: RegistrationParams::default(),
            selection: SelectionParams::default(),
            seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.gof_size == 0 || self.gof_size > 255 {
            return fail(format!(
                "GoF size must be in [1, 255], got {}",
                self.gof_size
            ));
        }
        if self.num_keynodes == 0 || self.num_keynodes > u32::MAX as usize {
            return fail(format!("invalid key-node count {}", self.num_keynodes));
        }
        if self.q == 0 || self.q > u16::MAX as usize {
            return fail(format!("invalid Q {}", self.q));
        }
        if !(8..=24).contains(&self.iframe_quant_bits) {
            return fail(format!(
                "I-frame bits must be in [8, 24], got {}",
                self.iframe_quant_bits
            ));
        }
        for (name, n) in [("RT", self.rt_levels), ("residual", self.residual.levels)] {
            if n < 4 || n % 2 != 0 || n > u16::MAX as usize {
                return fail(format!(
                    "{name} level count must be even and in [4, 65534], got {n}"
                ));
            }
        }
        if let PredictionMode::FixedDual(s) = self.prediction_mode {
            if s == 0 || s as usize >= self.gof_size {
                return fail(format!(
                    "switch index must be in [1, {}], got {s}",
                    self.gof_size as i64 - 1
                ));
            }
        }
        if self.residual.leaf_budget == 0 {
            return fail("leaf budget must be at least 1".into());
        }
        if !(self.residual.ncoc_threshold >= 0.0) {
            return fail("NCOC threshold must be non-negative".into());
        }
        self.registration.validate()
    }
}
