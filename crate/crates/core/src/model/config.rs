use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a coarse decoder feature map is merged into a finer encoder stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `E + P * D`, with `P` a bias-free 1x1 projection onto E's channel count.
    Residual,
    /// `[E : D]` along channels.
    Concat,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Residual => "residual",
            FusionMode::Concat => "concat",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(FusionMode::Residual),
            "concat" => Ok(FusionMode::Concat),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    L2,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

pub const MAX_LEVELS: usize = 8;

/// Full description of a nested model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedConfig {
    /// Number of subnetworks N; level 1 is full resolution, level N the coarsest.
    pub levels: usize,
    /// Encoder downsamplings per subnetwork.
    pub unet_depth: usize,
    /// Width of stage 0; stage i has `base_channels << i`.
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub fusion_mode: FusionMode,
    pub loss_kind: LossKind,
}

impl Default for NestedConfig {
    fn default() -> Self {
        NestedConfig {
            levels: 4,
            unet_depth: 3,
            base_channels: 32,
            in_channels: 2,
            out_channels: 2,
            fusion_mode: FusionMode::Residual,
            loss_kind: LossKind::L1,
        }
    }
}

impl NestedConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(1..=MAX_LEVELS).contains(&self.levels) {
            problems.push(format!("levels must be in [1, {MAX_LEVELS}], got {}", self.levels));
        }
        if self.unet_depth == 0 {
            problems.push("unet_depth must be >= 1".to_string());
        }
        if self.base_channels == 0 {
            problems.push("base_channels must be >= 1".to_string());
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            problems.push("in_channels and out_channels must be >= 1".to_string());
        }
        if self.levels + self.unet_depth > 24 {
            problems.push("levels + unet_depth too large".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Spatial dims fed to the model must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1 + self.unet_depth)
    }

    pub fn stage_width(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn check_input_dims(&self, h: usize, w: usize) -> Result<()> {
        let d = self.divisor();
        if !h.is_multiple_of(d) || !w.is_multiple_of(d) || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "{h}x{w} input is not divisible by {d} (2^(levels-1+unet_depth)); pad first"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_lists_violations() {
        let bad = NestedConfig { levels: 9, unet_depth: 0, ..NestedConfig::default() };
        match bad.validate() {
            Err(Error::Config(msg)) => {
                assert!(msg.contains("levels"));
                assert!(msg.contains("unet_depth"));
            }
            other => panic!("{other:?}"),
        }
        assert!(NestedConfig::default().validate().is_ok());
    }

    #[test]
    fn divisor_covers_pyramid_and_unet() {
        let c = NestedConfig { levels: 3, unet_depth: 2, ..NestedConfig::default() };
        assert_eq!(c.divisor(), 16);
        assert!(c.check_input_dims(96, 96).is_ok());
        assert!(c.check_input_dims(348, 260).is_err());
    }

    #[test]
    fn enums_parse_and_print() {
        assert_eq!("concat".parse::<FusionMode>().unwrap(), FusionMode::Concat);
        assert_eq!(FusionMode::Residual.to_string(), "residual");
        assert_eq!("l2".parse::<LossKind>().unwrap(), LossKind::L2);
        assert!("huber".parse::<LossKind>().is_err());
    }
}
