//! Experiment configuration: versioned JSON schema, `key=value` override
//! paths, and validation. This is the only boundary that consumes
//! untrusted input, so parsing must never panic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::families::{Mode, Side};
use crate::grid::BoxSpec;

pub const SCHEMA: &str = "modlab/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config is not valid UTF-8")]
    Utf8,
    #[error("unsupported schema {0:?}, expected {SCHEMA:?}")]
    Schema(String),
    #[error("override key {0:?} does not exist in the config")]
    UnknownKey(String),
    #[error("override {0:?} is not of the form key=value")]
    BadOverride(String),
    #[error("invalid box: {0}")]
    Box(#[from] crate::grid::GridError),
    #[error("exponent p must lie in [1.05, 20], got {0}")]
    BadExponent(f64),
    #[error("resolutions must be a nonempty increasing sequence")]
    BadResolutions,
    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Product,
    DualDensity,
    Mollifier,
    Intersection,
    Homology,
    Capacity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub feasibility: f64,
    pub gap: f64,
    /// Allowed deviation of axis-family products from the closed forms.
    pub product: f64,
    /// Allowed slack of full-family products above 1.
    pub bound_slack: f64,
    pub dual_density: f64,
    pub capacity_gap: f64,
    pub mollifier_deficit: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-6,
            gap: 1e-7,
            product: 1e-6,
            bound_slack: 0.05,
            dual_density: 0.02,
            capacity_gap: 0.05,
            mollifier_deficit: 5e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MollifierConfig {
    pub epsilon: f64,
    pub order: usize,
    pub oracle_order: usize,
    /// Margin the sampled opposing members keep from A.
    pub margin: f64,
    /// Number of random-density min-cut members in the sample.
    pub cut_samples: usize,
    /// Compare against the nonsmooth ball kernel as well.
    pub ball_kernel: bool,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        MollifierConfig {
            epsilon: 0.1,
            order: 4,
            oracle_order: 8,
            margin: 0.15,
            cut_samples: 20,
            ball_kernel: false,
        }
    }
}

/// One experiment: a box, an exponent, family mode, resolutions and the
/// set of checks to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema: String,
    #[serde(rename = "box")]
    pub box_spec: BoxSpec,
    pub p: f64,
    pub families: Mode,
    #[serde(default = "default_side")]
    pub side: Side,
    #[serde(default)]
    pub resolutions: Vec<u32>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mollifier: MollifierConfig,
    #[serde(default)]
    pub delta_margin: f64,
}

fn default_side() -> Side {
    Side::A
}

impl ExperimentConfig {
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Resolutions to sweep; defaults to the box resolution.
    pub fn resolution_sweep(&self) -> Vec<u32> {
        if self.resolutions.is_empty() {
            vec![self.box_spec.m]
        } else {
            self.resolutions.clone()
        }
    }

    pub fn has_check(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA {
            return Err(ConfigError::Schema(self.schema.clone()));
        }
        self.box_spec.validate()?;
        if !(1.05..=20.0).contains(&self.p) {
            return Err(ConfigError::BadExponent(self.p));
        }
        if !self.resolutions.is_empty() && !self.resolutions.windows(2).all(|w| w[0] < w[1]) {
            return Err(ConfigError::BadResolutions);
        }
        for m in self.resolution_sweep() {
            let spec = BoxSpec {
                m,
                ..self.box_spec.clone()
            };
            spec.validate()?;
        }
        if self.mollifier.epsilon <= 0.0 || !self.mollifier.epsilon.is_finite() {
            return Err(ConfigError::NonPositive {
                field: "mollifier.epsilon",
                value: self.mollifier.epsilon,
            });
        }
        if self.mollifier.order == 0 || self.mollifier.oracle_order == 0 {
            return Err(ConfigError::NonPositive {
                field: "mollifier.order",
                value: 0.0,
            });
        }
        if self.delta_margin < 0.0 || !self.delta_margin.is_finite() {
            return Err(ConfigError::NonPositive {
                field: "delta_margin",
                value: self.delta_margin,
            });
        }
        if !(self.tolerances.feasibility > 0.0) || !(self.tolerances.gap > 0.0) {
            return Err(ConfigError::NonPositive {
                field: "tolerances",
                value: 0.0,
            });
        }
        Ok(())
    }
}

/// Apply one `path.to.key=value` override onto a parsed JSON tree. Only
/// keys that already exist may be overridden; the value is parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(root: &mut serde_json::Value, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    if path.is_empty() {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let mut cursor = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let next = match cursor {
            serde_json::Value::Object(map) => map
                .get_mut(*seg)
                .ok_or_else(|| ConfigError::UnknownKey(path.to_string()))?,
            serde_json::Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| ConfigError::UnknownKey(path.to_string()))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| ConfigError::UnknownKey(path.to_string()))?
            }
            _ => return Err(ConfigError::UnknownKey(path.to_string())),
        };
        if last {
            *next = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            return Ok(());
        }
        cursor = next;
    }
    Err(ConfigError::UnknownKey(path.to_string()))
}

/// Parse and validate a config from raw bytes, applying overrides first.
pub fn parse_config_bytes(
    bytes: &[u8],
    overrides: &[String],
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::str::from_utf8(bytes).map_err(|_| ConfigError::Utf8)?;
    let mut value: serde_json::Value = serde_json::from_str(text)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let config: ExperimentConfig = serde_json::from_value(value)?;
    config.validate()?;
    Ok(config)
}

/// Read a config file and apply overrides.
pub fn load_config(
    path: &std::path::Path,
    overrides: &[String],
) -> Result<ExperimentConfig, ConfigError> {
    let bytes = std::fs::read(path)?;
    parse_config_bytes(&bytes, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        r#"{
            "schema": "modlab/1",
            "box": {"n": 2, "k": 1, "side_q1": [1.0], "side_q2": [1.0], "m": 4},
            "p": 2.0,
            "families": "axis-restricted",
            "resolutions": [4, 8],
            "checks": ["product", "homology"],
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn parses_and_validates_sample() {
        let config = parse_config_bytes(sample().as_bytes(), &[]).unwrap();
        assert_eq!(config.p, 2.0);
        assert_eq!(config.q(), 2.0);
        assert_eq!(config.resolution_sweep(), vec![4, 8]);
        assert!(config.has_check(Check::Product));
        assert!(!config.has_check(Check::Capacity));
    }

    #[test]
    fn round_trips_through_serde() {
        let config = parse_config_bytes(sample().as_bytes(), &[]).unwrap();
        let echoed = serde_json::to_string(&config).unwrap();
        let back = parse_config_bytes(echoed.as_bytes(), &[]).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn overrides_change_existing_keys_only() {
        let config =
            parse_config_bytes(sample().as_bytes(), &["p=3.0".into(), "box.m=8".into()]).unwrap();
        assert_eq!(config.p, 3.0);
        assert_eq!(config.box_spec.m, 8);
        assert!(matches!(
            parse_config_bytes(sample().as_bytes(), &["nope=1".into()]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            parse_config_bytes(sample().as_bytes(), &["p".into()]),
            Err(ConfigError::BadOverride(_))
        ));
    }

    #[test]
    fn rejects_bad_schema_and_values() {
        let bad = sample().replace("modlab/1", "modlab/9");
        assert!(matches!(
            parse_config_bytes(bad.as_bytes(), &[]),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            parse_config_bytes(sample().as_bytes(), &["p=1.0".into()]),
            Err(ConfigError::BadExponent(_))
        ));
        assert!(matches!(
            parse_config_bytes(sample().as_bytes(), &["resolutions=[8,4]".into()]),
            Err(ConfigError::BadResolutions)
        ));
        assert!(parse_config_bytes(b"not json", &[]).is_err());
        assert!(parse_config_bytes(&[0xff, 0xfe], &[]).is_err());
    }

    #[test]
    fn deformed_config_parses() {
        let text = sample().replace(
            r#""m": 4}"#,
            r#""m": 4, "deformation": {"kind": "shear", "s": 0.3}}"#,
        );
        let config = parse_config_bytes(text.as_bytes(), &[]).unwrap();
        assert!(!config.box_spec.deformation.is_identity());
    }
}
