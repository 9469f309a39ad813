//! Run configuration loaded from TOML. Every field has a default, so an empty
//! file is a valid configuration.

use crate::extract::BpmBand;
use crate::rate::EstimatorConfig;
use crate::sim::{MotionEvent, SceneConfig};
use crate::verify::VerifyConfig;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid override {flag}: {message}")]
    Override { flag: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    pub scene: SceneConfig,
    pub motion: Vec<MotionEvent>,
    pub estimator: EstimatorConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            scene: SceneConfig::default(),
            motion: Vec::new(),
            estimator: EstimatorConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(step) = overrides.theta_step {
            self.estimator.theta_step = step;
        }
        if let Some(gate) = overrides.gate {
            self.estimator.gate = gate;
        }
        if let Some(band) = overrides.band {
            self.estimator.band = band;
        }
    }
}

/// Command-line overrides of estimator parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub theta_step: Option<f64>,
    pub gate: Option<f64>,
    pub band: Option<BpmBand>,
}

/// Accepts a plain number of radians or `pi/N`.
pub fn parse_theta_step(s: &str) -> Result<f64, ConfigError> {
    let err = |message: String| ConfigError::Override {
        flag: "--theta-step",
        message,
    };
    let t = s.trim();
    let value = if let Some(den) = t.strip_prefix("pi/") {
        let n: f64 = den.parse().map_err(|_| err(format!("bad divisor {den:?}")))?;
        PI / n
    } else {
        t.parse().map_err(|_| err(format!("not a number: {t:?}")))?
    };
    if !(value > 0.0 && value <= 2.0 * PI) {
        return Err(err(format!("{value} outside (0, 2pi]")));
    }
    Ok(value)
}

pub fn parse_gate(s: &str) -> Result<f64, ConfigError> {
    let g: f64 = s.trim().parse().map_err(|_| ConfigError::Override {
        flag: "--gate",
        message: format!("not a number: {s:?}"),
    })?;
    if !(g > 0.0 && g <= 1.0) {
        return Err(ConfigError::Override {
            flag: "--gate",
            message: format!("{g} outside (0, 1]"),
        });
    }
    Ok(g)
}

/// `MIN-MAX` or `MIN,MAX` in bpm.
pub fn parse_band(s: &str) -> Result<BpmBand, ConfigError> {
    let err = |message: String| ConfigError::Override {
        flag: "--band",
        message,
    };
    let (lo, hi) = s
        .split_once(['-', ','])
        .ok_or_else(|| err(format!("expected MIN-MAX, got {s:?}")))?;
    let lo: f64 = lo.trim().parse().map_err(|_| err(format!("bad minimum {lo:?}")))?;
    let hi: f64 = hi.trim().parse().map_err(|_| err(format!("bad maximum {hi:?}")))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(err(format!("need 0 < min < max, got {lo}-{hi}")));
    }
    Ok(BpmBand::new(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.scene.sample_rate, 100.0);
        assert_eq!(c.scene.subcarriers, 30);
        assert_eq!(c.scene.carrier_frequency, 5.24e9);
        assert_eq!(c.estimator.window_s, 12.0);
        assert_eq!(c.estimator.theta_step, PI / 50.0);
        assert_eq!(c.estimator.fft_size, 8192);
        assert_eq!(c.estimator.band, BpmBand::new(10.0, 37.0));
        assert_eq!(c.estimator.gate, 0.7);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.scene.breathing.rate_bpm = 14.5;
        c.motion.push(MotionEvent {
            start: 20.0,
            end: 21.0,
            displacement_amplitude: 0.5,
        });
        c.estimator.gate = 0.6;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_tables_and_unknown_keys() {
        let c = RunConfig::from_toml("duration_s = 30\n[scene.breathing]\nrate_bpm = 25.0\n").unwrap();
        assert_eq!(c.duration_s, 30.0);
        assert_eq!(c.scene.breathing.rate_bpm, 25.0);
        assert_eq!(c.scene.subcarriers, 30);
        assert!(RunConfig::from_toml("durations = 3").is_err());
    }

    #[test]
    fn overrides() {
        assert_eq!(parse_theta_step("pi/25").unwrap(), PI / 25.0);
        assert_eq!(parse_theta_step("0.1").unwrap(), 0.1);
        assert!(parse_theta_step("0").is_err());
        assert!(parse_theta_step("pi/x").is_err());
        assert_eq!(parse_gate("0.5").unwrap(), 0.5);
        assert!(parse_gate("1.5").is_err());
        assert_eq!(parse_band("12-30").unwrap(), BpmBand::new(12.0, 30.0));
        assert_eq!(parse_band("12,30").unwrap(), BpmBand::new(12.0, 30.0));
        assert!(parse_band("30-12").is_err());

        let mut c = RunConfig::default();
        c.apply(&Overrides {
            theta_step: Some(0.2),
            gate: None,
            band: Some(BpmBand::new(8.0, 40.0)),
        });
        assert_eq!(c.estimator.theta_step, 0.2);
        assert_eq!(c.estimator.gate, 0.7);
        assert_eq!(c.estimator.band.max_bpm, 40.0);
    }
}
