//! Numerical checks of the CSI-ratio geometry on synthetic channels: the ratio
//! traces a circle, its rotation direction follows the static/dynamic
//! magnitude ordering, and its arc tracks the reflection path change.

use crate::csi::ComplexSample;
use crate::mobius::{
    arc_radian, fit_circle, path_phasor, rotation_orientation, GeometryError, MobiusCoefficients, Orientation,
};
use crate::sim::{wavelength, SceneConfig, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Scene(#[from] SimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid verification settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Randomized channels per orientation class.
    pub scenes: usize,
    /// Relative half-width of the excluded band around `|Hs| = A`.
    pub boundary_band: f64,
    /// `|Hs| / A` for the short-arc check.
    pub static_to_dynamic: f64,
    pub points: usize,
    pub residual_tolerance: f64,
    pub full_arc_tolerance: f64,
    pub sixth_arc_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 200,
            boundary_band: 0.05,
            static_to_dynamic: 30.0,
            points: 360,
            residual_tolerance: 1e-6,
            full_arc_tolerance: 0.02,
            sixth_arc_tolerance: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Reported but excluded from the overall verdict.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    fn within(name: &str, measured: f64, expected: f64, tolerance: f64, detail: String) -> Self {
        let ok = (measured - expected).abs() <= tolerance;
        Self {
            name: name.into(),
            measured,
            expected,
            tolerance,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// A single-subcarrier channel: static phasors and dynamic gains per antenna.
#[derive(Debug, Clone, Copy)]
struct Channel {
    hs: [ComplexSample; 2],
    a: [f64; 2],
    delta_d: f64,
    lambda: f64,
}

impl Channel {
    fn coefficients(&self) -> Result<MobiusCoefficients, GeometryError> {
        MobiusCoefficients::from_channel(self.hs[0], self.a[0], self.hs[1], self.a[1], self.delta_d, self.lambda)
    }

    /// Ratio samples while the path grows by `path_change` from `start` meters.
    fn trace(&self, start: f64, path_change: f64, n: usize) -> Result<Vec<ComplexSample>, GeometryError> {
        let m = self.coefficients()?;
        let offset = ComplexSample::from_polar(1.0, -2.0 * PI * start / self.lambda);
        path_phasor(path_change, self.lambda, n)
            .into_iter()
            .map(|z| m.map(z * offset))
            .collect()
    }

    /// `|D / C|`, which decides the rotation direction.
    fn static_ratio(&self) -> f64 {
        self.hs[1].norm() / self.a[1]
    }
}

fn random_channel(rng: &mut ChaCha8Rng, ratio: f64, lambda: f64) -> Channel {
    let a2 = rng.random_range(0.05..0.2);
    let a1 = rng.random_range(0.05..0.2);
    let hs1 = ComplexSample::from_polar(rng.random_range(0.2..2.0), rng.random_range(0.0..2.0 * PI));
    let hs2 = ComplexSample::from_polar(ratio * a2, rng.random_range(0.0..2.0 * PI));
    Channel {
        hs: [hs1, hs2],
        a: [a1, a2],
        delta_d: rng.random_range(0.0..lambda),
        lambda,
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

pub fn verify_model(scene: &SceneConfig, cfg: &VerifyConfig) -> Result<VerifyReport, VerifyError> {
    if cfg.scenes == 0 || cfg.points < 8 || !(cfg.boundary_band > 0.0 && cfg.boundary_band < 0.5) {
        return Err(VerifyError::Settings(format!(
            "scenes {}, points {}, boundary band {}",
            cfg.scenes, cfg.points, cfg.boundary_band
        )));
    }
    if !(cfg.static_to_dynamic > 1.0) {
        return Err(VerifyError::Settings("static_to_dynamic must exceed 1".into()));
    }
    let built = scene.build(cfg.seed)?;
    let lambda = wavelength(scene.carrier_frequency);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(11);
    let n = cfg.points;
    let band = cfg.boundary_band;

    // Scene subcarriers with a dynamic path.
    let scene_channels: Vec<Channel> = built
        .channels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.dynamic_amplitude.iter().all(|&a| a > 0.0))
        .map(|(k, c)| Channel {
            hs: c.static_component,
            a: c.dynamic_amplitude,
            delta_d: built.delta_d(),
            lambda: wavelength(built.subcarrier_frequency(k)),
        })
        .collect();

    let mut checks = Vec::new();

    // Circle residual, scene subcarriers plus randomized channels on both sides.
    let mut worst_residual = 0.0f64;
    let mut fitted = 0;
    let randomized: Vec<Channel> = (0..cfg.scenes)
        .map(|i| {
            let ratio = if i % 2 == 0 {
                log_uniform(&mut rng, 1.0 + band, 20.0)
            } else {
                log_uniform(&mut rng, 0.05, 1.0 - band)
            };
            random_channel(&mut rng, ratio, lambda)
        })
        .collect();
    for ch in scene_channels.iter().chain(&randomized) {
        let pts = ch.trace(0.0, ch.lambda, n)?;
        worst_residual = worst_residual.max(fit_circle(&pts)?.relative_residual());
        fitted += 1;
    }
    checks.push(CheckResult::within(
        "circle_residual",
        worst_residual,
        0.0,
        cfg.residual_tolerance,
        format!("max relative RMS residual over {fitted} noiseless full-wavelength sweeps"),
    ));

    // Rotation direction on either side of |Hs| = A, for a quarter-wavelength path increase.
    let mut orientation_check =
        |name: &str, lo: f64, hi: f64, expect: Orientation| -> Result<CheckResult, VerifyError> {
            let mut correct = 0;
            for _ in 0..cfg.scenes {
                let ratio = log_uniform(&mut rng, lo, hi);
                let ch = random_channel(&mut rng, ratio, lambda);
                let start = rng.random_range(0.0..lambda);
                if rotation_orientation(&ch.trace(start, lambda / 4.0, n / 4)?)? == expect {
                    correct += 1;
                }
            }
            let fraction = correct as f64 / cfg.scenes as f64;
            Ok(CheckResult::within(
                name,
                fraction,
                1.0,
                0.0,
                format!(
                    "{correct}/{} channels rotate {expect:?} with |Hs|/A in [{lo:.3}, {hi:.3}]",
                    cfg.scenes
                ),
            ))
        };
    checks.push(orientation_check(
        "orientation_los_dominant",
        1.0 + band,
        20.0,
        Orientation::Clockwise,
    )?);
    checks.push(orientation_check(
        "orientation_attenuated_los",
        0.05,
        1.0 - band,
        Orientation::Counterclockwise,
    )?);

    // Channels inside the boundary band are reported, never judged.
    let mut tally = [0usize; 3];
    for _ in 0..cfg.scenes.min(50) {
        let ratio = rng.random_range(1.0 - band..1.0 + band);
        let ch = random_channel(&mut rng, ratio, lambda);
        let o = rotation_orientation(&ch.trace(0.0, lambda / 4.0, n / 4)?)?;
        tally[o as usize] += 1;
    }
    checks.push(CheckResult {
        name: "orientation_boundary".into(),
        measured: f64::NAN,
        expected: f64::NAN,
        tolerance: band,
        status: CheckStatus::Indeterminate,
        detail: format!(
            "|Hs|/A within {:.0}% of 1: {} clockwise, {} counterclockwise, {} flat; excluded",
            band * 100.0,
            tally[0],
            tally[1],
            tally[2]
        ),
    });

    // Full-wavelength arc on the scene's own subcarriers.
    let mut worst_full = 0.0f64;
    for ch in scene_channels.iter().chain(randomized.iter().step_by(2)) {
        let pts = ch.trace(0.0, ch.lambda, n)?;
        let circle = fit_circle(&pts)?;
        let arc = arc_radian(&pts, &circle)?;
        let expect = if ch.static_ratio() > 1.0 { -2.0 * PI } else { 2.0 * PI };
        worst_full = worst_full.max((arc / expect - 1.0).abs());
    }
    checks.push(CheckResult::within(
        "arc_full_wavelength",
        worst_full,
        0.0,
        cfg.full_arc_tolerance,
        "max |arc / 2pi - 1| for a one-wavelength path increase".into(),
    ));

    // A sixth of a wavelength, strong static component, random starting phase.
    let mut worst_sixth = 0.0f64;
    for _ in 0..cfg.scenes {
        let mut ch = random_channel(&mut rng, cfg.static_to_dynamic, lambda);
        let hs1 = ch.hs[0];
        ch.hs[0] = hs1 / hs1.norm() * cfg.static_to_dynamic * ch.a[0];
        let start = rng.random_range(0.0..lambda);
        let pts = ch.trace(start, lambda / 6.0, n / 6)?;
        let circle = fit_circle(&pts)?;
        let arc = arc_radian(&pts, &circle)?;
        worst_sixth = worst_sixth.max((arc.abs() / (PI / 3.0) - 1.0).abs());
    }
    checks.push(CheckResult::within(
        "arc_sixth_wavelength",
        worst_sixth,
        0.0,
        cfg.sixth_arc_tolerance,
        format!(
            "max |arc / (pi/3) - 1| over {} channels with |Hs|/A = {}",
            cfg.scenes, cfg.static_to_dynamic
        ),
    ));

    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    Ok(VerifyReport { passed, checks })
}
