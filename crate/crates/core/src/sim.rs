//! Parametric multipath channel simulator.
//!
//! Every antenna/subcarrier value is a static phasor plus one dynamic phasor
//! whose phase follows the chest-reflection path length:
//!
//! ```text
//! H(t) = offset(t) * impulse(t) * (H_s + A * exp(-j 2π d(t) / λ) + n(t))
//! ```
//!
//! `offset(t)` is a per-packet phase rotation shared by both antennas and
//! `impulse(t)` a per-packet amplitude spike, also shared. The second antenna
//! sees `d(t) + Δd` with `Δd` fixed from the geometry at rest.

use crate::csi::{ComplexSample, CsiFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const DEFAULT_CARRIER_HZ: f64 = 5.24e9;
pub const DEFAULT_SAMPLE_RATE: f64 = 100.0;

/// Human breathing rate range, breaths per minute.
pub const BREATHING_RATE_RANGE: (f64, f64) = (10.0, 37.0);
/// Chest excursion range (half of peak-to-peak), meters.
pub const CHEST_AMPLITUDE_RANGE: (f64, f64) = (0.005, 0.012);

const STREAM_NOISE: u64 = 1;
const STREAM_OFFSET: u64 = 2;
const STREAM_IMPULSE: u64 = 3;
const STREAM_SCENE: u64 = 4;

pub type Point3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("invalid motion event: {0}")]
    InvalidMotion(String),
}

pub fn wavelength(frequency: f64) -> f64 {
    SPEED_OF_LIGHT / frequency
}

/// Round-trip reflection path for a target on the perpendicular bisector of a
/// transceiver pair `los` meters apart, `perpendicular_offset` meters off the LoS.
pub fn reflection_path_length(los: f64, perpendicular_offset: f64) -> f64 {
    2.0 * ((los / 2.0).powi(2) + perpendicular_offset.powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    Sinusoid,
    /// Rising (inhale) segment takes `inhale_fraction` of each period.
    Asymmetric {
        inhale_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BreathingModel {
    pub rate_bpm: f64,
    /// Half the peak-to-peak chest excursion, meters.
    pub chest_amplitude: f64,
    pub waveform: Waveform,
    pub phase0: f64,
}

impl Default for BreathingModel {
    fn default() -> Self {
        Self {
            rate_bpm: 18.2,
            chest_amplitude: 0.005,
            waveform: Waveform::Sinusoid,
            phase0: 0.0,
        }
    }
}

impl BreathingModel {
    pub fn period(&self) -> f64 {
        60.0 / self.rate_bpm
    }

    pub fn displacement(&self, t: f64) -> f64 {
        breathing_displacement(t, self)
    }

    fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = BREATHING_RATE_RANGE;
        if !(lo..=hi).contains(&self.rate_bpm) {
            return Err(SimError::InvalidScene(format!(
                "breathing rate {} bpm outside [{lo}, {hi}]",
                self.rate_bpm
            )));
        }
        let (lo, hi) = CHEST_AMPLITUDE_RANGE;
        if !(lo..=hi).contains(&self.chest_amplitude) {
            return Err(SimError::InvalidScene(format!(
                "chest amplitude {} m outside [{lo}, {hi}]",
                self.chest_amplitude
            )));
        }
        if let Waveform::Asymmetric { inhale_fraction } = self.waveform {
            if !(inhale_fraction > 0.0 && inhale_fraction < 1.0) {
                return Err(SimError::InvalidScene(format!(
                    "inhale fraction {inhale_fraction} not in (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Chest displacement in meters, bounded by `±chest_amplitude`.
pub fn breathing_displacement(t: f64, model: &BreathingModel) -> f64 {
    let amp = model.chest_amplitude;
    match model.waveform {
        Waveform::Sinusoid => amp * (2.0 * PI * model.rate_bpm / 60.0 * t + model.phase0).sin(),
        Waveform::Asymmetric { inhale_fraction: f } => {
            // Cycle position shifted so the rising zero crossing sits at t = 0, like the sine.
            let u = t * model.rate_bpm / 60.0 + model.phase0 / (2.0 * PI) + f / 2.0;
            let v = u - u.floor();
            if v < f {
                -amp * (PI * v / f).cos()
            } else {
                amp * (PI * (v - f) / (1.0 - f)).cos()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOffset {
    #[default]
    None,
    UniformPerPacket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation of circular Gaussian noise, `E|n|^2 = sigma^2`.
    pub complex_noise_sigma: f64,
    /// Per-packet probability of an amplitude impulse.
    pub impulse_rate: f64,
    /// Amplitude multiplier applied on impulse packets.
    pub impulse_scale: f64,
    pub phase_offset: PhaseOffset,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            complex_noise_sigma: 0.0,
            impulse_rate: 0.0,
            impulse_scale: 1.0,
            phase_offset: PhaseOffset::None,
        }
    }
}

impl NoiseModel {
    pub fn silent() -> Self {
        Self::default()
    }

    /// Noise level giving `20 log10(amplitude / sigma) = snr_db`.
    pub fn sigma_for_snr(amplitude: f64, snr_db: f64) -> f64 {
        amplitude * 10f64.powf(-snr_db / 20.0)
    }
}

/// A large body movement: the target swings out by `displacement_amplitude`
/// and back over `[start, end]` with a raised-cosine profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEvent {
    pub start: f64,
    pub end: f64,
    pub displacement_amplitude: f64,
}

impl MotionEvent {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn displacement(&self, t: f64) -> f64 {
        if !self.contains(t) {
            return 0.0;
        }
        let phase = 2.0 * PI * (t - self.start) / (self.end - self.start);
        0.5 * self.displacement_amplitude * (1.0 - phase.cos())
    }
}

/// Static and dynamic path gains of one subcarrier, for antennas 1 and 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcarrierChannel {
    pub static_component: [ComplexSample; 2],
    pub dynamic_amplitude: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub tx_position: Point3,
    pub rx_antenna_positions: [Point3; 2],
    pub target_position: Point3,
    pub carrier_frequency: f64,
    /// Frequency step between reported subcarriers; 0 collapses them onto the carrier.
    pub subcarrier_spacing: f64,
    pub sample_rate: f64,
    pub channels: Vec<SubcarrierChannel>,
    pub breathing: BreathingModel,
    pub noise: NoiseModel,
}

/// Range-based scene description; the per-subcarrier gains are drawn from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub tx_position: Point3,
    pub rx_antenna_positions: [Point3; 2],
    pub target_position: Point3,
    pub carrier_frequency: f64,
    pub subcarrier_spacing: f64,
    pub subcarriers: usize,
    pub sample_rate: f64,
    /// `[min, max]` magnitude of the static component.
    pub static_magnitude: [f64; 2],
    /// `[min, max]` amplitude of the dynamic (chest) component.
    pub dynamic_amplitude: [f64; 2],
    pub breathing: BreathingModel,
    pub noise: NoiseModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            tx_position: [-2.0, 0.0, 0.0],
            rx_antenna_positions: [[2.0, 0.0, 0.0], [2.0, 0.0286, 0.0]],
            target_position: [0.0, 3.0, 0.0],
            carrier_frequency: DEFAULT_CARRIER_HZ,
            subcarrier_spacing: 625e3,
            subcarriers: crate::csi::DEFAULT_SUBCARRIERS,
            sample_rate: DEFAULT_SAMPLE_RATE,
            static_magnitude: [0.5, 1.5],
            dynamic_amplitude: [0.05, 0.15],
            breathing: BreathingModel::default(),
            noise: NoiseModel {
                complex_noise_sigma: 0.03,
                ..NoiseModel::default()
            },
        }
    }
}

impl SceneConfig {
    /// Draws per-subcarrier gains. Static phases are uniform; magnitudes uniform in their ranges.
    pub fn build(&self, seed: u64) -> Result<SimScene, SimError> {
        let mut rng = stream_rng(seed, STREAM_SCENE);
        let mut draw = |[lo, hi]: [f64; 2]| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let mut channels = Vec::with_capacity(self.subcarriers);
        for _ in 0..self.subcarriers {
            let mut static_component = [ComplexSample::new(0.0, 0.0); 2];
            let mut dynamic_amplitude = [0.0; 2];
            for ant in 0..2 {
                let mag = draw(self.static_magnitude);
                let ph = draw([0.0, 2.0 * PI]);
                static_component[ant] = ComplexSample::from_polar(mag, ph);
                dynamic_amplitude[ant] = draw(self.dynamic_amplitude);
            }
            channels.push(SubcarrierChannel {
                static_component,
                dynamic_amplitude,
            });
        }
        let scene = SimScene {
            tx_position: self.tx_position,
            rx_antenna_positions: self.rx_antenna_positions,
            target_position: self.target_position,
            carrier_frequency: self.carrier_frequency,
            subcarrier_spacing: self.subcarrier_spacing,
            sample_rate: self.sample_rate,
            channels,
            breathing: self.breathing,
            noise: self.noise,
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn dist(a: Point3, b: Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SimScene {
    pub fn wavelength(&self) -> f64 {
        wavelength(self.carrier_frequency)
    }

    pub fn subcarrier_frequency(&self, subcarrier: usize) -> f64 {
        let center = (self.channels.len() as f64 - 1.0) / 2.0;
        self.carrier_frequency + (subcarrier as f64 - center) * self.subcarrier_spacing
    }

    pub fn has_target(&self) -> bool {
        self.channels
            .iter()
            .any(|c| c.dynamic_amplitude.iter().any(|&a| a > 0.0))
    }

    /// Unit vector along which the chest moves: from the LoS midpoint to the target.
    pub fn motion_direction(&self) -> Point3 {
        let rx = self.rx_antenna_positions[0];
        let mid = [
            (self.tx_position[0] + rx[0]) / 2.0,
            (self.tx_position[1] + rx[1]) / 2.0,
            (self.tx_position[2] + rx[2]) / 2.0,
        ];
        let v = [
            self.target_position[0] - mid[0],
            self.target_position[1] - mid[1],
            self.target_position[2] - mid[2],
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    /// Exact reflection path to `antenna` with the chest displaced by `displacement` meters.
    pub fn path_length(&self, antenna: usize, displacement: f64) -> f64 {
        let n = self.motion_direction();
        let p = [
            self.target_position[0] + displacement * n[0],
            self.target_position[1] + displacement * n[1],
            self.target_position[2] + displacement * n[2],
        ];
        dist(self.tx_position, p) + dist(p, self.rx_antenna_positions[antenna])
    }

    /// Path difference between the two antennas at rest.
    pub fn delta_d(&self) -> f64 {
        self.path_length(1, 0.0) - self.path_length(0, 0.0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        if self.channels.is_empty() {
            return bad("no subcarriers".into());
        }
        if !(self.sample_rate > 0.0) || !(self.carrier_frequency > 0.0) {
            return bad("sample rate and carrier frequency must be positive".into());
        }
        for (k, c) in self.channels.iter().enumerate() {
            if c.dynamic_amplitude.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
                return bad(format!("subcarrier {k}: dynamic amplitude must be nonnegative"));
            }
            if c.static_component
                .iter()
                .any(|z| !(z.re.is_finite() && z.im.is_finite()))
            {
                return bad(format!("subcarrier {k}: non-finite static component"));
            }
        }
        let nm = &self.noise;
        if !(nm.complex_noise_sigma >= 0.0) || !(0.0..=1.0).contains(&nm.impulse_rate) || !(nm.impulse_scale >= 0.0) {
            return bad("noise parameters must be nonnegative (impulse rate <= 1)".into());
        }
        self.breathing.validate()?;

        let spacing = dist(self.rx_antenna_positions[0], self.rx_antenna_positions[1]);
        let range =
            dist(self.rx_antenna_positions[0], self.target_position).min(dist(self.tx_position, self.target_position));
        if !(spacing > 0.0) || spacing * 10.0 > range {
            return bad(format!(
                "antenna spacing {spacing} m is not small against target range {range} m"
            ));
        }
        // Δd is frozen at rest; its drift over the chest excursion must stay below λ/100.
        let lambda = self.wavelength();
        let d0 = self.delta_d();
        let amp = self.breathing.chest_amplitude;
        for i in 0..=20 {
            let x = -amp + 2.0 * amp * i as f64 / 20.0;
            let drift = (self.path_length(1, x) - self.path_length(0, x) - d0).abs();
            if drift > lambda / 100.0 {
                return bad(format!(
                    "path difference drifts {drift:.3e} m over the chest excursion (limit {:.3e})",
                    lambda / 100.0
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `None` when no dynamic path exists (no person in the scene).
    pub rate_bpm: Option<f64>,
    pub sample_rate: f64,
    /// Chest displacement per frame, breathing plus motion, meters.
    pub displacement: Vec<f64>,
    /// Per-frame label, false inside motion events.
    pub stationary: Vec<bool>,
    pub motion_events: Vec<MotionEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub frames: Vec<CsiFrame>,
    pub truth: GroundTruth,
}

fn validate_motion(events: &[MotionEvent], duration: f64) -> Result<(), SimError> {
    let mut sorted: Vec<_> = events.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    for (i, e) in sorted.iter().enumerate() {
        if !(e.end > e.start) || e.start < 0.0 || e.end > duration {
            return Err(SimError::InvalidMotion(format!(
                "event [{}, {}] not inside [0, {duration}]",
                e.start, e.end
            )));
        }
        if !(e.displacement_amplitude > 0.0) {
            return Err(SimError::InvalidMotion("displacement must be positive".into()));
        }
        if i > 0 && sorted[i - 1].end > e.start {
            return Err(SimError::InvalidMotion(format!("events overlap at {}", e.start)));
        }
    }
    Ok(())
}

/// Generates `round(duration * sample_rate)` frames with ground truth.
pub fn synthesize(
    scene: &SimScene,
    duration: f64,
    motion_events: &[MotionEvent],
    seed: u64,
) -> Result<Simulation, SimError> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(SimError::InvalidDuration(duration));
    }
    scene.validate()?;
    validate_motion(motion_events, duration)?;

    let n = (duration * scene.sample_rate).round() as usize;
    let times: Vec<f64> = (0..n).map(|i| i as f64 / scene.sample_rate).collect();
    let displacement: Vec<f64> = times
        .iter()
        .map(|&t| scene.breathing.displacement(t) + motion_events.iter().map(|e| e.displacement(t)).sum::<f64>())
        .collect();
    let stationary = times
        .iter()
        .map(|&t| !motion_events.iter().any(|e| e.contains(t)))
        .collect();
    let paths: Vec<f64> = displacement.iter().map(|&x| scene.path_length(0, x)).collect();
    let frames = render_paths(scene, &times, &paths, seed);
    let truth = GroundTruth {
        rate_bpm: scene.has_target().then_some(scene.breathing.rate_bpm),
        sample_rate: scene.sample_rate,
        displacement,
        stationary,
        motion_events: motion_events.to_vec(),
    };
    Ok(Simulation { frames, truth })
}

/// Renders frames for an explicit antenna-1 path-length trajectory.
///
/// Random draws come from independent streams (noise, phase offset, impulse)
/// and are consumed whether or not the corresponding effect is enabled, so
/// toggling one effect leaves the others' realizations unchanged.
pub fn render_paths(scene: &SimScene, times: &[f64], paths: &[f64], seed: u64) -> Vec<CsiFrame> {
    assert_eq!(times.len(), paths.len());
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut offset_rng = stream_rng(seed, STREAM_OFFSET);
    let mut impulse_rng = stream_rng(seed, STREAM_IMPULSE);

    let k = scene.channels.len();
    let lambdas: Vec<f64> = (0..k).map(|sc| wavelength(scene.subcarrier_frequency(sc))).collect();
    let delta_d = scene.delta_d();
    let nm = scene.noise;
    let per_axis = nm.complex_noise_sigma / 2f64.sqrt();

    times
        .iter()
        .zip(paths)
        .map(|(&t, &d1)| {
            let theta: f64 = offset_rng.random_range(0.0..2.0 * PI);
            let impulse_hit = impulse_rng.random::<f64>() < nm.impulse_rate;
            let mut common = ComplexSample::new(1.0, 0.0);
            if nm.phase_offset == PhaseOffset::UniformPerPacket {
                common = ComplexSample::from_polar(1.0, -theta);
            }
            if impulse_hit {
                common *= nm.impulse_scale;
            }
            let mut values = vec![ComplexSample::new(0.0, 0.0); 2 * k];
            for ant in 0..2 {
                let d = if ant == 0 { d1 } else { d1 + delta_d };
                for (sc, ch) in scene.channels.iter().enumerate() {
                    let nre: f64 = noise_rng.sample(StandardNormal);
                    let nim: f64 = noise_rng.sample(StandardNormal);
                    let dynamic = ComplexSample::from_polar(ch.dynamic_amplitude[ant], -2.0 * PI * d / lambdas[sc]);
                    let mut v = ch.static_component[ant] + dynamic;
                    if per_axis > 0.0 {
                        v += ComplexSample::new(nre * per_axis, nim * per_axis);
                    }
                    if common != ComplexSample::new(1.0, 0.0) {
                        v *= common;
                    }
                    values[ant * k + sc] = v;
                }
            }
            CsiFrame::new(t, 2, k, values).expect("simulated frame is well formed")
        })
        .collect()
}
