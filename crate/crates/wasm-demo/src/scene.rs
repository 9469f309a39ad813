//! Target-independent core of the demo, so it can be tested natively.

use csi_breath::csi::CsiRatioSeries;
use csi_breath::extract::Extractor;
use csi_breath::mobius::{fit_circle, rotation_orientation, Orientation};
use csi_breath::rate::{EstimatorConfig, PreparedStream, RateEstimator};
use csi_breath::sim::{synthesize, NoiseModel, SceneConfig};
use serde_json::json;

pub struct Scene {
    estimator: RateEstimator,
    cfg: EstimatorConfig,
    sample_rate: f64,
    stream: PreparedStream,
}

impl Scene {
    /// One estimation window of a simulated person breathing at `rate_bpm`.
    pub fn simulate(rate_bpm: f64, chest_mm: f64, snr_db: f64, seed: u64) -> Result<Self, String> {
        let mut scene = SceneConfig::default();
        scene.breathing.rate_bpm = rate_bpm;
        scene.breathing.chest_amplitude = chest_mm * 1e-3;
        let mean_amplitude = 0.5 * (scene.dynamic_amplitude[0] + scene.dynamic_amplitude[1]);
        scene.noise.complex_noise_sigma = NoiseModel::sigma_for_snr(mean_amplitude, snr_db);
        let cfg = EstimatorConfig::default();
        let sim = synthesize(&scene.build(seed).map_err(err)?, cfg.window_s, &[], seed).map_err(err)?;
        let estimator = RateEstimator::new(cfg.clone(), scene.sample_rate).map_err(err)?;
        let stream = estimator.prepare(&sim.frames).map_err(err)?;
        Ok(Self {
            estimator,
            cfg,
            sample_rate: scene.sample_rate,
            stream,
        })
    }

    pub fn subcarriers(&self) -> usize {
        self.stream.smoothed.len()
    }

    fn series(&self, k: usize) -> Result<&CsiRatioSeries, String> {
        self.stream
            .smoothed
            .get(k)
            .ok_or_else(|| format!("subcarrier {k} out of range 0..{}", self.subcarriers()))
    }

    /// Smoothed ratio of subcarrier `k` as interleaved `re, im` pairs.
    pub fn locus(&self, k: usize) -> Result<Vec<f64>, String> {
        Ok(self.series(k)?.samples.iter().flat_map(|z| [z.re, z.im]).collect())
    }

    /// Fitted circle `[cx, cy, r, relative residual, +1 clockwise, -1 counterclockwise, 0 undecided]`.
    pub fn circle(&self, k: usize) -> Result<Vec<f64>, String> {
        let points = &self.series(k)?.samples;
        let c = fit_circle(points).map_err(err)?;
        let turn = match rotation_orientation(points).map_err(err)? {
            Orientation::Clockwise => 1.0,
            Orientation::Counterclockwise => -1.0,
            Orientation::Indeterminate => 0.0,
        };
        Ok(vec![c.center.re, c.center.im, c.radius, c.relative_residual(), turn])
    }

    /// BNR over the projection grid as interleaved `θ, bnr` pairs; flat axes score 0.
    pub fn bnr_scan(&self, k: usize, theta_step: f64) -> Result<Vec<f64>, String> {
        let extractor = Extractor::new(self.sample_rate, self.cfg.band, self.cfg.fft_size, theta_step).map_err(err)?;
        let scores = extractor
            .scorer()
            .scan(&self.series(k)?.samples, extractor.grid())
            .map_err(err)?;
        Ok(extractor
            .grid()
            .iter()
            .zip(scores)
            .flat_map(|(&(theta, _, _), s)| [theta, s.unwrap_or(0.0)])
            .collect())
    }

    /// Rate estimate over the window as JSON, including the fused autocorrelation.
    pub fn estimate(&self) -> String {
        let w = self.estimator.estimate_window(&self.stream, 0);
        let acf = w.fused.as_ref().map(|a| a.values.clone());
        match w.outcome {
            Ok(e) => json!({
                "rate_bpm": e.rate_bpm,
                "lag": e.first_peak_lag,
                "in_band": e.in_band,
                "subcarriers": e.contributing_subcarriers,
                "autocorrelation": acf,
            }),
            Err(e) => json!({ "error": e.to_string(), "autocorrelation": acf }),
        }
        .to_string()
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}
