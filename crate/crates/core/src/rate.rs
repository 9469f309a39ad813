//! Respiration-rate estimation: per-subcarrier autocorrelation, BNR-weighted
//! fusion across subcarriers, first-peak readout and motion gating.

use crate::csi::{ratio_series, AntennaPair, CsiError, CsiFrame, CsiRatioSeries, DEFAULT_RATIO_FLOOR};
use crate::extract::{
    smooth_with, BpmBand, ExtractError, ExtractionResult, Extractor, SavitzkyGolay, Selection, DEFAULT_FFT_SIZE,
    DEFAULT_SG_ORDER, DEFAULT_SG_WINDOW, DEFAULT_THETA_STEP,
};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_GATE: f64 = 0.7;
pub const DEFAULT_PROMINENCE: f64 = 0.5;
pub const DEFAULT_WINDOW_S: f64 = 12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("autocorrelation needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("no qualifying autocorrelation peak")]
    NoPeak,
    #[error("window contains large motion")]
    NonStationary,
    #[error("gate must be in (0, 1], got {0}")]
    BadGate(f64),
    #[error("nothing to combine")]
    NoResults,
    #[error("autocorrelation lengths differ")]
    LengthMismatch,
    #[error("stream too short: {frames} frames, window needs {needed}")]
    StreamTooShort { frames: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Csi(#[from] CsiError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Normalized autocorrelation `r(k)`, `k = 0..T-1`, with `r(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrSeries {
    pub values: Vec<f64>,
    pub fs: f64,
}

/// Sample autocorrelation with the full-length normalizer:
/// `r(k) = Σ_{t≥k} (y_t - ȳ)(y_{t-k} - ȳ) / Σ_t (y_t - ȳ)²`.
pub fn autocorrelation(y: &[f64], fs: f64) -> Result<AutocorrSeries, RateError> {
    Autocorrelator::new(y.len()).compute(y, fs)
}

type Buffers = (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>);

thread_local! {
    static ACF_BUFFERS: RefCell<Buffers> = const { RefCell::new((Vec::new(), Vec::new(), Vec::new())) };
}

/// Autocorrelation with FFT plans cached for one series length.
///
/// Evaluated through a zero-padded FFT (padding ≥ 2T avoids circular wrap).
#[derive(Clone)]
pub struct Autocorrelator {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Autocorrelator {
    pub fn new(len: usize) -> Self {
        let n = (2 * len).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn compute(&self, y: &[f64], fs: f64) -> Result<AutocorrSeries, RateError> {
        if y.len() != self.len && y.len() >= 2 {
            return Self::new(y.len()).compute(y, fs);
        }
        let x = centered(y)?;
        Ok(self.transform(&x, None, fs).0)
    }

    /// Autocorrelations of several series, two per FFT pass where lengths allow.
    pub fn compute_many(&self, series: &[&[f64]], fs: f64) -> Vec<Result<AutocorrSeries, RateError>> {
        let mut out = Vec::with_capacity(series.len());
        for pair in series.chunks(2) {
            if let [a, b] = pair {
                if a.len() == self.len && b.len() == self.len {
                    if let (Ok(xa), Ok(xb)) = (centered(a), centered(b)) {
                        let (ra, rb) = self.transform(&xa, Some(&xb), fs);
                        out.push(Ok(ra));
                        out.push(Ok(rb.expect("second series was given")));
                        continue;
                    }
                }
            }
            out.extend(pair.iter().map(|y| self.compute(y, fs)));
        }
        out
    }

    /// Transforms `a + jb` once: the power spectra of the two real series
    /// separate by conjugate symmetry, and both are real and even, so a single
    /// inverse transform returns `acf(a) + j acf(b)`.
    fn transform(&self, a: &[f64], b: Option<&[f64]>, fs: f64) -> (AutocorrSeries, Option<AutocorrSeries>) {
        let n = self.forward.len();
        let t = a.len();
        ACF_BUFFERS.with(|cell| {
            let (buf, spec, scratch) = &mut *cell.borrow_mut();
            buf.clear();
            buf.resize(n, Complex64::new(0.0, 0.0));
            for (z, v) in buf.iter_mut().zip(a) {
                z.re = *v;
            }
            if let Some(b) = b {
                for (z, v) in buf.iter_mut().zip(b) {
                    z.im = *v;
                }
            }
            let scratch_len = self
                .forward
                .get_inplace_scratch_len()
                .max(self.inverse.get_inplace_scratch_len());
            scratch.resize(scratch_len, Complex64::new(0.0, 0.0));
            self.forward.process_with_scratch(buf, scratch);
            if b.is_some() {
                spec.clear();
                spec.extend_from_slice(buf);
                for (k, z) in buf.iter_mut().enumerate() {
                    let (x, w) = (spec[k], spec[if k == 0 { 0 } else { n - k }].conj());
                    *z = Complex64::new(((x + w) * 0.5).norm_sqr(), ((x - w) * 0.5).norm_sqr());
                }
            } else {
                for z in buf.iter_mut() {
                    *z = Complex64::new(z.norm_sqr(), 0.0);
                }
            }
            self.inverse.process_with_scratch(buf, scratch);
            let finish = |part: fn(&Complex64) -> f64| {
                let norm = part(&buf[0]);
                let mut values: Vec<f64> = buf[..t].iter().map(|z| part(z) / norm).collect();
                values[0] = 1.0;
                AutocorrSeries { values, fs }
            };
            (finish(|z| z.re), b.map(|_| finish(|z| z.im)))
        })
    }
}

fn centered(y: &[f64]) -> Result<Vec<f64>, RateError> {
    let t = y.len();
    if t < 2 {
        return Err(RateError::TooShort(t));
    }
    let mean = y.iter().sum::<f64>() / t as f64;
    let energy: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let scale: f64 = y.iter().map(|v| v * v).sum();
    if !(energy > 1e-24 * scale) {
        return Err(RateError::ZeroVariance);
    }
    Ok(y.iter().map(|v| v - mean).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSearch {
    pub min_lag: usize,
    pub max_lag: usize,
    pub prominence: f64,
}

impl PeakSearch {
    /// Lag range matching a bpm band: high rates give short lags.
    pub fn for_band(band: BpmBand, fs: f64, prominence: f64) -> Self {
        Self {
            min_lag: (60.0 * fs / band.max_bpm).floor() as usize,
            max_lag: (60.0 * fs / band.min_bpm).ceil() as usize,
            prominence,
        }
    }
}

/// Topographic prominence of the local maximum at `k`.
pub fn prominence(values: &[f64], k: usize) -> f64 {
    let h = values[k];
    let mut left_min = h;
    for &v in values[..k].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &values[k + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Smallest lag in `[min_lag, max_lag]` that is a local maximum with enough prominence.
pub fn first_peak_lag(r: &AutocorrSeries, search: &PeakSearch) -> Result<usize, RateError> {
    let v = &r.values;
    if v.len() < 3 {
        return Err(RateError::NoPeak);
    }
    let lo = search.min_lag.max(1);
    let hi = search.max_lag.min(v.len() - 2);
    (lo..=hi)
        .find(|&k| v[k] > v[k - 1] && v[k] >= v[k + 1] && prominence(v, k) >= search.prominence)
        .ok_or(RateError::NoPeak)
}

pub fn rate_from_lag(lag: usize, fs: f64) -> f64 {
    60.0 / (lag as f64 / fs)
}

/// BNR-weighted sum of autocorrelations over subcarriers whose BNR exceeds
/// `gate` times the best BNR. Output is renormalized to `r(0) = 1`.
///
/// Summation runs in subcarrier-index order so the result does not depend on
/// the order of `results`.
pub fn combine_subcarriers(
    results: &[(ExtractionResult, AutocorrSeries)],
    gate: f64,
) -> Result<(AutocorrSeries, Vec<usize>), RateError> {
    if !(gate > 0.0 && gate <= 1.0) {
        return Err(RateError::BadGate(gate));
    }
    let first = results.first().ok_or(RateError::NoResults)?;
    let len = first.1.values.len();
    if results.iter().any(|(_, r)| r.values.len() != len) {
        return Err(RateError::LengthMismatch);
    }
    let eps = results.iter().map(|(e, _)| e.best.bnr).fold(f64::MIN, f64::max);
    let mut chosen: Vec<&(ExtractionResult, AutocorrSeries)> = results
        .iter()
        .filter(|(e, _)| e.best.bnr > gate * eps || e.best.bnr == eps)
        .collect();
    chosen.sort_by(|a, b| {
        a.0.subcarrier
            .cmp(&b.0.subcarrier)
            .then(a.0.best.bnr.total_cmp(&b.0.best.bnr))
    });
    let uniform = !(eps > 0.0);
    let mut fused = vec![0.0; len];
    for (e, r) in &chosen {
        let w = if uniform { 1.0 } else { e.best.bnr };
        fused.iter_mut().zip(&r.values).for_each(|(f, v)| *f += w * v);
    }
    let norm = fused[0];
    fused.iter_mut().for_each(|f| *f /= norm);
    let subcarriers = chosen.iter().map(|(e, _)| e.subcarrier).collect();
    Ok((
        AutocorrSeries {
            values: fused,
            fs: first.1.fs,
        },
        subcarriers,
    ))
}

// ---------------------------------------------------------------------------
// Motion gating

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionGateConfig {
    pub window_s: f64,
    /// Energy above this frequency counts as non-respiratory.
    pub cutoff_hz: f64,
    /// Minimum share of detrended energy above the cutoff.
    pub fraction_threshold: f64,
    /// Above-cutoff power must also exceed this multiple of the stream's median window.
    pub power_ratio: f64,
}

impl Default for MotionGateConfig {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            cutoff_hz: 1.0,
            fraction_threshold: 0.5,
            power_ratio: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityMask {
    pub window_s: f64,
    /// Samples per gate window; the last window may be shorter.
    pub window_len: usize,
    pub labels: Vec<bool>,
}

impl StationarityMask {
    /// True when every gate window touching `[start, start + len)` is stationary.
    pub fn is_stationary(&self, start: usize, len: usize) -> bool {
        if len == 0 {
            return true;
        }
        let a = start / self.window_len;
        let b = (start + len - 1) / self.window_len;
        (a..=b.min(self.labels.len().saturating_sub(1))).all(|w| self.labels[w])
    }
}

/// Flags gate windows with strong energy above the respiration band.
///
/// Per window the complex ratio is linearly detrended and transformed; a window
/// is non-stationary when above-cutoff energy is both the majority share and
/// well above the stream's typical (median) above-cutoff power. White noise has a
/// large share but typical power, so it passes as stationary.
pub fn motion_gate(ratios: &[CsiRatioSeries], cfg: &MotionGateConfig) -> StationarityMask {
    let fs = ratios.first().map(|r| r.sample_rate).unwrap_or(1.0);
    let n = ratios.first().map(|r| r.len()).unwrap_or(0);
    let wlen = ((cfg.window_s * fs).round() as usize).max(2);
    let windows = n.div_ceil(wlen);
    let mut planner = FftPlanner::new();
    let mut stats = Vec::with_capacity(windows);
    for w in 0..windows {
        let start = w * wlen;
        let len = wlen.min(n - start);
        let fft = planner.plan_fft_forward(len);
        let (mut hi, mut total) = (0.0, 0.0);
        for r in ratios {
            let mut buf = detrend(&r.samples[start..start + len]);
            if len >= 2 {
                fft.process(&mut buf);
            }
            for (k, z) in buf.iter().enumerate().skip(1) {
                let f = k.min(len - k) as f64 * fs / len as f64;
                let e = z.norm_sqr();
                total += e;
                if f > cfg.cutoff_hz {
                    hi += e;
                }
            }
        }
        let power = hi / (len as f64 * len as f64);
        let fraction = if total > 0.0 { hi / total } else { 0.0 };
        stats.push((fraction, power));
    }
    let mut powers: Vec<f64> = stats.iter().map(|s| s.1).collect();
    powers.sort_by(f64::total_cmp);
    let floor = if powers.is_empty() {
        0.0
    } else {
        powers[powers.len() / 2]
    };
    let labels = stats
        .iter()
        .map(|&(fraction, power)| !(fraction > cfg.fraction_threshold && power > cfg.power_ratio * floor))
        .collect();
    StationarityMask {
        window_s: cfg.window_s,
        window_len: wlen,
        labels,
    }
}

/// Removes the least-squares line from a complex segment.
fn detrend(seg: &[Complex64]) -> Vec<Complex64> {
    let n = seg.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let mean = seg.iter().sum::<Complex64>() / n;
    let sxx: f64 = (0..seg.len()).map(|t| (t as f64 - tm).powi(2)).sum();
    let slope = if sxx > 0.0 {
        seg.iter()
            .enumerate()
            .map(|(t, z)| (z - mean) * (t as f64 - tm))
            .sum::<Complex64>()
            / sxx
    } else {
        Complex64::new(0.0, 0.0)
    };
    seg.iter()
        .enumerate()
        .map(|(t, z)| z - mean - slope * (t as f64 - tm))
        .collect()
}

// ---------------------------------------------------------------------------
// Streaming estimator

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub theta_step: f64,
    pub fft_size: usize,
    pub band: BpmBand,
    pub gate: f64,
    pub sg_window: usize,
    pub sg_order: usize,
    pub prominence: f64,
    /// Peaks are searched over the band widened by this many bpm on both sides;
    /// estimates outside the nominal band are flagged.
    pub lag_guard_bpm: f64,
    pub ratio_floor: f64,
    pub antenna_pair: AntennaPair,
    pub selection: Selection,
    pub motion: MotionGateConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            hop_s: 1.0,
            theta_step: DEFAULT_THETA_STEP,
            fft_size: DEFAULT_FFT_SIZE,
            band: BpmBand::default(),
            gate: DEFAULT_GATE,
            sg_window: DEFAULT_SG_WINDOW,
            sg_order: DEFAULT_SG_ORDER,
            prominence: DEFAULT_PROMINENCE,
            lag_guard_bpm: 0.5,
            ratio_floor: DEFAULT_RATIO_FLOOR,
            antenna_pair: AntennaPair::default(),
            selection: Selection::Bnr,
            motion: MotionGateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_bpm: f64,
    pub first_peak_lag: usize,
    pub contributing_subcarriers: Vec<usize>,
    pub per_subcarrier_bnr: BTreeMap<usize, f64>,
    pub stationary: bool,
    pub in_band: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    pub start_index: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub outcome: Result<RateEstimate, RateError>,
    /// Best-BNR subcarrier's pattern and the fused autocorrelation, when computed.
    pub pattern: Option<Vec<f64>>,
    pub fused: Option<AutocorrSeries>,
}

/// Preprocessed stream: smoothed ratios plus the stationarity mask.
#[derive(Debug, Clone)]
pub struct PreparedStream {
    pub ratios: Vec<CsiRatioSeries>,
    pub smoothed: Vec<CsiRatioSeries>,
    pub mask: StationarityMask,
    pub timestamps: Vec<f64>,
}

pub struct RateEstimator {
    cfg: EstimatorConfig,
    sample_rate: f64,
    extractor: Extractor,
    sg: SavitzkyGolay,
    search: PeakSearch,
    acf: Autocorrelator,
    window_len: usize,
    hop_len: usize,
}

impl RateEstimator {
    pub fn new(cfg: EstimatorConfig, sample_rate: f64) -> Result<Self, RateError> {
        if !(sample_rate > 0.0) {
            return Err(RateError::BadConfig(format!("sample rate {sample_rate}")));
        }
        if !(cfg.gate > 0.0 && cfg.gate <= 1.0) {
            return Err(RateError::BadGate(cfg.gate));
        }
        if !(cfg.window_s > 0.0 && cfg.hop_s > 0.0) {
            return Err(RateError::BadConfig("window and hop must be positive".into()));
        }
        if !(cfg.lag_guard_bpm >= 0.0 && cfg.lag_guard_bpm < cfg.band.min_bpm) {
            return Err(RateError::BadConfig(format!("lag guard {}", cfg.lag_guard_bpm)));
        }
        let extractor = Extractor::new(sample_rate, cfg.band, cfg.fft_size, cfg.theta_step)?;
        let sg = SavitzkyGolay::new(cfg.sg_window, cfg.sg_order)?;
        let search_band = BpmBand::new(
            cfg.band.min_bpm - cfg.lag_guard_bpm,
            cfg.band.max_bpm + cfg.lag_guard_bpm,
        );
        let search = PeakSearch::for_band(search_band, sample_rate, cfg.prominence);
        let window_len = (cfg.window_s * sample_rate).round() as usize;
        let hop_len = ((cfg.hop_s * sample_rate).round() as usize).max(1);
        Ok(Self {
            cfg,
            sample_rate,
            extractor,
            sg,
            search,
            acf: Autocorrelator::new(window_len),
            window_len,
            hop_len,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn peak_search(&self) -> PeakSearch {
        self.search
    }

    /// CSI ratio, motion gate and smoothing over the whole stream.
    pub fn prepare(&self, frames: &[CsiFrame]) -> Result<PreparedStream, RateError> {
        let ratios = ratio_series(frames, self.cfg.antenna_pair, self.sample_rate, self.cfg.ratio_floor)?;
        self.prepare_ratios(ratios, frames.iter().map(|f| f.timestamp).collect())
    }

    pub fn prepare_ratios(
        &self,
        ratios: Vec<CsiRatioSeries>,
        timestamps: Vec<f64>,
    ) -> Result<PreparedStream, RateError> {
        let n = timestamps.len();
        if n < self.window_len || n < self.sg.window() {
            return Err(RateError::StreamTooShort {
                frames: n,
                needed: self.window_len.max(self.sg.window()),
            });
        }
        let mask = motion_gate(&ratios, &self.cfg.motion);
        let smoothed = ratios
            .iter()
            .map(|r| {
                Ok(CsiRatioSeries {
                    subcarrier: r.subcarrier,
                    samples: smooth_with(&self.sg, &r.samples)?,
                    sample_rate: r.sample_rate,
                })
            })
            .collect::<Result<Vec<_>, ExtractError>>()?;
        Ok(PreparedStream {
            ratios,
            smoothed,
            mask,
            timestamps,
        })
    }

    /// Window start indices: every hop while a full window fits.
    pub fn window_starts(&self, frames: usize) -> Vec<usize> {
        if frames < self.window_len {
            return Vec::new();
        }
        (0..=(frames - self.window_len) / self.hop_len)
            .map(|i| i * self.hop_len)
            .collect()
    }

    /// Estimate for one window of a prepared stream.
    pub fn estimate_window(&self, stream: &PreparedStream, start: usize) -> WindowEstimate {
        let len = self.window_len;
        let mut est = WindowEstimate {
            start_index: start,
            start_time: stream.timestamps[start],
            end_time: stream.timestamps[start + len - 1],
            outcome: Err(RateError::NoPeak),
            pattern: None,
            fused: None,
        };
        if !stream.mask.is_stationary(start, len) {
            est.outcome = Err(RateError::NonStationary);
            return est;
        }
        let extracted: Vec<ExtractionResult> = stream
            .smoothed
            .iter()
            .filter_map(|series| {
                self.extractor
                    .select(&series.slice(start, len), self.cfg.selection)
                    .ok()
            })
            .collect();
        if extracted.is_empty() {
            return est;
        }
        let per_subcarrier_bnr: BTreeMap<usize, f64> = extracted.iter().map(|e| (e.subcarrier, e.best.bnr)).collect();
        if let Some(e) = extracted
            .iter()
            .max_by(|a, b| a.best.bnr.total_cmp(&b.best.bnr).then(b.subcarrier.cmp(&a.subcarrier)))
        {
            est.pattern = Some(e.best.series.clone());
        }
        // Only subcarriers that can pass the gate need an autocorrelation.
        let eps = extracted.iter().map(|e| e.best.bnr).fold(f64::MIN, f64::max);
        let gated: Vec<ExtractionResult> = extracted
            .into_iter()
            .filter(|e| e.best.bnr > self.cfg.gate * eps || e.best.bnr == eps)
            .collect();
        let patterns: Vec<&[f64]> = gated.iter().map(|e| e.best.series.as_slice()).collect();
        let acfs = self.acf.compute_many(&patterns, self.sample_rate);
        let results: Vec<(ExtractionResult, AutocorrSeries)> = gated
            .into_iter()
            .zip(acfs)
            .filter_map(|(e, r)| Some((e, r.ok()?)))
            .collect();
        if results.is_empty() {
            return est;
        }
        let (fused, subcarriers) = match combine_subcarriers(&results, self.cfg.gate) {
            Ok(v) => v,
            Err(e) => {
                est.outcome = Err(e);
                return est;
            }
        };
        est.outcome = first_peak_lag(&fused, &self.search).map(|lag| {
            let rate = rate_from_lag(lag, self.sample_rate);
            RateEstimate {
                rate_bpm: rate,
                first_peak_lag: lag,
                contributing_subcarriers: subcarriers,
                per_subcarrier_bnr,
                stationary: true,
                in_band: self.cfg.band.contains(rate),
            }
        });
        est.fused = Some(fused);
        est
    }

    pub fn estimate_prepared(&self, stream: &PreparedStream) -> Vec<WindowEstimate> {
        self.window_starts(stream.timestamps.len())
            .into_iter()
            .map(|s| self.estimate_window(stream, s))
            .collect()
    }

    pub fn estimate(&self, frames: &[CsiFrame]) -> Result<Vec<WindowEstimate>, RateError> {
        let stream = self.prepare(frames)?;
        Ok(self.estimate_prepared(&stream))
    }
}

/// One estimate per window, sliding by `hop_s`.
pub fn estimate_rate(
    frames: &[CsiFrame],
    sample_rate: f64,
    cfg: &EstimatorConfig,
) -> Result<Vec<WindowEstimate>, RateError> {
    RateEstimator::new(cfg.clone(), sample_rate)?.estimate(frames)
}
