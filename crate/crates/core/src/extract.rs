//! Respiration pattern extraction from a CSI-ratio series.
//!
//! The complex ratio is projected onto axes `[cos θ, sin θ]` over a fixed grid
//! of angles; each projection is scored by its breathing-to-noise ratio (BNR),
//! the energy of the strongest in-band FFT bin over the total non-DC energy.

use crate::csi::{ComplexSample, CsiRatioSeries};
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub const DEFAULT_SG_WINDOW: usize = 51;
pub const DEFAULT_SG_ORDER: usize = 3;
pub const DEFAULT_FFT_SIZE: usize = 8192;
pub const DEFAULT_THETA_STEP: f64 = PI / 50.0;
pub const ZERO_ENERGY: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("bad Savitzky-Golay parameters: {0}")]
    BadFilterParams(String),
    #[error("series has no energy outside DC")]
    ZeroEnergy,
    #[error("series of {len} samples exceeds FFT size {fft_size}")]
    TooLong { len: usize, fft_size: usize },
    #[error("band [{0}, {1}] bpm is not inside (0, Nyquist)")]
    BadBand(f64, f64),
    #[error("theta step must be in (0, 2π], got {0}")]
    BadThetaStep(f64),
    #[error("window of {seconds:.2} s is shorter than two periods at {min_bpm} bpm")]
    WindowTooShort { seconds: f64, min_bpm: f64 },
}

/// Respiration band in breaths per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BpmBand {
    pub min_bpm: f64,
    pub max_bpm: f64,
}

impl Default for BpmBand {
    fn default() -> Self {
        Self {
            min_bpm: 10.0,
            max_bpm: 37.0,
        }
    }
}

impl BpmBand {
    pub fn new(min_bpm: f64, max_bpm: f64) -> Self {
        Self { min_bpm, max_bpm }
    }

    pub fn contains(&self, bpm: f64) -> bool {
        bpm >= self.min_bpm && bpm <= self.max_bpm
    }

    fn validate(&self, fs: f64) -> Result<(), ExtractError> {
        if !(self.min_bpm > 0.0 && self.max_bpm > self.min_bpm && self.max_bpm < fs * 30.0) {
            return Err(ExtractError::BadBand(self.min_bpm, self.max_bpm));
        }
        Ok(())
    }

    /// Inclusive FFT bin range covered by the band.
    fn bins(&self, fs: f64, fft_size: usize) -> (usize, usize) {
        let per_bin = fs / fft_size as f64;
        let lo = ((self.min_bpm / 60.0) / per_bin).ceil().max(1.0) as usize;
        let hi = (((self.max_bpm / 60.0) / per_bin).floor() as usize).min(fft_size / 2);
        (lo, hi)
    }
}

// ---------------------------------------------------------------------------
// Savitzky-Golay

/// Least-squares polynomial smoothing weights for one window.
///
/// `rows[t]` are the weights producing the fitted value at window position `t`;
/// the interior uses the center row, the edges evaluate the boundary fit.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    rows: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self, ExtractError> {
        if window.is_multiple_of(2) {
            return Err(ExtractError::BadFilterParams(format!("window {window} must be odd")));
        }
        if order >= window {
            return Err(ExtractError::BadFilterParams(format!(
                "order {order} must be below window {window}"
            )));
        }
        let half = (window / 2) as f64;
        let x: Vec<f64> = (0..window)
            .map(|i| if half > 0.0 { (i as f64 - half) / half } else { 0.0 })
            .collect();
        // Orthonormal basis of the polynomial column space (modified Gram-Schmidt, twice).
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
        for p in 0..=order {
            let mut v: Vec<f64> = x.iter().map(|xi| xi.powi(p as i32)).collect();
            for _ in 0..2 {
                for q in &basis {
                    let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
        let rows = (0..window)
            .map(|t| (0..window).map(|j| basis.iter().map(|q| q[t] * q[j]).sum()).collect())
            .collect();
        Ok(Self { window, rows })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, ExtractError> {
        let w = self.window;
        let n = x.len();
        if n < w {
            return Err(ExtractError::BadFilterParams(format!(
                "series of {n} samples shorter than window {w}"
            )));
        }
        let half = w / 2;
        let dot = |row: &[f64], seg: &[f64]| row.iter().zip(seg).map(|(a, b)| a * b).sum::<f64>();
        let mut out = vec![0.0; n];
        let head = &x[..w];
        let tail = &x[n - w..];
        for i in 0..half {
            out[i] = dot(&self.rows[i], head);
            out[n - half + i] = dot(&self.rows[half + 1 + i], tail);
        }
        let center = &self.rows[half];
        for i in half..n - half {
            out[i] = dot(center, &x[i - half..i + half + 1]);
        }
        Ok(out)
    }
}

/// Savitzky-Golay smoothing of the real and imaginary parts independently.
pub fn smooth(series: &[ComplexSample], window: usize, order: usize) -> Result<Vec<ComplexSample>, ExtractError> {
    let sg = SavitzkyGolay::new(window, order)?;
    smooth_with(&sg, series)
}

pub fn smooth_with(sg: &SavitzkyGolay, series: &[ComplexSample]) -> Result<Vec<ComplexSample>, ExtractError> {
    let re: Vec<f64> = series.iter().map(|z| z.re).collect();
    let im: Vec<f64> = series.iter().map(|z| z.im).collect();
    let re = sg.apply(&re)?;
    let im = sg.apply(&im)?;
    Ok(re.into_iter().zip(im).map(|(a, b)| ComplexSample::new(a, b)).collect())
}

// ---------------------------------------------------------------------------
// Projection and BNR

/// `Re(x) cos θ + Im(x) sin θ`.
pub fn project(series: &[ComplexSample], theta: f64) -> Vec<f64> {
    project_axis(series, theta.cos(), theta.sin())
}

fn project_axis(series: &[ComplexSample], c: f64, s: f64) -> Vec<f64> {
    series.iter().map(|z| z.re * c + z.im * s).collect()
}

/// Projection axes for `θ ∈ {0, step, …}` below 2π. When the grid contains π,
/// the second half reuses the first half's axes negated so that
/// `axis(θ + π) = -axis(θ)` holds bit for bit.
pub fn theta_grid(step: f64) -> Result<Vec<(f64, f64, f64)>, ExtractError> {
    if !(step > 0.0 && step <= 2.0 * PI) {
        return Err(ExtractError::BadThetaStep(step));
    }
    let n = ((2.0 * PI / step) - 1e-9).ceil() as usize;
    let n = n.max(1);
    let symmetric = n.is_multiple_of(2) && ((n / 2) as f64 * step - PI).abs() < 1e-9;
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let theta = i as f64 * step;
        if symmetric && i >= n / 2 {
            let (_, c, s) = grid[i - n / 2];
            grid.push((theta, -c, -s));
        } else {
            grid.push((theta, theta.cos(), theta.sin()));
        }
    }
    Ok(grid)
}

thread_local! {
    static FFT_BUFFERS: RefCell<(Vec<Complex64>, Vec<Complex64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// FFT-based BNR evaluation with a reusable plan.
#[derive(Clone)]
pub struct BnrScorer {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    sample_rate: f64,
    band: BpmBand,
    bins: (usize, usize),
}

impl std::fmt::Debug for BnrScorer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BnrScorer")
            .field("fft_size", &self.fft_size)
            .field("sample_rate", &self.sample_rate)
            .field("band", &self.band)
            .finish()
    }
}

impl BnrScorer {
    pub fn new(sample_rate: f64, band: BpmBand, fft_size: usize) -> Result<Self, ExtractError> {
        band.validate(sample_rate)?;
        if fft_size < 4 {
            return Err(ExtractError::TooLong { len: 0, fft_size });
        }
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            fft,
            fft_size,
            sample_rate,
            band,
            bins: band.bins(sample_rate, fft_size),
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    /// Calls `f` with the zero-padded spectrum of the mean-removed series and
    /// the energy floor below which the series counts as constant
    /// (mean-removal roundoff). Buffers are reused per thread.
    fn with_spectrum<R>(
        &self,
        series: &[ComplexSample],
        f: impl FnOnce(&[Complex64], f64) -> R,
    ) -> Result<R, ExtractError> {
        if series.len() > self.fft_size {
            return Err(ExtractError::TooLong {
                len: series.len(),
                fft_size: self.fft_size,
            });
        }
        let n = series.len().max(1) as f64;
        let mean = series.iter().sum::<ComplexSample>() / n;
        let raw: f64 = series.iter().map(|z| z.norm_sqr()).sum();
        let floor = (1e-24 * self.fft_size as f64 * raw).max(ZERO_ENERGY);
        FFT_BUFFERS.with(|cell| {
            let (buf, scratch) = &mut *cell.borrow_mut();
            buf.clear();
            buf.extend(series.iter().map(|z| z - mean));
            buf.resize(self.fft_size, Complex64::new(0.0, 0.0));
            scratch.resize(self.fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
            self.fft.process_with_scratch(buf, scratch);
            Ok(f(buf, floor))
        })
    }

    fn ratio(&self, floor: f64, energy: impl Fn(usize) -> f64) -> Result<f64, ExtractError> {
        let (lo, hi) = self.bins;
        let mut total = 0.0;
        let mut peak = 0.0f64;
        for k in 1..=self.fft_size / 2 {
            let e = energy(k);
            total += e;
            if k >= lo && k <= hi {
                peak = peak.max(e);
            }
        }
        if !(total >= floor) {
            return Err(ExtractError::ZeroEnergy);
        }
        Ok(peak / total)
    }

    /// BNR of a real series.
    pub fn score(&self, series: &[f64]) -> Result<f64, ExtractError> {
        let as_complex: Vec<ComplexSample> = series.iter().map(|&x| ComplexSample::new(x, 0.0)).collect();
        self.with_spectrum(&as_complex, |spec, floor| self.ratio(floor, |k| spec[k].norm_sqr()))?
    }

    /// BNR of every projection in `grid`, sharing one FFT of the complex series.
    ///
    /// Relies on linearity: the projection's spectrum is
    /// `cos θ · F[Re x] + sin θ · F[Im x]`, and both real-signal spectra are
    /// recovered from the single complex FFT by conjugate symmetry. The total
    /// energy is a quadratic form in `(cos θ, sin θ)` whose coefficients come
    /// from time-domain sums, so only in-band bins are visited per angle.
    pub fn scan(
        &self,
        series: &[ComplexSample],
        grid: &[(f64, f64, f64)],
    ) -> Result<Vec<Result<f64, ExtractError>>, ExtractError> {
        self.with_spectrum(series, |z, floor| self.scan_spectrum(series, z, floor, grid))
    }

    fn scan_spectrum(
        &self,
        series: &[ComplexSample],
        z: &[Complex64],
        floor: f64,
        grid: &[(f64, f64, f64)],
    ) -> Vec<Result<f64, ExtractError>> {
        let n = self.fft_size;
        let (lo, hi) = self.bins;
        let split = |k: usize| {
            let a = z[k];
            let b = z[(n - k) % n].conj();
            ((a + b) * 0.5, (a - b) * Complex64::new(0.0, -0.5))
        };
        // Energy over bins 1..=N/2 by Parseval: half the full-circle energy,
        // minus the DC bin, plus the unpaired Nyquist bin.
        let (r0, i0) = split(0);
        let (rn, inq) = split(n / 2);
        let mean = series.iter().sum::<ComplexSample>() / series.len().max(1) as f64;
        let (mut srr, mut sii, mut sri) = (0.0, 0.0, 0.0);
        for v in series {
            let d = v - mean;
            srr += d.re * d.re;
            sii += d.im * d.im;
            sri += d.re * d.im;
        }
        let nf = n as f64;
        let rr = (nf * srr - r0.norm_sqr() + rn.norm_sqr()) / 2.0;
        let ii = (nf * sii - i0.norm_sqr() + inq.norm_sqr()) / 2.0;
        let ri = (nf * sri - (r0 * i0.conj()).re + (rn * inq.conj()).re) / 2.0;
        let (re_spec, im_spec): (Vec<_>, Vec<_>) = (0..=hi).map(split).unzip();
        let score = |c: f64, s: f64| {
            let total = c * c * rr + s * s * ii + 2.0 * c * s * ri;
            if !(total >= floor) {
                return Err(ExtractError::ZeroEnergy);
            }
            let peak = (lo..=hi)
                .map(|k| (re_spec[k] * c + im_spec[k] * s).norm_sqr())
                .fold(0.0f64, f64::max);
            Ok(peak / total)
        };
        // An axis that is the exact negation of the one half a grid earlier has
        // the same score bit for bit.
        let half = grid.len() / 2;
        let mut out: Vec<Result<f64, ExtractError>> = Vec::with_capacity(grid.len());
        for (i, &(_, c, s)) in grid.iter().enumerate() {
            let mirrored = i >= half && half > 0 && {
                let (_, pc, ps) = grid[i - half];
                pc == -c && ps == -s
            };
            let r = if mirrored { out[i - half].clone() } else { score(c, s) };
            out.push(r);
        }
        out
    }
}

/// Breathing-to-noise ratio of a real series; see [`BnrScorer`].
pub fn bnr(series: &[f64], fs: f64, band: BpmBand, fft_size: usize) -> Result<f64, ExtractError> {
    BnrScorer::new(fs, band, fft_size)?.score(series)
}

// ---------------------------------------------------------------------------
// Candidate selection

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Maximal BNR over the θ grid.
    #[default]
    Bnr,
    /// Maximal variance over the θ grid.
    Variance,
    /// Real part only.
    FixedI,
    /// Imaginary part only.
    FixedQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCandidate {
    pub theta: f64,
    pub series: Vec<f64>,
    pub bnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionResult {
    pub best: ProjectionCandidate,
    /// `(θ, score)` for every evaluated axis; the score is the selection criterion.
    pub scores: Vec<(f64, f64)>,
    pub subcarrier: usize,
    pub selection: Selection,
    /// Set when every candidate was flat and θ = 0 was returned by default.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct Extractor {
    scorer: BnrScorer,
    grid: Vec<(f64, f64, f64)>,
}

impl Extractor {
    pub fn new(sample_rate: f64, band: BpmBand, fft_size: usize, theta_step: f64) -> Result<Self, ExtractError> {
        Ok(Self {
            scorer: BnrScorer::new(sample_rate, band, fft_size)?,
            grid: theta_grid(theta_step)?,
        })
    }

    pub fn scorer(&self) -> &BnrScorer {
        &self.scorer
    }

    pub fn grid(&self) -> &[(f64, f64, f64)] {
        &self.grid
    }

    fn check_window(&self, ratio: &CsiRatioSeries) -> Result<(), ExtractError> {
        let seconds = ratio.duration();
        let min_bpm = self.scorer.band.min_bpm;
        if seconds + 1e-9 < 2.0 * 60.0 / min_bpm {
            return Err(ExtractError::WindowTooShort { seconds, min_bpm });
        }
        Ok(())
    }

    pub fn select(&self, ratio: &CsiRatioSeries, selection: Selection) -> Result<ExtractionResult, ExtractError> {
        match selection {
            Selection::Bnr => self.extract_pattern(ratio),
            Selection::Variance => self.select_by_variance(ratio),
            Selection::FixedI => self.fixed(ratio, 0.0, selection),
            Selection::FixedQ => self.fixed(ratio, PI / 2.0, selection),
        }
    }

    /// Max-BNR projection over the θ grid; ties go to the smallest θ.
    pub fn extract_pattern(&self, ratio: &CsiRatioSeries) -> Result<ExtractionResult, ExtractError> {
        self.check_window(ratio)?;
        let results = self.scorer.scan(&ratio.samples, &self.grid)?;
        let mut scores = Vec::with_capacity(results.len());
        let mut best: Option<(usize, f64)> = None;
        for (i, r) in results.iter().enumerate() {
            if let Ok(b) = *r {
                scores.push((self.grid[i].0, b));
                if best.is_none_or(|(_, bb)| b > bb) {
                    best = Some((i, b));
                }
            }
        }
        let (i, b) = best.ok_or(ExtractError::ZeroEnergy)?;
        let (theta, c, s) = self.grid[i];
        Ok(ExtractionResult {
            best: ProjectionCandidate {
                theta,
                series: project_axis(&ratio.samples, c, s),
                bnr: b,
            },
            scores,
            subcarrier: ratio.subcarrier,
            selection: Selection::Bnr,
            degenerate: false,
        })
    }

    /// Max-variance projection over the θ grid, the conventional baseline.
    pub fn select_by_variance(&self, ratio: &CsiRatioSeries) -> Result<ExtractionResult, ExtractError> {
        self.check_window(ratio)?;
        let n = ratio.len().max(1) as f64;
        let mean = ratio.samples.iter().sum::<ComplexSample>() / n;
        let (vrr, vii, vri) = ratio.samples.iter().fold((0.0, 0.0, 0.0), |(a, b, c), z| {
            let d = z - mean;
            (a + d.re * d.re, b + d.im * d.im, c + d.re * d.im)
        });
        let scores: Vec<(f64, f64)> = self
            .grid
            .iter()
            .map(|&(t, c, s)| (t, (c * c * vrr + s * s * vii + 2.0 * c * s * vri) / n))
            .collect();
        let mut best = 0;
        for (i, &(_, v)) in scores.iter().enumerate() {
            if v > scores[best].1 {
                best = i;
            }
        }
        let scale = (vrr + vii) / n;
        let degenerate = !(scores[best].1 > 1e-24 * scale.max(1e-300)) || scale == 0.0;
        let (theta, c, s) = if degenerate { self.grid[0] } else { self.grid[best] };
        let series = project_axis(&ratio.samples, c, s);
        let bnr = self.scorer.score(&series).unwrap_or(0.0);
        Ok(ExtractionResult {
            best: ProjectionCandidate { theta, series, bnr },
            scores,
            subcarrier: ratio.subcarrier,
            selection: Selection::Variance,
            degenerate,
        })
    }

    fn fixed(
        &self,
        ratio: &CsiRatioSeries,
        theta: f64,
        selection: Selection,
    ) -> Result<ExtractionResult, ExtractError> {
        self.check_window(ratio)?;
        let series = if theta == 0.0 {
            ratio.samples.iter().map(|z| z.re).collect()
        } else {
            ratio.samples.iter().map(|z| z.im).collect::<Vec<_>>()
        };
        let bnr = self.scorer.score(&series)?;
        Ok(ExtractionResult {
            best: ProjectionCandidate { theta, series, bnr },
            scores: vec![(theta, bnr)],
            subcarrier: ratio.subcarrier,
            selection,
            degenerate: false,
        })
    }
}

pub fn extract_pattern(
    ratio: &CsiRatioSeries,
    theta_step: f64,
    band: BpmBand,
    fft_size: usize,
) -> Result<ExtractionResult, ExtractError> {
    Extractor::new(ratio.sample_rate, band, fft_size, theta_step)?.extract_pattern(ratio)
}

pub fn select_by_variance(
    ratio: &CsiRatioSeries,
    theta_step: f64,
    band: BpmBand,
    fft_size: usize,
) -> Result<ExtractionResult, ExtractError> {
    Extractor::new(ratio.sample_rate, band, fft_size, theta_step)?.select_by_variance(ratio)
}
