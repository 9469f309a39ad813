//! CSI containers and the antenna-ratio operation.
//!
//! Dividing the CSI of two antennas on the same card removes any per-packet
//! factor they share, most importantly the random phase offset introduced by
//! the unsynchronized transmitter/receiver oscillators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// One complex CSI value.
pub type ComplexSample = Complex64;

/// Default number of subcarriers reported per antenna.
pub const DEFAULT_SUBCARRIERS: usize = 30;

/// Default magnitude below which a denominator sample is treated as corrupt.
pub const DEFAULT_RATIO_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsiError {
    #[error("series length mismatch: numerator {numerator}, denominator {denominator}")]
    LengthMismatch { numerator: usize, denominator: usize },
    #[error("ratio floor must be positive and finite, got {0}")]
    InvalidFloor(f64),
    #[error("denominator magnitude {magnitude:e} below floor at sample {index}")]
    DenominatorUnderflow { index: usize, magnitude: f64 },
    #[error("non-finite CSI value at sample {0}")]
    NonFinite(usize),
    #[error("frame shape mismatch: expected {expected_antennas}x{expected_subcarriers}, got {antennas}x{subcarriers}")]
    ShapeMismatch {
        expected_antennas: usize,
        expected_subcarriers: usize,
        antennas: usize,
        subcarriers: usize,
    },
    #[error("timestamps not strictly increasing at frame {0}")]
    NonMonotonicTime(usize),
    #[error("antenna index {index} out of range for {antennas} antennas")]
    BadAntenna { index: usize, antennas: usize },
    #[error("need at least two antennas for a ratio, got {0}")]
    TooFewAntennas(usize),
}

/// A timestamped CSI snapshot, `values[antenna * subcarriers + subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub timestamp: f64,
    antennas: usize,
    subcarriers: usize,
    values: Vec<ComplexSample>,
}

impl CsiFrame {
    pub fn new(
        timestamp: f64,
        antennas: usize,
        subcarriers: usize,
        values: Vec<ComplexSample>,
    ) -> Result<Self, CsiError> {
        if values.len() != antennas * subcarriers {
            return Err(CsiError::ShapeMismatch {
                expected_antennas: antennas,
                expected_subcarriers: subcarriers,
                antennas: values.len() / subcarriers.max(1),
                subcarriers,
            });
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(CsiError::NonFinite(i));
        }
        Ok(Self {
            timestamp,
            antennas,
            subcarriers,
            values,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    /// Zero-based antenna and subcarrier.
    pub fn get(&self, antenna: usize, subcarrier: usize) -> ComplexSample {
        self.values[antenna * self.subcarriers + subcarrier]
    }

    pub fn antenna(&self, antenna: usize) -> &[ComplexSample] {
        &self.values[antenna * self.subcarriers..(antenna + 1) * self.subcarriers]
    }

    pub fn values(&self) -> &[ComplexSample] {
        &self.values
    }
}

/// Checks a frame stream for a consistent shape and strictly increasing time.
pub fn validate_stream(frames: &[CsiFrame]) -> Result<(), CsiError> {
    let Some(first) = frames.first() else {
        return Ok(());
    };
    for (i, f) in frames.iter().enumerate() {
        if f.antennas != first.antennas || f.subcarriers != first.subcarriers {
            return Err(CsiError::ShapeMismatch {
                expected_antennas: first.antennas,
                expected_subcarriers: first.subcarriers,
                antennas: f.antennas,
                subcarriers: f.subcarriers,
            });
        }
        if i > 0 && f.timestamp <= frames[i - 1].timestamp {
            return Err(CsiError::NonMonotonicTime(i));
        }
    }
    Ok(())
}

/// Time series of CSI ratios for one subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiRatioSeries {
    pub subcarrier: usize,
    pub samples: Vec<ComplexSample>,
    pub sample_rate: f64,
}

impl CsiRatioSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Sub-range `[start, start + len)` as a new series.
    pub fn slice(&self, start: usize, len: usize) -> CsiRatioSeries {
        CsiRatioSeries {
            subcarrier: self.subcarrier,
            samples: self.samples[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Which antenna goes on top of the ratio. Zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AntennaPair {
    pub numerator: usize,
    pub denominator: usize,
}

impl Default for AntennaPair {
    fn default() -> Self {
        Self {
            numerator: 0,
            denominator: 1,
        }
    }
}

/// Element-wise `numerator / denominator`.
pub fn csi_ratio(
    numerator: &[ComplexSample],
    denominator: &[ComplexSample],
    floor: f64,
) -> Result<Vec<ComplexSample>, CsiError> {
    if numerator.len() != denominator.len() {
        return Err(CsiError::LengthMismatch {
            numerator: numerator.len(),
            denominator: denominator.len(),
        });
    }
    if !(floor > 0.0 && floor.is_finite()) {
        return Err(CsiError::InvalidFloor(floor));
    }
    numerator
        .iter()
        .zip(denominator)
        .enumerate()
        .map(|(index, (n, d))| {
            let magnitude = d.norm();
            // NaN magnitudes fail this comparison too.
            if !(magnitude >= floor) {
                return Err(CsiError::DenominatorUnderflow { index, magnitude });
            }
            Ok(n / d)
        })
        .collect()
}

/// Builds one ratio series per subcarrier from a frame stream.
pub fn ratio_series(
    frames: &[CsiFrame],
    pair: AntennaPair,
    sample_rate: f64,
    floor: f64,
) -> Result<Vec<CsiRatioSeries>, CsiError> {
    validate_stream(frames)?;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let antennas = first.antennas;
    if antennas < 2 {
        return Err(CsiError::TooFewAntennas(antennas));
    }
    for index in [pair.numerator, pair.denominator] {
        if index >= antennas {
            return Err(CsiError::BadAntenna { index, antennas });
        }
    }
    (0..first.subcarriers)
        .map(|sc| {
            let num: Vec<_> = frames.iter().map(|f| f.get(pair.numerator, sc)).collect();
            let den: Vec<_> = frames.iter().map(|f| f.get(pair.denominator, sc)).collect();
            Ok(CsiRatioSeries {
                subcarrier: sc,
                samples: csi_ratio(&num, &den, floor)?,
                sample_rate,
            })
        })
        .collect()
}

pub fn amplitude(series: &[ComplexSample]) -> Vec<f64> {
    series.iter().map(|z| z.norm()).collect()
}

/// Unwrapped phase of a complex series.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedPhase {
    pub values: Vec<f64>,
    /// Indices of exactly-zero samples, whose phase is undefined and taken as 0.
    pub degenerate: Vec<usize>,
}

pub fn phase(series: &[ComplexSample]) -> UnwrappedPhase {
    let mut degenerate = Vec::new();
    let wrapped: Vec<f64> = series
        .iter()
        .enumerate()
        .map(|(i, z)| {
            if z.re == 0.0 && z.im == 0.0 {
                degenerate.push(i);
                0.0
            } else {
                z.im.atan2(z.re)
            }
        })
        .collect();
    UnwrappedPhase {
        values: unwrap(&wrapped),
        degenerate,
    }
}

/// Adds multiples of 2π so that consecutive differences lie in (−π, π].
pub fn unwrap(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    for (i, &p) in wrapped.iter().enumerate() {
        if i > 0 {
            let prev = wrapped[i - 1];
            let mut d = p - prev;
            let mut k = 0.0;
            while d > PI {
                d -= 2.0 * PI;
                k -= 1.0;
            }
            while d <= -PI {
                d += 2.0 * PI;
                k += 1.0;
            }
            offset += k * 2.0 * PI;
        }
        out.push(p + offset);
    }
    out
}
