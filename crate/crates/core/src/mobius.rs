//! Möbius-map geometry of the CSI ratio.
//!
//! With `Z = exp(-j 2π d(t) / λ)` the ratio of the two antennas' CSI is
//! `(A Z + B) / (C Z + D)` where `A, B` are antenna 1's dynamic gain and
//! static component and `C, D` antenna 2's (the former rotated by the
//! inter-antenna path difference). Circles map to circles, and the only step
//! that can flip the traversal direction is the inversion of `Z + D/C`.

use crate::csi::ComplexSample;
use std::f64::consts::PI;
use thiserror::Error;

/// `|C Z + D|` below this is treated as hitting the pole.
pub const POLE_TOLERANCE: f64 = 1e-12;
/// Relative signed-area threshold under which the orientation is indeterminate.
pub const ORIENTATION_TOLERANCE: f64 = 1e-6;
/// Points farther than this fraction of the radius from the circle are off-circle.
pub const ON_CIRCLE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate Möbius coefficients: BC - AD = 0")]
    DegenerateMap,
    #[error("pole hit: |Cz + D| = {0:e}")]
    PoleHit(f64),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("point {index} is {deviation:.3e} off the circle (radius {radius:.3e})")]
    OffCircle { index: usize, deviation: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobiusCoefficients {
    pub a: ComplexSample,
    pub b: ComplexSample,
    pub c: ComplexSample,
    pub d: ComplexSample,
}

impl MobiusCoefficients {
    pub fn new(a: ComplexSample, b: ComplexSample, c: ComplexSample, d: ComplexSample) -> Result<Self, GeometryError> {
        let coeffs = Self { a, b, c, d };
        if coeffs.determinant().norm() == 0.0 {
            return Err(GeometryError::DegenerateMap);
        }
        Ok(coeffs)
    }

    /// Coefficients of the CSI ratio for one subcarrier.
    pub fn from_channel(
        static_1: ComplexSample,
        dynamic_1: f64,
        static_2: ComplexSample,
        dynamic_2: f64,
        delta_d: f64,
        wavelength: f64,
    ) -> Result<Self, GeometryError> {
        let rot = ComplexSample::from_polar(1.0, -2.0 * PI * delta_d / wavelength);
        Self::new(ComplexSample::new(dynamic_1, 0.0), static_1, rot * dynamic_2, static_2)
    }

    /// `BC - AD`; zero means the map collapses to a constant.
    pub fn determinant(&self) -> ComplexSample {
        self.b * self.c - self.a * self.d
    }

    pub fn map(&self, z: ComplexSample) -> Result<ComplexSample, GeometryError> {
        mobius_map(self, z)
    }

    /// Same map through the translate / invert / scale-rotate / translate chain.
    /// Requires `C != 0`.
    pub fn map_decomposed(&self, z: ComplexSample) -> Result<ComplexSample, GeometryError> {
        if self.c.norm() == 0.0 {
            return Err(GeometryError::DegenerateInput("decomposition needs C != 0"));
        }
        let shifted = z + self.d / self.c;
        if (self.c * shifted).norm() < POLE_TOLERANCE {
            return Err(GeometryError::PoleHit((self.c * shifted).norm()));
        }
        let k = self.determinant() / (self.c * self.c);
        Ok(k * shifted.inv() + self.a / self.c)
    }

    /// Translation applied to the unit circle before inversion.
    pub fn inversion_offset(&self) -> ComplexSample {
        self.d / self.c
    }
}

pub fn mobius_map(coeffs: &MobiusCoefficients, z: ComplexSample) -> Result<ComplexSample, GeometryError> {
    let den = coeffs.c * z + coeffs.d;
    let mag = den.norm();
    if mag < POLE_TOLERANCE {
        return Err(GeometryError::PoleHit(mag));
    }
    Ok((coeffs.a * z + coeffs.b) / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedCircle {
    pub center: ComplexSample,
    pub radius: f64,
    pub rms_residual: f64,
}

impl FittedCircle {
    pub fn relative_residual(&self) -> f64 {
        self.rms_residual / self.radius
    }
}

/// Algebraic least-squares circle fit.
///
/// Minimizes `Σ (x² + y² + D x + E y + F)²` on centroid-shifted, scale-normalized
/// coordinates, then reports the geometric RMS distance to the fitted circle.
pub fn fit_circle(points: &[ComplexSample]) -> Result<FittedCircle, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateInput("need at least 3 points"));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<ComplexSample>() / n;
    let scale = (points.iter().map(|p| (p - centroid).norm_sqr()).sum::<f64>() / n).sqrt();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(GeometryError::DegenerateInput("points coincide"));
    }
    let q: Vec<ComplexSample> = points.iter().map(|p| (p - centroid) / scale).collect();

    // Collinearity: smallest eigenvalue of the 2x2 scatter matrix.
    let (sxx, syy, sxy) = q.iter().fold((0.0, 0.0, 0.0), |(a, b, c), p| {
        (a + p.re * p.re, b + p.im * p.im, c + p.re * p.im)
    });
    let tr = (sxx + syy) / n;
    let det = (sxx * syy - sxy * sxy) / (n * n);
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lmin = tr / 2.0 - disc;
    if lmin < 1e-10 * tr {
        return Err(GeometryError::DegenerateInput("points are collinear"));
    }

    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for p in &q {
        let row = [p.re, p.im, 1.0];
        let target = -(p.re * p.re + p.im * p.im);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * target;
        }
    }
    let [dd, ee, ff] = solve3(m, rhs).ok_or(GeometryError::DegenerateInput("singular fit"))?;
    let cq = ComplexSample::new(-dd / 2.0, -ee / 2.0);
    let r2 = cq.norm_sqr() - ff;
    if !(r2 > 0.0) {
        return Err(GeometryError::DegenerateInput("fit has no real radius"));
    }
    let center = centroid + cq * scale;
    let radius = r2.sqrt() * scale;
    let rms_residual = (points
        .iter()
        .map(|p| ((p - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FittedCircle {
        center,
        radius,
        rms_residual,
    })
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (v, p) in m[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Clockwise,
    Counterclockwise,
    Indeterminate,
}

/// Sum of triangle areas swept around `center`; negative for clockwise motion.
pub fn signed_area(points: &[ComplexSample], center: ComplexSample) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let a = w[0] - center;
            let b = w[1] - center;
            0.5 * (a.re * b.im - a.im * b.re)
        })
        .sum()
}

pub fn rotation_orientation(points: &[ComplexSample]) -> Result<Orientation, GeometryError> {
    let circle = fit_circle(points)?;
    let area = signed_area(points, circle.center);
    Ok(if area.abs() < ORIENTATION_TOLERANCE * circle.radius * circle.radius {
        Orientation::Indeterminate
    } else if area < 0.0 {
        Orientation::Clockwise
    } else {
        Orientation::Counterclockwise
    })
}

/// Net angle swept around the circle center, clockwise negative.
pub fn arc_radian(points: &[ComplexSample], circle: &FittedCircle) -> Result<f64, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::DegenerateInput("need at least 2 points"));
    }
    for (index, p) in points.iter().enumerate() {
        let deviation = ((p - circle.center).norm() - circle.radius).abs();
        if deviation > ON_CIRCLE_TOLERANCE * circle.radius {
            return Err(GeometryError::OffCircle {
                index,
                deviation,
                radius: circle.radius,
            });
        }
    }
    let angles: Vec<f64> = points
        .iter()
        .map(|p| {
            let v = p - circle.center;
            v.im.atan2(v.re)
        })
        .collect();
    let unwrapped = crate::csi::unwrap(&angles);
    Ok(unwrapped[unwrapped.len() - 1] - unwrapped[0])
}

/// `n + 1` samples of the unit phasor as the path grows by `path_change`,
/// i.e. the clockwise `Z` trajectory.
pub fn path_phasor(path_change: f64, wavelength: f64, n: usize) -> Vec<ComplexSample> {
    (0..=n)
        .map(|i| {
            let d = path_change * i as f64 / n as f64;
            ComplexSample::from_polar(1.0, -2.0 * PI * d / wavelength)
        })
        .collect()
}
