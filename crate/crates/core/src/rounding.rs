//! Affine rounding into near-isotropic position.
//!
//! The fitted map is `z -> S^{-1/2} (z - mean)` where `mean` and `S` are the
//! sample mean and covariance. Small eigenvalues of `S` are floored at
//! `1e-10 * max_eig` so thin bodies still produce an invertible map.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::AffineMap;

pub const EIGEN_FLOOR: f64 = 1e-10;

/// Default rounding constant `alpha` in [`default_sample_count`].
pub const DEFAULT_ALPHA: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    /// `max(|1 - min_eig|, |max_eig - 1|)`.
    pub theta_hat: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub sample_count: usize,
}

impl IsotropyReport {
    /// Within the regime `theta < 1/2` where the sandwich bound applies.
    pub fn is_near_isotropic(&self) -> bool {
        self.theta_hat < 0.5
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedTransform {
    pub map: AffineMap,
    /// Some eigenvalues of the sample covariance were floored.
    pub floored: bool,
}

/// Smallest default sample count. The log factor is near 1 in low dimension,
/// which leaves too few points for a stable covariance fit.
pub const MIN_SAMPLE_COUNT: usize = 128;

/// `max(128, 4 (n+1), ceil(alpha (n+1) ln(n+2)^3))`.
pub fn default_sample_count(n: usize, alpha: f64) -> usize {
    let d = (n + 1) as f64;
    let logs = ((n + 2) as f64).ln().powi(3);
    let count = (alpha * d * logs).ceil() as usize;
    count.max(4 * (n + 1)).max(MIN_SAMPLE_COUNT)
}

pub fn mean_and_covariance(points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let count = points.len() as f64;
    let mean = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / count;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let c = p - &mean;
        cov += &c * c.transpose();
    }
    let denom = (points.len().max(2) - 1) as f64;
    (mean, cov / denom)
}

/// Fits the whitening map. Needs at least `d + 1` points in `R^d`.
pub fn fit_transform(points: &[DVector<f64>]) -> Result<FittedTransform> {
    let Some(first) = points.first() else {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    };
    let d = first.len();
    if points.len() < d + 1 {
        return Err(Error::TooFewSamples {
            needed: d + 1,
            got: points.len(),
        });
    }
    let (mean, cov) = mean_and_covariance(points);
    let eig = SymmetricEigen::new(cov);
    let max_eig = eig.eigenvalues.max();
    if !(max_eig > 0.0) || !max_eig.is_finite() {
        return Err(Error::DegenerateCovariance);
    }
    let floor = EIGEN_FLOOR * max_eig;
    let floored = eig.eigenvalues.iter().any(|&l| l < floor);
    let lambdas = eig.eigenvalues.map(|l| l.max(floor));
    let q = &eig.eigenvectors;
    let whiten = q * DMatrix::from_diagonal(&lambdas.map(|l| 1.0 / l.sqrt())) * q.transpose();
    let unwhiten = q * DMatrix::from_diagonal(&lambdas.map(f64::sqrt)) * q.transpose();
    let offset = -(&whiten * &mean);
    let map = AffineMap::from_parts(whiten, unwhiten, offset)?;
    Ok(FittedTransform { map, floored })
}

/// Spectrum of the covariance of `map(points)`. Use points held out from the
/// fit.
pub fn isotropy_report(points: &[DVector<f64>], map: &AffineMap) -> Result<IsotropyReport> {
    if points.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if points[0].len() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            got: points[0].len(),
        });
    }
    let mapped: Vec<DVector<f64>> = points.iter().map(|p| map.apply(p)).collect();
    let (_, cov) = mean_and_covariance(&mapped);
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let (min_eig, max_eig) = (eig.min(), eig.max());
    Ok(IsotropyReport {
        theta_hat: (1.0 - min_eig).abs().max((max_eig - 1.0).abs()),
        min_eig,
        max_eig,
        sample_count: points.len(),
    })
}

/// Upper bound `d / (2 - 4 theta)` on the ratio of a hyperplane section's
/// volume to the body's volume, for a body in `R^d` in theta-near isotropic
/// position with `theta < 1/2`.
pub fn cross_section_bound(ambient_dim: usize, theta: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&theta) {
        return Err(invalid("theta", format!("{theta} is outside [0, 1/2)")));
    }
    Ok(ambient_dim as f64 / (2.0 - 4.0 * theta))
}
