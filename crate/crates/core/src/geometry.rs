//! Lifted points, affine maps and epigraph bodies in `R^{n+1}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::TestFunction;

/// A point `(x, y)` of `R^{n+1}`; `y` is always the last coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

impl LiftedPoint {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }

    /// Splits a vector of length `n + 1` into `(x, y)`.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len() - 1;
        Self {
            x: v.as_slice()[..n].to_vec(),
            y: v[n],
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.x.len() + 1);
        v.as_mut_slice()[..self.x.len()].copy_from_slice(&self.x);
        v[self.x.len()] = self.y;
        v
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Signed vertical gap `y - f(x)`: positive above the graph, negative below.
pub fn vertical_gap(p: &LiftedPoint, f: &TestFunction) -> f64 {
    p.y - f.evaluate(&p.x)
}

const SINGULAR_TOL: f64 = 1e-12;

/// `z -> A z + b` with `A^{-1}` cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    inverse: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_shape(&linear, &offset)?;
        check_determinant(&linear)?;
        let inverse = linear.clone().try_inverse().ok_or(Error::Singular(0.0))?;
        Ok(Self {
            linear,
            inverse,
            offset,
        })
    }

    /// Builds a map whose inverse is already known, e.g. from an
    /// eigendecomposition. The pair is checked against each other.
    pub fn from_parts(
        linear: DMatrix<f64>,
        inverse: DMatrix<f64>,
        offset: DVector<f64>,
    ) -> Result<Self> {
        check_shape(&linear, &offset)?;
        check_shape(&inverse, &offset)?;
        let d = linear.nrows();
        let residual = (&linear * &inverse - DMatrix::identity(d, d)).amax();
        if !(residual <= 1e-8) {
            return Err(Error::Singular(residual));
        }
        Ok(Self {
            linear,
            inverse,
            offset,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            linear: DMatrix::identity(dim, dim),
            inverse: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    /// Uniform scaling `z -> s z`.
    pub fn scaling(dim: usize, s: f64) -> Result<Self> {
        if !(s.is_finite() && s != 0.0) {
            return Err(invalid("scale", format!("{s}")));
        }
        Ok(Self {
            linear: DMatrix::identity(dim, dim) * s,
            inverse: DMatrix::identity(dim, dim) / s,
            offset: DVector::zeros(dim),
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn inverse_linear(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.linear * p + &self.offset
    }

    pub fn unapply(&self, q: &DVector<f64>) -> DVector<f64> {
        &self.inverse * (q - &self.offset)
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        AffineMap {
            linear: &self.linear * &inner.linear,
            inverse: &inner.inverse * &self.inverse,
            offset: &self.linear * &inner.offset + &self.offset,
        }
    }

    /// Length of the image of the unit vertical vector `e_{n+1}`; the factor
    /// relating vertical gaps before and after the map.
    pub fn vertical_scale(&self) -> f64 {
        let d = self.dim();
        self.linear.column(d - 1).norm()
    }
}

fn check_shape(linear: &DMatrix<f64>, offset: &DVector<f64>) -> Result<()> {
    if !linear.is_square() || linear.nrows() != offset.len() || offset.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: offset.len(),
            got: linear.nrows(),
        });
    }
    Ok(())
}

fn check_determinant(linear: &DMatrix<f64>) -> Result<()> {
    let d = linear.nrows() as i32;
    let scale = linear.amax();
    let det = linear.determinant();
    let relative = if scale > 0.0 {
        det.abs() / scale.powi(d)
    } else {
        0.0
    };
    if !(relative >= SINGULAR_TOL) {
        return Err(Error::Singular(relative));
    }
    Ok(())
}

/// `K_t = {(x, y): f(x) <= y <= C_t, |x|_inf <= h}`.
///
/// Only the cube and ceiling constraints are stored here; the graph
/// constraint needs the function and is checked by the caller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpigraphBody {
    pub dim: usize,
    pub ceiling: f64,
    pub halfwidth: f64,
}

impl EpigraphBody {
    pub fn new(dim: usize, ceiling: f64, halfwidth: f64) -> Self {
        Self {
            dim,
            ceiling,
            halfwidth,
        }
    }

    pub fn for_function(f: &TestFunction, ceiling: f64) -> Self {
        Self::new(f.dim, ceiling, f.halfwidth)
    }

    pub fn in_cube(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.halfwidth)
    }

    pub fn below_ceiling(&self, y: f64) -> bool {
        y <= self.ceiling
    }

    /// Cube and ceiling checks; exact and free of oracle cost.
    pub fn passes_box_and_ceiling(&self, p: &LiftedPoint) -> bool {
        self.in_cube(&p.x) && self.below_ceiling(p.y)
    }

    /// A copy with a strictly lower ceiling.
    pub fn lowered(&self, level: f64) -> Result<Self> {
        if !(level < self.ceiling) {
            return Err(invalid(
                "level",
                format!("{level} does not lie below the ceiling {}", self.ceiling),
            ));
        }
        Ok(Self {
            ceiling: level,
            ..*self
        })
    }
}

/// Noiseless membership in `K_t`, for tests and diagnostics.
pub fn exact_membership(p: &LiftedPoint, body: &EpigraphBody, f: &TestFunction) -> bool {
    body.passes_box_and_ceiling(p) && f.evaluate(&p.x) <= p.y
}

/// Bodies whose volume and centroid are known in closed form.
///
/// * `Triangle2d`: `|x| <= y <= 1/2`, `x ∈ [-1/2, 1/2]`. Area 1/4, centroid (0, 1/3).
/// * `Parabola2d`: `x^2 <= y <= 1/4`, `x ∈ [-1/2, 1/2]`. Area 1/6, centroid (0, 3/20).
/// * `Box { dim }`: the cube `[-1/2, 1/2]^dim`. Volume 1, centroid 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalyticBody {
    Triangle2d,
    Parabola2d,
    Box { dim: usize },
}

impl AnalyticBody {
    /// `triangle2d`, `parabola2d`, `square` (= `box2`) or `box<N>`.
    pub fn from_name(name: &str) -> Result<Self> {
        let body = match name {
            "triangle2d" => Self::Triangle2d,
            "parabola2d" => Self::Parabola2d,
            "square" => Self::Box { dim: 2 },
            other => {
                let dim = other
                    .strip_prefix("box")
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::UnsupportedBody(other.to_string()))?;
                Self::Box { dim }
            }
        };
        Ok(body)
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Triangle2d | Self::Parabola2d => 2,
            Self::Box { dim } => *dim,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let in_unit_box = p.iter().all(|v| v.abs() <= 0.5);
        match self {
            Self::Triangle2d => in_unit_box && p[0].abs() <= p[1],
            Self::Parabola2d => in_unit_box && p[0] * p[0] <= p[1] && p[1] <= 0.25,
            Self::Box { .. } => in_unit_box,
        }
    }

    pub fn exact_volume(&self) -> f64 {
        match self {
            Self::Triangle2d => 0.25,
            Self::Parabola2d => 1.0 / 6.0,
            Self::Box { .. } => 1.0,
        }
    }

    pub fn exact_centroid(&self) -> Vec<f64> {
        match self {
            Self::Triangle2d => vec![0.0, 1.0 / 3.0],
            Self::Parabola2d => vec![0.0, 0.15],
            Self::Box { dim } => vec![0.0; *dim],
        }
    }

    /// Exact uniform draw by rejection from the bounding box.
    pub fn sample_exact<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.ambient_dim();
        let (lo, hi) = match self {
            Self::Triangle2d => (0.0, 0.5),
            Self::Parabola2d => (0.0, 0.25),
            Self::Box { .. } => (-0.5, 0.5),
        };
        loop {
            let mut p: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..=0.5)).collect();
            p[d - 1] = rng.random_range(lo..=hi);
            if self.contains(&p) {
                return DVector::from_vec(p);
            }
        }
    }
}

/// Last-coordinate centroid of an analytic body and the exact fraction of
/// its volume lying at or below that level.
pub fn analytic_centroid_and_cut(shape: &AnalyticBody) -> Result<(f64, f64)> {
    match shape {
        // Slices have width 2y on [0, 1/2]: area below c is c^2.
        AnalyticBody::Triangle2d => Ok((1.0 / 3.0, (1.0f64 / 9.0) / 0.25)),
        // Slices have width 2 sqrt(y) on [0, 1/4]: area below c is (4/3) c^{3/2}.
        AnalyticBody::Parabola2d => {
            let c = 0.15f64;
            Ok((c, (4.0 / 3.0) * c.powf(1.5) * 6.0))
        }
        AnalyticBody::Box { dim } if *dim > 0 => Ok((0.0, 0.5)),
        AnalyticBody::Box { dim } => Err(Error::UnsupportedBody(format!("box{dim}"))),
    }
}
