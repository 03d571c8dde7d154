//! Unit-hypersphere primitives and triplet diagram coordinates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs with a Euclidean norm at or below this are rejected by [`normalize`].
pub const MIN_NORM: f64 = 1e-12;

/// Similarities this close to ±1 make the plane projection factor undefined.
pub const COLINEAR_TOL: f64 = 1e-9;

/// A point on the unit hypersphere of dimension `d >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Projects `v` onto the sphere; see [`normalize`].
    pub fn new(v: &[f64]) -> Result<Self> {
        normalize(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn neg(&self) -> UnitVector {
        UnitVector(self.0.iter().map(|x| -x).collect())
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// Returns `v / ‖v‖`.
///
/// Fails with [`Error::DimensionTooSmall`] for `d < 2` and
/// [`Error::DegenerateVector`] when `‖v‖ <= 1e-12`.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(Error::DimensionTooSmall(v.len()));
    }
    let n = norm(v);
    // NaN norms fall through the comparison, so reject them explicitly.
    if !n.is_finite() || n <= MIN_NORM {
        return Err(Error::DegenerateVector {
            norm: n,
            min: MIN_NORM,
        });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(u: &UnitVector, v: &UnitVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(clamp_unit(dot(&u.0, &v.0)))
}

#[inline]
pub(crate) fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `sqrt(1 - s^2)` with the radicand clamped at zero.
#[inline]
pub fn sine_of(s: f64) -> f64 {
    libm::sqrt((1.0 - s * s).max(0.0))
}

/// Anchor, positive and negative embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletFeatures {
    pub anchor: UnitVector,
    pub positive: UnitVector,
    pub negative: UnitVector,
}

impl TripletFeatures {
    pub fn new(anchor: UnitVector, positive: UnitVector, negative: UnitVector) -> Result<Self> {
        for other in [&positive, &negative] {
            if other.dim() != anchor.dim() {
                return Err(Error::DimensionMismatch {
                    left: anchor.dim(),
                    right: other.dim(),
                });
            }
        }
        Ok(TripletFeatures {
            anchor,
            positive,
            negative,
        })
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }
}

/// A triplet's location on the diagram: `(S_ap, S_an)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletCoord {
    pub s_ap: f64,
    pub s_an: f64,
}

impl TripletCoord {
    /// Builds a coordinate, accepting drift of up to 1e-9 outside `[-1, 1]` and
    /// clamping it away.
    pub fn new(s_ap: f64, s_an: f64) -> Result<Self> {
        let ok = |s: f64| s.is_finite() && s.abs() <= 1.0 + 1e-9;
        if !ok(s_ap) {
            return Err(Error::invalid("s_ap", "must lie in [-1, 1]"));
        }
        if !ok(s_an) {
            return Err(Error::invalid("s_an", "must lie in [-1, 1]"));
        }
        Ok(Self::clamped(s_ap, s_an))
    }

    /// Builds a coordinate by clamping both components into `[-1, 1]`.
    pub fn clamped(s_ap: f64, s_an: f64) -> Self {
        TripletCoord {
            s_ap: clamp_unit(s_ap),
            s_an: clamp_unit(s_an),
        }
    }

    /// The S_ap·S_an product used as the entanglement similarity factor.
    pub fn entanglement_factor(&self) -> f64 {
        self.s_ap * self.s_an
    }
}

pub fn coord_of(t: &TripletFeatures) -> TripletCoord {
    TripletCoord::clamped(
        dot(t.anchor.as_slice(), t.positive.as_slice()),
        dot(t.anchor.as_slice(), t.negative.as_slice()),
    )
}

/// Plane projection factor: the cosine between the components of the positive and the
/// negative orthogonal to the anchor.
///
/// `1` when the three points are co-planar with positive and negative on the same side of
/// the anchor, `0` when the two tangent directions are orthogonal.
pub fn gamma(t: &TripletFeatures) -> Result<f64> {
    let c = coord_of(t);
    if c.s_ap.abs() >= 1.0 - COLINEAR_TOL || c.s_an.abs() >= 1.0 - COLINEAR_TOL {
        return Err(Error::UndefinedGamma);
    }
    let a = t.anchor.as_slice();
    let p_perp: Vec<f64> = t
        .positive
        .as_slice()
        .iter()
        .zip(a)
        .map(|(p, a)| p - c.s_ap * a)
        .collect();
    let n_perp: Vec<f64> = t
        .negative
        .as_slice()
        .iter()
        .zip(a)
        .map(|(n, a)| n - c.s_an * a)
        .collect();
    let denom = norm(&p_perp) * norm(&n_perp);
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::UndefinedGamma);
    }
    Ok(clamp_unit(dot(&p_perp, &n_perp) / denom))
}

/// Positive-negative similarity implied by a diagram point and a plane projection factor:
/// `S_ap·S_an + γ·sqrt(1 - S_ap²)·sqrt(1 - S_an²)`.
pub fn s_pn_from(coord: TripletCoord, gamma: f64) -> f64 {
    coord.s_ap * coord.s_an + gamma * sine_of(coord.s_ap) * sine_of(coord.s_an)
}
