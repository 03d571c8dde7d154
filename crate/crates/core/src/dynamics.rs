//! Closed-form single-step dynamics on the triplet diagram.
//!
//! A gradient step moves the three features off the sphere. Given the diagram point, the
//! plane projection factor `γ` and the step weight `β`, everything about the step can be
//! written in terms of these three scalars: the updated (unnormalised) similarities, the
//! norms of the updated features, and the similarity deltas measured after projecting
//! back to the sphere. The entanglement model then mixes the two deltas through
//! `p·q` with `q = S_ap·S_an`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{s_pn_from, sine_of, TripletCoord};
use crate::loss::{margin_violation, nca_weight, LossKind, LossSpec, MARGIN_SLOPE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    /// Gradient descent step size `α`.
    pub learning_rate: f64,
    /// Plane projection factor used to close the geometry.
    pub gamma: f64,
    /// Entanglement strength `p`.
    pub entanglement_p: f64,
    pub loss: LossSpec,
}

impl StepParams {
    /// Co-planar (`γ = 1`), no entanglement.
    pub fn new(learning_rate: f64, loss: LossSpec) -> Self {
        StepParams {
            learning_rate,
            gamma: 1.0,
            entanglement_p: 0.0,
            loss,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_entanglement(mut self, p: f64) -> Self {
        self.entanglement_p = p;
        self
    }

    /// Learning rate must be finite and `>= 0`; zero is accepted as the identity step.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid("learning_rate", "must be finite and >= 0"));
        }
        if self.gamma.is_nan() || self.gamma.abs() > 1.0 {
            return Err(Error::invalid("gamma", "must lie in [-1, 1]"));
        }
        if !self.entanglement_p.is_finite() || self.entanglement_p < 0.0 {
            return Err(Error::invalid("entanglement_p", "must be finite and >= 0"));
        }
        self.loss.validate()
    }
}

/// Everything one gradient step does to a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityUpdate {
    /// Dot products of the updated features before renormalisation.
    pub s_ap_new: f64,
    pub s_an_new: f64,
    pub norm_a: f64,
    pub norm_p: f64,
    pub norm_n: f64,
    /// Similarity changes after projecting back to the sphere.
    pub d_sap: f64,
    pub d_san: f64,
    /// Deltas after the entanglement mixing.
    pub d_sap_total: f64,
    pub d_san_total: f64,
}

impl SimilarityUpdate {
    /// The update of a step that does nothing.
    pub fn identity(coord: TripletCoord) -> Self {
        SimilarityUpdate {
            s_ap_new: coord.s_ap,
            s_an_new: coord.s_an,
            norm_a: 1.0,
            norm_p: 1.0,
            norm_n: 1.0,
            d_sap: 0.0,
            d_san: 0.0,
            d_sap_total: 0.0,
            d_san_total: 0.0,
        }
    }

    fn from_parts(
        coord: TripletCoord,
        s_ap_new: f64,
        s_an_new: f64,
        norm_a: f64,
        norm_p: f64,
        norm_n: f64,
    ) -> Self {
        let d_sap = s_ap_new / (norm_a * norm_p) - coord.s_ap;
        let d_san = s_an_new / (norm_a * norm_n) - coord.s_an;
        SimilarityUpdate {
            s_ap_new,
            s_an_new,
            norm_a,
            norm_p,
            norm_n,
            d_sap,
            d_san,
            d_sap_total: d_sap,
            d_san_total: d_san,
        }
    }

    /// Applies the entanglement model:
    /// `ΔS_ap_total = ΔS_ap + p·q·ΔS_an`, `ΔS_an_total = ΔS_an + p·q·ΔS_ap`.
    pub fn entangled(mut self, coord: TripletCoord, p: f64) -> Self {
        if p == 0.0 {
            self.d_sap_total = self.d_sap;
            self.d_san_total = self.d_san;
            return self;
        }
        let pq = p * coord.entanglement_factor();
        self.d_sap_total = self.d_sap + pq * self.d_san;
        self.d_san_total = self.d_san + pq * self.d_sap;
        self
    }
}

/// Anchor norm after `f_a + β f_p - β f_n`; shared by both losses.
fn anchor_norm(coord: TripletCoord, gamma: f64, beta: f64) -> f64 {
    let sin_ap = sine_of(coord.s_ap);
    let sin_an = sine_of(coord.s_an);
    let along = 1.0 + beta * coord.s_ap - beta * coord.s_an;
    let in_plane = beta * sin_ap - gamma * beta * sin_an;
    let out_of_plane = beta * sine_of(gamma) * sin_an;
    libm::sqrt(along * along + in_plane * in_plane + out_of_plane * out_of_plane)
}

/// NCA step with an explicit weight `β` (learning rate times the softmax weight):
/// `f_p += β f_a`, `f_n -= β f_a`, `f_a += β (f_p - f_n)`.
pub fn nca_update(coord: TripletCoord, gamma: f64, beta: f64) -> SimilarityUpdate {
    if beta == 0.0 {
        return SimilarityUpdate::identity(coord);
    }
    let (s_ap, s_an) = (coord.s_ap, coord.s_an);
    let s_pn = s_pn_from(coord, gamma);
    let b2 = beta * beta;
    let s_ap_new = (1.0 + b2) * s_ap + 2.0 * beta - beta * s_pn - b2 * s_an;
    let s_an_new = (1.0 + b2) * s_an - 2.0 * beta + beta * s_pn - b2 * s_ap;

    let p_along = 1.0 + beta * s_ap;
    let norm_p = libm::sqrt(p_along * p_along + b2 * (1.0 - s_ap * s_ap).max(0.0));
    let n_along = 1.0 - beta * s_an;
    let norm_n = libm::sqrt(n_along * n_along + b2 * (1.0 - s_an * s_an).max(0.0));
    let norm_a = anchor_norm(coord, gamma, beta);
    SimilarityUpdate::from_parts(coord, s_ap_new, s_an_new, norm_a, norm_p, norm_n)
}

/// Margin-loss step with an explicit weight `β` (twice the learning rate), assuming an
/// active hinge: `f_p += β (f_a - f_p)`, `f_n -= β (f_a - f_n)`, `f_a += β (f_p - f_n)`.
pub fn margin_update(coord: TripletCoord, gamma: f64, beta: f64) -> SimilarityUpdate {
    if beta == 0.0 {
        return SimilarityUpdate::identity(coord);
    }
    let (s_ap, s_an) = (coord.s_ap, coord.s_an);
    let s_pn = s_pn_from(coord, gamma);
    let b2 = beta * beta;
    let s_ap_new =
        (1.0 - beta + b2) * s_ap + 2.0 * beta - b2 - beta * (1.0 - beta) * s_pn - b2 * s_an;
    let s_an_new =
        (1.0 + beta + b2) * s_an - 2.0 * beta - b2 + beta * (1.0 + beta) * s_pn - b2 * s_ap;

    let p_along = 1.0 - beta + beta * s_ap;
    let norm_p = libm::sqrt(p_along * p_along + b2 * (1.0 - s_ap * s_ap).max(0.0));
    let n_along = 1.0 + beta - beta * s_an;
    let norm_n = libm::sqrt(n_along * n_along + b2 * (1.0 - s_an * s_an).max(0.0));
    let norm_a = anchor_norm(coord, gamma, beta);
    SimilarityUpdate::from_parts(coord, s_ap_new, s_an_new, norm_a, norm_p, norm_n)
}

/// One NCA gradient step with `β = learning_rate · σ(coord)`, followed by entanglement.
pub fn step_nca(coord: TripletCoord, params: &StepParams) -> SimilarityUpdate {
    let beta = params.learning_rate * nca_weight(coord);
    nca_update(coord, params.gamma, beta).entangled(coord, params.entanglement_p)
}

/// One margin-loss step with `β = 2 · learning_rate`; the identity when the hinge is
/// inactive (`D <= 0`).
pub fn step_margin(coord: TripletCoord, params: &StepParams) -> SimilarityUpdate {
    if margin_violation(coord, params.loss.margin) <= 0.0 {
        return SimilarityUpdate::identity(coord);
    }
    let beta = MARGIN_SLOPE * params.learning_rate;
    margin_update(coord, params.gamma, beta).entangled(coord, params.entanglement_p)
}

/// Dispatches on `params.loss.kind`. The SCT loss has no closed form here.
pub fn step(coord: TripletCoord, params: &StepParams) -> Result<SimilarityUpdate> {
    match params.loss.kind {
        LossKind::Nca => Ok(step_nca(coord, params)),
        LossKind::Margin => Ok(step_margin(coord, params)),
        LossKind::Sct => Err(Error::invalid(
            "loss",
            "diagram dynamics are defined for the nca and margin losses only",
        )),
    }
}

/// A regular grid over a rectangle of the diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s_ap_range: (f64, f64),
    pub s_an_range: (f64, f64),
    /// Points per axis.
    pub resolution: usize,
}

impl GridSpec {
    /// The full diagram `[-1, 1]²`.
    pub fn full(resolution: usize) -> Self {
        GridSpec {
            s_ap_range: (-1.0, 1.0),
            s_an_range: (-1.0, 1.0),
            resolution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::invalid("resolution", "must be at least 2"));
        }
        for (lo, hi) in [self.s_ap_range, self.s_an_range] {
            if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::invalid("range", "must satisfy -1 <= lo < hi <= 1"));
            }
        }
        Ok(())
    }

    /// Grid value `i` of `resolution` along `(lo, hi)`; the endpoints are exact.
    pub fn axis_value(range: (f64, f64), i: usize, resolution: usize) -> f64 {
        let (lo, hi) = range;
        if i + 1 == resolution {
            return hi;
        }
        lo + (hi - lo) * i as f64 / (resolution - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldArrow {
    pub s_ap: f64,
    pub s_an: f64,
    pub d_sap: f64,
    pub d_san: f64,
    pub d_sap_total: f64,
    pub d_san_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub grid: GridSpec,
    pub params: StepParams,
    /// Row-major with `s_ap` as the outer index.
    pub arrows: Vec<FieldArrow>,
}

impl VectorField {
    pub fn max_abs_d_sap(&self) -> f64 {
        self.arrows
            .iter()
            .map(|a| a.d_sap.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_d_san(&self) -> f64 {
        self.arrows
            .iter()
            .map(|a| a.d_san.abs())
            .fold(0.0, f64::max)
    }

    pub fn arrow_at(&self, i_ap: usize, i_an: usize) -> &FieldArrow {
        &self.arrows[i_ap * self.grid.resolution + i_an]
    }
}

/// Evaluates one step at every grid point.
pub fn vector_field(grid: GridSpec, params: StepParams) -> Result<VectorField> {
    grid.validate()?;
    params.validate()?;
    let res = grid.resolution;
    let mut arrows = Vec::with_capacity(res * res);
    for i in 0..res {
        let s_ap = GridSpec::axis_value(grid.s_ap_range, i, res);
        for j in 0..res {
            let s_an = GridSpec::axis_value(grid.s_an_range, j, res);
            let coord = TripletCoord { s_ap, s_an };
            let u = step(coord, &params)?;
            arrows.push(FieldArrow {
                s_ap,
                s_an,
                d_sap: u.d_sap,
                d_san: u.d_san,
                d_sap_total: u.d_sap_total,
                d_san_total: u.d_san_total,
            });
        }
    }
    Ok(VectorField {
        grid,
        params,
        arrows,
    })
}

/// Rolls a diagram point forward by repeatedly adding the entangled deltas, clamping to
/// `[-1, 1]²` after every step. Returns `steps + 1` points, starting with `start`.
pub fn trajectory(
    start: TripletCoord,
    params: &StepParams,
    steps: usize,
) -> Result<Vec<TripletCoord>> {
    if steps == 0 {
        return Err(Error::invalid("steps", "must be at least 1"));
    }
    params.validate()?;
    let mut out = Vec::with_capacity(steps + 1);
    let mut coord = TripletCoord::clamped(start.s_ap, start.s_an);
    out.push(coord);
    for _ in 0..steps {
        let u = step(coord, params)?;
        coord = TripletCoord::clamped(coord.s_ap + u.d_sap_total, coord.s_an + u.d_san_total);
        out.push(coord);
    }
    Ok(out)
}
