//! Triplet losses on the diagram and their exact gradients.
//!
//! Three losses are supported:
//!
//! - NCA: `-log(exp(S_ap) / (exp(S_ap) + exp(S_an)))`.
//! - Margin: `max(‖f_a - f_p‖² - ‖f_a - f_n‖² + α, 0)`, which on the unit sphere is
//!   `max(2(S_an - S_ap) + α, 0)`.
//! - Selectively contrastive (SCT): `λ·S_an` for hard triplets (`S_an > S_ap`), the base
//!   loss otherwise.
//!
//! Gradients come in two flavours: with respect to the diagram coordinates
//! ([`coord_grad`]) and with respect to the three feature vectors ([`feature_grads`]).
//! The learning rate is never folded in here; callers scale by it.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{coord_of, TripletCoord, TripletFeatures};

/// Derivative magnitude of the margin loss with respect to either similarity.
pub const MARGIN_SLOPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Nca,
    Margin,
    Sct,
}

/// Loss used by SCT for triplets outside the hard region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLoss {
    #[default]
    Nca,
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Weight of the contrastive `λ·S_an` term in the SCT hard branch.
    pub lambda: f64,
    /// Margin `α` of the margin loss (also used by an SCT margin base).
    pub margin: f64,
    pub base: BaseLoss,
    /// When false, the SCT hard branch leaves the anchor untouched (`g_a = 0`).
    pub sct_anchor_grad: bool,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::nca()
    }
}

impl LossSpec {
    pub fn nca() -> Self {
        LossSpec {
            kind: LossKind::Nca,
            lambda: 1.0,
            margin: 0.0,
            base: BaseLoss::Nca,
            sct_anchor_grad: true,
        }
    }

    pub fn margin(margin: f64) -> Self {
        LossSpec {
            kind: LossKind::Margin,
            margin,
            ..LossSpec::nca()
        }
    }

    pub fn sct(lambda: f64) -> Self {
        LossSpec {
            kind: LossKind::Sct,
            lambda,
            ..LossSpec::nca()
        }
    }

    pub fn with_base(mut self, base: BaseLoss) -> Self {
        self.base = base;
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn with_sct_anchor_grad(mut self, on: bool) -> Self {
        self.sct_anchor_grad = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda", "must be finite and >= 0"));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(Error::invalid("margin", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordGrad {
    pub d_sap: f64,
    pub d_san: f64,
}

impl CoordGrad {
    pub const ZERO: CoordGrad = CoordGrad {
        d_sap: 0.0,
        d_san: 0.0,
    };
}

/// Loss gradients with respect to the (unit) anchor, positive and negative features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrads {
    pub g_a: Vec<f64>,
    pub g_p: Vec<f64>,
    pub g_n: Vec<f64>,
}

impl FeatureGrads {
    pub fn zeros(dim: usize) -> Self {
        FeatureGrads {
            g_a: alloc::vec![0.0; dim],
            g_p: alloc::vec![0.0; dim],
            g_n: alloc::vec![0.0; dim],
        }
    }
}

/// Softmax weight of the negative, `exp(S_an) / (exp(S_ap) + exp(S_an))`.
///
/// This is the factor that, multiplied by the learning rate, gives the per-step `β`.
pub fn nca_weight(coord: TripletCoord) -> f64 {
    1.0 / (1.0 + libm::exp(coord.s_ap - coord.s_an))
}

pub fn nca_loss(coord: TripletCoord) -> f64 {
    softplus(coord.s_an - coord.s_ap)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// The hinge argument `D = 2(S_an - S_ap) + α`.
pub fn margin_violation(coord: TripletCoord, margin: f64) -> f64 {
    MARGIN_SLOPE * (coord.s_an - coord.s_ap) + margin
}

pub fn margin_loss(coord: TripletCoord, margin: f64) -> f64 {
    margin_violation(coord, margin).max(0.0)
}

/// A triplet is in the SCT contrastive branch iff `S_an > S_ap` (strict).
pub fn sct_hard_branch(coord: TripletCoord) -> bool {
    coord.s_an > coord.s_ap
}

fn base_loss(coord: TripletCoord, spec: &LossSpec) -> f64 {
    match spec.base {
        BaseLoss::Nca => nca_loss(coord),
        BaseLoss::Margin => margin_loss(coord, spec.margin),
    }
}

/// Selectively contrastive loss. Reads `lambda`, `base` and `margin` from `spec`
/// regardless of `spec.kind`.
pub fn sct_loss(coord: TripletCoord, spec: &LossSpec) -> f64 {
    if sct_hard_branch(coord) {
        spec.lambda * coord.s_an
    } else {
        base_loss(coord, spec)
    }
}

pub fn loss_value(coord: TripletCoord, spec: &LossSpec) -> f64 {
    match spec.kind {
        LossKind::Nca => nca_loss(coord),
        LossKind::Margin => margin_loss(coord, spec.margin),
        LossKind::Sct => sct_loss(coord, spec),
    }
}

fn nca_coord_grad(coord: TripletCoord) -> CoordGrad {
    let sigma = nca_weight(coord);
    CoordGrad {
        d_sap: -sigma,
        d_san: sigma,
    }
}

fn margin_coord_grad(coord: TripletCoord, margin: f64) -> CoordGrad {
    // Zero subgradient on the hinge itself.
    if margin_violation(coord, margin) > 0.0 {
        CoordGrad {
            d_sap: -MARGIN_SLOPE,
            d_san: MARGIN_SLOPE,
        }
    } else {
        CoordGrad::ZERO
    }
}

/// `(∂L/∂S_ap, ∂L/∂S_an)` at `coord`.
pub fn coord_grad(coord: TripletCoord, spec: &LossSpec) -> CoordGrad {
    match spec.kind {
        LossKind::Nca => nca_coord_grad(coord),
        LossKind::Margin => margin_coord_grad(coord, spec.margin),
        LossKind::Sct if sct_hard_branch(coord) => CoordGrad {
            d_sap: 0.0,
            d_san: spec.lambda,
        },
        LossKind::Sct => match spec.base {
            BaseLoss::Nca => nca_coord_grad(coord),
            BaseLoss::Margin => margin_coord_grad(coord, spec.margin),
        },
    }
}

fn nca_feature_grads(t: &TripletFeatures, sigma: f64) -> FeatureGrads {
    let (a, p, n) = (
        t.anchor.as_slice(),
        t.positive.as_slice(),
        t.negative.as_slice(),
    );
    FeatureGrads {
        g_a: n.iter().zip(p).map(|(n, p)| sigma * (n - p)).collect(),
        g_p: a.iter().map(|a| -sigma * a).collect(),
        g_n: a.iter().map(|a| sigma * a).collect(),
    }
}

fn margin_feature_grads(t: &TripletFeatures, coord: TripletCoord, margin: f64) -> FeatureGrads {
    if margin_violation(coord, margin) <= 0.0 {
        return FeatureGrads::zeros(t.dim());
    }
    let (a, p, n) = (
        t.anchor.as_slice(),
        t.positive.as_slice(),
        t.negative.as_slice(),
    );
    let k = MARGIN_SLOPE;
    FeatureGrads {
        g_a: n.iter().zip(p).map(|(n, p)| k * (n - p)).collect(),
        g_p: a.iter().zip(p).map(|(a, p)| -k * (a - p)).collect(),
        g_n: a.iter().zip(n).map(|(a, n)| k * (a - n)).collect(),
    }
}

/// Gradients with respect to the anchor, positive and negative features.
///
/// NCA: `g_a = σ(f_n - f_p)`, `g_p = -σ f_a`, `g_n = σ f_a`.
/// Margin (active hinge): `g_a = 2(f_n - f_p)`, `g_p = -2(f_a - f_p)`, `g_n = 2(f_a - f_n)`;
/// these are the squared-distance gradients, so they differ from the coordinate chain rule
/// by components along each feature.
/// SCT hard branch: `g_a = λ f_n` (or zero, see [`LossSpec::sct_anchor_grad`]),
/// `g_p = 0`, `g_n = λ f_a`.
pub fn feature_grads(t: &TripletFeatures, spec: &LossSpec) -> FeatureGrads {
    let coord = coord_of(t);
    match spec.kind {
        LossKind::Nca => nca_feature_grads(t, nca_weight(coord)),
        LossKind::Margin => margin_feature_grads(t, coord, spec.margin),
        LossKind::Sct if sct_hard_branch(coord) => {
            let lambda = spec.lambda;
            let g_a = if spec.sct_anchor_grad {
                t.negative.as_slice().iter().map(|n| lambda * n).collect()
            } else {
                alloc::vec![0.0; t.dim()]
            };
            FeatureGrads {
                g_a,
                g_p: alloc::vec![0.0; t.dim()],
                g_n: t.anchor.as_slice().iter().map(|a| lambda * a).collect(),
            }
        }
        LossKind::Sct => match spec.base {
            BaseLoss::Nca => nca_feature_grads(t, nca_weight(coord)),
            BaseLoss::Margin => margin_feature_grads(t, coord, spec.margin),
        },
    }
}
