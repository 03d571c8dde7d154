//! Seeded labeled point clouds on the unit sphere.
//!
//! Class centres are uniform on the sphere; each point is its centre plus isotropic
//! Gaussian noise of scale `intra_spread`, projected back to the sphere. Large spreads give
//! the high intra-class / low inter-class variance regime in which hard triplets are
//! common.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::normalize;
use crate::mining::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    pub intra_spread: f64,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("num_classes", "must be at least 2"));
        }
        if self.per_class < 2 {
            return Err(Error::invalid("per_class", "must be at least 2"));
        }
        if self.input_dim < 2 {
            return Err(Error::invalid("input_dim", "must be at least 2"));
        }
        if !self.intra_spread.is_finite() || self.intra_spread < 0.0 {
            return Err(Error::invalid("intra_spread", "must be finite and >= 0"));
        }
        if u32::try_from(self.num_classes).is_err() {
            return Err(Error::invalid("num_classes", "too many classes"));
        }
        Ok(())
    }
}

/// Raw feature vectors with parallel labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl LabeledDataset {
    /// Checks parallel lengths, a shared dimension `>= 2` and finite values.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "points vs labels",
                left: points.len(),
                right: labels.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::Empty("dataset has no points"));
        }
        let d = points[0].len();
        if d < 2 {
            return Err(Error::DimensionTooSmall(d));
        }
        for p in &points {
            if p.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("points", "values must be finite"));
            }
        }
        Ok(LabeledDataset { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<Label> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws all class centres first, then the points class by class.
pub fn generate(config: &DatasetConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.input_dim;
    let mut centres = Vec::with_capacity(config.num_classes);
    while centres.len() < config.num_classes {
        // A Gaussian draw with norm <= 1e-12 is practically impossible; redraw if it happens.
        if let Ok(c) = normalize(&gaussian_vector(&mut rng, d)) {
            centres.push(c);
        }
    }
    let mut points = Vec::with_capacity(config.num_classes * config.per_class);
    let mut labels = Vec::with_capacity(points.capacity());
    for (label, centre) in centres.iter().enumerate() {
        let mut made = 0;
        while made < config.per_class {
            let noise = gaussian_vector(&mut rng, d);
            let raw: Vec<f64> = centre
                .as_slice()
                .iter()
                .zip(&noise)
                .map(|(c, z)| c + config.intra_spread * z)
                .collect();
            if let Ok(p) = normalize(&raw) {
                points.push(p.into_inner());
                labels.push(label as Label);
                made += 1;
            }
        }
    }
    Ok(LabeledDataset { points, labels })
}
