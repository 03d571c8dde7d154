//! A deterministic toy metric-learning loop.
//!
//! The model is an affine map followed by projection to the sphere,
//! `f(x) = normalize(Wᵀx + b)`. Each batch holds exactly two examples of each of
//! `classes_per_batch` distinct classes; triplets are mined inside the batch and the
//! weights take one plain SGD step (no momentum) on the mean triplet loss.
//!
//! Two gradient modes are available:
//!
//! - [`GradMode::PostProjection`] hands the feature gradients straight to the
//!   unnormalised embedding, ignoring the projection to the sphere.
//! - [`GradMode::ThroughNormalization`] applies the exact chain rule through the
//!   normalisation, `∂L/∂z = (I - f fᵀ) ∂L/∂f / ‖z‖`.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{collapse_metric_slices, recall_at_k_slices};
use crate::geometry::{coord_of, dot, norm, normalize, TripletFeatures, UnitVector};
use crate::loss::{feature_grads, loss_value, LossSpec};
use crate::mining::{
    hard_fraction, mine_with_matrix, Label, MinedTriplet, MiningStrategy, SimilarityMatrix,
};
use crate::synthdata::LabeledDataset;

/// Affine embedding parameters. `weights` is `input_dim × embed_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_dim: usize,
    pub embed_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ModelParams {
    pub fn new(
        input_dim: usize,
        embed_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if embed_dim < 2 {
            return Err(Error::DimensionTooSmall(embed_dim));
        }
        if input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be positive"));
        }
        if weights.len() != input_dim * embed_dim {
            return Err(Error::LengthMismatch {
                what: "weights vs input_dim * embed_dim",
                left: weights.len(),
                right: input_dim * embed_dim,
            });
        }
        if bias.len() != embed_dim {
            return Err(Error::LengthMismatch {
                what: "bias vs embed_dim",
                left: bias.len(),
                right: embed_dim,
            });
        }
        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", "entries must be finite"));
        }
        Ok(ModelParams {
            input_dim,
            embed_dim,
            weights,
            bias,
        })
    }

    /// Identity weights for a square model, zero bias.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut w = alloc::vec![0.0; dim * dim];
        for i in 0..dim {
            w[i * dim + i] = 1.0;
        }
        ModelParams::new(dim, dim, w, alloc::vec![0.0; dim])
    }

    /// Gaussian weights scaled by `1/sqrt(input_dim)`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        input_dim: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let scale = 1.0 / libm::sqrt(input_dim as f64);
        let w = (0..input_dim * embed_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        ModelParams::new(input_dim, embed_dim, w, alloc::vec![0.0; embed_dim])
    }

    /// Multiplies weights and bias by `c`; the embedding is unchanged for `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        ModelParams {
            weights: self.weights.iter().map(|w| w * c).collect(),
            bias: self.bias.iter().map(|b| b * c).collect(),
            ..self.clone()
        }
    }

    /// The unnormalised embedding `Wᵀx + b`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                left: self.input_dim,
                right: x.len(),
            });
        }
        let mut z = self.bias.clone();
        for (i, xi) in x.iter().enumerate() {
            let row = &self.weights[i * self.embed_dim..(i + 1) * self.embed_dim];
            for (zj, wij) in z.iter_mut().zip(row) {
                *zj += xi * wij;
            }
        }
        Ok(z)
    }

    fn apply_step(&mut self, grad: &ParamGrad, learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= learning_rate * g;
        }
    }
}

/// `normalize(Wᵀx + b)`.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<UnitVector> {
    normalize(&params.project(x)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    PostProjection,
    #[default]
    ThroughNormalization,
}

/// Gradient of the mean triplet loss with respect to the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrad {
    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|&g| g == 0.0)
    }
}

struct Embedded {
    raw: Vec<Vec<f64>>,
    unit: Vec<UnitVector>,
}

fn embed_all<X: AsRef<[f64]>>(params: &ModelParams, inputs: &[X]) -> Result<Embedded> {
    let mut raw = Vec::with_capacity(inputs.len());
    let mut unit = Vec::with_capacity(inputs.len());
    for x in inputs {
        let z = params.project(x.as_ref())?;
        unit.push(normalize(&z)?);
        raw.push(z);
    }
    Ok(Embedded { raw, unit })
}

fn check_triplets(triplets: &[MinedTriplet], len: usize) -> Result<()> {
    if triplets.is_empty() {
        return Err(Error::Empty("no triplets"));
    }
    for t in triplets {
        for index in [t.anchor, t.positive, t.negative] {
            if index >= len {
                return Err(Error::IndexOutOfRange { index, len });
            }
        }
    }
    Ok(())
}

fn triplet_features(unit: &[UnitVector], t: &MinedTriplet) -> TripletFeatures {
    TripletFeatures {
        anchor: unit[t.anchor].clone(),
        positive: unit[t.positive].clone(),
        negative: unit[t.negative].clone(),
    }
}

/// Mean loss over `triplets`, with similarities recomputed from `params`.
pub fn batch_loss<X: AsRef<[f64]>>(
    params: &ModelParams,
    inputs: &[X],
    triplets: &[MinedTriplet],
    loss: &LossSpec,
) -> Result<f64> {
    check_triplets(triplets, inputs.len())?;
    let e = embed_all(params, inputs)?;
    let total: f64 = triplets
        .iter()
        .map(|t| loss_value(coord_of(&triplet_features(&e.unit, t)), loss))
        .sum();
    Ok(total / triplets.len() as f64)
}

fn embedding_grads_of(
    e: &Embedded,
    triplets: &[MinedTriplet],
    loss: &LossSpec,
    mode: GradMode,
) -> Vec<Vec<f64>> {
    let dim = e.raw.first().map_or(0, Vec::len);
    let mut grads = alloc::vec![alloc::vec![0.0; dim]; e.raw.len()];
    let scale = 1.0 / triplets.len() as f64;
    for t in triplets {
        let g = feature_grads(&triplet_features(&e.unit, t), loss);
        for (index, gi) in [
            (t.anchor, &g.g_a),
            (t.positive, &g.g_p),
            (t.negative, &g.g_n),
        ] {
            for (acc, v) in grads[index].iter_mut().zip(gi) {
                *acc += scale * v;
            }
        }
    }
    if mode == GradMode::ThroughNormalization {
        for (g, (z, f)) in grads.iter_mut().zip(e.raw.iter().zip(&e.unit)) {
            let f = f.as_slice();
            let radial = dot(g, f);
            let inv_norm = 1.0 / norm(z);
            for (gj, fj) in g.iter_mut().zip(f) {
                *gj = (*gj - radial * fj) * inv_norm;
            }
        }
    }
    grads
}

/// Per-input gradient of the mean triplet loss with respect to the unnormalised
/// embedding `z = Wᵀx + b`, under the chosen mode.
pub fn embedding_grads<X: AsRef<[f64]>>(
    params: &ModelParams,
    inputs: &[X],
    triplets: &[MinedTriplet],
    loss: &LossSpec,
    mode: GradMode,
) -> Result<Vec<Vec<f64>>> {
    check_triplets(triplets, inputs.len())?;
    let e = embed_all(params, inputs)?;
    Ok(embedding_grads_of(&e, triplets, loss, mode))
}

fn param_grad_from<X: AsRef<[f64]>>(
    params: &ModelParams,
    inputs: &[X],
    grads: &[Vec<f64>],
) -> ParamGrad {
    let (din, dout) = (params.input_dim, params.embed_dim);
    let mut weights = alloc::vec![0.0; din * dout];
    let mut bias = alloc::vec![0.0; dout];
    for (x, g) in inputs.iter().zip(grads) {
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        for (i, xi) in x.as_ref().iter().enumerate() {
            let row = &mut weights[i * dout..(i + 1) * dout];
            for (w, gj) in row.iter_mut().zip(g) {
                *w += xi * gj;
            }
        }
        for (b, gj) in bias.iter_mut().zip(g) {
            *b += gj;
        }
    }
    ParamGrad { weights, bias }
}

/// Gradient of [`batch_loss`] with respect to weights and bias. Triplet indices refer to
/// `inputs`.
pub fn backward<X: AsRef<[f64]>>(
    params: &ModelParams,
    inputs: &[X],
    triplets: &[MinedTriplet],
    loss: &LossSpec,
    mode: GradMode,
) -> Result<ParamGrad> {
    let grads = embedding_grads(params, inputs, triplets, loss, mode)?;
    Ok(param_grad_from(params, inputs, &grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub strategy: MiningStrategy,
    pub grad_mode: GradMode,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Distinct classes per batch; each contributes exactly two examples.
    pub classes_per_batch: usize,
    pub embed_dim: usize,
    pub seed: u64,
    /// Record a diagram snapshot every this many epochs.
    pub snapshot_every: usize,
    /// When `n > 0`, every `n`-th member of each class (starting with the first) is held
    /// out of training and Recall@1 is measured on the held-out points alone. When `0`,
    /// everything trains and Recall@1 is measured on the whole dataset.
    pub holdout_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossSpec::sct(1.0),
            strategy: MiningStrategy::HardNegative,
            grad_mode: GradMode::ThroughNormalization,
            learning_rate: 0.5,
            epochs: 50,
            classes_per_batch: 8,
            embed_dim: 8,
            seed: 0,
            snapshot_every: 10,
            holdout_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid("learning_rate", "must be finite and >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if self.classes_per_batch < 2 {
            return Err(Error::invalid("classes_per_batch", "must be at least 2"));
        }
        if self.embed_dim < 2 {
            return Err(Error::invalid("embed_dim", "must be at least 2"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::invalid("snapshot_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean over the epoch's batches of the fraction of mined triplets that are hard.
    pub hard_fraction: f64,
    pub recall_at_1: f64,
    /// Mean off-diagonal cosine over the whole dataset.
    pub collapse: f64,
    /// Hard-negative triplets of a fixed probe batch, with dataset indices.
    pub snapshot: Option<Vec<MinedTriplet>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub params: ModelParams,
}

/// Draws batches of two distinct members from each of several distinct classes.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    classes: Vec<Vec<usize>>,
    classes_per_batch: usize,
}

impl BatchSampler {
    /// `members` lists candidate dataset indices; classes with fewer than two of them are
    /// never drawn.
    pub fn new(labels: &[Label], members: &[usize], classes_per_batch: usize) -> Result<Self> {
        let mut by_class: Vec<(Label, Vec<usize>)> = Vec::new();
        for &i in members {
            let label = *labels.get(i).ok_or(Error::IndexOutOfRange {
                index: i,
                len: labels.len(),
            })?;
            match by_class.binary_search_by_key(&label, |(l, _)| *l) {
                Ok(pos) => by_class[pos].1.push(i),
                Err(pos) => by_class.insert(pos, (label, alloc::vec![i])),
            }
        }
        let classes: Vec<Vec<usize>> = by_class
            .into_iter()
            .map(|(_, m)| m)
            .filter(|m| m.len() >= 2)
            .collect();
        if classes.len() < classes_per_batch {
            return Err(Error::invalid(
                "classes_per_batch",
                "exceeds the number of classes with at least two training members",
            ));
        }
        Ok(BatchSampler {
            classes,
            classes_per_batch,
        })
    }

    pub fn batch_size(&self) -> usize {
        2 * self.classes_per_batch
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let picked = partial_shuffle_prefix(self.classes.len(), self.classes_per_batch, rng);
        let mut out = Vec::with_capacity(self.batch_size());
        for c in picked {
            let members = &self.classes[c];
            for m in partial_shuffle_prefix(members.len(), 2, rng) {
                out.push(members[m]);
            }
        }
        out
    }
}

/// First `k` entries of a uniformly random permutation of `0..n`.
fn partial_shuffle_prefix<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

fn split(dataset: &LabeledDataset, holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
    if holdout_every == 0 {
        return ((0..dataset.len()).collect(), Vec::new());
    }
    let mut seen: Vec<(Label, usize)> = Vec::new();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, &label) in dataset.labels.iter().enumerate() {
        let pos = match seen.iter().position(|(l, _)| *l == label) {
            Some(p) => p,
            None => {
                seen.push((label, 0));
                seen.len() - 1
            }
        };
        let rank = seen[pos].1;
        seen[pos].1 += 1;
        if rank.is_multiple_of(holdout_every) {
            held.push(i);
        } else {
            train.push(i);
        }
    }
    (train, held)
}

fn gather<'a>(dataset: &'a LabeledDataset, idx: &[usize]) -> (Vec<&'a [f64]>, Vec<Label>) {
    (
        idx.iter().map(|&i| dataset.points[i].as_slice()).collect(),
        idx.iter().map(|&i| dataset.labels[i]).collect(),
    )
}

fn embed_units(params: &ModelParams, points: &[&[f64]]) -> Result<Vec<UnitVector>> {
    points.iter().map(|x| forward(params, x)).collect()
}

/// Trains from a seeded initialisation and logs every epoch.
///
/// One epoch is `floor(train_size / batch_size)` batches (at least one). The random stream
/// is consumed in a fixed order (initial weights, probe batch, then per batch: the batch
/// draw and a mining seed), so results are a pure function of `(dataset, config)`.
pub fn train(dataset: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset has no points"));
    }
    let (train_idx, held_idx) = split(dataset, config.holdout_every);
    let sampler = BatchSampler::new(&dataset.labels, &train_idx, config.classes_per_batch)?;
    let eval_idx = if config.holdout_every == 0 {
        train_idx.clone()
    } else {
        held_idx
    };
    if eval_idx.len() < 2 {
        return Err(Error::invalid(
            "holdout_every",
            "leaves fewer than two evaluation points",
        ));
    }
    let (eval_points, eval_labels) = gather(dataset, &eval_idx);
    let all_points: Vec<&[f64]> = dataset.points.iter().map(Vec::as_slice).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::random(dataset.dim(), config.embed_dim, &mut rng)?;
    let probe = sampler.sample(&mut rng);
    let (probe_points, probe_labels) = gather(dataset, &probe);

    let batches = (train_idx.len() / sampler.batch_size()).max(1);
    let mut logs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (mut loss_sum, mut hard_sum) = (0.0, 0.0);
        for _ in 0..batches {
            let idx = sampler.sample(&mut rng);
            let mining_seed = rng.next_u64();
            let (points, labels) = gather(dataset, &idx);
            let e = embed_all(&params, &points)?;
            let sim = SimilarityMatrix::from_embeddings(&e.unit);
            let triplets = mine_with_matrix(&sim, &labels, config.strategy, mining_seed)?;
            hard_sum += hard_fraction(&triplets)?;
            loss_sum += triplets
                .iter()
                .map(|t| loss_value(t.coord, &config.loss))
                .sum::<f64>()
                / triplets.len() as f64;
            let grads = embedding_grads_of(&e, &triplets, &config.loss, config.grad_mode);
            let grad = param_grad_from(&params, &points, &grads);
            params.apply_step(&grad, config.learning_rate);
        }

        let eval_units = embed_units(&params, &eval_points)?;
        let recall = recall_at_k_slices(
            &eval_units,
            &eval_labels,
            &eval_units,
            &eval_labels,
            1,
            true,
        )?;
        let all_units = embed_units(&params, &all_points)?;
        let collapse = collapse_metric_slices(&all_units)?;
        let snapshot = if epoch % config.snapshot_every == 0 {
            let units = embed_units(&params, &probe_points)?;
            let sim = SimilarityMatrix::from_embeddings(&units);
            let mined = mine_with_matrix(
                &sim,
                &probe_labels,
                MiningStrategy::HardNegative,
                config.seed,
            )?;
            Some(
                mined
                    .into_iter()
                    .map(|t| MinedTriplet {
                        anchor: probe[t.anchor],
                        positive: probe[t.positive],
                        negative: probe[t.negative],
                        coord: t.coord,
                    })
                    .collect(),
            )
        } else {
            None
        };
        logs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / batches as f64,
            hard_fraction: hard_sum / batches as f64,
            recall_at_1: recall.recall,
            collapse,
            snapshot,
        });
    }
    Ok(TrainOutcome { logs, params })
}
