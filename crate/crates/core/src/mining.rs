//! Batch similarities and triplet selection.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_unit, dot, TripletCoord, UnitVector};

pub type Label = u32;

/// Embeddings with parallel class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    embeddings: Vec<UnitVector>,
    labels: Vec<Label>,
}

impl Batch {
    /// Requires at least two items, equal lengths and one shared dimension.
    pub fn new(embeddings: Vec<UnitVector>, labels: Vec<Label>) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "embeddings vs labels",
                left: embeddings.len(),
                right: labels.len(),
            });
        }
        if embeddings.len() < 2 {
            return Err(Error::Empty("a batch needs at least two items"));
        }
        let d = embeddings[0].dim();
        if let Some(bad) = embeddings.iter().find(|e| e.dim() != d) {
            return Err(Error::DimensionMismatch {
                left: d,
                right: bad.dim(),
            });
        }
        Ok(Batch { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    pub fn embeddings(&self) -> &[UnitVector] {
        &self.embeddings
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }
}

/// Dense symmetric matrix of pairwise cosines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Cosines between rows of `embeddings`, computed once per unordered pair.
    pub fn from_embeddings<E: AsRef<[f64]>>(embeddings: &[E]) -> Self {
        let n = embeddings.len();
        let mut values = alloc::vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let s = clamp_unit(dot(embeddings[i].as_ref(), embeddings[j].as_ref()));
                values[i * n + j] = s;
                values[j * n + i] = s;
            }
        }
        SimilarityMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

pub fn similarity_matrix(batch: &Batch) -> SimilarityMatrix {
    SimilarityMatrix::from_embeddings(batch.embeddings())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiningStrategy {
    /// Uniform positive and uniform negative.
    Random,
    /// Uniform positive, most similar negative.
    HardNegative,
    /// Uniform positive, most similar negative that is still less similar than the
    /// positive; the least similar negative when no such negative exists.
    SemiHardNegative,
    /// Most similar positive, uniform negative.
    EasyPositive,
    /// Most similar positive and most similar negative.
    EasyPositiveHardNegative,
}

impl MiningStrategy {
    pub const ALL: [MiningStrategy; 5] = [
        MiningStrategy::Random,
        MiningStrategy::HardNegative,
        MiningStrategy::SemiHardNegative,
        MiningStrategy::EasyPositive,
        MiningStrategy::EasyPositiveHardNegative,
    ];

    fn random_positive(self) -> bool {
        matches!(
            self,
            MiningStrategy::Random
                | MiningStrategy::HardNegative
                | MiningStrategy::SemiHardNegative
        )
    }
}

/// Batch indices of a selected triplet plus its diagram location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub coord: TripletCoord,
}

/// Index of the largest value, lowest index on ties.
fn argmax_by(candidates: &[usize], key: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &c in candidates {
        let v = key(c);
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((c, v)),
        }
    }
    best.map(|(c, _)| c)
}

/// Index of the smallest value, lowest index on ties.
fn argmin_by(candidates: &[usize], key: impl Fn(usize) -> f64) -> Option<usize> {
    argmax_by(candidates, |c| -key(c))
}

/// Selects one triplet per eligible anchor, in anchor order.
///
/// An anchor is eligible when its class has another member in the batch; other anchors
/// are skipped. Random draws come from a ChaCha8 stream seeded with `seed`, one draw per
/// random choice in anchor order (positive before negative).
pub fn mine(batch: &Batch, strategy: MiningStrategy, seed: u64) -> Result<Vec<MinedTriplet>> {
    let sim = similarity_matrix(batch);
    mine_with_matrix(&sim, batch.labels(), strategy, seed)
}

/// As [`mine`], over a precomputed similarity matrix.
pub fn mine_with_matrix(
    sim: &SimilarityMatrix,
    labels: &[Label],
    strategy: MiningStrategy,
    seed: u64,
) -> Result<Vec<MinedTriplet>> {
    if sim.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "similarity matrix vs labels",
            left: sim.len(),
            right: labels.len(),
        });
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::NoNegatives);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len();
    let mut out = Vec::with_capacity(n);
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for a in 0..n {
        positives.clear();
        negatives.clear();
        for j in 0..n {
            if j == a {
                continue;
            }
            if labels[j] == labels[a] {
                positives.push(j);
            } else {
                negatives.push(j);
            }
        }
        if positives.is_empty() {
            continue;
        }
        let row = sim.row(a);
        let positive = if strategy.random_positive() {
            positives[rng.random_range(0..positives.len())]
        } else {
            argmax_by(&positives, |j| row[j]).expect("nonempty")
        };
        let negative = match strategy {
            MiningStrategy::Random | MiningStrategy::EasyPositive => {
                negatives[rng.random_range(0..negatives.len())]
            }
            MiningStrategy::HardNegative | MiningStrategy::EasyPositiveHardNegative => {
                argmax_by(&negatives, |j| row[j]).expect("nonempty")
            }
            MiningStrategy::SemiHardNegative => {
                let s_ap = row[positive];
                let feasible: Vec<usize> = negatives
                    .iter()
                    .copied()
                    .filter(|&j| row[j] < s_ap)
                    .collect();
                match argmax_by(&feasible, |j| row[j]) {
                    Some(j) => j,
                    None => argmin_by(&negatives, |j| row[j]).expect("nonempty"),
                }
            }
        };
        out.push(MinedTriplet {
            anchor: a,
            positive,
            negative,
            coord: TripletCoord {
                s_ap: row[positive],
                s_an: row[negative],
            },
        });
    }
    Ok(out)
}

/// `S_an > S_ap`, strictly.
pub fn is_hard(coord: TripletCoord) -> bool {
    coord.s_an > coord.s_ap
}

pub fn hard_fraction(triplets: &[MinedTriplet]) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::Empty("no triplets"));
    }
    let hard = triplets.iter().filter(|t| is_hard(t.coord)).count();
    Ok(hard as f64 / triplets.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::normalize;
    use alloc::vec;

    fn uv(v: &[f64]) -> UnitVector {
        normalize(v).unwrap()
    }

    fn triplet(s_ap: f64, s_an: f64) -> MinedTriplet {
        MinedTriplet {
            anchor: 0,
            positive: 1,
            negative: 2,
            coord: TripletCoord { s_ap, s_an },
        }
    }

    #[test]
    fn similarity_matrix_special_batches() {
        let v = uv(&[0.2, 0.5, -0.1]);
        let b = Batch::new(vec![v.clone(), v.clone(), v], vec![0, 0, 1]).unwrap();
        let m = similarity_matrix(&b);
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.get(i, j) - 1.0).abs() < 1e-15);
            }
        }
        let b = Batch::new(
            vec![
                uv(&[1.0, 0.0, 0.0]),
                uv(&[0.0, 1.0, 0.0]),
                uv(&[0.0, 0.0, 1.0]),
            ],
            vec![0, 1, 2],
        )
        .unwrap();
        let m = similarity_matrix(&b);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn hard_negative_two_by_two() {
        // Class 0 at indices 0, 1; class 1 at 2, 3. Index 3 is closest to anchor 0.
        let b = Batch::new(
            vec![
                uv(&[1.0, 0.0]),
                uv(&[0.0, 1.0]),
                uv(&[-1.0, 0.2]),
                uv(&[0.9, 0.3]),
            ],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let t = mine(&b, MiningStrategy::HardNegative, 7).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!((t[0].anchor, t[0].positive, t[0].negative), (0, 1, 3));
        // Anchor 3's most similar negative is 0.
        assert_eq!((t[3].positive, t[3].negative), (2, 0));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let a = uv(&[1.0, 0.0, 0.0]);
        let e = uv(&[0.0, 1.0, 0.0]);
        let b = Batch::new(
            vec![a.clone(), a, e.clone(), e.clone(), e],
            vec![0, 0, 1, 2, 3],
        )
        .unwrap();
        let t = mine(&b, MiningStrategy::EasyPositiveHardNegative, 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].negative, 2);
        assert_eq!(t[1].negative, 2);
    }

    #[test]
    fn single_class_has_no_negatives() {
        let b = Batch::new(vec![uv(&[1.0, 0.0]), uv(&[0.0, 1.0])], vec![4, 4]).unwrap();
        assert_eq!(mine(&b, MiningStrategy::Random, 0), Err(Error::NoNegatives));
    }

    #[test]
    fn singleton_anchors_are_skipped() {
        let b = Batch::new(
            vec![uv(&[1.0, 0.0]), uv(&[0.0, 1.0]), uv(&[1.0, 1.0])],
            vec![0, 0, 1],
        )
        .unwrap();
        let t = mine(&b, MiningStrategy::HardNegative, 0).unwrap();
        assert_eq!(t.iter().map(|t| t.anchor).collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn semi_hard_falls_back_to_least_similar() {
        // Anchor 0 with positive 1 at cos 0; every negative is more similar than that.
        let b = Batch::new(
            vec![
                uv(&[1.0, 0.0]),
                uv(&[0.0, 1.0]),
                uv(&[1.0, 0.1]),
                uv(&[1.0, 0.5]),
            ],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let t = mine(&b, MiningStrategy::SemiHardNegative, 0).unwrap();
        assert_eq!(t[0].negative, 3);
        assert!(t[0].coord.s_an > t[0].coord.s_ap);
    }

    #[test]
    fn is_hard_is_strict() {
        assert!(is_hard(TripletCoord {
            s_ap: 0.3,
            s_an: 0.7
        }));
        assert!(!is_hard(TripletCoord {
            s_ap: 0.7,
            s_an: 0.3
        }));
        assert!(!is_hard(TripletCoord {
            s_ap: 0.5,
            s_an: 0.5
        }));
    }

    #[test]
    fn hard_fraction_values() {
        assert_eq!(
            hard_fraction(&[triplet(0.9, 0.1), triplet(0.5, 0.5)]).unwrap(),
            0.0
        );
        assert_eq!(
            hard_fraction(&[triplet(0.1, 0.9), triplet(0.2, 0.3)]).unwrap(),
            1.0
        );
        let mixed = [
            triplet(0.1, 0.9),
            triplet(0.9, 0.1),
            triplet(0.0, 0.2),
            triplet(0.2, 0.0),
        ];
        assert_eq!(hard_fraction(&mixed).unwrap(), 0.5);
        assert!(hard_fraction(&[]).is_err());
    }

    #[test]
    fn batch_validation() {
        assert!(Batch::new(vec![uv(&[1.0, 0.0])], vec![0]).is_err());
        assert!(Batch::new(vec![uv(&[1.0, 0.0]), uv(&[0.0, 1.0])], vec![0]).is_err());
        assert!(Batch::new(vec![uv(&[1.0, 0.0]), uv(&[0.0, 1.0, 0.0])], vec![0, 1]).is_err());
    }
}
