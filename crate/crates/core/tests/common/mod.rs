//! Independent oracles shared by the integration tests. Nothing here calls into the
//! closed-form code paths it is used to check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v = gaussian(rng, d);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| a * x + y).collect()
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian rows.
pub fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v = gaussian(rng, d);
        for r in &rows {
            let c = dot(&v, r);
            v = axpy(-c, r, &v);
        }
        let n = norm(&v);
        if n > 1e-6 {
            rows.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    rows
}

pub fn apply(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Three unit vectors in R³ realising `(S_ap, S_an, γ)` exactly.
pub fn realize(s_ap: f64, s_an: f64, gamma: f64) -> [[f64; 3]; 3] {
    let sp = (1.0 - s_ap * s_ap).max(0.0).sqrt();
    let sn = (1.0 - s_an * s_an).max(0.0).sqrt();
    let gp = (1.0 - gamma * gamma).max(0.0).sqrt();
    [
        [1.0, 0.0, 0.0],
        [s_ap, sp, 0.0],
        [s_an, sn * gamma, sn * gp],
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct OracleStep {
    pub s_ap_new: f64,
    pub s_an_new: f64,
    pub norm_a: f64,
    pub norm_p: f64,
    pub norm_n: f64,
    pub d_sap: f64,
    pub d_san: f64,
}

fn measure(a: &[f64], p: &[f64], n: &[f64], a2: &[f64], p2: &[f64], n2: &[f64]) -> OracleStep {
    let (na, np, nn) = (norm(a2), norm(p2), norm(n2));
    OracleStep {
        s_ap_new: dot(a2, p2),
        s_an_new: dot(a2, n2),
        norm_a: na,
        norm_p: np,
        norm_n: nn,
        d_sap: dot(a2, p2) / (na * np) - dot(a, p),
        d_san: dot(a2, n2) / (na * nn) - dot(a, n),
    }
}

/// NCA step on explicit vectors: f_p - α g_p with g_p = -σ f_a, etc., where β = α σ.
pub fn nca_step_oracle(s_ap: f64, s_an: f64, gamma: f64, beta: f64) -> OracleStep {
    let [a, p, n] = realize(s_ap, s_an, gamma);
    let p2: Vec<f64> = (0..3).map(|i| p[i] + beta * a[i]).collect();
    let n2: Vec<f64> = (0..3).map(|i| n[i] - beta * a[i]).collect();
    let a2: Vec<f64> = (0..3).map(|i| a[i] - beta * (n[i] - p[i])).collect();
    measure(&a, &p, &n, &a2, &p2, &n2)
}

/// Margin step on explicit vectors with the squared-distance gradients, β = 2α.
pub fn margin_step_oracle(s_ap: f64, s_an: f64, gamma: f64, beta: f64) -> OracleStep {
    let [a, p, n] = realize(s_ap, s_an, gamma);
    let p2: Vec<f64> = (0..3).map(|i| p[i] + beta * (a[i] - p[i])).collect();
    let n2: Vec<f64> = (0..3).map(|i| n[i] - beta * (a[i] - n[i])).collect();
    let a2: Vec<f64> = (0..3).map(|i| a[i] - beta * (n[i] - p[i])).collect();
    measure(&a, &p, &n, &a2, &p2, &n2)
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Random labelled unit vectors of size 2..=64 with at least two classes. Roughly a third
/// of batches draw from a small pool of vectors so that similarity ties occur.
pub fn random_batch(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<u32>) {
    let n = rng.random_range(2..=64usize);
    let d = rng.random_range(2..=8usize);
    let classes = rng.random_range(2..=n.min(10) as u32);
    let pool: Vec<Vec<f64>> = (0..4).map(|_| unit(rng, d)).collect();
    let tied = rng.random_bool(0.35);
    let vectors = (0..n)
        .map(|_| {
            if tied {
                pool[rng.random_range(0..pool.len())].clone()
            } else {
                unit(rng, d)
            }
        })
        .collect();
    let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        labels[0] += 1;
    }
    (vectors, labels)
}

pub fn similarity_oracle(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    vectors
        .iter()
        .map(|a| vectors.iter().map(|b| dot(a, b).clamp(-1.0, 1.0)).collect())
        .collect()
}

/// Candidates ordered by descending similarity; stable, so ties keep ascending index.
fn by_desc(cands: &[usize], row: &[f64]) -> Vec<usize> {
    let mut v = cands.to_vec();
    v.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap());
    v
}

fn by_asc(cands: &[usize], row: &[f64]) -> Vec<usize> {
    let mut v = cands.to_vec();
    v.sort_by(|&x, &y| row[x].partial_cmp(&row[y]).unwrap());
    v
}

/// Exhaustive reference miner returning `(anchor, positive, negative)`.
///
/// Random picks replay the documented protocol: one `random_range` draw per random choice,
/// anchors in order, positive before negative.
pub fn mine_oracle(
    sim: &[Vec<f64>],
    labels: &[u32],
    strategy: hardneg_core::MiningStrategy,
    seed: u64,
) -> Vec<(usize, usize, usize)> {
    use hardneg_core::MiningStrategy as M;
    let mut r = rng(seed);
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        let pos: Vec<usize> = (0..n)
            .filter(|&j| j != a && labels[j] == labels[a])
            .collect();
        let neg: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if pos.is_empty() {
            continue;
        }
        let row = &sim[a];
        let p = match strategy {
            M::Random | M::HardNegative | M::SemiHardNegative => pos[r.random_range(0..pos.len())],
            M::EasyPositive | M::EasyPositiveHardNegative => by_desc(&pos, row)[0],
        };
        let n_idx = match strategy {
            M::Random | M::EasyPositive => neg[r.random_range(0..neg.len())],
            M::HardNegative | M::EasyPositiveHardNegative => by_desc(&neg, row)[0],
            M::SemiHardNegative => {
                let easier: Vec<usize> = neg.iter().copied().filter(|&j| row[j] < row[p]).collect();
                if easier.is_empty() {
                    by_asc(&neg, row)[0]
                } else {
                    by_desc(&easier, row)[0]
                }
            }
        };
        out.push((a, p, n_idx));
    }
    out
}

/// Recall@K by fully ranking the gallery for every query.
pub fn recall_oracle(
    queries: &[Vec<f64>],
    qlabels: &[u32],
    gallery: &[Vec<f64>],
    glabels: &[u32],
    k: usize,
    exclude_self: bool,
) -> f64 {
    let mut hits = 0;
    for (qi, q) in queries.iter().enumerate() {
        let row: Vec<f64> = gallery.iter().map(|g| dot(q, g)).collect();
        let cands: Vec<usize> = (0..gallery.len())
            .filter(|&g| !(exclude_self && g == qi))
            .collect();
        if by_desc(&cands, &row)
            .iter()
            .take(k)
            .any(|&g| glabels[g] == qlabels[qi])
        {
            hits += 1;
        }
    }
    hits as f64 / queries.len() as f64
}
