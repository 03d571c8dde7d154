//! Retrieval metrics and diagram extraction.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_unit, dot, TripletCoord};
use crate::mining::{Batch, Label, SimilarityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub k: usize,
    pub recall: f64,
    pub num_queries: usize,
}

/// Recall@K: the fraction of queries with at least one same-label item among the `k`
/// most similar gallery items.
///
/// Gallery items are ranked by cosine, ties broken by lowest gallery index. With
/// `exclude_self`, gallery item `i` is never retrieved for query `i`; this is the protocol
/// for a query set that doubles as the gallery.
pub fn recall_at_k(
    queries: &Batch,
    gallery: &Batch,
    k: usize,
    exclude_self: bool,
) -> Result<RetrievalResult> {
    recall_at_k_slices(
        queries.embeddings(),
        queries.labels(),
        gallery.embeddings(),
        gallery.labels(),
        k,
        exclude_self,
    )
}

/// As [`recall_at_k`] on raw rows.
pub fn recall_at_k_slices<E: AsRef<[f64]>>(
    queries: &[E],
    query_labels: &[Label],
    gallery: &[E],
    gallery_labels: &[Label],
    k: usize,
    exclude_self: bool,
) -> Result<RetrievalResult> {
    if queries.is_empty() {
        return Err(Error::Empty("no queries"));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if queries.len() != query_labels.len() {
        return Err(Error::LengthMismatch {
            what: "queries vs labels",
            left: queries.len(),
            right: query_labels.len(),
        });
    }
    if gallery.len() != gallery_labels.len() {
        return Err(Error::LengthMismatch {
            what: "gallery vs labels",
            left: gallery.len(),
            right: gallery_labels.len(),
        });
    }
    let available = if exclude_self {
        gallery.len().saturating_sub(1)
    } else {
        gallery.len()
    };
    if available < k {
        return Err(Error::invalid("k", "gallery is too small for k"));
    }

    let mut hits = 0usize;
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (qi, q) in queries.iter().enumerate() {
        top.clear();
        for (gi, g) in gallery.iter().enumerate() {
            if exclude_self && gi == qi {
                continue;
            }
            let s = dot(q.as_ref(), g.as_ref());
            // Keep the k best, ordered by descending similarity then ascending index.
            // Later indices only displace strictly smaller similarities.
            if top.len() == k && s <= top[k - 1].0 {
                continue;
            }
            let pos = top.iter().position(|&(ts, _)| s > ts).unwrap_or(top.len());
            top.insert(pos, (s, gi));
            top.truncate(k);
        }
        if top
            .iter()
            .any(|&(_, gi)| gallery_labels[gi] == query_labels[qi])
        {
            hits += 1;
        }
    }
    Ok(RetrievalResult {
        k,
        recall: hits as f64 / queries.len() as f64,
        num_queries: queries.len(),
    })
}

/// Mean off-diagonal cosine; `1` when everything has collapsed onto one point.
pub fn collapse_metric(batch: &Batch) -> Result<f64> {
    collapse_metric_slices(batch.embeddings())
}

pub fn collapse_metric_slices<E: AsRef<[f64]>>(embeddings: &[E]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::Empty(
            "collapse metric needs at least two embeddings",
        ));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += clamp_unit(dot(embeddings[i].as_ref(), embeddings[j].as_ref()));
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(clamp_unit(total / pairs))
}

/// One diagram point per item, built from its easiest positive and hardest negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    pub index: usize,
    pub label: Label,
    pub coord: TripletCoord,
}

/// For each item: `S_ap` is the largest similarity to another item of its class and
/// `S_an` the largest similarity to an item of a different class.
///
/// Items without a same-class partner, or without any item of another class, are
/// skipped.
pub fn diagram_extract(batch: &Batch) -> Vec<DiagramPoint> {
    let sim = SimilarityMatrix::from_embeddings(batch.embeddings());
    diagram_extract_with_matrix(&sim, batch.labels())
}

pub fn diagram_extract_with_matrix(sim: &SimilarityMatrix, labels: &[Label]) -> Vec<DiagramPoint> {
    let n = labels.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = sim.row(i);
        let mut best_pos: Option<f64> = None;
        let mut best_neg: Option<f64> = None;
        for j in 0..n {
            if j == i {
                continue;
            }
            let slot = if labels[j] == labels[i] {
                &mut best_pos
            } else {
                &mut best_neg
            };
            if slot.is_none_or(|b| row[j] > b) {
                *slot = Some(row[j]);
            }
        }
        if let (Some(s_ap), Some(s_an)) = (best_pos, best_neg) {
            out.push(DiagramPoint {
                index: i,
                label: labels[i],
                coord: TripletCoord::clamped(s_ap, s_an),
            });
        }
    }
    out
}
