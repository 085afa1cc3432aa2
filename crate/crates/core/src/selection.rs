//! Density ranking of synthetic rows and greedy selection of the recovered set.
//!
//! Every synthetic row is scored by the harmonic mean of the squared distances
//! to its `k` nearest synthetic neighbours (itself excluded). Rows sitting in
//! tight clumps score lowest and are the likeliest traces of memorised
//! training records. Selection walks the ranking in ascending order and skips
//! any row that was already reported as a neighbour of an earlier pick, so
//! that one memorised record is not attacked repeatedly.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{sq_distance_unchecked, Cell, EncodedMatrix, Table};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_TAU: f64 = 0.05;

/// Distances at or below this are treated as exact matches.
pub const ZERO_DISTANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub sq_distance: f64,
}

fn cmp_neighbor(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.sq_distance
        .total_cmp(&b.sq_distance)
        .then(a.id.cmp(&b.id))
}

/// Exact k-nearest-neighbour search over an encoded matrix.
///
/// Results are sorted by ascending squared distance, ties broken by row id.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    matrix: Arc<EncodedMatrix>,
    excluded: Vec<usize>,
}

impl NeighborIndex {
    pub fn new(matrix: Arc<EncodedMatrix>) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::Empty("cannot index an empty matrix".into()));
        }
        Ok(NeighborIndex {
            matrix,
            excluded: Vec::new(),
        })
    }

    /// A view of the same index that never returns the given rows.
    pub fn excluding(&self, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut excluded = self.excluded.clone();
        excluded.extend(ids);
        excluded.sort_unstable();
        excluded.dedup();
        NeighborIndex {
            matrix: self.matrix.clone(),
            excluded,
        }
    }

    pub fn matrix(&self) -> &Arc<EncodedMatrix> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    fn available(&self, skip: Option<usize>) -> usize {
        let skip_extra = skip.is_some_and(|s| self.excluded.binary_search(&s).is_err());
        self.len() - self.excluded.len() - usize::from(skip_extra)
    }

    fn search(&self, point: &[f64], k: usize, skip: Option<usize>) -> Result<Vec<Neighbor>> {
        if point.len() != self.matrix.width() {
            return Err(Error::Width {
                expected: self.matrix.width(),
                actual: point.len(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let available = self.available(skip);
        if k > available {
            return Err(Error::InvalidParameter(format!(
                "requested {k} neighbours but only {available} rows are eligible"
            )));
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        let mut excluded = self.excluded.iter().peekable();
        for (id, row) in self.matrix.rows().enumerate() {
            if excluded.peek() == Some(&&id) {
                excluded.next();
                continue;
            }
            if Some(id) == skip {
                continue;
            }
            let cand = Neighbor {
                id,
                sq_distance: sq_distance_unchecked(point, row),
            };
            if best.len() == k {
                // ids arrive in ascending order, so an equal distance never displaces
                if cand.sq_distance >= best[k - 1].sq_distance {
                    continue;
                }
                best.pop();
            }
            let pos = best.partition_point(|n| cmp_neighbor(n, &cand) == Ordering::Less);
            best.insert(pos, cand);
        }
        Ok(best)
    }

    /// The `k` nearest rows to an arbitrary point.
    pub fn query(&self, point: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.search(point, k, None)
    }

    /// The `k` nearest rows to row `id`, excluding the row itself.
    pub fn query_row(&self, id: usize, k: usize) -> Result<Vec<Neighbor>> {
        if id >= self.len() {
            return Err(Error::InvalidParameter(format!("row {id} out of range")));
        }
        self.search(self.matrix.row(id), k, Some(id))
    }
}

/// `n / Σ 1/r`; zero as soon as any distance is (numerically) zero.
pub fn harmonic_mean(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::Empty("harmonic mean of no distances".into()));
    }
    let mut inv_sum = 0.0;
    for &d in distances {
        if d.is_nan() {
            return Err(Error::InvalidParameter("NaN distance".into()));
        }
        if d <= ZERO_DISTANCE_TOLERANCE {
            return Ok(0.0);
        }
        inv_sum += 1.0 / d;
    }
    Ok(distances.len() as f64 / inv_sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub row_id: usize,
    pub neighbors: Vec<usize>,
    pub neighbor_sq_distances: Vec<f64>,
    pub harmonic_mean: f64,
    pub loss: Option<f64>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRanking {
    pub k: usize,
    /// Ascending by score, ties by row id.
    pub rows: Vec<RankedRow>,
}

impl CandidateRanking {
    pub fn ids(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.row_id).collect()
    }

    fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| a.score.total_cmp(&b.score).then(a.row_id.cmp(&b.row_id)));
    }
}

/// Scores every row of the index by the harmonic mean of its `k` nearest
/// neighbour distances and sorts ascending.
pub fn rank_by_density(index: &NeighborIndex, k: usize) -> Result<CandidateRanking> {
    let n = index.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < n (k = {k}, n = {n})"
        )));
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|id| {
            let nn = index.query_row(id, k)?;
            let neighbor_sq_distances: Vec<f64> = nn.iter().map(|n| n.sq_distance).collect();
            let hm = harmonic_mean(&neighbor_sq_distances)?;
            Ok(RankedRow {
                row_id: id,
                neighbors: nn.iter().map(|n| n.id).collect(),
                neighbor_sq_distances,
                harmonic_mean: hm,
                loss: None,
                score: hm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranking = CandidateRanking { k, rows };
    ranking.sort();
    Ok(ranking)
}

/// Relative importance of neighbour density and prediction loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub distance: f64,
    pub loss: f64,
}

impl Weights {
    pub const BALANCED: Weights = Weights {
        distance: 0.5,
        loss: 0.5,
    };
    pub const DISTANCE_HEAVY: Weights = Weights {
        distance: 0.75,
        loss: 0.25,
    };
    pub const DISTANCE_ONLY: Weights = Weights {
        distance: 1.0,
        loss: 0.0,
    };

    pub fn new(distance: f64, loss: f64) -> Result<Self> {
        let w = Weights { distance, loss };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.distance >= 0.0
            && self.loss >= 0.0
            && ((self.distance + self.loss) - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "weights must be non-negative and sum to 1, got {{{}, {}}}",
                self.distance, self.loss
            )))
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.distance, self.loss]
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::DISTANCE_ONLY
    }
}

/// Maps values onto [0, 1] by min-max; a constant column maps to 0.
fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Re-ranks by `w.distance * r̂ + w.loss * l̂`, where both terms are min-max
/// normalised over the candidates. `losses` is indexed by row id.
pub fn weighted_rank(
    ranking: &CandidateRanking,
    losses: &[f64],
    weights: Weights,
) -> Result<CandidateRanking> {
    weights.validate()?;
    if losses.len() != ranking.rows.len() {
        return Err(Error::Width {
            expected: ranking.rows.len(),
            actual: losses.len(),
        });
    }
    let mut rows = ranking.rows.clone();
    let mut row_losses = Vec::with_capacity(rows.len());
    for r in &rows {
        let l = *losses
            .get(r.row_id)
            .ok_or_else(|| Error::InvalidParameter(format!("no loss for row {}", r.row_id)))?;
        if !l.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite loss for row {}", r.row_id)));
        }
        row_losses.push(l);
    }
    let hm: Vec<f64> = rows.iter().map(|r| r.harmonic_mean).collect();
    let hm_norm = min_max_normalize(&hm);
    let loss_norm = min_max_normalize(&row_losses);
    for (i, r) in rows.iter_mut().enumerate() {
        r.loss = Some(row_losses[i]);
        r.score = weights.distance * hm_norm[i] + weights.loss * loss_norm[i];
    }
    let mut out = CandidateRanking { k: ranking.k, rows };
    out.sort();
    Ok(out)
}

/// `⌈n_train · τ⌉`, guarded against representation error in τ.
pub fn recon_budget(n_train: usize, tau: f64) -> Result<usize> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidParameter(format!("tau must lie in (0, 1], got {tau}")));
    }
    Ok((n_train as f64 * tau - 1e-9).ceil().max(0.0) as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredEntry {
    pub row_id: usize,
    pub score: f64,
    pub harmonic_mean: f64,
    pub loss: Option<f64>,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSet {
    pub entries: Vec<RecoveredEntry>,
    /// Raw rows (features followed by target) for each entry, once attached.
    pub samples: Option<Vec<Vec<Cell>>>,
    pub k: usize,
    pub tau: f64,
    pub n_train: usize,
    pub n_recon: usize,
    /// The ranking ran out before `n_recon` rows were selected.
    pub exhausted: bool,
}

impl RecoveredSet {
    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.row_id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copies the selected rows out of the table they were ranked from.
    pub fn attach_samples(&mut self, table: &Table) -> Result<()> {
        let samples = self
            .entries
            .iter()
            .map(|e| {
                if e.row_id < table.len() {
                    Ok(table.row(e.row_id).to_vec())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "recovered row {} is outside the table",
                        e.row_id
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.samples = Some(samples);
        Ok(())
    }
}

/// Walks the ranking and keeps rows not yet discarded, discarding the
/// neighbours of every kept row, until `⌈n_train · τ⌉` rows are kept.
pub fn select_recovered(
    ranking: &CandidateRanking,
    n_train: usize,
    tau: f64,
) -> Result<RecoveredSet> {
    let n_recon = recon_budget(n_train, tau)?;
    let mut discarded: HashSet<usize> = HashSet::new();
    let mut entries = Vec::with_capacity(n_recon);
    for r in &ranking.rows {
        if entries.len() >= n_recon {
            break;
        }
        if discarded.contains(&r.row_id) {
            continue;
        }
        discarded.extend(r.neighbors.iter().copied());
        entries.push(RecoveredEntry {
            row_id: r.row_id,
            score: r.score,
            harmonic_mean: r.harmonic_mean,
            loss: r.loss,
            neighbors: r.neighbors.clone(),
        });
    }
    let exhausted = entries.len() < n_recon;
    if exhausted {
        log::warn!(
            "ranking exhausted after {} of {} recovered samples",
            entries.len(),
            n_recon
        );
    }
    Ok(RecoveredSet {
        entries,
        samples: None,
        k: ranking.k,
        tau,
        n_train,
        n_recon,
        exhausted,
    })
}
