//! Comparison attacks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{rank_by_density, recon_budget, NeighborIndex, RecoveredEntry, RecoveredSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    GanleaksBase,
    RandomSelect,
}

/// Distance-to-single-nearest-neighbour ranking; the top `⌈n_train · τ⌉`
/// rows are taken without any neighbour exclusion.
pub fn ganleaks_rank(index: &NeighborIndex, n_train: usize, tau: f64) -> Result<RecoveredSet> {
    if index.len() < 2 {
        return Err(Error::InvalidParameter("need at least two synthetic rows".into()));
    }
    let n_recon = recon_budget(n_train, tau)?;
    let ranking = rank_by_density(index, 1)?;
    let entries: Vec<RecoveredEntry> = ranking
        .rows
        .into_iter()
        .take(n_recon)
        .map(|r| RecoveredEntry {
            row_id: r.row_id,
            score: r.score,
            harmonic_mean: r.harmonic_mean,
            loss: None,
            neighbors: r.neighbors,
        })
        .collect();
    let exhausted = entries.len() < n_recon;
    Ok(RecoveredSet {
        entries,
        samples: None,
        k: 1,
        tau,
        n_train,
        n_recon,
        exhausted,
    })
}

/// Uniform choice of `⌈n_train · τ⌉` distinct rows, reported in ascending id order.
pub fn random_select(n_rows: usize, n_train: usize, tau: f64, seed: u64) -> Result<RecoveredSet> {
    let n_recon = recon_budget(n_train, tau)?;
    if n_recon > n_rows {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {n_recon} rows out of {n_rows}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = sample(&mut rng, n_rows, n_recon).into_vec();
    ids.sort_unstable();
    Ok(RecoveredSet {
        entries: ids
            .into_iter()
            .map(|row_id| RecoveredEntry {
                row_id,
                score: 0.0,
                harmonic_mean: f64::NAN,
                loss: None,
                neighbors: Vec::new(),
            })
            .collect(),
        samples: None,
        k: 0,
        tau,
        n_train,
        n_recon,
        exhausted: false,
    })
}
