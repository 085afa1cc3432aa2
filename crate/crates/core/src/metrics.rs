//! Defender-side attack evaluation: unique targets, hit rate and distance to
//! closest record (DCR).
//!
//! Each reconstructed sample is matched to its nearest training record in the
//! encoded space (training-fitted encoder). A sample compromises that record
//! when all categorical features agree and every continuous feature falls
//! into the same one-dimensional threshold cluster.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{recon_budget, NeighborIndex, RecoveredSet};
use crate::tabular::{Cell, EncodedMatrix, Encoder, FeatureTransform, Table};

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.025;

/// Clusters of one normalised continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClusters {
    pub centroids: Vec<f64>,
    #[serde(with = "crate::decimal")]
    pub threshold: f64,
}

/// Threshold clustering of a single column, visiting values in ascending
/// order. A value joins the current (highest) cluster when it lies within
/// `threshold` of the centroid and the updated centroid stays within
/// `threshold` of the cluster's smallest member; otherwise it opens a new
/// cluster. Centroids are running means.
pub fn fit_feature_clusters(values: &[f64], threshold: f64) -> Result<FeatureClusters> {
    if values.is_empty() {
        return Err(Error::Empty("cannot cluster an empty column".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {threshold}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in column".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);

    let mut centroids: Vec<f64> = Vec::new();
    let (mut sum, mut count, mut first) = (0.0, 0usize, 0.0);
    for v in sorted {
        if count > 0 {
            let centroid = sum / count as f64;
            let updated = (sum + v) / (count + 1) as f64;
            if v - centroid <= threshold && updated - first <= threshold {
                sum += v;
                count += 1;
                continue;
            }
            centroids.push(centroid);
        }
        sum = v;
        count = 1;
        first = v;
    }
    centroids.push(sum / count as f64);
    Ok(FeatureClusters {
        centroids,
        threshold,
    })
}

impl FeatureClusters {
    /// Nearest centroid; equidistant values go to the lower id.
    pub fn assign(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = (value - c).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

pub fn assign_cluster(clusters: &FeatureClusters, value: f64) -> usize {
    clusters.assign(value)
}

/// Per-feature clusters (continuous features only) together with the scaling
/// used to normalise raw values before assignment.
#[derive(Debug, Clone)]
pub struct ClusterSet {
    encoder: Encoder,
    per_feature: Vec<Option<FeatureClusters>>,
}

impl ClusterSet {
    /// Fits clusters for every continuous feature on the normalised values of
    /// all given feature rows.
    pub fn fit<'a>(
        encoder: &Encoder,
        rows: impl IntoIterator<Item = &'a [Cell]> + Clone,
        threshold: f64,
    ) -> Result<Self> {
        let per_feature = encoder
            .transforms()
            .iter()
            .enumerate()
            .map(|(j, t)| match t {
                FeatureTransform::MinMax { .. } => {
                    let col = rows
                        .clone()
                        .into_iter()
                        .map(|r| {
                            r[j].as_num()
                                .map(|v| t.scale(v))
                                .ok_or_else(|| Error::Schema(format!("feature {j} is not numeric")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    fit_feature_clusters(&col, threshold).map(Some)
                }
                FeatureTransform::OneHot { .. } => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterSet {
            encoder: encoder.clone(),
            per_feature,
        })
    }

    pub fn feature(&self, j: usize) -> Option<&FeatureClusters> {
        self.per_feature[j].as_ref()
    }
}

/// All categorical features equal and all continuous features in the same
/// cluster. Only the predictive features are compared.
pub fn is_compromised(recon: &[Cell], train: &[Cell], clusters: &ClusterSet) -> Result<bool> {
    let transforms = clusters.encoder.transforms();
    let m = transforms.len();
    if recon.len() < m || train.len() < m {
        return Err(Error::Width {
            expected: m,
            actual: recon.len().min(train.len()),
        });
    }
    for (j, t) in transforms.iter().enumerate() {
        match (recon[j], train[j], clusters.feature(j)) {
            (Cell::Cat(a), Cell::Cat(b), None) => {
                if a != b {
                    return Ok(false);
                }
            }
            (Cell::Num(a), Cell::Num(b), Some(fc)) => {
                if fc.assign(t.scale(a)) != fc.assign(t.scale(b)) {
                    return Ok(false);
                }
            }
            _ => return Err(Error::Schema(format!("feature {j} does not match the schema"))),
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAudit {
    pub nearest_train_id: usize,
    pub compromised: bool,
    #[serde(with = "crate::decimal")]
    pub dcr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_samples: usize,
    pub n_train: usize,
    #[serde(with = "crate::decimal")]
    pub tau: f64,
    #[serde(with = "crate::decimal")]
    pub threshold: f64,
    /// `⌈n_train · τ⌉`, the hit-rate denominator.
    pub budget: usize,
    pub unique_samples: usize,
    pub compromised: usize,
    #[serde(with = "crate::decimal")]
    pub hit_rate: f64,
    #[serde(with = "crate::decimal")]
    pub dcr_mean: f64,
    #[serde(with = "crate::decimal")]
    pub dcr_min: f64,
    #[serde(with = "crate::decimal")]
    pub dcr_max: f64,
    /// Set when there was nothing to evaluate.
    pub empty: bool,
    pub samples: Vec<SampleAudit>,
}

/// Scores reconstructed raw rows against the training table.
pub fn evaluate_samples(
    samples: &[Vec<Cell>],
    train: &Table,
    n_train: usize,
    tau: f64,
    threshold: f64,
) -> Result<EvaluationReport> {
    let budget = recon_budget(n_train, tau)?;
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be positive, got {threshold}")));
    }
    if samples.is_empty() {
        return Ok(EvaluationReport {
            n_samples: 0,
            n_train,
            tau,
            threshold,
            budget,
            unique_samples: 0,
            compromised: 0,
            hit_rate: 0.0,
            dcr_mean: 0.0,
            dcr_min: 0.0,
            dcr_max: 0.0,
            empty: true,
            samples: Vec::new(),
        });
    }
    let encoder = Encoder::fit(train)?;
    let train_matrix: Arc<EncodedMatrix> = Arc::new(encoder.encode(train)?);
    let index = NeighborIndex::new(train_matrix)?;
    let m = train.schema().n_features();
    let clusters = ClusterSet::fit(
        &encoder,
        train.rows().iter().map(|r| &r[..m]).chain(samples.iter().map(|s| &s[..m.min(s.len())])),
        threshold,
    )?;

    let audits = samples
        .iter()
        .map(|s| {
            let x = encoder.encode_row(s)?;
            let nearest = index.query(&x, 1)?[0];
            Ok(SampleAudit {
                nearest_train_id: nearest.id,
                compromised: is_compromised(s, train.features(nearest.id), &clusters)?,
                dcr: nearest.sq_distance.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let compromised = audits.iter().filter(|a| a.compromised).count();
    let unique_samples = audits
        .iter()
        .map(|a| a.nearest_train_id)
        .collect::<HashSet<_>>()
        .len();
    let dcr_sum: f64 = audits.iter().map(|a| a.dcr).sum();
    let dcr_min = audits.iter().map(|a| a.dcr).fold(f64::INFINITY, f64::min);
    let dcr_max = audits.iter().map(|a| a.dcr).fold(0.0, f64::max);
    Ok(EvaluationReport {
        n_samples: audits.len(),
        n_train,
        tau,
        threshold,
        budget,
        unique_samples,
        compromised,
        hit_rate: if budget > 0 {
            compromised as f64 / budget as f64
        } else {
            0.0
        },
        dcr_mean: (dcr_sum / audits.len() as f64).clamp(dcr_min, dcr_max),
        dcr_min,
        dcr_max,
        empty: false,
        samples: audits,
    })
}

/// Evaluates the rows of a recovered set (samples must be attached).
pub fn evaluate(
    recovered: &RecoveredSet,
    train: &Table,
    n_train: usize,
    tau: f64,
    threshold: f64,
) -> Result<EvaluationReport> {
    let samples = match &recovered.samples {
        Some(s) => s.as_slice(),
        None if recovered.is_empty() => &[],
        None => {
            return Err(Error::InvalidParameter(
                "recovered set has no samples attached".into(),
            ))
        }
    };
    evaluate_samples(samples, train, n_train, tau, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{FeatureSpec, Schema};
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![
                    FeatureSpec::continuous("a"),
                    FeatureSpec::categorical("c", ["x", "y", "z"]),
                ],
                FeatureSpec::categorical("t", ["n", "p"]),
            )
            .unwrap(),
        )
    }

    fn train_table(n: usize, seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<Cell>> = (0..n)
            .map(|_| {
                vec![
                    Cell::Num(rng.random_range(0.0..100.0)),
                    Cell::Cat(rng.random_range(0..3)),
                    Cell::Cat(rng.random_range(0..2)),
                ]
            })
            .collect();
        // pin the range to [0, 100] so normalised = raw / 100
        rows[0][0] = Cell::Num(0.0);
        rows[1][0] = Cell::Num(100.0);
        Table::new(schema(), rows).unwrap()
    }

    #[test]
    fn greedy_clustering_trace() {
        let c = fit_feature_clusters(&[0.5, 0.0, 0.01], 0.025).unwrap();
        assert_eq!(c.centroids, vec![0.005, 0.5]);
        let c = fit_feature_clusters(&[0.3; 7], 0.025).unwrap();
        assert_eq!(c.centroids.len(), 1);
        assert!(fit_feature_clusters(&[], 0.025).is_err());
        assert!(fit_feature_clusters(&[0.1], 0.0).is_err());
    }

    #[test]
    fn members_within_threshold_of_centroid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n = rng.random_range(1..=100);
            let vals: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
            let c = fit_feature_clusters(&vals, 0.025).unwrap();
            for w in c.centroids.windows(2) {
                assert!(w[0] < w[1]);
            }
            for v in &vals {
                let id = c.assign(*v);
                assert!((v - c.centroids[id]).abs() <= 0.025 + 1e-12);
            }
        }
    }

    #[test]
    fn cluster_fit_is_order_independent() {
        let mut vals: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 50.0).collect();
        let a = fit_feature_clusters(&vals, 0.025).unwrap();
        vals.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, fit_feature_clusters(&vals, 0.025).unwrap());
    }

    #[test]
    fn assignment_rules() {
        let c = FeatureClusters {
            centroids: vec![0.005, 0.5],
            threshold: 0.025,
        };
        assert_eq!(c.assign(0.5), 1);
        assert_eq!(c.assign(0.52), 1);
        let c = FeatureClusters {
            centroids: vec![0.125, 0.375],
            threshold: 0.025,
        };
        // exactly midway in binary
        assert_eq!(assign_cluster(&c, 0.25), 0);
    }

    #[test]
    fn compromise_checks() {
        let train = train_table(40, 3);
        let enc = Encoder::fit(&train).unwrap();
        let a = [Cell::Num(50.0), Cell::Cat(1)];
        let b = [Cell::Num(51.0), Cell::Cat(1)];
        let rows = [&a[..], &b[..]];
        let clusters = ClusterSet::fit(&enc, rows.iter().copied(), 0.025).unwrap();
        assert!(is_compromised(&a, &a, &clusters).unwrap());
        assert!(is_compromised(&b, &a, &clusters).unwrap());
        assert!(!is_compromised(&[Cell::Num(50.0), Cell::Cat(2)], &a, &clusters).unwrap());
    }

    #[test]
    fn exact_copies() {
        let train = train_table(200, 5);
        let samples: Vec<Vec<Cell>> = [3, 17, 42].iter().map(|&i| train.row(i).to_vec()).collect();
        let r = evaluate_samples(&samples, &train, 200, 0.05, 0.025).unwrap();
        assert_eq!(r.budget, 10);
        assert_eq!(r.unique_samples, 3);
        assert_eq!(r.compromised, 3);
        assert!((r.hit_rate - 0.3).abs() < 1e-12);
        assert_eq!(r.dcr_mean, 0.0);
        assert!(r.samples.iter().all(|s| s.dcr == 0.0));
    }

    #[test]
    fn shared_target_counts_once() {
        let train = train_table(100, 6);
        let mut s = train.row(9).to_vec();
        let samples = vec![s.clone(), s.clone(), {
            s[0] = Cell::Num(s[0].as_num().unwrap() + 1e-6);
            s
        }];
        let r = evaluate_samples(&samples, &train, 100, 0.05, 0.025).unwrap();
        assert_eq!(r.unique_samples, 1);
        assert!(r.dcr_min <= r.dcr_mean && r.dcr_mean <= r.dcr_max);
    }

    #[test]
    fn empty_input_is_flagged() {
        let train = train_table(50, 7);
        let r = evaluate_samples(&[], &train, 50, 0.05, 0.025).unwrap();
        assert!(r.empty);
        assert_eq!((r.unique_samples, r.compromised, r.hit_rate), (0, 0, 0.0));
    }

    #[test]
    fn hit_rate_permutation_invariant() {
        let train = train_table(120, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut samples: Vec<Vec<Cell>> = (0..15)
            .map(|i| {
                let mut r = train.row(i * 7).to_vec();
                r[0] = Cell::Num(r[0].as_num().unwrap() + rng.random_range(-2.0..2.0));
                r
            })
            .collect();
        let a = evaluate_samples(&samples, &train, 120, 0.1, 0.025).unwrap();
        samples.shuffle(&mut rng);
        let mut rows = train.rows().to_vec();
        rows.shuffle(&mut rng);
        let shuffled = Table::new(train.schema().clone(), rows).unwrap();
        let b = evaluate_samples(&samples, &shuffled, 120, 0.1, 0.025).unwrap();
        assert_eq!(a.hit_rate, b.hit_rate);
        assert_eq!(a.unique_samples, b.unique_samples);
    }
}
