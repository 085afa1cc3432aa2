//! Planted-memorisation benchmark.
//!
//! A random training table plus a synthetic table in which a few training
//! rows were "memorised": each spawns several near-duplicates (small Gaussian
//! noise on the scaled continuous features, categoricals and target copied),
//! hidden among rows drawn from a copula fitted to the training data. Useful
//! for checking that an attack finds what was planted and that controls do
//! not.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::{fit_copula, sample};
use crate::tabular::{Cell, Encoder, FeatureSpec, FeatureTransform, Schema, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_train: usize,
    pub n_planted: usize,
    pub copies: usize,
    /// Noise standard deviation on the [0, 1]-scaled continuous features.
    pub noise_sd: f64,
    pub n_synthetic: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_train: 500,
            n_planted: 25,
            copies: 6,
            noise_sd: 0.01,
            n_synthetic: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedBenchmark {
    pub schema: Arc<Schema>,
    pub train: Table,
    pub synthetic: Table,
    /// Training rows that were memorised.
    pub planted_train_ids: Vec<usize>,
    /// For each synthetic row, the training row it was copied from, if any.
    pub source: Vec<Option<usize>>,
}

/// Four continuous and three categorical features with a binary target.
pub fn planted_schema() -> Schema {
    Schema::new(
        vec![
            FeatureSpec::continuous("age"),
            FeatureSpec::continuous("income"),
            FeatureSpec::continuous("hours"),
            FeatureSpec::continuous("score"),
            FeatureSpec::categorical("sector", ["private", "public"]),
            FeatureSpec::categorical("education", ["school", "college", "graduate"]),
            FeatureSpec::categorical("region", ["north", "south", "east", "west"]),
        ],
        FeatureSpec::categorical("default", ["no", "yes"]),
    )
    .expect("static schema is valid")
}

fn training_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Cell>> {
    (0..n)
        .map(|_| {
            let age: f64 = rng.random_range(18.0..90.0);
            let income = 1000.0 * (rng.random_range(2.5f64..5.3)).exp();
            let hours = (rng.random_range(1.0..99.0f64)).round();
            let score: f64 = rng.random();
            let sector = usize::from(rng.random_bool(0.35));
            let education = rng.random_range(0..3);
            let region = rng.random_range(0..4);
            let logit = -1.0 + 2.5 * score - 0.02 * (age - 50.0) + 0.4 * education as f64;
            let target = usize::from(rng.random::<f64>() < 1.0 / (1.0 + (-logit).exp()));
            vec![
                Cell::Num((age * 10.0).round() / 10.0),
                Cell::Num(income.round()),
                Cell::Num(hours),
                Cell::Num(score),
                Cell::Cat(sector),
                Cell::Cat(education),
                Cell::Cat(region),
                Cell::Cat(target),
            ]
        })
        .collect()
}

pub fn generate(config: &PlantedConfig) -> Result<PlantedBenchmark> {
    let n_copies = config.n_planted * config.copies;
    if config.n_planted > config.n_train || n_copies > config.n_synthetic {
        return Err(Error::InvalidParameter(
            "planted rows exceed the training or synthetic size".into(),
        ));
    }
    let schema = Arc::new(planted_schema());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = Table::new(schema.clone(), training_rows(config.n_train, &mut rng))?;
    let encoder = Encoder::fit(&train)?;

    let mut ids: Vec<usize> = (0..config.n_train).collect();
    ids.shuffle(&mut rng);
    let mut planted_train_ids = ids[..config.n_planted].to_vec();
    planted_train_ids.sort_unstable();

    let noise = Normal::new(0.0, config.noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise_sd: {e}")))?;
    let mut rows: Vec<(Vec<Cell>, Option<usize>)> = Vec::with_capacity(config.n_synthetic);
    for &t in &planted_train_ids {
        for _ in 0..config.copies {
            let mut row = train.row(t).to_vec();
            for (cell, tf) in row.iter_mut().zip(encoder.transforms()) {
                if let (Cell::Num(v), FeatureTransform::MinMax { lo, hi }) = (*cell, *tf) {
                    let scaled = tf.scale(v) + noise.sample(&mut rng);
                    *cell = Cell::Num(lo + scaled.clamp(0.0, 1.0) * (hi - lo));
                }
            }
            rows.push((row, Some(t)));
        }
    }
    let filler = config.n_synthetic - n_copies;
    if filler > 0 {
        let model = fit_copula(&train)?;
        let extra = sample(&model, filler, rng.random())?;
        rows.extend(extra.rows().iter().map(|r| (r.clone(), None)));
    }
    rows.shuffle(&mut rng);
    let source = rows.iter().map(|(_, s)| *s).collect();
    let synthetic = Table::new(schema.clone(), rows.into_iter().map(|(r, _)| r).collect())?;
    Ok(PlantedBenchmark {
        schema,
        train,
        synthetic,
        planted_train_ids,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_sources() {
        let cfg = PlantedConfig {
            n_train: 100,
            n_planted: 5,
            copies: 3,
            n_synthetic: 200,
            ..Default::default()
        };
        let b = generate(&cfg).unwrap();
        assert_eq!(b.train.len(), 100);
        assert_eq!(b.synthetic.len(), 200);
        assert_eq!(b.source.iter().filter(|s| s.is_some()).count(), 15);
        for (i, s) in b.source.iter().enumerate() {
            if let Some(t) = s {
                assert_eq!(&b.synthetic.row(i)[4..], &b.train.row(*t)[4..]);
            }
        }
        let again = generate(&cfg).unwrap();
        assert_eq!(again.synthetic, b.synthetic);
    }
}
