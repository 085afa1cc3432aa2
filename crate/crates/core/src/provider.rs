//! Attacker sample providers.
//!
//! * Level 1: the released synthetic table, used as is.
//! * Level 2: the attacker refits a generator on the released table and draws
//!   a larger sample. A Gaussian copula plays the generator here.
//! * Level 3: the attacker can query the original generator; its output is
//!   produced elsewhere and read from a CSV file.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::tabular::{load_table, Cell, FeatureKind, Schema, Table};

pub const DEFAULT_MULTIPLIER: usize = 10;
pub const MIN_FIT_ROWS: usize = 10;
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackLevel {
    #[serde(rename = "level-1")]
    SyntheticOnly,
    #[serde(rename = "level-2")]
    Regenerate,
    #[serde(rename = "level-3")]
    GeneratorAccess,
}

impl std::str::FromStr for AttackLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "level-1" | "1" => Ok(AttackLevel::SyntheticOnly),
            "level-2" | "2" => Ok(AttackLevel::Regenerate),
            "level-3" | "3" => Ok(AttackLevel::GeneratorAccess),
            _ => Err(Error::Config(format!("unknown attack level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    /// Sorted observed values; the inverse CDF interpolates linearly.
    Continuous { sorted: Vec<f64> },
    Categorical { frequencies: Vec<f64> },
}

impl Marginal {
    fn quantile(&self, u: f64) -> Cell {
        match self {
            Marginal::Continuous { sorted } => {
                let n = sorted.len();
                let pos = u.clamp(0.0, 1.0) * (n - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n - 1);
                let frac = pos - lo as f64;
                Cell::Num(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
            }
            Marginal::Categorical { frequencies } => {
                let mut cum = 0.0;
                for (c, f) in frequencies.iter().enumerate() {
                    cum += f;
                    if u < cum {
                        return Cell::Cat(c);
                    }
                }
                // u rounds past the last cumulative sum
                let last = frequencies.iter().rposition(|f| *f > 0.0).unwrap_or(0);
                Cell::Cat(last)
            }
        }
    }
}

/// Empirical marginals joined through a latent Gaussian correlation matrix.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    schema: Arc<Schema>,
    marginals: Vec<Marginal>,
    correlation: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl CopulaModel {
    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }
}

/// Mid-rank uniform scores in (0, 1); ties share their average rank.
fn uniform_scores(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut scores = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1..=end, average minus one half
        let mid = (start + end) as f64 / 2.0;
        for &i in &order[start..end] {
            scores[i] = mid / n as f64;
        }
        start = end;
    }
    scores
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Clips eigenvalues at a small floor and rescales back to unit diagonal.
/// Returns the projected matrix and a factor `A` with `A Aᵀ` equal to it.
fn project_psd(m: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = m.nrows();
    let eig = m.symmetric_eigen();
    let mut factor = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(EIGEN_FLOOR).sqrt();
        for i in 0..d {
            factor[(i, j)] *= s;
        }
    }
    for i in 0..d {
        let norm = factor.row(i).norm();
        if norm > 0.0 {
            for j in 0..d {
                factor[(i, j)] /= norm;
            }
        }
    }
    let corr = &factor * factor.transpose();
    (corr, factor)
}

/// Fits empirical marginals and a latent correlation matrix. Pairwise
/// Spearman correlations are mapped to the Gaussian scale by
/// `2 sin(π ρ / 6)`; categorical columns enter through their frequency
/// mid-ranks.
pub fn fit_copula(table: &Table) -> Result<CopulaModel> {
    if table.len() < MIN_FIT_ROWS {
        return Err(Error::Empty(format!(
            "copula fitting needs at least {MIN_FIT_ROWS} rows, got {}",
            table.len()
        )));
    }
    let schema = table.schema().clone();
    let n = table.len();
    let mut marginals = Vec::new();
    let mut scores = Vec::new();
    for (j, spec) in schema.columns().enumerate() {
        match spec.kind {
            FeatureKind::Continuous => {
                let values: Vec<f64> = table.column(j).map(|c| c.as_num().unwrap()).collect();
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                scores.push(uniform_scores(&values));
                marginals.push(Marginal::Continuous { sorted });
            }
            FeatureKind::Categorical => {
                let mut counts = vec![0usize; spec.categories.len()];
                for c in table.column(j) {
                    counts[c.as_cat().unwrap()] += 1;
                }
                let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
                let mut below = 0.0;
                let mids: Vec<f64> = frequencies
                    .iter()
                    .map(|f| {
                        let m = below + f / 2.0;
                        below += f;
                        m
                    })
                    .collect();
                scores.push(table.column(j).map(|c| mids[c.as_cat().unwrap()]).collect());
                marginals.push(Marginal::Categorical { frequencies });
            }
        }
    }

    let d = marginals.len();
    let mut latent = DMatrix::<f64>::identity(d, d);
    for a in 0..d {
        for b in (a + 1)..d {
            let rho = pearson(&scores[a], &scores[b]);
            let r = 2.0 * (std::f64::consts::PI * rho / 6.0).sin();
            latent[(a, b)] = r;
            latent[(b, a)] = r;
        }
    }
    let (correlation, factor) = project_psd(latent);
    Ok(CopulaModel {
        schema,
        marginals,
        correlation,
        factor,
    })
}

/// Draws `n` rows from the copula.
pub fn sample(model: &CopulaModel, n: usize, seed: u64) -> Result<Table> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let d = model.marginals.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut g = vec![0.0; d];
    for _ in 0..n {
        for v in g.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = (0..d)
            .map(|i| {
                let z: f64 = (0..d).map(|j| model.factor[(i, j)] * g[j]).sum();
                model.marginals[i].quantile(std_normal.cdf(z))
            })
            .collect();
        rows.push(row);
    }
    Table::new(model.schema.clone(), rows)
}

/// The table an attacker at `level` ranks.
pub fn scenario_dataset(
    level: AttackLevel,
    synthetic: &Table,
    external: Option<&Path>,
    multiplier: usize,
    seed: u64,
) -> Result<Table> {
    match level {
        AttackLevel::SyntheticOnly => Ok(synthetic.clone()),
        AttackLevel::Regenerate => {
            if multiplier == 0 {
                return Err(Error::InvalidParameter("multiplier must be positive".into()));
            }
            let model = fit_copula(synthetic)?;
            sample(&model, multiplier * synthetic.len(), seed)
        }
        AttackLevel::GeneratorAccess => {
            let path = external.ok_or_else(|| {
                Error::Config("level-3 attack requires an external sample file".into())
            })?;
            let table = load_table(path, synthetic.schema().clone())?;
            let expected = multiplier * synthetic.len();
            if table.len() != expected {
                log::warn!(
                    "external sample has {} rows, expected {expected} ({multiplier} x {})",
                    table.len(),
                    synthetic.len()
                );
            }
            Ok(table)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::FeatureSpec;
    use rand::Rng;

    fn schema2() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("b")],
                FeatureSpec::categorical("t", ["x", "y"]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn independent_features_have_small_latent_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = (0..5000)
            .map(|_| {
                vec![
                    Cell::Num(rng.random()),
                    Cell::Num(rng.random::<f64>() * 3.0),
                    Cell::Cat(rng.random_range(0..2)),
                ]
            })
            .collect();
        let t = Table::new(schema2(), rows).unwrap();
        let m = fit_copula(&t).unwrap();
        assert!(m.correlation()[(0, 1)].abs() <= 0.1);
        for i in 0..3 {
            assert!((m.correlation()[(i, i)] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicated_column_is_fully_correlated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = (0..500)
            .map(|_| {
                let v: f64 = rng.random();
                vec![Cell::Num(v), Cell::Num(v), Cell::Cat(rng.random_range(0..2))]
            })
            .collect();
        let t = Table::new(schema2(), rows).unwrap();
        let m = fit_copula(&t).unwrap();
        assert!(m.correlation()[(0, 1)] >= 0.99);
        // sampling must still work on the (nearly) singular matrix
        let s = sample(&m, 100, 3).unwrap();
        assert_eq!(s.len(), 100);
    }

    #[test]
    fn categorical_frequencies_are_counted() {
        let rows = (0..100)
            .map(|i| vec![Cell::Num(i as f64), Cell::Num(1.0), Cell::Cat(usize::from(i >= 30))])
            .collect();
        let t = Table::new(schema2(), rows).unwrap();
        let m = fit_copula(&t).unwrap();
        match &m.marginals()[2] {
            Marginal::Categorical { frequencies } => assert_eq!(frequencies, &vec![0.3, 0.7]),
            other => panic!("{other:?}"),
        }
        // constant column contributes no correlation
        assert!(m.correlation()[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sampling_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = (0..300)
            .map(|_| {
                let a: f64 = rng.random_range(5.0..9.0);
                vec![Cell::Num(a), Cell::Num(a * 2.0 + rng.random::<f64>()), Cell::Cat(usize::from(rng.random_bool(0.25)))]
            })
            .collect();
        let t = Table::new(schema2(), rows).unwrap();
        let m = fit_copula(&t).unwrap();
        let s = sample(&m, 10_000, 9).unwrap();
        let (lo, hi) = t.column(0).fold((f64::MAX, f64::MIN), |(l, h), c| {
            let v = c.as_num().unwrap();
            (l.min(v), h.max(v))
        });
        assert!(s.column(0).all(|c| (lo..=hi).contains(&c.as_num().unwrap())));
        let Marginal::Categorical { frequencies } = &m.marginals()[2] else { panic!() };
        let ones = s.column(2).filter(|c| *c == Cell::Cat(1)).count() as f64 / 10_000.0;
        assert!((ones - frequencies[1]).abs() <= 0.02);
        assert_eq!(s, sample(&m, 10_000, 9).unwrap());
        assert!(sample(&m, 0, 9).is_err());
    }

    #[test]
    fn too_few_rows() {
        let rows = (0..5).map(|i| vec![Cell::Num(i as f64), Cell::Num(0.0), Cell::Cat(0)]).collect();
        assert!(fit_copula(&Table::new(schema2(), rows).unwrap()).is_err());
    }

    #[test]
    fn scenario_levels() {
        let rows: Vec<_> = (0..20)
            .map(|i| vec![Cell::Num(i as f64), Cell::Num((i * i) as f64), Cell::Cat(i % 2)])
            .collect();
        let t = Table::new(schema2(), rows).unwrap();
        let l1 = scenario_dataset(AttackLevel::SyntheticOnly, &t, None, 10, 0).unwrap();
        assert_eq!(l1, t);
        let l2 = scenario_dataset(AttackLevel::Regenerate, &t, None, 10, 0).unwrap();
        assert_eq!(l2.len(), 200);
        let err = scenario_dataset(AttackLevel::GeneratorAccess, &t, None, 10, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.csv");
        t.write_csv(&path).unwrap();
        let l3 = scenario_dataset(AttackLevel::GeneratorAccess, &t, Some(&path), 10, 0).unwrap();
        assert_eq!(l3, t);
    }

    #[test]
    fn uniform_scores_average_ties() {
        assert_eq!(uniform_scores(&[3.0, 1.0, 1.0, 2.0]), vec![0.875, 0.25, 0.25, 0.625]);
    }
}
