//! Prediction-loss oracles.
//!
//! Two flavours: a linear model (logistic for binary targets, least squares
//! for continuous ones) trained by full-batch gradient descent on encoded
//! rows, and a black-box table of predictions keyed by row id, standing in
//! for query-only access to a model trained on private data.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Cell, EncodedMatrix, FeatureKind, FeatureSpec};

pub const PROBABILITY_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    RootMeanSquaredError,
}

impl LossKind {
    /// Cross-entropy for binary categorical targets, RMSE for continuous ones.
    pub fn for_target(target: &FeatureSpec) -> Result<Self> {
        match target.kind {
            FeatureKind::Categorical if target.categories.len() == 2 => Ok(LossKind::CrossEntropy),
            FeatureKind::Categorical => Err(Error::Schema(format!(
                "target {:?} has {} classes; only binary classification is supported",
                target.name,
                target.categories.len()
            ))),
            FeatureKind::Continuous => Ok(LossKind::RootMeanSquaredError),
        }
    }

    /// Numeric label for a raw target cell: class position for categorical
    /// targets, the value itself otherwise.
    pub fn label(&self, cell: Cell) -> Result<f64> {
        match (self, cell) {
            (LossKind::CrossEntropy, Cell::Cat(c)) if c <= 1 => Ok(c as f64),
            (LossKind::RootMeanSquaredError, Cell::Num(v)) => Ok(v),
            _ => Err(Error::InvalidParameter(format!(
                "target value {cell:?} does not match loss {self:?}"
            ))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with `p` clamped away from 0 and 1.
pub fn cross_entropy(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub kind: LossKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularised training objective after each epoch.
    pub loss_history: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::Width {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        let z = self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        Ok(match self.kind {
            LossKind::CrossEntropy => sigmoid(z),
            LossKind::RootMeanSquaredError => z,
        })
    }
}

/// Regularised mean training objective and its gradient with respect to
/// `params = [weights.., bias]`. Cross-entropy for classification, half mean
/// squared error for regression; the bias is not penalised.
pub fn objective_and_gradient(
    params: &[f64],
    matrix: &EncodedMatrix,
    labels: &[f64],
    kind: LossKind,
    l2: f64,
) -> (f64, Vec<f64>) {
    let d = matrix.width();
    let n = matrix.n_rows() as f64;
    let (w, b) = (&params[..d], params[d]);
    let mut grad = vec![0.0; d + 1];
    let mut total = 0.0;
    for (x, &y) in matrix.rows().zip(labels) {
        let z = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        let residual = match kind {
            LossKind::CrossEntropy => {
                // unclamped so the gradient is exact
                let p = sigmoid(z);
                total += if y > 0.5 {
                    softplus(-z)
                } else {
                    softplus(z)
                };
                p - y
            }
            LossKind::RootMeanSquaredError => {
                total += 0.5 * (z - y) * (z - y);
                z - y
            }
        };
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += residual * xi;
        }
        grad[d] += residual;
    }
    let penalty = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    (total / n + penalty, grad)
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Fits the built-in linear model on encoded rows and their raw targets.
///
/// The step size is capped at `1 / L`, with `L` an upper bound on the
/// gradient's Lipschitz constant, so the objective never increases.
pub fn train_builtin(
    matrix: &EncodedMatrix,
    kind: LossKind,
    config: &TrainConfig,
) -> Result<PredictionOracle> {
    if matrix.n_rows() < 2 {
        return Err(Error::Empty("need at least two samples to train".into()));
    }
    if !(config.learning_rate > 0.0) || config.l2 < 0.0 {
        return Err(Error::InvalidParameter(
            "learning rate must be positive and l2 non-negative".into(),
        ));
    }
    let labels = matrix
        .targets()
        .iter()
        .map(|c| kind.label(*c))
        .collect::<Result<Vec<_>>>()?;
    if kind == LossKind::CrossEntropy {
        let positives = labels.iter().filter(|y| **y > 0.5).count();
        if positives == 0 || positives == labels.len() {
            return Err(Error::DegenerateTarget(
                "training target has a single class; use a constant predictor instead".into(),
            ));
        }
    }

    let d = matrix.width();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).unwrap();
    let mut params: Vec<f64> = (0..=d).map(|_| init.sample(&mut rng)).collect();

    // trace(XᵀX)/n over [x, 1] bounds the largest eigenvalue
    let mean_sq_norm =
        matrix.rows().map(|x| x.iter().map(|v| v * v).sum::<f64>() + 1.0).sum::<f64>()
            / matrix.n_rows() as f64;
    let curvature = match kind {
        LossKind::CrossEntropy => 0.25 * mean_sq_norm,
        LossKind::RootMeanSquaredError => mean_sq_norm,
    } + config.l2;
    let step = config.learning_rate.min(1.0 / curvature);

    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (_, grad) = objective_and_gradient(&params, matrix, &labels, kind, config.l2);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= step * g;
        }
        let (obj, _) = objective_and_gradient(&params, matrix, &labels, kind, config.l2);
        loss_history.push(obj);
    }
    let bias = params.pop().unwrap();
    Ok(PredictionOracle::Builtin(LinearModel {
        kind,
        weights: params,
        bias,
        loss_history,
    }))
}

/// Predictions for known row ids, read from a two-column CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPredictions {
    pub kind: LossKind,
    values: HashMap<usize, f64>,
}

impl ExternalPredictions {
    pub fn new(kind: LossKind, values: HashMap<usize, f64>) -> Self {
        ExternalPredictions { kind, values }
    }

    pub fn load(path: impl AsRef<Path>, kind: LossKind) -> Result<Self> {
        let path = path.as_ref();
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_err(e.to_string()))?;
        let mut values = HashMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(e.to_string()))?;
            if rec.len() < 2 {
                return Err(Error::Value {
                    row: i,
                    message: "expected row id and prediction".into(),
                });
            }
            let id: usize = rec[0].parse().map_err(|_| Error::Parse {
                row: i,
                column: "row_id".into(),
                value: rec[0].to_string(),
            })?;
            let v: f64 = rec[1].parse().map_err(|_| Error::Parse {
                row: i,
                column: "prediction".into(),
                value: rec[1].to_string(),
            })?;
            if values.insert(id, v).is_some() {
                return Err(Error::Value {
                    row: i,
                    message: format!("duplicate row id {id}"),
                });
            }
        }
        Ok(ExternalPredictions { kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionOracle {
    Builtin(LinearModel),
    External(ExternalPredictions),
}

/// What an oracle is asked about: an encoded row for the built-in model, a
/// row id for the external table.
#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    Encoded(&'a [f64]),
    RowId(usize),
}

impl PredictionOracle {
    pub fn kind(&self) -> LossKind {
        match self {
            PredictionOracle::Builtin(m) => m.kind,
            PredictionOracle::External(e) => e.kind,
        }
    }

    pub fn predict(&self, query: Query<'_>) -> Result<f64> {
        match (self, query) {
            (PredictionOracle::Builtin(m), Query::Encoded(x)) => m.predict(x),
            (PredictionOracle::External(e), Query::RowId(id)) => {
                e.values.get(&id).copied().ok_or(Error::UnknownRow(id))
            }
            (PredictionOracle::Builtin(_), Query::RowId(_)) => Err(Error::InvalidParameter(
                "built-in model needs an encoded row, not a row id".into(),
            )),
            (PredictionOracle::External(_), Query::Encoded(_)) => Err(Error::InvalidParameter(
                "external predictions are keyed by row id".into(),
            )),
        }
    }

    /// Per-sample loss of the oracle's prediction against label `y`.
    /// For regression this is the single-sample RMSE, i.e. `|ŷ − y|`.
    pub fn loss(&self, query: Query<'_>, y: f64, kind: LossKind) -> Result<f64> {
        if kind != self.kind() {
            return Err(Error::InvalidParameter(format!(
                "oracle predicts for {:?} but {kind:?} was requested",
                self.kind()
            )));
        }
        let pred = self.predict(query)?;
        match kind {
            LossKind::CrossEntropy => {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "cross-entropy label must be 0 or 1, got {y}"
                    )));
                }
                Ok(cross_entropy(pred, y))
            }
            LossKind::RootMeanSquaredError => Ok((pred - y).abs()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_separable() -> EncodedMatrix {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if (a + b - 1.0).abs() < 0.2 {
                continue;
            }
            rows.push(vec![a, b]);
            targets.push(Cell::Cat(usize::from(a + b > 1.0)));
        }
        EncodedMatrix::from_rows(rows, targets).unwrap()
    }

    fn zero_model() -> PredictionOracle {
        PredictionOracle::Builtin(LinearModel {
            kind: LossKind::CrossEntropy,
            weights: vec![0.0; 3],
            bias: 0.0,
            loss_history: vec![],
        })
    }

    #[test]
    fn separable_set_is_fit_perfectly() {
        let m = toy_separable();
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 500,
            l2: 0.0,
            seed: 1,
        };
        let oracle = train_builtin(&m, LossKind::CrossEntropy, &cfg).unwrap();
        let correct = m
            .rows()
            .zip(m.targets())
            .filter(|(x, y)| {
                let p = oracle.predict(Query::Encoded(x)).unwrap();
                (p > 0.5) == (y.as_cat() == Some(1))
            })
            .count();
        assert_eq!(correct, m.n_rows());
    }

    #[test]
    fn training_is_deterministic_and_monotone() {
        let m = toy_separable();
        let cfg = TrainConfig::default();
        let a = train_builtin(&m, LossKind::CrossEntropy, &cfg).unwrap();
        let b = train_builtin(&m, LossKind::CrossEntropy, &cfg).unwrap();
        assert_eq!(a, b);
        let PredictionOracle::Builtin(model) = a else { unreachable!() };
        for w in model.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn regression_training_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random(), rng.random()]).collect();
        let targets = rows.iter().map(|r| Cell::Num(3.0 * r[0] - 2.0 * r[1] + 1.0)).collect();
        let m = EncodedMatrix::from_rows(rows, targets).unwrap();
        let oracle = train_builtin(&m, LossKind::RootMeanSquaredError, &TrainConfig::default()).unwrap();
        let PredictionOracle::Builtin(model) = &oracle else { unreachable!() };
        for w in model.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(model.loss_history.last().unwrap() < &model.loss_history[0]);
    }

    #[test]
    fn single_class_target_rejected() {
        let m = EncodedMatrix::from_rows(vec![vec![0.1], vec![0.9]], vec![Cell::Cat(1), Cell::Cat(1)]).unwrap();
        let err = train_builtin(&m, LossKind::CrossEntropy, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)));
    }

    #[test]
    fn zero_weights_predict_half() {
        let p = zero_model().predict(Query::Encoded(&[0.3, 0.9, 0.1])).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn external_lookup() {
        let oracle = PredictionOracle::External(ExternalPredictions::new(
            LossKind::CrossEntropy,
            HashMap::from([(7, 0.83)]),
        ));
        assert_eq!(oracle.predict(Query::RowId(7)).unwrap(), 0.83);
        assert_eq!(oracle.predict(Query::RowId(7)).unwrap(), 0.83);
        assert!(matches!(oracle.predict(Query::RowId(8)), Err(Error::UnknownRow(8))));
    }

    #[test]
    fn external_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.csv");
        std::fs::write(&path, "row_id,prediction\n0,0.25\n3,0.9\n").unwrap();
        let e = ExternalPredictions::load(&path, LossKind::CrossEntropy).unwrap();
        assert_eq!(e.len(), 2);
        std::fs::write(&path, "row_id,prediction\n0,0.25\n0,0.9\n").unwrap();
        assert!(ExternalPredictions::load(&path, LossKind::CrossEntropy).is_err());
    }

    #[test]
    fn loss_values() {
        assert!(cross_entropy(1.0 - 1e-12, 1.0) < 1e-11);
        assert!((cross_entropy(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(cross_entropy(0.0, 1.0).is_finite());
        let reg = PredictionOracle::Builtin(LinearModel {
            kind: LossKind::RootMeanSquaredError,
            weights: vec![0.0],
            bias: 3.0,
            loss_history: vec![],
        });
        assert_eq!(reg.loss(Query::Encoded(&[0.4]), 5.0, LossKind::RootMeanSquaredError).unwrap(), 2.0);
        assert!(reg.loss(Query::Encoded(&[0.4]), 1.0, LossKind::CrossEntropy).is_err());
        assert!(zero_model().loss(Query::Encoded(&[0.0; 3]), 0.4, LossKind::CrossEntropy).is_err());
    }

    #[test]
    fn cross_entropy_decreasing_in_p_for_positive_label() {
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let ce = cross_entropy(i as f64 / 100.0, 1.0);
            assert!(ce < prev);
            prev = ce;
        }
        assert!(cross_entropy(0.0, 0.0) < 1e-11);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
        let cls: Vec<Cell> = (0..40).map(|i| Cell::Cat(i % 2)).collect();
        let m = EncodedMatrix::from_rows(rows, cls).unwrap();
        let labels: Vec<f64> = m.targets().iter().map(|c| c.as_cat().unwrap() as f64).collect();
        for kind in [LossKind::CrossEntropy, LossKind::RootMeanSquaredError] {
            for _ in 0..20 {
                let params: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (_, grad) = objective_and_gradient(&params, &m, &labels, kind, 0.01);
                for j in 0..4 {
                    let h = 1e-6;
                    let mut up = params.clone();
                    let mut dn = params.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (objective_and_gradient(&up, &m, &labels, kind, 0.01).0
                        - objective_and_gradient(&dn, &m, &labels, kind, 0.01).0)
                        / (2.0 * h);
                    let rel = (fd - grad[j]).abs() / grad[j].abs().max(1e-8);
                    assert!(rel < 1e-5, "{kind:?} j={j} fd={fd} g={}", grad[j]);
                }
            }
        }
    }

    #[test]
    fn loss_kind_from_target() {
        assert_eq!(
            LossKind::for_target(&FeatureSpec::categorical("y", ["a", "b"])).unwrap(),
            LossKind::CrossEntropy
        );
        assert_eq!(
            LossKind::for_target(&FeatureSpec::continuous("y")).unwrap(),
            LossKind::RootMeanSquaredError
        );
        assert!(LossKind::for_target(&FeatureSpec::categorical("y", ["a", "b", "c"])).is_err());
    }
}
