use super::{Gene, GeneKind, Genotype, Objectives, Problem};
use crate::error::{Error, Result};
use crate::predictor::{LossKind, PredictionOracle, Query};
use crate::selection::{harmonic_mean, NeighborIndex};
use crate::tabular::{Cell, Encoder, FeatureTransform};

/// Perturbing a selected synthetic row towards the training space.
///
/// `f1` is the harmonic mean of squared distances from the encoded genotype
/// to its `k` nearest synthetic rows; `f2` is the oracle's loss against the
/// query's own target label. The query row is removed from the index so the
/// search cannot collapse onto its own entry.
pub struct ReconstructionProblem<'a> {
    encoder: &'a Encoder,
    index: NeighborIndex,
    k: usize,
    oracle: &'a PredictionOracle,
    label: f64,
    kind: LossKind,
    kinds: Vec<GeneKind>,
}

impl<'a> ReconstructionProblem<'a> {
    pub fn new(
        encoder: &'a Encoder,
        index: &NeighborIndex,
        query_row: usize,
        k: usize,
        oracle: &'a PredictionOracle,
        label: f64,
        kind: LossKind,
    ) -> Result<Self> {
        if index.matrix().width() != encoder.width() {
            return Err(Error::Width {
                expected: encoder.width(),
                actual: index.matrix().width(),
            });
        }
        Ok(ReconstructionProblem {
            encoder,
            index: index.excluding([query_row]),
            k,
            oracle,
            label,
            kind,
            kinds: gene_kinds(encoder),
        })
    }

    pub fn encoder(&self) -> &Encoder {
        self.encoder
    }

    pub fn to_encoded(&self, g: &Genotype) -> Result<Vec<f64>> {
        to_encoded(self.encoder, g)
    }
}

impl Problem for ReconstructionProblem<'_> {
    fn gene_kinds(&self) -> &[GeneKind] {
        &self.kinds
    }

    fn evaluate(&self, genotype: &Genotype) -> Result<Objectives> {
        let x = self.to_encoded(genotype)?;
        let nn = self.index.query(&x, self.k)?;
        let distances: Vec<f64> = nn.iter().map(|n| n.sq_distance).collect();
        let f1 = harmonic_mean(&distances)?;
        let f2 = self.oracle.loss(Query::Encoded(&x), self.label, self.kind)?;
        Ok([f1, f2])
    }
}

pub fn gene_kinds(encoder: &Encoder) -> Vec<GeneKind> {
    encoder
        .transforms()
        .iter()
        .map(|t| match *t {
            FeatureTransform::MinMax { .. } => GeneKind::Continuous,
            FeatureTransform::OneHot { arity } => GeneKind::Categorical { arity },
        })
        .collect()
}

/// Genotype of a raw feature row: scaled continuous values, category indices.
pub fn genotype_from_features(encoder: &Encoder, features: &[Cell]) -> Result<Genotype> {
    let n = encoder.transforms().len();
    if features.len() < n {
        return Err(Error::Width {
            expected: n,
            actual: features.len(),
        });
    }
    encoder
        .transforms()
        .iter()
        .zip(features)
        .map(|(t, cell)| match (t, cell) {
            (FeatureTransform::MinMax { .. }, Cell::Num(v)) => Ok(Gene::Continuous(t.scale(*v))),
            (FeatureTransform::OneHot { arity }, Cell::Cat(c)) if c < arity => {
                Ok(Gene::Categorical(*c))
            }
            _ => Err(Error::Schema(format!("value {cell:?} does not fit {t:?}"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(Genotype)
}

pub fn to_encoded(encoder: &Encoder, g: &Genotype) -> Result<Vec<f64>> {
    if g.len() != encoder.transforms().len() {
        return Err(Error::Width {
            expected: encoder.transforms().len(),
            actual: g.len(),
        });
    }
    let mut out = vec![0.0; encoder.width()];
    for ((t, &off), gene) in encoder.transforms().iter().zip(encoder.offsets()).zip(&g.0) {
        match (t, gene) {
            (FeatureTransform::MinMax { .. }, Gene::Continuous(v)) => out[off] = *v,
            (FeatureTransform::OneHot { arity }, Gene::Categorical(c)) if c < arity => {
                out[off + c] = 1.0
            }
            _ => return Err(Error::Schema(format!("gene {gene:?} does not fit {t:?}"))),
        }
    }
    Ok(out)
}

/// Raw feature row for a genotype.
pub fn to_features(encoder: &Encoder, g: &Genotype) -> Result<Vec<Cell>> {
    encoder.decode(&to_encoded(encoder, g)?)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::predictor::LinearModel;
    use crate::tabular::{FeatureSpec, Schema, Table};

    fn setup() -> (Encoder, NeighborIndex, PredictionOracle) {
        let schema = Arc::new(
            Schema::new(
                vec![
                    FeatureSpec::continuous("a"),
                    FeatureSpec::categorical("c", ["x", "y"]),
                ],
                FeatureSpec::categorical("t", ["n", "p"]),
            )
            .unwrap(),
        );
        let rows = [(0.0, 0), (0.2, 0), (0.21, 0), (0.6, 1), (1.0, 1)]
            .iter()
            .map(|&(a, c)| vec![Cell::Num(a), Cell::Cat(c), Cell::Cat(1)])
            .collect();
        let table = Table::new(schema, rows).unwrap();
        let enc = Encoder::fit(&table).unwrap();
        let m = enc.encode(&table).unwrap();
        let idx = NeighborIndex::new(Arc::new(m)).unwrap();
        let oracle = PredictionOracle::Builtin(LinearModel {
            kind: LossKind::CrossEntropy,
            weights: vec![0.0; 3],
            bias: 0.0,
            loss_history: vec![],
        });
        (enc, idx, oracle)
    }

    #[test]
    fn genotype_on_another_row_has_zero_f1() {
        let (enc, idx, oracle) = setup();
        let p = ReconstructionProblem::new(&enc, &idx, 1, 2, &oracle, 1.0, LossKind::CrossEntropy)
            .unwrap();
        let g = Genotype(vec![Gene::Continuous(0.21), Gene::Categorical(0)]);
        let [f1, f2] = p.evaluate(&g).unwrap();
        assert_eq!(f1, 0.0);
        assert!((f2 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn query_row_is_excluded() {
        let (enc, idx, oracle) = setup();
        let p = ReconstructionProblem::new(&enc, &idx, 1, 1, &oracle, 1.0, LossKind::CrossEntropy)
            .unwrap();
        let g = genotype_from_features(&enc, &[Cell::Num(0.2), Cell::Cat(0)]).unwrap();
        let [f1, _] = p.evaluate(&g).unwrap();
        assert!((f1 - 0.01f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn outlier_scores_worse_than_cloud() {
        let (enc, idx, oracle) = setup();
        let p = ReconstructionProblem::new(&enc, &idx, 0, 2, &oracle, 1.0, LossKind::CrossEntropy)
            .unwrap();
        let inside = p.evaluate(&Genotype(vec![Gene::Continuous(0.205), Gene::Categorical(0)])).unwrap();
        let far = p.evaluate(&Genotype(vec![Gene::Continuous(1.0), Gene::Categorical(0)])).unwrap();
        assert!(far[0] > inside[0]);
    }

    #[test]
    fn genotype_round_trip() {
        let (enc, _, _) = setup();
        let raw = [Cell::Num(0.6), Cell::Cat(1)];
        let g = genotype_from_features(&enc, &raw).unwrap();
        assert!(g.is_valid(&gene_kinds(&enc)));
        assert_eq!(to_features(&enc, &g).unwrap(), raw.to_vec());
        assert_eq!(to_encoded(&enc, &g).unwrap(), enc.encode_row(&raw).unwrap());
    }
}
