//! Configuration and the attack, evaluate, generate and report pipelines.
//!
//! Reports are JSON documents with a fixed key order; see
//! `docs/report-format.md` for the layout. Report scalars use six decimal
//! places and per-query work is seeded from `(seed, row id)`, so a fixed
//! configuration always produces the same bytes whether or not queries run
//! in parallel.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::{evaluate_samples, EvaluationReport, DEFAULT_CLUSTER_THRESHOLD};
use crate::nsga2::{
    asf_select, evolve, genotype_from_features, to_features, EvolutionConfig, GenerationStats,
    Individual, ReconstructionProblem,
};
use crate::predictor::{
    train_builtin, ExternalPredictions, LossKind, PredictionOracle, Query, TrainConfig,
};
use crate::provider::{fit_copula, sample, scenario_dataset, AttackLevel, DEFAULT_MULTIPLIER};
use crate::selection::{
    rank_by_density, select_recovered, weighted_rank, NeighborIndex, RecoveredSet, Weights,
    DEFAULT_K, DEFAULT_TAU,
};
use crate::tabular::{load_table, Cell, Encoder, FeatureKind, Schema, Table};

pub const ATTACK_REPORT_FORMAT: &str = "synthleak-attack-report";
pub const EVALUATION_REPORT_FORMAT: &str = "synthleak-evaluation-report";
pub const REPORT_VERSION: u32 = 1;
pub const ATTACK_REPORT_FILE: &str = "attack_report.json";
pub const EVALUATION_REPORT_FILE: &str = "evaluation_report.json";
pub const GENERATED_FILE: &str = "generated.csv";
pub const TIMING_FILE: &str = "timing.json";

const STREAM_SCENARIO: u64 = 1;
const STREAM_PREDICTOR: u64 = 2;
const STREAM_EVOLUTION: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PredictorSource {
    /// Linear model trained on the attacker's table.
    #[default]
    Builtin,
    /// Per-row predictions read from a CSV file.
    External,
}

impl std::str::FromStr for PredictorSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "builtin" => Ok(PredictorSource::Builtin),
            "external" => Ok(PredictorSource::External),
            _ => Err(Error::Config(format!("unknown predictor source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSettings {
    pub source: PredictorSource,
    /// Prediction file for the external source: `row_id,prediction` rows.
    pub path: Option<PathBuf>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        PredictorSettings {
            source: PredictorSource::Builtin,
            path: None,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            l2: t.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSettings {
    pub enabled: bool,
    pub n_gen: usize,
    pub pop_size: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; absent means `1 / #genes`.
    pub mutation_prob: Option<f64>,
    pub eta_m: f64,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        let e = EvolutionConfig::default();
        EvolutionSettings {
            enabled: false,
            n_gen: e.n_gen,
            pop_size: e.pop_size,
            crossover_prob: e.crossover_prob,
            mutation_prob: e.mutation_prob,
            eta_m: e.eta_m,
        }
    }
}

impl EvolutionSettings {
    pub fn config(&self, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            n_gen: self.n_gen,
            pop_size: self.pop_size,
            crossover_prob: self.crossover_prob,
            mutation_prob: self.mutation_prob,
            eta_m: self.eta_m,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: PathBuf,
    pub synthetic: PathBuf,
    /// Training table; only used for evaluation.
    pub training: Option<PathBuf>,
    /// Generator output for level-3 attacks.
    pub external_samples: Option<PathBuf>,
    pub level: AttackLevel,
    /// Size of the training set the attacker assumes; defaults to the
    /// training table's size, else the synthetic table's.
    pub n_train: Option<usize>,
    pub k: usize,
    pub tau: f64,
    pub weights: Weights,
    pub evolution: EvolutionSettings,
    pub predictor: PredictorSettings,
    pub multiplier: usize,
    pub threshold: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: PathBuf::from("schema.toml"),
            synthetic: PathBuf::from("synthetic.csv"),
            training: None,
            external_samples: None,
            level: AttackLevel::SyntheticOnly,
            n_train: None,
            k: DEFAULT_K,
            tau: DEFAULT_TAU,
            weights: Weights::DISTANCE_ONLY,
            evolution: EvolutionSettings::default(),
            predictor: PredictorSettings::default(),
            multiplier: DEFAULT_MULTIPLIER,
            threshold: DEFAULT_CLUSTER_THRESHOLD,
            seed: 0,
            output_dir: PathBuf::from("out"),
            parallel: true,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads a TOML config; relative paths are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        resolve(base, &mut config.schema);
        resolve(base, &mut config.synthetic);
        resolve(base, &mut config.output_dir);
        for p in [
            config.training.as_mut(),
            config.external_samples.as_mut(),
            config.predictor.path.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.multiplier == 0 {
            return Err(Error::Config("multiplier must be at least 1".into()));
        }
        if self.n_train == Some(0) {
            return Err(Error::Config("n_train must be positive".into()));
        }
        self.weights
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.evolution.enabled {
            self.evolution
                .config(0)
                .validate()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.level == AttackLevel::GeneratorAccess && self.external_samples.is_none() {
            return Err(Error::Config(
                "level-3 attack requires external_samples".into(),
            ));
        }
        if self.predictor.source == PredictorSource::External && self.predictor.path.is_none() {
            return Err(Error::Config("external predictor requires predictor.path".into()));
        }
        if !(self.predictor.learning_rate > 0.0) || !(self.predictor.l2 >= 0.0) {
            return Err(Error::Config(
                "predictor learning_rate must be positive and l2 non-negative".into(),
            ));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.predictor.learning_rate,
            epochs: self.predictor.epochs,
            l2: self.predictor.l2,
            seed: derive_seed(self.seed, STREAM_PREDICTOR, 0),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for one stream and item of a run.
pub fn derive_seed(master: u64, stream: u64, item: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ item)
}

/// Seed for the copula sample drawn by level-2 attacks and `generate`.
pub fn scenario_seed(master: u64) -> u64 {
    derive_seed(master, STREAM_SCENARIO, 0)
}

/// Seed of the evolutionary search started from synthetic row `row_id`.
pub fn evolution_seed(master: u64, row_id: usize) -> u64 {
    derive_seed(master, STREAM_EVOLUTION, row_id as u64)
}

/// One evolved reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub row_id: usize,
    pub seed: u64,
    pub initial_objectives: [f64; 2],
    pub final_population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub chosen: usize,
    /// Chosen individual's features followed by the query's target.
    pub sample: Vec<Cell>,
}

/// Everything an attack computed, before rendering.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub config: RunConfig,
    pub n_train: usize,
    pub loss_kind: LossKind,
    pub synthetic_rows: usize,
    pub scenario: Table,
    pub encoder: Encoder,
    pub recovered: RecoveredSet,
    pub reconstructions: Option<Vec<Reconstruction>>,
    pub metrics: Option<EvaluationReport>,
    pub timing: Vec<(String, f64)>,
}

impl AttackRun {
    /// Reconstructed rows if evolution ran, else the recovered rows.
    pub fn final_samples(&self) -> Vec<Vec<Cell>> {
        match &self.reconstructions {
            Some(r) => r.iter().map(|r| r.sample.clone()).collect(),
            None => self.recovered.samples.clone().unwrap_or_default(),
        }
    }
}

fn reconstruct(
    config: &RunConfig,
    scenario: &Table,
    encoder: &Encoder,
    index: &NeighborIndex,
    oracle: &PredictionOracle,
    kind: LossKind,
    row_id: usize,
) -> Result<Reconstruction> {
    let target = scenario.target(row_id);
    let problem = ReconstructionProblem::new(
        encoder,
        index,
        row_id,
        config.k,
        oracle,
        kind.label(target)?,
        kind,
    )?;
    let query = genotype_from_features(encoder, scenario.features(row_id))?;
    let seed = evolution_seed(config.seed, row_id);
    let evolution = evolve(&problem, &query, &config.evolution.config(seed))?;
    let pop = evolution.population.individuals;
    let chosen = asf_select(&pop, config.weights.as_array())?;
    let mut sample = to_features(encoder, &pop[chosen].genotype)?;
    sample.push(target);
    Ok(Reconstruction {
        row_id,
        seed,
        initial_objectives: evolution.initial_objectives,
        final_population: pop,
        history: evolution.history,
        chosen,
        sample,
    })
}

/// Runs the attack pipeline without writing anything.
pub fn run_attack(config: &RunConfig) -> Result<AttackRun> {
    config.validate()?;
    let mut timing = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut Vec<(String, f64)>| {
        timing.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let schema = Arc::new(Schema::load(&config.schema)?);
    let synthetic = load_table(&config.synthetic, schema.clone())?;
    let training = config
        .training
        .as_ref()
        .map(|p| load_table(p, schema.clone()))
        .transpose()?;
    let n_train = config
        .n_train
        .or(training.as_ref().map(Table::len))
        .unwrap_or(synthetic.len());
    if config.n_train.is_none() && training.is_none() {
        log::warn!("n_train not given; assuming the training set has {n_train} rows like the synthetic table");
    }
    let scenario = scenario_dataset(
        config.level,
        &synthetic,
        config.external_samples.as_deref(),
        config.multiplier,
        scenario_seed(config.seed),
    )?;
    log::info!(
        "{} synthetic rows, {} attacker rows, n_train {n_train}",
        synthetic.len(),
        scenario.len()
    );
    lap("load", &mut timing);

    let encoder = Encoder::fit(&scenario)?;
    let matrix = Arc::new(encoder.encode(&scenario)?);
    let index = NeighborIndex::new(matrix.clone())?;
    let kind = LossKind::for_target(&schema.target)?;

    let needs_builtin = config.evolution.enabled
        || (config.weights.loss > 0.0 && config.predictor.source == PredictorSource::Builtin);
    let builtin = if needs_builtin {
        Some(train_builtin(&matrix, kind, &config.train_config())?)
    } else {
        None
    };

    let mut ranking = rank_by_density(&index, config.k)?;
    if config.weights.loss > 0.0 {
        let losses = match config.predictor.source {
            PredictorSource::Builtin => {
                let oracle = builtin.as_ref().expect("trained above");
                (0..scenario.len())
                    .map(|i| {
                        oracle.loss(Query::Encoded(matrix.row(i)), kind.label(scenario.target(i))?, kind)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            PredictorSource::External => {
                let path = config.predictor.path.as_ref().expect("validated");
                let oracle = PredictionOracle::External(ExternalPredictions::load(path, kind)?);
                (0..scenario.len())
                    .map(|i| oracle.loss(Query::RowId(i), kind.label(scenario.target(i))?, kind))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        ranking = weighted_rank(&ranking, &losses, config.weights)?;
    }
    let mut recovered = select_recovered(&ranking, n_train, config.tau)?;
    recovered.attach_samples(&scenario)?;
    log::info!("selected {} of {} rows", recovered.len(), recovered.n_recon);
    lap("select", &mut timing);

    let reconstructions = if config.evolution.enabled {
        let oracle = builtin.as_ref().expect("trained above");
        let ids = recovered.ids();
        let one = |&id: &usize| reconstruct(config, &scenario, &encoder, &index, oracle, kind, id);
        let out = if config.parallel {
            ids.par_iter().map(one).collect::<Result<Vec<_>>>()?
        } else {
            ids.iter().map(one).collect::<Result<Vec<_>>>()?
        };
        lap("evolve", &mut timing);
        Some(out)
    } else {
        None
    };

    let mut run = AttackRun {
        config: config.clone(),
        n_train,
        loss_kind: kind,
        synthetic_rows: synthetic.len(),
        scenario,
        encoder,
        recovered,
        reconstructions,
        metrics: None,
        timing: Vec::new(),
    };
    if let Some(train) = &training {
        let samples = run.final_samples();
        run.metrics = Some(evaluate_samples(
            &samples,
            train,
            n_train,
            config.tau,
            config.threshold,
        )?);
        lap("evaluate", &mut timing);
    }
    run.timing = timing;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair {
    #[serde(with = "crate::decimal")]
    pub f1: f64,
    #[serde(with = "crate::decimal")]
    pub f2: f64,
}

impl From<[f64; 2]> for ObjectivePair {
    fn from([f1, f2]: [f64; 2]) -> Self {
        ObjectivePair { f1, f2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub generation: usize,
    #[serde(with = "crate::decimal")]
    pub min_f1: f64,
    #[serde(with = "crate::decimal")]
    pub min_f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredSample {
    pub row_id: usize,
    #[serde(with = "crate::decimal")]
    pub score: f64,
    #[serde(with = "crate::decimal")]
    pub harmonic_mean: f64,
    #[serde(with = "crate::decimal::option")]
    pub loss: Option<f64>,
    pub neighbors: Vec<usize>,
    pub sample: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredBlock {
    pub k: usize,
    #[serde(with = "crate::decimal")]
    pub tau: f64,
    pub n_train: usize,
    pub n_recon: usize,
    pub exhausted: bool,
    pub entries: Vec<RecoveredSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMember {
    pub front_rank: Option<usize>,
    #[serde(with = "crate::decimal")]
    pub f1: f64,
    #[serde(with = "crate::decimal")]
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSummary {
    pub row_id: usize,
    pub seed: u64,
    pub initial: ObjectivePair,
    pub final_min: ObjectivePair,
    pub chosen_index: usize,
    pub chosen: ObjectivePair,
    pub sample: Vec<Value>,
    pub history: Vec<HistoryEntry>,
    pub final_population: Vec<PopulationMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFacts {
    /// Training-set size used for the `⌈n_train · τ⌉` budget.
    pub n_train: usize,
    pub synthetic_rows: usize,
    pub attacker_rows: usize,
    pub loss: LossKind,
    pub ranking: String,
    pub evolution_oracle: Option<String>,
    /// Which table each min-max encoder was fitted on.
    pub normalisation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub run: RunFacts,
    pub columns: Vec<String>,
    pub recovered: RecoveredBlock,
    pub evolution: Option<Vec<EvolutionSummary>>,
    pub metrics: Option<EvaluationReport>,
}

fn cell_value(schema: &Schema, col: usize, cell: Cell) -> Value {
    match cell {
        Cell::Num(v) => serde_json::Number::from_f64(v)
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Cell::Cat(c) => Value::String(schema.column(col).categories[c].clone()),
    }
}

fn row_values(schema: &Schema, row: &[Cell]) -> Vec<Value> {
    row.iter()
        .enumerate()
        .map(|(j, c)| cell_value(schema, j, *c))
        .collect()
}

/// Reads a sample row written by [`row_values`] back into cells.
pub fn parse_row_values(schema: &Schema, values: &[Value]) -> Result<Vec<Cell>> {
    let expected = schema.n_features() + 1;
    if values.len() != expected {
        return Err(Error::Report(format!(
            "sample has {} values, schema expects {expected}",
            values.len()
        )));
    }
    schema
        .columns()
        .zip(values)
        .map(|(spec, v)| match (spec.kind, v) {
            (FeatureKind::Continuous, Value::Number(n)) => n
                .as_f64()
                .map(Cell::Num)
                .ok_or_else(|| Error::Report(format!("bad number {n} for {}", spec.name))),
            (FeatureKind::Categorical, Value::String(s)) => spec
                .category_index(s)
                .map(Cell::Cat)
                .ok_or_else(|| Error::Report(format!("unknown category {s:?} for {}", spec.name))),
            _ => Err(Error::Report(format!("value {v} does not fit column {}", spec.name))),
        })
        .collect()
}

impl AttackReport {
    pub fn from_run(run: &AttackRun) -> Self {
        let schema = run.scenario.schema();
        let samples = run.recovered.samples.as_deref().unwrap_or(&[]);
        let entries = run
            .recovered
            .entries
            .iter()
            .zip(samples)
            .map(|(e, s)| RecoveredSample {
                row_id: e.row_id,
                score: e.score,
                harmonic_mean: e.harmonic_mean,
                loss: e.loss,
                neighbors: e.neighbors.clone(),
                sample: row_values(schema, s),
            })
            .collect();
        let evolution = run.reconstructions.as_ref().map(|recs| {
            recs.iter()
                .map(|r| {
                    let min = r.final_population.iter().fold([f64::INFINITY; 2], |a, i| {
                        [a[0].min(i.objectives[0]), a[1].min(i.objectives[1])]
                    });
                    EvolutionSummary {
                        row_id: r.row_id,
                        seed: r.seed,
                        initial: r.initial_objectives.into(),
                        final_min: min.into(),
                        chosen_index: r.chosen,
                        chosen: r.final_population[r.chosen].objectives.into(),
                        sample: row_values(schema, &r.sample),
                        history: r
                            .history
                            .iter()
                            .map(|h| HistoryEntry {
                                generation: h.generation,
                                min_f1: h.min_f1,
                                min_f2: h.min_f2,
                            })
                            .collect(),
                        final_population: r
                            .final_population
                            .iter()
                            .map(|i| PopulationMember {
                                front_rank: i.front_rank,
                                f1: i.objectives[0],
                                f2: i.objectives[1],
                            })
                            .collect(),
                    }
                })
                .collect()
        });
        let ranking = if run.config.weights.loss > 0.0 {
            match run.config.predictor.source {
                PredictorSource::Builtin => "weighted-builtin",
                PredictorSource::External => "weighted-external",
            }
        } else {
            "density"
        };
        AttackReport {
            format: ATTACK_REPORT_FORMAT.to_string(),
            version: REPORT_VERSION,
            config: run.config.clone(),
            run: RunFacts {
                n_train: run.n_train,
                synthetic_rows: run.synthetic_rows,
                attacker_rows: run.scenario.len(),
                loss: run.loss_kind,
                ranking: ranking.to_string(),
                evolution_oracle: run
                    .reconstructions
                    .as_ref()
                    .map(|_| "builtin".to_string()),
                normalisation: "attack: attacker table; metrics: training table".to_string(),
            },
            columns: schema.column_names(),
            recovered: RecoveredBlock {
                k: run.recovered.k,
                tau: run.recovered.tau,
                n_train: run.recovered.n_train,
                n_recon: run.recovered.n_recon,
                exhausted: run.recovered.exhausted,
                entries,
            },
            evolution,
            metrics: run.metrics.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: AttackReport =
            serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if report.format != ATTACK_REPORT_FORMAT {
            return Err(Error::Report(format!("not an attack report: {:?}", report.format)));
        }
        if report.version != REPORT_VERSION {
            return Err(Error::Report(format!(
                "unsupported report version {}",
                report.version
            )));
        }
        Ok(report)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))
    }

    /// The rows an evaluation should score: evolved reconstructions when
    /// present, otherwise the recovered rows.
    pub fn final_samples(&self, schema: &Schema) -> Result<Vec<Vec<Cell>>> {
        match &self.evolution {
            Some(evo) => evo.iter().map(|e| parse_row_values(schema, &e.sample)).collect(),
            None => self
                .recovered
                .entries
                .iter()
                .map(|e| parse_row_values(schema, &e.sample))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub format: String,
    pub version: u32,
    /// `evolved` or `recovered`.
    pub samples_from: String,
    pub metrics: EvaluationReport,
}

impl EvaluationDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: EvaluationDocument = serde_json::from_str(&text)
            .map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
        if doc.format != EVALUATION_REPORT_FORMAT {
            return Err(Error::Report(format!("not an evaluation report: {:?}", doc.format)));
        }
        Ok(doc)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_timing(dir: &Path, timing: &[(String, f64)]) -> Result<()> {
    let map: serde_json::Map<String, Value> = timing
        .iter()
        .map(|(k, v)| {
            (
                k.clone(),
                serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
            )
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("timing serialises");
    text.push('\n');
    write_file(&dir.join(TIMING_FILE), &text)
}

/// Runs the attack and writes `attack_report.json` (plus wall-clock timings
/// in `timing.json`, kept apart so the report stays reproducible).
pub fn cmd_attack(config: &RunConfig) -> Result<AttackReport> {
    let run = run_attack(config)?;
    let report = AttackReport::from_run(&run);
    let path = config.output_dir.join(ATTACK_REPORT_FILE);
    write_file(&path, &report.to_json())?;
    write_timing(&config.output_dir, &run.timing)?;
    log::info!("wrote {}", path.display());
    Ok(report)
}

/// Scores an attack report against a training table and writes
/// `evaluation_report.json` next to it. The budget uses the report's
/// `n_train` and `tau`; the schema and threshold come from `config`.
pub fn cmd_evaluate(report_path: &Path, training: &Path, config: &RunConfig) -> Result<EvaluationReport> {
    if !(config.threshold > 0.0) {
        return Err(Error::Config(format!(
            "threshold must be positive, got {}",
            config.threshold
        )));
    }
    let report = AttackReport::load(report_path)?;
    let schema = Arc::new(Schema::load(&config.schema)?);
    if report.columns != schema.column_names() {
        return Err(Error::Schema(format!(
            "report columns {:?} do not match the schema {:?}",
            report.columns,
            schema.column_names()
        )));
    }
    let train = load_table(training, schema.clone())?;
    let samples = report.final_samples(&schema)?;
    let metrics = evaluate_samples(
        &samples,
        &train,
        report.run.n_train,
        report.config.tau,
        config.threshold,
    )?;
    let doc = EvaluationDocument {
        format: EVALUATION_REPORT_FORMAT.to_string(),
        version: REPORT_VERSION,
        samples_from: if report.evolution.is_some() { "evolved" } else { "recovered" }.to_string(),
        metrics: metrics.clone(),
    };
    let dir = report_path.parent().unwrap_or(Path::new(""));
    let out = dir.join(EVALUATION_REPORT_FILE);
    write_file(&out, &doc.to_json())?;
    log::info!("wrote {}", out.display());
    Ok(metrics)
}

/// Fits the copula to the synthetic table and writes `multiplier · |D′|`
/// sampled rows to `generated.csv`. The sample equals the one a level-2
/// attack with the same seed would rank.
pub fn cmd_generate(config: &RunConfig) -> Result<PathBuf> {
    if config.multiplier == 0 {
        return Err(Error::Config("multiplier must be at least 1".into()));
    }
    let schema = Arc::new(Schema::load(&config.schema)?);
    let synthetic = load_table(&config.synthetic, schema)?;
    let model = fit_copula(&synthetic)?;
    let table = sample(&model, config.multiplier * synthetic.len(), scenario_seed(config.seed))?;
    let path = config.output_dir.join(GENERATED_FILE);
    write_file(&path, &table.to_csv_string())?;
    log::info!("wrote {} rows to {}", table.len(), path.display());
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::Config(format!(
                "unknown report format {s:?} (expected text or markdown)"
            ))),
        }
    }
}

fn metric_table(m: &EvaluationReport, format: ReportFormat) -> String {
    let f = crate::decimal::format;
    let mut s = String::new();
    match format {
        ReportFormat::Text => {
            writeln!(s, "{:>14}  {:>10}  {:>10}  {:>10}  {:>10}", "Unique Samples", "Hit Rate", "DCR", "DCR min", "DCR max").unwrap();
            writeln!(
                s,
                "{:>14}  {:>10}  {:>10}  {:>10}  {:>10}",
                m.unique_samples,
                f(m.hit_rate),
                f(m.dcr_mean),
                f(m.dcr_min),
                f(m.dcr_max)
            )
            .unwrap();
            writeln!(
                s,
                "compromised {} of budget {} ({} samples, threshold {})",
                m.compromised,
                m.budget,
                m.n_samples,
                f(m.threshold)
            )
            .unwrap();
        }
        ReportFormat::Markdown => {
            writeln!(s, "| Unique Samples | Hit Rate | DCR | DCR min | DCR max |").unwrap();
            writeln!(s, "|---:|---:|---:|---:|---:|").unwrap();
            writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                m.unique_samples,
                f(m.hit_rate),
                f(m.dcr_mean),
                f(m.dcr_min),
                f(m.dcr_max)
            )
            .unwrap();
            writeln!(
                s,
                "\nCompromised {} of budget {} ({} samples, threshold {}).",
                m.compromised,
                m.budget,
                m.n_samples,
                f(m.threshold)
            )
            .unwrap();
        }
    }
    if m.empty {
        writeln!(s, "(nothing was evaluated)").unwrap();
    }
    s
}

fn render_attack(r: &AttackReport, format: ReportFormat) -> String {
    let f = crate::decimal::format;
    let c = &r.config;
    let level = serde_json::to_value(c.level).ok();
    let level = level.as_ref().and_then(Value::as_str).unwrap_or("?");
    let evo = if c.evolution.enabled {
        format!("on ({} generations, population {})", c.evolution.n_gen, c.evolution.pop_size)
    } else {
        "off".to_string()
    };
    let mut s = String::new();
    let heading = match format {
        ReportFormat::Text => "Attack report\n",
        ReportFormat::Markdown => "# Attack report\n\n",
    };
    s.push_str(heading);
    let lines = [
        format!("level: {level}"),
        format!("k: {}, tau: {}, weights: ({}, {})", c.k, f(c.tau), f(c.weights.distance), f(c.weights.loss)),
        format!("ranking: {}, evolution: {evo}", r.run.ranking),
        format!(
            "synthetic rows: {}, attacker rows: {}, n_train: {}",
            r.run.synthetic_rows, r.run.attacker_rows, r.run.n_train
        ),
        format!(
            "recovered: {} of {}{}",
            r.recovered.entries.len(),
            r.recovered.n_recon,
            if r.recovered.exhausted { " (ranking exhausted)" } else { "" }
        ),
    ];
    for l in lines {
        match format {
            ReportFormat::Text => writeln!(s, "  {l}").unwrap(),
            ReportFormat::Markdown => writeln!(s, "- {l}").unwrap(),
        }
    }
    s.push('\n');
    match &r.metrics {
        Some(m) => {
            if format == ReportFormat::Markdown {
                s.push_str("## Metrics\n\n");
            }
            s.push_str(&metric_table(m, format));
        }
        None => s.push_str(
            "No metric block: the attack ran without a training table. Run `evaluate` to score it.\n",
        ),
    }
    s
}

/// Human-readable summary of an attack or evaluation report file.
pub fn cmd_report(path: &Path, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let head: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    match head.get("format").and_then(Value::as_str) {
        Some(ATTACK_REPORT_FORMAT) => Ok(render_attack(&AttackReport::from_json(&text)?, format)),
        Some(EVALUATION_REPORT_FORMAT) => {
            let doc = EvaluationDocument::load(path)?;
            let mut s = match format {
                ReportFormat::Text => format!("Evaluation report ({} samples)\n\n", doc.samples_from),
                ReportFormat::Markdown => format!("# Evaluation report ({} samples)\n\n", doc.samples_from),
            };
            s.push_str(&metric_table(&doc.metrics, format));
            Ok(s)
        }
        other => Err(Error::Report(format!(
            "{}: unrecognised report format {other:?}",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let c = RunConfig::from_toml_str("synthetic = \"s.csv\"\nk = 3\n[evolution]\nenabled = true\n").unwrap();
        assert_eq!(c.k, 3);
        assert_eq!(c.tau, 0.05);
        assert_eq!(c.threshold, 0.025);
        assert_eq!(c.multiplier, 10);
        assert_eq!(c.weights, Weights::DISTANCE_ONLY);
        assert!(c.evolution.enabled);
        assert_eq!(c.evolution.pop_size, 100);
        assert_eq!(c.evolution.n_gen, 50);
        c.validate().unwrap();
        assert!(RunConfig::from_toml_str("kk = 3").is_err());
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let bad = [
            RunConfig { k: 0, ..Default::default() },
            RunConfig { tau: 0.0, ..Default::default() },
            RunConfig { tau: 1.5, ..Default::default() },
            RunConfig { threshold: 0.0, ..Default::default() },
            RunConfig { level: AttackLevel::GeneratorAccess, ..Default::default() },
            RunConfig {
                weights: Weights { distance: 0.5, loss: 0.6 },
                ..Default::default()
            },
        ];
        for c in bad {
            let e = c.validate().unwrap_err();
            assert_eq!(e.class().exit_code(), 2, "{e}");
        }
    }

    #[test]
    fn seeds_differ_by_stream_and_row() {
        let a = evolution_seed(7, 1);
        assert_ne!(a, evolution_seed(7, 2));
        assert_ne!(a, evolution_seed(8, 1));
        assert_ne!(scenario_seed(7), derive_seed(7, STREAM_PREDICTOR, 0));
        assert_eq!(a, evolution_seed(7, 1));
    }

    #[test]
    fn report_format_parsing() {
        assert_eq!("text".parse::<ReportFormat>().unwrap(), ReportFormat::Text);
        assert_eq!("markdown".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert_eq!("html".parse::<ReportFormat>().unwrap_err().class().exit_code(), 2);
    }
}
