//! Training loop, corpus mixing and grid search.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, SourceTag};
use crate::diffcore::{write_checkpoint, AdamConfig, AdamState, Mode, Scalar};
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::eval::{evaluate, EvalError, MacroOver};
use crate::pcnn::{loss_and_grads, ModelConfig, ModelError, ModelParams};
use crate::preprocess::{build_instances, InstanceSet, PreprocessConfig, RelationInstance};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("trial {0} is outside the grid")]
    NoSuchTrial(usize),
    #[error("no prepared data for max_seq_len {0}")]
    MissingData(usize),
    #[error("merging corpora: {0}")]
    Merge(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(String),
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_seq_len: usize,
    pub n_filters: usize,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.001,
            max_seq_len: 200,
            n_filters: 128,
            seed: 0,
            augment: false,
        }
    }
}

impl TrainConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push("batch_size must be positive".to_owned());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(format!(
                "learning_rate must be positive (got {})",
                self.learning_rate
            ));
        }
        if self.max_seq_len < 2 {
            out.push(format!(
                "max_seq_len must be at least 2 (got {})",
                self.max_seq_len
            ));
        }
        if self.n_filters == 0 {
            out.push("n_filters must be positive".to_owned());
        }
        out
    }

    /// `base` with the fields this config controls replaced.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            n_filters: self.n_filters,
            max_seq_len: self.max_seq_len,
            ..base.clone()
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

fn namespaced(corpus: &Corpus) -> Corpus {
    let prefix = format!("{}/", corpus.source);
    let mut out = corpus.clone();
    for doc in &mut out.documents {
        doc.doc_id.insert_str(0, &prefix);
        for e in &mut doc.entities {
            e.entity_id.insert_str(0, &prefix);
        }
    }
    for r in &mut out.relations {
        r.arg1_id.insert_str(0, &prefix);
        r.arg2_id.insert_str(0, &prefix);
    }
    out
}

/// Disjoint union of two corpora. Document and entity ids are prefixed with
/// the source tag of their corpus; a collision after prefixing is an error.
pub fn augment(primary: &Corpus, other: &Corpus) -> Result<Corpus, TrainError> {
    let (a, b) = (namespaced(primary), namespaced(other));
    let mut entity_ids = std::collections::HashSet::new();
    for doc in a.documents.iter().chain(&b.documents) {
        for e in &doc.entities {
            if !entity_ids.insert(e.entity_id.as_str()) {
                return Err(TrainError::Merge(CorpusError::DuplicateDocument(format!(
                    "{} (entity {})",
                    doc.doc_id, e.entity_id
                ))));
            }
        }
    }
    let documents = a.documents.into_iter().chain(b.documents).collect();
    let relations = a.relations.into_iter().chain(b.relations).collect();
    Ok(Corpus::new(documents, relations, SourceTag::Merged)?)
}

/// Trains `params` in place with mini-batch Adam. Every epoch shuffles the
/// data with a generator seeded from `cfg.seed`; the last batch may be short.
pub fn train<F: Scalar>(
    instances: &[RelationInstance],
    cfg: &TrainConfig,
    model: &ModelConfig,
    params: &mut ModelParams<F>,
) -> Result<TrainLog, TrainError> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(TrainError::Config(violations));
    }
    if instances.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    params.check_shapes(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut log = TrainLog::default();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| instances[i].clone()));
            let loss = loss_and_grads(&batch, params, model, Mode::Train, &mut rng)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            weighted += loss.to_f64_lossy() * chunk.len() as f64;
            let (names, tensors): (Vec<String>, Vec<_>) =
                params.trainable_mut().into_iter().unzip();
            let mut list: Vec<(&str, &mut _)> =
                names.iter().map(String::as_str).zip(tensors).collect();
            adam.step(&mut list).map_err(ModelError::from)?;
        }
        log.epoch_losses.push(weighted / instances.len() as f64);
    }
    params.clear_grads();
    Ok(log)
}

/// Lists of values swept by [`grid_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub epochs: Vec<usize>,
    pub max_seq_len: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub n_filters: Vec<usize>,
    pub learning_rate: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid::standard()
    }
}

impl Grid {
    /// The standard sweep: 3 × 2 × 2 × 3 × 2 = 72 configurations.
    pub fn standard() -> Self {
        Grid {
            epochs: vec![100, 200, 400],
            max_seq_len: vec![100, 200],
            batch_size: vec![32, 64],
            n_filters: vec![32, 64, 128],
            learning_rate: vec![0.001, 0.0005],
        }
    }

    /// A grid holding exactly one configuration.
    pub fn single(cfg: &TrainConfig) -> Self {
        Grid {
            epochs: vec![cfg.epochs],
            max_seq_len: vec![cfg.max_seq_len],
            batch_size: vec![cfg.batch_size],
            n_filters: vec![cfg.n_filters],
            learning_rate: vec![cfg.learning_rate],
        }
    }

    /// All configurations in a fixed order. Trial `k` is seeded with
    /// `seed ^ k`.
    pub fn configs(&self, seed: u64, augment: bool) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &epochs in &self.epochs {
            for &max_seq_len in &self.max_seq_len {
                for &batch_size in &self.batch_size {
                    for &n_filters in &self.n_filters {
                        for &learning_rate in &self.learning_rate {
                            let k = out.len() as u64;
                            out.push(TrainConfig {
                                epochs,
                                batch_size,
                                learning_rate,
                                max_seq_len,
                                n_filters,
                                seed: seed ^ k,
                                augment,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Train and validation instances built for one `max_seq_len`.
#[derive(Clone, Debug, Default)]
pub struct SplitData {
    pub train: Vec<RelationInstance>,
    pub valid: Vec<RelationInstance>,
}

/// Relations left out of the instance sets, by sequence length.
pub type RejectedNotes = BTreeMap<usize, Vec<String>>;

/// Builds instances of both splits for every sequence length in `lengths`.
/// Relations that cannot be turned into instances are returned per length.
pub fn prepare_splits(
    train: &Corpus,
    valid: &Corpus,
    vocab: &Vocabulary,
    base: &PreprocessConfig,
    lengths: &[usize],
) -> Result<(BTreeMap<usize, SplitData>, RejectedNotes), TrainError> {
    let train_rel = train.resolve()?;
    let valid_rel = valid.resolve()?;
    let mut data = BTreeMap::new();
    let mut rejected = BTreeMap::new();
    for &len in lengths {
        let pre = base.with_len(len);
        let t: InstanceSet = build_instances(&train_rel, vocab, &pre);
        let v: InstanceSet = build_instances(&valid_rel, vocab, &pre);
        let notes: Vec<String> = t
            .rejected
            .iter()
            .chain(&v.rejected)
            .map(|(rel, e)| format!("{rel}: {e}"))
            .collect();
        rejected.insert(len, notes);
        data.insert(
            len,
            SplitData {
                train: t.instances,
                valid: v.instances,
            },
        );
    }
    Ok((data, rejected))
}

/// Everything a trial needs besides its configuration.
#[derive(Clone, Debug)]
pub struct TrialInputs<F> {
    pub data: BTreeMap<usize, SplitData>,
    pub word_table: EmbeddingTable<F>,
    pub model: ModelConfig,
    pub macro_over: MacroOver,
    /// Where to write one checkpoint per trial, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
    pub preprocess: PreprocessConfig,
    pub vocab: Vocabulary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub config: TrainConfig,
    pub macro_f1: f64,
    pub checkpoint: Option<PathBuf>,
    pub epoch_losses: Vec<f64>,
}

/// Initial parameters for a run: fresh layers around a copy of the word
/// table, drawn from the run seed.
pub fn init_params<F: Scalar>(
    cfg: &TrainConfig,
    model: &ModelConfig,
    word_table: &EmbeddingTable<F>,
) -> Result<(ModelConfig, ModelParams<F>), TrainError> {
    let model = cfg.model_config(model);
    let params = ModelParams::init(&model, word_table.clone(), cfg.seed)?;
    Ok((model, params))
}

/// Runs trial `k` of `configs` on its own.
pub fn run_trial<F: Scalar>(
    k: usize,
    configs: &[TrainConfig],
    inputs: &TrialInputs<F>,
) -> Result<TrialResult, TrainError> {
    let cfg = configs.get(k).ok_or(TrainError::NoSuchTrial(k))?;
    let split = inputs
        .data
        .get(&cfg.max_seq_len)
        .ok_or(TrainError::MissingData(cfg.max_seq_len))?;
    if split.valid.is_empty() {
        return Err(TrainError::EmptyValidationSet);
    }
    let (model, mut params) = init_params(cfg, &inputs.model, &inputs.word_table)?;
    let log = train(&split.train, cfg, &model, &mut params)?;
    let (report, _) = evaluate(&split.valid, &params, &model, inputs.macro_over)?;
    let checkpoint = match &inputs.checkpoint_dir {
        Some(dir) => {
            let path = dir.join(format!("trial-{k:03}.ckpt"));
            let ckpt = params.to_checkpoint(
                &model,
                &inputs.preprocess.with_len(cfg.max_seq_len),
                &inputs.vocab,
            );
            let file = std::fs::File::create(&path)
                .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
            write_checkpoint(&ckpt, std::io::BufWriter::new(file))
                .map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
            Some(path)
        }
        None => None,
    };
    Ok(TrialResult {
        index: k,
        config: cfg.clone(),
        macro_f1: report.macro_f1,
        checkpoint,
        epoch_losses: log.epoch_losses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: usize,
    pub trials: Vec<TrialResult>,
}

impl GridOutcome {
    pub fn best_trial(&self) -> &TrialResult {
        &self.trials[self.best]
    }
}

/// Index of the winning trial: highest macro-F1, then fewer epochs, then
/// fewer filters, then the earlier trial.
pub fn select_best(trials: &[TrialResult]) -> Option<usize> {
    (0..trials.len()).min_by(|&a, &b| {
        let (ta, tb) = (&trials[a], &trials[b]);
        tb.macro_f1
            .total_cmp(&ta.macro_f1)
            .then(ta.config.epochs.cmp(&tb.config.epochs))
            .then(ta.config.n_filters.cmp(&tb.config.n_filters))
            .then(ta.index.cmp(&tb.index))
    })
}

/// Runs every configuration of `grid`, `parallel` trials at a time.
pub fn grid_search<F: Scalar>(
    grid: &Grid,
    seed: u64,
    augment: bool,
    inputs: &TrialInputs<F>,
    parallel: usize,
) -> Result<GridOutcome, TrainError> {
    let configs = grid.configs(seed, augment);
    if configs.is_empty() {
        return Err(TrainError::EmptyGrid);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| TrainError::Config(vec![format!("thread pool: {e}")]))?;
    let trials = pool.install(|| {
        (0..configs.len())
            .into_par_iter()
            .map(|k| run_trial(k, &configs, inputs))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let best = select_best(&trials).expect("non-empty grid");
    Ok(GridOutcome { best, trials })
}

/// Retrains the chosen configuration on every labeled instance available.
pub fn final_fit<F: Scalar>(
    instances: &[RelationInstance],
    cfg: &TrainConfig,
    model: &ModelConfig,
    word_table: &EmbeddingTable<F>,
) -> Result<(ModelConfig, ModelParams<F>, TrainLog), TrainError> {
    let (model, mut params) = init_params(cfg, model, word_table)?;
    let log = train(instances, cfg, &model, &mut params)?;
    Ok((model, params, log))
}

/// One JSON line per trial.
pub fn write_trial_log<W: Write>(mut w: W, trials: &[TrialResult]) -> std::io::Result<()> {
    for t in trials {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Human-readable summary, best trial marked with `*`.
pub fn summary_table(outcome: &GridOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>6} {:>6} {:>6} {:>7} {:>8} {:>9}",
        "trial", "epochs", "seqlen", "batch", "filters", "lr", "macro-F1"
    );
    for t in &outcome.trials {
        let c = &t.config;
        let mark = if t.index == outcome.trials[outcome.best].index {
            "*"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>6} {:>6} {:>7} {:>8} {:>9.4}{mark}",
            t.index,
            c.epochs,
            c.max_seq_len,
            c.batch_size,
            c.n_filters,
            c.learning_rate,
            t.macro_f1
        );
    }
    out
}

/// Writes the JSON line log and the summary table into `dir`.
pub fn write_grid_reports(
    dir: &Path,
    outcome: &GridOutcome,
) -> Result<(PathBuf, PathBuf), TrainError> {
    let io = |p: &Path, e: std::io::Error| TrainError::Io(format!("{}: {e}", p.display()));
    let log_path = dir.join("trials.jsonl");
    let file = std::fs::File::create(&log_path).map_err(|e| io(&log_path, e))?;
    write_trial_log(std::io::BufWriter::new(file), &outcome.trials)
        .map_err(|e| io(&log_path, e))?;
    let table_path = dir.join("summary.txt");
    std::fs::write(&table_path, summary_table(outcome)).map_err(|e| io(&table_path, e))?;
    Ok((log_path, table_path))
}
