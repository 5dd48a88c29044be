use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use scirel::corpus::{parse_relations, Corpus, Label, SourceTag};
use scirel::diffcore::{stored_precision, write_checkpoint, Checkpoint, Scalar};
use scirel::embeddings::{
    load_pretrained, random_word_table, EmbeddingTable, LoadOptions, Vocabulary,
};
use scirel::eval::{emit_predictions, evaluate, score, write_predictions, ScoreReport};
use scirel::pcnn::{ModelConfig, ModelParams};
use scirel::preprocess::{
    build_instances, corpus_tokens, relation_geometry, InstanceSet, PreprocessConfig,
    RelationInstance,
};
use scirel::trainer::{
    augment, final_fit, grid_search, init_params, prepare_splits, train, write_grid_reports,
    TrialInputs,
};

use crate::args::{DataArgs, EvaluateArgs, GridArgs, InspectArgs, PredictArgs, RunArgs, TrainArgs};
use crate::config::{Precision, RunConfig, UsageError};
use crate::manifest::RunManifest;

/// Keeps core errors intact inside `anyhow` so the exit code can be chosen
/// from their category.
pub trait CoreResult<T> {
    fn core(self) -> anyhow::Result<T>;
}

impl<T, E: Into<scirel::Error>> CoreResult<T> for Result<T, E> {
    fn core(self) -> anyhow::Result<T> {
        self.map_err(|e| anyhow::Error::new(e.into()))
    }
}

/// Mixed into the run seed for word vectors that are drawn rather than
/// loaded, so they do not share a stream with parameter initialisation.
const WORD_TABLE_SEED_MIX: u64 = 0x5eed_0000_7ab1_e000;

fn missing_files<'a>(paths: impl IntoIterator<Item = (&'a str, &'a Path)>) -> Vec<String> {
    paths
        .into_iter()
        .filter(|(_, p)| !p.is_file())
        .map(|(role, p)| format!("{role} file not found: {}", p.display()))
        .collect()
}

fn check(problems: Vec<String>) -> anyhow::Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(UsageError(problems).into())
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> anyhow::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    write_file(path, out)
}

fn partner_tag(task: SourceTag) -> SourceTag {
    match task {
        SourceTag::Task12 => SourceTag::Task11,
        _ => SourceTag::Task12,
    }
}

/// Applies flag overrides to the file configuration and checks the result.
fn resolve_config(run: &RunArgs, augment: bool) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(run.config.as_deref())?;
    let t = &mut cfg.train;
    if let Some(v) = run.seed {
        t.seed = v;
    }
    if let Some(v) = run.epochs {
        t.epochs = v;
    }
    if let Some(v) = run.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = run.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = run.max_seq_len {
        t.max_seq_len = v;
    }
    if let Some(v) = run.n_filters {
        t.n_filters = v;
    }
    if augment {
        t.augment = true;
    }
    if let Some(v) = run.parallel {
        cfg.parallel = v;
    }
    if let Some(v) = run.macro_over {
        cfg.eval.macro_over = v;
    }
    if let Some(v) = run.precision {
        cfg.precision = v;
    }
    if let Some(v) = run.vocab_limit {
        cfg.embeddings.vocab_limit = Some(v);
    }
    Ok(cfg)
}

struct Inputs<'a> {
    files: Vec<(&'static str, &'a Path)>,
}

impl<'a> Inputs<'a> {
    fn of(data: &'a DataArgs, run: &'a RunArgs) -> Self {
        let mut files: Vec<(&'static str, &Path)> = vec![
            ("train-text", &data.train_text),
            ("train-relations", &data.train_relations),
        ];
        if let (Some(t), Some(r)) = (&data.valid_text, &data.valid_relations) {
            files.push(("valid-text", t));
            files.push(("valid-relations", r));
        }
        for (t, r) in data.augment_text.iter().zip(&data.augment_relations) {
            files.push(("augment-text", t));
            files.push(("augment-relations", r));
        }
        if let Some(e) = &run.embeddings {
            files.push(("embeddings", e));
        }
        if let Some(c) = &run.config {
            files.push(("config", c));
        }
        Inputs { files }
    }
}

fn data_problems(data: &DataArgs, cfg: &RunConfig, need_valid: bool) -> Vec<String> {
    let mut out = Vec::new();
    if data.valid_text.is_some() != data.valid_relations.is_some() {
        out.push("--valid-text and --valid-relations must be given together".to_owned());
    }
    if need_valid && data.valid_text.is_none() {
        out.push("a validation split (--valid-text, --valid-relations) is required".to_owned());
    }
    if data.augment_text.len() != data.augment_relations.len() {
        out.push(format!(
            "{} --augment-text but {} --augment-relations",
            data.augment_text.len(),
            data.augment_relations.len()
        ));
    }
    if cfg.train.augment && data.augment_text.is_empty() {
        out.push(
            "augmentation is enabled but no --augment-text/--augment-relations were given"
                .to_owned(),
        );
    }
    if !cfg.train.augment && !data.augment_text.is_empty() {
        out.push("augmentation files were given without --augment".to_owned());
    }
    if data.task == SourceTag::Merged {
        out.push("--task must be task1.1 or task1.2".to_owned());
    }
    out
}

struct LoadedData {
    train: Corpus,
    valid: Option<Corpus>,
    partner: Option<Corpus>,
}

impl LoadedData {
    fn load(data: &DataArgs) -> anyhow::Result<Self> {
        let train = Corpus::load(&data.train_text, &data.train_relations, data.task).core()?;
        let valid = match (&data.valid_text, &data.valid_relations) {
            (Some(t), Some(r)) => Some(Corpus::load(t, r, data.task).core()?),
            _ => None,
        };
        let partner = if data.augment_text.is_empty() {
            None
        } else {
            let tag = partner_tag(data.task);
            let mut documents = Vec::new();
            let mut relations = Vec::new();
            for (t, r) in data.augment_text.iter().zip(&data.augment_relations) {
                let c = Corpus::load(t, r, tag).core()?;
                documents.extend(c.documents);
                relations.extend(c.relations);
            }
            Some(Corpus::new(documents, relations, tag).core()?)
        };
        Ok(LoadedData {
            train,
            valid,
            partner,
        })
    }

    fn all(&self) -> Vec<&Corpus> {
        std::iter::once(&self.train)
            .chain(&self.valid)
            .chain(&self.partner)
            .collect()
    }

    /// The corpus training draws from: the task corpus, merged with the
    /// partner task when augmenting.
    fn training_corpus(&self, augmenting: bool) -> anyhow::Result<Corpus> {
        match (&self.partner, augmenting) {
            (Some(p), true) => augment(&self.train, p).core(),
            _ => Ok(self.train.clone()),
        }
    }
}

/// Word vectors for the corpus vocabulary: loaded from `embeddings` when
/// given, otherwise drawn at random with `model.word_dim` components.
fn word_vectors<F: Scalar>(
    embeddings: Option<&Path>,
    corpora: &[&Corpus],
    cfg: &RunConfig,
    model: &mut ModelConfig,
) -> anyhow::Result<(Vocabulary, EmbeddingTable<F>)> {
    let tokens = corpus_tokens(corpora.iter().copied(), &cfg.preprocess);
    let seed = cfg.train.seed ^ WORD_TABLE_SEED_MIX;
    match embeddings {
        Some(path) => {
            let opts = LoadOptions {
                vocab_limit: cfg.embeddings.vocab_limit,
                restrict_to: Some(tokens.into_iter().collect()),
                unk_seed: seed,
                trainable: cfg.model.fine_tune_words,
            };
            let (vocab, table) = load_pretrained::<F>(path, &opts).core()?;
            model.word_dim = table.dim();
            Ok((vocab, table))
        }
        None => {
            let vocab = Vocabulary::from_tokens(tokens);
            let table = random_word_table(&vocab, model.word_dim, seed);
            Ok((vocab, table))
        }
    }
}

fn instances(
    corpus: &Corpus,
    vocab: &Vocabulary,
    pre: &PreprocessConfig,
) -> anyhow::Result<InstanceSet> {
    Ok(build_instances(&corpus.resolve().core()?, vocab, pre))
}

fn rejected_lines(set: &InstanceSet) -> Vec<String> {
    set.rejected
        .iter()
        .map(|(rel, e)| format!("{rel}: {e}"))
        .collect()
}

fn save_checkpoint<F: Scalar>(path: &Path, ckpt: &Checkpoint<F>) -> anyhow::Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_checkpoint(ckpt, std::io::BufWriter::new(file)).core()
}

fn write_score(
    dir: &Path,
    stem: &str,
    report: &ScoreReport,
    manifest: &mut RunManifest,
) -> anyhow::Result<()> {
    let json_path = dir.join(format!("{stem}.json"));
    let table_path = dir.join(format!("{stem}.txt"));
    write_json(&json_path, report)?;
    write_file(&table_path, report.to_table())?;
    manifest.artifact(&format!("{stem}-report"), &json_path);
    manifest.artifact(&format!("{stem}-table"), &table_path);
    Ok(())
}

fn write_rejected(dir: &Path, lines: &[String], manifest: &mut RunManifest) -> anyhow::Result<()> {
    if lines.is_empty() {
        return Ok(());
    }
    eprintln!(
        "{} relations could not be turned into instances (see rejected.txt)",
        lines.len()
    );
    let path = dir.join("rejected.txt");
    write_file(&path, lines.join("\n") + "\n")?;
    manifest.artifact("rejected", &path);
    Ok(())
}

fn percentile(sorted: &[usize], p: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn percentile_line(name: &str, mut values: Vec<usize>) -> String {
    values.sort_unstable();
    let mut line = format!("{name:<16}");
    for p in [50, 90, 95, 99, 100] {
        let _ = write!(line, "  p{p}={}", percentile(&values, p as f64));
    }
    line
}

#[derive(Serialize)]
struct InstanceRecord<'a> {
    arg1: &'a str,
    arg2: &'a str,
    tokens: Vec<&'a str>,
    p1: usize,
    p2: usize,
    rel_pos1: &'a [i32],
    rel_pos2: &'a [i32],
    direction: &'static str,
    label: Option<Label>,
    real_length: usize,
}

fn instance_record<'a>(inst: &'a RelationInstance, vocab: &'a Vocabulary) -> InstanceRecord<'a> {
    let n = inst.real_length;
    InstanceRecord {
        arg1: &inst.arg1_id,
        arg2: &inst.arg2_id,
        tokens: inst.token_ids[..n]
            .iter()
            .map(|&id| vocab.token(id))
            .collect(),
        p1: inst.p1,
        p2: inst.p2,
        rel_pos1: &inst.rel_pos1[..n],
        rel_pos2: &inst.rel_pos2[..n],
        direction: match inst.direction {
            scirel::preprocess::Direction::Forward => "forward",
            scirel::preprocess::Direction::Reverse => "reverse",
        },
        label: inst.label,
        real_length: n,
    }
}

pub fn inspect(args: &InspectArgs) -> anyhow::Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let mut problems = missing_files([
        ("text", args.text.as_path()),
        ("relations", args.relations.as_path()),
    ]);
    problems.extend(cfg.effective_preprocess().violations());
    if (args.dump_corpus || args.dump_instances) && args.out_dir.is_none() {
        problems.push("--dump-corpus and --dump-instances need --out-dir".to_owned());
    }
    check(problems)?;
    let pre = cfg.effective_preprocess();
    let mut manifest = RunManifest::begin(
        "inspect",
        None,
        json!({ "preprocess": pre, "task": args.task }),
        &[("text", &args.text), ("relations", &args.relations)],
    )?;

    let corpus = Corpus::load(&args.text, &args.relations, args.task).core()?;
    let resolved = corpus.resolve().core()?;
    let histogram = corpus.class_histogram();
    let mut report = String::new();
    let _ = writeln!(report, "documents        {}", corpus.documents.len());
    let _ = writeln!(
        report,
        "entities         {}",
        corpus
            .documents
            .iter()
            .map(|d| d.entities.len())
            .sum::<usize>()
    );
    let _ = writeln!(report, "relations        {}", corpus.relations.len());
    let _ = writeln!(report, "class histogram");
    for label in Label::ALL {
        let _ = writeln!(
            report,
            "  {:<12} {}",
            label.as_str(),
            histogram.get(&label).copied().unwrap_or(0)
        );
    }
    let mut lengths = Vec::new();
    let mut distances = Vec::new();
    for r in &resolved {
        if let Ok((len, dist)) = relation_geometry(r, &pre) {
            lengths.push(len);
            distances.push(dist);
        }
    }
    let _ = writeln!(
        report,
        "{}",
        percentile_line("segment tokens", lengths.clone())
    );
    let _ = writeln!(report, "{}", percentile_line("head distance", distances));
    let over = lengths.iter().filter(|&&l| l > pre.max_seq_len).count();
    let _ = writeln!(
        report,
        "segments longer than max_seq_len {}: {over}",
        pre.max_seq_len
    );

    let vocab = Vocabulary::from_tokens(corpus_tokens([&corpus], &pre));
    let set = build_instances(&resolved, &vocab, &pre);
    let _ = writeln!(
        report,
        "instances        {} ({} rejected)",
        set.instances.len(),
        set.rejected.len()
    );
    for line in rejected_lines(&set) {
        let _ = writeln!(report, "  rejected {line}");
    }
    print!("{report}");

    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        let stats = dir.join("inspect.txt");
        write_file(&stats, &report)?;
        manifest.artifact("statistics", &stats);
        if args.dump_corpus {
            let path = dir.join("corpus.jsonl");
            let file = std::fs::File::create(&path)
                .with_context(|| format!("creating {}", path.display()))?;
            corpus
                .write_dump(std::io::BufWriter::new(file))
                .with_context(|| format!("writing {}", path.display()))?;
            manifest.artifact("corpus-dump", &path);
        }
        if args.dump_instances {
            let path = dir.join("instances.jsonl");
            write_jsonl(
                &path,
                set.instances.iter().map(|i| instance_record(i, &vocab)),
            )?;
            manifest.artifact("instance-dump", &path);
        }
        manifest.results = json!({
            "documents": corpus.documents.len(),
            "relations": corpus.relations.len(),
            "instances": set.instances.len(),
            "rejected": set.rejected.len(),
        });
        manifest.finish(dir)?;
    }
    Ok(())
}

fn prepare_run(
    data: &DataArgs,
    run: &RunArgs,
    need_valid: bool,
) -> anyhow::Result<(RunConfig, RunManifest)> {
    let cfg = resolve_config(run, data.augment)?;
    let inputs = Inputs::of(data, run);
    let mut problems = missing_files(inputs.files.iter().copied());
    problems.extend(cfg.violations());
    problems.extend(data_problems(data, &cfg, need_valid));
    check(problems)?;
    create_dir(&run.out_dir)?;
    let manifest = RunManifest::begin(
        if need_valid { "grid" } else { "train" },
        Some(cfg.train.seed),
        serde_json::to_value(&cfg)?,
        &inputs.files,
    )?;
    Ok((cfg, manifest))
}

pub fn train_cmd(args: &TrainArgs) -> anyhow::Result<()> {
    let (cfg, manifest) = prepare_run(&args.data, &args.run, false)?;
    match cfg.precision {
        Precision::F32 => train_with::<f32>(args, cfg, manifest),
        Precision::F64 => train_with::<f64>(args, cfg, manifest),
    }
}

fn train_with<F: Scalar>(
    args: &TrainArgs,
    cfg: RunConfig,
    mut manifest: RunManifest,
) -> anyhow::Result<()> {
    let out = &args.run.out_dir;
    let data = LoadedData::load(&args.data)?;
    let mut model = cfg.effective_model();
    let (vocab, table) = word_vectors::<F>(
        args.run.embeddings.as_deref(),
        &data.all(),
        &cfg,
        &mut model,
    )?;
    let pre = cfg.effective_preprocess();

    let train_set = instances(&data.training_corpus(cfg.train.augment)?, &vocab, &pre)?;
    let valid_set = data
        .valid
        .as_ref()
        .map(|v| instances(v, &vocab, &pre))
        .transpose()?;
    let mut rejected = rejected_lines(&train_set);
    rejected.extend(valid_set.iter().flat_map(rejected_lines));
    write_rejected(out, &rejected, &mut manifest)?;

    eprintln!(
        "training on {} instances for {} epochs ({} words, dim {})",
        train_set.instances.len(),
        cfg.train.epochs,
        vocab.len(),
        model.word_dim
    );
    let (model, mut params) = init_params(&cfg.train, &model, &table).core()?;
    manifest.config["effective_model"] = serde_json::to_value(&model)?;
    manifest.config["effective_preprocess"] = serde_json::to_value(&pre)?;
    let log = train(&train_set.instances, &cfg.train, &model, &mut params).core()?;

    let ckpt_path = out.join("model.ckpt");
    save_checkpoint(&ckpt_path, &params.to_checkpoint(&model, &pre, &vocab))?;
    manifest.artifact("checkpoint", &ckpt_path);
    let log_path = out.join("train_log.json");
    write_json(&log_path, &log)?;
    manifest.artifact("train-log", &log_path);

    let mut results = json!({
        "train_instances": train_set.instances.len(),
        "final_loss": log.epoch_losses.last(),
    });
    if let Some(valid) = &valid_set {
        let (report, preds) =
            evaluate(&valid.instances, &params, &model, cfg.eval.macro_over).core()?;
        let pred_path = out.join("valid.predictions.txt");
        write_predictions(&pred_path, &valid.instances, &preds).core()?;
        manifest.artifact("valid-predictions", &pred_path);
        write_score(out, "valid_score", &report, &mut manifest)?;
        print!("{}", report.to_table());
        results["valid_instances"] = json!(valid.instances.len());
        results["valid_macro_f1"] = json!(report.macro_f1);
    }
    manifest.results = results;
    let path = manifest.finish(out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn grid_cmd(args: &GridArgs) -> anyhow::Result<()> {
    let (cfg, manifest) = prepare_run(&args.train.data, &args.train.run, true)?;
    match cfg.precision {
        Precision::F32 => grid_with::<f32>(args, cfg, manifest),
        Precision::F64 => grid_with::<f64>(args, cfg, manifest),
    }
}

fn grid_with<F: Scalar>(
    args: &GridArgs,
    cfg: RunConfig,
    mut manifest: RunManifest,
) -> anyhow::Result<()> {
    let out = &args.train.run.out_dir;
    let data = LoadedData::load(&args.train.data)?;
    let valid = data.valid.as_ref().expect("validation split checked");
    let mut model = cfg.effective_model();
    let (vocab, table) = word_vectors::<F>(
        args.train.run.embeddings.as_deref(),
        &data.all(),
        &cfg,
        &mut model,
    )?;

    let lengths: Vec<usize> = cfg
        .grid
        .max_seq_len
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let train_corpus = data.training_corpus(cfg.train.augment)?;
    let (splits, rejected) =
        prepare_splits(&train_corpus, valid, &vocab, &cfg.preprocess, &lengths).core()?;
    let rejected: Vec<String> = rejected
        .into_iter()
        .flat_map(|(len, notes)| {
            notes
                .into_iter()
                .map(move |n| format!("max_seq_len {len}: {n}"))
        })
        .collect();
    write_rejected(out, &rejected, &mut manifest)?;

    let checkpoint_dir = if args.save_trials {
        let dir = out.join("trials");
        create_dir(&dir)?;
        Some(dir)
    } else {
        None
    };
    let inputs = TrialInputs {
        data: splits,
        word_table: table,
        model,
        macro_over: cfg.eval.macro_over,
        checkpoint_dir,
        preprocess: cfg.preprocess.clone(),
        vocab,
    };
    let n_trials = cfg.grid.configs(cfg.train.seed, cfg.train.augment).len();
    eprintln!("running {n_trials} trials, {} at a time", cfg.parallel);
    let outcome = grid_search(
        &cfg.grid,
        cfg.train.seed,
        cfg.train.augment,
        &inputs,
        cfg.parallel,
    )
    .core()?;
    let (log_path, table_path) = write_grid_reports(out, &outcome).core()?;
    manifest.artifact("trial-log", &log_path);
    manifest.artifact("trial-summary", &table_path);
    for t in &outcome.trials {
        if let Some(p) = &t.checkpoint {
            manifest.artifact(&format!("trial-{:03}-checkpoint", t.index), p);
        }
    }
    print!("{}", scirel::trainer::summary_table(&outcome));

    // refit the winner on training and validation data together
    let best = outcome.best_trial();
    let split = &inputs.data[&best.config.max_seq_len];
    let all: Vec<RelationInstance> = split.train.iter().chain(&split.valid).cloned().collect();
    eprintln!("refitting trial {} on {} instances", best.index, all.len());
    let (final_model, params, log) =
        final_fit(&all, &best.config, &inputs.model, &inputs.word_table).core()?;
    let ckpt_path = out.join("final.ckpt");
    let pre = cfg.preprocess.with_len(best.config.max_seq_len);
    manifest.config["effective_model"] = serde_json::to_value(&final_model)?;
    manifest.config["effective_preprocess"] = serde_json::to_value(&pre)?;
    save_checkpoint(
        &ckpt_path,
        &params.to_checkpoint(&final_model, &pre, &inputs.vocab),
    )?;
    manifest.artifact("final-checkpoint", &ckpt_path);
    let final_log = out.join("final_log.json");
    write_json(&final_log, &log)?;
    manifest.artifact("final-train-log", &final_log);

    manifest.results = json!({
        "trials": outcome.trials.len(),
        "best_trial": best.index,
        "best_config": best.config,
        "best_valid_macro_f1": best.macro_f1,
        "final_instances": all.len(),
        "final_loss": log.epoch_losses.last(),
    });
    let path = manifest.finish(out)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs) -> anyhow::Result<()> {
    check(missing_files([
        ("checkpoint", args.checkpoint.as_path()),
        ("text", args.text.as_path()),
        ("relations", args.relations.as_path()),
    ]))?;
    create_dir(&args.out_dir)?;
    let manifest = RunManifest::begin(
        "predict",
        None,
        json!({ "task": args.task }),
        &[
            ("checkpoint", &args.checkpoint),
            ("text", &args.text),
            ("relations", &args.relations),
        ],
    )?;
    let bytes = std::fs::read(&args.checkpoint)
        .with_context(|| format!("reading {}", args.checkpoint.display()))?;
    match stored_precision(&bytes).core()? {
        4 => predict_with::<f32>(args, &bytes, manifest),
        8 => predict_with::<f64>(args, &bytes, manifest),
        n => bail!("{}: unsupported {n}-byte floats", args.checkpoint.display()),
    }
}

fn predict_with<F: Scalar>(
    args: &PredictArgs,
    bytes: &[u8],
    mut manifest: RunManifest,
) -> anyhow::Result<()> {
    let ckpt = Checkpoint::<F>::from_bytes(bytes).core()?;
    let loaded = ModelParams::from_checkpoint(&ckpt).core()?;
    manifest.config = json!({
        "task": args.task,
        "model": loaded.config,
        "preprocess": loaded.preprocess,
    });
    let corpus = Corpus::load(&args.text, &args.relations, args.task).core()?;
    let set = instances(&corpus, &loaded.vocab, &loaded.preprocess)?;
    write_rejected(&args.out_dir, &rejected_lines(&set), &mut manifest)?;
    let path = args.out_dir.join("predictions.txt");
    let labels = emit_predictions(&set.instances, &loaded.params, &loaded.config, &path).core()?;
    manifest.artifact("predictions", &path);
    manifest.results = json!({ "predicted": labels.len(), "rejected": set.rejected.len() });
    eprintln!("wrote {} predictions to {}", labels.len(), path.display());
    manifest.finish(&args.out_dir)?;
    Ok(())
}

fn read_relations(path: &Path) -> anyhow::Result<Vec<scirel::corpus::RelationRecord>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_relations(&text)
        .core()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> anyhow::Result<()> {
    check(missing_files([
        ("gold", args.gold.as_path()),
        ("predictions", args.predictions.as_path()),
    ]))?;
    create_dir(&args.out_dir)?;
    let mut manifest = RunManifest::begin(
        "evaluate",
        None,
        json!({ "macro_over": args.macro_over }),
        &[("gold", &args.gold), ("predictions", &args.predictions)],
    )?;
    let gold = read_relations(&args.gold)?;
    let predicted = read_relations(&args.predictions)?;

    let mut by_pair: HashMap<(&str, &str), Label> = HashMap::new();
    for p in &predicted {
        if by_pair.insert((&p.arg1_id, &p.arg2_id), p.label).is_some() {
            bail!(
                "{}: more than one prediction for ({}, {})",
                args.predictions.display(),
                p.arg1_id,
                p.arg2_id
            );
        }
    }
    let mut gold_labels = Vec::new();
    let mut pred_labels = Vec::new();
    let mut missing = Vec::new();
    for g in &gold {
        match by_pair.remove(&(g.arg1_id.as_str(), g.arg2_id.as_str())) {
            Some(p) => {
                gold_labels.push(g.label);
                pred_labels.push(p);
            }
            None => missing.push(g.to_string()),
        }
    }
    let unmatched: BTreeMap<String, Label> = by_pair
        .into_iter()
        .map(|((a, b), l)| (format!("{a},{b}"), l))
        .collect();
    if !missing.is_empty() {
        eprintln!(
            "{} gold relations have no prediction and are not scored",
            missing.len()
        );
    }
    if !unmatched.is_empty() {
        eprintln!(
            "{} predictions have no gold relation and are ignored",
            unmatched.len()
        );
    }
    let report = score(&gold_labels, &pred_labels, args.macro_over).core()?;
    print!("{}", report.to_table());

    let json_path = args.out_dir.join("score.json");
    write_json(
        &json_path,
        &json!({ "report": report, "unscored_gold": missing, "unmatched_predictions": unmatched }),
    )?;
    manifest.artifact("score-report", &json_path);
    let table_path = args.out_dir.join("score.txt");
    write_file(&table_path, report.to_table())?;
    manifest.artifact("score-table", &table_path);
    manifest.results = json!({
        "macro_f1": report.macro_f1,
        "scored": report.total,
        "unscored_gold": missing.len(),
        "unmatched_predictions": unmatched.len(),
    });
    manifest.finish(&args.out_dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<usize> = (1..=20).collect();
        assert_eq!(percentile(&v, 50.0), 10);
        assert_eq!(percentile(&v, 95.0), 19);
        assert_eq!(percentile(&v, 100.0), 20);
        assert_eq!(percentile(&[7], 1.0), 7);
        assert_eq!(percentile(&[], 50.0), 0);
    }

    #[test]
    fn partner_is_the_other_task() {
        assert_eq!(partner_tag(SourceTag::Task11), SourceTag::Task12);
        assert_eq!(partner_tag(SourceTag::Task12), SourceTag::Task11);
    }
}
