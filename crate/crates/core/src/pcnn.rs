//! Piecewise convolutional relation classifier.
//!
//! Each token is represented by its word vector and two position vectors
//! (distance to each entity head). One filter bank per width convolves the
//! sequence, each bank is max-pooled over the three segments cut by the
//! entity heads, the pooled features are joined with a direction vector and
//! passed through an optional tanh, dropout and a softmax layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::diffcore::{
    affine, affine_backward, concat, concat_backward, conv1d_same_backward, conv1d_same_masked,
    dropout, dropout_backward, piecewise_max_pool, piecewise_max_pool_backward, softmax,
    softmax_cross_entropy, tanh_activation, tanh_backward, Checkpoint, DropoutMask, Mode,
    PoolArgmax, Scalar, Tensor, TensorError,
};
use crate::embeddings::{
    direction_table, lookup, lookup_backward, position_row, position_table, EmbeddingError,
    EmbeddingTable, Vocabulary,
};
use crate::preprocess::{PreprocessConfig, RelationInstance};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("instance does not fit the model: {0}")]
    Instance(String),
    #[error("instance {0} has no label")]
    Unlabeled(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("embedding table: {0}")]
    Embedding(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl From<EmbeddingError> for ModelError {
    fn from(e: EmbeddingError) -> Self {
        ModelError::Embedding(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub filter_widths: Vec<usize>,
    /// Filters per width.
    pub n_filters: usize,
    pub word_dim: usize,
    pub pos_dim: usize,
    pub dir_dim: usize,
    pub n_classes: usize,
    pub keep_prob: f64,
    pub max_seq_len: usize,
    pub position_window: usize,
    pub nonlinearity: Nonlinearity,
    pub fine_tune_words: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            filter_widths: vec![3, 4, 5],
            n_filters: 64,
            word_dim: 300,
            pos_dim: 5,
            dir_dim: 5,
            n_classes: Label::COUNT,
            keep_prob: 0.5,
            max_seq_len: 200,
            position_window: 30,
            nonlinearity: Nonlinearity::Tanh,
            fine_tune_words: true,
        }
    }
}

impl ModelConfig {
    /// Width of one token's input vector.
    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    /// Width of the sentence representation fed to the classifier.
    pub fn rep_dim(&self) -> usize {
        3 * self.filter_widths.len() * self.n_filters + self.dir_dim
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.filter_widths.is_empty() {
            out.push("filter_widths must not be empty".to_owned());
        }
        if self.filter_widths.contains(&0) {
            out.push(format!(
                "filter widths must be positive (got {:?})",
                self.filter_widths
            ));
        }
        for (name, v) in [
            ("n_filters", self.n_filters),
            ("word_dim", self.word_dim),
            ("pos_dim", self.pos_dim),
            ("dir_dim", self.dir_dim),
            ("position_window", self.position_window),
        ] {
            if v == 0 {
                out.push(format!("{name} must be positive"));
            }
        }
        if self.n_classes != Label::COUNT {
            out.push(format!(
                "n_classes must be {} (got {})",
                Label::COUNT,
                self.n_classes
            ));
        }
        if self.max_seq_len < 2 {
            out.push(format!(
                "max_seq_len must be at least 2 (got {})",
                self.max_seq_len
            ));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            out.push(format!(
                "keep_prob must lie in (0, 1] (got {})",
                self.keep_prob
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(v))
        }
    }
}

/// All trainable state of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub word: EmbeddingTable<F>,
    pub pos1: EmbeddingTable<F>,
    pub pos2: EmbeddingTable<F>,
    pub dir: EmbeddingTable<F>,
    /// One `[w × input_dim × n_filters]` bank per filter width.
    pub filters: Vec<Tensor<F>>,
    pub biases: Vec<Tensor<F>>,
    /// `[rep_dim × n_classes]`.
    pub out_w: Tensor<F>,
    pub out_b: Tensor<F>,
}

fn glorot<F: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| {
        F::from_f64_lossy(rng.random_range(-limit..=limit))
    })
}

impl<F: Scalar> ModelParams<F> {
    /// Fresh parameters around an existing word table. Everything except the
    /// word table is drawn from `seed`.
    pub fn init(
        cfg: &ModelConfig,
        mut word: EmbeddingTable<F>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if word.dim() != cfg.word_dim {
            return Err(ModelError::Config(vec![format!(
                "word_dim is {} but the word table has {} columns",
                cfg.word_dim,
                word.dim()
            )]));
        }
        word.trainable = cfg.fine_tune_words;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table_seeds: [u64; 3] = [rng.random(), rng.random(), rng.random()];
        let d_in = cfg.input_dim();
        let nf = cfg.n_filters;
        let filters = cfg
            .filter_widths
            .iter()
            .map(|&w| glorot(&[w, d_in, nf], w * d_in, nf, &mut rng))
            .collect();
        let biases = cfg
            .filter_widths
            .iter()
            .map(|_| Tensor::zeros(&[nf]))
            .collect();
        let (rep, k) = (cfg.rep_dim(), cfg.n_classes);
        Ok(ModelParams {
            word,
            pos1: position_table(cfg.position_window, cfg.pos_dim, table_seeds[0]),
            pos2: position_table(cfg.position_window, cfg.pos_dim, table_seeds[1]),
            dir: direction_table(cfg.dir_dim, table_seeds[2]),
            filters,
            biases,
            out_w: glorot(&[rep, k], rep, k, &mut rng),
            out_b: Tensor::zeros(&[k]),
        })
    }

    /// Names of all parameter tensors, in the order of [`Self::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["word", "pos1", "pos2", "dir"].map(String::from).into();
        for i in 0..self.filters.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        names.push("out.weight".to_owned());
        names.push("out.bias".to_owned());
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<F>> {
        let mut out = vec![
            &self.word.weights,
            &self.pos1.weights,
            &self.pos2.weights,
            &self.dir.weights,
        ];
        for (f, b) in self.filters.iter().zip(&self.biases) {
            out.push(f);
            out.push(b);
        }
        out.push(&self.out_w);
        out.push(&self.out_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = vec![
            &mut self.word.weights,
            &mut self.pos1.weights,
            &mut self.pos2.weights,
            &mut self.dir.weights,
        ];
        for (f, b) in self.filters.iter_mut().zip(self.biases.iter_mut()) {
            out.push(f);
            out.push(b);
        }
        out.push(&mut self.out_w);
        out.push(&mut self.out_b);
        out
    }

    /// Trainable tensors with their names. A frozen word table is left out.
    pub fn trainable_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let skip_word = !self.word.trainable;
        self.names()
            .into_iter()
            .zip(self.tensors_mut())
            .filter(|(name, _)| !(skip_word && name == "word"))
            .collect()
    }

    /// Sets every trainable gradient to zero.
    pub fn zero_grads(&mut self) {
        for (_, t) in self.trainable_mut() {
            t.zero_grad();
        }
    }

    pub fn clear_grads(&mut self) {
        for t in self.tensors_mut() {
            t.clear_grad();
        }
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        for t in self.tensors() {
            t.check_finite("parameters")?;
        }
        Ok(())
    }

    /// Self-describing checkpoint: configs and vocabulary go in the metadata.
    pub fn to_checkpoint(
        &self,
        cfg: &ModelConfig,
        pre: &PreprocessConfig,
        vocab: &Vocabulary,
    ) -> Checkpoint<F> {
        Checkpoint {
            metadata: serde_json::json!({
                "model": cfg,
                "preprocess": pre,
                "vocab": vocab.tokens(),
                "precision": F::NAME,
            }),
            tensors: self
                .names()
                .into_iter()
                .zip(self.tensors().into_iter().map(|t| {
                    let mut t = t.clone();
                    t.clear_grad();
                    t
                }))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<F>) -> Result<LoadedModel<F>, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let meta = &ckpt.metadata;
        let cfg: ModelConfig = serde_json::from_value(meta["model"].clone())
            .map_err(|e| bad(format!("model config: {e}")))?;
        cfg.validate()?;
        let pre: PreprocessConfig = serde_json::from_value(meta["preprocess"].clone())
            .map_err(|e| bad(format!("preprocess config: {e}")))?;
        let tokens: Vec<String> = serde_json::from_value(meta["vocab"].clone())
            .map_err(|e| bad(format!("vocabulary: {e}")))?;
        let vocab = Vocabulary::from_tokens(tokens);

        let get = |name: &str| -> Result<Tensor<F>, ModelError> {
            ckpt.tensor(name)
                .cloned()
                .ok_or_else(|| bad(format!("missing tensor `{name}`")))
        };
        let table = |name: &str, trainable: bool| -> Result<EmbeddingTable<F>, ModelError> {
            Ok(EmbeddingTable::new(get(name)?, trainable)?)
        };
        let mut word = table("word", cfg.fine_tune_words)?;
        word.frozen_row = Some(vocab.pad_id());
        let n = cfg.filter_widths.len();
        let params = ModelParams {
            word,
            pos1: table("pos1", true)?,
            pos2: table("pos2", true)?,
            dir: table("dir", true)?,
            filters: (0..n)
                .map(|i| get(&format!("conv{i}.weight")))
                .collect::<Result<_, _>>()?,
            biases: (0..n)
                .map(|i| get(&format!("conv{i}.bias")))
                .collect::<Result<_, _>>()?,
            out_w: get("out.weight")?,
            out_b: get("out.bias")?,
        };
        params.check_shapes(&cfg)?;
        if params.word.rows() != vocab.len() {
            return Err(bad(format!(
                "word table has {} rows for a vocabulary of {}",
                params.word.rows(),
                vocab.len()
            )));
        }
        Ok(LoadedModel {
            config: cfg,
            preprocess: pre,
            vocab,
            params,
        })
    }

    /// Verifies every tensor shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let mut problems = cfg.violations();
        let mut expect = |what: &str, got: &[usize], want: &[usize]| {
            if got != want {
                problems.push(format!("{what} has shape {got:?}, expected {want:?}"));
            }
        };
        expect("word table", &[self.word.dim()], &[cfg.word_dim]);
        let pos_rows = 2 * cfg.position_window + 1;
        expect(
            "pos1 table",
            self.pos1.weights.shape(),
            &[pos_rows, cfg.pos_dim],
        );
        expect(
            "pos2 table",
            self.pos2.weights.shape(),
            &[pos_rows, cfg.pos_dim],
        );
        expect("dir table", self.dir.weights.shape(), &[2, cfg.dir_dim]);
        if self.filters.len() != cfg.filter_widths.len()
            || self.biases.len() != cfg.filter_widths.len()
        {
            expect(
                "filter bank list",
                &[self.filters.len(), self.biases.len()],
                &[cfg.filter_widths.len(); 2],
            );
        } else {
            for ((f, b), &w) in self
                .filters
                .iter()
                .zip(&self.biases)
                .zip(&cfg.filter_widths)
            {
                expect(
                    "filter bank",
                    f.shape(),
                    &[w, cfg.input_dim(), cfg.n_filters],
                );
                expect("filter bias", b.shape(), &[cfg.n_filters]);
            }
        }
        expect(
            "classifier weight",
            self.out_w.shape(),
            &[cfg.rep_dim(), cfg.n_classes],
        );
        expect("classifier bias", self.out_b.shape(), &[cfg.n_classes]);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(problems))
        }
    }
}

/// A model restored from a checkpoint.
#[derive(Clone, Debug)]
pub struct LoadedModel<F> {
    pub config: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams<F>,
}

/// Intermediate values kept by [`forward`] for [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<F> {
    input: Tensor<F>,
    real_length: usize,
    pool_argmax: Vec<PoolArgmax>,
    part_shapes: Vec<Vec<usize>>,
    /// Representation after the optional nonlinearity.
    activated: Tensor<F>,
    mask: DropoutMask<F>,
    dropped: Tensor<F>,
}

impl<F: Scalar> ForwardCache<F> {
    /// Sentence representation before dropout.
    pub fn representation(&self) -> &Tensor<F> {
        &self.activated
    }
}

fn check_instance<F: Scalar>(
    inst: &RelationInstance,
    params: &ModelParams<F>,
    cfg: &ModelConfig,
) -> Result<(), ModelError> {
    let len = cfg.max_seq_len;
    let fail = |m: String| Err(ModelError::Instance(m));
    if inst.token_ids.len() != len || inst.rel_pos1.len() != len || inst.rel_pos2.len() != len {
        return fail(format!(
            "sequence length {} (positions {}, {}) differs from max_seq_len {len}",
            inst.token_ids.len(),
            inst.rel_pos1.len(),
            inst.rel_pos2.len()
        ));
    }
    if inst.real_length == 0 || inst.real_length > len {
        return fail(format!(
            "real length {} outside 1..={len}",
            inst.real_length
        ));
    }
    if inst.p1 == inst.p2 || inst.p1 >= inst.real_length || inst.p2 >= inst.real_length {
        return fail(format!(
            "entity positions {} and {} invalid for real length {}",
            inst.p1, inst.p2, inst.real_length
        ));
    }
    let rows = params.word.rows();
    let real = inst.real_length;
    if let Some(id) = inst.token_ids[..real].iter().find(|&&id| id >= rows) {
        return fail(format!("token id {id} outside a vocabulary of {rows}"));
    }
    let w = cfg.position_window as i32;
    let bad_pos = inst.rel_pos1[..real]
        .iter()
        .chain(&inst.rel_pos2[..real])
        .find(|p| p.abs() > w);
    if let Some(p) = bad_pos {
        return fail(format!("relative position {p} outside the window ±{w}"));
    }
    Ok(())
}

/// Token input matrix `[max_seq_len × input_dim]`; rows at or beyond the real
/// length are zero.
fn build_input<F: Scalar>(
    inst: &RelationInstance,
    params: &ModelParams<F>,
    cfg: &ModelConfig,
) -> Result<Tensor<F>, ModelError> {
    let real = inst.real_length;
    let window = cfg.position_window;
    let words = lookup(&params.word, &inst.token_ids[..real])?;
    let rows1: Vec<usize> = inst.rel_pos1[..real]
        .iter()
        .map(|&d| position_row(d, window))
        .collect();
    let rows2: Vec<usize> = inst.rel_pos2[..real]
        .iter()
        .map(|&d| position_row(d, window))
        .collect();
    let pos1 = lookup(&params.pos1, &rows1)?;
    let pos2 = lookup(&params.pos2, &rows2)?;
    let real_part = concat(&[&words, &pos1, &pos2], 1)?;
    let mut data = real_part.into_data();
    data.resize(cfg.max_seq_len * cfg.input_dim(), F::zero());
    Ok(Tensor::new(vec![cfg.max_seq_len, cfg.input_dim()], data)?)
}

/// Logits for one instance, plus what [`backward`] needs.
pub fn forward<F: Scalar, R: Rng + ?Sized>(
    inst: &RelationInstance,
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor<F>, ForwardCache<F>), ModelError> {
    check_instance(inst, params, cfg)?;
    let input = build_input(inst, params, cfg)?;
    debug_assert_eq!(input.shape(), [cfg.max_seq_len, cfg.input_dim()]);

    let real = inst.real_length;
    let mut pooled = Vec::with_capacity(cfg.filter_widths.len() + 1);
    let mut pool_argmax = Vec::with_capacity(cfg.filter_widths.len());
    for (filters, bias) in params.filters.iter().zip(&params.biases) {
        let features = conv1d_same_masked(&input, filters, bias, real)?;
        let (p, arg) = piecewise_max_pool(&features, inst.p1, inst.p2, real)?;
        pooled.push(p);
        pool_argmax.push(arg);
    }
    pooled.push(lookup(&params.dir, &[inst.direction.index()])?.reshaped(vec![cfg.dir_dim])?);
    let part_shapes = pooled.iter().map(|t| t.shape().to_vec()).collect();
    let rep = concat(&pooled.iter().collect::<Vec<_>>(), 0)?;
    debug_assert_eq!(rep.len(), cfg.rep_dim());

    let activated = match cfg.nonlinearity {
        Nonlinearity::Tanh => tanh_activation(&rep),
        Nonlinearity::None => rep,
    };
    let (dropped, mask) = dropout(&activated, cfg.keep_prob, mode, rng)?;
    let logits = affine(&dropped, &params.out_w, &params.out_b)?;
    logits.check_finite("forward")?;
    Ok((
        logits,
        ForwardCache {
            input,
            real_length: real,
            pool_argmax,
            part_shapes,
            activated,
            mask,
            dropped,
        },
    ))
}

/// Adds `scale` times the gradient of the loss (given its gradient with
/// respect to the logits) into the parameter gradient buffers.
pub fn backward<F: Scalar>(
    inst: &RelationInstance,
    params: &mut ModelParams<F>,
    cfg: &ModelConfig,
    cache: &ForwardCache<F>,
    grad_logits: &Tensor<F>,
    scale: F,
) -> Result<(), ModelError> {
    let head = affine_backward(&cache.dropped, &params.out_w, grad_logits)?;
    params.out_w.accumulate_grad(head.weight.data(), scale)?;
    params.out_b.accumulate_grad(head.bias.data(), scale)?;

    let mut d_rep = dropout_backward(&cache.mask, &head.input)?;
    if cfg.nonlinearity == Nonlinearity::Tanh {
        d_rep = tanh_backward(&cache.activated, &d_rep)?;
    }
    let mut parts = concat_backward(&cache.part_shapes, 0, &d_rep)?;
    let d_dir = parts.pop().expect("direction part");
    lookup_backward(
        &mut params.dir,
        &[inst.direction.index()],
        d_dir.data(),
        scale,
    )?;

    let real = cache.real_length;
    let mut d_input = vec![F::zero(); cache.input.len()];
    for (i, d_pooled) in parts.iter().enumerate() {
        let d_features = piecewise_max_pool_backward(&cache.pool_argmax[i], d_pooled)?;
        let g = conv1d_same_backward(&cache.input, &params.filters[i], &d_features, real)?;
        params.filters[i].accumulate_grad(g.filters.data(), scale)?;
        params.biases[i].accumulate_grad(g.bias.data(), scale)?;
        for (acc, &v) in d_input.iter_mut().zip(g.input.data()) {
            *acc += v;
        }
    }

    let d_in = cfg.input_dim();
    let (dw, dp) = (cfg.word_dim, cfg.pos_dim);
    let d_real = Tensor::new(vec![real, d_in], d_input[..real * d_in].to_vec())?;
    let split = concat_backward(
        &[vec![real, dw], vec![real, dp], vec![real, dp]],
        1,
        &d_real,
    )?;
    let window = cfg.position_window;
    let rows1: Vec<usize> = inst.rel_pos1[..real]
        .iter()
        .map(|&d| position_row(d, window))
        .collect();
    let rows2: Vec<usize> = inst.rel_pos2[..real]
        .iter()
        .map(|&d| position_row(d, window))
        .collect();
    lookup_backward(
        &mut params.word,
        &inst.token_ids[..real],
        split[0].data(),
        scale,
    )?;
    lookup_backward(&mut params.pos1, &rows1, split[1].data(), scale)?;
    lookup_backward(&mut params.pos2, &rows2, split[2].data(), scale)?;
    Ok(())
}

fn label_index(inst: &RelationInstance, i: usize) -> Result<usize, ModelError> {
    inst.label.map(Label::index).ok_or(ModelError::Unlabeled(i))
}

/// Mean cross-entropy over `batch`; the mean gradient is added into the
/// parameter gradient buffers (which are zeroed first).
pub fn loss_and_grads<F: Scalar, R: Rng + ?Sized>(
    batch: &[RelationInstance],
    params: &mut ModelParams<F>,
    cfg: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<F, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let labels = batch
        .iter()
        .enumerate()
        .map(|(i, inst)| label_index(inst, i))
        .collect::<Result<Vec<_>, _>>()?;
    params.zero_grads();
    let scale = F::one() / F::from_usize(batch.len()).expect("batch size");
    let mut total = F::zero();
    for (inst, &label) in batch.iter().zip(&labels) {
        let (logits, cache) = forward(inst, params, cfg, mode, rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, label)?;
        total += loss;
        backward(inst, params, cfg, &cache, &grad, scale)?;
    }
    Ok(total * scale)
}

/// Mean cross-entropy without gradients, in inference mode.
pub fn mean_loss<F: Scalar>(
    instances: &[RelationInstance],
    params: &ModelParams<F>,
    cfg: &ModelConfig,
) -> Result<F, ModelError> {
    if instances.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = F::zero();
    for (i, inst) in instances.iter().enumerate() {
        let (logits, _) = forward(inst, params, cfg, Mode::Infer, &mut rng)?;
        total += softmax_cross_entropy(&logits, label_index(inst, i)?)?.0;
    }
    Ok(total / F::from_usize(instances.len()).expect("count"))
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class and class probabilities, in inference mode.
pub fn predict<F: Scalar>(
    inst: &RelationInstance,
    params: &ModelParams<F>,
    cfg: &ModelConfig,
) -> Result<(Label, Vec<F>), ModelError> {
    // inference never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (logits, _) = forward(inst, params, cfg, Mode::Infer, &mut rng)?;
    let class = argmax(logits.data());
    let label = Label::from_index(class).expect("n_classes matches the label set");
    Ok((label, softmax(logits.data())))
}

pub fn predict_all<F: Scalar>(
    instances: &[RelationInstance],
    params: &ModelParams<F>,
    cfg: &ModelConfig,
) -> Result<Vec<Label>, ModelError> {
    instances
        .iter()
        .map(|i| predict(i, params, cfg).map(|(l, _)| l))
        .collect()
}
