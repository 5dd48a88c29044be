//! Vocabulary and embedding tables.
//!
//! Pretrained word vectors are read from the plain text format (one token
//! followed by its components per line, with or without a leading
//! `count dim` line). The vocabulary reserves id 0 for padding and id 1 for
//! unknown tokens.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diffcore::{Scalar, Tensor, TensorError};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
const PAD_ID: usize = 0;
const UNK_ID: usize = 1;

/// Bound of the uniform initializer used for every randomly initialized row.
pub const INIT_BOUND: f64 = 0.1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse `{value}` as a number")]
    BadNumber { line: usize, value: String },
    #[error("line {line}: non-finite component")]
    NonFinite { line: usize },
    #[error("embedding file contains no vectors")]
    Empty,
    #[error("id {id} out of range for a table with {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },
    #[error("invalid table: {0}")]
    Invalid(String),
}

impl From<TensorError> for EmbeddingError {
    fn from(e: TensorError) -> Self {
        EmbeddingError::Invalid(e.to_string())
    }
}

/// Token to id mapping with dense ids and reserved PAD/UNK entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary holding PAD, UNK and then `tokens` in order, skipping
    /// repeats and the reserved names.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        vocab.insert(PAD_TOKEN.to_owned());
        vocab.insert(UNK_TOKEN.to_owned());
        for t in tokens {
            vocab.insert(t);
        }
        vocab
    }

    fn insert(&mut self, token: String) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        true
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> usize {
        PAD_ID
    }

    pub fn unk_id(&self) -> usize {
        UNK_ID
    }

    /// Id of `token`, or the UNK id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// A `[rows × dim]` embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<F> {
    pub weights: Tensor<F>,
    pub trainable: bool,
    /// Row that never receives gradient (the PAD row of word tables).
    pub frozen_row: Option<usize>,
}

impl<F: Scalar> EmbeddingTable<F> {
    pub fn new(weights: Tensor<F>, trainable: bool) -> Result<Self, EmbeddingError> {
        if weights.shape().len() != 2 {
            return Err(EmbeddingError::Invalid(format!(
                "embedding matrix must be rank 2, got {:?}",
                weights.shape()
            )));
        }
        if weights.data().iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::Invalid("non-finite entry".into()));
        }
        Ok(EmbeddingTable {
            weights,
            trainable,
            frozen_row: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn row(&self, id: usize) -> &[F] {
        self.weights.row(id)
    }
}

/// Options for [`load_pretrained`].
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Keep only the first `n` vectors of the file.
    pub vocab_limit: Option<usize>,
    /// Keep only these tokens (after the limit is applied).
    pub restrict_to: Option<HashSet<String>>,
    pub unk_seed: u64,
    pub trainable: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            vocab_limit: None,
            restrict_to: None,
            unk_seed: 0,
            trainable: true,
        }
    }
}

fn uniform_rows<F: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> impl Iterator<Item = F> + '_ {
    (0..n).map(move |_| F::from_f64_lossy(rng.random_range(-INIT_BOUND..=INIT_BOUND)))
}

/// Reads pretrained vectors. The PAD row is zero and frozen, the UNK row is
/// drawn uniformly from `[-0.1, 0.1]` with `opts.unk_seed`.
pub fn read_pretrained<F: Scalar, R: BufRead>(
    reader: R,
    opts: &LoadOptions,
) -> Result<(Vocabulary, EmbeddingTable<F>), EmbeddingError> {
    let mut dim: Option<usize> = None;
    let mut words: Vec<String> = Vec::new();
    let mut values: Vec<F> = Vec::new();
    let mut seen = HashSet::new();
    let mut vectors_read = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: "<reader>".into(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();

        if line_no == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        let expected = *dim.get_or_insert(rest.len());
        if rest.len() != expected || expected == 0 {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected,
                found: rest.len(),
            });
        }
        if opts.vocab_limit.is_some_and(|limit| vectors_read >= limit) {
            break;
        }
        vectors_read += 1;

        let keep = word != PAD_TOKEN
            && word != UNK_TOKEN
            && opts
                .restrict_to
                .as_ref()
                .is_none_or(|set| set.contains(word))
            && seen.insert(word.to_owned());
        let mut parsed = Vec::with_capacity(expected);
        for v in &rest {
            let x: f64 = v.parse().map_err(|_| EmbeddingError::BadNumber {
                line: line_no,
                value: (*v).to_owned(),
            })?;
            if !x.is_finite() {
                return Err(EmbeddingError::NonFinite { line: line_no });
            }
            parsed.push(F::from_f64_lossy(x));
        }
        if keep {
            words.push(word.to_owned());
            values.extend(parsed);
        }
    }

    if vectors_read == 0 {
        return Err(EmbeddingError::Empty);
    }
    let dim = dim.expect("set by the first vector");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.unk_seed);
    let mut data: Vec<F> = vec![F::zero(); dim];
    data.extend(uniform_rows::<F>(&mut rng, dim));
    data.extend(values);

    let vocab = Vocabulary::from_tokens(words);
    debug_assert_eq!(vocab.len() * dim, data.len());
    let mut table =
        EmbeddingTable::new(Tensor::new(vec![vocab.len(), dim], data)?, opts.trainable)?;
    table.frozen_row = Some(PAD_ID);
    Ok((vocab, table))
}

pub fn load_pretrained<F: Scalar>(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<(Vocabulary, EmbeddingTable<F>), EmbeddingError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_pretrained(BufReader::new(file), opts).map_err(|e| match e {
        EmbeddingError::Io { source, .. } => EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Word table for an existing vocabulary, every row except PAD drawn from
/// the uniform initializer.
pub fn random_word_table<F: Scalar>(
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> EmbeddingTable<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![F::zero(); dim];
    data.extend(uniform_rows::<F>(&mut rng, (vocab.len() - 1) * dim));
    let mut table = EmbeddingTable::new(
        Tensor::new(vec![vocab.len(), dim], data).expect("shape"),
        true,
    )
    .expect("finite init");
    table.frozen_row = Some(PAD_ID);
    table
}

fn uniform_table<F: Scalar>(rows: usize, dim: usize, seed: u64) -> EmbeddingTable<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = uniform_rows::<F>(&mut rng, rows * dim).collect();
    EmbeddingTable::new(Tensor::new(vec![rows, dim], data).expect("shape"), true)
        .expect("finite init")
}

/// Table for clipped distances `-window..=window`, `2·window + 1` rows.
pub fn position_table<F: Scalar>(window: usize, dim: usize, seed: u64) -> EmbeddingTable<F> {
    assert!(window > 0 && dim > 0, "window and dim must be positive");
    uniform_table(2 * window + 1, dim, seed)
}

/// Row of distance `d` in a position table.
pub fn position_row(distance: i32, window: usize) -> usize {
    (distance as i64 + window as i64) as usize
}

/// Two rows: forward (0) and reverse (1).
pub fn direction_table<F: Scalar>(dim: usize, seed: u64) -> EmbeddingTable<F> {
    assert!(dim > 0, "dim must be positive");
    uniform_table(2, dim, seed)
}

/// Gathers rows: `out[i] = table[ids[i]]`.
pub fn lookup<F: Scalar>(
    table: &EmbeddingTable<F>,
    ids: &[usize],
) -> Result<Tensor<F>, EmbeddingError> {
    let rows = table.rows();
    let dim = table.dim();
    let mut data = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= rows {
            return Err(EmbeddingError::IdOutOfRange { id, rows });
        }
        data.extend_from_slice(table.row(id));
    }
    if ids.is_empty() {
        return Err(EmbeddingError::Invalid("lookup of zero ids".into()));
    }
    Ok(Tensor::new(vec![ids.len(), dim], data)?)
}

/// Adds `scale * grad_out[i]` into the gradient of row `ids[i]`. Repeated
/// ids accumulate. Frozen rows and non-trainable tables are skipped.
pub fn lookup_backward<F: Scalar>(
    table: &mut EmbeddingTable<F>,
    ids: &[usize],
    grad_out: &[F],
    scale: F,
) -> Result<(), EmbeddingError> {
    let dim = table.dim();
    if grad_out.len() != ids.len() * dim {
        return Err(EmbeddingError::Invalid(format!(
            "gradient has {} entries, expected {}",
            grad_out.len(),
            ids.len() * dim
        )));
    }
    if !table.trainable {
        return Ok(());
    }
    let rows = table.rows();
    let frozen = table.frozen_row;
    let grad = table.weights.grad_mut();
    for (&id, g) in ids.iter().zip(grad_out.chunks_exact(dim)) {
        if id >= rows {
            return Err(EmbeddingError::IdOutOfRange { id, rows });
        }
        if Some(id) == frozen {
            continue;
        }
        for (acc, &v) in grad[id * dim..(id + 1) * dim].iter_mut().zip(g) {
            *acc += scale * v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Cursor, Write};

    fn read(text: &str) -> Result<(Vocabulary, EmbeddingTable<f64>), EmbeddingError> {
        read_pretrained(Cursor::new(text), &LoadOptions::default())
    }

    #[test]
    fn loads_with_and_without_header() {
        let body = "alpha 1 2 3 4\nbeta 5 6 7 8\ngamma 0.5 0.25 -1 2e-1\n";
        let (v1, t1) = read(body).unwrap();
        let (v2, t2) = read(&format!("3 4\n{body}")).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(t1, t2);
        let line_count = body.lines().count();
        assert_eq!(v1.len(), line_count + 2);
        assert_eq!(t1.weights.shape(), &[5, 4]);
        assert_eq!(t1.row(v1.id("beta")), &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(v1.id("delta"), v1.unk_id());
    }

    #[test]
    fn pad_row_is_zero_and_unk_is_bounded() {
        let (v, t) = read("a 1 1\nb 2 2\n").unwrap();
        assert_eq!(t.row(v.pad_id()), &[0.0, 0.0]);
        let looked = lookup(&t, &[v.pad_id()]).unwrap();
        assert!(looked.data().iter().all(|&x| x == 0.0));
        assert!(t.row(v.unk_id()).iter().all(|x| x.abs() <= INIT_BOUND));
        assert_ne!(t.row(v.unk_id()), &[0.0, 0.0]);
    }

    #[test]
    fn load_errors() {
        match read("a 1 2 3\nb 1 2\n") {
            Err(EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2,
            }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(read(""), Err(EmbeddingError::Empty)));
        assert!(matches!(read("\n\n"), Err(EmbeddingError::Empty)));
        assert!(matches!(
            read("a 1 x\n"),
            Err(EmbeddingError::BadNumber { line: 1, .. })
        ));
        assert!(matches!(
            read("2 3\na 1 2\n"),
            Err(EmbeddingError::DimensionMismatch { line: 2, .. })
        ));
    }

    #[test]
    fn limit_and_restriction() {
        let text = "a 1\nb 2\nc 3\nd 4\n";
        let opts = LoadOptions {
            vocab_limit: Some(2),
            ..LoadOptions::default()
        };
        let (v, _) = read_pretrained::<f64, _>(Cursor::new(text), &opts).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        let opts = LoadOptions {
            restrict_to: Some(["c".to_owned(), "a".to_owned()].into_iter().collect()),
            ..LoadOptions::default()
        };
        let (v, t) = read_pretrained::<f64, _>(Cursor::new(text), &opts).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "c"]);
        assert_eq!(t.row(3), &[3.0]);
    }

    #[test]
    fn loading_a_file_is_idempotent() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "2 3\nx 0.1 0.2 0.3\ny -1 -2 -3").unwrap();
        let a = load_pretrained::<f32>(f.path(), &LoadOptions::default()).unwrap();
        let b = load_pretrained::<f32>(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(a, b);
        let missing = load_pretrained::<f32>("/nonexistent/vectors.txt", &LoadOptions::default());
        match missing {
            Err(e @ EmbeddingError::Io { .. }) => {
                assert!(e.to_string().contains("/nonexistent/vectors.txt"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn position_and_direction_tables() {
        let t = position_table::<f64>(30, 5, 7);
        assert_eq!(t.weights.shape(), &[61, 5]);
        assert_eq!(t, position_table::<f64>(30, 5, 7));
        assert!(t.weights.data().iter().all(|v| v.abs() <= 0.1));
        assert!(t.trainable);

        let d = direction_table::<f64>(5, 3);
        assert_eq!(d.weights.shape(), &[2, 5]);
        assert_eq!(d, direction_table::<f64>(5, 3));
        assert_ne!(d.row(0), d.row(1));
    }

    #[test]
    fn position_rows_are_a_bijection() {
        let window = 30;
        let rows: Vec<usize> = (-30..=30).map(|d| position_row(d, window)).collect();
        assert_eq!(rows, (0..61).collect::<Vec<_>>());
    }

    #[test]
    fn lookup_rows_and_errors() {
        let t = direction_table::<f64>(3, 1);
        let out = lookup(&t, &[0, 0]).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert!(matches!(
            lookup(&t, &[2]),
            Err(EmbeddingError::IdOutOfRange { id: 2, rows: 2 })
        ));
    }

    #[test]
    fn lookup_gradient_accumulates_repeats() {
        let mut t = position_table::<f64>(2, 3, 9);
        let ids = [1, 3, 1];
        let ones = vec![1.0; ids.len() * 3];
        lookup_backward(&mut t, &ids, &ones, 1.0).unwrap();
        let g = t.weights.grad().unwrap();
        assert_eq!(&g[3..6], &[2.0, 2.0, 2.0]);
        assert_eq!(&g[9..12], &[1.0, 1.0, 1.0]);
        // mass conservation
        assert_eq!(g.iter().sum::<f64>(), ones.iter().sum::<f64>());

        // finite differences of sum(lookup) with respect to the repeated row
        let h = 1e-6;
        for c in 0..3 {
            let mut plus = t.clone();
            plus.weights.data_mut()[3 + c] += h;
            let mut minus = t.clone();
            minus.weights.data_mut()[3 + c] -= h;
            let f =
                |tab: &EmbeddingTable<f64>| lookup(tab, &ids).unwrap().data().iter().sum::<f64>();
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((numeric - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn frozen_and_fixed_tables_get_no_gradient() {
        let (v, mut t) = read("a 1 2\n").unwrap();
        lookup_backward(&mut t, &[v.pad_id(), v.id("a")], &[1.0; 4], 1.0).unwrap();
        let g = t.weights.grad().unwrap();
        assert_eq!(&g[0..2], &[0.0, 0.0]);
        assert_eq!(&g[4..6], &[1.0, 1.0]);

        t.trainable = false;
        t.weights.clear_grad();
        lookup_backward(&mut t, &[v.id("a")], &[1.0; 2], 1.0).unwrap();
        assert!(t.weights.grad().is_none());
    }
}
