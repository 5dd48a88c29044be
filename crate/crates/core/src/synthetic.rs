//! Generated corpora for tests and demos.
//!
//! Every relation is written as one sentence in which a cue word for its
//! label sits between the two entities, so a working classifier can learn
//! the task from a few dozen examples.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{parse_documents, parse_relations, Corpus, Label, SourceTag};
use crate::diffcore::Scalar;
use crate::embeddings::{random_word_table, EmbeddingTable, Vocabulary};
use crate::preprocess::{corpus_tokens, PreprocessConfig};

const FILLERS: &[&str] = &[
    "the", "a", "of", "in", "we", "this", "method", "data", "system", "results", "approach", "new",
];

fn cues(label: Label) -> [&'static str; 2] {
    match label {
        Label::Usage => ["applies", "employs"],
        Label::Result => ["yields", "produces"],
        Label::Model => ["describes", "represents"],
        Label::PartWhole => ["contains", "includes"],
        Label::Topic => ["discusses", "concerns"],
        Label::Comparison => ["versus", "outperforms"],
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticOptions {
    pub documents: usize,
    pub relations_per_document: usize,
    pub seed: u64,
    pub source: SourceTag,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            documents: 10,
            relations_per_document: 3,
            seed: 0,
            source: SourceTag::Task11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Document file contents in release markup.
    pub text: String,
    /// Relations file contents.
    pub relations_text: String,
    /// Every token of the corpus.
    pub vocab: Vocabulary,
}

impl SyntheticCorpus {
    pub fn generate(opts: &SyntheticOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut text = String::new();
        let mut relations_text = String::new();
        for d in 0..opts.documents {
            let doc_id = format!("S{}-{d:03}", opts.seed);
            let mut abstract_markup = String::new();
            let mut next_entity = 1;
            for _ in 0..opts.relations_per_document {
                let label = *Label::ALL.choose(&mut rng).expect("labels");
                let mut sentence: Vec<String> = Vec::new();
                for _ in 0..rng.random_range(0..3) {
                    sentence.push((*FILLERS.choose(&mut rng).expect("fillers")).to_owned());
                }
                let mut entity = |rng: &mut ChaCha8Rng, sentence: &mut Vec<String>| {
                    let id = format!("{doc_id}.{next_entity}");
                    next_entity += 1;
                    let mut surface = format!("term{}", rng.random_range(0..40));
                    if rng.random_bool(0.3) {
                        surface.push_str(" model");
                    }
                    sentence.push(format!("<entity id=\"{id}\">{surface}</entity>"));
                    id
                };
                let e1 = entity(&mut rng, &mut sentence);
                sentence.push((*cues(label).choose(&mut rng).expect("cues")).to_owned());
                let e2 = entity(&mut rng, &mut sentence);
                for _ in 0..rng.random_range(0..3) {
                    sentence.push((*FILLERS.choose(&mut rng).expect("fillers")).to_owned());
                }
                if !abstract_markup.is_empty() {
                    abstract_markup.push(' ');
                }
                abstract_markup.push_str(&sentence.join(" "));
                abstract_markup.push('.');
                let reverse = if rng.random_bool(0.3) { ",REVERSE" } else { "" };
                let _ = writeln!(relations_text, "{}({e1},{e2}{reverse})", label.as_str());
            }
            let _ = write!(
                text,
                "<text id=\"{doc_id}\">\n<title>Synthetic document {d}</title>\n<abstract>{abstract_markup}</abstract>\n</text>\n"
            );
        }
        let documents = parse_documents(&text).expect("generated markup parses");
        let relations = parse_relations(&relations_text).expect("generated relations parse");
        let corpus = Corpus::new(documents, relations, opts.source).expect("unique document ids");

        let tokens = corpus_tokens([&corpus], &PreprocessConfig::default());
        SyntheticCorpus {
            corpus,
            text,
            relations_text,
            vocab: Vocabulary::from_tokens(tokens),
        }
    }

    /// Splits by document: the first `fraction` of documents and their
    /// relations, then the rest.
    pub fn split(&self, fraction: f64) -> (Corpus, Corpus) {
        let n = ((self.corpus.documents.len() as f64) * fraction).round() as usize;
        let owner: HashMap<&str, usize> = self
            .corpus
            .documents
            .iter()
            .enumerate()
            .flat_map(|(i, d)| d.entities.iter().map(move |e| (e.entity_id.as_str(), i)))
            .collect();
        let (head_docs, tail_docs) = self.corpus.documents.split_at(n);
        let (head_rel, tail_rel): (Vec<_>, Vec<_>) = self
            .corpus
            .relations
            .iter()
            .cloned()
            .partition(|r| owner.get(r.arg1_id.as_str()).is_some_and(|&i| i < n));
        let make = |docs: &[crate::corpus::Document], rels| {
            Corpus::new(docs.to_vec(), rels, self.corpus.source).expect("subset of a valid corpus")
        };
        (make(head_docs, head_rel), make(tail_docs, tail_rel))
    }

    /// Random word table over the corpus vocabulary.
    pub fn word_table<F: Scalar>(&self, dim: usize, seed: u64) -> EmbeddingTable<F> {
        random_word_table(&self.vocab, dim, seed)
    }

    /// The same vectors as [`Self::word_table`], in the text format read by
    /// the embedding loader (with a `count dim` header).
    pub fn embeddings_text(&self, dim: usize, seed: u64) -> String {
        let table = self.word_table::<f64>(dim, seed);
        let words = &self.vocab.tokens()[2..];
        let mut out = format!("{} {dim}\n", words.len());
        for (i, w) in words.iter().enumerate() {
            out.push_str(w);
            for v in table.row(i + 2) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}
