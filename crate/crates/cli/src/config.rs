//! Run configuration: a TOML file with one table per module, overridden by
//! command-line flags.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use scirel::eval::MacroOver;
use scirel::pcnn::ModelConfig;
use scirel::preprocess::PreprocessConfig;
use scirel::trainer::{Grid, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// Keep only the first `n` vectors of the file.
    pub vocab_limit: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub macro_over: MacroOver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub precision: Precision,
    /// Concurrent grid trials.
    pub parallel: usize,
    pub preprocess: PreprocessConfig,
    pub model: ModelConfig,
    /// `train.seed` is the single seed of a run.
    pub train: TrainConfig,
    pub grid: Grid,
    pub embeddings: EmbeddingSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            precision: Precision::F32,
            parallel: 1,
            preprocess: PreprocessConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            grid: Grid::standard(),
            embeddings: EmbeddingSection::default(),
            eval: EvalSection::default(),
        }
    }
}

/// Every problem found while checking a configuration and its inputs.
#[derive(Debug)]
pub struct UsageError(pub Vec<String>);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.as_slice() {
            [one] => write!(f, "{one}"),
            many => {
                write!(f, "{} problems:", many.len())?;
                for p in many {
                    write!(f, "\n  - {p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for UsageError {}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(vec![format!("{}: {e}", path.display())]).into())
    }

    /// The model configuration the training settings imply.
    pub fn effective_model(&self) -> ModelConfig {
        self.train.model_config(&self.model)
    }

    pub fn effective_preprocess(&self) -> PreprocessConfig {
        self.preprocess.with_len(self.train.max_seq_len)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tagged = |section: &'static str, v: Vec<String>| {
            v.into_iter().map(move |m| format!("[{section}] {m}"))
        };
        out.extend(tagged(
            "preprocess",
            self.effective_preprocess().violations(),
        ));
        out.extend(tagged("model", self.effective_model().violations()));
        out.extend(tagged("train", self.train.violations()));
        if self.preprocess.position_window != self.model.position_window {
            out.push(format!(
                "preprocess.position_window ({}) and model.position_window ({}) differ",
                self.preprocess.position_window, self.model.position_window
            ));
        }
        if self.parallel == 0 {
            out.push("parallel must be at least 1".to_owned());
        }
        if self.embeddings.vocab_limit == Some(0) {
            out.push("[embeddings] vocab_limit must be positive".to_owned());
        }
        let g = &self.grid;
        for (name, empty) in [
            ("epochs", g.epochs.is_empty()),
            ("max_seq_len", g.max_seq_len.is_empty()),
            ("batch_size", g.batch_size.is_empty()),
            ("n_filters", g.n_filters.is_empty()),
            ("learning_rate", g.learning_rate.is_empty()),
        ] {
            if empty {
                out.push(format!("[grid] {name} is empty"));
            }
        }
        for c in g.configs(self.train.seed, self.train.augment) {
            for v in c.violations() {
                let msg = format!("[grid] {v}");
                if !out.contains(&msg) {
                    out.push(msg);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!(cfg.violations().is_empty());
    }

    #[test]
    fn sections_override_fields() {
        let cfg: RunConfig = toml::from_str(
            "precision = \"f64\"\n[train]\nepochs = 3\nseed = 9\n[model]\nfilter_widths = [2, 3]\n[eval]\nmacro_over = \"present\"\n",
        )
        .unwrap();
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.model.filter_widths, vec![2, 3]);
        assert_eq!(cfg.eval.macro_over, MacroOver::Present);
    }

    #[test]
    fn unknown_top_level_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("epochs = 3").is_err());
    }

    #[test]
    fn all_violations_are_listed() {
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 0;
        cfg.train.learning_rate = -1.0;
        cfg.parallel = 0;
        cfg.grid.epochs.clear();
        let v = cfg.violations();
        assert!(v.len() >= 4, "{v:?}");
        assert!(v.iter().any(|m| m.contains("batch_size")));
        assert!(v.iter().any(|m| m.contains("learning_rate")));
        assert!(v.iter().any(|m| m.contains("parallel")));
        assert!(v.iter().any(|m| m.contains("[grid] epochs")));
    }
}
