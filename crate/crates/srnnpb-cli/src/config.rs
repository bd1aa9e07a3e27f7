//! Run configuration: defaults, optional JSON config file, command-line
//! flags, and the paper-profile shorthand. Precedence is
//! defaults < config file < --paper-defaults < explicit flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use srnnpb::error::{Error, Result};
use srnnpb::model::ModelConfig;
use srnnpb::recognition::RecognitionConfig;
use srnnpb::training::TrainConfig;

/// Optional overrides loaded from a JSON config file. Every field mirrors a
/// command-line flag; absent fields keep their defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub pb_dim: Option<usize>,
    pub hidden: Option<usize>,
    pub beta: Option<f64>,
    pub deterministic: Option<bool>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub grad_clip: Option<f64>,
    pub full_batch: Option<bool>,
    pub normalize: Option<String>,
    pub iterations: Option<usize>,
    pub recognition_learning_rate: Option<f64>,
    pub observed_fraction: Option<f64>,
    pub trials: Option<usize>,
    pub random_candidates: Option<usize>,
    pub presearch_sigma: Option<f64>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("config file {}: {e}", path.display())))
}

/// Settings of the reference experiments: D_PB = 4, 256 hidden units,
/// 50,000 epochs at learning rate 0.001, recognition for 100 iterations at
/// learning rate 0.1 on the first 80% of each sequence.
#[derive(Debug, Clone, Copy)]
pub struct PaperDefaults;

impl PaperDefaults {
    pub const PB_DIM: usize = 4;
    pub const HIDDEN: usize = 256;
    pub const EPOCHS: usize = 50_000;
    pub const LEARNING_RATE: f64 = 1e-3;
    pub const RECOGNITION_ITERATIONS: usize = 100;
    pub const RECOGNITION_LEARNING_RATE: f64 = 0.1;
    pub const OBSERVED_FRACTION: f64 = 0.8;
    pub const TRIALS: usize = 10;
}

/// Resolved settings for one run, produced by the merge.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub recognition: RecognitionConfig,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            model: ModelConfig {
                input_dim: 0, // filled from data
                pb_dim: 4,
                hidden_dim: 64,
                deterministic: false,
                beta: 1e-6,
            },
            train: TrainConfig::default(),
            recognition: RecognitionConfig::default(),
        }
    }
}

impl Resolved {
    pub fn apply_file(&mut self, f: &FileConfig) {
        if let Some(v) = f.pb_dim {
            self.model.pb_dim = v;
        }
        if let Some(v) = f.hidden {
            self.model.hidden_dim = v;
        }
        if let Some(v) = f.beta {
            self.model.beta = v;
        }
        if let Some(v) = f.deterministic {
            self.model.deterministic = v;
        }
        if let Some(v) = f.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = f.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = f.seed {
            self.train.seed = v;
            self.recognition.seed = v;
        }
        if let Some(v) = f.checkpoint_every {
            self.train.checkpoint_every = v;
        }
        if let Some(v) = f.grad_clip {
            self.train.grad_clip = Some(v);
        }
        if let Some(v) = f.full_batch {
            self.train.full_batch = v;
        }
        if let Some(v) = f.iterations {
            self.recognition.iterations = v;
        }
        if let Some(v) = f.recognition_learning_rate {
            self.recognition.learning_rate = v;
        }
        if let Some(v) = f.observed_fraction {
            self.recognition.observed_fraction = v;
        }
        if let Some(v) = f.trials {
            self.recognition.trials = v;
        }
        if let Some(v) = f.random_candidates {
            self.recognition.random_candidates = v;
        }
        if let Some(v) = f.presearch_sigma {
            self.recognition.presearch_sigma = v;
        }
    }

    pub fn apply_paper_defaults(&mut self) {
        self.model.pb_dim = PaperDefaults::PB_DIM;
        self.model.hidden_dim = PaperDefaults::HIDDEN;
        self.train.epochs = PaperDefaults::EPOCHS;
        self.train.learning_rate = PaperDefaults::LEARNING_RATE;
        self.recognition.iterations = PaperDefaults::RECOGNITION_ITERATIONS;
        self.recognition.learning_rate = PaperDefaults::RECOGNITION_LEARNING_RATE;
        self.recognition.observed_fraction = PaperDefaults::OBSERVED_FRACTION;
        self.recognition.trials = PaperDefaults::TRIALS;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_then_flags_win() {
        let mut resolved = Resolved::default();
        let file: FileConfig =
            serde_json::from_str(r#"{"pb_dim": 2, "epochs": 123, "beta": 0.5}"#).unwrap();
        resolved.apply_file(&file);
        assert_eq!(resolved.model.pb_dim, 2);
        assert_eq!(resolved.train.epochs, 123);
        assert_eq!(resolved.model.beta, 0.5);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"learnin_rate": 1.0}"#);
        assert!(err.is_err());
    }

    #[test]
    fn paper_profile_sets_reference_settings() {
        let mut resolved = Resolved::default();
        resolved.apply_paper_defaults();
        assert_eq!(resolved.model.pb_dim, 4);
        assert_eq!(resolved.model.hidden_dim, 256);
        assert_eq!(resolved.train.epochs, 50_000);
        assert_eq!(resolved.train.learning_rate, 1e-3);
        assert_eq!(resolved.recognition.iterations, 100);
        assert_eq!(resolved.recognition.learning_rate, 0.1);
        assert_eq!(resolved.recognition.observed_fraction, 0.8);
    }
}
