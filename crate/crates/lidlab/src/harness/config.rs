//! Experiment configuration: defaults, `key=value` config files, and the
//! setters the CLI flags map onto.
//!
//! A config file is a sequence of `key=value` lines; blank lines and lines
//! starting with `#` are ignored; later assignments win. Dataset-specific
//! keys (`n_train`, `blob_spread`, `train_images`, ...) apply to the dataset
//! selected by the most recent `dataset=` line, so select the dataset first.

use std::path::{Path, PathBuf};

use crate::attack::{AttackConfig, AttackKind, DecisionRule};
use crate::data::PIXEL_BOX;
use crate::detector::DetectorHyperparams;
use crate::error::{Error, Result};
use crate::lid::LidConfig;
use crate::nn::TrainConfig;

/// Where the experiment's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Procedural seven-segment digit images (28x28, 10 classes), generated
    /// from the experiment seed. The default.
    Digits { n_train: usize, n_test: usize },
    /// Gaussian blob clusters — cheap, low-dimensional oracle data.
    Blobs {
        n_train: usize,
        n_test: usize,
        classes: usize,
        dim: usize,
        spread: f64,
    },
    /// IDX image/label files on disk (the MNIST distribution layout).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

impl DatasetSpec {
    fn validate(&self) -> Result<()> {
        match self {
            DatasetSpec::Digits { n_train, n_test } => {
                if *n_train == 0 || *n_test == 0 {
                    return Err(Error::Config(
                        "digit dataset sizes must be positive".into(),
                    ));
                }
            }
            DatasetSpec::Blobs {
                n_train,
                n_test,
                classes,
                dim,
                spread,
            } => {
                if *n_train == 0 || *n_test == 0 {
                    return Err(Error::Config("blob dataset sizes must be positive".into()));
                }
                if *classes < 2 {
                    return Err(Error::Config(format!(
                        "blob dataset needs at least 2 classes, got {classes}"
                    )));
                }
                if *dim == 0 {
                    return Err(Error::Config("blob dimension must be positive".into()));
                }
                if !(spread.is_finite() && *spread >= 0.0) {
                    return Err(Error::Config(format!(
                        "blob spread must be finite and nonnegative, got {spread}"
                    )));
                }
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                for (key, p) in [
                    ("train_images", train_images),
                    ("train_labels", train_labels),
                    ("test_images", test_images),
                    ("test_labels", test_labels),
                ] {
                    if p.as_os_str().is_empty() {
                        return Err(Error::Config(format!(
                            "idx dataset requires {key} to be set"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A model is either an architecture to train from the experiment seed or a
/// finished weight file to load as-is.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Layer widths, written `784x128x64x10`: relu between layers, identity
    /// into the logits.
    Dims(Vec<usize>),
    /// Path to a `.lidnn` weight file. Loaded verbatim — no training and no
    /// logit scaling are applied.
    Weights(PathBuf),
}

impl ModelSpec {
    /// The default target architecture.
    pub fn model_a() -> Self {
        ModelSpec::Dims(vec![784, 128, 64, 10])
    }

    /// The default (distinct) source architecture for transfer runs.
    pub fn model_b() -> Self {
        ModelSpec::Dims(vec![784, 256, 128, 64, 10])
    }

    /// Parse `model-a` / `model-b`, a dims string like `784x128x64x10`, or a
    /// weight-file path (anything else).
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "model-a" => return Ok(ModelSpec::model_a()),
            "model-b" => return Ok(ModelSpec::model_b()),
            _ => {}
        }
        let parts: Vec<&str> = s.split('x').collect();
        if parts.len() >= 2 && parts.iter().all(|p| p.parse::<usize>().is_ok()) {
            let dims: Vec<usize> = parts.iter().map(|p| p.parse().unwrap()).collect();
            let spec = ModelSpec::Dims(dims);
            spec.validate()?;
            return Ok(spec);
        }
        Ok(ModelSpec::Weights(PathBuf::from(s)))
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Dims(dims) => {
                if dims.len() < 2 {
                    return Err(Error::Config(format!(
                        "model dims need at least input and output sizes, got {dims:?}"
                    )));
                }
                if dims.iter().any(|&d| d == 0) {
                    return Err(Error::Config(format!(
                        "model dims must all be positive, got {dims:?}"
                    )));
                }
                if *dims.last().unwrap() < 2 {
                    return Err(Error::Config(format!(
                        "model output dim must be at least 2 classes, got {dims:?}"
                    )));
                }
            }
            ModelSpec::Weights(path) => {
                if path.as_os_str().is_empty() {
                    return Err(Error::Config("model weight path is empty".into()));
                }
            }
        }
        Ok(())
    }
}

/// Where feature-extraction reference minibatches come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceSplit {
    /// Seeded draws from the training split; queries have no counterpart in
    /// the batch. The default.
    Train,
    /// The attacked samples' own clean (test-split) images form the batch,
    /// padded from the training pool; each query excludes its own clean
    /// counterpart from its neighborhoods.
    TestSelf,
}

impl ReferenceSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceSplit::Train => "train",
            ReferenceSplit::TestSelf => "test-self",
        }
    }
}

impl std::str::FromStr for ReferenceSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(ReferenceSplit::Train),
            "test-self" => Ok(ReferenceSplit::TestSelf),
            other => Err(Error::Config(format!(
                "unknown reference split {other:?} (expected train or test-self)"
            ))),
        }
    }
}

/// Everything one experiment run needs. One master `seed` drives all
/// randomness; every consumer derives its own stream from it (see the seed
/// module), so runs are reproducible bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub target_model: ModelSpec,
    pub source_model: ModelSpec,
    /// Training hyperparameters for freshly trained models. The `seed` field
    /// inside is ignored; training seeds are derived from `self.seed`.
    pub model_train: TrainConfig,
    /// Factor applied to the final affine layer of freshly trained models.
    /// Leaves decision boundaries, accuracy, and hidden activations
    /// untouched while widening the reachable logit-margin range, so
    /// confidence sweeps in logit units cover interesting ground at this
    /// model scale. Set to 1 to disable. Never applied to loaded weights.
    pub logit_scale: f64,
    pub attack: AttackKind,
    pub decision_rule: DecisionRule,
    pub kappa_list: Vec<f64>,
    pub beta: f64,
    /// How many correctly classified test samples to attack.
    pub n_targets: usize,
    pub attack_iterations: usize,
    pub attack_search_steps: usize,
    pub attack_learning_rate: f64,
    pub attack_c_init: f64,
    pub attack_c_max: f64,
    pub lid: LidConfig,
    pub reference_split: ReferenceSplit,
    pub detector: DetectorHyperparams,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Digits {
                n_train: 2000,
                n_test: 600,
            },
            target_model: ModelSpec::model_a(),
            source_model: ModelSpec::model_b(),
            model_train: TrainConfig::default(),
            logit_scale: 3.0,
            attack: AttackKind::Cw,
            decision_rule: DecisionRule::En,
            kappa_list: vec![0.0],
            beta: 0.1,
            n_targets: 200,
            attack_iterations: 200,
            attack_search_steps: 9,
            attack_learning_rate: 1e-2,
            attack_c_init: 1e-3,
            attack_c_max: 1e10,
            lid: LidConfig::default(),
            reference_split: ReferenceSplit::Train,
            detector: DetectorHyperparams::default(),
            seed: 42,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

/// Parse a comma-separated list of confidence levels. Negative zero is
/// normalized to positive zero so that seed derivation (which keys on f64
/// bit patterns) treats the two spellings identically.
pub fn parse_kappa_list(value: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            return Err(Error::Config(format!(
                "kappa list {value:?} has an empty entry"
            )));
        }
        let k: f64 = parse_num("kappa", part)?;
        out.push(if k == 0.0 { 0.0 } else { k });
    }
    if out.is_empty() {
        return Err(Error::Config("kappa list is empty".into()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Apply one `key=value` assignment. The CLI flags call this too, so
    /// file keys and flag spellings stay consistent.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "digits" => DatasetSpec::Digits {
                        n_train: 2000,
                        n_test: 600,
                    },
                    "blobs" => DatasetSpec::Blobs {
                        n_train: 600,
                        n_test: 300,
                        classes: 3,
                        dim: 8,
                        spread: 0.06,
                    },
                    "idx" => DatasetSpec::Idx {
                        train_images: PathBuf::new(),
                        train_labels: PathBuf::new(),
                        test_images: PathBuf::new(),
                        test_labels: PathBuf::new(),
                    },
                    other => {
                        return Err(Error::Config(format!(
                            "unknown dataset {other:?} (expected digits, blobs, or idx)"
                        )))
                    }
                };
            }
            "n_train" => match &mut self.dataset {
                DatasetSpec::Digits { n_train, .. } | DatasetSpec::Blobs { n_train, .. } => {
                    *n_train = parse_num(key, value)?;
                }
                DatasetSpec::Idx { .. } => {
                    return Err(Error::Config(
                        "n_train only applies to synthetic datasets (digits, blobs)".into(),
                    ))
                }
            },
            "n_test" => match &mut self.dataset {
                DatasetSpec::Digits { n_test, .. } | DatasetSpec::Blobs { n_test, .. } => {
                    *n_test = parse_num(key, value)?;
                }
                DatasetSpec::Idx { .. } => {
                    return Err(Error::Config(
                        "n_test only applies to synthetic datasets (digits, blobs)".into(),
                    ))
                }
            },
            "blob_classes" | "blob_dim" | "blob_spread" => match &mut self.dataset {
                DatasetSpec::Blobs {
                    classes,
                    dim,
                    spread,
                    ..
                } => match key {
                    "blob_classes" => *classes = parse_num(key, value)?,
                    "blob_dim" => *dim = parse_num(key, value)?,
                    _ => *spread = parse_num(key, value)?,
                },
                _ => {
                    return Err(Error::Config(format!(
                        "{key} only applies after dataset=blobs"
                    )))
                }
            },
            "train_images" | "train_labels" | "test_images" | "test_labels" => {
                match &mut self.dataset {
                    DatasetSpec::Idx {
                        train_images,
                        train_labels,
                        test_images,
                        test_labels,
                    } => {
                        let slot = match key {
                            "train_images" => train_images,
                            "train_labels" => train_labels,
                            "test_images" => test_images,
                            _ => test_labels,
                        };
                        *slot = PathBuf::from(value);
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "{key} only applies after dataset=idx"
                        )))
                    }
                }
            }
            "target_model" => self.target_model = ModelSpec::parse(value)?,
            "source_model" => self.source_model = ModelSpec::parse(value)?,
            "model_learning_rate" => self.model_train.learning_rate = parse_num(key, value)?,
            "model_epochs" => self.model_train.epochs = parse_num(key, value)?,
            "model_batch_size" => self.model_train.batch_size = parse_num(key, value)?,
            "logit_scale" => self.logit_scale = parse_num(key, value)?,
            "attack" => self.attack = value.parse()?,
            "rule" => self.decision_rule = value.parse()?,
            "kappa" => self.kappa_list = parse_kappa_list(value)?,
            "beta" => self.beta = parse_num(key, value)?,
            "n_targets" => self.n_targets = parse_num(key, value)?,
            "attack_iterations" => self.attack_iterations = parse_num(key, value)?,
            "attack_search_steps" => self.attack_search_steps = parse_num(key, value)?,
            "attack_learning_rate" => self.attack_learning_rate = parse_num(key, value)?,
            "attack_c_init" => self.attack_c_init = parse_num(key, value)?,
            "attack_c_max" => self.attack_c_max = parse_num(key, value)?,
            "k" => self.lid.k = parse_num(key, value)?,
            "batch_size" => self.lid.batch_size = parse_num(key, value)?,
            "reference_split" => self.reference_split = value.parse()?,
            "detector_learning_rate" => self.detector.learning_rate = parse_num(key, value)?,
            "detector_epochs" => self.detector.epochs = parse_num(key, value)?,
            "detector_threshold" => self.detector.threshold = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Parse a config file's text on top of the defaults.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", idx + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", idx + 1)))?;
        }
        Ok(cfg)
    }

    /// Load a config file from disk on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text)
    }

    /// The attack configuration for one confidence level of this experiment.
    pub fn attack_config(&self, kappa: f64) -> AttackConfig {
        AttackConfig {
            kappa,
            beta: self.beta,
            max_iterations: self.attack_iterations,
            binary_search_steps: self.attack_search_steps,
            c_init: self.attack_c_init,
            c_max: self.attack_c_max,
            learning_rate: self.attack_learning_rate,
            decision_rule: self.decision_rule,
            box_constraint: PIXEL_BOX,
            seed: self.seed,
        }
    }

    /// Check every field; returns non-fatal warnings (currently only the
    /// small-target-count advisory) to surface to the user.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.dataset.validate()?;
        self.target_model.validate()?;
        self.source_model.validate()?;
        if !(self.model_train.learning_rate > 0.0 && self.model_train.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "model_learning_rate must be positive and finite, got {}",
                self.model_train.learning_rate
            )));
        }
        if self.model_train.batch_size == 0 {
            return Err(Error::Config("model_batch_size must be positive".into()));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::Config(format!(
                "logit_scale must be positive and finite, got {}",
                self.logit_scale
            )));
        }
        if self.kappa_list.is_empty() {
            return Err(Error::Config("kappa list must not be empty".into()));
        }
        for &k in &self.kappa_list {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::Config(format!(
                    "confidence levels must be finite and nonnegative, got {k}"
                )));
            }
        }
        if self.n_targets == 0 {
            return Err(Error::Config("n_targets must be positive".into()));
        }
        // Attack optimizer fields share AttackConfig's own validation.
        self.attack_config(0.0).validate()?;
        self.lid.validate()?;
        self.detector.validate()?;

        let mut warnings = Vec::new();
        if self.n_targets < self.lid.batch_size {
            warnings.push(format!(
                "n_targets ({}) is below the LID reference batch size ({}); \
                 detector train/test sets will be small",
                self.n_targets, self.lid.batch_size
            ));
        }
        Ok(warnings)
    }
}
