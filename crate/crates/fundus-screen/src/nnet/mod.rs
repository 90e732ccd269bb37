//! MiniNet: a small CNN with manual backpropagation.
//!
//! The backbone is a stem conv plus three body convs, all 3x3 stride 2 with
//! ReLU. The `multilevel` variant global-average-pools the feature maps of
//! several stages and concatenates them before the classifier head, so the
//! head sees early, intermediate, and deep features at once; the `plain`
//! variant pools only the last stage. Training is Adam with exponential LR
//! decay, cross-entropy loss, and early stopping on validation loss.
//!
//! Accumulations (convolution sums, loss means, Adam moments) run in f64 and
//! are stored as f32, which keeps gradient checks tight and results
//! bit-reproducible across platforms.

mod graph;
mod model;
mod optim;
mod tensor;
mod train;

pub use graph::{backward, cross_entropy, forward, grad_check, predict, ForwardCache};
pub use model::{load_model, model_from_bytes, model_to_bytes, save_model, ModelParams};
pub use optim::{adam_step, lr_at, lr_at_f64, AdamState};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainHistory};

use crate::imaging::{Image, PreprocessConfig};
use crate::kv::{self, KvConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("model io: bad magic (expected MLNN)")]
    BadMagic,
    #[error("model io: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("model io: unexpected end of file")]
    UnexpectedEof,
    #[error("model io: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, NnetError>;

/// Backbone variants: `plain` classifies from the last stage only,
/// `multilevel` fuses pooled features from several stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchVariant {
    Plain,
    Multilevel,
}

impl std::fmt::Display for ArchVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArchVariant::Plain => write!(f, "plain"),
            ArchVariant::Multilevel => write!(f, "multilevel"),
        }
    }
}

impl std::str::FromStr for ArchVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "plain" => Ok(ArchVariant::Plain),
            "multilevel" => Ok(ArchVariant::Multilevel),
            other => Err(format!("unknown variant {other:?} (plain|multilevel)")),
        }
    }
}

/// Network structure description.
///
/// `stage_channels[0]` is the stem; every stage halves the spatial size.
/// `tap_stages` lists the stages pooled into the classifier for the
/// multilevel variant (the plain variant always taps the last stage only).
#[derive(Debug, Clone, PartialEq)]
pub struct ArchDescriptor {
    pub variant: ArchVariant,
    pub input_size: usize,
    pub stage_channels: Vec<usize>,
    pub tap_stages: Vec<usize>,
    pub head_hidden: usize,
    pub classes: usize,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self {
            variant: ArchVariant::Multilevel,
            input_size: 64,
            stage_channels: vec![8, 16, 32, 64],
            tap_stages: vec![1, 2, 3],
            head_hidden: 32,
            classes: 2,
        }
    }
}

impl ArchDescriptor {
    pub fn plain() -> Self {
        Self {
            variant: ArchVariant::Plain,
            ..Self::default()
        }
    }

    /// Tiny configuration used by gradient checks.
    pub fn tiny(variant: ArchVariant) -> Self {
        Self {
            variant,
            input_size: 8,
            stage_channels: vec![2, 2, 2, 2],
            tap_stages: vec![1, 2, 3],
            head_hidden: 4,
            classes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(NnetError::Config("input_size must be at least 1".into()));
        }
        if self.stage_channels.is_empty() || self.stage_channels.iter().any(|&c| c == 0) {
            return Err(NnetError::Config(format!(
                "stage_channels must be non-empty positive counts, got {:?}",
                self.stage_channels
            )));
        }
        if self.head_hidden == 0 {
            return Err(NnetError::Config("head_hidden must be at least 1".into()));
        }
        if self.classes != 2 {
            return Err(NnetError::Config(format!(
                "only binary classification is supported, got {} classes",
                self.classes
            )));
        }
        if self.variant == ArchVariant::Multilevel {
            if self.tap_stages.is_empty() {
                return Err(NnetError::Config(
                    "multilevel variant needs at least one tap stage".into(),
                ));
            }
            for &s in &self.tap_stages {
                if s >= self.stage_channels.len() {
                    return Err(NnetError::Config(format!(
                        "tap stage {s} out of range for {} stages",
                        self.stage_channels.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stages feeding the classifier, resolved per variant.
    pub fn effective_taps(&self) -> Vec<usize> {
        match self.variant {
            ArchVariant::Plain => vec![self.stage_channels.len() - 1],
            ArchVariant::Multilevel => self.tap_stages.clone(),
        }
    }

    /// Width of the pooled concatenation feeding the head.
    pub fn concat_width(&self) -> usize {
        self.effective_taps()
            .iter()
            .map(|&s| self.stage_channels[s])
            .sum()
    }
}

impl KvConfig for ArchDescriptor {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "variant" => self.variant = value.parse()?,
            "input_size" => self.input_size = kv::parse_num(value, key)?,
            "stage_channels" => self.stage_channels = kv::parse_usize_list(value)?,
            "tap_stages" => self.tap_stages = kv::parse_usize_list(value)?,
            "head_hidden" => self.head_hidden = kv::parse_num(value, key)?,
            "classes" => self.classes = kv::parse_num(value, key)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("variant".into(), self.variant.to_string()),
            ("input_size".into(), self.input_size.to_string()),
            (
                "stage_channels".into(),
                kv::fmt_usize_list(&self.stage_channels),
            ),
            ("tap_stages".into(), kv::fmt_usize_list(&self.tap_stages)),
            ("head_hidden".into(), self.head_hidden.to_string()),
            ("classes".into(), self.classes.to_string()),
        ]
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f32,
    pub gamma: f32,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr0: 1e-4,
            gamma: 0.95,
            batch_size: 16,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 || !self.lr0.is_finite() {
            return Err(NnetError::Config(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(NnetError::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(NnetError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(NnetError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

impl KvConfig for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "epochs" => self.epochs = kv::parse_num(value, key)?,
            "lr0" => self.lr0 = kv::parse_num(value, key)?,
            "gamma" => self.gamma = kv::parse_num(value, key)?,
            "batch_size" => self.batch_size = kv::parse_num(value, key)?,
            "patience" => self.patience = kv::parse_num(value, key)?,
            "seed" => self.seed = kv::parse_num(value, key)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            ("lr0".into(), self.lr0.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("patience".into(), self.patience.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// One labeled training sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub label: u8,
}

/// In-memory dataset of preprocessed images plus the config that produced
/// them (snapshotted into trained models for provenance).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub preprocess: PreprocessConfig,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, preprocess: PreprocessConfig) -> Self {
        Self {
            samples,
            preprocess,
        }
    }

    pub fn from_labeled_images(items: Vec<(Image, u8)>) -> Self {
        let samples = items
            .into_iter()
            .enumerate()
            .map(|(i, (image, label))| Sample {
                id: format!("sample{i}"),
                image,
                label,
            })
            .collect();
        Self {
            samples,
            preprocess: PreprocessConfig::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        (self.samples.len() - pos, pos)
    }
}

/// Converts images to a normalized NCHW float batch.
pub(crate) fn batch_tensor(images: &[&Image], input_size: usize) -> Result<Tensor> {
    let n = images.len();
    let s = input_size;
    let mut data = vec![0f32; n * 3 * s * s];
    for (bi, img) in images.iter().enumerate() {
        if img.width as usize != s || img.height as usize != s {
            return Err(NnetError::Shape(format!(
                "image {bi} is {}x{}, network expects {s}x{s}",
                img.width, img.height
            )));
        }
        let base = bi * 3 * s * s;
        for y in 0..s {
            for x in 0..s {
                let px = (y * s + x) * 3;
                for c in 0..3 {
                    data[base + c * s * s + y * s + x] = img.data[px + c] as f32 / 255.0;
                }
            }
        }
    }
    Tensor::new(vec![n, 3, s, s], data)
}
