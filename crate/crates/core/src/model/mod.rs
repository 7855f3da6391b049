//! Lead-synthesis model: networks, objectives, training and inference.

mod batch;
mod infer;
mod io;
pub mod losses;
mod nets;
mod train;

pub use batch::{build_batch, draw_items, sample_batch, BatchItem, GanBatch};
pub use infer::{generate_lead, map_latent, style_encode, synthesize_from_one, synthesize_twelve};
pub use io::{bundle_from_checkpoint, bundle_to_checkpoint, load_bundle, save_bundle, save_history};
pub use losses::{all_terms, loss_adv, loss_con, loss_rec, loss_sty, LossTerms};
pub use nets::{Discriminator, DownTrunk, Generator, MappingNet, StyleNet};
pub use train::{
    discriminator_grads, evaluate, generator_grads, generator_forward, train, train_step, GeneratorForward, HistoryRow,
    TrainHistory, TrainOutcome, ValidationRow,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{AdamConfig, AdamState, Module, NnError, Scalar};
use crate::signal::{LeadId, SignalError};

/// Style code dimension.
pub const STYLE_DIM: usize = 512;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("lead {0} is not generated in this mode")]
    InvalidTarget(LeadId),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("non-finite loss at step {step}: {terms}")]
    NonFiniteLoss { step: u64, terms: String },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("checkpoint mode {found} does not match required mode {expected}")]
    ModeMismatch { expected: GanMode, found: GanMode },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("i/o: {0}")]
    Io(String),
}

/// Two-lead input (Lead I plus delayed Lead II) or Lead I only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GanMode {
    T2t,
    S2e,
}

impl GanMode {
    pub fn generated_leads(self) -> &'static [LeadId] {
        match self {
            GanMode::T2t => &LeadId::FROM_TWO,
            GanMode::S2e => &LeadId::FROM_ONE,
        }
    }

    pub fn style_channels(self) -> usize {
        match self {
            GanMode::T2t => 2,
            GanMode::S2e => 1,
        }
    }

    pub fn head_of(self, lead: LeadId) -> Result<usize, ModelError> {
        self.generated_leads()
            .iter()
            .position(|&l| l == lead)
            .ok_or(ModelError::InvalidTarget(lead))
    }
}

impl std::fmt::Display for GanMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GanMode::T2t => "t2t",
            GanMode::S2e => "s2e",
        })
    }
}

impl std::str::FromStr for GanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t2t" => Ok(GanMode::T2t),
            "s2e" => Ok(GanMode::S2e),
            _ => Err(format!("unknown mode '{s}' (expected t2t or s2e)")),
        }
    }
}

/// Network sizes. The down path halves length once per entry of `widths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanArch {
    pub window_len: usize,
    pub stem_width: usize,
    pub widths: Vec<usize>,
    pub bottleneck_blocks: usize,
    pub kernel: usize,
    pub stem_kernel: usize,
    pub z_dim: usize,
    pub mapping_hidden: usize,
    pub mapping_blocks: usize,
}

impl Default for GanArch {
    fn default() -> Self {
        GanArch {
            window_len: crate::signal::DEFAULT_WINDOW_LEN,
            stem_width: 32,
            widths: vec![64, 128, 256, 256],
            bottleneck_blocks: 4,
            kernel: 3,
            stem_kernel: 7,
            z_dim: 64,
            mapping_hidden: 256,
            mapping_blocks: 2,
        }
    }
}

impl GanArch {
    /// Narrow variant that trains in minutes on one CPU core.
    pub fn desk(window_len: usize) -> Self {
        GanArch {
            window_len,
            stem_width: 16,
            widths: vec![16, 32, 32, 32],
            bottleneck_blocks: 4,
            kernel: 3,
            stem_kernel: 7,
            z_dim: 64,
            mapping_hidden: 128,
            mapping_blocks: 2,
        }
    }

    /// Very small nets for gradient checks and smoke runs.
    pub fn tiny(window_len: usize) -> Self {
        GanArch {
            window_len,
            stem_width: 2,
            widths: vec![3, 2],
            bottleneck_blocks: 1,
            kernel: 3,
            stem_kernel: 3,
            z_dim: 4,
            mapping_hidden: 5,
            mapping_blocks: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let factor = 1usize << self.widths.len();
        if self.window_len == 0 || self.window_len % factor != 0 || self.window_len / factor < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "window length {} must be a multiple of {factor} with at least 2 samples at the bottleneck",
                self.window_len
            )));
        }
        if self.widths.is_empty() || self.kernel % 2 == 0 || self.stem_kernel % 2 == 0 {
            return Err(ModelError::InvalidConfig("need at least one down stage and odd kernels".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: GanMode,
    pub seed: u64,
    #[serde(default = "d_one")]
    pub lambda_adv: f64,
    #[serde(default = "d_two")]
    pub lambda_rec: f64,
    #[serde(default = "d_one")]
    pub lambda_con: f64,
    #[serde(default = "d_one")]
    pub lambda_sty: f64,
    #[serde(default = "d_lr_fast")]
    pub lr_style: f64,
    #[serde(default = "d_lr_slow")]
    pub lr_mapping: f64,
    #[serde(default = "d_lr_fast")]
    pub lr_generator: f64,
    #[serde(default = "d_lr_slow")]
    pub lr_discriminator: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_steps")]
    pub steps: u64,
    #[serde(default = "d_delay")]
    pub delay: f64,
    /// Validation interval after the early phase.
    #[serde(default = "d_eval_every")]
    pub eval_every: u64,
    /// Validation interval during the first `early_steps` steps.
    #[serde(default = "d_early_eval")]
    pub early_eval_every: u64,
    #[serde(default = "d_early_steps")]
    pub early_steps: u64,
    #[serde(default = "d_batch")]
    pub val_batch: usize,
    #[serde(default)]
    pub arch: GanArch,
}

fn d_one() -> f64 {
    1.0
}
fn d_two() -> f64 {
    2.0
}
fn d_lr_fast() -> f64 {
    3e-4
}
fn d_lr_slow() -> f64 {
    1e-4
}
fn d_wd() -> f64 {
    1e-4
}
fn d_batch() -> usize {
    16
}
fn d_steps() -> u64 {
    2000
}
fn d_delay() -> f64 {
    crate::signal::DEFAULT_DELAY_S
}
fn d_eval_every() -> u64 {
    50
}
fn d_early_eval() -> u64 {
    10
}
fn d_early_steps() -> u64 {
    50
}

impl TrainConfig {
    pub fn new(mode: GanMode, seed: u64) -> Self {
        TrainConfig {
            mode,
            seed,
            lambda_adv: d_one(),
            lambda_rec: d_two(),
            lambda_con: d_one(),
            lambda_sty: d_one(),
            lr_style: d_lr_fast(),
            lr_mapping: d_lr_slow(),
            lr_generator: d_lr_fast(),
            lr_discriminator: d_lr_slow(),
            weight_decay: d_wd(),
            batch_size: d_batch(),
            steps: d_steps(),
            delay: d_delay(),
            eval_every: d_eval_every(),
            early_eval_every: d_early_eval(),
            early_steps: d_early_steps(),
            val_batch: d_batch(),
            arch: GanArch::default(),
        }
    }

    pub fn lambdas(&self) -> Lambdas {
        Lambdas {
            adv: self.lambda_adv,
            rec: self.lambda_rec,
            con: self.lambda_con,
            sty: self.lambda_sty,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let l = self.lambdas();
        if [l.adv, l.rec, l.con, l.sty].iter().any(|&v| !(v >= 0.0)) {
            return Err(ModelError::InvalidConfig("loss weights must be non-negative".into()));
        }
        if [self.lr_style, self.lr_mapping, self.lr_generator, self.lr_discriminator]
            .iter()
            .any(|&v| !(v > 0.0))
        {
            return Err(ModelError::InvalidConfig("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.early_eval_every == 0 {
            return Err(ModelError::InvalidConfig("batch size and eval intervals must be positive".into()));
        }
        self.arch.validate()
    }
}

/// Weights of the four objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub adv: f64,
    pub rec: f64,
    pub con: f64,
    pub sty: f64,
}

/// 512-dimensional style vector for one target lead.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleCode {
    pub values: Vec<f32>,
    pub target: LeadId,
}

/// Adam states of the four networks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerStates<T> {
    pub style: AdamState<T>,
    pub mapping: AdamState<T>,
    pub generator: AdamState<T>,
    pub discriminator: AdamState<T>,
}

/// The four networks, their optimizer states and the training step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBundle<T> {
    pub mode: GanMode,
    pub arch: GanArch,
    pub style: StyleNet<T>,
    pub mapping: MappingNet<T>,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub optim: OptimizerStates<T>,
    pub steps_trained: u64,
}

fn adam_for<T: Scalar>(m: &mut impl Module<T>, lr: f64, wd: f64) -> AdamState<T> {
    AdamState::new(AdamConfig::new(lr, wd), &m.params_mut())
}

impl<T: Scalar> NetworkBundle<T> {
    /// Freshly initialized networks; parameter draws depend only on `seed`.
    pub fn new(cfg: &TrainConfig) -> Result<Self, ModelError> {
        cfg.arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let arch = cfg.arch.clone();
        let heads = cfg.mode.generated_leads().len();
        let mut style = StyleNet::new(cfg.mode.style_channels(), heads, &arch, &mut rng);
        let mut mapping = MappingNet::new(heads, &arch, &mut rng);
        let mut generator = Generator::new(&arch, &mut rng);
        let mut discriminator = Discriminator::new(heads, &arch, &mut rng);
        let wd = cfg.weight_decay;
        let optim = OptimizerStates {
            style: adam_for(&mut style, cfg.lr_style, wd),
            mapping: adam_for(&mut mapping, cfg.lr_mapping, wd),
            generator: adam_for(&mut generator, cfg.lr_generator, wd),
            discriminator: adam_for(&mut discriminator, cfg.lr_discriminator, wd),
        };
        Ok(NetworkBundle {
            mode: cfg.mode,
            arch,
            style,
            mapping,
            generator,
            discriminator,
            optim,
            steps_trained: 0,
        })
    }

    pub fn zero_grad(&mut self) {
        self.style.zero_grad();
        self.mapping.zero_grad();
        self.generator.zero_grad();
        self.discriminator.zero_grad();
    }

    pub fn require_mode(&self, mode: GanMode) -> Result<(), ModelError> {
        if self.mode != mode {
            return Err(ModelError::ModeMismatch {
                expected: mode,
                found: self.mode,
            });
        }
        Ok(())
    }

    pub fn head_of(&self, lead: LeadId) -> Result<usize, ModelError> {
        self.mode.head_of(lead)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::signal::EcgRecord;
    use crate::synth::{generate_record, BeatTemplate};
    use crate::Label;

    pub const WINDOW: usize = 32;

    pub fn records(n: u64) -> Vec<EcgRecord> {
        let labels = [Label::Normal, Label::Mi, Label::Af];
        (0..n)
            .map(|k| {
                generate_record(&BeatTemplate::default(), labels[k as usize % 3], 60.0 + 5.0 * k as f64, 1.5, 100, k, 0)
                    .unwrap()
            })
            .collect()
    }

    pub fn config(mode: GanMode, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(mode, seed);
        cfg.arch = GanArch::tiny(WINDOW);
        cfg.batch_size = 3;
        cfg.val_batch = 3;
        cfg.delay = 0.2;
        cfg.steps = 4;
        cfg.eval_every = 2;
        cfg
    }

    pub fn bundle(mode: GanMode, seed: u64) -> NetworkBundle<f32> {
        NetworkBundle::new(&config(mode, seed)).unwrap()
    }
}
