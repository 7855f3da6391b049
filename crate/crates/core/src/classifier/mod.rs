//! Downstream condition classifier: lead-variant datasets, a 1-D ResNet18
//! trained with focal loss, and AUROC / AUPRC with bootstrap intervals.

mod metrics;
mod resnet;

pub use metrics::{auprc, auroc, bootstrap_ci, MAX_REDRAWS, MIN_PER_CLASS};
pub use resnet::{ResNet1d, STAGES};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{synthesize_from_one, synthesize_twelve, GanMode, ModelError, NetworkBundle};
use crate::nn::{adam_step, focal_loss_logits, softmax_rows, AdamConfig, AdamState, Module, NnError, TensorBuf};
use crate::signal::{extract_async_pair, EcgRecord, Label, LeadId, SignalError};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("variant {0} needs a generator checkpoint")]
    MissingCheckpoint(LeadVariant),
    #[error("variant {variant} needs a {expected} checkpoint, got {found}")]
    ModeMismatch {
        variant: LeadVariant,
        expected: GanMode,
        found: GanMode,
    },
    #[error("training split holds a single class")]
    SingleClassDataset,
    #[error("scores hold a single class")]
    SingleClass,
    #[error("{pos} positive and {neg} negative examples; need {min} of each")]
    TooFewSamples { pos: usize, neg: usize, min: usize },
    #[error("bootstrap kept drawing single-class resamples")]
    DegenerateResampling,
    #[error("non-finite loss in epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

impl PartialEq for ClassifierError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

/// Which leads a classifier sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeadVariant {
    /// All twelve true synchronous leads.
    #[serde(rename = "original")]
    Original,
    /// True async Lead I and Lead II plus ten generated leads.
    #[serde(rename = "t2t")]
    T2t,
    /// True Lead I plus eleven generated leads.
    #[serde(rename = "s2e")]
    S2e,
    /// True async Lead I and Lead II.
    #[serde(rename = "two")]
    TwoLeads,
    /// True Lead I.
    #[serde(rename = "single")]
    SingleLead,
}

impl LeadVariant {
    pub const ALL: [LeadVariant; 5] = [
        LeadVariant::Original,
        LeadVariant::T2t,
        LeadVariant::S2e,
        LeadVariant::TwoLeads,
        LeadVariant::SingleLead,
    ];

    pub fn channels(self) -> usize {
        match self {
            LeadVariant::Original | LeadVariant::T2t | LeadVariant::S2e => 12,
            LeadVariant::TwoLeads => 2,
            LeadVariant::SingleLead => 1,
        }
    }

    pub fn generator_mode(self) -> Option<GanMode> {
        match self {
            LeadVariant::T2t => Some(GanMode::T2t),
            LeadVariant::S2e => Some(GanMode::S2e),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LeadVariant::Original => "original",
            LeadVariant::T2t => "t2t",
            LeadVariant::S2e => "s2e",
            LeadVariant::TwoLeads => "two",
            LeadVariant::SingleLead => "single",
        }
    }
}

impl std::fmt::Display for LeadVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LeadVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LeadVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant '{s}' (expected original, t2t, s2e, two or single)"))
    }
}

/// Binary task: normal versus one condition. Records of the other condition
/// are left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mi,
    Af,
}

impl Task {
    pub fn positive(self) -> Label {
        match self {
            Task::Mi => Label::Mi,
            Task::Af => Label::Af,
        }
    }

    /// `Some(true)` for the condition, `Some(false)` for normal, `None` otherwise.
    pub fn target(self, label: Label) -> Option<bool> {
        if label == self.positive() {
            Some(true)
        } else if label == Label::Normal {
            Some(false)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Mi => "mi",
            Task::Af => "af",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mi" => Ok(Task::Mi),
            "af" => Ok(Task::Af),
            _ => Err(format!("unknown task '{s}' (expected mi or af)")),
        }
    }
}

/// Channel-major windows with binary targets.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantDataset {
    pub variant: LeadVariant,
    pub channels: usize,
    pub length: usize,
    /// One `channels * length` buffer per example.
    pub inputs: Vec<Vec<f32>>,
    pub targets: Vec<bool>,
    pub record_ids: Vec<String>,
}

impl VariantDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn channel(&self, example: usize, channel: usize) -> &[f32] {
        &self.inputs[example][channel * self.length..(channel + 1) * self.length]
    }
}

/// Windows starting at `t0 = 0` of every record relevant to `task`, laid out
/// by lead index. Generated channels come from the matching synthesizer; the
/// Lead II window of T2T and TwoLeads is the delayed one.
pub fn build_variant_dataset(
    records: &[EcgRecord],
    variant: LeadVariant,
    task: Task,
    generator: Option<&NetworkBundle<f32>>,
    window_len: usize,
    delay: f64,
) -> Result<VariantDataset, ClassifierError> {
    let nets = match variant.generator_mode() {
        Some(mode) => {
            let nets = generator.ok_or(ClassifierError::MissingCheckpoint(variant))?;
            if nets.mode != mode {
                return Err(ClassifierError::ModeMismatch {
                    variant,
                    expected: mode,
                    found: nets.mode,
                });
            }
            Some(nets)
        }
        None => None,
    };
    let mut out = VariantDataset {
        variant,
        channels: variant.channels(),
        length: window_len,
        inputs: Vec::new(),
        targets: Vec::new(),
        record_ids: Vec::new(),
    };
    for rec in records {
        let Some(target) = task.target(rec.label) else {
            continue;
        };
        let leads: Vec<Vec<f32>> = match variant {
            LeadVariant::Original => LeadId::ALL
                .iter()
                .map(|&l| rec.window(l, 0, window_len).map(<[f32]>::to_vec))
                .collect::<Result<_, _>>()?,
            LeadVariant::SingleLead => vec![rec.window(LeadId::I, 0, window_len)?.to_vec()],
            LeadVariant::TwoLeads => {
                let pair = extract_async_pair(rec, 0.0, delay, window_len)?;
                vec![pair.lead_i, pair.lead_ii]
            }
            LeadVariant::T2t => {
                let pair = extract_async_pair(rec, 0.0, delay, window_len)?;
                let synth = synthesize_twelve(&pair, nets.unwrap())?;
                LeadId::ALL.iter().map(|&l| synth.lead(l).unwrap().to_vec()).collect()
            }
            LeadVariant::S2e => {
                let lead_i = rec.window(LeadId::I, 0, window_len)?;
                let synth = synthesize_from_one(lead_i, rec.sampling_rate, nets.unwrap())?;
                LeadId::ALL.iter().map(|&l| synth.lead(l).unwrap().to_vec()).collect()
            }
        };
        out.inputs.push(leads.concat());
        out.targets.push(target);
        out.record_ids.push(rec.record_id.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    pub seed: u64,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_wd")]
    pub weight_decay: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_width")]
    pub base_width: usize,
}

fn d_lr() -> f64 {
    1e-4
}
fn d_wd() -> f64 {
    1e-5
}
fn d_alpha() -> f64 {
    0.5
}
fn d_gamma() -> f64 {
    2.0
}
fn d_epochs() -> usize {
    30
}
fn d_batch() -> usize {
    16
}
fn d_width() -> usize {
    32
}

impl ClassifierConfig {
    pub fn new(seed: u64) -> Self {
        ClassifierConfig {
            seed,
            learning_rate: d_lr(),
            weight_decay: d_wd(),
            alpha: d_alpha(),
            gamma: d_gamma(),
            epochs: d_epochs(),
            batch_size: d_batch(),
            base_width: d_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub variant: LeadVariant,
    pub net: ResNet1d<f32>,
    pub history: Vec<EpochRow>,
    pub best_epoch: Option<usize>,
}

/// Remove each channel's mean; amplitudes stay in mV.
fn center(ds: &VariantDataset, idx: &[usize]) -> Result<TensorBuf<f32>, NnError> {
    let mut values = Vec::with_capacity(idx.len() * ds.channels * ds.length);
    for &k in idx {
        for c in 0..ds.channels {
            let x = ds.channel(k, c);
            let mean = x.iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
            values.extend(x.iter().map(|&v| (v as f64 - mean) as f32));
        }
    }
    TensorBuf::from_vec([idx.len(), ds.channels, ds.length], values)
}

fn labels_of(ds: &VariantDataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&k| ds.targets[k] as usize).collect()
}

fn mean_loss(net: &ResNet1d<f32>, ds: &VariantDataset, cfg: &ClassifierConfig) -> Result<f64, ClassifierError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(cfg.batch_size.max(1)) {
        let (logits, _) = net.forward(&center(ds, chunk)?)?;
        let (l, _) = focal_loss_logits(&logits, &labels_of(ds, chunk), cfg.alpha, cfg.gamma)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / ds.len().max(1) as f64)
}

/// Train with focal loss and Adam; returns the parameters of the epoch with
/// the lowest validation loss (or the last epoch without a validation set).
pub fn train_classifier(
    train: &VariantDataset,
    val: Option<&VariantDataset>,
    cfg: &ClassifierConfig,
) -> Result<TrainedClassifier, ClassifierError> {
    if cfg.batch_size == 0 || cfg.base_width == 0 || !(cfg.learning_rate > 0.0) {
        return Err(ClassifierError::InvalidConfig("batch size, width and learning rate must be positive".into()));
    }
    if !(train.targets.iter().any(|&t| t) && train.targets.iter().any(|&t| !t)) {
        return Err(ClassifierError::SingleClassDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = ResNet1d::new(train.channels, cfg.base_width, 2, &mut rng);
    let mut opt = AdamState::new(AdamConfig::new(cfg.learning_rate, cfg.weight_decay), &net.params_mut());
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ResNet1d<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = center(train, chunk)?;
            let (logits, cache) = net.forward(&x)?;
            let (loss, dlogits) = focal_loss_logits(&logits, &labels_of(train, chunk), cfg.alpha, cfg.gamma)?;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss(epoch));
            }
            net.zero_grad();
            net.backward(&cache, &dlogits);
            adam_step(&mut net.params_mut(), &mut opt)?;
            total += loss * chunk.len() as f64;
        }
        let val_loss = match val.filter(|v| !v.is_empty()) {
            Some(v) => Some(mean_loss(&net, v, cfg)?),
            None => None,
        };
        if let Some(vl) = val_loss {
            if !vl.is_finite() {
                return Err(ClassifierError::NonFiniteLoss(epoch));
            }
            if best.as_ref().is_none_or(|b| vl < b.0) {
                best = Some((vl, epoch, net.clone()));
            }
        }
        history.push(EpochRow {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss,
        });
    }
    let (net, best_epoch) = match best {
        Some((_, e, n)) => (n, Some(e)),
        None => (net, None),
    };
    Ok(TrainedClassifier {
        variant: train.variant,
        net,
        history,
        best_epoch,
    })
}

impl TrainedClassifier {
    /// Probability of the condition for every example.
    pub fn scores(&self, ds: &VariantDataset) -> Result<Vec<f64>, ClassifierError> {
        let all: Vec<usize> = (0..ds.len()).collect();
        let mut out = Vec::with_capacity(ds.len());
        for chunk in all.chunks(32) {
            let (logits, _) = self.net.forward(&center(ds, chunk)?)?;
            let p = softmax_rows(&logits);
            out.extend((0..chunk.len()).map(|b| p.sample(b)[1] as f64));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub variant: LeadVariant,
    pub task: Task,
    pub auroc: f64,
    pub auroc_ci: [f64; 2],
    pub auprc: f64,
    pub auprc_ci: [f64; 2],
    pub n_test: usize,
}

/// Test-set metrics with 95% percentile-bootstrap intervals.
pub fn evaluate_classifier(
    model: &TrainedClassifier,
    test: &VariantDataset,
    task: Task,
    n_boot: usize,
    seed: u64,
) -> Result<ClassifierReport, ClassifierError> {
    let scores = model.scores(test)?;
    let labels = &test.targets;
    let ra = bootstrap_ci(&scores, labels, auroc, n_boot, 0.95, seed)?;
    let rp = bootstrap_ci(&scores, labels, auprc, n_boot, 0.95, seed)?;
    Ok(ClassifierReport {
        variant: model.variant,
        task,
        auroc: auroc(&scores, labels)?,
        auroc_ci: [ra.0, ra.1],
        auprc: auprc(&scores, labels)?,
        auprc_ci: [rp.0, rp.1],
        n_test: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_record, BeatTemplate};

    fn records() -> Vec<EcgRecord> {
        [Label::Normal, Label::Mi, Label::Af, Label::Normal]
            .iter()
            .enumerate()
            .map(|(k, &l)| generate_record(&BeatTemplate::default(), l, 70.0, 4.0, 250, k as u64, 0).unwrap())
            .collect()
    }

    #[test]
    fn variant_channels_and_filtering() {
        let recs = records();
        let single = build_variant_dataset(&recs, LeadVariant::SingleLead, Task::Mi, None, 256, 0.5).unwrap();
        assert_eq!(single.len(), 3);
        assert_eq!(single.targets, vec![false, true, false]);
        assert_eq!(single.channel(1, 0), recs[1].window(LeadId::I, 0, 256).unwrap());
        let two = build_variant_dataset(&recs, LeadVariant::TwoLeads, Task::Af, None, 256, 0.5).unwrap();
        assert_eq!(two.channels, 2);
        assert_eq!(two.channel(0, 1), recs[0].window(LeadId::II, 125, 256).unwrap());
        let orig = build_variant_dataset(&recs, LeadVariant::Original, Task::Mi, None, 256, 0.5).unwrap();
        assert_eq!(orig.inputs[0].len(), 12 * 256);
    }

    #[test]
    fn generated_variants_need_checkpoint() {
        let recs = records();
        let r = build_variant_dataset(&recs, LeadVariant::T2t, Task::Mi, None, 256, 0.5);
        assert!(matches!(r, Err(ClassifierError::MissingCheckpoint(LeadVariant::T2t))));
    }

    #[test]
    fn zero_epochs_and_single_class() {
        let recs = records();
        let ds = build_variant_dataset(&recs, LeadVariant::SingleLead, Task::Mi, None, 256, 0.5).unwrap();
        let mut cfg = ClassifierConfig::new(1);
        cfg.epochs = 0;
        cfg.base_width = 4;
        let m = train_classifier(&ds, None, &cfg).unwrap();
        assert!(m.history.is_empty());
        let mut one = ds.clone();
        one.targets = vec![true; one.len()];
        assert!(matches!(train_classifier(&one, None, &cfg), Err(ClassifierError::SingleClassDataset)));
    }

    #[test]
    fn names_round_trip() {
        for v in LeadVariant::ALL {
            assert_eq!(v.as_str().parse::<LeadVariant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
    }
}
