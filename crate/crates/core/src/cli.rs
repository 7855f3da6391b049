//! Command-line pipelines: data generation, GAN training, synthesis,
//! assessment, classification and plotting.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad flags or configuration,
//! 3 I/O, 4 non-finite loss, 5 checkpoint mode mismatch, 6 missing lead,
//! 7 missing checkpoint.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::Value;
use thiserror::Error;

use crate::classifier::{
    build_variant_dataset, evaluate_classifier, train_classifier, ClassifierConfig, ClassifierError, LeadVariant, Task,
};
use crate::dataset::{load_record, save_record, stratified_split, write_corpus, DatasetError, DatasetManifest, Split};
use crate::model::{
    load_bundle, save_bundle, save_history, synthesize_from_one, synthesize_twelve, train, GanMode, ModelError,
    TrainConfig,
};
use crate::plot::{render_overlay, PlotError};
use crate::quality::{QualityAccumulator, QualityError, DEFAULT_TOLERANCE_MS};
use crate::signal::{extract_async_pair, seconds_to_samples, EcgRecord, LeadId, SignalError};
use crate::synth::{generate_corpus, ArtifactConfig, CorpusConfig, SynthError};

pub const MANIFEST_FILE: &str = "manifest.json";
/// Train / validation / test ratios used by `gen-data`.
pub const SPLIT_RATIOS: [u32; 3] = [7, 1, 2];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonFinite(String),
    #[error("{0}")]
    ModeMismatch(String),
    #[error("{0}")]
    MissingLead(String),
    #[error("{0}")]
    MissingCheckpoint(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Other(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::NonFinite(_) => 4,
            CliError::ModeMismatch(_) => 5,
            CliError::MissingLead(_) => 6,
            CliError::MissingCheckpoint(_) => 7,
        }
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        match e {
            SignalError::MissingLead(_) => CliError::MissingLead(e.to_string()),
            SignalError::OutOfBounds { .. } | SignalError::NegativeTime(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } | DatasetError::Format(_) => CliError::Io(e.to_string()),
            DatasetError::Signal(s) => s.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } => CliError::NonFinite(e.to_string()),
            ModelError::ModeMismatch { .. } => CliError::ModeMismatch(e.to_string()),
            ModelError::Io(_) | ModelError::Nn(crate::nn::NnError::Checkpoint(_)) => CliError::Io(e.to_string()),
            ModelError::InvalidConfig(_) | ModelError::InvalidTarget(_) => CliError::Usage(e.to_string()),
            ModelError::Signal(s) => s.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::MissingCheckpoint(_) => CliError::MissingCheckpoint(e.to_string()),
            ClassifierError::ModeMismatch { .. } => CliError::ModeMismatch(e.to_string()),
            ClassifierError::NonFiniteLoss(_) => CliError::NonFinite(e.to_string()),
            ClassifierError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ClassifierError::Model(m) => m.into(),
            ClassifierError::Signal(s) => s.into(),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<QualityError> for CliError {
    fn from(e: QualityError) -> Self {
        match e {
            QualityError::MissingLead(_) => CliError::MissingLead(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "leadsynth", version, about = "Synthesize twelve-lead ECGs from one or two asynchronous leads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic corpus with a 7:1:2 stratified split.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_normal: usize,
        #[arg(long)]
        n_mi: usize,
        #[arg(long)]
        n_af: usize,
        #[arg(long, default_value_t = 500)]
        fs: u32,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long)]
        seed: u64,
        /// JSON file with baseline wander, powerline and noise settings.
        #[arg(long)]
        artifacts: Option<PathBuf>,
    },
    /// Train the lead-synthesis GAN on the train split, selecting on the val split.
    TrainGan {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mode: GanMode,
        /// Training configuration JSON; must hold `seed` unless `--seed` is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `steps` from the configuration.
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Best checkpoint; the last one goes to `<out>.last` and the loss
        /// history to `<out>.history.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a twelve-lead record from one record's Lead I (and Lead II).
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        record: PathBuf,
        /// Lead I window start in seconds.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Lead II lag behind Lead I in seconds.
        #[arg(long, default_value_t = 0.5)]
        delay: f64,
        /// Expected checkpoint mode.
        #[arg(long)]
        mode: Option<GanMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// R-peak amplitude and position errors of a generated record.
    Assess {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "V1,V5")]
        leads: Vec<LeadId>,
        /// Start (s) of the reference window that the generated record covers.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_MS)]
        tolerance_ms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and test a classifier on one lead variant.
    Classify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: LeadVariant,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        task: Task,
        /// Classifier configuration JSON; must hold `seed` unless `--seed` is given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Window length in samples; taken from the checkpoint when one is given.
        #[arg(long, default_value_t = 512)]
        window: usize,
        #[arg(long, default_value_t = 0.5)]
        delay: f64,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Twelve-panel SVG overlay of a reference and generated records.
    Plot {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        t2t: Option<PathBuf>,
        #[arg(long)]
        s2e: Option<PathBuf>,
        /// Window length, e.g. `2s` or `2`.
        #[arg(long, default_value = "2s", value_parser = parse_seconds)]
        window: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_seconds(s: &str) -> Result<f64, String> {
    let t = s.trim().trim_end_matches('s');
    match t.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a positive duration in seconds")),
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io(path, e))
}

/// Read a JSON object, fill `seed` from the flag if given, and deserialize.
/// Extra keys in `fill` are inserted only when absent.
fn read_config<T: serde::de::DeserializeOwned>(
    path: Option<&Path>,
    seed: Option<u64>,
    fill: &[(&str, Value)],
) -> Result<T, CliError> {
    let mut value = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Usage("configuration must be a JSON object".into()))?;
    if let Some(s) = seed {
        obj.insert("seed".into(), s.into());
    }
    if !obj.contains_key("seed") {
        return Err(CliError::Usage("a seed is required (--seed or \"seed\" in the configuration)".into()));
    }
    for (k, v) in fill {
        match obj.get(*k) {
            Some(existing) if existing != v => {
                return Err(CliError::Usage(format!("configuration {k} = {existing} conflicts with flag value {v}")))
            }
            _ => {
                obj.insert((*k).into(), v.clone());
            }
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_manifest(dir: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(&dir.join(MANIFEST_FILE))?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData {
            out,
            n_normal,
            n_mi,
            n_af,
            fs,
            duration,
            seed,
            artifacts,
        } => {
            let mut cfg = CorpusConfig::new(n_normal, n_mi, n_af, fs, duration, seed);
            if let Some(p) = artifacts {
                let text = fs::read_to_string(&p).map_err(|e| io(&p, e))?;
                let a: ArtifactConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                if !a.is_valid() {
                    return Err(CliError::Usage(format!("{}: invalid artifact settings", p.display())));
                }
                cfg.artifacts = Some(a);
            }
            let records: Vec<EcgRecord> = generate_corpus(&cfg)?.into_iter().map(|a| a.record).collect();
            let manifest = write_corpus(&out, &records)?;
            let split = stratified_split(&manifest, SPLIT_RATIOS, seed)?;
            split.save(&out.join(MANIFEST_FILE))?;
            Ok(())
        }
        Command::TrainGan {
            data,
            mode,
            config,
            seed,
            steps,
            resume,
            out,
        } => {
            let fill = [("mode", Value::String(mode.to_string()))];
            let mut cfg: TrainConfig = read_config(config.as_deref(), seed, &fill)?;
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let manifest = load_manifest(&data)?;
            let train_set = manifest.load_split(Split::Train)?;
            let val_set = manifest.load_split(Split::Val)?;
            let start = match resume {
                Some(p) => Some(load_bundle::<f32>(&p)?),
                None => None,
            };
            let outcome = train(&train_set, &val_set, &cfg, start)?;
            let best_step = outcome.history.best_step;
            save_bundle(&out, &outcome.best, best_step)?;
            save_bundle(&sibling(&out, ".last"), &outcome.last, best_step)?;
            save_history(&sibling(&out, ".history.json"), &outcome.history)?;
            Ok(())
        }
        Command::Synth {
            ckpt,
            record,
            t0,
            delay,
            mode,
            out,
        } => {
            let nets = load_bundle::<f32>(&ckpt)?;
            if let Some(m) = mode {
                nets.require_mode(m)?;
            }
            let rec = load_record(&record)?;
            let window = nets.arch.window_len;
            let mut gen = match nets.mode {
                GanMode::T2t => synthesize_twelve(&extract_async_pair(&rec, t0, delay, window)?, &nets)?,
                GanMode::S2e => {
                    if t0 < 0.0 {
                        return Err(SignalError::NegativeTime(t0).into());
                    }
                    let lead_i = rec.window(LeadId::I, seconds_to_samples(t0, rec.sampling_rate), window)?;
                    synthesize_from_one(lead_i, rec.sampling_rate, &nets)?
                }
            };
            gen.label = rec.label;
            gen.record_id = format!("{}_{}", rec.record_id, nets.mode);
            save_record(&gen, &out)?;
            Ok(())
        }
        Command::Assess {
            reference,
            gen,
            leads,
            t0,
            tolerance_ms,
            out,
        } => {
            let full = load_record(&reference)?;
            let gen = load_record(&gen)?;
            let reference = crop(&full, t0, gen.len())?;
            let mut acc = QualityAccumulator::new(tolerance_ms);
            acc.add(&reference, &gen, &leads)?;
            write_json(&out, &acc.report())
        }
        Command::Classify {
            data,
            variant,
            ckpt,
            task,
            config,
            seed,
            window,
            delay,
            n_boot,
            out,
        } => {
            let cfg: ClassifierConfig = read_config(config.as_deref(), seed, &[])?;
            let nets = match (&ckpt, variant.generator_mode()) {
                (Some(p), Some(_)) => Some(load_bundle::<f32>(p)?),
                (None, Some(_)) => return Err(ClassifierError::MissingCheckpoint(variant).into()),
                _ => None,
            };
            let window = nets.as_ref().map_or(window, |n| n.arch.window_len);
            let manifest = load_manifest(&data)?;
            let build = |split| -> Result<_, CliError> {
                let recs = manifest.load_split(split)?;
                Ok(build_variant_dataset(&recs, variant, task, nets.as_ref(), window, delay)?)
            };
            let (tr, va, te) = (build(Split::Train)?, build(Split::Val)?, build(Split::Test)?);
            let model = train_classifier(&tr, Some(&va), &cfg)?;
            let report = evaluate_classifier(&model, &te, task, n_boot, cfg.seed)?;
            write_json(&out, &report)
        }
        Command::Plot {
            reference,
            t2t,
            s2e,
            window,
            t0,
            out,
        } => {
            let full = load_record(&reference)?;
            let t2t = t2t.map(|p| load_record(&p)).transpose()?;
            let s2e = s2e.map(|p| load_record(&p)).transpose()?;
            let span = seconds_to_samples(window, full.sampling_rate);
            let reference = crop(&full, t0, span)?;
            let svg = render_overlay(&reference, t2t.as_ref(), s2e.as_ref(), window)?;
            fs::write(&out, svg).map_err(|e| io(&out, e))
        }
    }
}

/// `len` samples of every lead starting at `t0` seconds.
fn crop(record: &EcgRecord, t0: f64, len: usize) -> Result<EcgRecord, CliError> {
    if t0 < 0.0 {
        return Err(SignalError::NegativeTime(t0).into());
    }
    let start = seconds_to_samples(t0, record.sampling_rate);
    let mut err = None;
    let out = record.map_leads(|id, _| match record.window(id, start, len) {
        Ok(w) => w.to_vec(),
        Err(e) => {
            err.get_or_insert(e);
            Vec::new()
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(out?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(args: &[&str]) -> i32 {
        main_with_args(std::iter::once("leadsynth").chain(args.iter().copied()))
    }

    #[test]
    fn bad_flags_exit_two() {
        assert_eq!(code(&["gen-data", "--out", "x"]), 2);
        assert_eq!(code(&["frobnicate"]), 2);
        assert_eq!(code(&["plot", "--ref", "a", "--out", "b", "--window", "-1s"]), 2);
    }

    #[test]
    fn durations() {
        assert_eq!(parse_seconds("2s"), Ok(2.0));
        assert_eq!(parse_seconds("1.5"), Ok(1.5));
        assert!(parse_seconds("0").is_err());
    }

    #[test]
    fn seeds_are_required_and_unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"steps": 3}"#).unwrap();
        let fill = [("mode", Value::String("t2t".into()))];
        let r: Result<TrainConfig, _> = read_config(Some(&p), None, &fill);
        assert!(matches!(r, Err(CliError::Usage(_))));
        let cfg: TrainConfig = read_config(Some(&p), Some(9), &fill).unwrap();
        assert_eq!((cfg.seed, cfg.steps, cfg.mode), (9, 3, GanMode::T2t));
        fs::write(&p, r#"{"seed": 1, "stepz": 3}"#).unwrap();
        assert!(matches!(read_config::<TrainConfig>(Some(&p), None, &fill), Err(CliError::Usage(_))));
        fs::write(&p, r#"{"seed": 1, "mode": "s2e"}"#).unwrap();
        assert!(matches!(read_config::<TrainConfig>(Some(&p), None, &fill), Err(CliError::Usage(_))));
        assert!(matches!(read_config::<ClassifierConfig>(None, None, &[]), Err(CliError::Usage(_))));
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(ClassifierError::MissingCheckpoint(LeadVariant::T2t)).exit_code(), 7);
        assert_eq!(CliError::from(QualityError::MissingLead(LeadId::V1)).exit_code(), 6);
        let mm = ModelError::ModeMismatch {
            expected: GanMode::T2t,
            found: GanMode::S2e,
        };
        assert_eq!(CliError::from(mm).exit_code(), 5);
        let nf = ModelError::NonFiniteLoss {
            step: 1,
            terms: String::new(),
        };
        assert_eq!(CliError::from(nf).exit_code(), 4);
        assert_eq!(CliError::from(ModelError::Io("x".into())).exit_code(), 3);
    }
}
