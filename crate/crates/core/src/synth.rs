//! Synthetic twelve-lead ECG generator with known ground truth.
//!
//! Each beat is a sum of Gaussian bumps (P, Q, R, S, T) placed at R-peak
//! times. Leads I, II and V1..V6 are rendered independently from per-lead
//! wave gains; III, aVR, aVL and aVF are derived from I and II so the limb
//! identities hold exactly on clean records.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{derive_limb_leads, EcgRecord, Label, LeadId, SignalError};

/// Samples are quantized to this step (mV) so that the derived limb leads
/// are exactly representable in f32.
pub const ADC_STEP_MV: f64 = 1.0 / 16384.0;

/// ST elevation added to V2/V3 for MI-like records.
pub const MI_ST_OFFSET_MV: f64 = 0.15;
const MI_ST_CENTER_S: f64 = 0.14;
const MI_ST_WIDTH_S: f64 = 0.05;
const MI_Q_FACTOR: f64 = 3.0;
const AF_RR_SPREAD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("heart rate {0} bpm outside [30, 220]")]
    InvalidRate(f64),
    #[error("duration {duration} s at {fs} Hz gives fewer than {min_len} samples")]
    DurationTooShort { duration: f64, fs: u32, min_len: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wave {
    P,
    Q,
    R,
    S,
    T,
}

impl Wave {
    pub const ALL: [Wave; 5] = [Wave::P, Wave::Q, Wave::R, Wave::S, Wave::T];

    fn slot(self) -> usize {
        self as usize
    }
}

/// One Gaussian bump: amplitude (mV), offset from the R peak (s), width (s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveShape {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

/// Leads rendered directly; the remaining limb leads are derived.
pub const INDEPENDENT_LEADS: [LeadId; 8] = [
    LeadId::I,
    LeadId::II,
    LeadId::V1,
    LeadId::V2,
    LeadId::V3,
    LeadId::V4,
    LeadId::V5,
    LeadId::V6,
];

/// Beat morphology. `waves` is the Lead II morphology; `gains` scale each
/// wave per independent lead (ordered as [`INDEPENDENT_LEADS`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatTemplate {
    pub waves: [WaveShape; 5],
    pub gains: [[f64; 5]; 8],
    /// Extra ST bump amplitude per independent lead (zero for normal beats).
    pub st_offset: [f64; 8],
}

impl Default for BeatTemplate {
    fn default() -> Self {
        let w = |amplitude, center, width| WaveShape {
            amplitude,
            center,
            width,
        };
        BeatTemplate {
            waves: [
                w(0.15, -0.2, 0.03),
                w(-0.1, -0.04, 0.01),
                w(1.0, 0.0, 0.012),
                w(-0.2, 0.04, 0.012),
                w(0.3, 0.25, 0.05),
            ],
            //        P    Q    R    S    T
            gains: [
                [0.6, 0.5, 0.7, 0.5, 0.6],  // I
                [1.0, 1.0, 1.0, 1.0, 1.0],  // II
                [0.5, 0.0, 0.3, 4.0, 0.4],  // V1
                [0.6, 0.0, 0.6, 5.0, 2.0],  // V2
                [0.6, 0.3, 1.0, 3.0, 1.8],  // V3
                [0.6, 0.5, 1.5, 2.0, 1.6],  // V4
                [0.5, 0.8, 1.4, 1.0, 1.3],  // V5
                [0.5, 0.8, 1.1, 0.5, 1.0],  // V6
            ],
            st_offset: [0.0; 8],
        }
    }
}

impl BeatTemplate {
    fn slot(lead: LeadId) -> Option<usize> {
        INDEPENDENT_LEADS.iter().position(|&l| l == lead)
    }

    pub fn gain(&self, lead: LeadId, wave: Wave) -> Option<f64> {
        Self::slot(lead).map(|s| self.gains[s][wave.slot()])
    }

    pub fn validate(&self) -> bool {
        self.waves.iter().all(|w| w.width > 0.0 && w.amplitude.is_finite())
    }

    /// Apply the fixed MI / AF morphology perturbations.
    pub fn with_condition(&self, label: Label) -> BeatTemplate {
        let mut t = self.clone();
        match label {
            Label::Normal => {}
            Label::Mi => {
                t.waves[Wave::Q.slot()].amplitude *= MI_Q_FACTOR;
                // III inherits the inversion through the limb relations.
                let ii = Self::slot(LeadId::II).unwrap();
                t.gains[ii][Wave::T.slot()] = -t.gains[ii][Wave::T.slot()];
                for lead in [LeadId::V2, LeadId::V3] {
                    t.st_offset[Self::slot(lead).unwrap()] = MI_ST_OFFSET_MV;
                }
            }
            Label::Af => {
                t.waves[Wave::P.slot()].amplitude = 0.0;
            }
        }
        t
    }

    /// Randomly perturbed copy, used to give corpora some beat-shape diversity.
    pub fn jittered(&self, rng: &mut impl Rng, amount: f64) -> BeatTemplate {
        let mut t = self.clone();
        for w in &mut t.waves {
            w.amplitude *= 1.0 + amount * rng.random_range(-1.0..1.0);
            w.width *= 1.0 + 0.5 * amount * rng.random_range(-1.0..1.0);
        }
        for row in &mut t.gains {
            let lead_scale = 1.0 + amount * rng.random_range(-1.0..1.0);
            for g in row.iter_mut() {
                *g *= lead_scale;
            }
        }
        t
    }
}

/// Additive artifact model: baseline wander, mains interference, white noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactConfig {
    #[serde(default)]
    pub baseline_wander_amp: f64,
    #[serde(default = "default_wander_hz")]
    pub baseline_wander_hz: f64,
    #[serde(default)]
    pub powerline_amp: f64,
    #[serde(default = "default_powerline_hz")]
    pub powerline_hz: f64,
    #[serde(default)]
    pub white_noise_std: f64,
}

fn default_wander_hz() -> f64 {
    0.3
}

fn default_powerline_hz() -> f64 {
    50.0
}

impl ArtifactConfig {
    pub fn is_valid(&self) -> bool {
        let amp_ok = self.baseline_wander_amp >= 0.0 && self.powerline_amp >= 0.0 && self.white_noise_std >= 0.0;
        let wander_ok = self.baseline_wander_amp == 0.0 || self.baseline_wander_hz > 0.0;
        let mains_ok = self.powerline_amp == 0.0 || self.powerline_hz > 0.0;
        amp_ok && wander_ok && mains_ok
    }
}

/// R-peak times (s) of a generated record.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatAnnotations {
    pub r_times: Vec<f64>,
}

impl BeatAnnotations {
    /// R-peak sample indices that fall inside `[0, len)`.
    pub fn r_indices(&self, fs: u32, len: usize) -> Vec<usize> {
        self.r_times
            .iter()
            .map(|t| (t * fs as f64).round())
            .filter(|&i| i >= 0.0 && (i as usize) < len)
            .map(|i| i as usize)
            .collect()
    }
}

/// Beat placement: regular for normal/MI, i.i.d. uniform RR jitter for AF.
/// Beats start one interval before zero so the record edges are populated.
pub fn beat_times(label: Label, heart_rate: f64, duration: f64, rng: &mut impl Rng) -> Vec<f64> {
    let rr = 60.0 / heart_rate;
    let mut t = rng.random_range(0.0..rr) - rr;
    let mut out = Vec::new();
    while t < duration + rr {
        out.push(t);
        t += match label {
            Label::Af => rng.random_range((1.0 - AF_RR_SPREAD) * rr..(1.0 + AF_RR_SPREAD) * rr),
            _ => rr,
        };
    }
    out
}

/// Render one wave of one independent lead for the given beats.
pub fn render_component(template: &BeatTemplate, lead: LeadId, wave: Wave, beats: &[f64], fs: u32, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let Some(gain) = template.gain(lead, wave) else {
        return out;
    };
    let shape = template.waves[wave.slot()];
    add_bumps(&mut out, shape.amplitude * gain, shape.center, shape.width, beats, fs);
    out
}

fn add_bumps(out: &mut [f64], amplitude: f64, center: f64, width: f64, beats: &[f64], fs: u32) {
    if amplitude == 0.0 {
        return;
    }
    let fs = fs as f64;
    let n = out.len();
    let reach = 6.0 * width;
    for &r in beats {
        let mu = r + center;
        let lo = ((mu - reach) * fs).floor().max(0.0) as usize;
        let hi = (((mu + reach) * fs).ceil().max(0.0) as usize).min(n);
        for (k, slot) in out.iter_mut().enumerate().take(hi).skip(lo) {
            let d = (k as f64 / fs - mu) / width;
            *slot += amplitude * (-0.5 * d * d).exp();
        }
    }
}

fn quantize(v: f64) -> f32 {
    ((v / ADC_STEP_MV).round() * ADC_STEP_MV) as f32
}

fn render_lead(template: &BeatTemplate, lead: LeadId, beats: &[f64], fs: u32, n: usize) -> Vec<f32> {
    let slot = BeatTemplate::slot(lead).expect("independent lead");
    let mut acc = vec![0.0; n];
    for wave in Wave::ALL {
        let shape = template.waves[wave.slot()];
        let gain = template.gains[slot][wave.slot()];
        add_bumps(&mut acc, shape.amplitude * gain, shape.center, shape.width, beats, fs);
    }
    add_bumps(&mut acc, template.st_offset[slot], MI_ST_CENTER_S, MI_ST_WIDTH_S, beats, fs);
    acc.into_iter().map(quantize).collect()
}

/// Generate a clean twelve-lead record together with its R-peak times.
pub fn generate_annotated(
    template: &BeatTemplate,
    condition: Label,
    heart_rate: f64,
    duration: f64,
    fs: u32,
    seed: u64,
    min_len: usize,
) -> Result<(EcgRecord, BeatAnnotations), SynthError> {
    if !(30.0..=220.0).contains(&heart_rate) {
        return Err(SynthError::InvalidRate(heart_rate));
    }
    let n = (duration * fs as f64).round() as usize;
    if n < min_len.max(1) {
        return Err(SynthError::DurationTooShort { duration, fs, min_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beats = beat_times(condition, heart_rate, duration, &mut rng);
    let shaped = template.with_condition(condition);

    let mut leads = BTreeMap::new();
    for lead in INDEPENDENT_LEADS {
        leads.insert(lead, render_lead(&shaped, lead, &beats, fs, n));
    }
    let limb = derive_limb_leads(&leads[&LeadId::I], &leads[&LeadId::II])?;
    leads.insert(LeadId::III, limb.iii);
    leads.insert(LeadId::AVR, limb.avr);
    leads.insert(LeadId::AVL, limb.avl);
    leads.insert(LeadId::AVF, limb.avf);

    let record = EcgRecord::new(format!("synth-{seed}"), fs, condition, leads)?;
    Ok((record, BeatAnnotations { r_times: beats }))
}

/// Generate a clean record; the record must hold at least `min_len` samples.
pub fn generate_record(
    template: &BeatTemplate,
    condition: Label,
    heart_rate: f64,
    duration: f64,
    fs: u32,
    seed: u64,
    min_len: usize,
) -> Result<EcgRecord, SynthError> {
    generate_annotated(template, condition, heart_rate, duration, fs, seed, min_len).map(|(r, _)| r)
}

/// Add baseline wander, powerline interference and white noise to every lead.
pub fn inject_artifacts(record: &EcgRecord, cfg: &ArtifactConfig, seed: u64) -> EcgRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = record.sampling_rate as f64;
    let noise = Normal::new(0.0, cfg.white_noise_std.max(0.0)).expect("finite std");
    let mut leads = BTreeMap::new();
    for (&lead, xs) in record.leads() {
        let phase = rng.random_range(0.0..2.0 * PI);
        let out: Vec<f32> = xs
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = k as f64 / fs;
                let mut a = 0.0;
                if cfg.baseline_wander_amp > 0.0 {
                    a += cfg.baseline_wander_amp * (2.0 * PI * cfg.baseline_wander_hz * t + phase).sin();
                }
                if cfg.powerline_amp > 0.0 {
                    a += cfg.powerline_amp * (2.0 * PI * cfg.powerline_hz * t).sin();
                }
                if cfg.white_noise_std > 0.0 {
                    a += noise.sample(&mut rng);
                }
                if a == 0.0 {
                    v
                } else {
                    (v as f64 + a) as f32
                }
            })
            .collect();
        leads.insert(lead, out);
    }
    EcgRecord::new(record.record_id.clone(), record.sampling_rate, record.label, leads)
        .expect("artifacts keep the record valid")
}

/// Parameters for a labeled synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_normal: usize,
    pub n_mi: usize,
    pub n_af: usize,
    pub fs: u32,
    pub duration: f64,
    pub seed: u64,
    #[serde(default)]
    pub artifacts: Option<ArtifactConfig>,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.15
}

impl CorpusConfig {
    pub fn new(n_normal: usize, n_mi: usize, n_af: usize, fs: u32, duration: f64, seed: u64) -> Self {
        CorpusConfig {
            n_normal,
            n_mi,
            n_af,
            fs,
            duration,
            seed,
            artifacts: None,
            jitter: default_jitter(),
        }
    }
}

/// A corpus record paired with its ground-truth beat times.
#[derive(Debug, Clone)]
pub struct AnnotatedRecord {
    pub record: EcgRecord,
    pub beats: BeatAnnotations,
}

/// Generate a labeled corpus; record ids are `rec_00000`, `rec_00001`, ...
/// in label order (normal, mi, af).
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<AnnotatedRecord>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = BeatTemplate::default();
    let plan = std::iter::repeat_n(Label::Normal, cfg.n_normal)
        .chain(std::iter::repeat_n(Label::Mi, cfg.n_mi))
        .chain(std::iter::repeat_n(Label::Af, cfg.n_af));
    let mut out = Vec::new();
    for (k, label) in plan.enumerate() {
        let template = base.jittered(&mut rng, cfg.jitter);
        let hr = match label {
            Label::Af => rng.random_range(70.0..110.0),
            _ => rng.random_range(50.0..95.0),
        };
        let rec_seed: u64 = rng.random();
        let (mut record, beats) = generate_annotated(&template, label, hr, cfg.duration, cfg.fs, rec_seed, 1)?;
        if let Some(a) = &cfg.artifacts {
            record = inject_artifacts(&record, a, rng.random());
        }
        record.record_id = format!("rec_{k:05}");
        out.push(AnnotatedRecord { record, beats });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean(label: Label, hr: f64, seed: u64) -> (EcgRecord, BeatAnnotations) {
        generate_annotated(&BeatTemplate::default(), label, hr, 10.0, 500, seed, 2048).unwrap()
    }

    #[test]
    fn rejects_bad_rate_and_short_duration() {
        let t = BeatTemplate::default();
        assert!(matches!(
            generate_record(&t, Label::Normal, 20.0, 10.0, 500, 0, 2048),
            Err(SynthError::InvalidRate(_))
        ));
        assert!(matches!(
            generate_record(&t, Label::Normal, 60.0, 1.0, 500, 0, 2048),
            Err(SynthError::DurationTooShort { .. })
        ));
    }

    #[test]
    fn af_has_no_p_wave() {
        let t = BeatTemplate::default().with_condition(Label::Af);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beats = beat_times(Label::Af, 80.0, 10.0, &mut rng);
        let max_p = INDEPENDENT_LEADS
            .iter()
            .flat_map(|&l| render_component(&t, l, Wave::P, &beats, 500, 5000))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(max_p, 0.0);
    }

    #[test]
    fn af_intervals_are_irregular_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beats = beat_times(Label::Af, 60.0, 30.0, &mut rng);
        let rr: Vec<f64> = beats.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(rr.iter().all(|&d| (0.7..=1.3).contains(&d)));
        let spread = rr.iter().cloned().fold(f64::MIN, f64::max) - rr.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 0.1);
    }

    #[test]
    fn normal_sixty_bpm_has_ten_regular_beats() {
        let (rec, ann) = clean(Label::Normal, 60.0, 5);
        let idx = ann.r_indices(rec.sampling_rate, rec.len());
        assert!((9..=11).contains(&idx.len()), "{} beats", idx.len());
        let rr: Vec<i64> = idx.windows(2).map(|w| w[1] as i64 - w[0] as i64).collect();
        let (lo, hi) = (rr.iter().min().unwrap(), rr.iter().max().unwrap());
        assert!(hi - lo <= 1);

        // The constructed signal peaks at the annotated times.
        let ii = rec.lead(LeadId::II).unwrap();
        for &i in &idx {
            if i < 20 || i + 20 >= ii.len() {
                continue;
            }
            let local = (i - 20..i + 20).max_by(|&a, &b| ii[a].total_cmp(&ii[b])).unwrap();
            assert!((local as i64 - i as i64).abs() <= 1);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = clean(Label::Af, 90.0, 42).0;
        let b = clean(Label::Af, 90.0, 42).0;
        assert_eq!(a, b);
        let c = clean(Label::Af, 90.0, 43).0;
        assert_ne!(a, c);
    }

    #[test]
    fn limb_identities_are_exact() {
        for label in Label::ALL {
            let (rec, _) = clean(label, 75.0, 9);
            let i = rec.lead(LeadId::I).unwrap();
            let ii = rec.lead(LeadId::II).unwrap();
            for k in 0..rec.len() {
                let (a, b) = (i[k] as f64, ii[k] as f64);
                assert_eq!(rec.lead(LeadId::III).unwrap()[k] as f64, b - a);
                assert_eq!(rec.lead(LeadId::AVR).unwrap()[k] as f64, -(a + b) / 2.0);
                assert_eq!(rec.lead(LeadId::AVL).unwrap()[k] as f64, a - b / 2.0);
                assert_eq!(rec.lead(LeadId::AVF).unwrap()[k] as f64, b - a / 2.0);
            }
        }
    }

    #[test]
    fn mi_inverts_lead_ii_t_wave() {
        let t_integral = |label| {
            let t = BeatTemplate::default().with_condition(label);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let beats = beat_times(label, 70.0, 10.0, &mut rng);
            render_component(&t, LeadId::II, Wave::T, &beats, 500, 5000).iter().sum::<f64>()
        };
        assert!(t_integral(Label::Normal) > 0.0);
        assert!(t_integral(Label::Mi) < 0.0);
    }

    #[test]
    fn zero_artifacts_are_identity() {
        let (rec, _) = clean(Label::Normal, 70.0, 2);
        assert_eq!(inject_artifacts(&rec, &ArtifactConfig::default(), 7), rec);
    }

    #[test]
    fn powerline_on_zero_record_is_pure_sinusoid() {
        let mut leads = BTreeMap::new();
        for l in LeadId::ALL {
            leads.insert(l, vec![0.0f32; 1000]);
        }
        let zero = EcgRecord::new("z", 500, Label::Normal, leads).unwrap();
        let cfg = ArtifactConfig {
            powerline_amp: 0.05,
            powerline_hz: 50.0,
            ..ArtifactConfig::default()
        };
        let out = inject_artifacts(&zero, &cfg, 1);
        for l in LeadId::ALL {
            for (k, &v) in out.lead(l).unwrap().iter().enumerate() {
                let expect = 0.05 * (2.0 * PI * 50.0 * k as f64 / 500.0).sin();
                assert!((v as f64 - expect).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn baseline_wander_mean_abs_matches_expected() {
        let (rec, _) = clean(Label::Normal, 70.0, 2);
        let cfg = ArtifactConfig {
            baseline_wander_amp: 0.1,
            baseline_wander_hz: 0.3,
            ..ArtifactConfig::default()
        };
        let out = inject_artifacts(&rec, &cfg, 5);
        // Independent expectation: E|A sin| over whole periods = 2A/pi.
        let expected = 2.0 * 0.1 / PI;
        for l in LeadId::ALL {
            let a = rec.lead(l).unwrap();
            let b = out.lead(l).unwrap();
            let mad = a.iter().zip(b).map(|(x, y)| (*y as f64 - *x as f64).abs()).sum::<f64>() / a.len() as f64;
            assert!((mad - expected).abs() / expected < 0.05, "{l}: {mad} vs {expected}");
        }
    }

    #[test]
    fn corpus_has_requested_labels() {
        let corpus = generate_corpus(&CorpusConfig::new(3, 2, 1, 250, 6.0, 1)).unwrap();
        let labels: Vec<Label> = corpus.iter().map(|r| r.record.label).collect();
        assert_eq!(
            labels,
            vec![Label::Normal, Label::Normal, Label::Normal, Label::Mi, Label::Mi, Label::Af]
        );
        assert_eq!(corpus[4].record.record_id, "rec_00004");
        assert_eq!(corpus[0].record.len(), 1500);
    }
}
