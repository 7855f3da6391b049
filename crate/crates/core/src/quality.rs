//! R-peak detection and amplitude / position errors between a reference and
//! a generated lead.
//!
//! The detector is a derivative-energy (Pan-Tompkins style) pipeline with all
//! parameters fixed, so reported numbers are reproducible:
//!
//! 1. band-pass: centered 25 ms moving average, minus its own centered
//!    200 ms moving average;
//! 2. central first difference, squared;
//! 3. centered 150 ms moving-window integration;
//! 4. local maxima of the integrated energy above half of a running mean of
//!    accepted peak energies, with a 200 ms refractory period;
//! 5. each detection moved to the largest |x| within 50 ms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{EcgRecord, LeadId};

pub const MIN_RATE: u32 = 100;
pub const DEFAULT_TOLERANCE_MS: f64 = 100.0;
const LOWPASS_S: f64 = 0.025;
const BASELINE_S: f64 = 0.2;
const INTEGRATION_S: f64 = 0.15;
const REFRACTORY_S: f64 = 0.2;
const REFINE_S: f64 = 0.05;
const INIT_S: f64 = 2.0;
const THRESHOLD_FRACTION: f64 = 0.5;
const RUNNING_KEEP: f64 = 0.875;
/// Shortest signal accepted by the detector.
pub const MIN_DURATION_S: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("signal of {len} samples is shorter than {min} samples")]
    SignalTooShort { len: usize, min: usize },
    #[error("sampling rate {0} Hz is below {MIN_RATE} Hz")]
    RateTooLow(u32),
    #[error("sampling rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("no matched peaks")]
    NoMatches,
    #[error("lead {0} missing")]
    MissingLead(LeadId),
}

/// Detected R-peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    pub amplitudes: Vec<f64>,
    pub fs: u32,
}

impl PeakSet {
    pub fn new(indices: Vec<usize>, amplitudes: Vec<f64>, fs: u32) -> Self {
        PeakSet { indices, amplitudes, fs }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn samples(seconds: f64, fs: u32) -> usize {
    (seconds * fs as f64).round() as usize
}

/// Centered moving average with the window truncated at the edges.
fn centered_mean(x: &[f64], width: usize) -> Vec<f64> {
    let n = x.len();
    let half = width / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Integrated squared-slope energy that the detector thresholds.
pub fn detection_energy(x: &[f32], fs: u32) -> Vec<f64> {
    let raw: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let low = centered_mean(&raw, samples(LOWPASS_S, fs).max(1));
    let base = centered_mean(&low, samples(BASELINE_S, fs).max(1));
    let band: Vec<f64> = low.iter().zip(&base).map(|(a, b)| a - b).collect();
    let n = band.len();
    let slope: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                0.0
            } else {
                let d = (band[i + 1] - band[i - 1]) / 2.0;
                d * d
            }
        })
        .collect();
    centered_mean(&slope, samples(INTEGRATION_S, fs).max(1))
}

pub fn detect_rpeaks(x: &[f32], fs: u32) -> Result<PeakSet, QualityError> {
    if fs < MIN_RATE {
        return Err(QualityError::RateTooLow(fs));
    }
    let min = samples(MIN_DURATION_S, fs);
    if x.len() < min {
        return Err(QualityError::SignalTooShort { len: x.len(), min });
    }
    let e = detection_energy(x, fs);
    let n = e.len();
    let init_end = samples(INIT_S, fs).min(n);
    let mut running = e[..init_end].iter().copied().fold(0.0, f64::max);
    let refractory = samples(REFRACTORY_S, fs);

    let mut accepted: Vec<(usize, f64)> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let v = e[i];
        if !(v > e[i - 1] && v >= e[i + 1]) || v <= 0.0 || v < THRESHOLD_FRACTION * running {
            continue;
        }
        match accepted.last_mut() {
            Some(last) if i - last.0 < refractory => {
                if v > last.1 {
                    *last = (i, v);
                }
            }
            _ => accepted.push((i, v)),
        }
        running = RUNNING_KEEP * running + (1.0 - RUNNING_KEEP) * v;
    }

    let reach = samples(REFINE_S, fs);
    let mut indices: Vec<usize> = Vec::with_capacity(accepted.len());
    for (i, _) in accepted {
        let lo = i.saturating_sub(reach);
        let hi = (i + reach + 1).min(n);
        let mut best = lo;
        for k in lo..hi {
            if x[k].abs() > x[best].abs() {
                best = k;
            }
        }
        // Refinement can pull two detections onto the same sample.
        if indices.last().is_none_or(|&p| best > p) {
            indices.push(best);
        }
    }
    let amplitudes = indices.iter().map(|&k| x[k] as f64).collect();
    Ok(PeakSet { indices, amplitudes, fs })
}

/// A reference peak paired with a generated peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPair {
    pub ref_index: usize,
    pub gen_index: usize,
    pub ref_amp: f64,
    pub gen_amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakMatch {
    pub pairs: Vec<PeakPair>,
    pub missed_ref: usize,
    pub spurious_gen: usize,
}

/// Greedy pairing: reference peaks in ascending time order each take the
/// nearest unused generated peak within `tolerance_ms` (earlier one on ties).
pub fn match_peaks(reference: &PeakSet, generated: &PeakSet, tolerance_ms: f64) -> Result<PeakMatch, QualityError> {
    if reference.fs != generated.fs {
        return Err(QualityError::RateMismatch(reference.fs, generated.fs));
    }
    let tol = tolerance_ms / 1000.0 * reference.fs as f64;
    let mut used = vec![false; generated.len()];
    let mut pairs = Vec::new();
    for (r, &ri) in reference.indices.iter().enumerate() {
        let mut best: Option<(usize, usize)> = None;
        for (g, &gi) in generated.indices.iter().enumerate() {
            let d = ri.abs_diff(gi);
            if used[g] || d as f64 > tol {
                continue;
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((g, d));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
            pairs.push(PeakPair {
                ref_index: ri,
                gen_index: generated.indices[g],
                ref_amp: reference.amplitudes[r],
                gen_amp: generated.amplitudes[g],
            });
        }
    }
    Ok(PeakMatch {
        missed_ref: reference.len() - pairs.len(),
        spurious_gen: generated.len() - pairs.len(),
        pairs,
    })
}

/// Mean relative amplitude error in percent, and how many pairs were skipped
/// because the reference amplitude is exactly zero.
pub fn amplitude_gap_pct(pairs: &[PeakPair]) -> Result<(f64, usize), QualityError> {
    let usable: Vec<&PeakPair> = pairs.iter().filter(|p| p.ref_amp != 0.0).collect();
    let skipped = pairs.len() - usable.len();
    if usable.is_empty() {
        return Err(QualityError::NoMatches);
    }
    let sum: f64 = usable
        .iter()
        .map(|p| (p.gen_amp - p.ref_amp).abs() / p.ref_amp.abs())
        .sum();
    Ok((sum / usable.len() as f64 * 100.0, skipped))
}

pub fn position_error_ms(pairs: &[PeakPair], fs: u32) -> Result<f64, QualityError> {
    if pairs.is_empty() {
        return Err(QualityError::NoMatches);
    }
    let sum: f64 = pairs.iter().map(|p| p.ref_index.abs_diff(p.gen_index) as f64).sum();
    Ok(sum / pairs.len() as f64 / fs as f64 * 1000.0)
}

/// Errors for one lead. Means are `None` when nothing matched.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LeadQuality {
    pub amp_pct: Option<f64>,
    pub pos_ms: Option<f64>,
    pub matched: usize,
    pub missed_ref: usize,
    pub spurious_gen: usize,
    pub zero_ref_skipped: usize,
}

/// Errors pooled over every matched peak of every assessed lead.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityReport {
    pub amp_pct: Option<f64>,
    pub pos_ms: Option<f64>,
    pub matched: usize,
    pub missed_ref: usize,
    pub spurious_gen: usize,
    pub per_lead: BTreeMap<String, LeadQuality>,
}

impl QualityReport {
    /// Share of reference peaks that found a partner.
    pub fn matched_fraction(&self) -> f64 {
        let total = self.matched + self.missed_ref;
        if total == 0 {
            0.0
        } else {
            self.matched as f64 / total as f64
        }
    }
}

/// Collects matched peaks across records, then pools them per lead and overall.
#[derive(Debug, Clone, Default)]
pub struct QualityAccumulator {
    fs: Option<u32>,
    leads: BTreeMap<LeadId, (Vec<PeakPair>, usize, usize)>,
    tolerance_ms: f64,
}

impl QualityAccumulator {
    pub fn new(tolerance_ms: f64) -> Self {
        QualityAccumulator {
            fs: None,
            leads: BTreeMap::new(),
            tolerance_ms,
        }
    }

    /// Detect and match peaks of `leads` in one record pair.
    pub fn add(&mut self, reference: &EcgRecord, generated: &EcgRecord, leads: &[LeadId]) -> Result<(), QualityError> {
        let fs = reference.sampling_rate;
        if generated.sampling_rate != fs {
            return Err(QualityError::RateMismatch(fs, generated.sampling_rate));
        }
        if let Some(prev) = self.fs {
            if prev != fs {
                return Err(QualityError::RateMismatch(prev, fs));
            }
        }
        self.fs = Some(fs);
        for &lead in leads {
            let r = reference.lead(lead).ok_or(QualityError::MissingLead(lead))?;
            let g = generated.lead(lead).ok_or(QualityError::MissingLead(lead))?;
            let m = match_peaks(&detect_rpeaks(r, fs)?, &detect_rpeaks(g, fs)?, self.tolerance_ms)?;
            let slot = self.leads.entry(lead).or_default();
            slot.0.extend(m.pairs);
            slot.1 += m.missed_ref;
            slot.2 += m.spurious_gen;
        }
        Ok(())
    }

    pub fn report(&self) -> QualityReport {
        let fs = self.fs.unwrap_or(MIN_RATE);
        let mut out = QualityReport::default();
        let mut all = Vec::new();
        for (lead, (pairs, missed, spurious)) in &self.leads {
            let amp = amplitude_gap_pct(pairs).ok();
            out.per_lead.insert(
                lead.name().to_string(),
                LeadQuality {
                    amp_pct: amp.map(|a| a.0),
                    pos_ms: position_error_ms(pairs, fs).ok(),
                    matched: pairs.len(),
                    missed_ref: *missed,
                    spurious_gen: *spurious,
                    zero_ref_skipped: amp.map_or(0, |a| a.1),
                },
            );
            out.matched += pairs.len();
            out.missed_ref += missed;
            out.spurious_gen += spurious;
            all.extend_from_slice(pairs);
        }
        out.amp_pct = amplitude_gap_pct(&all).ok().map(|a| a.0);
        out.pos_ms = position_error_ms(&all, fs).ok();
        out
    }
}

/// Quality of `generated` against `reference` on the given leads.
pub fn assess(reference: &EcgRecord, generated: &EcgRecord, leads: &[LeadId]) -> Result<QualityReport, QualityError> {
    let mut acc = QualityAccumulator::new(DEFAULT_TOLERANCE_MS);
    acc.add(reference, generated, leads)?;
    Ok(acc.report())
}
