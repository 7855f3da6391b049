//! Twelve-lead signal model: lead identities, records, windowing and the
//! asynchronous two-lead extraction used as model input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Flat windows below this standard deviation normalize to zeros.
pub const DEGENERATE_STD: f64 = 1e-8;

/// Default model window: 2048 samples (about 4.1 s at 500 Hz).
pub const DEFAULT_WINDOW_LEN: usize = 2048;

/// Default delay of the Lead II window relative to Lead I.
pub const DEFAULT_DELAY_S: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("lead {0} is not present in the record")]
    MissingLead(LeadId),
    #[error("window [{start}, {end}) exceeds record length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("negative time offset {0}")]
    NegativeTime(f64),
}

/// The twelve standard leads in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LeadId {
    I,
    II,
    III,
    #[serde(rename = "aVR")]
    AVR,
    #[serde(rename = "aVL")]
    AVL,
    #[serde(rename = "aVF")]
    AVF,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

impl LeadId {
    pub const ALL: [LeadId; 12] = [
        LeadId::I,
        LeadId::II,
        LeadId::III,
        LeadId::AVR,
        LeadId::AVL,
        LeadId::AVF,
        LeadId::V1,
        LeadId::V2,
        LeadId::V3,
        LeadId::V4,
        LeadId::V5,
        LeadId::V6,
    ];

    /// Leads produced from Lead I and Lead II (III..V6).
    pub const FROM_TWO: [LeadId; 10] = [
        LeadId::III,
        LeadId::AVR,
        LeadId::AVL,
        LeadId::AVF,
        LeadId::V1,
        LeadId::V2,
        LeadId::V3,
        LeadId::V4,
        LeadId::V5,
        LeadId::V6,
    ];

    /// Leads produced from Lead I alone (II..V6).
    pub const FROM_ONE: [LeadId; 11] = [
        LeadId::II,
        LeadId::III,
        LeadId::AVR,
        LeadId::AVL,
        LeadId::AVF,
        LeadId::V1,
        LeadId::V2,
        LeadId::V3,
        LeadId::V4,
        LeadId::V5,
        LeadId::V6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<LeadId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LeadId::I => "I",
            LeadId::II => "II",
            LeadId::III => "III",
            LeadId::AVR => "aVR",
            LeadId::AVL => "aVL",
            LeadId::AVF => "aVF",
            LeadId::V1 => "V1",
            LeadId::V2 => "V2",
            LeadId::V3 => "V3",
            LeadId::V4 => "V4",
            LeadId::V5 => "V5",
            LeadId::V6 => "V6",
        }
    }
}

impl fmt::Display for LeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LeadId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        LeadId::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown lead name '{s}'"))
    }
}

/// Condition tag attached to a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Mi,
    Af,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Normal, Label::Mi, Label::Af];

    pub fn code(self) -> u8 {
        match self {
            Label::Normal => 0,
            Label::Mi => 1,
            Label::Af => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            0 => Some(Label::Normal),
            1 => Some(Label::Mi),
            2 => Some(Label::Af),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Mi => "mi",
            Label::Af => "af",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "mi" => Ok(Label::Mi),
            "af" => Ok(Label::Af),
            other => Err(format!("unknown label '{other}'")),
        }
    }
}

/// A multi-lead recording. Samples are millivolts, all leads share one length.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub record_id: String,
    pub sampling_rate: u32,
    pub label: Label,
    leads: BTreeMap<LeadId, Vec<f32>>,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        sampling_rate: u32,
        label: Label,
        leads: BTreeMap<LeadId, Vec<f32>>,
    ) -> Result<Self, SignalError> {
        if sampling_rate == 0 {
            return Err(SignalError::InvalidRecord("sampling rate must be positive".into()));
        }
        let mut len = None;
        for (lead, xs) in &leads {
            if xs.is_empty() {
                return Err(SignalError::InvalidRecord(format!("lead {lead} is empty")));
            }
            if let Some(n) = len {
                if n != xs.len() {
                    return Err(SignalError::LengthMismatch(n, xs.len()));
                }
            }
            len = Some(xs.len());
            if xs.iter().any(|v| !v.is_finite()) {
                return Err(SignalError::InvalidRecord(format!("lead {lead} has non-finite samples")));
            }
        }
        if len.is_none() {
            return Err(SignalError::InvalidRecord("record has no leads".into()));
        }
        Ok(EcgRecord {
            record_id: record_id.into(),
            sampling_rate,
            label,
            leads,
        })
    }

    pub fn len(&self) -> usize {
        self.leads.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sampling_rate as f64
    }

    pub fn lead(&self, id: LeadId) -> Option<&[f32]> {
        self.leads.get(&id).map(Vec::as_slice)
    }

    pub fn require(&self, id: LeadId) -> Result<&[f32], SignalError> {
        self.lead(id).ok_or(SignalError::MissingLead(id))
    }

    pub fn has_lead(&self, id: LeadId) -> bool {
        self.leads.contains_key(&id)
    }

    /// Present leads in canonical order.
    pub fn lead_ids(&self) -> impl Iterator<Item = LeadId> + '_ {
        self.leads.keys().copied()
    }

    pub fn leads(&self) -> &BTreeMap<LeadId, Vec<f32>> {
        &self.leads
    }

    /// Replaces or inserts a lead; the length must match the existing leads.
    pub fn set_lead(&mut self, id: LeadId, samples: Vec<f32>) -> Result<(), SignalError> {
        if samples.len() != self.len() {
            return Err(SignalError::LengthMismatch(self.len(), samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidRecord(format!("lead {id} has non-finite samples")));
        }
        self.leads.insert(id, samples);
        Ok(())
    }

    /// Map every lead through `f`, keeping metadata.
    pub fn map_leads(&self, mut f: impl FnMut(LeadId, &[f32]) -> Vec<f32>) -> Result<Self, SignalError> {
        let leads = self.leads.iter().map(|(&id, xs)| (id, f(id, xs))).collect();
        EcgRecord::new(self.record_id.clone(), self.sampling_rate, self.label, leads)
    }

    /// Synchronous window `[start, start + len)` of one lead.
    pub fn window(&self, id: LeadId, start: usize, len: usize) -> Result<&[f32], SignalError> {
        let xs = self.require(id)?;
        let end = start + len;
        if end > xs.len() {
            return Err(SignalError::OutOfBounds {
                start,
                end,
                len: xs.len(),
            });
        }
        Ok(&xs[start..end])
    }
}

/// Lead I window plus a Lead II window taken `delay` seconds later.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncLeadPair {
    pub lead_i: Vec<f32>,
    pub lead_ii: Vec<f32>,
    pub window_len: usize,
    pub delay: f64,
    pub t0: f64,
    pub sampling_rate: u32,
}

impl AsyncLeadPair {
    /// Sample index of the Lead I window start.
    pub fn start_i(&self) -> usize {
        seconds_to_samples(self.t0, self.sampling_rate)
    }

    /// Sample index of the Lead II window start.
    pub fn start_ii(&self) -> usize {
        seconds_to_samples(self.t0 + self.delay, self.sampling_rate)
    }
}

pub fn seconds_to_samples(t: f64, fs: u32) -> usize {
    (t * fs as f64).round().max(0.0) as usize
}

pub fn extract_async_pair(
    record: &EcgRecord,
    t0: f64,
    delay: f64,
    window_len: usize,
) -> Result<AsyncLeadPair, SignalError> {
    if t0 < 0.0 {
        return Err(SignalError::NegativeTime(t0));
    }
    if delay < 0.0 {
        return Err(SignalError::NegativeTime(delay));
    }
    let fs = record.sampling_rate;
    let start_i = seconds_to_samples(t0, fs);
    let start_ii = seconds_to_samples(t0 + delay, fs);
    let lead_i = record.window(LeadId::I, start_i, window_len)?.to_vec();
    let lead_ii = record.window(LeadId::II, start_ii, window_len)?.to_vec();
    Ok(AsyncLeadPair {
        lead_i,
        lead_ii,
        window_len,
        delay,
        t0,
        sampling_rate: fs,
    })
}

/// Limb leads implied by Lead I and Lead II of a synchronous recording.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbLeads {
    pub iii: Vec<f32>,
    pub avr: Vec<f32>,
    pub avl: Vec<f32>,
    pub avf: Vec<f32>,
}

/// Einthoven and Goldberger relations, evaluated in f64 and rounded once.
pub fn derive_limb_leads(lead_i: &[f32], lead_ii: &[f32]) -> Result<LimbLeads, SignalError> {
    if lead_i.len() != lead_ii.len() {
        return Err(SignalError::LengthMismatch(lead_i.len(), lead_ii.len()));
    }
    let n = lead_i.len();
    let mut out = LimbLeads {
        iii: Vec::with_capacity(n),
        avr: Vec::with_capacity(n),
        avl: Vec::with_capacity(n),
        avf: Vec::with_capacity(n),
    };
    for (&a, &b) in lead_i.iter().zip(lead_ii) {
        let (i, ii) = (a as f64, b as f64);
        out.iii.push((ii - i) as f32);
        out.avr.push((-(i + ii) / 2.0) as f32);
        out.avl.push((i - ii / 2.0) as f32);
        out.avf.push((ii - i / 2.0) as f32);
    }
    Ok(out)
}

/// Mean and population standard deviation of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
}

impl WindowStats {
    pub fn of(x: &[f32]) -> Self {
        let n = x.len().max(1) as f64;
        let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = x.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        WindowStats {
            mean,
            std: var.sqrt(),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.std < DEGENERATE_STD
    }

    /// Map mV samples into this window's z-score frame.
    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        if self.is_degenerate() {
            return vec![0.0; x.len()];
        }
        x.iter()
            .map(|&v| ((v as f64 - self.mean) / self.std) as f32)
            .collect()
    }

    /// Map z-score samples back to mV.
    pub fn invert(&self, z: &[f32]) -> Vec<f32> {
        let scale = if self.is_degenerate() { 0.0 } else { self.std };
        z.iter()
            .map(|&v| (v as f64 * scale + self.mean) as f32)
            .collect()
    }
}

/// Z-score normalization; flat windows map to zeros.
pub fn normalize_window(x: &[f32]) -> Vec<f32> {
    normalize_with_stats(x).0
}

pub fn normalize_with_stats(x: &[f32]) -> (Vec<f32>, WindowStats) {
    let stats = WindowStats::of(x);
    (stats.apply(x), stats)
}
