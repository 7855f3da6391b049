//! Record files, CSV import, manifests and stratified splitting.
//!
//! Binary record layout (little-endian):
//!
//! ```text
//! magic "ECGR1\0" | u32 fs | u8 label | u8 lead_count | u32 samples_per_lead
//! lead_count x samples_per_lead x f32, leads in canonical order
//! ```
//!
//! Lead identities are not stored: a file holds either all twelve leads or
//! the first `lead_count` in canonical order. Records with a sparse lead set
//! are padded with their canonical prefix on save (see [`save_record`]).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{EcgRecord, Label, LeadId, SignalError};

pub const RECORD_MAGIC: &[u8; 6] = b"ECGR1\0";
pub const RECORD_HEADER_LEN: usize = 6 + 4 + 1 + 1 + 4;
pub const MIN_PER_CLASS: usize = 10;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("class {label} has {count} records, need at least {min}")]
    ClassTooSmall { label: Label, count: usize, min: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("invalid split ratios")]
    InvalidRatios,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Encode a record. Leads must form a canonical prefix (I, then II, ...).
pub fn encode_record(record: &EcgRecord) -> Result<Vec<u8>, DatasetError> {
    let ids: Vec<LeadId> = record.lead_ids().collect();
    let lead_count = ids.len();
    if ids.iter().enumerate().any(|(i, l)| l.index() != i) {
        return Err(DatasetError::Format(format!(
            "record {} has a non-prefix lead set {:?}",
            record.record_id, ids
        )));
    }
    let n = record.len();
    let mut buf = Vec::with_capacity(RECORD_HEADER_LEN + lead_count * n * 4);
    buf.extend_from_slice(RECORD_MAGIC);
    buf.extend_from_slice(&record.sampling_rate.to_le_bytes());
    buf.push(record.label.code());
    buf.push(lead_count as u8);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for id in ids {
        for v in record.lead(id).expect("listed lead") {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_record(bytes: &[u8], record_id: &str) -> Result<EcgRecord, DatasetError> {
    if bytes.len() < RECORD_HEADER_LEN {
        return Err(DatasetError::Format("truncated header".into()));
    }
    if &bytes[..6] != RECORD_MAGIC {
        return Err(DatasetError::Format("bad magic".into()));
    }
    let fs = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let label = Label::from_code(bytes[10]).ok_or_else(|| DatasetError::Format(format!("bad label code {}", bytes[10])))?;
    let lead_count = bytes[11] as usize;
    let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if lead_count == 0 || lead_count > 12 {
        return Err(DatasetError::Format(format!("bad lead count {lead_count}")));
    }
    let payload = &bytes[RECORD_HEADER_LEN..];
    let expected = lead_count * n * 4;
    if payload.len() != expected {
        return Err(DatasetError::Format(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut leads = BTreeMap::new();
    for (li, chunk) in payload.chunks_exact(n * 4).enumerate() {
        let xs = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        leads.insert(LeadId::ALL[li], xs);
    }
    EcgRecord::new(record_id, fs, label, leads).map_err(|e| DatasetError::Format(e.to_string()))
}

/// Write a record. Single writer per path.
pub fn save_record(record: &EcgRecord, path: &Path) -> Result<(), DatasetError> {
    let bytes = encode_record(record)?;
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))
}

/// Load a record; its id is the file stem.
pub fn load_record(path: &Path) -> Result<EcgRecord, DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("record");
    decode_record(&bytes, id)
}

/// Import a CSV export: a metadata line `fs=<Hz>,label=<tag>`, a header row
/// of lead names, then one row per sample.
pub fn import_csv(path: &Path, record_id: &str) -> Result<EcgRecord, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (meta, rest) = text
        .split_once('\n')
        .ok_or_else(|| DatasetError::Format("missing metadata line".into()))?;
    let mut fs_hz = None;
    let mut label = None;
    for kv in meta.trim().split(',') {
        match kv.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("fs", v)) => fs_hz = v.parse::<u32>().ok(),
            Some(("label", v)) => label = v.parse::<Label>().ok(),
            _ => return Err(DatasetError::Format(format!("bad metadata entry '{kv}'"))),
        }
    }
    let fs_hz = fs_hz.ok_or_else(|| DatasetError::Format("metadata lacks a valid fs".into()))?;
    let label = label.ok_or_else(|| DatasetError::Format("metadata lacks a valid label".into()))?;

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rest.as_bytes());
    let headers = rdr.headers().map_err(|e| DatasetError::Format(e.to_string()))?.clone();
    let ids = headers
        .iter()
        .map(|h| h.parse::<LeadId>().map_err(DatasetError::Format))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols: Vec<Vec<f32>> = vec![Vec::new(); ids.len()];
    for row in rdr.records() {
        let row = row.map_err(|e| DatasetError::Format(e.to_string()))?;
        for (c, cell) in row.iter().enumerate() {
            let v: f32 = cell
                .parse()
                .map_err(|_| DatasetError::Format(format!("bad sample '{cell}'")))?;
            cols[c].push(v);
        }
    }
    let leads: BTreeMap<LeadId, Vec<f32>> = ids.into_iter().zip(cols).collect();
    EcgRecord::new(record_id, fs_hz, label, leads).map_err(|e| DatasetError::Format(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Record list plus optional split assignment. Serialized as a JSON array;
/// relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.id.clone()) {
                return Err(DatasetError::DuplicateId(e.id.clone()));
            }
        }
        Ok(DatasetManifest {
            entries,
            root: root.into(),
        })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<EcgRecord>, DatasetError> {
        self.split(split).map(|e| self.load_entry(e)).collect()
    }

    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<EcgRecord, DatasetError> {
        let mut rec = load_record(&self.resolve(entry))?;
        rec.record_id = entry.id.clone();
        Ok(rec)
    }

    /// Sampling rate, read from the first record header.
    pub fn fs(&self) -> Result<Option<u32>, DatasetError> {
        match self.entries.first() {
            Some(e) => Ok(Some(self.load_entry(e)?.sampling_rate)),
            None => Ok(None),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| DatasetError::Format(e.to_string()))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        DatasetManifest::new(entries, root)
    }
}

/// Per-class largest-remainder apportionment of `n` records over `ratios`;
/// ties in the remainder go to the earlier split (train first).
pub fn apportion(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u32 = ratios.iter().sum();
    let mut counts = [0usize; 3];
    let mut fracs = [(0u64, 0usize); 3];
    for (k, &r) in ratios.iter().enumerate() {
        let num = n as u64 * r as u64;
        counts[k] = (num / total as u64) as usize;
        fracs[k] = (num % total as u64, k);
    }
    let mut left = n - counts.iter().sum::<usize>();
    // Larger remainder first; equal remainders keep split order.
    fracs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in fracs.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified train/val/test assignment. Deterministic given `seed`.
pub fn stratified_split(manifest: &DatasetManifest, ratios: [u32; 3], seed: u64) -> Result<DatasetManifest, DatasetError> {
    if ratios.iter().sum::<u32>() == 0 {
        return Err(DatasetError::InvalidRatios);
    }
    let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_label.entry(e.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = manifest.clone();
    for (label, mut idx) in by_label {
        if idx.len() < MIN_PER_CLASS {
            return Err(DatasetError::ClassTooSmall {
                label,
                count: idx.len(),
                min: MIN_PER_CLASS,
            });
        }
        idx.shuffle(&mut rng);
        let [n_train, n_val, _] = apportion(idx.len(), ratios);
        for (pos, &i) in idx.iter().enumerate() {
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            out.entries[i].split = Some(split);
        }
    }
    Ok(out)
}

/// Write records as `<id>.ecgr` files plus `manifest.json` in `dir`.
pub fn write_corpus(dir: &Path, records: &[EcgRecord]) -> Result<DatasetManifest, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(records.len());
    for rec in records {
        let file = PathBuf::from(format!("{}.ecgr", rec.record_id));
        save_record(rec, &dir.join(&file))?;
        entries.push(ManifestEntry {
            id: rec.record_id.clone(),
            path: file,
            label: rec.label,
            split: None,
        });
    }
    DatasetManifest::new(entries, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, leads: usize) -> EcgRecord {
        let map = LeadId::ALL[..leads]
            .iter()
            .map(|&l| (l, (0..n).map(|k| (k as f32 * 0.01 + l.index() as f32).sin()).collect()))
            .collect();
        EcgRecord::new("r", 500, Label::Mi, map).unwrap()
    }

    fn manifest(counts: &[(Label, usize)]) -> DatasetManifest {
        let mut entries = Vec::new();
        for &(label, n) in counts {
            for _ in 0..n {
                let id = format!("r{}", entries.len());
                entries.push(ManifestEntry {
                    path: PathBuf::from(format!("{id}.ecgr")),
                    id,
                    label,
                    split: None,
                });
            }
        }
        DatasetManifest::new(entries, ".").unwrap()
    }

    #[test]
    fn payload_size_matches_layout() {
        let bytes = encode_record(&record(5000, 12)).unwrap();
        assert_eq!(bytes.len(), 12 * 5000 * 4 + RECORD_HEADER_LEN);
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ecgr");
        let rec = record(300, 12);
        save_record(&rec, &path).unwrap();
        assert_eq!(load_record(&path).unwrap(), rec);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut bytes = encode_record(&record(10, 2)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_record(&bad, "x"), Err(DatasetError::Format(_))));
        bytes.pop();
        assert!(matches!(decode_record(&bytes, "x"), Err(DatasetError::Format(_))));
        assert!(matches!(decode_record(&bytes[..5], "x"), Err(DatasetError::Format(_))));
    }

    #[test]
    fn sparse_lead_set_is_rejected_on_encode() {
        let mut map = BTreeMap::new();
        map.insert(LeadId::I, vec![0.0]);
        map.insert(LeadId::V5, vec![0.0]);
        let rec = EcgRecord::new("x", 500, Label::Normal, map).unwrap();
        assert!(encode_record(&rec).is_err());
    }

    #[test]
    fn split_counts_follow_apportionment() {
        let m = manifest(&[(Label::Normal, 60), (Label::Mi, 40)]);
        let s = stratified_split(&m, [7, 1, 2], 3).unwrap();
        let count = |label, split| {
            s.entries
                .iter()
                .filter(|e| e.label == label && e.split == Some(split))
                .count()
        };
        assert_eq!(
            [count(Label::Normal, Split::Train), count(Label::Normal, Split::Val), count(Label::Normal, Split::Test)],
            [42, 6, 12]
        );
        assert_eq!(
            [count(Label::Mi, Split::Train), count(Label::Mi, Split::Val), count(Label::Mi, Split::Test)],
            [28, 4, 8]
        );
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let m = manifest(&[(Label::Normal, 12), (Label::Af, 10)]);
        let s = stratified_split(&m, [1, 0, 0], 0).unwrap();
        assert!(s.entries.iter().all(|e| e.split == Some(Split::Train)));
    }

    #[test]
    fn split_is_deterministic_and_rejects_small_classes() {
        let m = manifest(&[(Label::Normal, 30), (Label::Mi, 15)]);
        assert_eq!(stratified_split(&m, [7, 1, 2], 9).unwrap(), stratified_split(&m, [7, 1, 2], 9).unwrap());
        let small = manifest(&[(Label::Normal, 30), (Label::Mi, 9)]);
        assert!(matches!(
            stratified_split(&small, [7, 1, 2], 9),
            Err(DatasetError::ClassTooSmall { label: Label::Mi, count: 9, .. })
        ));
    }

    #[test]
    fn apportion_largest_remainder() {
        assert_eq!(apportion(60, [7, 1, 2]), [42, 6, 12]);
        assert_eq!(apportion(15, [7, 1, 2]), [11, 1, 3]);
        assert_eq!(apportion(13, [7, 1, 2]), [9, 1, 3]);
    }

    #[test]
    fn manifest_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = stratified_split(&manifest(&[(Label::Normal, 10)]), [7, 1, 2], 1).unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back.entries, m.entries);
        let raw: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert!(raw.as_array().unwrap()[0].get("split").is_some());
    }

    #[test]
    fn csv_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "fs=250,label=af\nI,II,V1\n0.1,0.2,0.3\n0.4,0.5,0.6\n").unwrap();
        let rec = import_csv(&path, "x").unwrap();
        assert_eq!(rec.sampling_rate, 250);
        assert_eq!(rec.label, Label::Af);
        assert_eq!(rec.lead(LeadId::V1).unwrap(), &[0.3, 0.6]);
        fs::write(&path, "fs=250\nI\n0.1\n").unwrap();
        assert!(import_csv(&path, "x").is_err());
    }
}
