//! Generate a labelled twelve-lead corpus, write it to disk and split it.
//!
//! cargo run --release --example synthetic_corpus -- /tmp/corpus

use std::path::PathBuf;

use leadsynth::dataset::{stratified_split, write_corpus, Split};
use leadsynth::synth::{generate_corpus, CorpusConfig};
use leadsynth::LeadId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&dir)?;

    let corpus = generate_corpus(&CorpusConfig::new(30, 20, 10, 500, 10.0, 7))?;
    let first = &corpus[0];
    let r = first.beats.r_indices(500, first.record.len());
    println!(
        "{}: {} leads, {} samples, {} beats, first R at sample {}",
        first.record.record_id,
        first.record.lead_ids().count(),
        first.record.len(),
        r.len(),
        r[0]
    );
    let v1 = first.record.lead(LeadId::V1).unwrap();
    let peak = v1.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b.abs()));
    println!("peak |V1| = {peak:.3} mV");

    let records: Vec<_> = corpus.into_iter().map(|a| a.record).collect();
    let manifest = stratified_split(&write_corpus(&dir, &records)?, [7, 1, 2], 7)?;
    manifest.save(&dir.join("manifest.json"))?;
    for split in [Split::Train, Split::Val, Split::Test] {
        let recs = manifest.load_split(split)?;
        let mut counts = std::collections::BTreeMap::new();
        for r in &recs {
            *counts.entry(r.label.as_str()).or_insert(0) += 1;
        }
        println!("{split:?}: {counts:?}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}
