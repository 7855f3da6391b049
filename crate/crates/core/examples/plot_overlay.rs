//! Overlay a reference record and a degraded copy in a twelve-panel SVG.
//!
//! cargo run --release --example plot_overlay -- overlay.svg

use leadsynth::plot::render_overlay;
use leadsynth::synth::{generate_corpus, inject_artifacts, ArtifactConfig, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "overlay.svg".into());
    let rec = &generate_corpus(&CorpusConfig::new(0, 1, 0, 500, 4.0, 2))?[0].record;
    let wander = ArtifactConfig {
        baseline_wander_amp: 0.15,
        ..Default::default()
    };
    let other = inject_artifacts(rec, &wander, 1);
    let svg = render_overlay(rec, Some(&other), None, 2.0)?;
    std::fs::write(&out, &svg)?;
    println!("{} bytes written to {out}", svg.len());
    Ok(())
}
