//! R-peak detection on clean and noisy traces, then the amplitude and
//! position errors between two records.
//!
//! cargo run --release --example rpeak_quality

use leadsynth::quality::{assess, detect_rpeaks, match_peaks, PeakSet, DEFAULT_TOLERANCE_MS};
use leadsynth::synth::{generate_annotated, inject_artifacts, ArtifactConfig, BeatTemplate};
use leadsynth::{Label, LeadId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 500;
    let (clean, ann) = generate_annotated(&BeatTemplate::default(), Label::Mi, 75.0, 10.0, fs, 3, 0)?;
    let noisy = inject_artifacts(
        &clean,
        &ArtifactConfig {
            baseline_wander_amp: 0.1,
            white_noise_std: 0.02,
            powerline_amp: 0.02,
            ..Default::default()
        },
        4,
    );
    let truth = ann.r_indices(fs, clean.len());
    let truth = PeakSet::new(truth.clone(), vec![1.0; truth.len()], fs);
    for (name, rec) in [("clean", &clean), ("noisy", &noisy)] {
        let found = detect_rpeaks(rec.lead(LeadId::II).unwrap(), fs)?;
        let m = match_peaks(&truth, &found, DEFAULT_TOLERANCE_MS)?;
        println!(
            "{name}: {} annotated, {} detected, {} matched, {} missed, {} spurious",
            truth.len(),
            found.len(),
            m.pairs.len(),
            m.missed_ref,
            m.spurious_gen
        );
    }

    // Score the noisy record as if it were a generated copy of the clean one.
    let report = assess(&clean, &noisy, &[LeadId::V1, LeadId::V5])?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
