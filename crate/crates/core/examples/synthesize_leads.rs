//! Rebuild twelve leads from Lead I and a later Lead II window, and from
//! Lead I alone.
//!
//! cargo run --release --example synthesize_leads -- [t2t.ckpt]
//!
//! Without a checkpoint the networks are freshly initialized, which shows the
//! plumbing but not the quality.

use leadsynth::model::{load_bundle, synthesize_from_one, synthesize_twelve, GanArch, GanMode, NetworkBundle, TrainConfig};
use leadsynth::signal::extract_async_pair;
use leadsynth::synth::{generate_corpus, CorpusConfig};
use leadsynth::LeadId;

fn fresh(mode: GanMode) -> NetworkBundle<f32> {
    let mut cfg = TrainConfig::new(mode, 0);
    cfg.arch = GanArch::desk(512);
    let mut nets = NetworkBundle::new(&cfg).unwrap();
    nets.steps_trained = 1;
    nets
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t2t = match std::env::args().nth(1) {
        Some(p) => load_bundle::<f32>(p.as_ref())?,
        None => fresh(GanMode::T2t),
    };
    let rec = &generate_corpus(&CorpusConfig::new(1, 0, 0, 250, 10.0, 42))?[0].record;

    // Lead I starts at 1 s, Lead II half a second later.
    let pair = extract_async_pair(rec, 1.0, 0.5, t2t.arch.window_len)?;
    let twelve = synthesize_twelve(&pair, &t2t)?;
    for lead in twelve.lead_ids() {
        let x = twelve.lead(lead).unwrap();
        let (lo, hi) = x.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        println!("{:>4}: [{lo:+.3}, {hi:+.3}] mV", lead.name());
    }
    assert_eq!(twelve.lead(LeadId::II).unwrap(), &pair.lead_ii[..]);

    let s2e = fresh(GanMode::S2e);
    let from_one = synthesize_from_one(&pair.lead_i, rec.sampling_rate, &s2e)?;
    println!("single-lead model produced {} leads", from_one.lead_ids().count());
    Ok(())
}
