//! Train the two-lead generator on a small synthetic corpus and save the
//! best checkpoint.
//!
//! cargo run --release --example train_generator -- 300 /tmp/t2t.ckpt

use leadsynth::model::{save_bundle, save_history, train, GanArch, GanMode, TrainConfig};
use leadsynth::synth::{generate_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(Ok(300), |s| s.parse())?;
    let out = args.next().unwrap_or_else(|| "t2t.ckpt".into());

    let records: Vec<_> = generate_corpus(&CorpusConfig::new(40, 24, 16, 250, 10.0, 1))?
        .into_iter()
        .map(|a| a.record)
        .collect();
    let (val, train_set): (Vec<_>, Vec<_>) = records.into_iter().enumerate().partition(|(k, _)| k % 5 == 4);
    let strip = |v: Vec<(usize, _)>| v.into_iter().map(|(_, r)| r).collect::<Vec<_>>();
    let (train_set, val) = (strip(train_set), strip(val));

    let mut cfg = TrainConfig::new(GanMode::T2t, 3);
    cfg.arch = GanArch::desk(512);
    cfg.steps = steps;
    let t = std::time::Instant::now();
    let outcome = train::<f32>(&train_set, &val, &cfg, None)?;
    println!("{steps} steps in {:.1} s", t.elapsed().as_secs_f64());

    for v in outcome.history.validation.iter().step_by(5) {
        println!("step {:>5}  val L_rec {:.4}  total {:.4}", v.step, v.l_rec, v.total);
    }
    println!("best step {:?}", outcome.history.best_step);
    save_bundle(out.as_ref(), &outcome.best, outcome.history.best_step)?;
    save_history(format!("{out}.history.json").as_ref(), &outcome.history)?;
    println!("saved {out}");
    Ok(())
}
