//! Train the MI classifier on full twelve-lead input and on Lead I alone,
//! then compare test AUROC with bootstrap intervals.
//!
//! cargo run --release --example classify_variants -- [epochs]

use leadsynth::classifier::{build_variant_dataset, evaluate_classifier, train_classifier, ClassifierConfig, LeadVariant, Task};
use leadsynth::synth::{generate_corpus, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(8), |s| s.parse())?;
    let records: Vec<_> = generate_corpus(&CorpusConfig::new(60, 60, 0, 250, 10.0, 5))?
        .into_iter()
        .map(|a| a.record)
        .collect();
    let mut parts: [Vec<_>; 3] = Default::default();
    for (k, r) in records.into_iter().enumerate() {
        parts[[0, 0, 0, 1, 2][k % 5]].push(r);
    }
    let mut cfg = ClassifierConfig::new(9);
    cfg.epochs = epochs;
    for variant in [LeadVariant::Original, LeadVariant::SingleLead] {
        let build = |recs| build_variant_dataset(recs, variant, Task::Mi, None, 512, 0.5);
        let (tr, va, te) = (build(&parts[0])?, build(&parts[1])?, build(&parts[2])?);
        let model = train_classifier(&tr, Some(&va), &cfg)?;
        let rep = evaluate_classifier(&model, &te, Task::Mi, 200, 9)?;
        println!(
            "{:>8}: AUROC {:.3} [{:.3}, {:.3}]  AUPRC {:.3}  ({} test records)",
            variant.as_str(),
            rep.auroc,
            rep.auroc_ci[0],
            rep.auroc_ci[1],
            rep.auprc,
            rep.n_test
        );
    }
    Ok(())
}
