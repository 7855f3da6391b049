//! The `leadsynth` binary driven end to end through its exit codes and files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leadsynth::dataset::{load_record, save_record};
use leadsynth::model::GanArch;
use leadsynth::signal::{EcgRecord, LeadId};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leadsynth")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    /// Small corpus plus a gan config for quick training.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        let status = code(&[
            "gen-data", "--out", s(&data), "--n-normal", "10", "--n-mi", "10", "--n-af", "0", "--fs", "250",
            "--duration", "4", "--seed", "21",
        ]);
        assert_eq!(status, 0);
        let cfg = serde_json::json!({
            "seed": 4,
            "steps": 3,
            "batch_size": 2,
            "val_batch": 2,
            "arch": GanArch::tiny(256),
        });
        std::fs::write(root.join("gan.json"), cfg.to_string()).unwrap();
        Workspace { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&self) -> PathBuf {
        self.p("data").join("rec_00000.ecgr")
    }

    fn train(&self, mode: &str, out: &str, extra: &[&str]) -> i32 {
        let (data, cfg, out) = (self.p("data"), self.p("gan.json"), self.p(out));
        let mut args = vec!["train-gan", "--data", s(&data), "--mode", mode, "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        code(&args)
    }
}

fn history(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn steps(h: &Value) -> Vec<u64> {
    h["rows"].as_array().unwrap().iter().map(|r| r["step"].as_u64().unwrap()).collect()
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let out = dir.path().join(name);
        let st = code(&[
            "gen-data", "--out", s(&out), "--n-normal", "10", "--n-mi", "10", "--n-af", "10", "--fs", "250",
            "--duration", "3", "--seed", "8",
        ]);
        assert_eq!(st, 0);
        out
    };
    let (a, b) = (gen("a"), gen("b"));
    let listing = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    assert_eq!(listing(&a), listing(&b));
    assert!(listing(&a).iter().any(|n| n == "manifest.json"));
    for name in listing(&a) {
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn missing_seed_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    assert_eq!(code(&["gen-data", "--out", s(&out), "--n-normal", "10", "--n-mi", "10", "--n-af", "0"]), 2);
    assert_eq!(code(&["gen-data", "--out", s(&out), "--n-normal", "3", "--n-mi", "10", "--n-af", "0", "--seed", "1"]), 2);
    assert_eq!(code(&["synth", "--bogus"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn identical_records_assess_to_zero_error() {
    let w = Workspace::new();
    let rec = w.record();
    let out = w.p("self.json");
    assert_eq!(code(&["assess", "--ref", s(&rec), "--gen", s(&rec), "--leads", "V1,V5,II", "--out", s(&out)]), 0);
    let report = history(&out);
    assert_eq!(report["amp_pct"].as_f64(), Some(0.0));
    assert_eq!(report["pos_ms"].as_f64(), Some(0.0));
    assert_eq!(report["missed_ref"].as_u64(), Some(0));
    assert_eq!(report["spurious_gen"].as_u64(), Some(0));
    assert!(report["matched"].as_u64().unwrap() > 0);
}

#[test]
fn training_resumes_and_pipelines_check_modes() {
    let w = Workspace::new();
    assert_eq!(w.train("t2t", "t2t.ckpt", &[]), 0);
    let first = history(&w.p("t2t.ckpt.history.json"));
    assert_eq!(steps(&first), vec![1, 2, 3]);
    assert!(w.p("t2t.ckpt.last").exists());

    let last = w.p("t2t.ckpt.last");
    assert_eq!(w.train("t2t", "more.ckpt", &["--resume", s(&last), "--steps", "2"]), 0);
    assert_eq!(steps(&history(&w.p("more.ckpt.history.json"))), vec![4, 5]);

    // Resuming into the other mode is refused.
    assert_eq!(w.train("s2e", "bad.ckpt", &["--resume", s(&last)]), 5);

    let (rec, ckpt, gen) = (w.record(), w.p("t2t.ckpt"), w.p("gen.ecgr"));
    assert_eq!(code(&["synth", "--ckpt", s(&ckpt), "--record", s(&rec), "--mode", "s2e", "--out", s(&gen)]), 5);
    assert_eq!(code(&["synth", "--ckpt", s(&ckpt), "--record", s(&rec), "--out", s(&gen)]), 0);
    let g = load_record(&gen).unwrap();
    let r = load_record(&rec).unwrap();
    assert_eq!(g.lead_ids().count(), 12);
    assert_eq!(g.label, r.label);
    assert_eq!(g.len(), 256);

    // A record carrying only lead I cannot feed the two-lead model.
    let mut only_i = BTreeMap::new();
    only_i.insert(LeadId::I, r.lead(LeadId::I).unwrap().to_vec());
    let lone = w.p("lone.ecgr");
    save_record(&EcgRecord::new("lone", r.sampling_rate, r.label, only_i).unwrap(), &lone).unwrap();
    assert_eq!(code(&["synth", "--ckpt", s(&ckpt), "--record", s(&lone), "--out", s(&gen)]), 6);
    let rep = w.p("rep.json");
    assert_eq!(code(&["assess", "--ref", s(&rec), "--gen", s(&lone), "--leads", "V1", "--out", s(&rep)]), 6);

    let data = w.p("data");
    let clf = w.p("clf.json");
    let classify = |variant: &str, ckpt: Option<&Path>| {
        let mut args = vec![
            "classify", "--data", s(&data), "--variant", variant, "--task", "mi", "--seed", "1", "--window", "256",
            "--n-boot", "20", "--out", s(&clf),
        ];
        if let Some(c) = ckpt {
            args.extend(["--ckpt", s(c)]);
        }
        code(&args)
    };
    assert_eq!(classify("t2t", None), 7);
    assert_eq!(classify("s2e", Some(&ckpt)), 5);

    let missing = w.p("absent.ckpt");
    assert_eq!(code(&["synth", "--ckpt", s(&missing), "--record", s(&rec), "--out", s(&gen)]), 3);
}
