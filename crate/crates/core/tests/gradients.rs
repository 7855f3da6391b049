//! Analytic gradients against central finite differences in f64.

mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CASES: u64 = 20;

fn run(name: &str, check: impl Fn(&mut ChaCha8Rng) -> (String, f64)) {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (case, err) = check(&mut rng);
        assert!(err < REL_TOL, "{name}: {case} relative error {err:.3e}");
    }
}

#[test]
fn conv1d_gradients() {
    run("conv1d", check_conv);
}

#[test]
fn instance_norm_gradients() {
    run("instance_norm", check_instance_norm);
}

#[test]
fn adain_gradients() {
    run("adain", check_adain);
}

#[test]
fn residual_block_gradients() {
    run("residual_block", check_block);
}

#[test]
fn focal_loss_gradients() {
    run("focal_loss", check_focal);
}

#[test]
fn gan_objective_gradients() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        for (case, err) in check_gan_losses(&mut rng) {
            assert!(err < REL_TOL, "{case}: relative error {err:.3e}");
        }
    }
}

#[test]
fn oracle_rejects_a_wrong_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor([2, 3, 8], &mut rng);
    let f = |t: &leadsynth::nn::TensorBuf<f64>| t.values.iter().map(|v| v.sin()).sum::<f64>();
    let good = leadsynth::nn::TensorBuf::from_vec(x.shape, x.values.iter().map(|v| v.cos()).collect()).unwrap();
    assert!(check_input(&x, &good, f, 48, &mut rng) < REL_TOL);
    let bad = good.clone().scaled(1.01);
    assert!(check_input(&x, &bad, f, 48, &mut rng) > REL_TOL);
}

#[test]
fn batched_losses_match_scalar_loops() {
    for seed in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mode = if seed % 2 == 0 { leadsynth::model::GanMode::T2t } else { leadsynth::model::GanMode::S2e };
        let (nets, batch, recs, items) = tiny_setup_items(mode, 1 + seed as usize % 4, &mut rng);
        let step = seed / 2 % 2;
        let oracle = scalar_losses(&nets, &recs, &items, step);
        let t = leadsynth::model::all_terms(&nets, &batch, step).unwrap();
        for (name, a, b) in [
            ("d_loss", t.d_loss, oracle[0]),
            ("g_adv", t.g_adv, oracle[1]),
            ("l_rec", t.l_rec, oracle[2]),
            ("l_con", t.l_con, oracle[3]),
            ("l_sty", t.l_sty, oracle[4]),
        ] {
            assert!((a - b).abs() <= 1e-6, "{name}: batched {a} vs scalar {b}");
        }
    }
}
