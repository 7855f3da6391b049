//! Finite-difference gradient oracles shared by the integration tests.
#![allow(dead_code)]

use leadsynth::model::{
    build_batch, discriminator_grads, generator_forward, generator_grads, loss_adv, loss_con, loss_rec, loss_sty,
    BatchItem, GanArch, GanBatch, GanMode, Lambdas, NetworkBundle, TrainConfig,
};
use leadsynth::nn::{
    adain, adain_backward, conv1d, conv1d_backward, focal_loss, focal_loss_logits, instance_norm,
    instance_norm_backward, softmax_rows, Module, NormMode, Param, Resample, ResidualBlock, StyleAffine, TensorBuf,
    PROB_CLAMP,
};
use leadsynth::signal::{EcgRecord, LeadId};
use leadsynth::synth::{generate_record, inject_artifacts, ArtifactConfig, BeatTemplate};
use leadsynth::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn random_tensor(shape: [usize; 3], rng: &mut impl Rng) -> TensorBuf<f64> {
    let n = shape.iter().product();
    TensorBuf::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Agreement required between the two step sizes.
pub const SMOOTH_TOL: f64 = 1e-4;

/// Largest share of probes that may be skipped as non-smooth.
pub const MAX_SKIPPED: f64 = 0.2;

/// A finite-difference estimate with the roundoff it may carry.
#[derive(Clone, Copy, Debug)]
pub struct Numeric {
    pub value: f64,
    pub roundoff: f64,
}

/// Loss evaluations are trusted to this many ulps of their magnitude.
pub const ROUNDOFF_ULPS: f64 = 2.0;

/// Central difference of `f(delta)` around zero, Richardson-extrapolated from
/// steps `STEP` and `STEP / 2`. `None` when the two estimates disagree beyond
/// roundoff, which marks a probe straddling a kink.
pub fn central(mut f: impl FnMut(f64) -> f64) -> Option<Numeric> {
    let mut scale: f64 = 0.0;
    let mut at = |h: f64| {
        let (a, b) = (f(h), f(-h));
        scale = scale.max(a.abs()).max(b.abs());
        (a - b) / (2.0 * h)
    };
    let coarse = at(STEP);
    let fine = at(STEP / 2.0);
    let roundoff = ROUNDOFF_ULPS * f64::EPSILON * scale / (STEP / 2.0);
    let gap = (coarse - fine).abs();
    (gap <= SMOOTH_TOL * coarse.abs().max(fine.abs()).max(FLOOR) + roundoff).then_some(Numeric {
        value: (4.0 * fine - coarse) / 3.0,
        roundoff,
    })
}

/// Worst relative error over probes, tracking how many were skipped.
#[derive(Default)]
pub struct Probe {
    pub worst: f64,
    pub skipped: usize,
    pub total: usize,
}

impl Probe {
    /// The roundoff of the estimate is forgiven before taking the ratio.
    pub fn record(&mut self, analytic: f64, numeric: Option<Numeric>) {
        self.total += 1;
        match numeric {
            Some(n) => {
                let gap = ((analytic - n.value).abs() - n.roundoff).max(0.0);
                let err = gap / analytic.abs().max(n.value.abs()).max(FLOOR);
                self.worst = self.worst.max(err);
            }
            None => self.skipped += 1,
        }
    }

    /// Worst error, or infinity if too many probes were non-smooth to trust.
    pub fn result(&self) -> f64 {
        if self.skipped as f64 > MAX_SKIPPED * self.total as f64 {
            f64::INFINITY
        } else {
            self.worst
        }
    }
}

/// Central differences of `f` at `x` against `analytic`, over up to
/// `samples` random coordinates. Returns the worst relative error.
pub fn check_input(
    x: &TensorBuf<f64>,
    analytic: &TensorBuf<f64>,
    f: impl Fn(&TensorBuf<f64>) -> f64,
    samples: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut probe = Probe::default();
    for _ in 0..samples.min(x.values.len()) {
        let i = rng.random_range(0..x.values.len());
        let numeric = central(|d| {
            let mut p = x.clone();
            p.values[i] += d;
            f(&p)
        });
        probe.record(analytic.values[i], numeric);
    }
    probe.result()
}

/// Same check for parameters reached through `get`, whose `grad` fields hold
/// the analytic gradient.
pub fn check_params<N>(
    owner: &mut N,
    get: impl Fn(&mut N) -> Vec<&mut Param<f64>>,
    f: impl Fn(&N) -> f64,
    per_tensor: usize,
    rng: &mut impl Rng,
) -> f64 {
    let tensors = get(owner).len();
    let mut probe = Probe::default();
    for k in 0..tensors {
        let len = get(owner)[k].value.len();
        for _ in 0..per_tensor.min(len) {
            let i = rng.random_range(0..len);
            let analytic = get(owner)[k].grad[i];
            let orig = get(owner)[k].value[i];
            let numeric = central(|d| {
                get(owner)[k].value[i] = orig + d;
                let v = f(owner);
                get(owner)[k].value[i] = orig;
                v
            });
            probe.record(analytic, numeric);
        }
    }
    probe.result()
}

fn projection(shape: [usize; 3], rng: &mut impl Rng) -> TensorBuf<f64> {
    random_tensor(shape, rng)
}

fn dot(a: &TensorBuf<f64>, b: &TensorBuf<f64>) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum()
}

/// Convolution with random shape, stride and padding; returns the worst error
/// over input, weight and bias.
pub fn check_conv(rng: &mut impl Rng) -> (String, f64) {
    let b = rng.random_range(1..3);
    let cin = rng.random_range(1..4);
    let cout = rng.random_range(1..4);
    let k = rng.random_range(1..5);
    let stride = rng.random_range(1..3);
    let pad = rng.random_range(0..k);
    let len = rng.random_range(k.max(2)..12);
    let x = random_tensor([b, cin, len], rng);
    let w: Vec<f64> = (0..cout * cin * k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = conv1d(&x, &w, &bias, cout, k, stride, pad).unwrap();
    let r = projection(y.shape, rng);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; cout];
    let dx = conv1d_backward(&x, &w, cout, k, stride, pad, &r, &mut dw, &mut db);
    let f = |xx: &TensorBuf<f64>, ww: &[f64], bb: &[f64]| dot(&conv1d(xx, ww, bb, cout, k, stride, pad).unwrap(), &r);
    let mut worst = check_input(&x, &dx, |xx| f(xx, &w, &bias), 16, rng);
    let wt = TensorBuf::from_vec([1, 1, w.len()], w.clone()).unwrap();
    let dwt = TensorBuf::from_vec([1, 1, w.len()], dw).unwrap();
    worst = worst.max(check_input(&wt, &dwt, |ww| f(&x, &ww.values, &bias), 16, rng));
    let bt = TensorBuf::from_vec([1, 1, cout], bias.clone()).unwrap();
    let dbt = TensorBuf::from_vec([1, 1, cout], db).unwrap();
    worst = worst.max(check_input(&bt, &dbt, |bb| f(&x, &w, &bb.values), 8, rng));
    (format!("conv1d b{b} cin{cin} cout{cout} k{k} s{stride} p{pad} L{len}"), worst)
}

pub fn check_instance_norm(rng: &mut impl Rng) -> (String, f64) {
    let shape = [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..10)];
    let x = random_tensor(shape, rng);
    let r = projection(shape, rng);
    let (_, cache) = instance_norm(&x);
    let dx = instance_norm_backward(&cache, &r);
    let worst = check_input(&x, &dx, |xx| dot(&instance_norm(xx).0, &r), 24, rng);
    (format!("instance_norm {shape:?}"), worst)
}

pub fn check_adain(rng: &mut impl Rng) -> (String, f64) {
    let shape = [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(2..10)];
    let x = random_tensor(shape, rng);
    let s = random_tensor([shape[0], shape[1], 1], rng);
    let t = random_tensor([shape[0], shape[1], 1], rng);
    let r = projection(shape, rng);
    let (_, cache) = adain(&x, &s, &t).unwrap();
    let (dx, ds, dt) = adain_backward(&cache, &s, &r);
    let f = |xx: &TensorBuf<f64>, ss: &TensorBuf<f64>, tt: &TensorBuf<f64>| dot(&adain(xx, ss, tt).unwrap().0, &r);
    let mut worst = check_input(&x, &dx, |xx| f(xx, &s, &t), 16, rng);
    worst = worst.max(check_input(&s, &ds, |ss| f(&x, ss, &t), 8, rng));
    worst = worst.max(check_input(&t, &dt, |tt| f(&x, &s, tt), 8, rng));
    (format!("adain {shape:?}"), worst)
}

fn randomize(params: Vec<&mut Param<f64>>, rng: &mut impl Rng) {
    for p in params {
        for v in &mut p.value {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

pub fn check_block(rng: &mut impl Rng) -> (String, f64) {
    let mode = if rng.random_bool(0.5) { NormMode::Adain } else { NormMode::Plain };
    let resample = [Resample::None, Resample::Down, Resample::Up][rng.random_range(0..3)];
    let b = rng.random_range(1..3);
    let cin = rng.random_range(1..4);
    let cout = rng.random_range(1..4);
    let len = 2 * rng.random_range(2..7);
    let mut block = ResidualBlock::<f64>::new(cin, cout, 3, mode, resample, rng);
    randomize(block.params_mut(), rng);
    let x = random_tensor([b, cin, len], rng);
    let style = (mode == NormMode::Adain).then(|| StyleAffine {
        scale1: random_tensor([b, cout, 1], rng),
        bias1: random_tensor([b, cout, 1], rng),
        scale2: random_tensor([b, cout, 1], rng),
        bias2: random_tensor([b, cout, 1], rng),
    });
    let (y, cache) = block.forward(&x, style.as_ref()).unwrap();
    let r = projection(y.shape, rng);
    block.zero_grad();
    let (dx, dstyle) = block.backward(&cache, style.as_ref(), &r);
    let mut worst = check_input(&x, &dx, |xx| dot(&block.forward(xx, style.as_ref()).unwrap().0, &r), 16, rng);
    if let (Some(s), Some(ds)) = (&style, &dstyle) {
        let probe = |pick: usize, analytic: &TensorBuf<f64>, rng: &mut ChaCha8Rng| {
            let base = [&s.scale1, &s.bias1, &s.scale2, &s.bias2][pick].clone();
            check_input(
                &base,
                analytic,
                |v| {
                    let mut st = s.clone();
                    *[&mut st.scale1, &mut st.bias1, &mut st.scale2, &mut st.bias2][pick] = v.clone();
                    dot(&block.forward(&x, Some(&st)).unwrap().0, &r)
                },
                6,
                rng,
            )
        };
        let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
        for (k, g) in [&ds.scale1, &ds.bias1, &ds.scale2, &ds.bias2].into_iter().enumerate() {
            worst = worst.max(probe(k, g, &mut sub));
        }
    }
    worst = worst.max(check_params(
        &mut block,
        |bl| bl.params_mut(),
        |bl| dot(&bl.forward(&x, style.as_ref()).unwrap().0, &r),
        6,
        rng,
    ));
    (format!("residual_block {mode:?} {resample:?} b{b} cin{cin} cout{cout} L{len}"), worst)
}

/// Focal loss through a softmax, gradient with respect to the logits.
pub fn check_focal(rng: &mut impl Rng) -> (String, f64) {
    let b = rng.random_range(1..6);
    let k = rng.random_range(2..5);
    let logits = random_tensor([b, k, 1], rng).scaled(2.0);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let (_, d) = focal_loss_logits(&logits, &labels, 0.5, 2.0).unwrap();
    let worst = check_input(
        &logits,
        &d,
        |l| focal_loss(&softmax_rows(l), &labels, 0.5, 2.0).unwrap(),
        b * k,
        rng,
    );
    (format!("focal_loss b{b} k{k}"), worst)
}

/// Short records with light white noise, so that no window is flat.
pub fn toy_records(fs: u32, seconds: f64, n: usize, seed: u64) -> Vec<EcgRecord> {
    let labels = [Label::Normal, Label::Mi, Label::Af];
    let noise = ArtifactConfig {
        white_noise_std: 0.02,
        ..Default::default()
    };
    (0..n)
        .map(|k| {
            let clean = generate_record(&BeatTemplate::default(), labels[k % 3], 60.0 + 7.0 * k as f64, seconds, fs, seed + k as u64, 0)
                .unwrap();
            inject_artifacts(&clean, &noise, seed ^ k as u64)
        })
        .collect()
}

/// Tiny f64 networks and a batch of up to four examples.
pub fn tiny_setup(mode: GanMode, batch: usize, rng: &mut impl Rng) -> (NetworkBundle<f64>, GanBatch<f64>, Vec<EcgRecord>) {
    let (nets, b, recs, _) = tiny_setup_items(mode, batch, rng);
    (nets, b, recs)
}

pub fn tiny_setup_items(
    mode: GanMode,
    batch: usize,
    rng: &mut impl Rng,
) -> (NetworkBundle<f64>, GanBatch<f64>, Vec<EcgRecord>, Vec<BatchItem>) {
    let window = 32;
    let recs = toy_records(100, 1.2, 3, rng.random());
    let mut cfg = TrainConfig::new(mode, rng.random());
    cfg.arch = GanArch::tiny(window);
    let nets = NetworkBundle::<f64>::new(&cfg).unwrap();
    let targets = mode.generated_leads();
    let items: Vec<BatchItem> = (0..batch)
        .map(|_| BatchItem {
            record: rng.random_range(0..recs.len()),
            t0: rng.random_range(0..60) as f64 / 100.0,
            adv_lead: targets[rng.random_range(0..targets.len())],
            rec_lead: targets[rng.random_range(0..targets.len())],
            z: (0..cfg.arch.z_dim).map(|_| rng.random_range(-1.5f32..1.5)).collect(),
        })
        .collect();
    let b = build_batch(&recs, &items, mode, window, TINY_DELAY).unwrap();
    (nets, b, recs, items)
}

pub const TINY_DELAY: f64 = 0.2;

fn all_gen_params(n: &mut NetworkBundle<f64>) -> Vec<&mut Param<f64>> {
    let mut v = n.style.params_mut();
    v.extend(n.mapping.params_mut());
    v.extend(n.generator.params_mut());
    v
}

/// Each of the four objectives end to end through tiny networks.
pub fn check_gan_losses(rng: &mut impl Rng) -> Vec<(String, f64)> {
    let mode = if rng.random_bool(0.5) { GanMode::T2t } else { GanMode::S2e };
    let bsz = rng.random_range(1..5);
    let (mut nets, batch, _) = tiny_setup(mode, bsz, rng);
    let step: u64 = rng.random_range(0..2);
    let mut out = Vec::new();

    nets.zero_grad();
    let fwd = generator_forward(&nets, &batch, step).unwrap();
    discriminator_grads(&mut nets, &batch, fwd.fake()).unwrap();
    let e = check_params(&mut nets, |n| n.discriminator.params_mut(), |n| loss_adv(n, &batch).unwrap().0, 4, rng);
    out.push((format!("L_adv (discriminator) {mode} b{bsz}"), e));

    let unit = |which: usize| {
        let mut w = [0.0; 4];
        w[which] = 1.0;
        Lambdas {
            adv: w[0],
            rec: w[1],
            con: w[2],
            sty: w[3],
        }
    };
    type LossFn = fn(&NetworkBundle<f64>, &GanBatch<f64>, u64) -> f64;
    let terms: [(&str, LossFn); 4] = [
        ("L_adv (generator)", |n, b, _| loss_adv(n, b).unwrap().1),
        ("L_rec", |n, b, s| loss_rec(n, b, s).unwrap()),
        ("L_con", |n, b, _| loss_con(n, b).unwrap()),
        ("L_sty", |n, b, _| loss_sty(n, b).unwrap()),
    ];
    for (k, (name, f)) in terms.into_iter().enumerate() {
        nets.zero_grad();
        let fwd = generator_forward(&nets, &batch, step).unwrap();
        generator_grads(&mut nets, &batch, &fwd, &unit(k)).unwrap();
        let e = check_params(&mut nets, all_gen_params, |n| f(n, &batch, step), 3, rng);
        out.push((format!("{name} {mode} b{bsz} source {}", if step == 0 { LeadId::I } else { LeadId::II }), e));
    }
    out
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// The four objectives recomputed one example at a time with plain loops:
/// `[d_loss, g_adv, l_rec, l_con, l_sty]`.
pub fn scalar_losses(
    nets: &NetworkBundle<f64>,
    records: &[EcgRecord],
    items: &[BatchItem],
    step: u64,
) -> [f64; 5] {
    let window = nets.arch.window_len;
    let mut sums = [0.0; 5];
    for item in items {
        let one: GanBatch<f64> = build_batch(records, std::slice::from_ref(item), nets.mode, window, TINY_DELAY).unwrap();
        let head = [nets.head_of(item.adv_lead).unwrap()];
        let rec_head = [nets.head_of(item.rec_lead).unwrap()];
        let code = nets.style.forward(&one.style_input, &head).unwrap();
        let code_rec = nets.style.forward(&one.style_input, &rec_head).unwrap();
        let fake = nets.generator.forward(&one.source_i, &code).unwrap().0;
        let from_ii = nets.generator.forward(&one.source_ii, &code).unwrap().0;
        let source = if step % 2 == 0 { &one.source_i } else { &one.source_ii };
        let rec = nets.generator.forward(source, &code_rec).unwrap().0;
        let mapped = nets.mapping.forward(&one.z, &head).unwrap().0;

        let real_window = one.frame.row(0, item.adv_lead.index());
        let real = TensorBuf::from_vec([1, 1, window], real_window.to_vec()).unwrap();
        let lr = nets.discriminator.forward(&real, &head).unwrap().0.values[0];
        let lf = nets.discriminator.forward(&fake, &head).unwrap().0.values[0];
        sums[0] += -clamp_prob(sigmoid(lr)).ln() - clamp_prob(1.0 - sigmoid(lf)).ln();
        sums[1] += -clamp_prob(sigmoid(lf)).ln();

        let target = one.frame.row(0, item.rec_lead.index());
        let mut se = 0.0;
        for t in 0..window {
            se += (rec.values[t] - target[t]).powi(2);
        }
        sums[2] += se / window as f64;

        let mut ce = 0.0;
        for t in 0..window {
            ce += (fake.values[t] - from_ii.values[t]).powi(2);
        }
        sums[3] += ce / window as f64;

        let mut ae = 0.0;
        for k in 0..code.values.len() {
            ae += (mapped.values[k] - code.values[k]).abs();
        }
        sums[4] += ae / code.values.len() as f64;
    }
    sums.map(|s| s / items.len() as f64)
}
