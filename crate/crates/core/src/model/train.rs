//! Alternating discriminator / generator-side updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{adam_step, Module, Scalar, TensorBuf};
use crate::signal::EcgRecord;

use super::batch::{build_batch, draw_items};
use super::losses::{log_sigmoid_fake, log_sigmoid_real, mae, mse, LossTerms};
use super::nets::{GeneratorCache, MappingCache, StyleTrunkCache};
use super::{GanBatch, Lambdas, ModelError, NetworkBundle, TrainConfig};

const BATCH_STREAM_SALT: u64 = 0x6261_7463_6865_7321;
const VALIDATION_SALT: u64 = 0x7661_6c69_6461_7465;

/// Generator-side forward pass for one batch, kept for the backward pass.
pub struct GeneratorForward<T> {
    feats: StyleTrunkCache<T>,
    adv_heads: Vec<usize>,
    rec_heads: Vec<usize>,
    code_adv: TensorBuf<T>,
    rec: (TensorBuf<T>, GeneratorCache<T>),
    from_i: (TensorBuf<T>, GeneratorCache<T>),
    from_ii: (TensorBuf<T>, GeneratorCache<T>),
    mapped: (TensorBuf<T>, MappingCache<T>),
}

impl<T: Scalar> GeneratorForward<T> {
    /// Lead generated from Lead I with the adversarial lead's code.
    pub fn fake(&self) -> &TensorBuf<T> {
        &self.from_i.0
    }
}

pub fn generator_forward<T: Scalar>(
    nets: &NetworkBundle<T>,
    batch: &GanBatch<T>,
    step: u64,
) -> Result<GeneratorForward<T>, ModelError> {
    let adv_heads = batch.adv_heads();
    let rec_heads = batch.rec_heads();
    let feats = nets.style.encode_features(&batch.style_input)?;
    let code_adv = nets.style.head(&feats, &adv_heads)?;
    let code_rec = nets.style.head(&feats, &rec_heads)?;
    let rec = nets.generator.forward(batch.rec_source(step), &code_rec)?;
    let from_i = nets.generator.forward(&batch.source_i, &code_adv)?;
    let from_ii = nets.generator.forward(&batch.source_ii, &code_adv)?;
    let mapped = nets.mapping.forward(&batch.z, &adv_heads)?;
    Ok(GeneratorForward {
        feats,
        adv_heads,
        rec_heads,
        code_adv,
        rec,
        from_i,
        from_ii,
        mapped,
    })
}

/// Accumulate discriminator gradients of the discriminator loss on real
/// windows of the adversarial lead versus `fake`. Returns the loss.
pub fn discriminator_grads<T: Scalar>(
    nets: &mut NetworkBundle<T>,
    batch: &GanBatch<T>,
    fake: &TensorBuf<T>,
) -> Result<f64, ModelError> {
    let heads = batch.adv_heads();
    let real = batch.frame_leads(&batch.adv_leads);
    let (real_logits, real_cache) = nets.discriminator.forward(&real, &heads)?;
    let (fake_logits, fake_cache) = nets.discriminator.forward(fake, &heads)?;
    let (lr, dr) = log_sigmoid_real(&real_logits);
    let (lf, df) = log_sigmoid_fake(&fake_logits);
    nets.discriminator.backward(&real_cache, &dr);
    nets.discriminator.backward(&fake_cache, &df);
    Ok(lr + lf)
}

/// Accumulate style, mapping and generator gradients of the weighted
/// generator-side objective. Discriminator gradients picked up on the way
/// are left in place; callers clear them.
pub fn generator_grads<T: Scalar>(
    nets: &mut NetworkBundle<T>,
    batch: &GanBatch<T>,
    fwd: &GeneratorForward<T>,
    lambdas: &Lambdas,
) -> Result<LossTerms, ModelError> {
    let k = |v: f64| T::lit(v);

    let (fake_logits, d_cache) = nets.discriminator.forward(fwd.fake(), &fwd.adv_heads)?;
    let (g_adv, dlogits) = log_sigmoid_real(&fake_logits);
    let mut d_from_i = nets.discriminator.backward(&d_cache, &dlogits.scaled(k(lambdas.adv)));

    let target = batch.frame_leads(&batch.rec_leads);
    let (l_rec, d_rec) = mse(&fwd.rec.0, &target)?;
    let (l_con, d_con) = mse(&fwd.from_i.0, &fwd.from_ii.0)?;
    let d_con = d_con.scaled(k(lambdas.con));
    d_from_i.add_assign(&d_con);
    let d_from_ii = d_con.scaled(k(-1.0));
    let (l_sty, d_mapped) = mae(&fwd.mapped.0, &fwd.code_adv)?;
    let d_mapped = d_mapped.scaled(k(lambdas.sty));

    let d_code_rec = nets.generator.backward(&fwd.rec.1, &d_rec.scaled(k(lambdas.rec)));
    let mut d_code_adv = nets.generator.backward(&fwd.from_i.1, &d_from_i);
    d_code_adv.add_assign(&nets.generator.backward(&fwd.from_ii.1, &d_from_ii));
    d_code_adv.add_assign(&d_mapped.clone().scaled(k(-1.0)));
    nets.mapping.backward(&fwd.mapped.1, &d_mapped);

    let mut d_feats = nets.style.head_backward(&fwd.feats, &fwd.rec_heads, &d_code_rec);
    d_feats.add_assign(&nets.style.head_backward(&fwd.feats, &fwd.adv_heads, &d_code_adv));
    nets.style.trunk_backward(&fwd.feats, &d_feats);

    Ok(LossTerms {
        d_loss: 0.0,
        g_adv,
        l_rec,
        l_con,
        l_sty,
    })
}

fn non_finite(step: u64, terms: &LossTerms) -> ModelError {
    ModelError::NonFiniteLoss {
        step,
        terms: format!("{terms:?}"),
    }
}

/// One discriminator update followed by one generator-side update.
/// `step` is the zero-based global step index.
pub fn train_step<T: Scalar>(
    nets: &mut NetworkBundle<T>,
    batch: &GanBatch<T>,
    step: u64,
    lambdas: &Lambdas,
) -> Result<LossTerms, ModelError> {
    // The discriminator step leaves S, M and G untouched, so one forward pass
    // serves both updates.
    let fwd = generator_forward(nets, batch, step)?;

    nets.discriminator.zero_grad();
    let d_loss = discriminator_grads(nets, batch, fwd.fake())?;
    if !d_loss.is_finite() {
        return Err(non_finite(step, &LossTerms { d_loss, ..Default::default() }));
    }
    adam_step(&mut nets.discriminator.params_mut(), &mut nets.optim.discriminator)?;

    nets.zero_grad();
    let mut terms = generator_grads(nets, batch, &fwd, lambdas)?;
    terms.d_loss = d_loss;
    if !terms.is_finite() {
        return Err(non_finite(step, &terms));
    }
    adam_step(&mut nets.style.params_mut(), &mut nets.optim.style)?;
    adam_step(&mut nets.mapping.params_mut(), &mut nets.optim.mapping)?;
    adam_step(&mut nets.generator.params_mut(), &mut nets.optim.generator)?;
    nets.zero_grad();
    nets.steps_trained = step + 1;
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub l_rec: f64,
    pub l_con: f64,
    pub l_sty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub step: u64,
    pub l_rec: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    pub validation: Vec<ValidationRow>,
    pub best_step: Option<u64>,
}

impl TrainHistory {
    /// Mean validation reconstruction loss over evaluations at or before `step`.
    pub fn early_val_rec(&self, step: u64) -> Option<f64> {
        let early: Vec<f64> = self
            .validation
            .iter()
            .filter(|r| r.step <= step)
            .map(|r| r.l_rec)
            .collect();
        (!early.is_empty()).then(|| early.iter().sum::<f64>() / early.len() as f64)
    }
}

/// Final and selected networks with the loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Networks with the lowest validation generator-side total, or the last
    /// networks when there is no validation split.
    pub best: NetworkBundle<T>,
    pub last: NetworkBundle<T>,
    pub history: TrainHistory,
}

/// Validation reconstruction loss (mean over both source leads) and
/// generator-side total.
pub fn evaluate<T: Scalar>(
    nets: &NetworkBundle<T>,
    batch: &GanBatch<T>,
    lambdas: &Lambdas,
) -> Result<(f64, f64), ModelError> {
    let mut rec = 0.0;
    let mut total = 0.0;
    for parity in 0..2 {
        let terms = super::losses::all_terms(nets, batch, parity)?;
        rec += terms.l_rec / 2.0;
        total += terms.generator_total(lambdas) / 2.0;
    }
    Ok((rec, total))
}

fn should_evaluate(cfg: &TrainConfig, done: u64, last: u64) -> bool {
    done == last
        || done % cfg.eval_every == 0
        || (done <= cfg.early_steps && done % cfg.early_eval_every == 0)
}

/// Train from fresh networks, or continue `resume` (its step counter and
/// optimizer state carry on; its architecture wins over `cfg.arch`).
///
/// Batches depend only on the seed and the global step index, so a run split
/// into several resumed pieces sees the same batches as one long run.
pub fn train<T: Scalar>(
    train_set: &[EcgRecord],
    val_set: &[EcgRecord],
    cfg: &TrainConfig,
    resume: Option<NetworkBundle<T>>,
) -> Result<TrainOutcome<T>, ModelError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut nets = match resume {
        Some(n) => {
            n.require_mode(cfg.mode)?;
            n
        }
        None => NetworkBundle::new(cfg)?,
    };
    let lambdas = cfg.lambdas();
    let window = nets.arch.window_len;
    let z_dim = nets.arch.z_dim;

    let val_batch: Option<GanBatch<T>> = if val_set.is_empty() {
        None
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ VALIDATION_SALT);
        let items = draw_items(val_set, cfg.mode, window, cfg.delay, z_dim, cfg.val_batch, &mut rng)?;
        Some(build_batch(val_set, &items, cfg.mode, window, cfg.delay)?)
    };

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, NetworkBundle<T>)> = None;
    let first = nets.steps_trained;
    let last = first + cfg.steps;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ BATCH_STREAM_SALT);
    for step in first..last {
        rng.set_stream(step);
        rng.set_word_pos(0);
        let items = draw_items(train_set, cfg.mode, window, cfg.delay, z_dim, cfg.batch_size, &mut rng)?;
        let batch = build_batch(train_set, &items, cfg.mode, window, cfg.delay)?;
        let t = train_step(&mut nets, &batch, step, &lambdas)?;
        let done = step + 1;
        history.rows.push(HistoryRow {
            step: done,
            d_loss: t.d_loss,
            g_adv: t.g_adv,
            l_rec: t.l_rec,
            l_con: t.l_con,
            l_sty: t.l_sty,
        });
        if let Some(vb) = &val_batch {
            if should_evaluate(cfg, done, last) {
                let (l_rec, total) = evaluate(&nets, vb, &lambdas)?;
                if !total.is_finite() {
                    return Err(ModelError::NonFiniteLoss {
                        step,
                        terms: format!("validation total {total}"),
                    });
                }
                history.validation.push(ValidationRow { step: done, l_rec, total });
                if best.as_ref().is_none_or(|(b, _)| total < *b) {
                    best = Some((total, nets.clone()));
                    history.best_step = Some(done);
                }
            }
        }
    }
    let best = best.map_or_else(|| nets.clone(), |(_, b)| b);
    Ok(TrainOutcome {
        best,
        last: nets,
        history,
    })
}
