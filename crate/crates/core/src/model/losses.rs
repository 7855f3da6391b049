//! The four training objectives, as values and as gradients.
//!
//! The tensor-level helpers (`mse`, `mae`, `log_sigmoid_*`) return the value
//! together with the gradient with respect to their first argument. The
//! network-level functions (`loss_adv`, `loss_rec`, `loss_con`, `loss_sty`)
//! evaluate a whole term from the networks and a batch, forward only.

use serde::{Deserialize, Serialize};

use crate::nn::{Scalar, TensorBuf, PROB_CLAMP};

use super::{GanBatch, Lambdas, ModelError, NetworkBundle};

/// Per-step loss values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub d_loss: f64,
    pub g_adv: f64,
    pub l_rec: f64,
    pub l_con: f64,
    pub l_sty: f64,
}

impl LossTerms {
    /// Weighted generator-side objective.
    pub fn generator_total(&self, l: &Lambdas) -> f64 {
        l.adv * self.g_adv + l.rec * self.l_rec + l.con * self.l_con + l.sty * self.l_sty
    }

    pub fn is_finite(&self) -> bool {
        [self.d_loss, self.g_adv, self.l_rec, self.l_con, self.l_sty]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn check_same(a: &TensorBuf<impl Scalar>, b: &TensorBuf<impl Scalar>) -> Result<(), ModelError> {
    if a.shape != b.shape {
        return Err(crate::nn::NnError::ShapeMismatch(format!("{:?} vs {:?}", a.shape, b.shape)).into());
    }
    Ok(())
}

/// Mean squared error and its gradient with respect to `a`.
pub fn mse<T: Scalar>(a: &TensorBuf<T>, b: &TensorBuf<T>) -> Result<(f64, TensorBuf<T>), ModelError> {
    check_same(a, b)?;
    let n = a.values.len().max(1) as f64;
    let mut grad = TensorBuf::zeros(a.shape);
    let mut sum = 0.0;
    for ((g, &x), &y) in grad.values.iter_mut().zip(&a.values).zip(&b.values) {
        let d = (x - y).to_f64().unwrap();
        sum += d * d;
        *g = T::lit(2.0 * d / n);
    }
    Ok((sum / n, grad))
}

/// Mean absolute error and its (sub)gradient with respect to `a`; zero where
/// the arguments coincide.
pub fn mae<T: Scalar>(a: &TensorBuf<T>, b: &TensorBuf<T>) -> Result<(f64, TensorBuf<T>), ModelError> {
    check_same(a, b)?;
    let n = a.values.len().max(1) as f64;
    let mut grad = TensorBuf::zeros(a.shape);
    let mut sum = 0.0;
    for ((g, &x), &y) in grad.values.iter_mut().zip(&a.values).zip(&b.values) {
        let d = (x - y).to_f64().unwrap();
        sum += d.abs();
        *g = T::lit(if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        });
    }
    Ok((sum / n, grad))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_prob_mean<T: Scalar>(logits: &TensorBuf<T>, real: bool) -> (f64, TensorBuf<T>) {
    let n = logits.values.len().max(1) as f64;
    let mut grad = TensorBuf::zeros(logits.shape);
    let mut sum = 0.0;
    for (g, &l) in grad.values.iter_mut().zip(&logits.values) {
        let l = l.to_f64().unwrap();
        // 1 - sigmoid(l) is taken as sigmoid(-l) to avoid cancellation.
        let (p, q) = if real { (sigmoid(l), sigmoid(-l)) } else { (sigmoid(-l), sigmoid(l)) };
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum += -pc.ln();
        // d(-ln s)/dl = -(1 - s); d(-ln(1 - s))/dl = s
        let d = if pc != p {
            0.0
        } else if real {
            -q
        } else {
            q
        };
        *g = T::lit(d / n);
    }
    (sum / n, grad)
}

/// `-mean ln sigmoid(l)`, with the probability clamped.
pub fn log_sigmoid_real<T: Scalar>(logits: &TensorBuf<T>) -> (f64, TensorBuf<T>) {
    log_prob_mean(logits, true)
}

/// `-mean ln(1 - sigmoid(l))`, with the probability clamped.
pub fn log_sigmoid_fake<T: Scalar>(logits: &TensorBuf<T>) -> (f64, TensorBuf<T>) {
    log_prob_mean(logits, false)
}

/// Discriminator loss and non-saturating generator loss, both on the
/// adversarial lead of each sample with the generator fed Lead I.
pub fn loss_adv<T: Scalar>(nets: &NetworkBundle<T>, batch: &GanBatch<T>) -> Result<(f64, f64), ModelError> {
    let heads = batch.adv_heads();
    let feats = nets.style.encode_features(&batch.style_input)?;
    let code = nets.style.head(&feats, &heads)?;
    let fake = nets.generator.forward(&batch.source_i, &code)?.0;
    let real = batch.frame_leads(&batch.adv_leads);
    let real_logits = nets.discriminator.forward(&real, &heads)?.0;
    let fake_logits = nets.discriminator.forward(&fake, &heads)?.0;
    let d = log_sigmoid_real(&real_logits).0 + log_sigmoid_fake(&fake_logits).0;
    let g = log_sigmoid_real(&fake_logits).0;
    Ok((d, g))
}

/// Reconstruction of the target lead from Lead I (even `step`) or Lead II (odd).
pub fn loss_rec<T: Scalar>(nets: &NetworkBundle<T>, batch: &GanBatch<T>, step: u64) -> Result<f64, ModelError> {
    let code = nets.style.forward(&batch.style_input, &batch.rec_heads())?;
    let out = nets.generator.forward(batch.rec_source(step), &code)?.0;
    Ok(mse(&out, &batch.frame_leads(&batch.rec_leads))?.0)
}

/// Agreement between the lead generated from Lead I and from Lead II.
pub fn loss_con<T: Scalar>(nets: &NetworkBundle<T>, batch: &GanBatch<T>) -> Result<f64, ModelError> {
    let code = nets.style.forward(&batch.style_input, &batch.adv_heads())?;
    let a = nets.generator.forward(&batch.source_i, &code)?.0;
    let b = nets.generator.forward(&batch.source_ii, &code)?.0;
    Ok(mse(&a, &b)?.0)
}

/// Distance between the mapped latent code and the encoded style code.
pub fn loss_sty<T: Scalar>(nets: &NetworkBundle<T>, batch: &GanBatch<T>) -> Result<f64, ModelError> {
    let heads = batch.adv_heads();
    let mapped = nets.mapping.forward(&batch.z, &heads)?.0;
    let encoded = nets.style.forward(&batch.style_input, &heads)?;
    Ok(mae(&mapped, &encoded)?.0)
}

/// All four terms, forward only. `d_loss` uses the current discriminator.
pub fn all_terms<T: Scalar>(nets: &NetworkBundle<T>, batch: &GanBatch<T>, step: u64) -> Result<LossTerms, ModelError> {
    let (d_loss, g_adv) = loss_adv(nets, batch)?;
    Ok(LossTerms {
        d_loss,
        g_adv,
        l_rec: loss_rec(nets, batch, step)?,
        l_con: loss_con(nets, batch)?,
        l_sty: loss_sty(nets, batch)?,
    })
}
