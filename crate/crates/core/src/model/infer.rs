use std::collections::BTreeMap;

use crate::nn::{Scalar, TensorBuf};
use crate::signal::{normalize_window, AsyncLeadPair, EcgRecord, Label, LeadId, WindowStats};

use super::{GanMode, ModelError, NetworkBundle, StyleCode, STYLE_DIM};

fn check_len(len: usize, window: usize) -> Result<(), ModelError> {
    if len != window {
        return Err(crate::nn::NnError::ShapeMismatch(format!("window of {len} samples, model expects {window}")).into());
    }
    Ok(())
}

fn style_input<T: Scalar>(pair: &AsyncLeadPair, mode: GanMode, window: usize) -> Result<TensorBuf<T>, ModelError> {
    check_len(pair.lead_i.len(), window)?;
    let mut v = normalize_window(&pair.lead_i);
    if mode == GanMode::T2t {
        check_len(pair.lead_ii.len(), window)?;
        v.extend(normalize_window(&pair.lead_ii));
    }
    Ok(TensorBuf::from_f32([1, mode.style_channels(), window], &v)?)
}

fn to_code<T: Scalar>(t: &TensorBuf<T>, target: LeadId) -> StyleCode {
    StyleCode {
        values: t.to_f32(),
        target,
    }
}

/// Style code for `target` from an input pair. Each window is z-scored
/// before encoding; in single-lead mode only Lead I is read.
pub fn style_encode<T: Scalar>(
    pair: &AsyncLeadPair,
    target: LeadId,
    nets: &NetworkBundle<T>,
) -> Result<StyleCode, ModelError> {
    let head = nets.head_of(target)?;
    let x = style_input(pair, nets.mode, nets.arch.window_len)?;
    Ok(to_code(&nets.style.forward(&x, &[head])?, target))
}

/// Style code for `target` from a latent vector.
pub fn map_latent<T: Scalar>(z: &[f32], target: LeadId, nets: &NetworkBundle<T>) -> Result<StyleCode, ModelError> {
    let head = nets.head_of(target)?;
    check_len(z.len(), nets.arch.z_dim)?;
    let zt = TensorBuf::from_f32([1, z.len(), 1], z)?;
    Ok(to_code(&nets.mapping.forward(&zt, &[head])?.0, target))
}

/// Generator output for one source window (already in the model's z-score frame).
pub fn generate_lead<T: Scalar>(
    source: &[f32],
    code: &StyleCode,
    nets: &NetworkBundle<T>,
) -> Result<Vec<f32>, ModelError> {
    check_len(source.len(), nets.arch.window_len)?;
    check_len(code.values.len(), STYLE_DIM)?;
    let x = TensorBuf::from_f32([1, 1, source.len()], source)?;
    let c = TensorBuf::from_f32([1, STYLE_DIM, 1], &code.values)?;
    Ok(nets.generator.forward(&x, &c)?.0.to_f32())
}

/// Generate every lead of the mode's set from Lead I in one batched pass and
/// map them back to mV with the Lead I window statistics.
fn generate_all<T: Scalar>(
    pair: &AsyncLeadPair,
    nets: &NetworkBundle<T>,
) -> Result<BTreeMap<LeadId, Vec<f32>>, ModelError> {
    if nets.steps_trained == 0 {
        return Err(ModelError::UntrainedModel);
    }
    let window = nets.arch.window_len;
    let targets = nets.mode.generated_leads();
    let n = targets.len();
    let x = style_input::<T>(pair, nets.mode, window)?;
    let feats = nets.style.encode_features(&x)?;
    let repeated = TensorBuf::from_vec(
        [n, feats.features.channels(), 1],
        (0..n).flat_map(|_| feats.features.values.iter().copied()).collect(),
    )?;
    let heads: Vec<usize> = (0..n).collect();
    let codes = nets.style.heads.forward(&repeated, &heads)?;

    let stats = WindowStats::of(&pair.lead_i);
    let src = stats.apply(&pair.lead_i);
    let sources = TensorBuf::from_vec(
        [n, 1, window],
        (0..n).flat_map(|_| src.iter().map(|&v| T::lit(v as f64))).collect(),
    )?;
    let out = nets.generator.forward(&sources, &codes)?.0;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(k, &lead)| (lead, stats.invert(&TensorBuf::sample(&out, k).iter().map(|v| v.to_f32().unwrap()).collect::<Vec<_>>())))
        .collect())
}

fn assemble(pair: &AsyncLeadPair, mut leads: BTreeMap<LeadId, Vec<f32>>, keep_ii: bool) -> Result<EcgRecord, ModelError> {
    leads.insert(LeadId::I, pair.lead_i.clone());
    if keep_ii {
        leads.insert(LeadId::II, pair.lead_ii.clone());
    }
    Ok(EcgRecord::new("synthesized", pair.sampling_rate, Label::Normal, leads)?)
}

/// Twelve-lead record: the input Lead I and Lead II windows unchanged plus
/// ten generated leads. The label is a placeholder for the caller to set.
pub fn synthesize_twelve<T: Scalar>(pair: &AsyncLeadPair, nets: &NetworkBundle<T>) -> Result<EcgRecord, ModelError> {
    nets.require_mode(GanMode::T2t)?;
    let leads = generate_all(pair, nets)?;
    assemble(pair, leads, true)
}

/// Twelve-lead record from Lead I alone: the input window unchanged plus
/// eleven generated leads.
pub fn synthesize_from_one<T: Scalar>(lead_i: &[f32], fs: u32, nets: &NetworkBundle<T>) -> Result<EcgRecord, ModelError> {
    nets.require_mode(GanMode::S2e)?;
    let pair = AsyncLeadPair {
        lead_i: lead_i.to_vec(),
        lead_ii: Vec::new(),
        window_len: lead_i.len(),
        delay: 0.0,
        t0: 0.0,
        sampling_rate: fs,
    };
    let leads = generate_all(&pair, nets)?;
    assemble(&pair, leads, false)
}
