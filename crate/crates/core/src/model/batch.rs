use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{Scalar, TensorBuf};
use crate::signal::{extract_async_pair, normalize_window, seconds_to_samples, EcgRecord, LeadId, WindowStats};

use super::{GanMode, ModelError};

/// One training example before assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub record: usize,
    pub t0: f64,
    /// Lead judged by the discriminator and used by the consistency and style terms.
    pub adv_lead: LeadId,
    /// Reconstruction target.
    pub rec_lead: LeadId,
    pub z: Vec<f32>,
}

/// A training or validation batch.
///
/// `frame` holds all twelve synchronous leads of each window mapped into the
/// z-score frame of that window's Lead I, which is the frame generator
/// outputs live in. Inputs are normalized on their own.
#[derive(Debug, Clone)]
pub struct GanBatch<T> {
    pub mode: GanMode,
    /// Style-network input, `[B, 2, L]` (async Lead I, Lead II) or `[B, 1, L]`.
    pub style_input: TensorBuf<T>,
    /// Lead I window, `[B, 1, L]`.
    pub source_i: TensorBuf<T>,
    /// Lead II window synchronous with `source_i`, `[B, 1, L]`.
    pub source_ii: TensorBuf<T>,
    /// `[B, 12, L]`
    pub frame: TensorBuf<T>,
    pub adv_leads: Vec<LeadId>,
    pub rec_leads: Vec<LeadId>,
    /// `[B, z_dim, 1]`
    pub z: TensorBuf<T>,
}

impl<T: Scalar> GanBatch<T> {
    pub fn len(&self) -> usize {
        self.adv_leads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adv_leads.is_empty()
    }

    pub fn adv_heads(&self) -> Vec<usize> {
        self.adv_leads.iter().map(|&l| self.mode.head_of(l).unwrap()).collect()
    }

    pub fn rec_heads(&self) -> Vec<usize> {
        self.rec_leads.iter().map(|&l| self.mode.head_of(l).unwrap()).collect()
    }

    /// `[B, 1, L]` slice of `frame`, one lead per sample.
    pub fn frame_leads(&self, leads: &[LeadId]) -> TensorBuf<T> {
        let l = self.frame.length();
        let mut out = TensorBuf::zeros([leads.len(), 1, l]);
        for (b, lead) in leads.iter().enumerate() {
            out.sample_mut(b).copy_from_slice(self.frame.row(b, lead.index()));
        }
        out
    }

    /// Source lead for the reconstruction term: Lead I on even steps, Lead II on odd.
    pub fn rec_source(&self, step: u64) -> &TensorBuf<T> {
        if step % 2 == 0 {
            &self.source_i
        } else {
            &self.source_ii
        }
    }
}

/// Largest valid Lead I start (in samples) for a record.
fn max_start(record: &EcgRecord, window_len: usize, delay: f64) -> Option<usize> {
    let lag = seconds_to_samples(delay, record.sampling_rate);
    record.len().checked_sub(window_len + lag)
}

pub fn build_batch<T: Scalar>(
    records: &[EcgRecord],
    items: &[BatchItem],
    mode: GanMode,
    window_len: usize,
    delay: f64,
) -> Result<GanBatch<T>, ModelError> {
    let b = items.len();
    let z_dim = items.first().map_or(0, |it| it.z.len());
    let cin = mode.style_channels();
    let mut style = Vec::with_capacity(b * cin * window_len);
    let mut src_i = Vec::with_capacity(b * window_len);
    let mut src_ii = Vec::with_capacity(b * window_len);
    let mut frame = Vec::with_capacity(b * 12 * window_len);
    let mut z = Vec::with_capacity(b * z_dim);
    for it in items {
        for lead in [it.adv_lead, it.rec_lead] {
            mode.head_of(lead)?;
        }
        if it.z.len() != z_dim {
            return Err(ModelError::InvalidConfig("latent vectors differ in length".into()));
        }
        let rec = &records[it.record];
        let pair = extract_async_pair(rec, it.t0, delay, window_len)?;
        let start = pair.start_i();
        let norm_i = normalize_window(&pair.lead_i);
        style.extend_from_slice(&norm_i);
        if mode == GanMode::T2t {
            style.extend(normalize_window(&pair.lead_ii));
        }
        src_i.extend_from_slice(&norm_i);
        src_ii.extend(normalize_window(rec.window(LeadId::II, start, window_len)?));
        let stats = WindowStats::of(&pair.lead_i);
        for lead in LeadId::ALL {
            frame.extend(stats.apply(rec.window(lead, start, window_len)?));
        }
        z.extend_from_slice(&it.z);
    }
    Ok(GanBatch {
        mode,
        style_input: TensorBuf::from_f32([b, cin, window_len], &style)?,
        source_i: TensorBuf::from_f32([b, 1, window_len], &src_i)?,
        source_ii: TensorBuf::from_f32([b, 1, window_len], &src_ii)?,
        frame: TensorBuf::from_f32([b, 12, window_len], &frame)?,
        adv_leads: items.iter().map(|it| it.adv_lead).collect(),
        rec_leads: items.iter().map(|it| it.rec_lead).collect(),
        z: TensorBuf::from_f32([b, z_dim, 1], &z)?,
    })
}

/// Draw `batch` random examples: record, window start, the two target leads
/// and a standard-normal latent.
pub fn draw_items(
    records: &[EcgRecord],
    mode: GanMode,
    window_len: usize,
    delay: f64,
    z_dim: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<Vec<BatchItem>, ModelError> {
    let usable: Vec<(usize, usize)> = records
        .iter()
        .enumerate()
        .filter_map(|(k, r)| max_start(r, window_len, delay).map(|m| (k, m)))
        .collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let targets = mode.generated_leads();
    let mut items = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (record, max) = usable[rng.random_range(0..usable.len())];
        let start = rng.random_range(0..=max);
        let adv_lead = targets[rng.random_range(0..targets.len())];
        let rec_lead = targets[rng.random_range(0..targets.len())];
        let z = (0..z_dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                v as f32
            })
            .collect();
        items.push(BatchItem {
            record,
            t0: start as f64 / records[record].sampling_rate as f64,
            adv_lead,
            rec_lead,
            z,
        });
    }
    Ok(items)
}

pub fn sample_batch<T: Scalar>(
    records: &[EcgRecord],
    mode: GanMode,
    window_len: usize,
    delay: f64,
    z_dim: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> Result<GanBatch<T>, ModelError> {
    let items = draw_items(records, mode, window_len, delay, z_dim, batch, rng)?;
    build_batch(records, &items, mode, window_len, delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_record, BeatTemplate};
    use crate::Label;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records() -> Vec<EcgRecord> {
        (0..3)
            .map(|k| generate_record(&BeatTemplate::default(), Label::Normal, 70.0, 6.0, 250, k, 512).unwrap())
            .collect()
    }

    #[test]
    fn shapes_and_frame() {
        let recs = records();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b: GanBatch<f64> = sample_batch(&recs, GanMode::T2t, 256, 0.5, 8, 4, &mut rng).unwrap();
        assert_eq!(b.style_input.shape, [4, 2, 256]);
        assert_eq!(b.frame.shape, [4, 12, 256]);
        assert_eq!(b.z.shape, [4, 8, 1]);
        // Lead I in its own frame is the normalized source.
        for s in 0..4 {
            for (a, c) in b.frame.row(s, 0).iter().zip(b.source_i.sample(s)) {
                assert!((a - c).abs() < 1e-6);
            }
            assert!(LeadId::FROM_TWO.contains(&b.adv_leads[s]));
        }
    }

    #[test]
    fn single_lead_mode_uses_one_channel() {
        let recs = records();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b: GanBatch<f32> = sample_batch(&recs, GanMode::S2e, 256, 0.5, 4, 3, &mut rng).unwrap();
        assert_eq!(b.style_input.shape, [3, 1, 256]);
        assert_eq!(b.style_input.values, b.source_i.values);
    }

    #[test]
    fn too_short_records_are_rejected() {
        let recs = records();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = sample_batch::<f32>(&recs, GanMode::T2t, 4096, 0.5, 4, 2, &mut rng);
        assert!(matches!(r, Err(ModelError::EmptyDataset)));
    }
}
