use rand::Rng;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, BlockCache, Conv1d, Linear, Module, NnError, NormMode, Param, Resample,
    ResidualBlock, Scalar, TensorBuf,
};

/// Blocks per stage.
pub const STAGES: [usize; 4] = [2, 2, 2, 2];

/// 1-D ResNet18: stride-2 stem, four stages of two residual blocks with
/// channel doubling, global average pooling and one linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNet1d<T> {
    pub stem: Conv1d<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub fc: Linear<T>,
}

pub struct ResNetCache<T> {
    input: TensorBuf<T>,
    blocks: Vec<BlockCache<T>>,
    pre_pool_len: usize,
    pooled: TensorBuf<T>,
}

impl<T: Scalar> ResNet1d<T> {
    pub fn new(cin: usize, base_width: usize, classes: usize, rng: &mut impl Rng) -> Self {
        let stem = Conv1d::same(cin, base_width, 7, 2, rng);
        let mut blocks = Vec::new();
        let mut c = base_width;
        for (s, &n) in STAGES.iter().enumerate() {
            let w = base_width << s;
            for k in 0..n {
                let resample = if s > 0 && k == 0 { Resample::Down } else { Resample::None };
                blocks.push(ResidualBlock::new(c, w, 3, NormMode::Plain, resample, rng));
                c = w;
            }
        }
        let fc = Linear::new(c, classes, rng);
        ResNet1d { stem, blocks, fc }
    }

    /// Logits shaped `[B, classes, 1]`.
    pub fn forward(&self, x: &TensorBuf<T>) -> Result<(TensorBuf<T>, ResNetCache<T>), NnError> {
        let mut h = self.stem.forward(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&h, None)?;
            caches.push(c);
            h = y;
        }
        let pooled = global_avg_pool(&h);
        let logits = self.fc.forward(&pooled)?;
        Ok((
            logits,
            ResNetCache {
                input: x.clone(),
                blocks: caches,
                pre_pool_len: h.length(),
                pooled,
            },
        ))
    }

    pub fn backward(&mut self, cache: &ResNetCache<T>, dlogits: &TensorBuf<T>) {
        let dp = self.fc.backward(&cache.pooled, dlogits);
        let mut g = global_avg_pool_backward(&dp, cache.pre_pool_len);
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, None, &g).0;
        }
        self.stem.backward(&cache.input, &g);
    }
}

impl<T: Scalar> Module<T> for ResNet1d<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.stem.params(&format!("{prefix}.stem"));
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(b.params(&format!("{prefix}.block{i}")));
        }
        out.extend(self.fc.params(&format!("{prefix}.fc")));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.stem.params_mut();
        for b in &mut self.blocks {
            out.extend(b.params_mut());
        }
        out.extend(self.fc.params_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net: ResNet1d<f32> = ResNet1d::new(12, 8, 2, &mut rng);
        assert_eq!(net.blocks.len(), 8);
        assert_eq!(net.blocks.last().unwrap().out_channels(), 64);
        let x = TensorBuf::zeros([3, 12, 128]);
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.shape, [3, 2, 1]);
    }
}
