//! Style (S), mapping (M), generator (G) and discriminator (D) networks.

use rand::Rng;

use crate::nn::{
    global_avg_pool, global_avg_pool_backward, leaky_relu, leaky_relu_backward, BlockCache, Conv1d, Linear,
    Module, MultiHeadLinear, NnError, NormMode, Param, Resample, ResidualBlock, Scalar, StyleAffine, TensorBuf,
};

use super::{GanArch, STYLE_DIM};

fn prefixed<'a, T: Scalar>(out: &mut Vec<(String, &'a Param<T>)>, prefix: &str, m: &'a impl Module<T>) {
    out.extend(m.params(prefix));
}

/// Stem convolution followed by downsampling plain residual blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DownTrunk<T> {
    pub stem: Conv1d<T>,
    pub blocks: Vec<ResidualBlock<T>>,
}

#[derive(Debug, Clone)]
pub struct TrunkCache<T> {
    input: TensorBuf<T>,
    block_inputs: Vec<BlockCache<T>>,
}

impl<T: Scalar> DownTrunk<T> {
    pub fn new(cin: usize, arch: &GanArch, rng: &mut impl Rng) -> Self {
        let stem = Conv1d::same(cin, arch.stem_width, arch.stem_kernel, 1, rng);
        let mut blocks = Vec::new();
        let mut c = arch.stem_width;
        for &w in &arch.widths {
            blocks.push(ResidualBlock::new(c, w, arch.kernel, NormMode::Plain, Resample::Down, rng));
            c = w;
        }
        DownTrunk { stem, blocks }
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(self.stem.cout, |b| b.out_channels())
    }

    pub fn forward(&self, x: &TensorBuf<T>) -> Result<(TensorBuf<T>, TrunkCache<T>), NnError> {
        let mut h = self.stem.forward(x)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, c) = b.forward(&h, None)?;
            caches.push(c);
            h = y;
        }
        Ok((
            h,
            TrunkCache {
                input: x.clone(),
                block_inputs: caches,
            },
        ))
    }

    pub fn backward(&mut self, cache: &TrunkCache<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
        let mut g = dy.clone();
        for (b, c) in self.blocks.iter_mut().zip(&cache.block_inputs).rev() {
            g = b.backward(c, None, &g).0;
        }
        self.stem.backward(&cache.input, &g)
    }
}

impl<T: Scalar> Module<T> for DownTrunk<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        prefixed(&mut out, &format!("{prefix}.stem"), &self.stem);
        for (i, b) in self.blocks.iter().enumerate() {
            prefixed(&mut out, &format!("{prefix}.down{i}"), b);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.stem.params_mut();
        for b in &mut self.blocks {
            out.extend(b.params_mut());
        }
        out
    }
}

/// Style encoder: shared trunk over the input lead(s), one 512-d head per
/// generated lead.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleNet<T> {
    pub trunk: DownTrunk<T>,
    pub heads: MultiHeadLinear<T>,
}

#[derive(Debug, Clone)]
pub struct StyleTrunkCache<T> {
    trunk: TrunkCache<T>,
    pre_pool: TensorBuf<T>,
    pub features: TensorBuf<T>,
}

impl<T: Scalar> StyleNet<T> {
    pub fn new(cin: usize, n_heads: usize, arch: &GanArch, rng: &mut impl Rng) -> Self {
        let trunk = DownTrunk::new(cin, arch, rng);
        let heads = MultiHeadLinear::new(n_heads, trunk.out_channels(), STYLE_DIM, rng);
        StyleNet { trunk, heads }
    }

    pub fn encode_features(&self, x: &TensorBuf<T>) -> Result<StyleTrunkCache<T>, NnError> {
        let (h, trunk) = self.trunk.forward(x)?;
        let features = global_avg_pool(&h);
        Ok(StyleTrunkCache {
            trunk,
            pre_pool: h,
            features,
        })
    }

    pub fn head(&self, cache: &StyleTrunkCache<T>, heads: &[usize]) -> Result<TensorBuf<T>, NnError> {
        self.heads.forward(&cache.features, heads)
    }

    /// Gradient of the features for one head evaluation.
    pub fn head_backward(&mut self, cache: &StyleTrunkCache<T>, heads: &[usize], dcode: &TensorBuf<T>) -> TensorBuf<T> {
        self.heads.backward(&cache.features, heads, dcode)
    }

    pub fn trunk_backward(&mut self, cache: &StyleTrunkCache<T>, dfeatures: &TensorBuf<T>) {
        let dh = global_avg_pool_backward(dfeatures, cache.pre_pool.length());
        self.trunk.backward(&cache.trunk, &dh);
    }

    pub fn forward(&self, x: &TensorBuf<T>, heads: &[usize]) -> Result<TensorBuf<T>, NnError> {
        let cache = self.encode_features(x)?;
        self.head(&cache, heads)
    }
}

impl<T: Scalar> Module<T> for StyleNet<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.trunk.params(&format!("{prefix}.trunk"));
        prefixed(&mut out, &format!("{prefix}.heads"), &self.heads);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.trunk.params_mut();
        out.extend(self.heads.params_mut());
        out
    }
}

/// Fully connected residual block: `h + fc2(act(fc1(act(h))))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

/// Mapping network: latent `z` to a per-lead style code.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNet<T> {
    pub input: Linear<T>,
    pub blocks: Vec<DenseBlock<T>>,
    pub heads: MultiHeadLinear<T>,
}

#[derive(Debug, Clone)]
pub struct MappingCache<T> {
    z: TensorBuf<T>,
    // (block input, fc1 output, fc2 input) per block
    blocks: Vec<[TensorBuf<T>; 3]>,
    last: TensorBuf<T>,
    head_in: TensorBuf<T>,
    heads: Vec<usize>,
}

impl<T: Scalar> MappingNet<T> {
    pub fn new(n_heads: usize, arch: &GanArch, rng: &mut impl Rng) -> Self {
        let hidden = arch.mapping_hidden;
        MappingNet {
            input: Linear::new(arch.z_dim, hidden, rng),
            blocks: (0..arch.mapping_blocks)
                .map(|_| DenseBlock {
                    fc1: Linear::new(hidden, hidden, rng),
                    fc2: Linear::new(hidden, hidden, rng),
                })
                .collect(),
            heads: MultiHeadLinear::new(n_heads, hidden, STYLE_DIM, rng),
        }
    }

    pub fn forward(&self, z: &TensorBuf<T>, heads: &[usize]) -> Result<(TensorBuf<T>, MappingCache<T>), NnError> {
        let mut h = self.input.forward(z)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let a0 = leaky_relu(&h);
            let u = b.fc1.forward(&a0)?;
            let a1 = leaky_relu(&u);
            let mut out = b.fc2.forward(&a1)?;
            out.add_assign(&h);
            caches.push([h, u, a1]);
            h = out;
        }
        let head_in = leaky_relu(&h);
        let code = self.heads.forward(&head_in, heads)?;
        Ok((
            code,
            MappingCache {
                z: z.clone(),
                blocks: caches,
                last: h,
                head_in,
                heads: heads.to_vec(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &MappingCache<T>, dcode: &TensorBuf<T>) {
        let d_head_in = self.heads.backward(&cache.head_in, &cache.heads, dcode);
        let mut dh = leaky_relu_backward(&cache.last, &d_head_in);
        for (b, [h_in, u, a1]) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let d_a1 = b.fc2.backward(a1, &dh);
            let d_u = leaky_relu_backward(u, &d_a1);
            let a0 = leaky_relu(h_in);
            let d_a0 = b.fc1.backward(&a0, &d_u);
            let mut d_in = leaky_relu_backward(h_in, &d_a0);
            d_in.add_assign(&dh);
            dh = d_in;
        }
        self.input.backward(&cache.z, &dh);
    }
}

impl<T: Scalar> Module<T> for MappingNet<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.input.params(&format!("{prefix}.input"));
        for (i, b) in self.blocks.iter().enumerate() {
            prefixed(&mut out, &format!("{prefix}.block{i}.fc1"), &b.fc1);
            prefixed(&mut out, &format!("{prefix}.block{i}.fc2"), &b.fc2);
        }
        prefixed(&mut out, &format!("{prefix}.heads"), &self.heads);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.input.params_mut();
        for b in &mut self.blocks {
            out.extend(b.fc1.params_mut());
            out.extend(b.fc2.params_mut());
        }
        out.extend(self.heads.params_mut());
        out
    }
}

/// Generator: downsampling plain blocks, AdaIN bottleneck blocks, AdaIN
/// upsampling blocks and a 1x1 output projection. The style code enters only
/// through per-block affine projections feeding the AdaIN layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub down: DownTrunk<T>,
    pub styled: Vec<ResidualBlock<T>>,
    pub affine: Vec<Linear<T>>,
    pub out: Conv1d<T>,
}

#[derive(Debug, Clone)]
pub struct GeneratorCache<T> {
    down: TrunkCache<T>,
    code: TensorBuf<T>,
    styles: Vec<StyleAffine<T>>,
    blocks: Vec<BlockCache<T>>,
    out_in: TensorBuf<T>,
}

/// Style projections start at this fraction of He scale, so every AdaIN
/// layer begins close to plain instance normalization.
pub const AFFINE_INIT_GAIN: f64 = 0.05;

fn split_affine<T: Scalar>(a: &TensorBuf<T>, c: usize) -> StyleAffine<T> {
    let b = a.batch();
    let part = |k: usize, plus_one: bool| {
        let mut t = TensorBuf::zeros([b, c, 1]);
        for bi in 0..b {
            let src = &a.sample(bi)[k * c..(k + 1) * c];
            for (o, &v) in t.sample_mut(bi).iter_mut().zip(src) {
                *o = if plus_one { T::one() + v } else { v };
            }
        }
        t
    };
    StyleAffine {
        scale1: part(0, true),
        bias1: part(1, false),
        scale2: part(2, true),
        bias2: part(3, false),
    }
}

impl<T: Scalar> Generator<T> {
    pub fn new(arch: &GanArch, rng: &mut impl Rng) -> Self {
        let down = DownTrunk::new(1, arch, rng);
        let mut styled = Vec::new();
        let mut c = down.out_channels();
        for _ in 0..arch.bottleneck_blocks {
            styled.push(ResidualBlock::new(c, c, arch.kernel, NormMode::Adain, Resample::None, rng));
        }
        let mut ups: Vec<usize> = arch.widths.iter().rev().skip(1).copied().collect();
        ups.push(arch.stem_width);
        for w in ups {
            styled.push(ResidualBlock::new(c, w, arch.kernel, NormMode::Adain, Resample::Up, rng));
            c = w;
        }
        let affine = styled
            .iter()
            .map(|b| {
                let mut a = Linear::new(STYLE_DIM, 4 * b.out_channels(), rng);
                let gain = T::lit(AFFINE_INIT_GAIN);
                a.weight.value.iter_mut().for_each(|w| *w = *w * gain);
                a
            })
            .collect();
        let out = Conv1d::new(c, 1, 1, 1, 0, rng);
        Generator {
            down,
            styled,
            affine,
            out,
        }
    }

    pub fn forward(&self, x: &TensorBuf<T>, code: &TensorBuf<T>) -> Result<(TensorBuf<T>, GeneratorCache<T>), NnError> {
        if x.channels() != 1 || code.shape != [x.batch(), STYLE_DIM, 1] {
            return Err(NnError::ShapeMismatch(format!(
                "generator input {:?} with code {:?}",
                x.shape, code.shape
            )));
        }
        let (mut h, down) = self.down.forward(x)?;
        let mut styles = Vec::with_capacity(self.styled.len());
        let mut blocks = Vec::with_capacity(self.styled.len());
        for (b, aff) in self.styled.iter().zip(&self.affine) {
            let s = split_affine(&aff.forward(code)?, b.out_channels());
            let (y, c) = b.forward(&h, Some(&s))?;
            styles.push(s);
            blocks.push(c);
            h = y;
        }
        let y = self.out.forward(&h)?;
        Ok((
            y,
            GeneratorCache {
                down,
                code: code.clone(),
                styles,
                blocks,
                out_in: h,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the code gradient.
    pub fn backward(&mut self, cache: &GeneratorCache<T>, dy: &TensorBuf<T>) -> TensorBuf<T> {
        let mut g = self.out.backward(&cache.out_in, dy);
        let mut dcode = TensorBuf::zeros(cache.code.shape);
        for (k, b) in self.styled.iter_mut().enumerate().rev() {
            let (dx, sg) = b.backward(&cache.blocks[k], Some(&cache.styles[k]), &g);
            let sg = sg.expect("adain block yields style gradients");
            let c = b.out_channels();
            let batch = dy.batch();
            let mut da = TensorBuf::zeros([batch, 4 * c, 1]);
            for bi in 0..batch {
                let dst = da.sample_mut(bi);
                for (k2, part) in [&sg.scale1, &sg.bias1, &sg.scale2, &sg.bias2].into_iter().enumerate() {
                    dst[k2 * c..(k2 + 1) * c].copy_from_slice(part.sample(bi));
                }
            }
            dcode.add_assign(&self.affine[k].backward(&cache.code, &da));
            g = dx;
        }
        self.down.backward(&cache.down, &g);
        dcode
    }
}

impl<T: Scalar> Module<T> for Generator<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.down.params(&format!("{prefix}.down"));
        for (i, b) in self.styled.iter().enumerate() {
            prefixed(&mut out, &format!("{prefix}.styled{i}"), b);
        }
        for (i, a) in self.affine.iter().enumerate() {
            prefixed(&mut out, &format!("{prefix}.affine{i}"), a);
        }
        prefixed(&mut out, &format!("{prefix}.out"), &self.out);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.down.params_mut();
        for b in &mut self.styled {
            out.extend(b.params_mut());
        }
        for a in &mut self.affine {
            out.extend(a.params_mut());
        }
        out.extend(self.out.params_mut());
        out
    }
}

/// Discriminator: downsampling trunk, global pooling, one logit per lead.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub trunk: DownTrunk<T>,
    pub heads: MultiHeadLinear<T>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorCache<T> {
    trunk: TrunkCache<T>,
    pre_pool: TensorBuf<T>,
    features: TensorBuf<T>,
    heads: Vec<usize>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(n_heads: usize, arch: &GanArch, rng: &mut impl Rng) -> Self {
        let trunk = DownTrunk::new(1, arch, rng);
        let heads = MultiHeadLinear::new(n_heads, trunk.out_channels(), 1, rng);
        Discriminator { trunk, heads }
    }

    /// Logits shaped `[B, 1, 1]`.
    pub fn forward(&self, x: &TensorBuf<T>, heads: &[usize]) -> Result<(TensorBuf<T>, DiscriminatorCache<T>), NnError> {
        let (h, trunk) = self.trunk.forward(x)?;
        let features = global_avg_pool(&h);
        let logits = self.heads.forward(&features, heads)?;
        Ok((
            logits,
            DiscriminatorCache {
                trunk,
                pre_pool: h,
                features,
                heads: heads.to_vec(),
            },
        ))
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &DiscriminatorCache<T>, dlogits: &TensorBuf<T>) -> TensorBuf<T> {
        let df = self.heads.backward(&cache.features, &cache.heads, dlogits);
        let dh = global_avg_pool_backward(&df, cache.pre_pool.length());
        self.trunk.backward(&cache.trunk, &dh)
    }
}

impl<T: Scalar> Module<T> for Discriminator<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.trunk.params(&format!("{prefix}.trunk"));
        prefixed(&mut out, &format!("{prefix}.heads"), &self.heads);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.trunk.params_mut();
        out.extend(self.heads.params_mut());
        out
    }
}
