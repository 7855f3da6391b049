use rand::Rng;

use super::layers::{
    adain, adain_backward, instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward, upsample2,
    upsample2_backward, Conv1d, NormCache,
};
use super::tensor::{Param, Scalar, TensorBuf};
use super::{join, Module, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Plain,
    Adain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    None,
    /// First convolution and shortcut use stride 2.
    Down,
    /// Nearest-neighbour upsampling by two before the block.
    Up,
}

/// Per-sample AdaIN parameters for the two normalizations of a block.
#[derive(Debug, Clone)]
pub struct StyleAffine<T> {
    pub scale1: TensorBuf<T>,
    pub bias1: TensorBuf<T>,
    pub scale2: TensorBuf<T>,
    pub bias2: TensorBuf<T>,
}

#[derive(Debug, Clone)]
pub struct StyleAffineGrad<T> {
    pub scale1: TensorBuf<T>,
    pub bias1: TensorBuf<T>,
    pub scale2: TensorBuf<T>,
    pub bias2: TensorBuf<T>,
}

/// `act(norm(conv2(act(norm(conv1(x)))))) + shortcut(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub conv1: Conv1d<T>,
    pub conv2: Conv1d<T>,
    pub shortcut: Option<Conv1d<T>>,
    pub mode: NormMode,
    pub resample: Resample,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    input: TensorBuf<T>,
    norm1: NormCache<T>,
    pre1: TensorBuf<T>,
    act1: TensorBuf<T>,
    norm2: NormCache<T>,
    pre2: TensorBuf<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(cin: usize, cout: usize, kernel: usize, mode: NormMode, resample: Resample, rng: &mut impl Rng) -> Self {
        let stride = if resample == Resample::Down { 2 } else { 1 };
        let conv1 = Conv1d::same(cin, cout, kernel, stride, rng);
        let conv2 = Conv1d::same(cout, cout, kernel, 1, rng);
        let shortcut = (cin != cout || stride > 1).then(|| Conv1d::new(cin, cout, 1, stride, 0, rng));
        ResidualBlock {
            conv1,
            conv2,
            shortcut,
            mode,
            resample,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.cout
    }

    fn norm(
        &self,
        x: &TensorBuf<T>,
        affine: Option<(&TensorBuf<T>, &TensorBuf<T>)>,
    ) -> Result<(TensorBuf<T>, NormCache<T>), NnError> {
        match (self.mode, affine) {
            (NormMode::Plain, _) => Ok(instance_norm(x)),
            (NormMode::Adain, Some((s, b))) => adain(x, s, b),
            (NormMode::Adain, None) => Err(NnError::ShapeMismatch("adain block needs style parameters".into())),
        }
    }

    pub fn forward(&self, x: &TensorBuf<T>, style: Option<&StyleAffine<T>>) -> Result<(TensorBuf<T>, BlockCache<T>), NnError> {
        let input = match self.resample {
            Resample::Up => upsample2(x),
            _ => x.clone(),
        };
        let h1 = self.conv1.forward(&input)?;
        let (pre1, norm1) = self.norm(&h1, style.map(|s| (&s.scale1, &s.bias1)))?;
        let act1 = leaky_relu(&pre1);
        let h2 = self.conv2.forward(&act1)?;
        let (pre2, norm2) = self.norm(&h2, style.map(|s| (&s.scale2, &s.bias2)))?;
        let mut out = leaky_relu(&pre2);
        match &self.shortcut {
            Some(sc) => out.add_assign(&sc.forward(&input)?),
            None => out.add_assign(&input),
        }
        Ok((
            out,
            BlockCache {
                input,
                norm1,
                pre1,
                act1,
                norm2,
                pre2,
            },
        ))
    }

    /// Returns the input gradient and, in AdaIN mode, the style gradients.
    pub fn backward(
        &mut self,
        cache: &BlockCache<T>,
        style: Option<&StyleAffine<T>>,
        dy: &TensorBuf<T>,
    ) -> (TensorBuf<T>, Option<StyleAffineGrad<T>>) {
        let d_pre2 = leaky_relu_backward(&cache.pre2, dy);
        let (d_h2, g2) = match (self.mode, style) {
            (NormMode::Adain, Some(s)) => {
                let (dx, ds, db) = adain_backward(&cache.norm2, &s.scale2, &d_pre2);
                (dx, Some((ds, db)))
            }
            _ => (instance_norm_backward(&cache.norm2, &d_pre2), None),
        };
        let d_act1 = self.conv2.backward(&cache.act1, &d_h2);
        let d_pre1 = leaky_relu_backward(&cache.pre1, &d_act1);
        let (d_h1, g1) = match (self.mode, style) {
            (NormMode::Adain, Some(s)) => {
                let (dx, ds, db) = adain_backward(&cache.norm1, &s.scale1, &d_pre1);
                (dx, Some((ds, db)))
            }
            _ => (instance_norm_backward(&cache.norm1, &d_pre1), None),
        };
        let mut d_input = self.conv1.backward(&cache.input, &d_h1);
        match &mut self.shortcut {
            Some(sc) => d_input.add_assign(&sc.backward(&cache.input, dy)),
            None => d_input.add_assign(dy),
        }
        let dx = match self.resample {
            Resample::Up => upsample2_backward(&d_input),
            _ => d_input,
        };
        let grads = match (g1, g2) {
            (Some((scale1, bias1)), Some((scale2, bias2))) => Some(StyleAffineGrad {
                scale1,
                bias1,
                scale2,
                bias2,
            }),
            _ => None,
        };
        (dx, grads)
    }
}

impl<T: Scalar> Module<T> for ResidualBlock<T> {
    fn params(&self, prefix: &str) -> Vec<(String, &Param<T>)> {
        let mut out = self.conv1.params(&join(prefix, "conv1"));
        out.extend(self.conv2.params(&join(prefix, "conv2")));
        if let Some(sc) = &self.shortcut {
            out.extend(sc.params(&join(prefix, "shortcut")));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.conv1.params_mut();
        out.extend(self.conv2.params_mut());
        if let Some(sc) = &mut self.shortcut {
            out.extend(sc.params_mut());
        }
        out
    }
}
