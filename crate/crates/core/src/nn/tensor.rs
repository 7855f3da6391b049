use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NnError;

/// Floating-point element type of tensors and parameters.
pub trait Scalar:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// `c <- alpha * a @ b + beta * c` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "gemm operand out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                check_extent(a.len(), m, k, rsa, csa);
                check_extent(b.len(), k, n, rsb, csb);
                check_extent(c.len(), m, n, rsc, csc);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: operand extents were checked against the slices above.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// Dense `[batch, channels, length]` buffer. Feature vectors use length 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBuf<T> {
    pub shape: [usize; 3],
    pub values: Vec<T>,
}

impl<T: Scalar> TensorBuf<T> {
    pub fn zeros(shape: [usize; 3]) -> Self {
        TensorBuf {
            shape,
            values: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 3], values: Vec<T>) -> Result<Self, NnError> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(TensorBuf { shape, values })
    }

    pub fn from_f32(shape: [usize; 3], values: &[f32]) -> Result<Self, NnError> {
        Self::from_vec(shape, values.iter().map(|&v| T::from_f32(v).unwrap()).collect())
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn length(&self) -> usize {
        self.shape[2]
    }

    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.values[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.sample_len();
        &mut self.values[b * n..(b + 1) * n]
    }

    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let l = self.shape[2];
        let off = (b * self.shape[1] + c) * l;
        &self.values[off..off + l]
    }

    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let l = self.shape[2];
        let off = (b * self.shape[1] + c) * l;
        &mut self.values[off..off + l]
    }

    pub fn at(&self, b: usize, c: usize, l: usize) -> T {
        self.values[(b * self.shape[1] + c) * self.shape[2] + l]
    }

    pub fn add_assign(&mut self, other: &TensorBuf<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: T) {
        for v in &mut self.values {
            *v *= k;
        }
    }

    pub fn scaled(mut self, k: T) -> Self {
        self.scale(k);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|v| v.to_f32().unwrap()).collect()
    }

    /// Stack per-sample slices (each `channels * length` long) into a batch.
    pub fn stack(channels: usize, length: usize, samples: &[Vec<T>]) -> Result<Self, NnError> {
        let mut values = Vec::with_capacity(samples.len() * channels * length);
        for s in samples {
            if s.len() != channels * length {
                return Err(NnError::ShapeMismatch(format!(
                    "sample of {} values, expected {}",
                    s.len(),
                    channels * length
                )));
            }
            values.extend_from_slice(s);
        }
        Self::from_vec([samples.len(), channels, length], values)
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    /// Zero-mean normal entries with standard deviation `sqrt(2 / fan_in)`.
    pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(shape);
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        for v in &mut p.value {
            let z: f64 = StandardNormal.sample(rng);
            *v = T::lit(z * std);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}
