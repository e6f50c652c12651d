//! Minimal 1-D CNN: convolution, batch norm, ReLU, average pooling, a linear
//! head, cross-entropy, Adam. Everything is generic over [`Scalar`] so the
//! same code trains in `f32` and is gradient-checked in `f64`.

mod layers;
mod loss;
mod model;
mod optim;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use thiserror::Error;

pub use layers::{
    adaptive_avg_pool, adaptive_avg_pool_backward, relu, relu_backward, BatchNorm1d, BnCache, Conv1d, Linear, Mode,
};
pub use loss::{cross_entropy, softmax_rows};
pub use model::{load_checkpoint, save_checkpoint, LayerOrder, Model, ModelCache, ModelGrads, CHECKPOINT_MAGIC, CLASSES};
pub use optim::{adam_step, step_lr, step_lr_with, Adam, AdamConfig};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("batch norm in train mode needs at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} at batch index {index} is outside 0..{classes}")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Floating-point element type with a GEMM kernel.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C = alpha * A B + beta * C` with `A: m x k`, `B: k x n`, `C: m x n`
    /// given as slices with explicit row and column strides.
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
}

fn check_span(len: usize, rows: usize, cols: usize, rs: isize, cs: isize, what: &str) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
    assert!(rs >= 0 && cs >= 0 && (last as usize) < len, "{what} out of bounds");
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
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
                check_span(a.len(), m, k, rsa, csa, "A");
                check_span(b.len(), k, n, rsb, csb, "B");
                check_span(c.len(), m, n, rsc, csc, "C");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three operands were bounds-checked above for
                // the given shapes and non-negative strides.
                unsafe {
                    $gemm(
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

/// Row-major `batch x channels x time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    pub fn zeros(batch: usize, channels: usize, time: usize) -> Self {
        Self {
            batch,
            channels,
            time,
            data: vec![T::ZERO; batch * channels * time],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, time: usize, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != batch * channels * time {
            return Err(NnError::Shape(format!(
                "{} values for shape ({batch}, {channels}, {time})",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            channels,
            time,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.time)
    }

    pub fn item(&self, b: usize) -> &[T] {
        let n = self.channels * self.time;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.channels * self.time;
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn at(&self, b: usize, c: usize, t: usize) -> T {
        self.data[(b * self.channels + c) * self.time + t]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
