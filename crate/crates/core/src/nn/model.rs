use serde::{Deserialize, Serialize};

use super::layers::{adaptive_avg_pool, adaptive_avg_pool_backward, relu, relu_backward};
use super::{BatchNorm1d, BnCache, Conv1d, Linear, Mode, NnError, Scalar, Tensor3};
use crate::rng;

pub const CLASSES: usize = 3;
const CONV1_FILTERS: usize = 64;
const CONV2_FILTERS: usize = 32;
const KERNEL: usize = 3;
const PADDING: usize = 1;

/// Where the nonlinearity sits relative to batch norm in each conv block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerOrder {
    /// conv, ReLU, batch norm.
    ConvReluBn,
    /// conv, batch norm, ReLU.
    ConvBnRelu,
}

impl LayerOrder {
    fn code(self) -> u8 {
        match self {
            LayerOrder::ConvReluBn => 0,
            LayerOrder::ConvBnRelu => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LayerOrder::ConvReluBn),
            1 => Some(LayerOrder::ConvBnRelu),
            _ => None,
        }
    }
}

/// Two conv blocks, global average pooling, linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub order: LayerOrder,
    pub conv1: Conv1d<T>,
    pub bn1: BatchNorm1d<T>,
    pub conv2: Conv1d<T>,
    pub bn2: BatchNorm1d<T>,
    pub fc: Linear<T>,
}

struct BlockCache<T> {
    input: Tensor3<T>,
    /// Input of the ReLU.
    pre_relu: Tensor3<T>,
    bn: BnCache<T>,
}

pub struct ModelCache<T> {
    block1: BlockCache<T>,
    block2: BlockCache<T>,
    time: usize,
    pooled: Vec<T>,
    batch: usize,
}

/// Gradients in [`Model::params_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub groups: Vec<Vec<T>>,
    pub input: Option<Tensor3<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    pub fn as_slices(&self) -> Vec<&[T]> {
        self.groups.iter().map(Vec::as_slice).collect()
    }
}

fn block_forward<T: Scalar>(
    conv: &Conv1d<T>,
    bn: &mut BatchNorm1d<T>,
    order: LayerOrder,
    x: &Tensor3<T>,
    mode: Mode,
) -> Result<(Tensor3<T>, BlockCache<T>), NnError> {
    let z = conv.forward(x)?;
    Ok(match order {
        LayerOrder::ConvReluBn => {
            let r = relu(&z);
            let (h, c) = bn.forward(&r, mode)?;
            (
                h,
                BlockCache {
                    input: x.clone(),
                    pre_relu: z,
                    bn: c,
                },
            )
        }
        LayerOrder::ConvBnRelu => {
            let (b, c) = bn.forward(&z, mode)?;
            let h = relu(&b);
            (
                h,
                BlockCache {
                    input: x.clone(),
                    pre_relu: b,
                    bn: c,
                },
            )
        }
    })
}

/// Returns `(grad_input, grad_w, grad_b, grad_gamma, grad_beta)`.
#[allow(clippy::type_complexity)]
fn block_backward<T: Scalar>(
    conv: &Conv1d<T>,
    bn: &BatchNorm1d<T>,
    order: LayerOrder,
    cache: &BlockCache<T>,
    dh: &Tensor3<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor3<T>>, Vec<T>, Vec<T>, Vec<T>, Vec<T>), NnError> {
    let (dz, dg, dbeta) = match order {
        LayerOrder::ConvReluBn => {
            let (dr, dg, db) = bn.backward(&cache.bn, dh);
            (relu_backward(&cache.pre_relu, &dr), dg, db)
        }
        LayerOrder::ConvBnRelu => {
            let db_out = relu_backward(&cache.pre_relu, dh);
            bn.backward(&cache.bn, &db_out)
        }
    };
    let (dx, dw, dbias) = conv.backward(&cache.input, &dz, need_input_grad)?;
    Ok((dx, dw, dbias, dg, dbeta))
}

impl<T: Scalar> Model<T> {
    pub fn new(in_channels: usize, order: LayerOrder, seed: u64) -> Self {
        let mut r = rng::chacha(seed, &[0x1417]);
        Self {
            order,
            conv1: Conv1d::new(in_channels, CONV1_FILTERS, KERNEL, PADDING, &mut r),
            bn1: BatchNorm1d::new(CONV1_FILTERS),
            conv2: Conv1d::new(CONV1_FILTERS, CONV2_FILTERS, KERNEL, PADDING, &mut r),
            bn2: BatchNorm1d::new(CONV2_FILTERS),
            fc: Linear::new(CONV2_FILTERS, CLASSES, &mut r),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            &mut self.conv1.weight[..],
            &mut self.conv1.bias[..],
            &mut self.bn1.gamma[..],
            &mut self.bn1.beta[..],
            &mut self.conv2.weight[..],
            &mut self.conv2.bias[..],
            &mut self.bn2.gamma[..],
            &mut self.bn2.beta[..],
            &mut self.fc.weight[..],
            &mut self.fc.bias[..],
        ]
    }

    pub fn param_sizes(&mut self) -> Vec<usize> {
        self.params_mut().iter().map(|p| p.len()).collect()
    }

    /// Logits `(batch, 3)` plus what backward needs. Train mode updates the
    /// batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<(Vec<T>, ModelCache<T>), NnError> {
        let (h1, block1) = block_forward(&self.conv1, &mut self.bn1, self.order, x, mode)?;
        let (h2, block2) = block_forward(&self.conv2, &mut self.bn2, self.order, &h1, mode)?;
        let pooled = adaptive_avg_pool(&h2)?.data;
        let logits = self.fc.forward(&pooled, x.batch)?;
        Ok((
            logits,
            ModelCache {
                block1,
                block2,
                time: h2.time,
                pooled,
                batch: x.batch,
            },
        ))
    }

    /// Eval-mode logits; a pure function of the weights and the input.
    pub fn predict(&self, x: &Tensor3<T>) -> Result<Vec<T>, NnError> {
        // Eval-mode batch norm does not touch its running statistics, so a
        // cheap clone of the two norm layers keeps `&self`.
        let mut bn1 = self.bn1.clone();
        let mut bn2 = self.bn2.clone();
        let (h1, _) = block_forward(&self.conv1, &mut bn1, self.order, x, Mode::Eval)?;
        let (h2, _) = block_forward(&self.conv2, &mut bn2, self.order, &h1, Mode::Eval)?;
        let pooled = adaptive_avg_pool(&h2)?.data;
        self.fc.forward(&pooled, x.batch)
    }

    pub fn backward(
        &self,
        cache: &ModelCache<T>,
        grad_logits: &[T],
        need_input_grad: bool,
    ) -> Result<ModelGrads<T>, NnError> {
        let (dp, dfw, dfb) = self.fc.backward(&cache.pooled, grad_logits, cache.batch);
        let dp = Tensor3::from_vec(cache.batch, CONV2_FILTERS, 1, dp)?;
        let dh2 = adaptive_avg_pool_backward(&dp, cache.time);
        let (dh1, d2w, d2b, d2g, d2beta) =
            block_backward(&self.conv2, &self.bn2, self.order, &cache.block2, &dh2, true)?;
        let dh1 = dh1.expect("requested");
        let (dx, d1w, d1b, d1g, d1beta) =
            block_backward(&self.conv1, &self.bn1, self.order, &cache.block1, &dh1, need_input_grad)?;
        Ok(ModelGrads {
            groups: vec![d1w, d1b, d1g, d1beta, d2w, d2b, d2g, d2beta, dfw, dfb],
            input: dx,
        })
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ALCK";
const CHECKPOINT_VERSION: u32 = 1;

fn tensors<T: Scalar>(m: &Model<T>) -> Vec<(&'static str, Vec<usize>, &[T])> {
    let inc = m.conv1.in_channels;
    vec![
        ("conv1.weight", vec![CONV1_FILTERS, inc, KERNEL], &m.conv1.weight[..]),
        ("conv1.bias", vec![CONV1_FILTERS], &m.conv1.bias[..]),
        ("bn1.gamma", vec![CONV1_FILTERS], &m.bn1.gamma[..]),
        ("bn1.beta", vec![CONV1_FILTERS], &m.bn1.beta[..]),
        ("bn1.running_mean", vec![CONV1_FILTERS], &m.bn1.running_mean[..]),
        ("bn1.running_var", vec![CONV1_FILTERS], &m.bn1.running_var[..]),
        ("conv2.weight", vec![CONV2_FILTERS, CONV1_FILTERS, KERNEL], &m.conv2.weight[..]),
        ("conv2.bias", vec![CONV2_FILTERS], &m.conv2.bias[..]),
        ("bn2.gamma", vec![CONV2_FILTERS], &m.bn2.gamma[..]),
        ("bn2.beta", vec![CONV2_FILTERS], &m.bn2.beta[..]),
        ("bn2.running_mean", vec![CONV2_FILTERS], &m.bn2.running_mean[..]),
        ("bn2.running_var", vec![CONV2_FILTERS], &m.bn2.running_var[..]),
        ("fc.weight", vec![CLASSES, CONV2_FILTERS], &m.fc.weight[..]),
        ("fc.bias", vec![CLASSES], &m.fc.bias[..]),
    ]
}

/// Versioned little-endian blob: magic, version, input channels, layer
/// order, then named tensors with their shapes. Values are stored as f64.
pub fn save_checkpoint<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.conv1.in_channels as u32).to_le_bytes());
    out.push(model.order.code());
    let ts = tensors(model);
    out.extend_from_slice(&(ts.len() as u32).to_le_bytes());
    for (name, shape, data) in ts {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            out.extend_from_slice(&v.to_f64().to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Model<T>, NnError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let in_channels = r.u32()? as usize;
    let order = LayerOrder::from_code(r.take(1)?[0]).ok_or_else(|| NnError::Checkpoint("bad layer order".into()))?;
    let mut model = Model::<T>::new(in_channels, order, 0);
    let expected: Vec<(String, Vec<usize>)> =
        tensors(&model).into_iter().map(|(n, s, _)| (n.to_string(), s)).collect();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(NnError::Checkpoint(format!("{count} tensors, expected {}", expected.len())));
    }
    let mut values = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let len = r.u32()? as usize;
        let found = r.take(len)?;
        if found != name.as_bytes() {
            return Err(NnError::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(NnError::Checkpoint(format!("{name}: shape {dims:?}, expected {shape:?}")));
        }
        let n: usize = dims.iter().product();
        let vals = r
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect::<Vec<T>>();
        values.push(vals);
    }
    if r.pos != bytes.len() {
        return Err(NnError::Checkpoint("trailing bytes".into()));
    }
    let mut it = values.into_iter();
    let mut next = || it.next().expect("counted");
    model.conv1.weight = next();
    model.conv1.bias = next();
    model.bn1.gamma = next();
    model.bn1.beta = next();
    model.bn1.running_mean = next();
    model.bn1.running_var = next();
    model.conv2.weight = next();
    model.conv2.bias = next();
    model.bn2.gamma = next();
    model.bn2.beta = next();
    model.bn2.running_mean = next();
    model.bn2.running_var = next();
    model.fc.weight = next();
    model.fc.bias = next();
    Ok(model)
}
