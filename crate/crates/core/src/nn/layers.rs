use rand::Rng;

use super::{NnError, Scalar, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn uniform_init<T: Scalar, R: Rng>(rng: &mut R, n: usize, fan_in: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect()
}

/// `(grad_x, grad_weight, grad_bias)` of a convolution.
pub type ConvGrads<T> = (Option<Tensor3<T>>, Vec<T>, Vec<T>);

/// Stride-1 cross-correlation over time with symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `out x in x kernel`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new<R: Rng>(in_channels: usize, out_channels: usize, kernel: usize, padding: usize, rng: &mut R) -> Self {
        let fan_in = in_channels * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: uniform_init(rng, out_channels * fan_in, fan_in),
            bias: uniform_init(rng, out_channels, fan_in),
        }
    }

    pub fn out_time(&self, time: usize) -> usize {
        (time + 2 * self.padding + 1).saturating_sub(self.kernel)
    }

    fn check(&self, x: &Tensor3<T>) -> Result<usize, NnError> {
        if x.channels != self.in_channels {
            return Err(NnError::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        match self.out_time(x.time) {
            0 => Err(NnError::Shape(format!("input length {} too short for kernel", x.time))),
            t => Ok(t),
        }
    }

    /// Valid output range `[lo, hi)` for kernel tap `k` and the input
    /// offset of its first element.
    fn tap_range(&self, k: usize, time: usize, out_time: usize) -> Option<(usize, usize, usize)> {
        let shift = k as isize - self.padding as isize;
        let lo = (-shift).max(0) as usize;
        let hi = out_time.min((time as isize - shift).max(0) as usize);
        (hi > lo).then(|| (lo, hi, (lo as isize + shift) as usize))
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Result<Tensor3<T>, NnError> {
        let out_time = self.check(x)?;
        let ck = self.in_channels * self.kernel;
        let mut out = Tensor3::zeros(x.batch, self.out_channels, out_time);
        for b in 0..x.batch {
            let item = x.item(b);
            let y = out.item_mut(b);
            for (o, row) in y.chunks_exact_mut(out_time).enumerate() {
                row.fill(self.bias[o]);
            }
            // one GEMM per kernel tap over the shifted input, no unfolding
            for k in 0..self.kernel {
                let Some((lo, hi, src)) = self.tap_range(k, x.time, out_time) else {
                    continue;
                };
                T::gemm(
                    self.out_channels,
                    self.in_channels,
                    hi - lo,
                    T::ONE,
                    &self.weight[k..],
                    ck as isize,
                    self.kernel as isize,
                    &item[src..],
                    x.time as isize,
                    1,
                    T::ONE,
                    &mut y[lo..],
                    out_time as isize,
                    1,
                );
            }
        }
        Ok(out)
    }

    /// Returns `(grad_x, grad_weight, grad_bias)`; `grad_x` only when asked.
    pub fn backward(
        &self,
        x: &Tensor3<T>,
        grad_out: &Tensor3<T>,
        need_input_grad: bool,
    ) -> Result<ConvGrads<T>, NnError> {
        let out_time = self.check(x)?;
        if grad_out.shape() != (x.batch, self.out_channels, out_time) {
            return Err(NnError::Shape("conv gradient shape differs from output".into()));
        }
        let ck = self.in_channels * self.kernel;
        let mut gw = vec![T::ZERO; self.weight.len()];
        let mut gb = vec![T::ZERO; self.out_channels];
        let mut gx = need_input_grad.then(|| Tensor3::zeros(x.batch, x.channels, x.time));
        for b in 0..x.batch {
            let dy = grad_out.item(b);
            for (o, row) in dy.chunks_exact(out_time).enumerate() {
                gb[o] += sum_lanes(row);
            }
            let item = x.item(b);
            for k in 0..self.kernel {
                let Some((lo, hi, src)) = self.tap_range(k, x.time, out_time) else {
                    continue;
                };
                // gW_k += dY X_k^T
                T::gemm(
                    self.out_channels,
                    hi - lo,
                    self.in_channels,
                    T::ONE,
                    &dy[lo..],
                    out_time as isize,
                    1,
                    &item[src..],
                    1,
                    x.time as isize,
                    T::ONE,
                    &mut gw[k..],
                    ck as isize,
                    self.kernel as isize,
                );
                if let Some(gx) = gx.as_mut() {
                    // dX_k += W_k^T dY
                    T::gemm(
                        self.in_channels,
                        self.out_channels,
                        hi - lo,
                        T::ONE,
                        &self.weight[k..],
                        self.kernel as isize,
                        ck as isize,
                        &dy[lo..],
                        out_time as isize,
                        1,
                        T::ONE,
                        &mut gx.item_mut(b)[src..],
                        x.time as isize,
                        1,
                    );
                }
            }
        }
        Ok((gx, gw, gb))
    }
}

const LANES: usize = 8;

/// Sum with independent lane accumulators so the loop vectorizes; the
/// reduction order is fixed, so results stay deterministic.
fn sum_lanes<T: Scalar>(xs: &[T]) -> T {
    let mut acc = [T::ZERO; LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..LANES {
            acc[i] += c[i];
        }
    }
    let mut s = T::ZERO;
    for a in acc {
        s += a;
    }
    for &v in tail {
        s += v;
    }
    s
}

/// Sum of squared deviations from `m`.
fn sq_dev_lanes<T: Scalar>(xs: &[T], m: T) -> T {
    let mut acc = [T::ZERO; LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for i in 0..LANES {
            let d = c[i] - m;
            acc[i] += d * d;
        }
    }
    let mut s = T::ZERO;
    for a in acc {
        s += a;
    }
    for &v in tail {
        s += (v - m) * (v - m);
    }
    s
}

/// `(sum a, sum a*b)`.
fn sum_dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> (T, T) {
    let mut s = [T::ZERO; LANES];
    let mut d = [T::ZERO; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            s[i] += x[i];
            d[i] += x[i] * y[i];
        }
    }
    let (mut st, mut dt) = (T::ZERO, T::ZERO);
    for i in 0..LANES {
        st += s[i];
        dt += d[i];
    }
    for (&x, &y) in ta.iter().zip(tb) {
        st += x;
        dt += x * y;
    }
    (st, dt)
}

/// Per-channel normalization over batch and time.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mode: Mode,
    pub xhat: Tensor3<T>,
    pub inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![T::ONE; channels],
            beta: vec![T::ZERO; channels],
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<(Tensor3<T>, BnCache<T>), NnError> {
        if x.channels != self.channels {
            return Err(NnError::Shape(format!(
                "batch norm over {} channels, input has {}",
                self.channels, x.channels
            )));
        }
        let (bsz, c, t) = x.shape();
        let n = bsz * t;
        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(NnError::BatchTooSmall(n));
                }
                let mut mean = vec![0.0f64; c];
                let mut var = vec![0.0f64; c];
                // rows reduce in the working precision, rows accumulate in f64
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..bsz {
                        s += sum_lanes(&x.item(b)[ch * t..(ch + 1) * t]).to_f64();
                    }
                    let m = s / n as f64;
                    let mut q = 0.0;
                    for b in 0..bsz {
                        q += sq_dev_lanes(&x.item(b)[ch * t..(ch + 1) * t], T::from_f64(m)).to_f64();
                    }
                    mean[ch] = m;
                    var[ch] = q / n as f64;
                    let unbiased = q / (n - 1) as f64;
                    let mo = self.momentum;
                    self.running_mean[ch] = T::from_f64((1.0 - mo) * self.running_mean[ch].to_f64() + mo * m);
                    self.running_var[ch] =
                        T::from_f64((1.0 - mo) * self.running_var[ch].to_f64() + mo * unbiased);
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.iter().map(|v| v.to_f64()).collect(),
                self.running_var.iter().map(|v| v.to_f64()).collect(),
            ),
        };
        let inv_std: Vec<T> = var.iter().map(|v| T::from_f64(1.0 / (v + self.eps).sqrt())).collect();
        let mean: Vec<T> = mean.into_iter().map(T::from_f64).collect();
        let mut xhat_data = Vec::with_capacity(x.data.len());
        let mut y_data = Vec::with_capacity(x.data.len());
        for (r, row) in x.data.chunks_exact(t).enumerate() {
            let ch = r % c;
            let (m, inv, g, be) = (mean[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
            xhat_data.extend(row.iter().map(|&v| (v - m) * inv));
            y_data.extend(xhat_data[r * t..].iter().map(|&h| g * h + be));
        }
        let xhat = Tensor3::from_vec(bsz, c, t, xhat_data)?;
        let y = Tensor3::from_vec(bsz, c, t, y_data)?;
        Ok((y, BnCache { mode, xhat, inv_std }))
    }

    /// Returns `(grad_x, grad_gamma, grad_beta)`.
    pub fn backward(&self, cache: &BnCache<T>, dy: &Tensor3<T>) -> (Tensor3<T>, Vec<T>, Vec<T>) {
        let (bsz, c, t) = dy.shape();
        let n = (bsz * t) as f64;
        let mut dgamma = vec![T::ZERO; c];
        let mut dbeta = vec![T::ZERO; c];
        let mut dx = Tensor3::zeros(bsz, c, t);
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
            for b in 0..bsz {
                let g = &dy.item(b)[ch * t..(ch + 1) * t];
                let h = &cache.xhat.item(b)[ch * t..(ch + 1) * t];
                let (s, d) = sum_dot_lanes(g, h);
                sum_dy += s.to_f64();
                sum_dy_xhat += d.to_f64();
            }
            dgamma[ch] = T::from_f64(sum_dy_xhat);
            dbeta[ch] = T::from_f64(sum_dy);
            let gamma = self.gamma[ch];
            let inv = cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    // dx = gamma*inv/N * (N dy - sum(dy) - xhat sum(dy xhat))
                    let k = gamma * inv / T::from_f64(n);
                    let nn = T::from_f64(n);
                    let (sd, sdx) = (T::from_f64(sum_dy), T::from_f64(sum_dy_xhat));
                    for b in 0..bsz {
                        let g = &dy.item(b)[ch * t..(ch + 1) * t];
                        let h = &cache.xhat.item(b)[ch * t..(ch + 1) * t];
                        let out = &mut dx.item_mut(b)[ch * t..(ch + 1) * t];
                        for ((o, &gv), &hv) in out.iter_mut().zip(g).zip(h) {
                            *o = k * (nn * gv - sd - hv * sdx);
                        }
                    }
                }
                Mode::Eval => {
                    let k = gamma * inv;
                    for b in 0..bsz {
                        let g = &dy.item(b)[ch * t..(ch + 1) * t];
                        let out = &mut dx.item_mut(b)[ch * t..(ch + 1) * t];
                        for (o, &gv) in out.iter_mut().zip(g) {
                            *o = k * gv;
                        }
                    }
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

pub fn relu<T: Scalar>(x: &Tensor3<T>) -> Tensor3<T> {
    Tensor3 {
        data: x.data.iter().map(|&v| if v > T::ZERO { v } else { T::ZERO }).collect(),
        ..*x
    }
}

/// Gradient through ReLU given the forward *input*.
pub fn relu_backward<T: Scalar>(x: &Tensor3<T>, dy: &Tensor3<T>) -> Tensor3<T> {
    Tensor3 {
        data: dy.data.iter().zip(&x.data).map(|(&g, &v)| if v > T::ZERO { g } else { T::ZERO }).collect(),
        ..*dy
    }
}

/// Mean over time: `(batch, channels, 1)`.
pub fn adaptive_avg_pool<T: Scalar>(x: &Tensor3<T>) -> Result<Tensor3<T>, NnError> {
    if x.time == 0 {
        return Err(NnError::Shape("pooling over an empty time axis".into()));
    }
    let inv = T::from_f64(1.0 / x.time as f64);
    let data = x
        .data
        .chunks_exact(x.time)
        .map(|row| {
            let mut s = T::ZERO;
            for &v in row {
                s += v;
            }
            s * inv
        })
        .collect();
    Tensor3::from_vec(x.batch, x.channels, 1, data)
}

pub fn adaptive_avg_pool_backward<T: Scalar>(dy: &Tensor3<T>, time: usize) -> Tensor3<T> {
    let inv = T::from_f64(1.0 / time as f64);
    let mut dx = Tensor3::zeros(dy.batch, dy.channels, time);
    for (row, &g) in dx.data.chunks_exact_mut(time).zip(&dy.data) {
        row.fill(g * inv);
    }
    dx
}

/// Affine map `y = x W^T + b` on `(batch, in)` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `out x in`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Self {
            in_features,
            out_features,
            weight: uniform_init(rng, in_features * out_features, in_features),
            bias: uniform_init(rng, out_features, in_features),
        }
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Result<Vec<T>, NnError> {
        if x.len() != batch * self.in_features {
            return Err(NnError::Shape(format!(
                "linear expects {} features per row, got {} values for batch {batch}",
                self.in_features,
                x.len()
            )));
        }
        let mut y: Vec<T> = (0..batch).flat_map(|_| self.bias.iter().copied()).collect();
        T::gemm(
            batch,
            self.in_features,
            self.out_features,
            T::ONE,
            x,
            self.in_features as isize,
            1,
            &self.weight,
            1,
            self.in_features as isize,
            T::ONE,
            &mut y,
            self.out_features as isize,
            1,
        );
        Ok(y)
    }

    /// Returns `(grad_x, grad_weight, grad_bias)`.
    pub fn backward(&self, x: &[T], dy: &[T], batch: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let (i, o) = (self.in_features, self.out_features);
        let mut dx = vec![T::ZERO; batch * i];
        T::gemm(batch, o, i, T::ONE, dy, o as isize, 1, &self.weight, i as isize, 1, T::ZERO, &mut dx, i as isize, 1);
        let mut dw = vec![T::ZERO; o * i];
        T::gemm(o, batch, i, T::ONE, dy, 1, o as isize, x, i as isize, 1, T::ZERO, &mut dw, i as isize, 1);
        let mut db = vec![T::ZERO; o];
        for row in dy.chunks_exact(o) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        (dx, dw, db)
    }
}
