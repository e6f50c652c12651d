//! Finite-difference checks for every parameterized layer.

use autolabel::nn::{
    adaptive_avg_pool, adaptive_avg_pool_backward, cross_entropy, relu, relu_backward, BatchNorm1d, Conv1d,
    LayerOrder, Linear, Mode, Model, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{dot, numeric_grad, rel_err};

pub const H: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub err: f64,
}

fn check(name: impl Into<String>, analytic: &[f64], numeric: &[f64]) -> Check {
    Check {
        name: name.into(),
        err: rel_err(analytic, numeric),
    }
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn tensor(rng: &mut ChaCha8Rng, b: usize, c: usize, t: usize) -> Tensor3<f64> {
    Tensor3::from_vec(b, c, t, randn(rng, b * c * t)).unwrap()
}

pub fn conv(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (b, cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5));
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let pad = rng.gen_range(0..=k / 2);
    let time = rng.gen_range(k..k + 8);
    let layer = Conv1d::<f64>::new(cin, cout, k, pad, &mut rng);
    let x = tensor(&mut rng, b, cin, time);
    let out_time = layer.out_time(time);
    let r = randn(&mut rng, b * cout * out_time);
    let dy = Tensor3::from_vec(b, cout, out_time, r.clone()).unwrap();
    let (gx, gw, gb) = layer.backward(&x, &dy, true).unwrap();
    let shape = format!("conv b{b} in{cin} out{cout} k{k} p{pad} t{time}");

    let nw = numeric_grad(&layer.weight, H, |w| {
        let l = Conv1d { weight: w.to_vec(), ..layer.clone() };
        dot(&l.forward(&x).unwrap().data, &r)
    });
    let nb = numeric_grad(&layer.bias, H, |bias| {
        let l = Conv1d { bias: bias.to_vec(), ..layer.clone() };
        dot(&l.forward(&x).unwrap().data, &r)
    });
    let nx = numeric_grad(&x.data, H, |xd| {
        let xt = Tensor3::from_vec(b, cin, time, xd.to_vec()).unwrap();
        dot(&layer.forward(&xt).unwrap().data, &r)
    });
    vec![
        check(format!("{shape} weight"), &gw, &nw),
        check(format!("{shape} bias"), &gb, &nb),
        check(format!("{shape} input"), &gx.unwrap().data, &nx),
    ]
}

pub fn batchnorm(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB4);
    let (b, c, t) = (rng.gen_range(2..5), rng.gen_range(1..5), rng.gen_range(2..7));
    let mut layer = BatchNorm1d::<f64>::new(c);
    layer.gamma = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
    layer.beta = randn(&mut rng, c);
    let x = tensor(&mut rng, b, c, t);
    let r = randn(&mut rng, b * c * t);
    let dy = Tensor3::from_vec(b, c, t, r.clone()).unwrap();
    let shape = format!("batchnorm b{b} c{c} t{t}");
    let mut out = Vec::new();
    for mode in [Mode::Train, Mode::Eval] {
        let mut fwd = layer.clone();
        if mode == Mode::Eval {
            fwd.running_mean = randn(&mut rng, c);
            fwd.running_var = (0..c).map(|_| rng.gen_range(0.2..3.0)).collect();
        }
        let base = fwd.clone();
        let (_, cache) = fwd.forward(&x, mode).unwrap();
        let (gx, gg, gb) = base.backward(&cache, &dy);
        let eval = |l: &BatchNorm1d<f64>, xt: &Tensor3<f64>| dot(&l.clone().forward(xt, mode).unwrap().0.data, &r);
        let ng = numeric_grad(&base.gamma, H, |g| {
            eval(&BatchNorm1d { gamma: g.to_vec(), ..base.clone() }, &x)
        });
        let nb = numeric_grad(&base.beta, H, |be| {
            eval(&BatchNorm1d { beta: be.to_vec(), ..base.clone() }, &x)
        });
        let nx = numeric_grad(&x.data, H, |xd| eval(&base, &Tensor3::from_vec(b, c, t, xd.to_vec()).unwrap()));
        out.push(check(format!("{shape} {mode:?} gamma"), &gg, &ng));
        out.push(check(format!("{shape} {mode:?} beta"), &gb, &nb));
        out.push(check(format!("{shape} {mode:?} input"), &gx.data, &nx));
    }
    out
}

pub fn linear(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let (b, fin, fout) = (rng.gen_range(1..5), rng.gen_range(1..9), rng.gen_range(1..5));
    let layer = Linear::<f64>::new(fin, fout, &mut rng);
    let x = randn(&mut rng, b * fin);
    let r = randn(&mut rng, b * fout);
    let (gx, gw, gb) = layer.backward(&x, &r, b);
    let shape = format!("linear b{b} in{fin} out{fout}");
    let nw = numeric_grad(&layer.weight, H, |w| {
        dot(&Linear { weight: w.to_vec(), ..layer.clone() }.forward(&x, b).unwrap(), &r)
    });
    let nb = numeric_grad(&layer.bias, H, |bias| {
        dot(&Linear { bias: bias.to_vec(), ..layer.clone() }.forward(&x, b).unwrap(), &r)
    });
    let nx = numeric_grad(&x, H, |xv| dot(&layer.forward(xv, b).unwrap(), &r));
    vec![
        check(format!("{shape} weight"), &gw, &nw),
        check(format!("{shape} bias"), &gb, &nb),
        check(format!("{shape} input"), &gx, &nx),
    ]
}

pub fn relu_and_pool(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E);
    let (b, c, t) = (rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..8));
    // keep inputs away from the ReLU kink so the difference quotient is exact
    let data: Vec<f64> = (0..b * c * t)
        .map(|_| {
            let v: f64 = rng.gen_range(0.01..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor3::from_vec(b, c, t, data).unwrap();
    let r = randn(&mut rng, b * c * t);
    let dy = Tensor3::from_vec(b, c, t, r.clone()).unwrap();
    let shape = format!("b{b} c{c} t{t}");
    let g_relu = relu_backward(&x, &dy);
    let n_relu = numeric_grad(&x.data, H, |xd| {
        dot(&relu(&Tensor3::from_vec(b, c, t, xd.to_vec()).unwrap()).data, &r)
    });
    let rp = randn(&mut rng, b * c);
    let g_pool = adaptive_avg_pool_backward(&Tensor3::from_vec(b, c, 1, rp.clone()).unwrap(), t);
    let n_pool = numeric_grad(&x.data, H, |xd| {
        dot(&adaptive_avg_pool(&Tensor3::from_vec(b, c, t, xd.to_vec()).unwrap()).unwrap().data, &rp)
    });
    vec![
        check(format!("relu {shape}"), &g_relu.data, &n_relu),
        check(format!("pool {shape}"), &g_pool.data, &n_pool),
    ]
}

pub fn cross_entropy_check(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xCE);
    let b = rng.gen_range(1..8);
    let logits: Vec<f64> = (0..b * 3).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..3)).collect();
    let (_, g) = cross_entropy(&logits, &labels, 3).unwrap();
    let n = numeric_grad(&logits, H, |z| cross_entropy(z, &labels, 3).unwrap().0);
    check(format!("cross-entropy b{b}"), &g, &n)
}

/// ReLU on/off pattern of both blocks, recomputed from the public layers.
fn relu_mask(m: &Model<f64>, x: &Tensor3<f64>) -> Vec<bool> {
    let mut mask = Vec::new();
    let mut h = x.clone();
    for (conv, bn) in [(&m.conv1, &m.bn1), (&m.conv2, &m.bn2)] {
        let y = conv.forward(&h).unwrap();
        let pre = match m.order {
            LayerOrder::ConvReluBn => y,
            LayerOrder::ConvBnRelu => bn.clone().forward(&y, Mode::Train).unwrap().0,
        };
        mask.extend(pre.data.iter().map(|&v| v > 0.0));
        let act = relu(&pre);
        h = match m.order {
            LayerOrder::ConvReluBn => bn.clone().forward(&act, Mode::Train).unwrap().0,
            LayerOrder::ConvBnRelu => act,
        };
    }
    mask
}

/// End-to-end model gradient for every parameter group and the input.
///
/// The network is only piecewise smooth: `None` when some probe moved a ReLU
/// input across zero, which makes the difference quotient meaningless.
pub fn model(seed: u64, order: LayerOrder) -> Option<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x30);
    // at least 8 positions per norm channel; fewer makes the batch variance
    // nearly singular once ReLU zeroes most of them
    let (b, cin, t) = (rng.gen_range(2..4), rng.gen_range(1..4), rng.gen_range(4..9));
    let mut net = Model::<f64>::new(cin, order, seed);
    let x = tensor(&mut rng, b, cin, t);
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..3)).collect();
    let base_mask = relu_mask(&net, &x);
    let crossed = std::cell::Cell::new(false);
    let loss = |m: &Model<f64>, xt: &Tensor3<f64>| {
        if relu_mask(m, xt) != base_mask {
            crossed.set(true);
        }
        let (logits, _) = m.clone().forward(xt, Mode::Train).unwrap();
        cross_entropy(&logits, &labels, 3).unwrap().0
    };
    let (logits, cache) = net.clone().forward(&x, Mode::Train).unwrap();
    let (_, dlogits) = cross_entropy(&logits, &labels, 3).unwrap();
    let grads = net.backward(&cache, &dlogits, true).unwrap();
    let names = ["conv1.w", "conv1.b", "bn1.g", "bn1.b", "conv2.w", "conv2.b", "bn2.g", "bn2.b", "fc.w", "fc.b"];
    let values: Vec<Vec<f64>> = net.params_mut().iter().map(|p| p.to_vec()).collect();
    let mut out = Vec::new();
    for (gi, name) in names.iter().enumerate() {
        let numeric = numeric_grad(&values[gi], H, |p| {
            let mut probe = net.clone();
            probe.params_mut()[gi].copy_from_slice(p);
            loss(&probe, &x)
        });
        out.push(check(format!("model {order:?} b{b} in{cin} t{t} {name}"), &grads.groups[gi], &numeric));
    }
    let nx = numeric_grad(&x.data, H, |xd| loss(&net, &Tensor3::from_vec(b, cin, t, xd.to_vec()).unwrap()));
    out.push(check(format!("model {order:?} b{b} in{cin} t{t} input"), &grads.input.unwrap().data, &nx));
    (!crossed.get()).then_some(out)
}

/// Full-model checks for the first `n` kink-free draws from `seed` upward.
pub fn models(seed: u64, n: usize, order: LayerOrder) -> Vec<Check> {
    (seed..).filter_map(|s| model(s, order)).take(n).flatten().collect()
}

/// Every check for one seed.
pub fn suite(seed: u64) -> Vec<Check> {
    let mut all = conv(seed);
    all.extend(batchnorm(seed));
    all.extend(linear(seed));
    all.extend(relu_and_pool(seed));
    all.push(cross_entropy_check(seed));
    all
}
