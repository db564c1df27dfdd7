//! Central finite-difference checks of every backward pass, in `f64` with
//! all stochastic state frozen.

use super::layers::{
    apply_mask, conv_backward, conv_forward, dropout_mask, leaky_relu, leaky_relu_backward, linear_backward,
    linear_forward, mp2_forward, pool_backward, softmax_xent,
};
use super::net::{Mode, Network, Noise, NoiseKey};
use super::spec::NetworkSpec;
use super::ssmp::{ssmp_forward, ssmp_plan, PoolPlan, SsmpStrategy};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng::{Domain, Stream};

/// Finite-difference step.
pub const EPS: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

/// Largest relative error of one checked quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `x`.
fn compare(name: &str, x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> GradReport {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + EPS;
        let up = f(&probe);
        probe[i] = x[i] - EPS;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * EPS)));
    }
    GradReport { name: name.to_string(), max_rel_err: worst, checked: x.len() }
}

fn normals(rng: &mut Stream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}

/// Shuffled values spaced at least `0.5 / n` apart, so no probe can swap
/// the order of two inputs to a max.
fn separated(rng: &mut Stream, n: usize) -> Vec<f64> {
    let step = 4.0 / n as f64;
    let mut v: Vec<f64> = (0..n).map(|i| -2.0 + step * (i as f64 + 0.25 + 0.5 * rng.unit())).collect();
    rng.shuffle(&mut v);
    v
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).expect("matching length")
}

fn functional(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Checks each layer kernel on random inputs against the loss
/// `L = Σ r_i y_i` with a random fixed `r` (softmax cross-entropy for the
/// output layer).
pub fn check_layers(seed: u64) -> Result<Vec<GradReport>> {
    let mut rng = Stream::new(seed, Domain::Test, &[0x006c_6179_6572]);
    let mut out = Vec::new();

    // convolution on a 2x5x5 input with three 3x3 filters
    let xs = [2, 5, 5];
    let ws = [3, 2, 3, 3];
    let x = normals(&mut rng, 50);
    let w = normals(&mut rng, 54);
    let b = normals(&mut rng, 3);
    let r = normals(&mut rng, 27);
    let conv_loss = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
        let y = conv_forward(&tensor(&xs, x), &tensor(&ws, w), &tensor(&[3], b)).expect("valid shapes");
        functional(&r, y.data())
    };
    let (mut gw, mut gb) = (vec![0.0; 54], vec![0.0; 3]);
    let mut gx = Tensor::zeros(&xs);
    conv_backward(&tensor(&xs, &x), &tensor(&ws, &w), &tensor(&[3, 3, 3], &r), &mut gw, &mut gb, Some(&mut gx))?;
    out.push(compare("conv3x3 input", &x, gx.data(), |p| conv_loss(p, &w, &b)));
    out.push(compare("conv3x3 weight", &w, &gw, |p| conv_loss(&x, p, &b)));
    out.push(compare("conv3x3 bias", &b, &gb, |p| conv_loss(&x, &w, p)));

    // 2x2 kernel variant
    let ws2 = [2, 2, 2, 2];
    let w2 = normals(&mut rng, 16);
    let r2 = normals(&mut rng, 32);
    let loss2 = |x: &[f64], w: &[f64]| -> f64 {
        let y = conv_forward(&tensor(&xs, x), &tensor(&ws2, w), &Tensor::zeros(&[2])).expect("valid shapes");
        functional(&r2, y.data())
    };
    let (mut gw2, mut gb2) = (vec![0.0; 16], vec![0.0; 2]);
    let mut gx2 = Tensor::zeros(&xs);
    conv_backward(&tensor(&xs, &x), &tensor(&ws2, &w2), &tensor(&[2, 4, 4], &r2), &mut gw2, &mut gb2, Some(&mut gx2))?;
    out.push(compare("conv2x2 input", &x, gx2.data(), |p| loss2(p, &w2)));
    out.push(compare("conv2x2 weight", &w2, &gw2, |p| loss2(&x, p)));

    // leaky ReLU, keeping inputs away from the kink
    let slope = 0.333;
    let x: Vec<f64> = normals(&mut rng, 64).into_iter().map(|v| if v.abs() < 1e-2 { v + 0.1 } else { v }).collect();
    let r = normals(&mut rng, 64);
    let relu_loss = |x: &[f64]| {
        let mut y = x.to_vec();
        leaky_relu(&mut y, slope);
        functional(&r, &y)
    };
    let mut y = x.clone();
    leaky_relu(&mut y, slope);
    let mut g = r.clone();
    leaky_relu_backward(&y, &mut g, slope);
    out.push(compare("leaky relu", &x, &g, relu_loss));

    // dropout with a frozen mask
    let mask: Vec<f64> = dropout_mask(64, 0.3, &mut rng);
    let mut g = r.clone();
    apply_mask(&mut g, &mask);
    out.push(compare("dropout", &x, &g, |p| {
        let mut y = p.to_vec();
        apply_mask(&mut y, &mask);
        functional(&r, &y)
    }));

    // 2x2 max pooling
    let ps = [2, 6, 6];
    let x = separated(&mut rng, 72);
    let r = normals(&mut rng, 18);
    let (_, argmax) = mp2_forward(&tensor(&ps, &x))?;
    let mut gx = Tensor::zeros(&ps);
    pool_backward(&r, &argmax, &mut gx);
    out.push(compare("max pool 2x2", &x, gx.data(), |p| {
        functional(&r, mp2_forward(&tensor(&ps, p)).expect("even extents").0.data())
    }));

    // stochastic pooling with a frozen plan
    let ss = [2, 7, 7];
    let plan = PoolPlan {
        rows: ssmp_plan(7, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng)?,
        cols: ssmp_plan(7, 1.5, SsmpStrategy::Ssmp1, 0, &mut rng)?,
    };
    let x = separated(&mut rng, 98);
    let (y, argmax) = ssmp_forward(&tensor(&ss, &x), &plan)?;
    let r = normals(&mut rng, y.len());
    let mut gx = Tensor::zeros(&ss);
    pool_backward(&r, &argmax, &mut gx);
    out.push(compare("stochastic max pool", &x, gx.data(), |p| {
        functional(&r, ssmp_forward(&tensor(&ss, p), &plan).expect("plan fits").0.data())
    }));

    // linear output with softmax cross-entropy
    let (ins, outs, label) = (12, 5, 3);
    let x = normals(&mut rng, ins);
    let w = normals(&mut rng, ins * outs);
    let b = normals(&mut rng, outs);
    let xent = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
        let z = linear_forward(x, &tensor(&[outs, ins], w), &tensor(&[outs], b)).expect("valid shapes");
        softmax_xent(&z, label).expect("label in range").0
    };
    let z = linear_forward(&x, &tensor(&[outs, ins], &w), &tensor(&[outs], &b))?;
    let (_, _, gz) = softmax_xent(&z, label)?;
    let (mut gw, mut gb, mut gx) = (vec![0.0; ins * outs], vec![0.0; outs], vec![0.0; ins]);
    linear_backward(&x, &tensor(&[outs, ins], &w), &gz, &mut gw, &mut gb, Some(&mut gx));
    out.push(compare("linear+softmax input", &x, &gx, |p| xent(p, &w, &b)));
    out.push(compare("linear+softmax weight", &w, &gw, |p| xent(&x, p, &b)));
    out.push(compare("linear+softmax bias", &b, &gb, |p| xent(&x, &w, p)));

    Ok(out)
}

/// Whole-network check: every parameter tensor of a randomly initialised
/// network, against the cross-entropy of one random input. Pooling plans and
/// dropout masks are drawn once and replayed for every probe.
pub fn check_network(spec: &NetworkSpec, seed: u64) -> Result<Vec<GradReport>> {
    let net = Network::<f64>::new(spec.clone(), seed)?;
    let mut rng = Stream::new(seed, Domain::Test, &[0x6e6574]);
    let n_in = spec.input_channels * spec.grid * spec.grid;
    let x = tensor(&[spec.input_channels, spec.grid, spec.grid], &normals(&mut rng, n_in));
    let label = rng.int_in(0, spec.categories() - 1);
    let key = NoiseKey { seed, ..NoiseKey::default() };
    let trace = net.forward(&x, Mode::Train, Noise::Keyed(key))?;
    let (_, _, gz) = softmax_xent(trace.logits(), label)?;
    let mut grads = net.zero_grads();
    net.backward(&x, &trace, &gz, &mut grads)?;

    let names = net.param_names();
    let mut out = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let mut probe_net = net.clone();
        let base = net.params()[k].data().to_vec();
        out.push(compare(name, &base, grads[k].data(), |p| {
            probe_net.params_mut()[k].data_mut().copy_from_slice(p);
            let t = probe_net.forward(&x, Mode::Train, Noise::Replay(&trace.noise)).expect("replayable");
            softmax_xent(t.logits(), label).expect("label in range").0
        }));
    }
    Ok(out)
}
