//! Central finite-difference checks of the autodiff engine, in `f64`.
//!
//! Errors are reported as `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`;
//! the floor keeps round-off on near-zero derivatives from dominating.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{Array, ConvSpec, Graph, Var};
use crate::error::Result;
use crate::rng::{self, Rng};

/// Step used by the central differences.
pub const STEP: f64 = 1e-5;

/// Result of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Scalar-valued graph builder over a list of leaves.
pub trait ScalarFn: Fn(&mut Graph<f64>, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>> ScalarFn for F {}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn eval(f: &impl ScalarFn, inputs: &[Array<f64>]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone(), true)).collect();
    let y = f(&mut g, &vars)?;
    Ok(g.scalar_value(y))
}

/// Analytic gradients of `f` at `inputs`.
pub fn analytic(f: &impl ScalarFn, inputs: &[Array<f64>]) -> Result<Vec<Array<f64>>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(a.clone(), true)).collect();
    let y = f(&mut g, &vars)?;
    let gs = g.grad(y, &vars)?;
    Ok(gs.iter().map(|v| g.value(*v).clone()).collect())
}

/// Maximum relative error between analytic and central-difference gradients
/// of `f` with respect to every element of every input.
pub fn first_order(f: &impl ScalarFn, inputs: &[Array<f64>]) -> Result<(f64, usize)> {
    let grads = analytic(f, inputs)?;
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut work = inputs.to_vec();
    for (i, ga) in grads.iter().enumerate() {
        for j in 0..ga.len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let plus = eval(f, &work)?;
            work[i].data_mut()[j] = orig - STEP;
            let minus = eval(f, &work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(rel_err(ga.data()[j], numeric));
            count += 1;
        }
    }
    Ok((worst, count))
}

/// Checks the second backward pass: the scalar `<c, grad f>` for a fixed random
/// direction `c` is differentiated through the graph and compared with
/// finite differences of the first backward pass.
pub fn second_order(f: &impl ScalarFn, inputs: &[Array<f64>], seed: u64) -> Result<(f64, usize)> {
    let mut r = rng::seeded(seed);
    let dirs: Vec<Array<f64>> = inputs.iter().map(|a| random_array(&mut r, a.shape())).collect();
    let h = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var> {
        let y = f(g, vars)?;
        let gs = g.grad(y, vars)?;
        let mut acc: Option<Var> = None;
        for (gv, d) in gs.iter().zip(&dirs) {
            let c = g.constant(d.clone());
            let p = g.mul(*gv, c)?;
            let s = g.sum(p);
            acc = Some(match acc {
                Some(a) => g.add(a, s)?,
                None => s,
            });
        }
        Ok(acc.expect("at least one input"))
    };
    first_order(&h, inputs)
}

pub fn random_array(r: &mut Rng, shape: &[usize]) -> Array<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(r)).collect();
    Array::new(shape.to_vec(), data).expect("length matches shape")
}

/// Random values with magnitude in `[lo, hi]` and random sign.
pub fn random_away_from_zero(r: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Array<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = r.random_range(lo..hi);
            if r.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Array::new(shape.to_vec(), data).expect("length matches shape")
}

/// Contracts a tensor-valued output with a fixed random weight so that every
/// output element gets a distinct upstream gradient.
pub fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut r = rng::seeded(seed);
    let w = random_array(&mut r, g.shape(y));
    let c = g.constant(w);
    let p = g.mul(y, c)?;
    Ok(g.sum(p))
}

/// A six-layer net touching strided, dilated and transposed convolutions, a
/// skip concat, a crop and a dense layer.
pub fn mixed_net(g: &mut Graph<f64>, v: &[Var]) -> Result<Var> {
    let [x, w1, b1, w2, w3, w4, w5, w6] = [v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]];
    let h1 = g.conv2d(x, w1, ConvSpec::same(3, 1))?;
    let h1 = g.add_bias(h1, b1)?;
    let h1 = g.leaky_relu(h1, 0.2);
    let h2 = g.conv2d(h1, w2, ConvSpec::down(3))?;
    let h2 = g.leaky_relu(h2, 0.2);
    let h3 = g.conv2d(h2, w3, ConvSpec::same(3, 2))?;
    let h3 = g.leaky_relu(h3, 0.2);
    let (hh, ww) = (g.shape(h1)[2], g.shape(h1)[3]);
    let h4 = g.conv2d_transpose(h3, w4, ConvSpec::down(3), (hh, ww))?;
    let h4 = g.leaky_relu(h4, 0.2);
    let cat = g.concat(&[h4, h1])?;
    let h5 = g.conv2d(cat, w5, ConvSpec::same(3, 1))?;
    let h5 = g.crop(h5, &[(1, 2), (3, 0)], 4, 4)?;
    let n = g.shape(h5)[0];
    let flat = g.reshape(h5, &[n, 2 * 16])?;
    let out = g.matmul(flat, w6)?;
    let sq = g.mul(out, out)?;
    Ok(g.mean(sq))
}

pub fn mixed_net_inputs(seed: u64) -> Vec<Array<f64>> {
    let mut r = rng::seeded(seed);
    let shapes: [&[usize]; 8] = [
        &[2, 3, 8, 8],
        &[4, 3, 3, 3],
        &[4],
        &[4, 4, 3, 3],
        &[4, 4, 3, 3],
        &[4, 4, 3, 3],
        &[2, 8, 3, 3],
        &[32, 2],
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut a = random_array(&mut r, s);
            let k = match i {
                0 => 1.0,
                2 => 0.5,
                7 => 1.0 / Float::sqrt(32.0),
                _ => 1.0 / Float::sqrt(s[1..].iter().product::<usize>() as f64),
            };
            a.data_mut().iter_mut().for_each(|v| *v *= k);
            a
        })
        .collect()
}

type Builder = fn(&mut Graph<f64>, &[Var]) -> Result<Var>;

struct Case {
    name: &'static str,
    inputs: Vec<Array<f64>>,
    f: Builder,
}

fn ws(g: &mut Graph<f64>, y: Var) -> Result<Var> {
    weighted_sum(g, y, 99)
}

fn cases(seed: u64) -> Vec<Case> {
    let mut r = rng::seeded(seed);
    let mut rs = |s: &[usize]| random_array(&mut r, s);
    let n = |r: &mut Rng, lo: usize, hi: usize| r.random_range(lo..=hi);
    let mut r2 = rng::seeded(rng::derive(seed, 1));
    let (b, c, h, w) = (n(&mut r2, 1, 2), n(&mut r2, 1, 3), n(&mut r2, 3, 6), n(&mut r2, 3, 6));
    let sh = [b, c, h, w];
    let even = [b, c, 2 * n(&mut r2, 2, 3), 2 * n(&mut r2, 2, 3)];
    let mut pos = |s: &[usize]| {
        let mut a = random_away_from_zero(&mut r2, s, 0.5, 2.0);
        a.data_mut().iter_mut().for_each(|v| *v = v.abs());
        a
    };
    let p1 = pos(&sh);
    let p2 = pos(&sh);
    let mut r3 = rng::seeded(rng::derive(seed, 2));
    let away = random_away_from_zero(&mut r3, &sh, 0.05, 2.0);
    let clampable = {
        let mut a = random_away_from_zero(&mut r3, &sh, 0.05, 2.0);
        // keep every value at least 0.05 from the clamp bounds at +-1
        a.data_mut().iter_mut().for_each(|v| {
            if (v.abs() - 1.0).abs() < 0.05 {
                *v *= 0.8;
            }
        });
        a
    };
    vec![
        Case { name: "add", inputs: vec![rs(&sh), rs(&sh)], f: |g, v| { let y = g.add(v[0], v[1])?; ws(g, y) } },
        Case { name: "sub", inputs: vec![rs(&sh), rs(&sh)], f: |g, v| { let y = g.sub(v[0], v[1])?; ws(g, y) } },
        Case { name: "mul", inputs: vec![rs(&sh), rs(&sh)], f: |g, v| { let y = g.mul(v[0], v[1])?; ws(g, y) } },
        Case { name: "div", inputs: vec![rs(&sh), p1.clone()], f: |g, v| { let y = g.div(v[0], v[1])?; ws(g, y) } },
        Case { name: "scale", inputs: vec![rs(&sh)], f: |g, v| { let y = g.scale(v[0], -1.7); ws(g, y) } },
        Case { name: "add_scalar", inputs: vec![rs(&sh)], f: |g, v| { let y = g.add_scalar(v[0], 0.3); ws(g, y) } },
        Case { name: "sqrt", inputs: vec![p2], f: |g, v| { let y = g.sqrt(v[0]); ws(g, y) } },
        Case { name: "abs", inputs: vec![away.clone()], f: |g, v| { let y = g.abs(v[0]); ws(g, y) } },
        Case { name: "leaky_relu", inputs: vec![away], f: |g, v| { let y = g.leaky_relu(v[0], 0.2); ws(g, y) } },
        Case { name: "clamp", inputs: vec![clampable], f: |g, v| { let y = g.clamp(v[0], -1.0, 1.0); ws(g, y) } },
        Case { name: "sigmoid", inputs: vec![rs(&sh)], f: |g, v| { let y = g.sigmoid(v[0]); ws(g, y) } },
        Case { name: "softplus", inputs: vec![rs(&sh)], f: |g, v| { let y = g.softplus(v[0]); ws(g, y) } },
        Case { name: "add_bias", inputs: vec![rs(&sh), rs(&[c])], f: |g, v| { let y = g.add_bias(v[0], v[1])?; ws(g, y) } },
        Case { name: "sum_to_channels", inputs: vec![rs(&sh)], f: |g, v| { let y = g.sum_to_channels(v[0])?; ws(g, y) } },
        Case {
            name: "broadcast_channels",
            inputs: vec![rs(&[c])],
            f: |g, v| {
                let n = g.shape(v[0])[0];
                let y = g.broadcast_channels(v[0], &[2, n, 3, 2])?;
                ws(g, y)
            },
        },
        Case { name: "channel_sum", inputs: vec![rs(&sh)], f: |g, v| { let y = g.channel_sum(v[0])?; ws(g, y) } },
        Case { name: "channel_repeat", inputs: vec![rs(&[b, 1, h, w])], f: |g, v| { let y = g.channel_repeat(v[0], 3)?; ws(g, y) } },
        Case { name: "sum", inputs: vec![rs(&sh)], f: |g, v| { let y = g.sum(v[0]); let y2 = g.mul(y, y)?; Ok(g.sum(y2)) } },
        Case { name: "mean", inputs: vec![rs(&sh)], f: |g, v| { let y = g.mean(v[0]); let y2 = g.mul(y, y)?; Ok(g.sum(y2)) } },
        Case { name: "sum_sq", inputs: vec![rs(&sh)], f: |g, v| Ok(g.sum_sq(v[0])) },
        Case { name: "expand", inputs: vec![rs(&[1])], f: |g, v| { let y = g.expand(v[0], &[2, 3])?; ws(g, y) } },
        Case { name: "sum_per_sample", inputs: vec![rs(&sh)], f: |g, v| { let y = g.sum_per_sample(v[0]); ws(g, y) } },
        Case {
            name: "expand_per_sample",
            inputs: vec![rs(&[b])],
            f: |g, v| {
                let n = g.shape(v[0])[0];
                let y = g.expand_per_sample(v[0], &[n, 2, 3])?;
                ws(g, y)
            },
        },
        Case {
            name: "conv2d",
            inputs: vec![rs(&sh), rs(&[2, c, 3, 3])],
            f: |g, v| { let y = g.conv2d(v[0], v[1], ConvSpec::same(3, 1))?; ws(g, y) },
        },
        Case {
            name: "conv2d_strided",
            inputs: vec![rs(&even), rs(&[2, c, 3, 3])],
            f: |g, v| { let y = g.conv2d(v[0], v[1], ConvSpec::down(3))?; ws(g, y) },
        },
        Case {
            name: "conv2d_dilated",
            inputs: vec![rs(&sh), rs(&[2, c, 3, 3])],
            f: |g, v| { let y = g.conv2d(v[0], v[1], ConvSpec::same(3, 2))?; ws(g, y) },
        },
        Case {
            name: "conv2d_transpose",
            inputs: vec![rs(&sh), rs(&[c, 2, 3, 3])],
            f: |g, v| {
                let s = g.shape(v[0]).to_vec();
                let y = g.conv2d_transpose(v[0], v[1], ConvSpec::down(3), (2 * s[2], 2 * s[3]))?;
                ws(g, y)
            },
        },
        Case {
            name: "conv2d_bwd_filter",
            inputs: vec![rs(&even), rs(&[b, 2, even[2] / 2, even[3] / 2])],
            f: |g, v| { let y = g.conv2d_bwd_filter(v[0], v[1], ConvSpec::down(3), (3, 3))?; ws(g, y) },
        },
        Case { name: "matmul", inputs: vec![rs(&[h, w]), rs(&[w, c])], f: |g, v| { let y = g.matmul(v[0], v[1])?; ws(g, y) } },
        Case { name: "transpose", inputs: vec![rs(&[h, w])], f: |g, v| { let y = g.transpose(v[0])?; ws(g, y) } },
        Case {
            name: "reshape",
            inputs: vec![rs(&sh)],
            f: |g, v| {
                let n = g.value(v[0]).len();
                let y = g.reshape(v[0], &[n])?;
                ws(g, y)
            },
        },
        Case { name: "concat", inputs: vec![rs(&sh), rs(&[b, 2, h, w])], f: |g, v| { let y = g.concat(&[v[0], v[1], v[0]])?; ws(g, y) } },
        Case { name: "slice_channels", inputs: vec![rs(&[b, 4, h, w])], f: |g, v| { let y = g.slice_channels(v[0], 1, 2)?; ws(g, y) } },
        Case { name: "pad_channels", inputs: vec![rs(&sh)], f: |g, v| { let c = g.shape(v[0])[1]; let y = g.pad_channels(v[0], 1, c + 3)?; ws(g, y) } },
        Case {
            name: "crop",
            inputs: vec![rs(&[2, c, 6, 6])],
            f: |g, v| { let y = g.crop(v[0], &[(0, 2), (3, 1)], 3, 3)?; ws(g, y) },
        },
        Case {
            name: "uncrop",
            inputs: vec![rs(&[2, c, 3, 3])],
            f: |g, v| { let y = g.uncrop(v[0], &[(0, 2), (3, 1)], 6, 6)?; ws(g, y) },
        },
    ]
}

/// Runs the first-order check on every primitive, the first- and
/// second-order checks on the mixed net, and the second-order check on a
/// few primitives with non-trivial curvature.
pub fn run_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for case in cases(seed) {
        let (e, n) = first_order(&case.f, &case.inputs)?;
        out.push(CheckReport { name: case.name.into(), max_rel_err: e, checked: n, tolerance: 1e-4 });
    }
    let inputs = mixed_net_inputs(seed);
    let (e, n) = first_order(&mixed_net, &inputs)?;
    out.push(CheckReport { name: "mixed_net".into(), max_rel_err: e, checked: n, tolerance: 1e-4 });
    let (e, n) = second_order(&mixed_net, &inputs, seed)?;
    out.push(CheckReport { name: "mixed_net_second_order".into(), max_rel_err: e, checked: n, tolerance: 1e-3 });
    for case in cases(seed) {
        if matches!(case.name, "mul" | "div" | "sqrt" | "sigmoid" | "softplus" | "conv2d" | "conv2d_transpose" | "conv2d_bwd_filter" | "matmul") {
            let (e, n) = second_order(&case.f, &case.inputs, seed)?;
            out.push(CheckReport {
                name: alloc::format!("{}_second_order", case.name),
                max_rel_err: e,
                checked: n,
                tolerance: 1e-3,
            });
        }
    }
    Ok(out)
}
