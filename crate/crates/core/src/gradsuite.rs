//! Finite-difference gradient suite: every differentiable tensor op, the
//! attention kernel, a full fusion stage, the decoder, the heads, the grasp
//! network and the losses, in f64 over many seeds.

use std::rc::Rc;

use ogrg_tensor::{
    finite_diff_check_inputs, init, BatchNormState, Border, FdOptions, KeyMask, Tensor, TensorError, WarpMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aligner::AlignerStage;
use crate::attention::attend;
use crate::config::{AlignerConfig, MgnConfig};
use crate::decoder::{FcnDecoder, Heads, RgsOutput};
use crate::encoders::LangInput;
use crate::error::{CoreError, Result};
use crate::losses::{motion_loss, rga_grounding_loss, rgs_loss, CellLabel, RgsTargets};
use crate::mgn::Mgn;
use crate::nn::{Scope, Store};

/// Pass threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;
pub const FD_EPS: f64 = 1e-6;

type Loss = Box<dyn Fn() -> ogrg_tensor::Result<Tensor<f64>>>;
type Build = fn(&mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Loss);

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub name: &'static str,
    pub seeds: u64,
    pub coords: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.max_rel_err < TOLERANCE)
    }
}

fn leaf(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let t: Tensor<f64> = init::randn(rng, shape);
    Tensor::param(t.to_vec(), shape).expect("shape matches data")
}

fn positive(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::param((0..n).map(|_| rng.gen_range(0.3..2.0)).collect(), shape).expect("shape matches data")
}

fn weights(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    init::randn(rng, shape)
}

fn lift(e: CoreError) -> TensorError {
    match e {
        CoreError::Tensor(t) => t,
        other => TensorError::Contract(other.to_string()),
    }
}

/// Replaces every parameter of `store` with unit-scale noise (gates
/// included) so that no path is trivially zero, and returns them.
fn randomize(store: &Store<f64>, rng: &mut ChaCha8Rng, scale: f64) -> Vec<Tensor<f64>> {
    let params = store.params();
    for p in &params {
        let mut d = p.data_mut();
        for v in d.iter_mut() {
            *v = scale * rng.gen_range(-1.5..1.5);
        }
    }
    params
}

macro_rules! unary {
    ($name:literal, $leaf:ident, $f:expr) => {
        ($name, |rng| {
            let x = $leaf(rng, &[3, 5]);
            let w = weights(rng, &[3, 5]);
            let xc = x.clone();
            let f: fn(&Tensor<f64>) -> ogrg_tensor::Result<Tensor<f64>> = $f;
            (vec![x], Box::new(move || Ok(f(&xc)?.mul(&w)?.sum())))
        })
    };
}

fn op_cases() -> Vec<(&'static str, Build)> {
    vec![
        unary!("relu", leaf, |x| Ok(x.relu())),
        unary!("sigmoid", leaf, |x| Ok(x.sigmoid())),
        unary!("tanh", leaf, |x| Ok(x.tanh())),
        unary!("exp", leaf, |x| Ok(x.exp())),
        unary!("ln", positive, |x| Ok(x.ln())),
        unary!("softplus", leaf, |x| Ok(x.scale(4.0).softplus())),
        unary!("square", leaf, |x| Ok(x.square())),
        unary!("sqrt", positive, |x| Ok(x.sqrt())),
        unary!("neg", leaf, |x| Ok(x.neg())),
        unary!("abs", leaf, |x| Ok(x.abs())),
        unary!("smooth_l1", leaf, |x| Ok(x.scale(2.0).smooth_l1())),
        unary!("add_scalar", leaf, |x| Ok(x.add_scalar(0.7))),
        unary!("powf", positive, |x| Ok(x.powf(2.5))),
        unary!("clamp", leaf, |x| Ok(x.clamp(-0.5, 0.8))),
        unary!("transpose_last", leaf, |x| x.transpose_last()?.reshape(&[3, 5])),
        unary!("narrow", leaf, |x| Tensor::concat(&[x.narrow(-1, 1, 3)?, x.narrow(-1, 0, 2)?], 1)),
        ("reductions", |rng| {
            let x = leaf(rng, &[3, 5]);
            let xc = x.clone();
            let f = move || {
                let a = xc.sum().square().add(&xc.mean().scale(3.0))?;
                a.add(&xc.sum_last().square().sum())?.add(&xc.mean_last().exp().sum())
            };
            (vec![x], Box::new(f))
        }),
        ("binary_broadcast", |rng| {
            let a = leaf(rng, &[2, 3, 4]);
            let b = positive(rng, &[4]);
            let c = positive(rng, &[3, 4]);
            let w = weights(rng, &[2, 3, 4]);
            let (ac, bc, cc) = (a.clone(), b.clone(), c.clone());
            let f = move || Ok(ac.add(&bc)?.sub(&cc)?.mul(&bc)?.div(&cc)?.mul(&w)?.sum());
            (vec![a, b, c], Box::new(f))
        }),
        ("matmul", |rng| {
            let a = leaf(rng, &[2, 3, 4]);
            let b = leaf(rng, &[4, 5]);
            let c = leaf(rng, &[2, 5, 4]);
            let d = leaf(rng, &[2, 6, 4]);
            let w = weights(rng, &[2, 3, 6]);
            let (ac, bc, cc, dc) = (a.clone(), b.clone(), c.clone(), d.clone());
            let f = move || Ok(ac.matmul(&bc)?.matmul(&cc)?.matmul_t(&dc)?.mul(&w)?.sum());
            (vec![a, b, c, d], Box::new(f))
        }),
        ("softmax", |rng| {
            let x = leaf(rng, &[2, 3, 5]);
            let w = weights(rng, &[2, 3, 5]);
            let keep: Vec<bool> = (0..10).map(|i| i != 3 && i != 9).collect();
            let mask = KeyMask::new(2, 5, keep).expect("valid mask");
            let xc = x.clone();
            let f = move || {
                let a = xc.softmax_lastdim(None)?;
                let b = xc.scale(2.0).softmax_lastdim(Some(&mask))?;
                Ok(a.add(&b)?.mul(&w)?.sum())
            };
            (vec![x], Box::new(f))
        }),
        ("conv2d", |rng| {
            let x = leaf(rng, &[2, 2, 5, 6]);
            let k1 = leaf(rng, &[3, 2, 3, 3]);
            let b1 = leaf(rng, &[3]);
            let k2 = leaf(rng, &[2, 3, 2, 2]);
            let k3 = leaf(rng, &[2, 2, 1, 1]);
            let w = weights(rng, &[2, 2, 2, 2]);
            let (xc, k1c, b1c, k2c, k3c) = (x.clone(), k1.clone(), b1.clone(), k2.clone(), k3.clone());
            let f = move || {
                let y = xc.conv2d(&k1c, Some(&b1c), 2, 1)?;
                let y = y.conv2d(&k2c, None, 1, 0)?.conv2d(&k3c, None, 1, 0)?;
                Ok(y.mul(&w)?.sum())
            };
            (vec![x, k1, b1, k2, k3], Box::new(f))
        }),
        ("batchnorm2d", |rng| {
            let x = leaf(rng, &[2, 3, 2, 2]);
            let g = positive(rng, &[3]);
            let b = leaf(rng, &[3]);
            let w = weights(rng, &[2, 3, 2, 2]);
            let (xc, gc, bc) = (x.clone(), g.clone(), b.clone());
            let f = move || {
                let mut total = Tensor::scalar(0.0);
                for train in [true, false] {
                    let rm = Tensor::zeros(&[3]);
                    let rv = Tensor::full(&[3], 1.5);
                    let state = BatchNormState {
                        running_mean: &rm,
                        running_var: &rv,
                        momentum: 0.1,
                        eps: 1e-5,
                        train,
                    };
                    total = total.add(&xc.batchnorm2d(&gc, &bc, state)?.mul(&w)?.sum())?;
                }
                Ok(total)
            };
            (vec![x, g, b], Box::new(f))
        }),
        ("layernorm", |rng| {
            let x = leaf(rng, &[3, 6]);
            let g = positive(rng, &[6]);
            let b = leaf(rng, &[6]);
            let w = weights(rng, &[3, 6]);
            let (xc, gc, bc) = (x.clone(), g.clone(), b.clone());
            (vec![x, g, b], Box::new(move || Ok(xc.layernorm(&gc, &bc, 1e-5)?.mul(&w)?.sum())))
        }),
        ("shape_ops", |rng| {
            let a = leaf(rng, &[2, 3, 4]);
            let b = leaf(rng, &[2, 1, 4]);
            let w = weights(rng, &[4, 2, 4]);
            let idx = Rc::new(vec![0usize, 5, 5, 11, 2, 7]);
            let (ac, bc) = (a.clone(), b.clone());
            let f = move || {
                let p = Tensor::concat(&[ac.clone(), bc.clone()], 1)?.permute(&[1, 0, 2])?;
                let g = ac.reshape(&[24])?.gather(idx.clone(), &[2, 3])?;
                p.mul(&w)?.sum().add(&g.square().sum())
            };
            (vec![a, b], Box::new(f))
        }),
        ("embedding", |rng| {
            let table = leaf(rng, &[5, 3]);
            let w = weights(rng, &[4, 3]);
            let tc = table.clone();
            (vec![table], Box::new(move || Ok(tc.embedding(&[1, 4, 1, 0])?.mul(&w)?.sum())))
        }),
        ("upsample_bilinear", |rng| {
            let x = leaf(rng, &[2, 3, 3]);
            let w = weights(rng, &[2, 6, 6]);
            let xc = x.clone();
            (vec![x], Box::new(move || Ok(xc.upsample_bilinear(2)?.mul(&w)?.sum())))
        }),
        ("rotation_warp", |rng| {
            let x = leaf(rng, &[2, 7, 7]);
            let w = weights(rng, &[2, 7, 7]);
            let angle = rng.gen_range(-1.5..1.5);
            let fill = Rc::new(WarpMap::rotation(7, 7, angle, Border::Fill));
            let clamp = Rc::new(WarpMap::rotation(7, 7, -angle, Border::Clamp));
            let xc = x.clone();
            (vec![x], Box::new(move || Ok(xc.warp(&fill)?.warp(&clamp)?.mul(&w)?.sum())))
        }),
    ]
}

fn lang(rng: &mut ChaCha8Rng, b: usize, l: usize) -> LangInput {
    let real: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=l)).collect();
    LangInput {
        batch: b,
        len: l,
        ids: vec![2; b * l],
        keep: (0..b * l).map(|i| i % l < real[i / l]).collect(),
    }
}

fn model_cases() -> Vec<(&'static str, Build)> {
    vec![
        ("attention", |rng| {
            let q = leaf(rng, &[2, 3, 4]);
            let k = leaf(rng, &[2, 5, 4]);
            let v = leaf(rng, &[2, 5, 6]);
            let bias = leaf(rng, &[1, 2, 3, 5]);
            let w = weights(rng, &[2, 3, 6]);
            let keep: Vec<bool> = (0..10).map(|i| i % 5 != 2).collect();
            let (qc, kc, vc, bc) = (q.clone(), k.clone(), v.clone(), bias.clone());
            let f = move || {
                let a = attend(&qc, &kc, &vc, 2, 2.0f64.sqrt(), Some(&keep), Some(&bc)).map_err(lift)?;
                a.out.mul(&w)?.sum().add(&a.probs.square().sum())
            };
            (vec![q, k, v, bias], Box::new(f))
        }),
        ("bi_align_stage", |rng| {
            let (b, n, l, c, ct) = (2, 6, 4, 4, 6);
            let cfg = AlignerConfig {
                heads: 2,
                bidirectional: true,
                depth: true,
                direct_bridge: false,
            };
            let mut store = Store::default();
            let mut init_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let stage = AlignerStage::new(&mut Scope::new(&mut store, &mut init_rng), 1, c, ct, &cfg);
            let mut inputs = randomize(&store, rng, 0.5);
            let fv = leaf(rng, &[b, n, c]);
            let fl = leaf(rng, &[b, l, ct]);
            let fd = leaf(rng, &[b, n, c]);
            inputs.extend([fv.clone(), fl.clone(), fd.clone()]);
            let lg = lang(rng, b, l);
            let wv = weights(rng, &[b, n, c]);
            let wl = weights(rng, &[b, l, ct]);
            let f = move || {
                let s = stage.forward(&fv, &fl, &lg, Some(&fd)).map_err(lift)?;
                s.f_v.mul(&wv)?.sum().add(&s.f_l.mul(&wl)?.sum())
            };
            (inputs, Box::new(f))
        }),
        ("decoder_and_heads", |rng| {
            let channels = [2, 4, 8, 16];
            let mut store = Store::default();
            let mut init_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let mut s = Scope::new(&mut store, &mut init_rng);
            let dec = FcnDecoder::new(&mut s.sub("decoder"), &channels);
            let heads = Heads::new(&mut s.sub("heads"), channels[0], true);
            drop(s);
            let inputs = randomize(&store, rng, 0.5);
            let v: Vec<Tensor<f64>> = (0..4).map(|i| weights(rng, &[1, channels[i], 8 >> i, 8 >> i])).collect();
            let w = weights(rng, &[1, 6, 32, 32]);
            let f = move || {
                let y = dec.forward(&v, false).map_err(lift)?;
                let r = heads.rgs(&y).map_err(lift)?;
                let all = Tensor::concat(&[r.m, r.q, r.theta, r.p], 1)?;
                Ok(all.mul(&w)?.sum())
            };
            (inputs, Box::new(f))
        }),
        ("grasp_network_and_motion_loss", |rng| {
            let mgn: Mgn<f64> = Mgn::new(&MgnConfig { channels: [2, 3] }, rng.gen()).expect("valid config");
            let inputs = randomize(&mgn.store, rng, 0.5);
            let x: Tensor<f64> = init::randn(rng, &[2, 5, 8, 8]);
            let ks = [rng.gen_range(0..6), rng.gen_range(0..6)];
            let labels = [
                CellLabel { x: rng.gen_range(0..8), y: rng.gen_range(0..8), k: 0, label: 1 },
                CellLabel { x: rng.gen_range(0..8), y: rng.gen_range(0..8), k: 0, label: 0 },
            ];
            let w = weights(rng, &[2, 1, 8, 8]);
            let f = move || {
                let a = mgn.forward_channels(&x, &ks, false).map_err(lift)?;
                motion_loss(&a, &labels).map_err(lift)?.add(&a.mul(&w)?.sum())
            };
            (inputs, Box::new(f))
        }),
        ("losses", |rng| {
            let (h, w) = (3, 4);
            let m = leaf(rng, &[2, 2, h, w]);
            let q = leaf(rng, &[2, 1, h, w]);
            let th = leaf(rng, &[2, 2, h, w]);
            let p = leaf(rng, &[2, 1, h, w]);
            let mask: Vec<f32> = (0..2 * h * w).map(|i| ((i * 5) % 3 == 0) as u8 as f32).collect();
            let region: Tensor<f64> =
                Tensor::from_vec((0..2 * h * w).map(|i| (i % 2) as f64).collect(), &[2, 1, h, w]).expect("shape");
            let region2 = Tensor::concat(&[region.clone(), region.clone()], 1).expect("shape");
            let targets = RgsTargets {
                mask: mask.clone(),
                q: Tensor::from_vec((0..2 * h * w).map(|i| (i % 2) as f64).collect(), &[2, 1, h, w]).expect("shape"),
                theta: init::randn(rng, &[2, 2, h, w]).scale(3.0),
                p: init::randn(rng, &[2, 1, h, w]),
                region,
                region2,
            };
            let (mc, qc, tc, pc) = (m.clone(), q.clone(), th.clone(), p.clone());
            let f = move || {
                let out = RgsOutput { m: mc.clone(), q: qc.sigmoid(), theta: tc.scale(2.0), p: pc.clone() };
                let a = rgs_loss(&out, &targets, &Default::default()).map_err(lift)?.total;
                let b = rga_grounding_loss(&mc, &mask, &Default::default()).map_err(lift)?;
                a.add(&b)
            };
            (vec![m, q, th, p], Box::new(f))
        }),
    ]
}

/// Runs every case over `seeds` seeds, checking up to `max_coords`
/// coordinates per input. `progress` sees each finished case.
pub fn run(seeds: u64, max_coords: usize, mut progress: impl FnMut(&CaseReport)) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    for (name, build) in op_cases().into_iter().chain(model_cases()) {
        let mut case = CaseReport {
            name,
            seeds,
            coords: 0,
            max_rel_err: 0.0,
        };
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919).wrapping_add(1));
            let (inputs, f) = build(&mut rng);
            let opts = FdOptions {
                eps: FD_EPS,
                max_coords: Some(max_coords),
                seed,
            };
            let r = finite_diff_check_inputs(&f, &inputs, &opts)?;
            case.coords += r.coords_checked;
            case.max_rel_err = case.max_rel_err.max(r.max_rel_err);
        }
        progress(&case);
        report.cases.push(case);
    }
    Ok(report)
}
