//! Bidirectional cross-attention fusion of visual(+depth) and language
//! streams with zero-initialized tanh gates.
//!
//! Visual features travel as `[B, D, C_i]` with `D = H_i·W_i` (the transpose
//! of the `C_i × D` layout); language features as `[B, L, C_t]`. The 1×1
//! output convolution on the visual path is therefore a per-position linear map.

use ogrg_tensor::{Real, Tensor};

use crate::attention::{attend, Attended};
use crate::config::AlignerConfig;
use crate::encoders::LangInput;
use crate::error::{CoreError, Result};
use crate::nn::{Init, Linear, Scope, INIT_STD};

/// Projections for one attention direction.
pub struct Projections<T: Real> {
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
}

impl<T: Real> Projections<T> {
    fn new(s: &mut Scope<T>, d_query: usize, d_key: usize, d_out: usize) -> Self {
        Projections {
            wq: s.param("wq", &[d_query, d_out], Init::TruncNormal(INIT_STD)),
            wk: s.param("wk", &[d_key, d_out], Init::TruncNormal(INIT_STD)),
            wv: s.param("wv", &[d_key, d_out], Init::TruncNormal(INIT_STD)),
        }
    }
}

/// Every intermediate of one fusion stage.
pub struct FusedStage<T: Real> {
    pub f_in_vd: Tensor<T>,
    pub f_cross_v: Tensor<T>,
    /// Absent in one-way fusion.
    pub f_cross_l: Option<Tensor<T>>,
    pub f_back_v: Tensor<T>,
    pub f_back_l: Option<Tensor<T>>,
    pub f_v: Tensor<T>,
    pub f_l: Tensor<T>,
    /// Visual-query attention weights `[B·heads, D, L]`.
    pub attn_v: Tensor<T>,
    /// Language-query attention weights `[B·heads, L, D]`.
    pub attn_l: Option<Tensor<T>>,
}

pub struct AlignerStage<T: Real> {
    /// 1-based stage index.
    pub stage: usize,
    pub heads: usize,
    pub bidirectional: bool,
    pub visual: Projections<T>,
    pub language: Option<Projections<T>>,
    pub back_v: Linear<T>,
    pub back_l: Option<Linear<T>>,
    pub gate_v: Tensor<T>,
    pub gate_l: Option<Tensor<T>>,
}

/// `f_in_v + f_d`; the depth term is optional.
pub fn fuse_depth<T: Real>(f_in_v: &Tensor<T>, f_d: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    match f_d {
        None => Ok(f_in_v.clone()),
        Some(d) if d.shape() == f_in_v.shape() => Ok(f_in_v.add(d)?),
        Some(d) => Err(CoreError::Tensor(ogrg_tensor::TensorError::Dimension {
            op: "fuse_depth",
            lhs: f_in_v.shape().to_vec(),
            rhs: d.shape().to_vec(),
        })),
    }
}

/// Visual positions query language tokens; logits scaled by `1/√(C_i/heads)`.
pub fn cross_attend_visual<T: Real>(
    f_in_vd: &Tensor<T>,
    f_in_l: &Tensor<T>,
    lang: &LangInput,
    p: &Projections<T>,
    heads: usize,
) -> Result<Attended<T>> {
    let c = p.wq.dim(1);
    let q = f_in_vd.matmul(&p.wq)?;
    let k = f_in_l.matmul(&p.wk)?;
    let v = f_in_l.matmul(&p.wv)?;
    attend(&q, &k, &v, heads, ((c / heads) as f64).sqrt(), Some(&lang.keep), None)
}

/// Language tokens query visual positions; logits scaled by `1/√(C_t/heads)`.
/// Pad query rows of the output are zero.
pub fn cross_attend_language<T: Real>(
    f_in_l: &Tensor<T>,
    f_in_vd: &Tensor<T>,
    lang: &LangInput,
    p: &Projections<T>,
    heads: usize,
) -> Result<Attended<T>> {
    if f_in_vd.dim(1) == 0 {
        return Err(CoreError::input("cross-attention over an empty feature map"));
    }
    let ct = p.wq.dim(1);
    let q = f_in_l.matmul(&p.wq)?;
    let k = f_in_vd.matmul(&p.wk)?;
    let v = f_in_vd.matmul(&p.wv)?;
    let a = attend(&q, &k, &v, heads, ((ct / heads) as f64).sqrt(), None, None)?;
    Ok(Attended {
        out: a.out.mul(&lang.row_mask(ct))?,
        probs: a.probs,
    })
}

/// `ReLU(x·W + b)`: the 1×1 convolution (visual) or per-token linear layer (language).
pub fn project_fused<T: Real>(x: &Tensor<T>, proj: &Linear<T>) -> Result<Tensor<T>> {
    Ok(proj.forward(x)?.relu())
}

/// `f_in + tanh(γ)·f_back` with one gate parameter per channel.
pub fn gate_merge<T: Real>(f_in: &Tensor<T>, f_back: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    if f_in.shape() != f_back.shape() {
        return Err(CoreError::Tensor(ogrg_tensor::TensorError::Dimension {
            op: "gate_merge",
            lhs: f_in.shape().to_vec(),
            rhs: f_back.shape().to_vec(),
        }));
    }
    Ok(f_in.add(&f_back.mul(&gate.tanh())?)?)
}

impl<T: Real> AlignerStage<T> {
    pub fn new(s: &mut Scope<T>, stage: usize, c: usize, ct: usize, cfg: &AlignerConfig) -> Self {
        let bi = cfg.bidirectional;
        AlignerStage {
            stage,
            heads: cfg.heads,
            bidirectional: bi,
            visual: Projections::new(&mut s.sub("visual"), c, ct, c),
            language: bi.then(|| Projections::new(&mut s.sub("language"), ct, c, ct)),
            back_v: Linear::new(&mut s.sub("back_v"), c, c, true),
            back_l: bi.then(|| Linear::new(&mut s.sub("back_l"), ct, ct, true)),
            gate_v: s.param("gate_v", &[c], Init::Zeros),
            gate_l: bi.then(|| s.param("gate_l", &[ct], Init::Zeros)),
        }
    }

    /// One fusion stage. `f_d` is accepted only at stage 1.
    pub fn forward(
        &self,
        f_in_v: &Tensor<T>,
        f_in_l: &Tensor<T>,
        lang: &LangInput,
        f_d: Option<&Tensor<T>>,
    ) -> Result<FusedStage<T>> {
        if f_d.is_some() && self.stage != 1 {
            return Err(CoreError::Contract(format!(
                "depth features supplied to fusion stage {}; depth fuses at stage 1 only",
                self.stage
            )));
        }
        let f_in_vd = fuse_depth(f_in_v, f_d)?;
        let av = cross_attend_visual(&f_in_vd, f_in_l, lang, &self.visual, self.heads)?;
        let f_back_v = project_fused(&av.out, &self.back_v)?;
        let f_v = gate_merge(f_in_v, &f_back_v, &self.gate_v)?;
        let (f_cross_l, f_back_l, f_l, attn_l) = match (&self.language, &self.back_l, &self.gate_l) {
            (Some(p), Some(back), Some(gate)) => {
                let al = cross_attend_language(f_in_l, &f_in_vd, lang, p, self.heads)?;
                let fb = project_fused(&al.out, back)?;
                let fl = gate_merge(f_in_l, &fb, gate)?;
                (Some(al.out), Some(fb), fl, Some(al.probs))
            }
            _ => (None, None, f_in_l.clone(), None),
        };
        Ok(FusedStage {
            f_in_vd,
            f_cross_v: av.out,
            f_cross_l,
            f_back_v,
            f_back_l,
            f_v,
            f_l,
            attn_v: av.probs,
            attn_l,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Store;
    use ogrg_tensor::init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lang(b: usize, l: usize, real: usize) -> LangInput {
        LangInput {
            batch: b,
            len: l,
            ids: vec![2; b * l],
            keep: (0..b * l).map(|i| i % l < real).collect(),
        }
    }

    fn stage(store: &mut Store<f64>, stage: usize, c: usize, ct: usize) -> AlignerStage<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(stage as u64);
        AlignerStage::new(&mut Scope::new(store, &mut rng), stage, c, ct, &AlignerConfig::full())
    }

    #[test]
    fn depth_fusion_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Tensor<f64> = init::randn(&mut rng, &[1, 4, 3]);
        let z = Tensor::zeros(&[1, 4, 3]);
        assert_eq!(fuse_depth(&a, Some(&z)).unwrap().to_vec(), a.to_vec());
        assert_eq!(fuse_depth(&z, Some(&a)).unwrap().to_vec(), a.to_vec());
        assert!(fuse_depth(&a, Some(&Tensor::zeros(&[1, 4, 2]))).is_err());
    }

    #[test]
    fn single_token_broadcasts_its_value() {
        let mut store = Store::default();
        let st = stage(&mut store, 1, 4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fv: Tensor<f64> = init::randn(&mut rng, &[1, 5, 4]);
        let fl: Tensor<f64> = init::randn(&mut rng, &[1, 3, 6]);
        let li = lang(1, 3, 1);
        let out = cross_attend_visual(&fv, &fl, &li, &st.visual, 1).unwrap().out.to_vec();
        let value = fl.narrow(1, 0, 1).unwrap().matmul(&st.visual.wv).unwrap().to_vec();
        for row in out.chunks(4) {
            for (a, b) in row.iter().zip(&value) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_position_map_broadcasts_to_tokens() {
        let mut store = Store::default();
        let st = stage(&mut store, 2, 4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fv: Tensor<f64> = init::randn(&mut rng, &[1, 1, 4]);
        let fl: Tensor<f64> = init::randn(&mut rng, &[1, 3, 6]);
        let li = lang(1, 3, 2);
        let out = cross_attend_language(&fl, &fv, &li, st.language.as_ref().unwrap(), 1).unwrap().out.to_vec();
        let value = fv.matmul(&st.language.as_ref().unwrap().wv).unwrap().to_vec();
        for (j, row) in out.chunks(6).enumerate() {
            for (a, b) in row.iter().zip(&value) {
                let want = if j < 2 { *b } else { 0.0 };
                assert!((a - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gates_are_exact_identity() {
        let mut store = Store::default();
        let st = stage(&mut store, 1, 4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fv: Tensor<f64> = init::randn(&mut rng, &[2, 5, 4]);
        let fl: Tensor<f64> = init::randn(&mut rng, &[2, 3, 6]);
        let fd: Tensor<f64> = init::randn(&mut rng, &[2, 5, 4]);
        let out = st.forward(&fv, &fl, &lang(2, 3, 2), Some(&fd)).unwrap();
        let bits = |t: &Tensor<f64>| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.f_v), bits(&fv));
        assert_eq!(bits(&out.f_l), bits(&fl));
    }

    #[test]
    fn depth_after_stage_one_is_rejected() {
        let mut store = Store::default();
        let st = stage(&mut store, 2, 4, 6);
        let x = Tensor::<f64>::zeros(&[1, 2, 4]);
        let l = Tensor::<f64>::zeros(&[1, 3, 6]);
        let r = st.forward(&x, &l, &lang(1, 3, 3), Some(&x));
        assert!(matches!(r, Err(CoreError::Contract(_))));
    }

    #[test]
    fn gates_follow_tanh() {
        let f_in = Tensor::<f64>::from_vec(vec![1.0, 2.0], &[1, 1, 2]).unwrap();
        let f_back = Tensor::from_vec(vec![3.0, -1.0], &[1, 1, 2]).unwrap();
        let g = Tensor::from_vec(vec![0.5, 40.0], &[2]).unwrap();
        let y = gate_merge(&f_in, &f_back, &g).unwrap().to_vec();
        assert!((y[0] - (1.0 + 0.5f64.tanh() * 3.0)).abs() < 1e-15);
        assert_eq!(y[1], 1.0);
    }

    #[test]
    fn projection_is_nonnegative_and_identity_passes_positive_input() {
        let mut store = Store::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lin = Linear::<f64>::new(&mut Scope::new(&mut store, &mut rng), 3, 3, true);
        let x: Tensor<f64> = init::randn(&mut rng, &[2, 4, 3]);
        assert!(project_fused(&x, &lin).unwrap().to_vec().iter().all(|&v| v >= 0.0));
        assert!(project_fused(&Tensor::zeros(&[1, 3]), &lin).unwrap().to_vec().iter().all(|&v| v == 0.0));
        lin.weight.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let pos = x.abs();
        assert_eq!(project_fused(&pos, &lin).unwrap().to_vec(), pos.to_vec());
    }
}
