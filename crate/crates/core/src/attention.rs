//! Scaled dot-product attention shared by the backbones and the aligner.

use ogrg_tensor::{KeyMask, Real, Tensor};

use crate::error::{CoreError, Result};

/// Attention output and the weights that produced it.
pub struct Attended<T: Real> {
    /// `[B, Nq, Cv]`.
    pub out: Tensor<T>,
    /// `[B·heads, Nq, Nk]`; each row sums to one over unmasked keys.
    pub probs: Tensor<T>,
}

fn split_heads<T: Real>(x: &Tensor<T>, heads: usize) -> Result<Tensor<T>> {
    let &[b, n, c] = x.shape() else {
        return Err(CoreError::Contract(format!("attention operand must be [B, N, C], got {:?}", x.shape())));
    };
    if c % heads != 0 {
        return Err(CoreError::Contract(format!("{heads} heads do not divide {c} channels")));
    }
    if heads == 1 {
        return Ok(x.clone());
    }
    Ok(x.reshape(&[b, n, heads, c / heads])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[b * heads, n, c / heads])?)
}

fn merge_heads<T: Real>(x: &Tensor<T>, heads: usize) -> Result<Tensor<T>> {
    if heads == 1 {
        return Ok(x.clone());
    }
    let &[bh, n, d] = x.shape() else { unreachable!("split_heads output is 3-D") };
    Ok(x.reshape(&[bh / heads, heads, n, d])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[bh / heads, n, heads * d])?)
}

/// `softmax(q·kᵀ / denom)·v` per head.
///
/// `key_keep` (length `B·Nk`) marks keys that may be attended to. `bias`, of
/// shape `[G, heads, Nq, Nk]`, is added to the logits of batch items in
/// consecutive groups of `G` (used for shifted-window masks).
pub fn attend<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
    denom: f64,
    key_keep: Option<&[bool]>,
    bias: Option<&Tensor<T>>,
) -> Result<Attended<T>> {
    let (b, nq, nk) = (q.dim(0), q.dim(1), k.dim(1));
    if nk == 0 {
        return Err(CoreError::input("attention over zero keys"));
    }
    if k.dim(0) != b || v.dim(0) != b || v.dim(1) != nk || k.dim(2) != q.dim(2) {
        return Err(CoreError::Contract(format!(
            "attention shapes q {:?}, k {:?}, v {:?} disagree",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let (qh, kh, vh) = (split_heads(q, heads)?, split_heads(k, heads)?, split_heads(v, heads)?);
    let mut logits = qh.matmul_t(&kh)?.scale(T::lit(1.0 / denom));
    if let Some(bias) = bias {
        let g = bias.dim(0);
        if b % g != 0 {
            return Err(CoreError::Contract(format!("bias groups {g} do not divide batch {b}")));
        }
        logits = logits
            .reshape(&[b / g, g, heads, nq, nk])?
            .add(bias)?
            .reshape(&[b * heads, nq, nk])?;
    }
    let mask = match key_keep {
        Some(keep) => {
            if keep.len() != b * nk {
                return Err(CoreError::Contract(format!("key mask has {} entries, expected {}", keep.len(), b * nk)));
            }
            if keep.chunks(nk).any(|row| !row.contains(&true)) {
                return Err(CoreError::input("every key of an attention row is masked"));
            }
            let expanded: Vec<bool> = keep.chunks(nk).flat_map(|row| std::iter::repeat_n(row, heads).flatten().copied()).collect();
            Some(KeyMask::new(b * heads, nk, expanded)?)
        }
        None => None,
    };
    let probs = logits.softmax_lastdim(mask.as_ref())?;
    let out = merge_heads(&probs.matmul(&vh)?, heads)?;
    Ok(Attended { out, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ogrg_tensor::init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(q: &[f64], k: &[f64], v: &[f64], nq: usize, nk: usize, c: usize, cv: usize, keep: &[bool]) -> Vec<f64> {
        let mut out = vec![0.0; nq * cv];
        for i in 0..nq {
            let s: Vec<f64> = (0..nk)
                .map(|j| (0..c).map(|t| q[i * c + t] * k[j * c + t]).sum::<f64>() / (c as f64).sqrt())
                .collect();
            let m = (0..nk).filter(|&j| keep[j]).map(|j| s[j]).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = (0..nk).map(|j| if keep[j] { (s[j] - m).exp() } else { 0.0 }).collect();
            let z: f64 = e.iter().sum();
            for j in 0..nk {
                for t in 0..cv {
                    out[i * cv + t] += e[j] / z * v[j * cv + t];
                }
            }
        }
        out
    }

    #[test]
    fn single_head_matches_dense_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q: Tensor<f64> = init::randn(&mut rng, &[1, 3, 4]);
        let k: Tensor<f64> = init::randn(&mut rng, &[1, 5, 4]);
        let v: Tensor<f64> = init::randn(&mut rng, &[1, 5, 2]);
        let keep = [true, true, false, true, false];
        let a = attend(&q, &k, &v, 1, 2.0, Some(&keep), None).unwrap();
        let want = dense(&q.to_vec(), &k.to_vec(), &v.to_vec(), 3, 5, 4, 2, &keep);
        for (g, w) in a.out.to_vec().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn heads_partition_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Tensor<f64> = init::randn(&mut rng, &[2, 3, 4]);
        let k: Tensor<f64> = init::randn(&mut rng, &[2, 6, 4]);
        let v: Tensor<f64> = init::randn(&mut rng, &[2, 6, 4]);
        let a = attend(&q, &k, &v, 2, 1.0, None, None).unwrap();
        assert_eq!(a.out.shape(), [2, 3, 4]);
        assert_eq!(a.probs.shape(), [4, 3, 6]);
        // head 1 of batch 1 uses channels 2..4 only
        let single = attend(
            &q.narrow(0, 1, 1).unwrap().narrow(2, 2, 2).unwrap(),
            &k.narrow(0, 1, 1).unwrap().narrow(2, 2, 2).unwrap(),
            &v.narrow(0, 1, 1).unwrap().narrow(2, 2, 2).unwrap(),
            1,
            1.0,
            None,
            None,
        )
        .unwrap();
        let full = a.out.to_vec();
        let part = single.out.to_vec();
        for i in 0..3 {
            for t in 0..2 {
                assert!((full[12 + i * 4 + 2 + t] - part[i * 2 + t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fully_masked_row_is_an_input_error() {
        let x = Tensor::<f32>::zeros(&[1, 2, 2]);
        let r = attend(&x, &x, &x, 1, 1.0, Some(&[false, false]), None);
        assert!(matches!(r, Err(CoreError::Input(_))));
    }
}
