//! Forward results checked against direct reference computations.

use ogrg_tensor::{init, KeyMask, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for l in 0..k {
                c[i * n + j] += a[i * k + l] * b[l * n + j];
            }
        }
    }
    c
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let a: Tensor<f64> = init::randn(&mut rng, &[3, 4]);
        let b: Tensor<f64> = init::randn(&mut rng, &[4, 2]);
        let got = a.matmul(&b).unwrap().to_vec();
        let want = naive_matmul(&a.to_vec(), &b.to_vec(), 3, 4, 2);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }
}

#[test]
fn batched_matmul_matches_per_item_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Tensor<f64> = init::randn(&mut rng, &[2, 3, 4]);
    let b: Tensor<f64> = init::randn(&mut rng, &[2, 4, 5]);
    let got = a.matmul(&b).unwrap().to_vec();
    let (av, bv) = (a.to_vec(), b.to_vec());
    for i in 0..2 {
        let want = naive_matmul(&av[i * 12..], &bv[i * 20..], 3, 4, 5);
        for (g, w) in got[i * 15..(i + 1) * 15].iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_associativity_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let a: Tensor<f32> = init::randn(&mut rng, &[4, 5]);
        let b: Tensor<f32> = init::randn(&mut rng, &[5, 3]);
        let c: Tensor<f32> = init::randn(&mut rng, &[3, 6]);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap().to_vec();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap().to_vec();
        for (l, r) in left.iter().zip(&right) {
            assert!((l - r).abs() < 1e-4 * (1.0 + l.abs()), "{l} vs {r}");
        }
    }
}

#[test]
fn softmax_matches_direct_formula() {
    let x = Tensor::<f64>::from_vec(vec![1.0, 2.0, 3.0], &[3]).unwrap();
    let got = x.softmax_lastdim(None).unwrap().to_vec();
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (g, v) in got.iter().zip([1.0f64, 2.0, 3.0]) {
        assert!((g - v.exp() / z).abs() < 1e-12);
    }
}

#[test]
fn softmax_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let x: Tensor<f32> = init::randn(&mut rng, &[2, 3, 7]);
        let keep: Vec<bool> = (0..14).map(|i| i % 3 != 1).collect();
        let mask = KeyMask::new(2, 7, keep).unwrap();
        for m in [None, Some(&mask)] {
            let y = x.scale(10.0).softmax_lastdim(m).unwrap().to_vec();
            for row in y.chunks(7) {
                let s: f32 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
    }
}

fn sliding_window_conv(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    (c_in, h, wd): (usize, usize, usize),
    (c_out, k): (usize, usize),
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; c_out * ho * wo];
    for co in 0..c_out {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = b[co];
                for ci in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                acc += w[((co * c_in + ci) * k + ky) * k + kx]
                                    * x[(ci * h + iy as usize) * wd + ix as usize];
                            }
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn conv2d_matches_sliding_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for &(k, stride, pad) in &[(3, 1, 1), (3, 2, 1), (7, 2, 3), (1, 1, 0), (4, 4, 0)] {
        let x: Tensor<f64> = init::randn(&mut rng, &[2, 3, 9, 8]);
        let w: Tensor<f64> = init::randn(&mut rng, &[4, 3, k, k]);
        let b: Tensor<f64> = init::randn(&mut rng, &[4]);
        let y = x.conv2d(&w, Some(&b), stride, pad).unwrap();
        let got = y.to_vec();
        let per = got.len() / 2;
        let xv = x.to_vec();
        for bi in 0..2 {
            let want = sliding_window_conv(
                &xv[bi * 216..(bi + 1) * 216],
                &w.to_vec(),
                &b.to_vec(),
                (3, 9, 8),
                (4, k),
                stride,
                pad,
            );
            for (g, w) in got[bi * per..(bi + 1) * per].iter().zip(&want) {
                assert!((g - w).abs() < 1e-5, "k={k} s={stride}");
            }
        }
    }
}

#[test]
fn upsample_ramp_matches_hand_weights() {
    // 2×2 ramp [[0, 1], [2, 3]] upsampled ×2 with half-pixel centers:
    // output coordinate o maps to src = (o + 0.5)/2 − 0.5 ∈ {−0.25→0, 0.25, 0.75, 1.25→1}.
    let x = Tensor::<f64>::from_vec(vec![0.0, 1.0, 2.0, 3.0], &[1, 2, 2]).unwrap();
    let y = x.upsample_bilinear(2).unwrap().to_vec();
    let src = [0.0, 0.25, 0.75, 1.0];
    for (oy, &sy) in src.iter().enumerate() {
        for (ox, &sx) in src.iter().enumerate() {
            let want = 2.0 * sy + sx;
            assert!((y[oy * 4 + ox] - want).abs() < 1e-12, "({oy},{ox})");
        }
    }
}
