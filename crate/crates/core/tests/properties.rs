use ogrg_core::losses::{dice_loss, focal_loss, mask_ce};
use ogrg_core::mgn::extract_rga_pose;
use ogrg_core::optim::{poly_lr, AdamW, AdamWConfig};
use ogrg_synth::rotation_angle;
use ogrg_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn smooth_l1(x: f64) -> f64 {
    Tensor::<f64>::scalar(x).smooth_l1().item()
}

fn smooth_l1_slope(x: f64) -> f64 {
    let t = Tensor::<f64>::param(vec![x], &[1]).unwrap();
    t.smooth_l1().sum().backward().unwrap();
    t.grad().unwrap()[0]
}

#[test]
fn smooth_l1_is_c1_at_the_joint() {
    for s in [1.0, -1.0] {
        let (lo, hi) = (s * (1.0 - 1e-9), s * (1.0 + 1e-9));
        assert!((smooth_l1(lo) - smooth_l1(hi)).abs() < 1e-8);
        assert!((smooth_l1(s) - 0.5).abs() < 1e-15);
        assert!((smooth_l1_slope(lo) - smooth_l1_slope(hi)).abs() < 1e-8);
        assert_eq!(smooth_l1_slope(s * 1.5), s);
        // one-sided difference quotients agree with the slope
        let h = 1e-6;
        let left = (smooth_l1(s) - smooth_l1(s - h)) / h;
        let right = (smooth_l1(s + h) - smooth_l1(s)) / h;
        assert!((left - s).abs() < 1e-5 && (right - s).abs() < 1e-5, "{left} {right}");
    }
}

fn brute_force(a: &[f32], h: usize, w: usize) -> (usize, usize, usize) {
    let mut best = (f32::NEG_INFINITY, 0, 0, 0);
    for k in 0..6 {
        for y in 0..h {
            for x in 0..w {
                let v = a[(k * h + y) * w + x];
                if v > best.0 {
                    best = (v, k, y, x);
                }
            }
        }
    }
    (best.1, best.2, best.3)
}

#[test]
fn argmax_extraction_matches_a_brute_force_scan() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (rng.gen_range(1..12), rng.gen_range(1..12));
        // coarse values so ties are common
        let a: Vec<f32> = (0..6 * h * w).map(|_| rng.gen_range(0..8) as f32 / 8.0).collect();
        let d: Vec<f32> = (0..h * w).map(|_| rng.gen_range(0.3..1.2)).collect();
        let pose = extract_rga_pose(&a, h, w, &d, 11.0).unwrap();
        let (k, y, x) = brute_force(&a, h, w);
        assert_eq!((pose.x, pose.y), (x as f64, y as f64), "seed {seed}");
        assert_eq!(pose.theta, rotation_angle(k));
        assert_eq!(pose.z, d[y * w + x] as f64);
        assert_eq!(pose.l, 11.0);
    }
}

fn logits(v: &[f64]) -> Tensor<f64> {
    let n = v.len() / 2;
    Tensor::from_vec(v.to_vec(), &[1, 2, 1, n]).unwrap()
}

proptest! {
    #[test]
    fn segmentation_losses_are_bounded(
        v in prop::collection::vec(-30.0f64..30.0, 2..40).prop_filter("even", |v| v.len() % 2 == 0),
        bits in prop::collection::vec(any::<bool>(), 20),
    ) {
        let m = logits(&v);
        let t: Vec<f32> = (0..v.len() / 2).map(|i| bits[i] as u8 as f32).collect();
        let dice = dice_loss(&m, &t, 1.0).unwrap().item();
        prop_assert!((0.0..=1.0).contains(&dice), "dice {dice}");
        prop_assert!(focal_loss(&m, &t, 2.0, 0.25).unwrap().item() >= 0.0);
        prop_assert!(mask_ce(&m, &t).unwrap().item() >= 0.0);
    }

    #[test]
    fn poly_rate_never_increases(total in 1u64..500, base in 0.0f64..1.0, power in 0.1f64..3.0) {
        let mut prev = f64::INFINITY;
        for t in 0..=total + 2 {
            let lr = poly_lr(t, total, base, power);
            prop_assert!(lr <= prev && lr >= 0.0);
            prev = lr;
        }
    }

    #[test]
    fn identical_gradients_give_identical_updates(
        x in prop::collection::vec(-3.0f64..3.0, 1..8),
        g in prop::collection::vec(-2.0f64..2.0, 8),
        steps in 1usize..5,
    ) {
        let n = x.len();
        let a = Tensor::<f64>::param(x.clone(), &[n]).unwrap();
        let b = Tensor::<f64>::param(x, &[n]).unwrap();
        let cfg = AdamWConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, &[a.clone(), b.clone()]);
        let w = Tensor::from_vec(g[..n].to_vec(), &[n]).unwrap();
        for _ in 0..steps {
            a.mul(&w).unwrap().sum().add(&b.mul(&w).unwrap().sum()).unwrap().backward().unwrap();
            opt.step(&[a.clone(), b.clone()], 1e-2).unwrap();
            a.zero_grad();
            b.zero_grad();
        }
        prop_assert_eq!(a.to_vec(), b.to_vec());
    }
}
