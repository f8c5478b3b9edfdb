use ogrg_geometry::pose::{gaussian_smooth, local_maxima};
use ogrg_geometry::{
    angle_diff, extract_rgs_pose, jaccard_at_n, mask_miou, mask_oiou, rect_iou, BinaryMask,
    GraspPose, GraspRectangle, RgsMaps,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn inside(r: &GraspRectangle, x: f64, y: f64) -> bool {
    let (s, c) = r.angle.sin_cos();
    let (dx, dy) = (x - r.cx, y - r.cy);
    (dx * c + dy * s).abs() <= r.width / 2.0 && (-dx * s + dy * c).abs() <= r.height / 2.0
}

fn raster_iou(a: &GraspRectangle, b: &GraspRectangle, step: f64) -> f64 {
    let ext = |r: &GraspRectangle| r.width.hypot(r.height) / 2.0;
    let x0 = (a.cx - ext(a)).min(b.cx - ext(b));
    let x1 = (a.cx + ext(a)).max(b.cx + ext(b));
    let y0 = (a.cy - ext(a)).min(b.cy - ext(b));
    let y1 = (a.cy + ext(a)).max(b.cy + ext(b));
    let (mut i, mut u) = (0usize, 0usize);
    let mut y = y0 + step / 2.0;
    while y < y1 {
        let mut x = x0 + step / 2.0;
        while x < x1 {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            i += (ia && ib) as usize;
            u += (ia || ib) as usize;
            x += step;
        }
        y += step;
    }
    i as f64 / u as f64
}

fn random_rect(rng: &mut ChaCha8Rng) -> GraspRectangle {
    GraspRectangle::new(
        rng.gen_range(0.0..20.0),
        rng.gen_range(0.0..20.0),
        rng.gen_range(-3.2..3.2),
        rng.gen_range(4.0..24.0),
        rng.gen_range(2.0..12.0),
    )
}

#[test]
fn rect_iou_agrees_with_rasterization() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (a, b) = (random_rect(&mut rng), random_rect(&mut rng));
        let exact = rect_iou(&a, &b).unwrap();
        let approx = raster_iou(&a, &b, 0.1);
        assert!((exact - approx).abs() < 0.02, "{a:?} {b:?}: {exact} vs {approx}");
    }
}

#[test]
fn angle_diff_on_degree_grid() {
    for a in -180..=180 {
        for b in (-180..=180).step_by(7) {
            let d = ((a - b) as i64).rem_euclid(180);
            let want = d.min(180 - d) as f64;
            let got = angle_diff((a as f64).to_radians(), (b as f64).to_radians());
            assert!((got - want).abs() < 1e-9, "{a} {b}");
        }
    }
}

fn pose(x: f64, y: f64, theta_deg: f64, l: f64) -> GraspPose {
    GraspPose {
        x,
        y,
        z: 1.0,
        theta: theta_deg.to_radians(),
        l,
    }
}

#[test]
fn constructed_cases_give_two_thirds() {
    // gt: 20 × 10 axis-aligned rectangles; predictions render with h = l/2.
    let gt = GraspRectangle::new(50.0, 50.0, 0.0, 20.0, 10.0);
    // exact match
    let hit = jaccard_at_n(&[pose(50.0, 50.0, 0.0, 20.0)], &[gt], 1).unwrap();
    // shifted 10 px along the width and turned 20°: IoU stays above 0.25
    let shifted = jaccard_at_n(&[pose(60.0, 50.0, 20.0, 20.0)], &[gt], 1).unwrap();
    // centered but rotated 30°: fails on the strict angle threshold
    let rotated = jaccard_at_n(&[pose(50.0, 50.0, 30.0, 20.0)], &[gt], 1).unwrap();
    let ok = [hit, shifted, rotated];
    assert_eq!(ok, [true, true, false]);
}

#[test]
fn iou_exactly_one_quarter_fails() {
    // 5 × 1 boxes offset by 3: intersection 2, union 8.
    let gt = GraspRectangle::new(0.0, 0.0, 0.0, 5.0, 1.0);
    let pred = GraspRectangle::new(3.0, 0.0, 0.0, 5.0, 1.0);
    assert_eq!(rect_iou(&gt, &pred).unwrap(), 0.25);
    // a pose whose rectangle is 5 × 2.5 would not reproduce this; check the
    // thresholded matcher through a gt/gt comparison instead
    let as_pose = GraspPose {
        x: 3.0,
        y: 0.0,
        z: 0.0,
        theta: 0.0,
        l: 5.0,
    };
    let gt_thick = GraspRectangle::new(0.0, 0.0, 0.0, 5.0, 2.5);
    assert_eq!(rect_iou(&as_pose.to_rect(), &gt_thick).unwrap(), 0.25);
    assert!(!jaccard_at_n(&[as_pose], &[gt_thick], 1).unwrap());
}

#[test]
fn mask_metrics_pixel_counts() {
    let m = |bits: &[u8]| BinaryMask::new(1, bits.len(), bits.iter().map(|&b| b == 1).collect()).unwrap();
    // sample 1: identical (2/2); sample 2: 1 shared pixel of 3 → 1/3
    let preds = [m(&[1, 1, 0, 0]), m(&[1, 1, 0, 0])];
    let gts = [m(&[1, 1, 0, 0]), m(&[0, 1, 1, 0])];
    assert!((mask_miou(&preds, &gts).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    // pooled: (2 + 1) / (2 + 3)
    assert!((mask_oiou(&preds, &gts).unwrap() - 0.6).abs() < 1e-12);

    let same = [m(&[1, 0, 1, 0])];
    assert_eq!(mask_miou(&same, &same).unwrap(), 1.0);
    assert_eq!(mask_oiou(&same, &same).unwrap(), 1.0);
    let (a, b) = ([m(&[1, 0, 0, 0])], [m(&[0, 0, 0, 1])]);
    assert_eq!(mask_miou(&a, &b).unwrap(), 0.0);
    assert_eq!(mask_oiou(&a, &b).unwrap(), 0.0);
}

#[test]
fn equal_unions_make_miou_and_oiou_coincide() {
    let m = |bits: &[u8]| BinaryMask::new(2, 2, bits.iter().map(|&b| b == 1).collect()).unwrap();
    // every pair has union 3
    let preds = [m(&[1, 1, 0, 0]), m(&[1, 0, 0, 0]), m(&[0, 1, 1, 1])];
    let gts = [m(&[0, 1, 1, 0]), m(&[1, 1, 1, 0]), m(&[0, 1, 1, 0])];
    let mi = mask_miou(&preds, &gts).unwrap();
    let oi = mask_oiou(&preds, &gts).unwrap();
    assert!((mi - oi).abs() < 1e-12);
}

/// Direct 2D Gaussian and a brute-force "no larger neighbor" search.
fn brute_force_peaks(q: &[f32], h: usize, w: usize) -> Vec<(usize, usize)> {
    let r = 6isize;
    let mut s = vec![0.0f64; h * w];
    let mut norm = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            norm += (-((dx * dx + dy * dy) as f64) / 8.0).exp();
        }
    }
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                    acc += (-((dx * dx + dy * dy) as f64) / 8.0).exp() * q[yy * w + xx] as f64;
                }
            }
            s[y as usize * w + x as usize] = acc / norm;
        }
    }
    let mut peaks = vec![];
    for y in 0..h {
        for x in 0..w {
            let v = s[y * w + x];
            let mut best = true;
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    if (ny, nx) != (y, x) && s[ny * w + nx] > v {
                        best = false;
                    }
                }
            }
            if best {
                peaks.push((v, y, x));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    peaks.into_iter().map(|p| (p.2, p.1)).collect()
}

#[test]
fn two_peaks_ranked_like_brute_force() {
    let (h, w) = (24, 32);
    let mut q = vec![0.0f32; h * w];
    q[5 * w + 6] = 0.8;
    q[16 * w + 22] = 0.9;
    let z = vec![0.0f32; h * w];
    let o = vec![1.0f32; h * w];
    let maps = RgsMaps {
        height: h,
        width: w,
        quality: &q,
        sin2: &z,
        cos2: &o,
        opening: &o,
        depth: &o,
    };
    let got: Vec<(usize, usize)> = extract_rgs_pose(&maps, 2, 1.0)
        .unwrap()
        .iter()
        .map(|p| (p.x as usize, p.y as usize))
        .collect();
    let want = brute_force_peaks(&q, h, w);
    assert_eq!(got, want[..2].to_vec());
    assert_eq!(got, vec![(22, 16), (6, 5)]);
}

#[test]
fn separable_blur_matches_direct_blur_on_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (h, w) = (15, 13);
    let q: Vec<f32> = (0..h * w).map(|_| rng.gen()).collect();
    let sep = gaussian_smooth(&q, h, w, 2.0);
    let peaks: Vec<(usize, usize)> = local_maxima(&sep, h, w).iter().map(|p| (p.2, p.1)).collect();
    assert_eq!(peaks, brute_force_peaks(&q, h, w));
}
