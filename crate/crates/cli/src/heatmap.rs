//! Fixed colormap for quality and affordance heatmaps.
//!
//! Values are clamped to [0, 1] (NaN maps to 0) and interpolated linearly
//! between five stops: black, indigo, magenta, orange, white.

const STOPS: [(f32, [f32; 3]); 5] = [
    (0.0, [0.0, 0.0, 0.0]),
    (0.25, [40.0, 20.0, 140.0]),
    (0.5, [180.0, 30.0, 120.0]),
    (0.75, [250.0, 140.0, 30.0]),
    (1.0, [255.0, 255.0, 255.0]),
];

pub fn color(v: f32) -> [u8; 3] {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let i = STOPS.windows(2).position(|w| v <= w[1].0).unwrap_or(STOPS.len() - 2);
    let ((a, ca), (b, cb)) = (STOPS[i], STOPS[i + 1]);
    let t = (v - a) / (b - a);
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (ca[c] + t * (cb[c] - ca[c])).round() as u8;
    }
    out
}

/// Interleaved RGB bytes for a plane of values.
pub fn colorize(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|&v| color(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_and_clamping() {
        assert_eq!(color(0.0), [0, 0, 0]);
        assert_eq!(color(1.0), [255, 255, 255]);
        assert_eq!(color(0.5), [180, 30, 120]);
        assert_eq!(color(-3.0), color(0.0));
        assert_eq!(color(7.0), color(1.0));
        assert_eq!(color(f32::NAN), color(0.0));
        assert_eq!(colorize(&[0.0, 1.0]).len(), 6);
    }

    #[test]
    fn brightness_increases() {
        let luma = |c: [u8; 3]| c.iter().map(|&x| x as u32).sum::<u32>();
        let mut prev = 0;
        for i in 0..=100 {
            let l = luma(color(i as f32 / 100.0));
            assert!(l + 3 >= prev, "at {i}");
            prev = l;
        }
    }
}
