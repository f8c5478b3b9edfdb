//! Objects, footprints and scene placement in the native 416×416 workspace.
//!
//! Native coordinates are continuous: pixel `(i, j)` of a native render covers
//! `[i, i+1) × [j, j+1)`, so an object placed at integer position `p` has its
//! centroid at `p + 0.5`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};

pub const WORKSPACE: usize = 416;
/// Depth of the empty table, millimeters from the camera.
pub const TABLE_MM: u16 = 1000;
const PLACEMENT_TRIES: usize = 1000;
const LAYOUT_RESTARTS: usize = 20;
const PLACEMENT_GAP: f64 = 12.0;
const BORDER: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Circle,
    Square,
    Rectangle,
    Triangle,
    Ell,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Circle,
        Shape::Square,
        Shape::Rectangle,
        Shape::Triangle,
        Shape::Ell,
    ];

    pub fn noun(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Square => "square",
            Shape::Rectangle => "rectangle",
            Shape::Triangle => "triangle",
            Shape::Ell => "ell",
        }
    }

    pub fn adjective(self) -> &'static str {
        match self {
            Shape::Circle => "round",
            Shape::Square => "square",
            Shape::Rectangle => "rectangular",
            Shape::Triangle => "triangular",
            Shape::Ell => "angled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Purple,
    Pink,
    Brown,
    White,
    Black,
}

impl Color {
    pub const ALL: [Color; 10] = [
        Color::Red,
        Color::Orange,
        Color::Yellow,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Pink,
        Color::Brown,
        Color::White,
        Color::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Pink => "pink",
            Color::Brown => "brown",
            Color::White => "white",
            Color::Black => "black",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [210, 30, 35],
            Color::Orange => [245, 130, 20],
            Color::Yellow => [240, 220, 40],
            Color::Green => [40, 160, 60],
            Color::Blue => [35, 70, 200],
            Color::Purple => [130, 50, 170],
            Color::Pink => [250, 130, 190],
            Color::Brown => [120, 70, 30],
            Color::White => [250, 250, 250],
            Color::Black => [20, 20, 20],
        }
    }
}

/// One entry of the object pool. Sizes are native pixels: `a` is the diameter,
/// side, length or arm length; `b` the rectangle width or arm thickness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectKind {
    pub category: &'static str,
    pub shape: Shape,
    pub color: Color,
    pub a: f64,
    pub b: f64,
    pub height_mm: u16,
}

const fn kind(category: &'static str, shape: Shape, color: Color, a: f64, b: f64, height_mm: u16) -> ObjectKind {
    ObjectKind {
        category,
        shape,
        color,
        a,
        b,
        height_mm,
    }
}

use Color::*;
use Shape::*;

pub static POOL: [ObjectKind; 32] = [
    kind("apple", Circle, Red, 56.0, 0.0, 70),
    kind("orange", Circle, Orange, 52.0, 0.0, 65),
    kind("ball", Circle, Blue, 48.0, 0.0, 48),
    kind("ball", Circle, Green, 44.0, 0.0, 44),
    kind("ball", Circle, Pink, 40.0, 0.0, 40),
    kind("cup", Circle, White, 60.0, 0.0, 95),
    kind("cup", Circle, Purple, 58.0, 0.0, 90),
    kind("can", Circle, Yellow, 50.0, 0.0, 110),
    kind("dice", Square, White, 40.0, 0.0, 40),
    kind("dice", Square, Red, 38.0, 0.0, 38),
    kind("box", Square, Brown, 68.0, 0.0, 60),
    kind("box", Square, Green, 62.0, 0.0, 55),
    kind("block", Square, Yellow, 44.0, 0.0, 44),
    kind("block", Square, Blue, 46.0, 0.0, 46),
    kind("block", Square, Purple, 42.0, 0.0, 42),
    kind("sponge", Square, Pink, 54.0, 0.0, 30),
    kind("book", Rectangle, Blue, 108.0, 56.0, 35),
    kind("book", Rectangle, Red, 100.0, 60.0, 30),
    kind("carton", Rectangle, White, 84.0, 50.0, 90),
    kind("marker", Rectangle, Black, 88.0, 18.0, 18),
    kind("marker", Rectangle, Green, 84.0, 18.0, 18),
    kind("bar", Rectangle, Brown, 96.0, 30.0, 25),
    kind("phone", Rectangle, Black, 84.0, 44.0, 12),
    kind("remote", Rectangle, Purple, 92.0, 28.0, 22),
    kind("wedge", Triangle, Orange, 66.0, 0.0, 40),
    kind("cheese", Triangle, Yellow, 60.0, 0.0, 45),
    kind("prism", Triangle, Green, 58.0, 0.0, 50),
    kind("prism", Triangle, Purple, 62.0, 0.0, 50),
    kind("banana", Ell, Yellow, 74.0, 22.0, 35),
    kind("bracket", Ell, Blue, 70.0, 20.0, 20),
    kind("hook", Ell, Red, 66.0, 20.0, 25),
    kind("clamp", Ell, Orange, 72.0, 24.0, 40),
];

/// A convex piece of a footprint in object-local coordinates (centroid at origin).
#[derive(Clone, Debug, PartialEq)]
pub enum Part {
    Disk(f64),
    /// Counter-clockwise (positive shoelace area) vertices.
    Polygon(Vec<(f64, f64)>),
}

fn rect_part(x0: f64, y0: f64, x1: f64, y1: f64) -> Part {
    Part::Polygon(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
}

impl ObjectKind {
    /// Footprint as a union of convex parts, centered on the area centroid.
    pub fn parts(&self) -> Vec<Part> {
        match self.shape {
            Circle => vec![Part::Disk(self.a / 2.0)],
            Square => {
                let h = self.a / 2.0;
                vec![rect_part(-h, -h, h, h)]
            }
            Rectangle => vec![rect_part(-self.a / 2.0, -self.b / 2.0, self.a / 2.0, self.b / 2.0)],
            Triangle => {
                let r = self.a / 3f64.sqrt();
                // vertices at 90°, 210°, 330° in y-up terms, listed so the
                // shoelace area is positive in (x, y) = (column, row).
                let v = |deg: f64| {
                    let t = deg.to_radians();
                    (r * t.cos(), r * t.sin())
                };
                vec![Part::Polygon(vec![v(-90.0), v(30.0), v(150.0)])]
            }
            Ell => {
                let (a, t) = (self.a, self.b);
                // horizontal arm [0,a]×[0,t] plus vertical arm [0,t]×[t,a]
                let a1 = a * t;
                let a2 = (a - t) * t;
                let c = (a1 * a / 2.0 + a2 * t / 2.0) / (a1 + a2);
                vec![
                    rect_part(-c, -c, a - c, t - c),
                    rect_part(-c, t - c, t - c, a - c),
                ]
            }
        }
    }

    /// Radius of a disk about the centroid that contains the footprint.
    pub fn bounding_radius(&self) -> f64 {
        self.parts()
            .iter()
            .map(|p| match p {
                Part::Disk(r) => *r,
                Part::Polygon(v) => v.iter().map(|q| q.0.hypot(q.1)).fold(0.0, f64::max),
            })
            .fold(0.0, f64::max)
    }

    pub fn area(&self) -> f64 {
        self.parts()
            .iter()
            .map(|p| match p {
                Part::Disk(r) => std::f64::consts::PI * r * r,
                Part::Polygon(v) => polygon_area(v),
            })
            .sum()
    }
}

fn polygon_area(v: &[(f64, f64)]) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| v[i].0 * v[(i + 1) % n].1 - v[(i + 1) % n].0 * v[i].1)
        .sum::<f64>()
        / 2.0
}

/// A pool object placed in a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    /// Index into [`POOL`].
    pub kind: usize,
    /// Integer native pixel; the centroid sits at `(x + 0.5, y + 0.5)`.
    pub x: i32,
    pub y: i32,
    /// Rotation of the local frame, radians.
    pub orientation: f64,
}

impl PlacedObject {
    pub fn kind(&self) -> &'static ObjectKind {
        &POOL[self.kind]
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.x as f64 + 0.5, self.y as f64 + 0.5)
    }

    fn to_local(&self, u: f64, v: f64) -> (f64, f64) {
        let (cx, cy) = self.centroid();
        let (s, c) = self.orientation.sin_cos();
        let (dx, dy) = (u - cx, v - cy);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Whether the native point `(u, v)` lies on the footprint.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let p = self.to_local(u, v);
        self.kind().parts().iter().any(|part| part_contains(part, p))
    }

    /// Parameter intervals `[t0, t1]` where `origin + t·dir` (dir unit) lies on
    /// the footprint, one per part that the line crosses.
    pub fn line_intervals(&self, origin: (f64, f64), dir: (f64, f64)) -> Vec<(f64, f64)> {
        let o = self.to_local(origin.0, origin.1);
        let (s, c) = self.orientation.sin_cos();
        let d = (c * dir.0 + s * dir.1, -s * dir.0 + c * dir.1);
        self.kind()
            .parts()
            .iter()
            .filter_map(|part| part_line_interval(part, o, d))
            .collect()
    }

    /// Whether the native segment `a→b` touches the footprint.
    pub fn touches_segment(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        if len == 0.0 {
            return self.contains(a.0, a.1);
        }
        let dir = ((b.0 - a.0) / len, (b.1 - a.1) / len);
        self.line_intervals(a, dir)
            .iter()
            .any(|&(t0, t1)| t1 >= 0.0 && t0 <= len)
    }
}

fn part_contains(part: &Part, p: (f64, f64)) -> bool {
    match part {
        Part::Disk(r) => p.0 * p.0 + p.1 * p.1 <= r * r,
        Part::Polygon(v) => (0..v.len()).all(|i| {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
        }),
    }
}

fn part_line_interval(part: &Part, o: (f64, f64), d: (f64, f64)) -> Option<(f64, f64)> {
    match part {
        Part::Disk(r) => {
            // |o + t d|² = r², |d| = 1
            let b = o.0 * d.0 + o.1 * d.1;
            let c = o.0 * o.0 + o.1 * o.1 - r * r;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            Some((-b - s, -b + s))
        }
        Part::Polygon(v) => {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..v.len() {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                // inside when cross(b − a, p − a) ≥ 0; linear in t
                let ex = (b.0 - a.0, b.1 - a.1);
                let f0 = ex.0 * (o.1 - a.1) - ex.1 * (o.0 - a.0);
                let f1 = ex.0 * d.1 - ex.1 * d.0;
                if f1 == 0.0 {
                    if f0 < 0.0 {
                        return None;
                    }
                } else {
                    let t = -f0 / f1;
                    if f1 > 0.0 {
                        lo = lo.max(t);
                    } else {
                        hi = hi.min(t);
                    }
                }
            }
            (lo <= hi).then_some((lo, hi))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bank {
    Train,
    Test,
}

/// Procedural table texture; evaluated at native coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub bank: Bank,
    pub pattern: u8,
    pub base: [u8; 3],
    pub accent: [u8; 3],
    pub period: f64,
    pub phase: f64,
    pub seed: u64,
}

const TRAIN_PATTERNS: u8 = 5;
const TEST_PATTERNS: u8 = 3;

fn hash2(seed: u64, i: i64, j: i64) -> f64 {
    let mut h = seed
        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, u: f64, v: f64, cell: f64) -> f64 {
    let (x, y) = (u / cell, v / cell);
    let (i, j) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - i as f64, y - j as f64);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let a = hash2(seed, i, j) * (1.0 - sx) + hash2(seed, i + 1, j) * sx;
    let b = hash2(seed, i, j + 1) * (1.0 - sx) + hash2(seed, i + 1, j + 1) * sx;
    a * (1.0 - sy) + b * sy
}

impl Background {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, bank: Bank) -> Self {
        let n = match bank {
            Bank::Train => TRAIN_PATTERNS,
            Bank::Test => TEST_PATTERNS,
        };
        // muted table tones: base in a narrow band, accent a little darker
        let tone: [i32; 3] = match bank {
            Bank::Train => [rng.gen_range(120..190), rng.gen_range(110..170), rng.gen_range(90..150)],
            Bank::Test => [rng.gen_range(100..170), rng.gen_range(110..180), rng.gen_range(120..190)],
        };
        let base = tone.map(|c| c as u8);
        let drop = rng.gen_range(20..45);
        let accent = tone.map(|c| (c - drop).max(0) as u8);
        Background {
            bank,
            pattern: rng.gen_range(0..n),
            base,
            accent,
            period: rng.gen_range(18.0..48.0),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            seed: rng.gen(),
        }
    }

    /// Blend weight of the accent color at native point `(u, v)`, in `[0, 1]`.
    fn weight(&self, u: f64, v: f64) -> f64 {
        let p = self.period;
        match (self.bank, self.pattern) {
            // wood-like stripes with noisy edges
            (Bank::Train, 0) => {
                0.5 + 0.5 * ((v / p) * std::f64::consts::TAU + self.phase + 2.0 * value_noise(self.seed, u, v, 40.0)).sin()
            }
            (Bank::Train, 1) => {
                let c = ((u / p).floor() as i64 + (v / p).floor() as i64).rem_euclid(2);
                c as f64 * 0.8
            }
            (Bank::Train, 2) => value_noise(self.seed, u, v, p),
            (Bank::Train, 3) => {
                let g = ((u + self.phase * 10.0) / p).fract().min((v / p).fract());
                if g < 0.12 { 1.0 } else { 0.0 }
            }
            (Bank::Train, _) => (u + v) / (2.0 * WORKSPACE as f64) * 0.6 + 0.4 * value_noise(self.seed, u, v, 12.0),
            // held-out patterns
            (Bank::Test, 0) => {
                let (fx, fy) = ((u / p).fract() - 0.5, (v / p).fract() - 0.5);
                if fx * fx + fy * fy < 0.08 { 1.0 } else { 0.0 }
            }
            (Bank::Test, 1) => 0.5 + 0.5 * (((u - v) / p) * std::f64::consts::TAU + self.phase).sin(),
            (Bank::Test, _) => {
                0.5 + 0.5 * ((u / p + 3.0 * value_noise(self.seed, u, v, 60.0)) * std::f64::consts::PI).sin()
            }
        }
    }

    pub fn color_at(&self, u: f64, v: f64) -> [u8; 3] {
        let w = self.weight(u, v).clamp(0.0, 1.0);
        let mut out = [0u8; 3];
        for c in 0..3 {
            out[c] = (self.base[c] as f64 * (1.0 - w) + self.accent[c] as f64 * w).round() as u8;
        }
        out
    }
}

/// A tabletop arrangement of pool objects over a textured table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<PlacedObject>,
    pub background: Background,
}

impl Scene {
    /// Index of the object whose footprint contains the native point, if any.
    pub fn object_at(&self, u: f64, v: f64) -> Option<usize> {
        self.objects.iter().position(|o| o.contains(u, v))
    }
}

/// Places `n_objects` pool objects without overlap. With `allow_duplicates`,
/// pool entries may repeat; repeats share their orientation.
pub fn gen_scene<R: Rng + ?Sized>(rng: &mut R, n_objects: usize, allow_duplicates: bool, bank: Bank) -> Result<Scene> {
    if !(1..=7).contains(&n_objects) {
        return Err(SynthError::Parameter(format!("object count {n_objects} outside 1..=7")));
    }
    let kinds: Vec<usize> = if allow_duplicates {
        (0..n_objects).map(|_| rng.gen_range(0..POOL.len())).collect()
    } else {
        let mut idx: Vec<usize> = (0..POOL.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n_objects);
        idx
    };
    let mut orientation = [f64::NAN; 32];
    for &k in &kinds {
        if orientation[k].is_nan() {
            orientation[k] = match POOL[k].shape {
                Circle => 0.0,
                _ => rng.gen_range(0.0..std::f64::consts::PI),
            };
        }
    }
    // an unlucky early placement can leave no room; start the layout over
    let mut last = None;
    for _ in 0..LAYOUT_RESTARTS {
        let mut objects: Vec<PlacedObject> = Vec::with_capacity(n_objects);
        for &k in &kinds {
            match place(rng, k, orientation[k], &objects) {
                Ok(obj) => objects.push(obj),
                Err(e) => {
                    last = Some(e);
                    break;
                }
            }
        }
        if objects.len() == n_objects {
            return Ok(Scene {
                objects,
                background: Background::sample(rng, bank),
            });
        }
    }
    Err(last.expect("at least one layout attempt"))
}

fn place<R: Rng + ?Sized>(rng: &mut R, kind: usize, orientation: f64, others: &[PlacedObject]) -> Result<PlacedObject> {
    let r = POOL[kind].bounding_radius();
    let lo = (BORDER + r).ceil() as i32;
    let hi = (WORKSPACE as f64 - BORDER - r).floor() as i32 - 1;
    for _ in 0..PLACEMENT_TRIES {
        let cand = PlacedObject {
            kind,
            x: rng.gen_range(lo..=hi),
            y: rng.gen_range(lo..=hi),
            orientation,
        };
        let (cx, cy) = cand.centroid();
        let clear = others.iter().all(|o| {
            let (ox, oy) = o.centroid();
            (cx - ox).hypot(cy - oy) >= r + o.kind().bounding_radius() + PLACEMENT_GAP
        });
        if clear {
            return Ok(cand);
        }
    }
    Err(SynthError::Generation(format!(
        "could not place {} after {PLACEMENT_TRIES} tries",
        POOL[kind].category
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_has_32_distinct_entries() {
        for (i, a) in POOL.iter().enumerate() {
            for b in &POOL[i + 1..] {
                assert!((a.category, a.color, a.shape) != (b.category, b.color, b.shape));
            }
        }
    }

    #[test]
    fn parts_are_centered_and_positive() {
        for k in &POOL {
            let mut m = (0.0, 0.0);
            let mut total = 0.0;
            for p in k.parts() {
                if let Part::Polygon(v) = &p {
                    let a = polygon_area(v);
                    assert!(a > 0.0, "{}", k.category);
                    let n = v.len() as f64;
                    // rectangles and triangles: vertex mean is the centroid
                    let c = (v.iter().map(|q| q.0).sum::<f64>() / n, v.iter().map(|q| q.1).sum::<f64>() / n);
                    m = (m.0 + a * c.0, m.1 + a * c.1);
                    total += a;
                }
            }
            if total > 0.0 {
                assert!((m.0 / total).abs() < 1e-9 && (m.1 / total).abs() < 1e-9, "{}", k.category);
            }
        }
    }

    #[test]
    fn chord_of_unit_square_through_center() {
        let o = PlacedObject {
            kind: 8, // 40 px dice
            x: 100,
            y: 100,
            orientation: 0.0,
        };
        let iv = o.line_intervals(o.centroid(), (1.0, 0.0));
        assert_eq!(iv.len(), 1);
        assert!((iv[0].0 + 20.0).abs() < 1e-9 && (iv[0].1 - 20.0).abs() < 1e-9);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        let iv = o.line_intervals(o.centroid(), (d, d));
        assert!((iv[0].1 - 20.0 * 2f64.sqrt()).abs() < 1e-9);
    }
}
