//! Rasterizing scenes at any square resolution by sampling pixel centers.

use crate::world::{Scene, TABLE_MM, WORKSPACE};

/// Maps between pixels of an `r × r` render and native workspace coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Raster {
    pub size: usize,
}

impl Raster {
    pub fn new(size: usize) -> Self {
        Raster { size }
    }

    /// Native units per pixel.
    pub fn scale(&self) -> f64 {
        WORKSPACE as f64 / self.size as f64
    }

    /// Native coordinates of the center of pixel `(x, y)`.
    pub fn to_native(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        ((x + 0.5) * s, (y + 0.5) * s)
    }

    /// Pixel coordinates of a native point (inverse of [`to_native`](Self::to_native)).
    pub fn from_native(&self, u: f64, v: f64) -> (f64, f64) {
        let s = self.scale();
        (u / s - 0.5, v / s - 0.5)
    }
}

/// Rendered images of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub size: usize,
    /// Row-major RGB.
    pub rgb: Vec<u8>,
    /// Camera distance in millimeters; the table is [`TABLE_MM`].
    pub depth_mm: Vec<u16>,
    /// Per pixel, the covering object index or `None` for table.
    pub labels: Vec<Option<u8>>,
}

impl Rendered {
    pub fn mask(&self, object: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l == Some(object as u8)).collect()
    }

    /// Depth in meters.
    pub fn depth_m(&self) -> Vec<f32> {
        self.depth_mm.iter().map(|&d| d as f32 / 1000.0).collect()
    }
}

pub fn render(scene: &Scene, size: usize) -> Rendered {
    let raster = Raster::new(size);
    let n = size * size;
    let mut rgb = Vec::with_capacity(3 * n);
    let mut depth_mm = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = raster.to_native(x as f64, y as f64);
            match scene.object_at(u, v) {
                Some(i) => {
                    let k = scene.objects[i].kind();
                    rgb.extend_from_slice(&k.color.rgb());
                    depth_mm.push(TABLE_MM - k.height_mm);
                    labels.push(Some(i as u8));
                }
                None => {
                    rgb.extend_from_slice(&scene.background.color_at(u, v));
                    depth_mm.push(TABLE_MM);
                    labels.push(None);
                }
            }
        }
    }
    Rendered {
        size,
        rgb,
        depth_mm,
        labels,
    }
}
