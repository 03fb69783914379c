#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use dynbo::geometry::BoundingBox;
use dynbo::harness::{load_sequence, Sequence};
use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A textured square sliding over a smooth background.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub size: f64,
    /// Top-left corner in frame 0.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    pub seed: u64,
    /// Texture blob radius range as fractions of `size`.
    pub detail: (f64, f64),
}

impl Default for Synthetic {
    fn default() -> Self {
        Self {
            width: 160,
            height: 160,
            frames: 10,
            size: 32.0,
            start: [40.0, 50.0],
            velocity: [2.0, 2.0],
            seed: 1,
            detail: (0.125, 0.25),
        }
    }
}

struct Blob {
    c: [f64; 2],
    sigma: f64,
    amp: f64,
}

fn blobs(rng: &mut ChaCha8Rng, n: usize, extent: [f64; 2], sigma: (f64, f64), amp: f64) -> Vec<Blob> {
    (0..n)
        .map(|_| Blob {
            c: [rng.random_range(0.0..extent[0]), rng.random_range(0.0..extent[1])],
            sigma: rng.random_range(sigma.0..sigma.1),
            amp: rng.random_range(-amp..amp),
        })
        .collect()
}

fn field(blobs: &[Blob], x: f64, y: f64) -> f64 {
    blobs
        .iter()
        .map(|b| b.amp * (-((x - b.c[0]).powi(2) + (y - b.c[1]).powi(2)) / (2.0 * b.sigma * b.sigma)).exp())
        .sum()
}

impl Synthetic {
    pub fn truth(&self, t: usize) -> BoundingBox {
        BoundingBox::from_top_left(
            self.start[0] + self.velocity[0] * t as f64,
            self.start[1] + self.velocity[1] * t as f64,
            self.size,
            self.size,
        )
    }

    pub fn render(&self, t: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let s = self.size;
        let object = blobs(&mut rng, 8, [s, s], (s * self.detail.0, s * self.detail.1), 0.5);
        let background = blobs(
            &mut rng,
            20,
            [self.width as f64, self.height as f64],
            (12.0, 30.0),
            0.15,
        );
        let b = self.truth(t);
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (ox, oy) = (px - b.left(), py - b.top());
            let v = if (0.0..s).contains(&ox) && (0.0..s).contains(&oy) {
                0.5 + field(&object, ox, oy)
            } else {
                0.5 + field(&background, px, py)
            };
            Luma([(v.clamp(0.0, 1.0) * 255.0).round() as u8])
        })
    }

    /// Writes `frame_0001.png`... plus `groundtruth.txt` and loads it back.
    pub fn write(&self, dir: &Path) -> Sequence {
        let mut gt = String::new();
        for t in 0..self.frames {
            self.render(t)
                .save(dir.join(format!("frame_{:04}.png", t + 1)))
                .unwrap();
            let b = self.truth(t);
            let _ = writeln!(gt, "{},{},{},{}", b.left(), b.top(), b.width, b.height);
        }
        fs::write(dir.join("groundtruth.txt"), gt).unwrap();
        load_sequence(dir).unwrap()
    }
}
