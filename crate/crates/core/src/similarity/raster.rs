use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Single-channel image with row-major intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageCrop {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageCrop {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("pixel value"));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            0.0
        } else {
            self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
        }
    }

    /// 8-bit grayscale rendering, for writing test sequences.
    pub fn to_luma8(&self) -> ::image::GrayImage {
        ::image::GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            ::image::Luma([(self.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
        })
    }
}

/// Loads an image file and converts it to luminance `0.299R + 0.587G + 0.114B`.
pub fn load_gray(path: &Path) -> Result<ImageCrop> {
    let img = ::image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let pixels = rgb
        .pixels()
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    ImageCrop::new(w as usize, h as usize, pixels)
}

/// Crops `bbox` out of `frame` and resamples it to `out_w x out_h` with
/// bilinear interpolation. Area outside the frame reads as the frame mean.
pub fn extract_patch(frame: &ImageCrop, bbox: &BoundingBox, out_w: usize, out_h: usize) -> Result<ImageCrop> {
    extract_patch_with_fill(frame, bbox, out_w, out_h, frame.mean())
}

pub(crate) fn extract_patch_with_fill(
    frame: &ImageCrop,
    bbox: &BoundingBox,
    out_w: usize,
    out_h: usize,
    fill: f64,
) -> Result<ImageCrop> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Precondition("patch dimensions must be >= 1".into()));
    }
    if !(bbox.is_finite() && bbox.width > 0.0 && bbox.height > 0.0) {
        return Err(Error::Precondition(format!("invalid box {bbox:?}")));
    }
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    if bbox.right() <= 0.0 || bbox.bottom() <= 0.0 || bbox.left() >= fw || bbox.top() >= fh {
        return Err(Error::Precondition(format!(
            "box {bbox:?} lies entirely outside the frame"
        )));
    }
    let sx = bbox.width / out_w as f64;
    let sy = bbox.height / out_h as f64;
    // Pixel i covers [i, i+1); sampling at continuous x reads index x - 0.5.
    let x0 = bbox.left() + 0.5 * sx - 0.5;
    let y0 = bbox.top() + 0.5 * sy - 0.5;
    let read = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= frame.width as isize || y >= frame.height as isize {
            fill
        } else {
            frame.pixels[y as usize * frame.width + x as usize]
        }
    };
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for v in 0..out_h {
        let fy = y0 + v as f64 * sy;
        let iy = fy.floor();
        let ty = fy - iy;
        let iy = iy as isize;
        for u in 0..out_w {
            let fx = x0 + u as f64 * sx;
            let ix = fx.floor();
            let tx = fx - ix;
            let ix = ix as isize;
            let top = read(ix, iy) * (1.0 - tx) + read(ix + 1, iy) * tx;
            let bottom = read(ix, iy + 1) * (1.0 - tx) + read(ix + 1, iy + 1) * tx;
            pixels.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    Ok(ImageCrop {
        width: out_w,
        height: out_h,
        pixels,
    })
}
