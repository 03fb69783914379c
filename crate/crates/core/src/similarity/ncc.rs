use super::raster::{extract_patch_with_fill, ImageCrop};
use super::{Frame, SimilarityOracle};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Side of the resampled exemplar and candidate patches.
pub const TEMPLATE_SIZE: usize = 64;

/// Sum of squared deviations below which a patch counts as constant.
const FLAT_EPS: f64 = 1e-18;

/// Zero-mean normalized cross-correlation in `[-1, 1]`; 0 when either input
/// is constant.
pub fn ncc_score(template: &ImageCrop, patch: &ImageCrop) -> Result<f64> {
    if template.width() != patch.width() || template.height() != patch.height() {
        return Err(Error::DimensionMismatch(format!(
            "template {}x{} vs patch {}x{}",
            template.width(),
            template.height(),
            patch.width(),
            patch.height()
        )));
    }
    let t = Centered::new(template.pixels());
    Ok(t.correlate(patch.pixels()))
}

/// A mean-removed template with its norm, reused across many patches.
#[derive(Clone, Debug)]
struct Centered {
    values: Vec<f64>,
    norm: f64,
}

impl Centered {
    fn new(pixels: &[f64]) -> Self {
        let mean = pixels.iter().sum::<f64>() / pixels.len().max(1) as f64;
        let values: Vec<f64> = pixels.iter().map(|p| p - mean).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        Self { values, norm }
    }

    fn correlate(&self, patch: &[f64]) -> f64 {
        if self.norm * self.norm <= FLAT_EPS {
            return 0.0;
        }
        let mean = patch.iter().sum::<f64>() / patch.len().max(1) as f64;
        let mut dot = 0.0;
        let mut sq = 0.0;
        for (t, p) in self.values.iter().zip(patch) {
            let d = p - mean;
            dot += t * d;
            sq += d * d;
        }
        if sq <= FLAT_EPS {
            return 0.0;
        }
        (dot / (self.norm * sq.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Template matching oracle with a fixed exemplar from the first frame.
#[derive(Clone, Debug, Default)]
pub struct NccOracle {
    exemplar: Option<Centered>,
    /// Fill value for out-of-frame pixels, cached per frame index.
    fill: Option<(usize, f64)>,
}

impl NccOracle {
    pub fn new() -> Self {
        Self::default()
    }

    fn fill_for(&mut self, frame: &Frame, image: &ImageCrop) -> f64 {
        match self.fill {
            Some((idx, m)) if idx == frame.index => m,
            _ => {
                let m = image.mean();
                self.fill = Some((frame.index, m));
                m
            }
        }
    }

    /// Scores without touching the cache; safe to call from many threads.
    pub fn score_with_fill(&self, image: &ImageCrop, fill: f64, bbox: &BoundingBox) -> Result<f64> {
        let exemplar = self
            .exemplar
            .as_ref()
            .ok_or_else(|| Error::Precondition("NCC oracle has no exemplar".into()))?;
        let patch = extract_patch_with_fill(image, bbox, TEMPLATE_SIZE, TEMPLATE_SIZE, fill)?;
        Ok(exemplar.correlate(patch.pixels()))
    }
}

impl SimilarityOracle for NccOracle {
    fn score_range(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn set_exemplar(&mut self, frame: &Frame, bbox: &BoundingBox) -> Result<()> {
        let image = frame.image()?;
        let fill = self.fill_for(frame, image);
        let patch = extract_patch_with_fill(image, bbox, TEMPLATE_SIZE, TEMPLATE_SIZE, fill)?;
        self.exemplar = Some(Centered::new(patch.pixels()));
        Ok(())
    }

    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, scale: f64) -> Result<f64> {
        let image = frame.image()?;
        let fill = self.fill_for(frame, image);
        self.score_with_fill(image, fill, &bbox.scaled(scale))
    }
}
