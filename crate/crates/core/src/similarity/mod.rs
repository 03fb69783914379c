//! The similarity oracle `f(z, x)`: how well a candidate box on a frame
//! matches the exemplar.
//!
//! Implementations: [`NccOracle`] (template matching on luminance),
//! [`ExternalOracle`] (newline-delimited JSON to a scoring service) and
//! [`DopOracle`] (a synthetic objective dressed up as an oracle).

mod dop_adapter;
mod external;
mod ncc;
mod raster;

use std::path::PathBuf;

pub use self::dop_adapter::DopOracle;
pub use self::external::{ExternalOracle, ScoreRequest, DEFAULT_TIMEOUT, PROTOCOL_VERSION};
pub use self::ncc::{ncc_score, NccOracle, TEMPLATE_SIZE};
pub use self::raster::{extract_patch, load_gray, ImageCrop};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// A frame handed to an oracle. Pixels are optional so synthetic objectives
/// can run without images; the path is what an external service loads.
#[derive(Clone, Debug)]
pub struct Frame {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub path: Option<PathBuf>,
    pub image: Option<ImageCrop>,
}

impl Frame {
    pub fn from_image(index: usize, image: ImageCrop) -> Self {
        Self {
            index,
            width: image.width(),
            height: image.height(),
            path: None,
            image: Some(image),
        }
    }

    /// A frame with geometry but no pixels.
    pub fn blank(index: usize, width: usize, height: usize) -> Self {
        Self {
            index,
            width,
            height,
            path: None,
            image: None,
        }
    }

    pub fn with_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn image(&self) -> Result<&ImageCrop> {
        self.image
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("frame {} has no pixel data", self.index)))
    }
}

pub trait SimilarityOracle {
    /// Inclusive range every score falls in.
    fn score_range(&self) -> (f64, f64);

    /// Fixes the exemplar the following scores compare against.
    fn set_exemplar(&mut self, frame: &Frame, bbox: &BoundingBox) -> Result<()>;

    /// Similarity of `bbox` scaled by `scale` about its center.
    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, scale: f64) -> Result<f64>;
}

impl<O: SimilarityOracle + ?Sized> SimilarityOracle for Box<O> {
    fn score_range(&self) -> (f64, f64) {
        (**self).score_range()
    }

    fn set_exemplar(&mut self, frame: &Frame, bbox: &BoundingBox) -> Result<()> {
        (**self).set_exemplar(frame, bbox)
    }

    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, scale: f64) -> Result<f64> {
        (**self).score(frame, bbox, scale)
    }
}

/// Counts oracle calls while forwarding them.
pub struct CountingOracle<O> {
    inner: O,
    calls: u64,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, calls: 0 }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: SimilarityOracle> SimilarityOracle for CountingOracle<O> {
    fn score_range(&self) -> (f64, f64) {
        self.inner.score_range()
    }

    fn set_exemplar(&mut self, frame: &Frame, bbox: &BoundingBox) -> Result<()> {
        self.inner.set_exemplar(frame, bbox)
    }

    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, scale: f64) -> Result<f64> {
        self.calls += 1;
        self.inner.score(frame, bbox, scale)
    }
}

/// Scores at the three scales `{1-p, 1, 1+p}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletScore {
    pub scores: [f64; 3],
    pub best_scale: f64,
    pub p: f64,
}

impl TripletScore {
    pub fn scales(p: f64) -> [f64; 3] {
        [1.0 - p, 1.0, 1.0 + p]
    }

    /// The scalar handed to the surrogate: the best of the three.
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn from_scores(scores: [f64; 3], p: f64) -> Self {
        let scales = Self::scales(p);
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // The unscaled box wins every tie.
        let best_scale = if scores[1] >= best {
            1.0
        } else if scores[0] >= best {
            scales[0]
        } else {
            scales[2]
        };
        Self { scores, best_scale, p }
    }
}

/// Evaluates the oracle at the three scales around `bbox`. Issues exactly
/// three oracle calls.
pub fn triplet_score<O: SimilarityOracle + ?Sized>(
    oracle: &mut O,
    frame: &Frame,
    bbox: &BoundingBox,
    p: f64,
) -> Result<TripletScore> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Precondition(format!(
            "scale step p must be in (0, 0.5), got {p}"
        )));
    }
    let scales = TripletScore::scales(p);
    let mut scores = [0.0; 3];
    for (slot, scale) in scores.iter_mut().zip(scales) {
        *slot = oracle.score(frame, bbox, scale)?;
    }
    Ok(TripletScore::from_scores(scores, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FnOracle<F>(F);

    impl<F: FnMut(f64) -> f64> SimilarityOracle for FnOracle<F> {
        fn score_range(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
        fn set_exemplar(&mut self, _: &Frame, _: &BoundingBox) -> Result<()> {
            Ok(())
        }
        fn score(&mut self, _: &Frame, _: &BoundingBox, scale: f64) -> Result<f64> {
            Ok((self.0)(scale))
        }
    }

    #[test]
    fn constant_oracle_keeps_scale() {
        let mut o = CountingOracle::new(FnOracle(|_| 0.3));
        let frame = Frame::blank(0, 10, 10);
        let bbox = BoundingBox::new(5.0, 5.0, 4.0, 4.0);
        let t = triplet_score(&mut o, &frame, &bbox, 0.05).unwrap();
        assert_eq!(t.best_scale, 1.0);
        assert_eq!(o.calls(), 3);
    }

    #[test]
    fn constructed_argmax() {
        let mut o = FnOracle(|s: f64| -(s - 1.05).abs());
        let frame = Frame::blank(0, 10, 10);
        let bbox = BoundingBox::new(5.0, 5.0, 4.0, 4.0);
        let t = triplet_score(&mut o, &frame, &bbox, 0.05).unwrap();
        assert_eq!(t.best_scale, 1.05);
        assert_eq!(t.max(), t.scores[2]);
        let mut shrink = FnOracle(|s: f64| -(s - 0.95).abs());
        assert_eq!(
            triplet_score(&mut shrink, &frame, &bbox, 0.05).unwrap().best_scale,
            0.95
        );
    }

    #[test]
    fn rejects_bad_p() {
        let mut o = FnOracle(|_| 0.0);
        let frame = Frame::blank(0, 10, 10);
        let bbox = BoundingBox::new(5.0, 5.0, 4.0, 4.0);
        assert!(triplet_score(&mut o, &frame, &bbox, 0.0).is_err());
        assert!(triplet_score(&mut o, &frame, &bbox, 0.5).is_err());
    }
}
