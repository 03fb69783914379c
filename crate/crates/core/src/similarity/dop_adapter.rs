use std::sync::Arc;

use super::{Frame, SimilarityOracle};
use crate::dop::{DynamicObjective, MovingPeak};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Presents a [`DynamicObjective`] as a similarity oracle on a virtual
/// `side x side` pixel frame. The box center maps to `[0,1]²` by dividing by
/// `side`; the frame index is the objective's time. Box size and scale are
/// ignored, and scores are clamped into the declared range.
#[derive(Clone)]
pub struct DopOracle {
    objective: Arc<dyn DynamicObjective>,
    side: usize,
    range: (f64, f64),
}

impl std::fmt::Debug for DopOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DopOracle")
            .field("side", &self.side)
            .field("range", &self.range)
            .finish_non_exhaustive()
    }
}

impl DopOracle {
    pub fn new(objective: Arc<dyn DynamicObjective>, side: usize, range: (f64, f64)) -> Result<Self> {
        if side < 2 {
            return Err(Error::Precondition(format!(
                "virtual frame side must be >= 2, got {side}"
            )));
        }
        if !(range.0.is_finite() && range.1.is_finite() && range.0 < range.1) {
            return Err(Error::Precondition(format!("invalid score range {range:?}")));
        }
        Ok(Self { objective, side, range })
    }

    /// Moving peak with scores in `[0, peak_height]`.
    pub fn moving_peak(peak: MovingPeak, side: usize) -> Result<Self> {
        let height = peak.params().peak_height;
        Self::new(Arc::new(peak), side, (0.0, height))
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn objective(&self) -> &dyn DynamicObjective {
        self.objective.as_ref()
    }

    /// The pixel-free frame standing in for time `t`.
    pub fn frame(&self, t: usize) -> Frame {
        Frame::blank(t, self.side, self.side)
    }

    pub fn to_unit(&self, pixel: [f64; 2]) -> [f64; 2] {
        [pixel[0] / self.side as f64, pixel[1] / self.side as f64]
    }

    pub fn to_pixels(&self, unit: [f64; 2]) -> [f64; 2] {
        [unit[0] * self.side as f64, unit[1] * self.side as f64]
    }

    /// Box whose search region covers the whole virtual frame when the
    /// tracker's search factor is `search_factor`.
    pub fn initial_box(&self, center: [f64; 2], search_factor: f64) -> BoundingBox {
        let side = self.side as f64 / (2.0 * search_factor);
        let c = self.to_pixels(center);
        BoundingBox::new(c[0], c[1], side, side)
    }
}

impl SimilarityOracle for DopOracle {
    fn score_range(&self) -> (f64, f64) {
        self.range
    }

    fn set_exemplar(&mut self, _frame: &Frame, _bbox: &BoundingBox) -> Result<()> {
        Ok(())
    }

    fn score(&mut self, frame: &Frame, bbox: &BoundingBox, _scale: f64) -> Result<f64> {
        if frame.index >= self.objective.horizon() {
            return Err(Error::Precondition(format!(
                "frame {} outside objective horizon {}",
                frame.index,
                self.objective.horizon()
            )));
        }
        let v = self.objective.evaluate(self.to_unit([bbox.cx, bbox.cy]), frame.index);
        if !v.is_finite() {
            return Err(Error::NonFinite("objective value"));
        }
        Ok(v.clamp(self.range.0, self.range.1))
    }
}
