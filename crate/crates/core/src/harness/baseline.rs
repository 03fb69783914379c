use super::eval::{run_eval, EvalReport, SequenceTracker};
use super::sequence::Sequence;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::par::Exec;
use crate::similarity::{Frame, NccOracle, SimilarityOracle};
use crate::tracker::SearchRegion;

/// Exhaustive NCC template matching: scores every stride-spaced center in
/// the search region around the previous box and moves to the best one.
/// The exemplar and the box size never change.
#[derive(Clone, Debug)]
pub struct TemplateMatcher {
    stride: usize,
    search_factor: f64,
    exec: Exec,
    oracle: NccOracle,
    current: Option<BoundingBox>,
    calls: u64,
    max_candidates: usize,
}

impl TemplateMatcher {
    pub fn new(stride: usize, search_factor: f64, exec: Exec) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if !(search_factor.is_finite() && search_factor > 0.0) {
            return Err(Error::Config("search_factor must be > 0".into()));
        }
        Ok(Self {
            stride,
            search_factor,
            exec,
            oracle: NccOracle::new(),
            current: None,
            calls: 0,
            max_candidates: 0,
        })
    }
}

/// Centers `previous + k·stride` on both axes, limited to offsets within the
/// search half-width and to points inside `region`. Offset `(0, 0)` is always
/// included; order is row-major from the most negative offset.
pub fn tm_candidates(
    previous: &BoundingBox,
    region: &SearchRegion,
    stride: usize,
    search_factor: f64,
) -> Vec<[f64; 2]> {
    let half = search_factor * previous.width.max(previous.height);
    let k = (half / stride as f64).floor() as i64;
    let mut out = Vec::new();
    for ky in -k..=k {
        for kx in -k..=k {
            let c = [
                previous.cx + (kx * stride as i64) as f64,
                previous.cy + (ky * stride as i64) as f64,
            ];
            if (kx == 0 && ky == 0) || region.contains(c) {
                out.push(c);
            }
        }
    }
    out
}

impl SequenceTracker for TemplateMatcher {
    fn name(&self) -> String {
        "tm".into()
    }

    fn init(&mut self, frame: &Frame, bbox: BoundingBox) -> Result<()> {
        self.oracle.set_exemplar(frame, &bbox)?;
        self.current = Some(bbox);
        Ok(())
    }

    fn track(&mut self, frame: &Frame) -> Result<BoundingBox> {
        let prev = self
            .current
            .ok_or_else(|| Error::Precondition("track called before init".into()))?;
        let image = frame.image()?;
        let region = SearchRegion::around(&prev, self.search_factor, frame.width as f64, frame.height as f64)?;
        let candidates = tm_candidates(&prev, &region, self.stride, self.search_factor);
        let fill = image.mean();
        let oracle = &self.oracle;
        let scores = self.exec.try_map_range(candidates.len(), |i| {
            oracle.score_with_fill(image, fill, &prev.with_center(candidates[i][0], candidates[i][1]))
        })?;
        self.calls += candidates.len() as u64;
        self.max_candidates = self.max_candidates.max(candidates.len());
        let dist2 = |c: &[f64; 2]| (c[0] - prev.cx).powi(2) + (c[1] - prev.cy).powi(2);
        let mut best = 0;
        for i in 1..candidates.len() {
            let better = scores[i] > scores[best]
                || (scores[i] == scores[best] && dist2(&candidates[i]) < dist2(&candidates[best]));
            if better {
                best = i;
            }
        }
        let next = prev
            .with_center(candidates[best][0], candidates[best][1])
            .clamp_to_frame(frame.width as f64, frame.height as f64);
        self.current = Some(next);
        Ok(next)
    }

    fn oracle_calls(&self) -> u64 {
        self.calls
    }

    fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("tm.stride".into(), self.stride.to_string()),
            ("tm.search_factor".into(), self.search_factor.to_string()),
            ("tm.max_candidates_per_frame".into(), self.max_candidates.to_string()),
        ]
    }
}

/// Runs [`TemplateMatcher`] with the default search factor of 2.
pub fn run_baseline_tm(seq: &Sequence, stride: usize, exec: Exec) -> Result<EvalReport> {
    run_eval(&mut TemplateMatcher::new(stride, 2.0, exec)?, seq)
}
