use std::time::{Duration, Instant};

use super::sequence::Sequence;
use crate::config::config_snapshot;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::similarity::{Frame, SimilarityOracle};
use crate::tracker::{tracker_init, Tracker, TrackerConfig};

/// Anything that can follow a box through a sequence.
pub trait SequenceTracker {
    fn name(&self) -> String;

    fn init(&mut self, frame: &Frame, bbox: BoundingBox) -> Result<()>;

    fn track(&mut self, frame: &Frame) -> Result<BoundingBox>;

    fn oracle_calls(&self) -> u64;

    /// Key/value pairs describing the configuration, copied into reports.
    fn metadata(&self) -> Vec<(String, String)> {
        Vec::new()
    }
}

/// The Bayesian-optimization tracker behind [`SequenceTracker`].
pub struct SdbtaTracker<O> {
    name: String,
    cfg: TrackerConfig,
    pending: Option<O>,
    inner: Option<Tracker<O>>,
}

impl<O: SimilarityOracle> SdbtaTracker<O> {
    pub fn new(oracle: O, cfg: TrackerConfig) -> Self {
        Self {
            name: "sdbta".into(),
            cfg,
            pending: Some(oracle),
            inner: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn tracker(&self) -> Option<&Tracker<O>> {
        self.inner.as_ref()
    }
}

impl<O: SimilarityOracle> SequenceTracker for SdbtaTracker<O> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn init(&mut self, frame: &Frame, bbox: BoundingBox) -> Result<()> {
        let oracle = match (self.pending.take(), self.inner.take()) {
            (Some(o), _) => o,
            (None, Some(t)) => t.into_oracle(),
            (None, None) => unreachable!("oracle is held by exactly one side"),
        };
        self.inner = Some(tracker_init(frame, bbox, oracle, self.cfg.clone())?);
        Ok(())
    }

    fn track(&mut self, frame: &Frame) -> Result<BoundingBox> {
        let t = self
            .inner
            .as_mut()
            .ok_or_else(|| Error::Precondition("track called before init".into()))?;
        Ok(t.step(frame)?.bbox)
    }

    fn oracle_calls(&self) -> u64 {
        self.inner.as_ref().map_or(0, |t| t.oracle_calls())
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let mut m = config_snapshot(&self.cfg);
        if let Some(t) = &self.inner {
            let (ls, lt) = t.state().lengthscales;
            m.push(("fitted.spatial_lengthscale".into(), ls.to_string()));
            m.push(("fitted.temporal_lengthscale".into(), lt.to_string()));
        }
        m
    }
}

/// Result of running one tracker over one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub tracker: String,
    pub sequence: String,
    /// IOU for frames `1..T`; frame 0 is the initialization frame.
    pub trace: Vec<f64>,
    pub boxes: Vec<BoundingBox>,
    pub mean_iou: f64,
    /// Population standard deviation.
    pub std_iou: f64,
    pub oracle_calls: u64,
    pub metadata: Vec<(String, String)>,
    pub wall_time: Duration,
    /// Why tracking stopped early, if it did.
    pub incomplete: Option<String>,
}

impl EvalReport {
    pub fn frames(&self) -> usize {
        self.trace.len()
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Initializes on frame 0's ground truth, then tracks frames `1..T` and
/// scores each against ground truth. There is no re-initialization. An error
/// after initialization ends the run with a partial trace and
/// `incomplete` set; an initialization error is returned as is.
pub fn run_eval(tracker: &mut dyn SequenceTracker, seq: &Sequence) -> Result<EvalReport> {
    let start = Instant::now();
    tracker.init(&seq.load_frame(0)?, seq.ground_truth[0])?;
    let mut trace = Vec::with_capacity(seq.len() - 1);
    let mut boxes = Vec::with_capacity(seq.len() - 1);
    let mut incomplete = None;
    for t in 1..seq.len() {
        let outcome = seq
            .load_frame(t)
            .and_then(|frame| tracker.track(&frame))
            .and_then(|bbox| Ok((bbox, iou(&bbox, &seq.ground_truth[t])?)));
        match outcome {
            Ok((bbox, overlap)) => {
                boxes.push(bbox);
                trace.push(overlap);
            }
            Err(e) => {
                incomplete = Some(format!("frame {t}: {e}"));
                break;
            }
        }
    }
    let (mean_iou, std_iou) = mean_std(&trace);
    Ok(EvalReport {
        tracker: tracker.name(),
        sequence: seq.name.clone(),
        trace,
        boxes,
        mean_iou,
        std_iou,
        oracle_calls: tracker.oracle_calls(),
        metadata: tracker.metadata(),
        wall_time: start.elapsed(),
        incomplete,
    })
}
