use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dop::{make_moving_peak, true_argmax, MovingPeakParams};
use crate::error::{Error, Result};
use crate::similarity::DopOracle;
use crate::tracker::{tracker_init, TrackerConfig};

/// One moving-peak tracking run.
#[derive(Clone, Debug, PartialEq)]
pub struct DopBenchConfig {
    pub frames: usize,
    pub noise_sd: f64,
    pub seed: u64,
    /// Fixed per-frame displacement. When absent the seed draws a direction
    /// and the peak moves `speed` per frame along it.
    pub velocity: Option<[f64; 2]>,
    pub speed: f64,
    /// The seed draws the start uniformly from this square when absent.
    pub start: Option<[f64; 2]>,
    pub peak_width: f64,
    pub peak_height: f64,
    /// Side of the virtual pixel frame.
    pub frame_side: usize,
    pub tracker: TrackerConfig,
}

impl Default for DopBenchConfig {
    fn default() -> Self {
        Self {
            frames: 50,
            noise_sd: 0.0,
            seed: 0,
            velocity: None,
            speed: 0.02,
            start: None,
            peak_width: 0.1,
            peak_height: 1.0,
            frame_side: 200,
            tracker: TrackerConfig::default(),
        }
    }
}

/// Range the seed draws random starting points from, per axis.
pub const START_RANGE: (f64, f64) = (0.2, 0.8);

impl DopBenchConfig {
    /// Peak parameters after resolving the seeded start and direction.
    pub fn peak_params(&self) -> MovingPeakParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let start = [
            rng.random_range(START_RANGE.0..START_RANGE.1),
            rng.random_range(START_RANGE.0..START_RANGE.1),
        ];
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        MovingPeakParams {
            start: self.start.unwrap_or(start),
            velocity: self
                .velocity
                .unwrap_or([self.speed * angle.cos(), self.speed * angle.sin()]),
            peak_width: self.peak_width,
            peak_height: self.peak_height,
            noise_sd: self.noise_sd,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DopFrameRow {
    pub frame: usize,
    pub estimate: [f64; 2],
    pub truth: [f64; 2],
    pub error: f64,
    pub best_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DopRun {
    pub params: MovingPeakParams,
    pub rows: Vec<DopFrameRow>,
    pub oracle_calls: u64,
    /// Lattice cell size in unit coordinates.
    pub cell: f64,
}

impl DopRun {
    pub fn mean_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_error_cells(&self) -> f64 {
        self.mean_error() / self.cell
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,est_x,est_y,true_x,true_y,error,best_value\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                r.frame, r.estimate[0], r.estimate[1], r.truth[0], r.truth[1], r.error, r.best_value
            );
        }
        out
    }
}

/// Tracks a moving peak through the tracker's full per-frame loop, with the
/// peak presented as an oracle on a virtual frame whose search region is the
/// whole unit square. Every frame, including the first, is optimized; the
/// estimate is the box center after the frame's update.
pub fn run_dop_benchmark(cfg: &DopBenchConfig) -> Result<DopRun> {
    if cfg.frames == 0 {
        return Err(Error::Precondition("benchmark needs >= 1 frame".into()));
    }
    let params = cfg.peak_params();
    let peak = make_moving_peak(params, cfg.frames)?;
    let oracle = DopOracle::moving_peak(peak.clone(), cfg.frame_side)?;
    let mut tracker_cfg = cfg.tracker.clone();
    tracker_cfg.noise = tracker_cfg.noise.max(cfg.noise_sd * cfg.noise_sd);
    let init = oracle.initial_box([0.5, 0.5], tracker_cfg.search_factor);
    let mut tracker = tracker_init(&oracle.frame(0), init, oracle.clone(), tracker_cfg)?;
    let mut rows = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let summary = tracker.step(&oracle.frame(t))?;
        let estimate = oracle.to_unit([summary.bbox.cx, summary.bbox.cy]);
        let truth = true_argmax(&peak, t)?;
        let error = ((estimate[0] - truth[0]).powi(2) + (estimate[1] - truth[1]).powi(2)).sqrt();
        rows.push(DopFrameRow {
            frame: t,
            estimate,
            truth,
            error,
            best_value: summary.best_value,
        });
    }
    Ok(DopRun {
        params,
        rows,
        oracle_calls: tracker.oracle_calls(),
        cell: 1.0 / cfg.tracker.grid_d as f64,
    })
}
