//! The per-frame tracking loop.
//!
//! For each frame: query the oracle `budget_per_frame` times at lattice
//! points chosen by the acquisition function, feeding each triplet score into
//! a space-time GP that also remembers the last few frames. Then render the
//! posterior mean over the lattice, upsample it to the search region's
//! pixels, move the box to its maximum and vote on a scale change.

mod grid;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use self::grid::{
    field_dims, field_pixel_center, render_score_grid, upsample_bicubic, Field, ScoreGrid, SearchRegion,
    MIN_REGION_PIXELS,
};
use crate::acquisition::{select_from_posteriors, AcqConfig, SearchHistory};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::gp::{fit_hyperparams, GpPrior, HyperGrid, Query, Sample, SlicePosterior};
use crate::kernels::SpatioTemporalKernel;
use crate::par::Exec;
use crate::similarity::{triplet_score, CountingOracle, Frame, SimilarityOracle};

/// How each query location is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Maximize the configured acquisition function.
    Acquisition,
    /// Uniformly at random among lattice cells not yet sampled this frame.
    Random,
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampler::Acquisition => "acquisition",
            Sampler::Random => "random",
        })
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acquisition" => Ok(Sampler::Acquisition),
            "random" => Ok(Sampler::Random),
            other => Err(Error::Config(format!("unknown sampler '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub budget_per_frame: usize,
    pub grid_d: usize,
    pub scale_p: f64,
    /// Search-region half-width as a multiple of the larger box side.
    pub search_factor: f64,
    /// Frames of samples kept in the GP memory.
    pub window_frames: usize,
    pub scale_damping: f64,
    pub acq: AcqConfig,
    pub sampler: Sampler,
    pub kernel: SpatioTemporalKernel,
    /// Observation noise variance.
    pub noise: f64,
    /// Fit lengthscales once `window_frames` frames have been tracked.
    pub fit_hyperparams: bool,
    pub hyper_grid: HyperGrid,
    /// Refit lengthscales every this many frames after the first fit; 0 freezes them.
    pub refit_every: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            budget_per_frame: 80,
            grid_d: 20,
            scale_p: 0.05,
            search_factor: 2.0,
            window_frames: 3,
            scale_damping: 0.5,
            acq: AcqConfig::default(),
            sampler: Sampler::Acquisition,
            kernel: SpatioTemporalKernel::default(),
            noise: 1e-4,
            fit_hyperparams: true,
            hyper_grid: HyperGrid::default(),
            refit_every: 0,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget_per_frame < 1 {
            return Err(Error::Config("tracker.budget_per_frame must be >= 1".into()));
        }
        if self.grid_d < 2 {
            return Err(Error::Config("tracker.grid_d must be >= 2".into()));
        }
        if !(self.scale_p > 0.0 && self.scale_p < 0.5) {
            return Err(Error::Config(format!(
                "tracker.scale_p must be in (0, 0.5), got {}",
                self.scale_p
            )));
        }
        if !(self.search_factor.is_finite() && self.search_factor > 0.0) {
            return Err(Error::Config("tracker.search_factor must be > 0".into()));
        }
        if self.window_frames < 1 {
            return Err(Error::Config("tracker.window_frames must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.scale_damping) {
            return Err(Error::Config("tracker.scale_damping must be in [0, 1]".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("gp.noise must be >= 0".into()));
        }
        self.acq.validate()?;
        self.kernel.validate()
    }

    /// Largest number of samples the GP memory can hold.
    pub fn memory_capacity(&self) -> usize {
        self.window_frames * self.budget_per_frame
    }
}

/// A remembered observation, located in frame pixels so it can be mapped
/// into whichever search region is current.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemorySample {
    pub center: [f64; 2],
    pub time: usize,
    pub scale: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackerState {
    pub current_box: BoundingBox,
    pub frame_index: usize,
    pub memory: Vec<MemorySample>,
    /// Spatial and temporal lengthscales in use.
    pub lengthscales: (f64, f64),
    /// Best triplet score of the last frame and its pixel location.
    pub incumbent: Option<(f64, [f64; 2])>,
}

/// What happened on one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSummary {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub best_value: f64,
    pub best_location: [f64; 2],
    pub selections: usize,
    pub oracle_calls: u64,
    pub scale_mode: f64,
    pub region: SearchRegion,
}

/// A tracker bound to one sequence.
pub struct Tracker<O> {
    cfg: TrackerConfig,
    oracle: CountingOracle<O>,
    state: TrackerState,
    frame_dims: (usize, usize),
    init_index: usize,
    last_step: Option<usize>,
    steps: usize,
    fitted_at: Option<usize>,
    rng: ChaCha8Rng,
}

/// Starts tracking on `first_frame` from the ground-truth box.
pub fn tracker_init<O: SimilarityOracle>(
    first_frame: &Frame,
    gt_box: BoundingBox,
    oracle: O,
    cfg: TrackerConfig,
) -> Result<Tracker<O>> {
    cfg.validate()?;
    let (fw, fh) = (first_frame.width as f64, first_frame.height as f64);
    if !(gt_box.is_finite() && gt_box.width > 0.0 && gt_box.height > 0.0) {
        return Err(Error::Precondition(format!("invalid initial box {gt_box:?}")));
    }
    if !(0.0..=fw).contains(&gt_box.cx) || !(0.0..=fh).contains(&gt_box.cy) {
        return Err(Error::Precondition(format!(
            "initial box center ({}, {}) outside the {fw}x{fh} frame",
            gt_box.cx, gt_box.cy
        )));
    }
    let mut oracle = CountingOracle::new(oracle);
    let (lo, hi) = oracle.score_range();
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Precondition(format!(
            "oracle declares an invalid range [{lo}, {hi}]"
        )));
    }
    oracle.set_exemplar(first_frame, &gt_box)?;
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(Tracker {
        state: TrackerState {
            current_box: gt_box,
            frame_index: first_frame.index,
            memory: Vec::new(),
            lengthscales: (cfg.kernel.spatial.lengthscale, cfg.kernel.temporal.lengthscale),
            incumbent: None,
        },
        frame_dims: (first_frame.width, first_frame.height),
        init_index: first_frame.index,
        last_step: None,
        steps: 0,
        fitted_at: None,
        oracle,
        cfg,
        rng,
    })
}

impl<O: SimilarityOracle> Tracker<O> {
    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Oracle calls issued so far, across all frames.
    pub fn oracle_calls(&self) -> u64 {
        self.oracle.calls()
    }

    pub fn oracle(&self) -> &O {
        self.oracle.inner()
    }

    pub fn into_oracle(self) -> O {
        self.oracle.into_inner()
    }

    fn prior(&self) -> GpPrior {
        let (lo, hi) = self.oracle.score_range();
        let mut kernel = self.cfg.kernel;
        kernel.spatial.lengthscale = self.state.lengthscales.0;
        kernel.temporal.lengthscale = self.state.lengthscales.1;
        GpPrior {
            kernel,
            noise: self.cfg.noise,
            mean: 0.5 * (lo + hi),
        }
    }

    /// Runs the full per-frame loop on `frame` and returns the new box.
    pub fn step(&mut self, frame: &Frame) -> Result<FrameSummary> {
        if (frame.width, frame.height) != self.frame_dims {
            return Err(Error::Precondition(format!(
                "frame is {}x{}, sequence is {}x{}",
                frame.width, frame.height, self.frame_dims.0, self.frame_dims.1
            )));
        }
        let t = frame.index;
        if t < self.init_index || self.last_step.is_some_and(|last| t <= last) {
            return Err(Error::Precondition(format!(
                "frame index {t} does not advance the sequence"
            )));
        }
        let cfg = &self.cfg;
        let d = cfg.grid_d;
        let window = cfg.window_frames;
        self.state.memory.retain(|m| m.time + window > t);

        let (fw, fh) = (self.frame_dims.0 as f64, self.frame_dims.1 as f64);
        let region = SearchRegion::around(&self.state.current_box, cfg.search_factor, fw, fh)?;
        let lattice = region.lattice(d);
        let queries: Vec<Query> = lattice.iter().map(|&loc| Query::new(loc, t as f64)).collect();
        let samples: Vec<Sample> = self
            .state
            .memory
            .iter()
            .map(|m| Sample {
                location: region.to_unit(m.center),
                time: m.time,
                scale: m.scale,
                value: m.value,
            })
            .collect();
        let prior = self.prior();
        let mut slice = SlicePosterior::new(prior, samples, queries, cfg.exec)?;
        let (score_lo, _) = self.oracle.score_range();
        let mut history = SearchHistory::with_baseline(score_lo);
        let mut sampled = vec![false; lattice.len()];
        let mut scale_votes = Vec::with_capacity(cfg.budget_per_frame);
        let mut best: Option<(f64, [f64; 2])> = None;
        let calls_before = self.oracle.calls();

        for _ in 0..cfg.budget_per_frame {
            let idx = match cfg.sampler {
                Sampler::Acquisition => {
                    select_from_posteriors(&slice.posterior(), &sampled, &history, &cfg.acq, cfg.exec)?
                }
                Sampler::Random => {
                    let open: Vec<usize> = (0..lattice.len()).filter(|&i| !sampled[i]).collect();
                    if open.is_empty() {
                        self.rng.random_range(0..lattice.len())
                    } else {
                        open[self.rng.random_range(0..open.len())]
                    }
                }
            };
            let loc = lattice[idx];
            let center = region.to_pixels(loc);
            let candidate = self.state.current_box.with_center(center[0], center[1]);
            let triplet = triplet_score(&mut self.oracle, frame, &candidate, cfg.scale_p)?;
            let value = triplet.max();
            if !value.is_finite() {
                return Err(Error::NonFinite("oracle score"));
            }
            history.push(loc, value);
            sampled[idx] = true;
            scale_votes.push(triplet.best_scale);
            if best.is_none_or(|(b, _)| value > b) {
                best = Some((value, center));
            }
            slice.add(Sample {
                location: loc,
                time: t,
                scale: triplet.best_scale,
                value,
            })?;
            self.state.memory.push(MemorySample {
                center,
                time: t,
                scale: triplet.best_scale,
                value,
            });
        }

        let means = slice.posterior().into_iter().map(|p| p.mean).collect();
        let grid = ScoreGrid::new(d, means, region)?;
        let (ow, oh) = field_dims(&region, d);
        let field = upsample_bicubic(&grid, ow, oh)?;
        let scale_mode = scale_mode(&scale_votes, cfg.scale_p);
        let new_box = update_location(
            &field,
            &region,
            &self.state.current_box,
            scale_mode,
            cfg.scale_damping,
            (fw, fh),
        )?;

        self.steps += 1;
        self.last_step = Some(t);
        self.state.current_box = new_box;
        self.state.frame_index = t;
        self.state.incumbent = best;
        self.maybe_fit_hyperparams(&region)?;

        let (best_value, best_location) = best.expect("budget >= 1");
        Ok(FrameSummary {
            frame_index: t,
            bbox: new_box,
            best_value,
            best_location,
            selections: self.cfg.budget_per_frame,
            oracle_calls: self.oracle.calls() - calls_before,
            scale_mode,
            region,
        })
    }

    fn maybe_fit_hyperparams(&mut self, region: &SearchRegion) -> Result<()> {
        if !self.cfg.fit_hyperparams || self.steps < self.cfg.window_frames {
            return Ok(());
        }
        let due = match self.fitted_at {
            None => true,
            Some(at) => self.cfg.refit_every > 0 && self.steps - at >= self.cfg.refit_every,
        };
        let memory = &self.state.memory;
        let distinct_times = memory.iter().any(|m| m.time != memory[0].time);
        if !due || memory.len() < 5 || !distinct_times {
            return Ok(());
        }
        let samples: Vec<Sample> = memory
            .iter()
            .map(|m| Sample {
                location: region.to_unit(m.center),
                time: m.time,
                scale: m.scale,
                value: m.value,
            })
            .collect();
        let prior = self.prior();
        self.state.lengthscales = fit_hyperparams(&samples, &self.cfg.hyper_grid, &prior, self.cfg.exec)?;
        self.fitted_at = Some(self.steps);
        Ok(())
    }
}

/// Most frequent best scale among a frame's triplets. Any tie that involves
/// the unscaled box, or that leaves shrink and grow level, resolves to 1.
pub fn scale_mode(votes: &[f64], p: f64) -> f64 {
    let [down, one, up] = [1.0 - p, 1.0, 1.0 + p];
    let count = |s: f64| votes.iter().filter(|&&v| v == s).count();
    let (cd, c1, cu) = (count(down), count(one), count(up));
    if cd > c1 && cd > cu {
        down
    } else if cu > c1 && cu > cd {
        up
    } else {
        one
    }
}

/// Moves the box to the field maximum and applies the damped scale change.
///
/// Among tied maxima the pixel nearest the previous center wins; if the
/// previous center itself lies on a maximal pixel it is kept unchanged.
pub fn update_location(
    field: &Field,
    region: &SearchRegion,
    previous: &BoundingBox,
    scale_mode: f64,
    damping: f64,
    frame_dims: (f64, f64),
) -> Result<BoundingBox> {
    if field.values.is_empty() || field.values.len() != field.width * field.height {
        return Err(Error::DimensionMismatch(
            "field size does not match its dimensions".into(),
        ));
    }
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("score field"));
    }
    let max = field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let prev = [previous.cx, previous.cy];
    let home = region.contains(prev).then(|| {
        let x = ((prev[0] - region.origin[0]) / region.width * field.width as f64).floor() as isize;
        let y = ((prev[1] - region.origin[1]) / region.height * field.height as f64).floor() as isize;
        (
            x.clamp(0, field.width as isize - 1) as usize,
            y.clamp(0, field.height as isize - 1) as usize,
        )
    });
    let center = match home {
        Some((x, y)) if field.get(x, y) == max => prev,
        _ => {
            let mut best: Option<([f64; 2], f64)> = None;
            for y in 0..field.height {
                for x in 0..field.width {
                    if field.get(x, y) != max {
                        continue;
                    }
                    let c = field_pixel_center(field, region, x, y);
                    let dist = (c[0] - prev[0]).powi(2) + (c[1] - prev[1]).powi(2);
                    if best.is_none_or(|(_, bd)| dist < bd) {
                        best = Some((c, dist));
                    }
                }
            }
            best.expect("field has a maximum").0
        }
    };
    let factor = 1.0 + damping * (scale_mode - 1.0);
    let moved = BoundingBox::new(center[0], center[1], previous.width * factor, previous.height * factor);
    Ok(moved.clamp_to_frame(frame_dims.0, frame_dims.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dop::{make_moving_peak, MovingPeakParams};
    use crate::similarity::DopOracle;

    fn region(w: f64) -> SearchRegion {
        SearchRegion {
            origin: [0.0, 0.0],
            width: w,
            height: w,
            side: w,
        }
    }

    #[test]
    fn scale_mode_votes_and_ties() {
        assert_eq!(scale_mode(&[1.05, 1.05, 1.0], 0.05), 1.05);
        assert_eq!(scale_mode(&[0.95, 0.95, 1.0, 1.0], 0.05), 1.0);
        assert_eq!(scale_mode(&[0.95, 1.05], 0.05), 1.0);
        assert_eq!(scale_mode(&[0.95, 0.95, 1.05], 0.05), 0.95);
    }

    #[test]
    fn update_moves_to_unique_max_and_keeps_size() {
        let mut values = vec![0.0; 100];
        values[5 * 10 + 5] = 1.0;
        let field = Field {
            width: 10,
            height: 10,
            values,
        };
        let prev = BoundingBox::new(2.0, 2.0, 3.0, 4.0);
        let b = update_location(&field, &region(10.0), &prev, 1.0, 0.5, (10.0, 10.0)).unwrap();
        assert_eq!((b.cx, b.cy, b.width, b.height), (5.5, 5.5, 3.0, 4.0));
    }

    #[test]
    fn update_scale_arithmetic() {
        let field = Field {
            width: 4,
            height: 4,
            values: vec![0.2; 16],
        };
        let prev = BoundingBox::new(2.0, 2.0, 2.0, 1.0);
        let b = update_location(&field, &region(4.0), &prev, 1.05, 0.5, (4.0, 4.0)).unwrap();
        assert!((b.width - 2.0 * 1.025).abs() < 1e-12 && (b.height - 1.025).abs() < 1e-12);
    }

    #[test]
    fn constant_field_keeps_center() {
        let field = Field {
            width: 7,
            height: 7,
            values: vec![0.4; 49],
        };
        let prev = BoundingBox::new(3.3, 1.7, 2.0, 2.0);
        let b = update_location(&field, &region(7.0), &prev, 1.0, 0.5, (7.0, 7.0)).unwrap();
        assert_eq!((b.cx, b.cy), (3.3, 1.7));
    }

    #[test]
    fn tied_maxima_prefer_nearest() {
        let mut values = vec![0.0; 100];
        values[1] = 1.0;
        values[9 * 10 + 8] = 1.0;
        let field = Field {
            width: 10,
            height: 10,
            values,
        };
        let prev = BoundingBox::new(7.0, 8.0, 1.0, 1.0);
        let b = update_location(&field, &region(10.0), &prev, 1.0, 0.5, (10.0, 10.0)).unwrap();
        assert_eq!((b.cx, b.cy), (8.5, 9.5));
    }

    fn dop_tracker(budget: usize, params: MovingPeakParams, frames: usize) -> (Tracker<DopOracle>, DopOracle) {
        let peak = make_moving_peak(params, frames).unwrap();
        let oracle = DopOracle::moving_peak(peak, 200).unwrap();
        let cfg = TrackerConfig {
            budget_per_frame: budget,
            ..Default::default()
        };
        let b = oracle.initial_box([0.5, 0.5], cfg.search_factor);
        let tracker = tracker_init(&oracle.frame(0), b, oracle.clone(), cfg).unwrap();
        (tracker, oracle)
    }

    #[test]
    fn init_keeps_box_and_rejects_outside() {
        let (tracker, oracle) = dop_tracker(1, MovingPeakParams::default(), 3);
        assert_eq!(tracker.state().current_box, oracle.initial_box([0.5, 0.5], 2.0));
        assert!(tracker.state().memory.is_empty());
        let outside = BoundingBox::new(-5.0, 10.0, 4.0, 4.0);
        assert!(tracker_init(&oracle.frame(0), outside, oracle.clone(), TrackerConfig::default()).is_err());
    }

    #[test]
    fn budget_one_issues_one_triplet_per_frame() {
        let (mut tracker, oracle) = dop_tracker(1, MovingPeakParams::default(), 5);
        for t in 0..5 {
            let s = tracker.step(&oracle.frame(t)).unwrap();
            assert_eq!(s.selections, 1);
            assert_eq!(s.oracle_calls, 3);
        }
        assert_eq!(tracker.oracle_calls(), 15);
        assert!(tracker.step(&oracle.frame(4)).is_err());
    }

    #[test]
    fn memory_window_is_bounded() {
        let (mut tracker, oracle) = dop_tracker(7, MovingPeakParams::default(), 8);
        for t in 0..8 {
            tracker.step(&oracle.frame(t)).unwrap();
            let mem = &tracker.state().memory;
            assert!(mem.len() <= tracker.config().memory_capacity());
            assert!(mem.iter().all(|m| m.time + 3 > t));
        }
    }

    #[test]
    fn static_peak_is_found() {
        let params = MovingPeakParams {
            start: [0.3, 0.65],
            ..Default::default()
        };
        let (mut tracker, oracle) = dop_tracker(80, params, 3);
        for t in 0..3 {
            let s = tracker.step(&oracle.frame(t)).unwrap();
            let est = oracle.to_unit([s.bbox.cx, s.bbox.cy]);
            let err = ((est[0] - 0.3).powi(2) + (est[1] - 0.65).powi(2)).sqrt();
            assert!(err < 0.05, "frame {t}: error {err}");
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let params = MovingPeakParams {
            start: [0.6, 0.4],
            velocity: [0.02, 0.01],
            noise_sd: 0.05,
            seed: 4,
            ..Default::default()
        };
        let run = || {
            let (mut tracker, oracle) = dop_tracker(20, params, 4);
            (0..4)
                .map(|t| tracker.step(&oracle.frame(t)).unwrap().bbox)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn wrong_frame_size_rejected() {
        let (mut tracker, _) = dop_tracker(1, MovingPeakParams::default(), 3);
        assert!(tracker.step(&Frame::blank(1, 100, 200)).is_err());
    }
}
