//! Dynamic optimization problems: maximize `f(x, t)` over `x ∈ F(t) ⊆ [0,1]²`.
//!
//! The moving-peak benchmark gives an analytic ground-truth trajectory so
//! tracking error can be measured exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Axis-aligned feasible rectangle inside the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub const UNIT: Bounds = Bounds {
        min: [0.0, 0.0],
        max: [1.0, 1.0],
    };

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

pub trait DynamicObjective: Send + Sync {
    fn evaluate(&self, location: [f64; 2], t: usize) -> f64;

    fn horizon(&self) -> usize;

    fn bounds(&self, _t: usize) -> Bounds {
        Bounds::UNIT
    }

    /// Closed-form maximizer when the objective knows it.
    fn analytic_argmax(&self, _t: usize) -> Option<[f64; 2]> {
        None
    }
}

/// Wraps an arbitrary closure as an objective over the unit square.
pub struct FnObjective<F> {
    f: F,
    horizon: usize,
}

impl<F> FnObjective<F>
where
    F: Fn([f64; 2], usize) -> f64 + Send + Sync,
{
    pub fn new(horizon: usize, f: F) -> Self {
        Self { f, horizon }
    }
}

impl<F> DynamicObjective for FnObjective<F>
where
    F: Fn([f64; 2], usize) -> f64 + Send + Sync,
{
    fn evaluate(&self, location: [f64; 2], t: usize) -> f64 {
        (self.f)(location, t)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovingPeakParams {
    pub start: [f64; 2],
    /// Displacement per frame.
    pub velocity: [f64; 2],
    pub peak_width: f64,
    pub peak_height: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for MovingPeakParams {
    fn default() -> Self {
        Self {
            start: [0.5, 0.5],
            velocity: [0.0, 0.0],
            peak_width: 0.1,
            peak_height: 1.0,
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

/// Single Gaussian bump moving linearly and reflecting off the square's edges.
#[derive(Clone, Debug, PartialEq)]
pub struct MovingPeak {
    params: MovingPeakParams,
    horizon: usize,
}

/// Folds `x` into `[0, 1]` by mirror reflection.
pub fn reflect_unit(x: f64) -> f64 {
    let m = x.rem_euclid(2.0);
    if m > 1.0 {
        2.0 - m
    } else {
        m
    }
}

impl MovingPeak {
    pub fn params(&self) -> &MovingPeakParams {
        &self.params
    }

    pub fn center(&self, t: usize) -> [f64; 2] {
        let p = &self.params;
        [
            reflect_unit(p.start[0] + p.velocity[0] * t as f64),
            reflect_unit(p.start[1] + p.velocity[1] * t as f64),
        ]
    }

    /// Peak value without observation noise.
    pub fn latent(&self, location: [f64; 2], t: usize) -> f64 {
        let c = self.center(t);
        let d2 = (location[0] - c[0]).powi(2) + (location[1] - c[1]).powi(2);
        let w = self.params.peak_width;
        self.params.peak_height * (-d2 / (2.0 * w * w)).exp()
    }

    fn noise(&self, location: [f64; 2], t: usize) -> f64 {
        if self.params.noise_sd == 0.0 {
            return 0.0;
        }
        // Keyed on (seed, location, t) so evaluation order never matters.
        let key = mix(
            mix(
                mix(self.params.seed ^ 0x9e37_79b9_7f4a_7c15, location[0].to_bits()),
                location[1].to_bits(),
            ),
            t as u64,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let z: f64 = StandardNormal.sample(&mut rng);
        self.params.noise_sd * z
    }
}

/// splitmix64 finalizer over a running state.
fn mix(state: u64, value: u64) -> u64 {
    let mut z = state.wrapping_add(value).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl DynamicObjective for MovingPeak {
    fn evaluate(&self, location: [f64; 2], t: usize) -> f64 {
        self.latent(location, t) + self.noise(location, t)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn analytic_argmax(&self, t: usize) -> Option<[f64; 2]> {
        Some(self.center(t))
    }
}

pub fn make_moving_peak(params: MovingPeakParams, horizon: usize) -> Result<MovingPeak> {
    if !(params.peak_width.is_finite() && params.peak_width > 0.0) {
        return Err(Error::Precondition("peak_width must be > 0".into()));
    }
    if !(params.peak_height.is_finite() && params.peak_height > 0.0) {
        return Err(Error::Precondition("peak_height must be > 0".into()));
    }
    if !(params.noise_sd.is_finite() && params.noise_sd >= 0.0) {
        return Err(Error::Precondition("noise_sd must be >= 0".into()));
    }
    if !Bounds::UNIT.contains(params.start) || params.velocity.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(
            "start must lie in the unit square and velocity be finite".into(),
        ));
    }
    Ok(MovingPeak { params, horizon })
}

/// Cells per side of the brute-force lattice used when no analytic maximizer
/// exists. The lattice includes both edges, so it has one more vertex per side.
pub const BRUTE_FORCE_GRID: usize = 200;

/// Location of the maximum at frame `t`.
pub fn true_argmax(dop: &dyn DynamicObjective, t: usize) -> Result<[f64; 2]> {
    if t >= dop.horizon() {
        return Err(Error::Precondition(format!(
            "frame {t} outside horizon {}",
            dop.horizon()
        )));
    }
    if let Some(c) = dop.analytic_argmax(t) {
        return Ok(c);
    }
    let b = dop.bounds(t);
    let n = BRUTE_FORCE_GRID;
    let mut best = (f64::NEG_INFINITY, b.min);
    for j in 0..=n {
        for i in 0..=n {
            let p = [
                b.min[0] + i as f64 / n as f64 * (b.max[0] - b.min[0]),
                b.min[1] + j as f64 / n as f64 * (b.max[1] - b.min[1]),
            ];
            let v = dop.evaluate(p, t);
            if v > best.0 {
                best = (v, p);
            }
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn peak_value_at_center_and_width() {
        let dop = make_moving_peak(
            MovingPeakParams {
                start: [0.3, 0.6],
                velocity: [0.01, -0.02],
                ..Default::default()
            },
            10,
        )
        .unwrap();
        for t in 0..10 {
            let c = dop.center(t);
            assert_eq!(dop.evaluate(c, t), 1.0);
            let off = [c[0] + 0.1, c[1]];
            assert!((dop.evaluate(off, t) - (-0.5f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn static_peak_does_not_move() {
        let dop = make_moving_peak(MovingPeakParams::default(), 5).unwrap();
        assert!((0..5).all(|t| dop.center(t) == [0.5, 0.5]));
        assert_eq!(true_argmax(&dop, 0).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn reflection_worked_example() {
        let dop = make_moving_peak(
            MovingPeakParams {
                start: [0.9, 0.5],
                velocity: [0.2, 0.0],
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let c = dop.center(1);
        assert!((c[0] - 0.9).abs() < 1e-12 && c[1] == 0.5);
    }

    /// Step-by-step bouncing simulation as an independent check of the
    /// closed-form fold.
    #[test]
    fn reflection_matches_scalar_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let start: f64 = rng.random();
            let v0: f64 = rng.random_range(-0.3..0.3);
            let (mut x, mut v) = (start, v0);
            for t in 1..100usize {
                x += v;
                while !(0.0..=1.0).contains(&x) {
                    if x > 1.0 {
                        x = 2.0 - x;
                    } else {
                        x = -x;
                    }
                    v = -v;
                }
                let closed = reflect_unit(start + v0 * t as f64);
                assert!((closed - x).abs() < 1e-9, "t={t} closed={closed} sim={x}");
            }
        }
    }

    #[test]
    fn noise_is_seeded_and_reproducible() {
        let params = MovingPeakParams {
            noise_sd: 0.05,
            seed: 9,
            ..Default::default()
        };
        let a = make_moving_peak(params, 3).unwrap();
        let b = make_moving_peak(params, 3).unwrap();
        let p = [0.2, 0.7];
        assert_eq!(a.evaluate(p, 1), b.evaluate(p, 1));
        assert_ne!(a.evaluate(p, 1), a.evaluate(p, 2));
        let c = make_moving_peak(MovingPeakParams { seed: 10, ..params }, 3).unwrap();
        assert_ne!(a.evaluate(p, 1), c.evaluate(p, 1));
    }

    #[test]
    fn brute_force_argmax() {
        let f = FnObjective::new(1, |x: [f64; 2], _| -((x[0] - 0.25).powi(2) + (x[1] - 0.75).powi(2)));
        let p = true_argmax(&f, 0).unwrap();
        let cell = 1.0 / BRUTE_FORCE_GRID as f64;
        assert!((p[0] - 0.25).abs() <= cell && (p[1] - 0.75).abs() <= cell);
        assert!(true_argmax(&f, 1).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let best = f.evaluate(p, 0);
        for _ in 0..1000 {
            let q = [rng.random(), rng.random()];
            assert!(best >= f.evaluate(q, 0) - 1e-9);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = MovingPeakParams {
            peak_width: 0.0,
            ..Default::default()
        };
        assert!(make_moving_peak(bad, 1).is_err());
    }
}
