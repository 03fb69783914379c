//! Stationary Matérn covariance functions and the separable space-time product.

use std::fmt;
use std::str::FromStr;

use crate::error::{ensure_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaternFamily {
    /// ν = 1/2, the exponential kernel.
    Matern12,
    Matern32,
    Matern52,
}

impl fmt::Display for MaternFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaternFamily::Matern12 => "matern12",
            MaternFamily::Matern32 => "matern32",
            MaternFamily::Matern52 => "matern52",
        })
    }
}

impl FromStr for MaternFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern12" | "exponential" => Ok(MaternFamily::Matern12),
            "matern32" => Ok(MaternFamily::Matern32),
            "matern52" => Ok(MaternFamily::Matern52),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub family: MaternFamily,
    pub variance: f64,
    pub lengthscale: f64,
}

impl KernelSpec {
    pub fn new(family: MaternFamily, variance: f64, lengthscale: f64) -> Result<Self> {
        let spec = Self {
            family,
            variance,
            lengthscale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn matern52(lengthscale: f64) -> Self {
        Self {
            family: MaternFamily::Matern52,
            variance: 1.0,
            lengthscale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "variance must be > 0, got {}",
                self.variance
            )));
        }
        if !(self.lengthscale.is_finite() && self.lengthscale > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "lengthscale must be > 0, got {}",
                self.lengthscale
            )));
        }
        Ok(())
    }

    /// Covariance at distance `r`, without validation. Used on hot paths
    /// after the spec has been checked once.
    #[inline]
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        let s = r / self.lengthscale;
        let shape = match self.family {
            MaternFamily::Matern12 => (-s).exp(),
            MaternFamily::Matern32 => {
                let a = 3f64.sqrt() * s;
                (1.0 + a) * (-a).exp()
            }
            MaternFamily::Matern52 => {
                let a = 5f64.sqrt() * s;
                (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        };
        self.variance * shape
    }
}

/// Evaluates a Matérn kernel at the non-negative distance `r`.
pub fn kernel_eval(spec: &KernelSpec, r: f64) -> Result<f64> {
    spec.validate()?;
    ensure_finite(r, "kernel distance")?;
    if r < 0.0 {
        return Err(Error::Precondition(format!("distance must be >= 0, got {r}")));
    }
    Ok(spec.eval_unchecked(r))
}

/// A point of the joint input space: spatial coordinates plus frame index.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTime {
    pub location: Vec<f64>,
    pub time: f64,
}

impl SpaceTime {
    pub fn new(location: impl Into<Vec<f64>>, time: f64) -> Self {
        Self {
            location: location.into(),
            time,
        }
    }
}

/// `K((x,t),(x',t')) = K_S(|x-x'|) * K_T(|t-t'|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatioTemporalKernel {
    pub spatial: KernelSpec,
    pub temporal: KernelSpec,
}

impl Default for SpatioTemporalKernel {
    fn default() -> Self {
        Self {
            spatial: KernelSpec::matern52(0.2),
            temporal: KernelSpec::matern52(2.0),
        }
    }
}

impl SpatioTemporalKernel {
    pub fn validate(&self) -> Result<()> {
        self.spatial.validate()?;
        self.temporal.validate()
    }

    pub fn prior_variance(&self) -> f64 {
        self.spatial.variance * self.temporal.variance
    }

    #[inline]
    pub(crate) fn eval_2d(&self, a: [f64; 2], ta: f64, b: [f64; 2], tb: f64) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let r = (dx * dx + dy * dy).sqrt();
        self.spatial.eval_unchecked(r) * self.temporal.eval_unchecked((ta - tb).abs())
    }
}

/// Evaluates the separable kernel between two space-time points.
pub fn st_kernel_eval(k: &SpatioTemporalKernel, p1: &SpaceTime, p2: &SpaceTime) -> Result<f64> {
    k.validate()?;
    if p1.location.len() != p2.location.len() {
        return Err(Error::DimensionMismatch(format!(
            "locations have {} and {} coordinates",
            p1.location.len(),
            p2.location.len()
        )));
    }
    ensure_finite(p1.time, "time")?;
    ensure_finite(p2.time, "time")?;
    let mut sq = 0.0;
    for (a, b) in p1.location.iter().zip(&p2.location) {
        ensure_finite(*a, "location")?;
        ensure_finite(*b, "location")?;
        sq += (a - b) * (a - b);
    }
    let spatial = kernel_eval(&k.spatial, sq.sqrt())?;
    let temporal = kernel_eval(&k.temporal, (p1.time - p2.time).abs())?;
    Ok(spatial * temporal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FAMILIES: [MaternFamily; 3] = [MaternFamily::Matern12, MaternFamily::Matern32, MaternFamily::Matern52];

    #[test]
    fn zero_lag_is_variance() {
        for family in FAMILIES {
            let spec = KernelSpec::new(family, 2.5, 0.7).unwrap();
            assert_eq!(kernel_eval(&spec, 0.0).unwrap(), 2.5);
        }
    }

    #[test]
    fn decays_to_zero() {
        let spec = KernelSpec::matern52(1.0);
        assert!(kernel_eval(&spec, 100.0).unwrap() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(KernelSpec::new(MaternFamily::Matern32, 0.0, 1.0).is_err());
        assert!(KernelSpec::new(MaternFamily::Matern32, 1.0, -1.0).is_err());
        let spec = KernelSpec::matern52(1.0);
        assert!(kernel_eval(&spec, f64::NAN).is_err());
        assert!(kernel_eval(&spec, f64::INFINITY).is_err());
        let k = SpatioTemporalKernel::default();
        let a = SpaceTime::new(vec![0.0, 0.0], 0.0);
        let b = SpaceTime::new(vec![0.0, 0.0, 1.0], 0.0);
        assert!(matches!(st_kernel_eval(&k, &a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn equal_times_reduce_to_spatial() {
        let k = SpatioTemporalKernel::default();
        let a = SpaceTime::new(vec![0.1, 0.3], 4.0);
        let b = SpaceTime::new(vec![0.4, 0.2], 4.0);
        let r = ((0.3f64).powi(2) + (0.1f64).powi(2)).sqrt();
        let spatial = kernel_eval(&k.spatial, r).unwrap();
        assert_eq!(st_kernel_eval(&k, &a, &b).unwrap(), spatial);
        assert_eq!(st_kernel_eval(&k, &a, &a).unwrap(), 1.0);
    }

    #[test]
    fn family_names_round_trip() {
        for family in FAMILIES {
            assert_eq!(family.to_string().parse::<MaternFamily>().unwrap(), family);
        }
    }

    proptest! {
        #[test]
        fn monotone_decay(r1 in 0.0..20.0f64, dr in 0.0..5.0f64, ls in 0.05..5.0f64) {
            for family in FAMILIES {
                let spec = KernelSpec::new(family, 1.0, ls).unwrap();
                let a = kernel_eval(&spec, r1).unwrap();
                let b = kernel_eval(&spec, r1 + dr).unwrap();
                prop_assert!(b <= a);
                prop_assert!(a > 0.0 || r1 > 0.0);
            }
        }

        #[test]
        fn symmetric(ax in -1.0..2.0f64, ay in -1.0..2.0f64, at in 0.0..10.0f64,
                     bx in -1.0..2.0f64, by in -1.0..2.0f64, bt in 0.0..10.0f64) {
            let k = SpatioTemporalKernel::default();
            let p = SpaceTime::new(vec![ax, ay], at);
            let q = SpaceTime::new(vec![bx, by], bt);
            prop_assert_eq!(st_kernel_eval(&k, &p, &q).unwrap(), st_kernel_eval(&k, &q, &p).unwrap());
            prop_assert!(st_kernel_eval(&k, &p, &q).unwrap() <= 1.0);
        }
    }
}
