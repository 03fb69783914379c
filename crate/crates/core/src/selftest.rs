//! Cross-checks of the GP against a dense, independently written solver.
//!
//! The reference path builds the full Gram matrix and solves it by
//! Gauss-Jordan elimination with complete pivoting, so it shares no code
//! with the Cholesky path it checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{GpModel, GpPrior, Query, Sample, SlicePosterior};
use crate::kernels::{KernelSpec, MaternFamily, SpatioTemporalKernel};
use crate::par::Exec;

/// Solves `A X = B` for a square `A` (row-major, `n x n`) and `B` with
/// `m` columns (row-major, `n x m`). Returns `X` and `ln|det A|`.
pub fn full_pivot_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize, m: usize) -> Result<(Vec<f64>, f64)> {
    if a.len() != n * n || b.len() != n * m {
        return Err(Error::DimensionMismatch(format!(
            "expected {n}x{n} and {n}x{m}, got {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut log_det = 0.0;
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, -1.0);
        for r in k..n {
            for c in k..n {
                let v = a[r * n + c].abs();
                if v > best {
                    (pr, pc, best) = (r, c, v);
                }
            }
        }
        if best <= 0.0 || !best.is_finite() {
            return Err(Error::Precondition("singular matrix in dense solve".into()));
        }
        if pr != k {
            for c in 0..n {
                a.swap(pr * n + c, k * n + c);
            }
            for c in 0..m {
                b.swap(pr * m + c, k * m + c);
            }
        }
        if pc != k {
            for r in 0..n {
                a.swap(r * n + pc, r * n + k);
            }
            col_perm.swap(pc, k);
        }
        let pivot = a[k * n + k];
        log_det += pivot.abs().ln();
        for c in 0..n {
            a[k * n + c] /= pivot;
        }
        for c in 0..m {
            b[k * m + c] /= pivot;
        }
        for r in 0..n {
            if r == k {
                continue;
            }
            let f = a[r * n + k];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a[r * n + c] -= f * a[k * n + c];
            }
            for c in 0..m {
                b[r * m + c] -= f * b[k * m + c];
            }
        }
    }
    // Row k of the reduced system now holds unknown col_perm[k].
    let mut x = vec![0.0; n * m];
    for k in 0..n {
        for c in 0..m {
            x[col_perm[k] * m + c] = b[k * m + c];
        }
    }
    Ok((x, log_det))
}

fn kernel_value(k: &SpatioTemporalKernel, a: [f64; 2], ta: f64, b: [f64; 2], tb: f64) -> f64 {
    let matern = |spec: &KernelSpec, r: f64| {
        let s = r / spec.lengthscale;
        let shape = match spec.family {
            MaternFamily::Matern12 => (-s).exp(),
            MaternFamily::Matern32 => (1.0 + 3f64.sqrt() * s) * (-(3f64.sqrt()) * s).exp(),
            MaternFamily::Matern52 => (1.0 + 5f64.sqrt() * s + 5.0 * s * s / 3.0) * (-(5f64.sqrt()) * s).exp(),
        };
        spec.variance * shape
    };
    let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    matern(&k.spatial, r) * matern(&k.temporal, (ta - tb).abs())
}

/// Dense reference posterior `(mean, variance)` at each query, plus the log
/// marginal likelihood, using `noise` on the diagonal.
pub fn dense_reference(
    samples: &[Sample],
    prior: &GpPrior,
    noise: f64,
    queries: &[Query],
) -> Result<(Vec<(f64, f64)>, f64)> {
    let n = samples.len();
    let m = queries.len();
    let k = &prior.kernel;
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (&samples[i], &samples[j]);
            gram[i * n + j] = kernel_value(k, a.location, a.time as f64, b.location, b.time as f64);
        }
        gram[i * n + i] += noise;
    }
    // Right-hand sides: centered values, then one column per query.
    let mut rhs = vec![0.0; n * (m + 1)];
    for i in 0..n {
        let s = &samples[i];
        rhs[i * (m + 1)] = s.value - prior.mean;
        for (c, q) in queries.iter().enumerate() {
            rhs[i * (m + 1) + c + 1] = kernel_value(k, s.location, s.time as f64, q.location, q.time);
        }
    }
    let (x, log_det) = full_pivot_solve(gram, rhs.clone(), n, m + 1)?;
    let alpha: Vec<f64> = (0..n).map(|i| x[i * (m + 1)]).collect();
    let fit: f64 = (0..n).map(|i| rhs[i * (m + 1)] * alpha[i]).sum();
    let lml = -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let post = queries
        .iter()
        .enumerate()
        .map(|(c, q)| {
            let kq = |i: usize| rhs[i * (m + 1) + c + 1];
            let mean = prior.mean + (0..n).map(|i| kq(i) * alpha[i]).sum::<f64>();
            let prior_var = kernel_value(k, q.location, q.time, q.location, q.time);
            let reduction: f64 = (0..n).map(|i| kq(i) * x[i * (m + 1) + c + 1]).sum();
            (mean, prior_var - reduction)
        })
        .collect();
    Ok((post, lml))
}

/// A random regression problem with at most `max_n` samples.
#[derive(Clone, Debug)]
pub struct Instance {
    pub samples: Vec<Sample>,
    pub prior: GpPrior,
    pub queries: Vec<Query>,
}

pub fn random_instance(rng: &mut impl Rng, max_n: usize) -> Instance {
    const FAMILIES: [MaternFamily; 3] = [MaternFamily::Matern12, MaternFamily::Matern32, MaternFamily::Matern52];
    let spec = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| KernelSpec {
        family: FAMILIES[rng.random_range(0..3)],
        variance: rng.random_range(0.5..2.0),
        lengthscale: rng.random_range(lo..hi),
    };
    let kernel = SpatioTemporalKernel {
        spatial: spec(rng, 0.1, 1.0),
        temporal: spec(rng, 0.5, 5.0),
    };
    let prior = GpPrior {
        kernel,
        noise: 10f64.powf(rng.random_range(-6.0..-2.0)),
        mean: rng.random_range(-1.0..1.0),
    };
    let n = rng.random_range(1..=max_n);
    let samples: Vec<Sample> = (0..n)
        .map(|_| {
            Sample::new(
                [rng.random(), rng.random()],
                rng.random_range(0..4),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    let mut queries: Vec<Query> = (0..8)
        .map(|_| Query::new([rng.random(), rng.random()], rng.random_range(0.0..4.0)))
        .collect();
    queries.push(Query::new(samples[0].location, samples[0].time as f64));
    Instance {
        samples,
        prior,
        queries,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

impl std::fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} instances, max error {:.3e} (tolerance {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.max_error,
            self.tolerance
        )
    }
}

/// Largest absolute difference between the fitted model's predictions and
/// the dense reference, over means and variances.
pub fn posterior_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 20);
        let model = GpModel::fit(inst.samples.clone(), inst.prior)?;
        let got = model.predict_with(&inst.queries, Exec::Serial)?;
        let (want, _) = dense_reference(&inst.samples, &inst.prior, model.effective_noise(), &inst.queries)?;
        for (g, (wm, wv)) in got.iter().zip(&want) {
            max_error = max_error.max((g.mean - wm).abs()).max((g.variance - wv).abs());
        }
    }
    Ok(SuiteOutcome {
        name: "posterior vs dense solve",
        instances,
        max_error,
        tolerance: 1e-8,
    })
}

/// Relative error of the log marginal likelihood against the dense
/// determinant.
pub fn likelihood_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 20);
        let model = GpModel::fit(inst.samples.clone(), inst.prior)?;
        let (_, want) = dense_reference(&inst.samples, &inst.prior, model.effective_noise(), &[])?;
        let got = model.log_marginal_likelihood();
        max_error = max_error.max((got - want).abs() / want.abs().max(1.0));
    }
    Ok(SuiteOutcome {
        name: "log marginal likelihood vs dense determinant",
        instances,
        max_error,
        tolerance: 1e-8,
    })
}

/// Incremental slice updates against a fresh fit after every sample.
pub fn incremental_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 20);
        let split = inst.samples.len() / 2;
        let mut slice = SlicePosterior::new(
            inst.prior,
            inst.samples[..split].to_vec(),
            inst.queries.clone(),
            Exec::Serial,
        )?;
        for s in &inst.samples[split..] {
            slice.add(*s)?;
        }
        let model = slice.model().ok_or(Error::Empty("slice model"))?;
        let batch = GpModel::fit(inst.samples.clone(), inst.prior)?;
        if model.effective_noise() != batch.effective_noise() {
            continue;
        }
        let want = batch.predict_with(&inst.queries, Exec::Serial)?;
        for (g, w) in slice.posterior().iter().zip(&want) {
            max_error = max_error
                .max((g.mean - w.mean).abs())
                .max((g.variance - w.variance).abs());
        }
    }
    Ok(SuiteOutcome {
        name: "incremental vs batch posterior",
        instances,
        max_error,
        tolerance: 1e-9,
    })
}

/// Predictions after shuffling the samples.
pub fn permutation_suite(instances: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 20);
        let a = GpModel::fit(inst.samples.clone(), inst.prior)?;
        let mut shuffled = inst.samples.clone();
        shuffled.shuffle(&mut rng);
        let b = GpModel::fit(shuffled, inst.prior)?;
        if a.effective_noise() != b.effective_noise() {
            continue;
        }
        let pa = a.predict_with(&inst.queries, Exec::Serial)?;
        let pb = b.predict_with(&inst.queries, Exec::Serial)?;
        for (x, y) in pa.iter().zip(&pb) {
            max_error = max_error
                .max((x.mean - y.mean).abs())
                .max((x.variance - y.variance).abs());
        }
    }
    Ok(SuiteOutcome {
        name: "sample permutation invariance",
        instances,
        max_error,
        tolerance: 1e-9,
    })
}

/// Every suite with its standard instance count.
pub fn run_selftests(seed: u64) -> Result<Vec<SuiteOutcome>> {
    Ok(vec![
        posterior_suite(50, seed)?,
        likelihood_suite(50, seed.wrapping_add(1))?,
        incremental_suite(50, seed.wrapping_add(2))?,
        permutation_suite(50, seed.wrapping_add(3))?,
    ])
}
