//! Gaussian Process regression over space-time samples.
//!
//! The prior is `GP(m, K)` with a constant mean `m` (the score midpoint of
//! the oracle) and the separable Matérn kernel. Internally values are
//! centered by `m`, which is the same as a zero-mean GP on `value - m`.

use crate::error::{ensure_finite, Error, Result};
use crate::kernels::{KernelSpec, SpatioTemporalKernel};
use crate::linalg::{dot, LowerTriangular};
use crate::par::Exec;

/// Largest jitter tried before a fit is declared singular.
pub const MAX_JITTER: f64 = 1e-4;
const MIN_JITTER: f64 = 1e-8;

/// One observed query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    /// Normalized search-region coordinates.
    pub location: [f64; 2],
    /// Frame index.
    pub time: usize,
    /// Box scale multiplier that produced `value`.
    pub scale: f64,
    pub value: f64,
}

impl Sample {
    pub fn new(location: [f64; 2], time: usize, value: f64) -> Self {
        Self {
            location,
            time,
            scale: 1.0,
            value,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_finite(self.location[0], "sample location")?;
        ensure_finite(self.location[1], "sample location")?;
        ensure_finite(self.value, "sample value")?;
        Ok(())
    }
}

/// A prediction site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Query {
    pub location: [f64; 2],
    pub time: f64,
}

impl Query {
    pub fn new(location: [f64; 2], time: f64) -> Self {
        Self { location, time }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Prior settings shared by every model fit during a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpPrior {
    pub kernel: SpatioTemporalKernel,
    /// Observation noise variance.
    pub noise: f64,
    /// Constant prior mean.
    pub mean: f64,
}

impl Default for GpPrior {
    fn default() -> Self {
        Self {
            kernel: SpatioTemporalKernel::default(),
            noise: 1e-4,
            mean: 0.0,
        }
    }
}

impl GpPrior {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Precondition(format!("noise must be >= 0, got {}", self.noise)));
        }
        ensure_finite(self.mean, "prior mean")?;
        Ok(())
    }

    #[inline]
    fn cov(&self, a: &Sample, b: &Sample) -> f64 {
        self.kernel
            .eval_2d(a.location, a.time as f64, b.location, b.time as f64)
    }

    #[inline]
    fn cov_query(&self, s: &Sample, q: &Query) -> f64 {
        self.kernel.eval_2d(s.location, s.time as f64, q.location, q.time)
    }
}

/// Whether [`GpModel::push`] extended the factor or had to refit from scratch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PushOutcome {
    Appended,
    Refit,
}

/// A fitted surrogate. Immutable apart from [`GpModel::push`].
#[derive(Clone, Debug)]
pub struct GpModel {
    samples: Vec<Sample>,
    prior: GpPrior,
    /// Noise actually on the diagonal; above `prior.noise` after jitter.
    effective_noise: f64,
    chol: LowerTriangular,
    /// `L⁻¹ (y - m)`.
    white: Vec<f64>,
    /// `(K + σ²I)⁻¹ (y - m)`.
    alpha: Vec<f64>,
}

fn jitter_schedule(noise: f64) -> Vec<f64> {
    let mut levels = vec![noise];
    let mut j = noise.max(MIN_JITTER);
    while j < MAX_JITTER {
        if j > noise {
            levels.push(j);
        }
        j *= 2.0;
    }
    if noise < MAX_JITTER {
        levels.push(MAX_JITTER);
    }
    levels
}

impl GpModel {
    /// Fits the model, escalating the diagonal jitter if the Gram matrix is
    /// not numerically positive definite.
    pub fn fit(samples: Vec<Sample>, prior: GpPrior) -> Result<Self> {
        prior.validate()?;
        if samples.is_empty() {
            return Err(Error::Empty("gp_fit needs at least one sample"));
        }
        for s in &samples {
            s.validate()?;
        }
        Self::fit_from(samples, prior, prior.noise)
    }

    fn fit_from(samples: Vec<Sample>, prior: GpPrior, start_noise: f64) -> Result<Self> {
        let n = samples.len();
        let mut last = start_noise;
        for noise in jitter_schedule(start_noise) {
            last = noise;
            let chol = LowerTriangular::cholesky(n, |i, j| {
                let k = prior.cov(&samples[i], &samples[j]);
                if i == j {
                    k + noise
                } else {
                    k
                }
            });
            if let Some(chol) = chol {
                let mut white: Vec<f64> = samples.iter().map(|s| s.value - prior.mean).collect();
                chol.forward_solve_in_place(&mut white);
                let mut alpha = white.clone();
                chol.backward_solve_in_place(&mut alpha);
                return Ok(Self {
                    samples,
                    prior,
                    effective_noise: noise,
                    chol,
                    white,
                    alpha,
                });
            }
        }
        Err(Error::NotPositiveDefinite { jitter: last })
    }

    /// Adds one sample in O(n²). Falls back to a jittered refit when the new
    /// pivot is not positive.
    pub fn push(&mut self, sample: Sample) -> Result<PushOutcome> {
        sample.validate()?;
        let k: Vec<f64> = self.samples.iter().map(|s| self.prior.cov(s, &sample)).collect();
        let diag = self.prior.cov(&sample, &sample) + self.effective_noise;
        if self.chol.push_row(&k, diag).is_some() {
            let n = self.samples.len();
            let row = self.chol.row(n);
            let dot: f64 = row[..n].iter().zip(&self.white).map(|(l, w)| l * w).sum();
            self.white.push((sample.value - self.prior.mean - dot) / row[n]);
            self.samples.push(sample);
            let mut alpha = self.white.clone();
            self.chol.backward_solve_in_place(&mut alpha);
            self.alpha = alpha;
            Ok(PushOutcome::Appended)
        } else {
            let mut samples = self.samples.clone();
            samples.push(sample);
            let start = self.effective_noise.max(MIN_JITTER);
            *self = Self::fit_from(samples, self.prior, start)?;
            Ok(PushOutcome::Refit)
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn prior(&self) -> &GpPrior {
        &self.prior
    }

    pub fn kernel(&self) -> &SpatioTemporalKernel {
        &self.prior.kernel
    }

    pub fn effective_noise(&self) -> f64 {
        self.effective_noise
    }

    pub fn cholesky(&self) -> &LowerTriangular {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Posterior mean only, O(n) per query.
    pub fn predict_mean(&self, q: &Query) -> Result<f64> {
        check_query(q)?;
        let m: f64 = self
            .samples
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| self.prior.cov_query(s, q) * a)
            .sum();
        Ok(self.prior.mean + m)
    }

    pub fn predict_one(&self, q: &Query) -> Result<Posterior> {
        check_query(q)?;
        let mut k: Vec<f64> = self.samples.iter().map(|s| self.prior.cov_query(s, q)).collect();
        let mean = self.prior.mean + k.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
        self.chol.forward_solve_in_place(&mut k);
        let reduction: f64 = k.iter().map(|v| v * v).sum();
        let variance = (self.prior.kernel.prior_variance() - reduction).max(0.0);
        Ok(Posterior { mean, variance })
    }

    pub fn predict(&self, queries: &[Query]) -> Result<Vec<Posterior>> {
        self.predict_with(queries, Exec::default())
    }

    pub fn predict_with(&self, queries: &[Query], exec: Exec) -> Result<Vec<Posterior>> {
        exec.map_slice(queries, |q| self.predict_one(q)).into_iter().collect()
    }

    /// Gaussian log evidence of the centered values.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.samples.len() as f64;
        let fit: f64 = self.white.iter().map(|w| w * w).sum();
        -0.5 * fit - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

fn check_query(q: &Query) -> Result<()> {
    ensure_finite(q.location[0], "query location")?;
    ensure_finite(q.location[1], "query location")?;
    ensure_finite(q.time, "query time")?;
    Ok(())
}

/// Fits a zero-offset model with the given kernel and noise.
pub fn gp_fit(samples: Vec<Sample>, kernel: SpatioTemporalKernel, noise: f64) -> Result<GpModel> {
    GpModel::fit(
        samples,
        GpPrior {
            kernel,
            noise,
            mean: 0.0,
        },
    )
}

pub fn gp_predict(model: &GpModel, queries: &[Query]) -> Result<Vec<Posterior>> {
    model.predict(queries)
}

pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// Candidate lengthscales for [`fit_hyperparams`].
#[derive(Clone, Debug, PartialEq)]
pub struct HyperGrid {
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            spatial: log_spaced(0.05, 0.8, 9),
            temporal: log_spaced(0.5, 8.0, 5),
        }
    }
}

/// `steps` geometrically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let ratio = (hi / lo).ln() / (steps - 1) as f64;
            (0..steps).map(|i| lo * (ratio * i as f64).exp()).collect()
        }
    }
}

/// Selects spatial and temporal lengthscales by maximizing the marginal
/// likelihood over the cross-product grid, with both variances held at 1.
/// Ties resolve to the first grid point (spatial-major order).
pub fn fit_hyperparams(samples: &[Sample], grid: &HyperGrid, prior: &GpPrior, exec: Exec) -> Result<(f64, f64)> {
    if grid.spatial.is_empty() || grid.temporal.is_empty() {
        return Err(Error::DegenerateGrid("hyperparameter grid has an empty range".into()));
    }
    if grid
        .spatial
        .iter()
        .chain(&grid.temporal)
        .any(|l| !(l.is_finite() && *l > 0.0))
    {
        return Err(Error::DegenerateGrid("lengthscales must be positive".into()));
    }
    if samples.len() < 5 {
        return Err(Error::Precondition(format!(
            "hyperparameter fitting needs >= 5 samples, got {}",
            samples.len()
        )));
    }
    let first_time = samples[0].time;
    if samples.iter().all(|s| s.time == first_time) {
        return Err(Error::Precondition(
            "hyperparameter fitting needs samples from >= 2 distinct times".into(),
        ));
    }
    let nt = grid.temporal.len();
    let scores = exec.map_range(grid.spatial.len() * nt, |idx| {
        let kernel = SpatioTemporalKernel {
            spatial: KernelSpec {
                variance: 1.0,
                lengthscale: grid.spatial[idx / nt],
                ..prior.kernel.spatial
            },
            temporal: KernelSpec {
                variance: 1.0,
                lengthscale: grid.temporal[idx % nt],
                ..prior.kernel.temporal
            },
        };
        GpModel::fit(samples.to_vec(), GpPrior { kernel, ..*prior })
            .map(|m| m.log_marginal_likelihood())
            .unwrap_or(f64::NEG_INFINITY)
    });
    let mut best: Option<(usize, f64)> = None;
    for (idx, &score) in scores.iter().enumerate() {
        if score.is_finite() && best.is_none_or(|(_, b)| score > b) {
            best = Some((idx, score));
        }
    }
    let (idx, _) = best.ok_or(Error::NotPositiveDefinite { jitter: MAX_JITTER })?;
    Ok((grid.spatial[idx / nt], grid.temporal[idx % nt]))
}

/// Posterior over a fixed set of query sites, updated in O(n·m) per added
/// sample instead of refitting and re-predicting from scratch.
///
/// Holds `V = L⁻¹ K(X, Q)` column by column; the posterior mean at query `c`
/// is `m + Σᵢ V[i,c]·wᵢ` and the variance `k(q,q) - Σᵢ V[i,c]²`.
#[derive(Clone, Debug)]
pub struct SlicePosterior {
    prior: GpPrior,
    queries: Vec<Query>,
    model: Option<GpModel>,
    columns: Vec<Vec<f64>>,
    mean_acc: Vec<f64>,
    var_acc: Vec<f64>,
    exec: Exec,
}

impl SlicePosterior {
    pub fn new(prior: GpPrior, samples: Vec<Sample>, queries: Vec<Query>, exec: Exec) -> Result<Self> {
        prior.validate()?;
        for q in &queries {
            check_query(q)?;
        }
        let model = if samples.is_empty() {
            None
        } else {
            Some(GpModel::fit(samples, prior)?)
        };
        let mut slice = Self {
            prior,
            columns: Vec::new(),
            mean_acc: vec![0.0; queries.len()],
            var_acc: vec![0.0; queries.len()],
            queries,
            model,
            exec,
        };
        slice.rebuild();
        Ok(slice)
    }

    fn rebuild(&mut self) {
        let Some(model) = &self.model else {
            self.columns = vec![Vec::new(); self.queries.len()];
            self.mean_acc.iter_mut().for_each(|v| *v = 0.0);
            self.var_acc.iter_mut().for_each(|v| *v = 0.0);
            return;
        };
        let prior = &self.prior;
        let cols = self.exec.map_slice(&self.queries, |q| {
            let mut v: Vec<f64> = model.samples.iter().map(|s| prior.cov_query(s, q)).collect();
            model.chol.forward_solve_in_place(&mut v);
            let mean = dot(&v, &model.white);
            let var = dot(&v, &v);
            (v, mean, var)
        });
        self.columns.clear();
        for (c, (v, mean, var)) in cols.into_iter().enumerate() {
            self.columns.push(v);
            self.mean_acc[c] = mean;
            self.var_acc[c] = var;
        }
    }

    pub fn add(&mut self, sample: Sample) -> Result<()> {
        let outcome = match &mut self.model {
            Some(model) => model.push(sample)?,
            None => {
                self.model = Some(GpModel::fit(vec![sample], self.prior)?);
                PushOutcome::Refit
            }
        };
        if outcome == PushOutcome::Refit {
            self.rebuild();
            return Ok(());
        }
        let model = self.model.as_ref().expect("model present after push");
        let n = model.len() - 1;
        let row = model.chol.row(n);
        let (l, d) = (&row[..n], row[n]);
        let w = model.white[n];
        let prior = &self.prior;
        let entries = self.exec.map_range(self.queries.len(), |c| {
            let col = &self.columns[c];
            (prior.cov_query(&sample, &self.queries[c]) - dot(l, col)) / d
        });
        for (c, e) in entries.into_iter().enumerate() {
            self.columns[c].push(e);
            self.mean_acc[c] += e * w;
            self.var_acc[c] += e * e;
        }
        Ok(())
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn model(&self) -> Option<&GpModel> {
        self.model.as_ref()
    }

    pub fn posterior(&self) -> Vec<Posterior> {
        let prior_var = self.prior.kernel.prior_variance();
        self.mean_acc
            .iter()
            .zip(&self.var_acc)
            .map(|(m, v)| Posterior {
                mean: self.prior.mean + m,
                variance: (prior_var - v).max(0.0),
            })
            .collect()
    }
}
