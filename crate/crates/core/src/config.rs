//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! tracker.budget_per_frame = 80
//! kernel.spatial.lengthscale = 0.2
//! acq.kind = msei
//! ```
//!
//! Unknown keys are errors, so a typo never silently falls back to a default.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::acquisition::AcqKind;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, MaternFamily};
use crate::par::Exec;
use crate::tracker::{Sampler, TrackerConfig};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "DYNBO_CONFIG";

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    /// 1-based source line, 0 for entries not read from a file.
    pub line: usize,
}

pub fn parse_config(text: &str, path: &Path) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected 'key = value', found '{line}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty key or value".into(),
            });
        }
        out.push(ConfigEntry {
            key: key.to_string(),
            value: value.to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

fn parse_value<T: FromStr>(e: &ConfigEntry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::Config(format!("{} (line {}): cannot parse '{}'", e.key, e.line, e.value)))
}

fn parse_list(e: &ConfigEntry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{} (line {}): bad list item '{}'", e.key, e.line, s.trim())))
        })
        .collect()
}

fn parse_bool(e: &ConfigEntry) -> Result<bool> {
    match e.value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{} (line {}): expected a boolean, got '{}'",
            e.key, e.line, e.value
        ))),
    }
}

fn apply_kernel(spec: &mut KernelSpec, field: &str, e: &ConfigEntry) -> Result<bool> {
    match field {
        "family" => spec.family = MaternFamily::from_str(&e.value)?,
        "variance" => spec.variance = parse_value(e)?,
        "lengthscale" => spec.lengthscale = parse_value(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Applies entries in order, so later entries override earlier ones, then
/// validates the result.
pub fn apply_config(cfg: &mut TrackerConfig, entries: &[ConfigEntry]) -> Result<()> {
    for e in entries {
        let known = match e.key.as_str() {
            "tracker.budget_per_frame" => {
                cfg.budget_per_frame = parse_value(e)?;
                true
            }
            "tracker.grid_d" => {
                cfg.grid_d = parse_value(e)?;
                true
            }
            "tracker.scale_p" => {
                cfg.scale_p = parse_value(e)?;
                true
            }
            "tracker.search_factor" => {
                cfg.search_factor = parse_value(e)?;
                true
            }
            "tracker.window_frames" => {
                cfg.window_frames = parse_value(e)?;
                true
            }
            "tracker.scale_damping" => {
                cfg.scale_damping = parse_value(e)?;
                true
            }
            "tracker.sampler" => {
                cfg.sampler = Sampler::from_str(&e.value)?;
                true
            }
            "tracker.seed" => {
                cfg.seed = parse_value(e)?;
                true
            }
            "tracker.parallel" => {
                cfg.exec = if parse_bool(e)? { Exec::Parallel } else { Exec::Serial };
                true
            }
            "acq.kind" => {
                cfg.acq.kind = AcqKind::from_str(&e.value)?;
                true
            }
            "acq.alpha" => {
                cfg.acq.alpha = parse_value(e)?;
                true
            }
            "acq.q" => {
                cfg.acq.q = parse_value(e)?;
                true
            }
            "acq.fixed_xi" => {
                cfg.acq.fixed_xi = parse_value(e)?;
                true
            }
            "acq.xi_max" => {
                cfg.acq.xi_max = parse_value(e)?;
                true
            }
            "gp.noise" => {
                cfg.noise = parse_value(e)?;
                true
            }
            "gp.fit_hyperparams" => {
                cfg.fit_hyperparams = parse_bool(e)?;
                true
            }
            "gp.refit_every" => {
                cfg.refit_every = parse_value(e)?;
                true
            }
            "gp.grid.spatial" => {
                cfg.hyper_grid.spatial = parse_list(e)?;
                true
            }
            "gp.grid.temporal" => {
                cfg.hyper_grid.temporal = parse_list(e)?;
                true
            }
            key => match key.split_once('.') {
                Some(("kernel", rest)) => match rest.split_once('.') {
                    Some(("spatial", field)) => apply_kernel(&mut cfg.kernel.spatial, field, e)?,
                    Some(("temporal", field)) => apply_kernel(&mut cfg.kernel.temporal, field, e)?,
                    _ => false,
                },
                _ => false,
            },
        };
        if !known {
            return Err(Error::Config(format!("unknown key '{}' (line {})", e.key, e.line)));
        }
    }
    cfg.validate()
}

/// Reads a config file on top of the defaults.
pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    let mut cfg = TrackerConfig::default();
    apply_config(&mut cfg, &parse_config(&fs::read_to_string(path)?, path)?)?;
    Ok(cfg)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Every key with its current value. Feeding the pairs back through
/// [`apply_config`] reproduces `cfg` exactly.
pub fn config_snapshot(cfg: &TrackerConfig) -> Vec<(String, String)> {
    let k = &cfg.kernel;
    [
        ("tracker.budget_per_frame", cfg.budget_per_frame.to_string()),
        ("tracker.grid_d", cfg.grid_d.to_string()),
        ("tracker.scale_p", cfg.scale_p.to_string()),
        ("tracker.search_factor", cfg.search_factor.to_string()),
        ("tracker.window_frames", cfg.window_frames.to_string()),
        ("tracker.scale_damping", cfg.scale_damping.to_string()),
        ("tracker.sampler", cfg.sampler.to_string()),
        ("tracker.seed", cfg.seed.to_string()),
        ("tracker.parallel", (cfg.exec == Exec::Parallel).to_string()),
        ("acq.kind", cfg.acq.kind.to_string()),
        ("acq.alpha", cfg.acq.alpha.to_string()),
        ("acq.q", cfg.acq.q.to_string()),
        ("acq.fixed_xi", cfg.acq.fixed_xi.to_string()),
        ("acq.xi_max", cfg.acq.xi_max.to_string()),
        ("gp.noise", cfg.noise.to_string()),
        ("gp.fit_hyperparams", cfg.fit_hyperparams.to_string()),
        ("gp.refit_every", cfg.refit_every.to_string()),
        ("gp.grid.spatial", join(&cfg.hyper_grid.spatial)),
        ("gp.grid.temporal", join(&cfg.hyper_grid.temporal)),
        ("kernel.spatial.family", k.spatial.family.to_string()),
        ("kernel.spatial.variance", k.spatial.variance.to_string()),
        ("kernel.spatial.lengthscale", k.spatial.lengthscale.to_string()),
        ("kernel.temporal.family", k.temporal.family.to_string()),
        ("kernel.temporal.variance", k.temporal.variance.to_string()),
        ("kernel.temporal.lengthscale", k.temporal.lengthscale.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}
