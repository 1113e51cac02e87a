//! Run configuration: a flat TOML file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use epiwalk::{NoiseKind, NoiseModel, OptimizerConfig, ResolvedParams, TestFunction};
use serde::{Deserialize, Serialize};

/// Keys accepted in `[overrides]` and by `--set`.
pub const OVERRIDE_KEYS: [&str; 11] = [
    "step_radius",
    "steps_per_sample",
    "n_t",
    "C",
    "ell",
    "delta_band",
    "alpha",
    "n_chains",
    "burn_in_factor",
    "max_epochs",
    "initial_ceiling",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseArg {
    Gaussian,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub func: String,
    pub dim: usize,
    pub sigma: f64,
    pub noise: NoiseArg,
    /// Only read by `shifted-quadratic`.
    pub shift: f64,
    pub eps: f64,
    pub seed: u64,
    pub query_budget: u64,
    pub parallel: bool,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            func: "quadratic".into(),
            dim: 2,
            sigma: 0.0,
            noise: NoiseArg::Gaussian,
            shift: 0.25,
            eps: 0.01,
            seed: 0,
            query_budget: 10_000_000,
            parallel: true,
            overrides: BTreeMap::new(),
        }
    }
}

/// The pieces `optimize` takes.
#[derive(Clone, Debug)]
pub struct Problem {
    pub func: TestFunction,
    pub noise: NoiseModel,
    pub eps: f64,
    pub optimizer: OptimizerConfig,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        bail!("invalid `{key}`: {v} must be a positive number");
    }
    Ok(v)
}

fn count(key: &str, v: f64) -> Result<usize> {
    if !(v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
        bail!("invalid `{key}`: {v} must be a positive integer");
    }
    Ok(v as usize)
}

/// Reports core parameter errors under the config key the user wrote.
fn rename_field(e: epiwalk::Error) -> anyhow::Error {
    match e {
        epiwalk::Error::InvalidParameter { name, reason } => {
            let key = match name {
                "samples_per_epoch" => "n_t",
                "give_up_band" => "delta_band",
                "confidence" => "C",
                other => other,
            };
            anyhow::anyhow!("invalid `{key}`: {reason}")
        }
        other => other.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid config")?;
        cfg.check_override_keys()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Parses `KEY=VALUE` and stores it as an override.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            bail!("invalid override `{assignment}`: expected KEY=VALUE");
        };
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("invalid `{key}`: `{value}` is not a number"))?;
        self.overrides.insert(key.to_string(), value);
        self.check_override_keys()
    }

    fn check_override_keys(&self) -> Result<()> {
        if let Some(bad) = self
            .overrides
            .keys()
            .find(|k| !OVERRIDE_KEYS.contains(&k.as_str()))
        {
            bail!(
                "unknown override `{bad}`; expected one of {}",
                OVERRIDE_KEYS.join(", ")
            );
        }
        Ok(())
    }

    /// Validates every field and builds the optimizer inputs. Errors name the
    /// offending field.
    pub fn problem(&self) -> Result<Problem> {
        self.check_override_keys()?;
        if self.dim == 0 {
            bail!("invalid `dim`: must be positive");
        }
        let func = TestFunction::by_name(&self.func, self.dim, self.shift)
            .map_err(|e| anyhow::anyhow!("invalid `func`: {e}"))?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            bail!("invalid `sigma`: {} must be nonnegative", self.sigma);
        }
        let noise = if self.sigma == 0.0 {
            NoiseModel::none()
        } else {
            let kind = match self.noise {
                NoiseArg::Gaussian => NoiseKind::Gaussian,
                NoiseArg::Uniform => NoiseKind::UniformBounded,
            };
            NoiseModel::new(kind, self.sigma)?
        };
        if !(self.eps > 0.0 && self.eps < 1.0) {
            bail!("invalid `eps`: {} is outside (0, 1)", self.eps);
        }
        if self.query_budget == 0 {
            bail!("invalid `query_budget`: must be positive");
        }

        let mut opt = OptimizerConfig {
            seed: self.seed,
            query_budget: self.query_budget,
            parallel: self.parallel,
            ..Default::default()
        };
        for (key, &v) in &self.overrides {
            match key.as_str() {
                "step_radius" => opt.step_radius = Some(positive(key, v)?),
                "steps_per_sample" => opt.steps_per_sample = Some(count(key, v)?),
                "n_t" => opt.samples_per_epoch = Some(count(key, v)?),
                "C" => opt.confidence = Some(positive(key, v)?),
                "ell" => opt.error_exponent = positive(key, v)?,
                "delta_band" => opt.give_up_band = Some(positive(key, v)?),
                "alpha" => opt.rounding_alpha = positive(key, v)?,
                "n_chains" => opt.n_chains = count(key, v)?,
                "burn_in_factor" => opt.burn_in_factor = count(key, v)?,
                "max_epochs" => opt.max_epochs = Some(count(key, v)?),
                "initial_ceiling" => {
                    if !v.is_finite() {
                        bail!("invalid `initial_ceiling`: {v} is not finite");
                    }
                    opt.initial_ceiling = Some(v);
                }
                _ => unreachable!("keys checked above"),
            }
        }
        // Surfaces range errors of derived parameters before a run starts.
        ResolvedParams::resolve(&func, &noise, self.eps, &opt).map_err(rename_field)?;
        Ok(Problem {
            func,
            noise,
            eps: self.eps,
            optimizer: opt,
        })
    }

    /// This config with every override filled in by its resolved default.
    pub fn with_resolved_overrides(&self) -> Result<Self> {
        let p = self.problem()?;
        let r = ResolvedParams::resolve(&p.func, &p.noise, p.eps, &p.optimizer)?;
        let o = &p.optimizer;
        let mut out = self.clone();
        let filled = [
            ("step_radius", r.step_radius),
            ("steps_per_sample", r.steps_per_sample as f64),
            ("n_t", r.samples_per_epoch as f64),
            ("C", r.confidence),
            ("ell", o.error_exponent),
            ("delta_band", r.give_up_band),
            ("alpha", o.rounding_alpha),
            ("n_chains", o.n_chains as f64),
            ("burn_in_factor", o.burn_in_factor as f64),
            ("max_epochs", r.max_epochs as f64),
            ("initial_ceiling", r.initial_ceiling),
        ];
        for (k, v) in filled {
            out.overrides.entry(k.to_string()).or_insert(v);
        }
        Ok(out)
    }
}
