//! Flags, the optional JSON config file, and their resolution into typed settings.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use stretchwalk_core::conditions::{preset, SequencePlan, PRESET_NAMES};
use stretchwalk_core::sampler::Method;
use stretchwalk_core::{Error, ExponentModel, ModelSpec, PerturbedDensity, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Raw flags shared by every subcommand. Values stay textual until the
/// config file has been merged over them.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Flags {
    /// Density, e.g. `power:beta=2`, `weibull:k=3,perturbation=sin,lambda=0.5`
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Preset name, inline JSON plan or path to a JSON plan
    #[arg(long, global = true)]
    pub plan: Option<String>,
    /// Sample sizes, comma separated
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Levels a, comma separated; `1.5*mean` scales the model mean
    #[arg(long, global = true)]
    pub a: Option<String>,
    /// Band half-widths, comma separated, or `inv_log_a`
    #[arg(long, global = true)]
    pub eps: Option<String>,
    /// Sliding-window length
    #[arg(long, global = true)]
    pub k: Option<String>,
    /// Slope threshold for paths, or the plan exponent for conditions
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Power exponent used by the conditions presets
    #[arg(long, global = true)]
    pub beta: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Trials, sweeps or replications, depending on the command
    #[arg(long, global = true)]
    pub trials: Option<String>,
    /// `gibbs`, `is`, `rejection`; for paths `at_least`, `equals`, `none`
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Output directory; stdout when absent
    #[arg(long, global = true)]
    pub out: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Pair closed forms with the brute-force oracle
    #[arg(long, global = true)]
    pub oracle: bool,
    /// JSON file whose keys override the flags
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn flag_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(flag_text).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

impl Flags {
    /// Applies the `--config` file, whose keys win over the flags.
    pub fn merged(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = doc else {
            return Err(Error::InvalidArgument(
                "config file must hold a JSON object".into(),
            ));
        };
        for (key, v) in &map {
            let text = Some(flag_text(v));
            match key.as_str() {
                "model" => self.model = text,
                "plan" => self.plan = text,
                "n" => self.n = text,
                "a" => self.a = text,
                "eps" => self.eps = text,
                "k" => self.k = text,
                "alpha" => self.alpha = text,
                "beta" => self.beta = text,
                "seed" => self.seed = text,
                "trials" => self.trials = text,
                "method" => self.method = text,
                "out" => self.out = text,
                "format" => {
                    self.format = Some(match flag_text(v).as_str() {
                        "csv" => Format::Csv,
                        "json" => Format::Json,
                        other => {
                            return Err(Error::InvalidArgument(format!("unknown format `{other}`")))
                        }
                    })
                }
                "oracle" => self.oracle = v.as_bool().unwrap_or(false),
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown config key `{other}`"
                    )))
                }
            }
        }
        Ok(self)
    }

    pub fn seed(&self, default: u64) -> Result<u64> {
        self.seed
            .as_deref()
            .map_or(Ok(default), |s| parse_num(s, "seed"))
    }

    pub fn format(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out.as_deref().map(Path::new)
    }

    pub fn model(&self, default: &str) -> Result<PerturbedDensity> {
        model_spec(self.model.as_deref().unwrap_or(default))?.build()
    }

    pub fn n_list(&self, default: &[u64]) -> Result<Vec<u64>> {
        match &self.n {
            None => Ok(default.to_vec()),
            Some(s) => split(s).map(|v| parse_num::<u64>(v, "n")).collect(),
        }
    }

    /// Levels, with `c*mean` resolved against `mean`.
    pub fn a_list(&self, default: &str, mean: f64) -> Result<Vec<f64>> {
        split(self.a.as_deref().unwrap_or(default))
            .map(|v| scaled(v, mean, "a"))
            .collect()
    }

    pub fn usize_opt(&self, v: &Option<String>, what: &str) -> Result<Option<usize>> {
        v.as_deref().map(|s| parse_num(s, what)).transpose()
    }

    pub fn f64_opt(&self, v: &Option<String>, what: &str) -> Result<Option<f64>> {
        v.as_deref().map(|s| parse_num(s, what)).transpose()
    }

    pub fn method(&self, default: Method) -> Result<Method> {
        self.method.as_deref().map_or(Ok(default), Method::parse)
    }
}

/// Band half-width rule: fixed values or `1 / log a`.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsRule {
    Values(Vec<f64>),
    InvLogA,
}

impl EpsRule {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim() == "inv_log_a" {
            return Ok(EpsRule::InvLogA);
        }
        Ok(EpsRule::Values(
            split(text)
                .map(|v| parse_num(v, "eps"))
                .collect::<Result<_>>()?,
        ))
    }

    pub fn at(&self, i: usize, a: f64) -> f64 {
        match self {
            EpsRule::InvLogA => 1.0 / a.ln(),
            EpsRule::Values(v) => v[i.min(v.len() - 1)],
        }
    }
}

pub fn split(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty())
}

pub fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("--{what}: cannot parse `{s}`")))
}

/// A number, or `c*mean` for a multiple of `mean`.
pub fn scaled(s: &str, mean: f64, what: &str) -> Result<f64> {
    match s.trim().strip_suffix("*mean") {
        Some(factor) => Ok(parse_num::<f64>(factor, what)? * mean),
        None => parse_num(s, what),
    }
}

/// `kind:key=value,...` or a JSON model record.
pub fn model_spec(text: &str) -> Result<ModelSpec> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("--model: {e}")))
    } else {
        ModelSpec::parse(text)
    }
}

/// A resolved plan: the exponent it runs against, the sequences and the n grid.
#[derive(Debug, Clone)]
pub struct ResolvedPlan {
    pub name: String,
    pub exponent: ExponentModel,
    pub plan: SequencePlan,
    pub n_grid: Vec<u64>,
}

pub fn resolve_plan(flags: &Flags) -> Result<ResolvedPlan> {
    let text = flags.plan.as_deref().unwrap_or("example1-case2");
    let beta = flags.f64_opt(&flags.beta, "beta")?;
    let alpha = flags.f64_opt(&flags.alpha, "alpha")?;
    let mut out = if PRESET_NAMES.contains(&text) {
        let p = preset(text, beta, alpha)?;
        ResolvedPlan {
            name: p.name.to_string(),
            exponent: p.model,
            plan: p.plan,
            n_grid: p.n_grid,
        }
    } else {
        let body = if text.trim_start().starts_with('{') {
            text.to_string()
        } else {
            std::fs::read_to_string(text).map_err(|e| Error::Io(format!("{text}: {e}")))?
        };
        let plan: SequencePlan = serde_json::from_str(&body)
            .map_err(|e| Error::InvalidArgument(format!("--plan: {e}")))?;
        ResolvedPlan {
            name: "custom".into(),
            exponent: ExponentModel::power(beta.unwrap_or(3.0))?,
            plan,
            n_grid: stretchwalk_core::conditions::log_grid(100, 100_000_000, 4),
        }
    };
    if let Some(m) = &flags.model {
        out.exponent = model_spec(m)?.exponent()?;
    }
    if flags.n.is_some() {
        out.n_grid = flags.n_list(&[])?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_levels() {
        assert_eq!(scaled("2.5", 1.0, "a").unwrap(), 2.5);
        assert_eq!(scaled("1.5*mean", 2.0, "a").unwrap(), 3.0);
        assert!(scaled("x*mean", 2.0, "a").is_err());
    }

    #[test]
    fn eps_rules() {
        assert_eq!(EpsRule::parse("inv_log_a").unwrap(), EpsRule::InvLogA);
        let r = EpsRule::parse("0.5, 0.25").unwrap();
        assert_eq!(r.at(1, 3.0), 0.25);
        assert_eq!(r.at(7, 3.0), 0.25);
        assert!((EpsRule::InvLogA.at(0, std::f64::consts::E) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_values_become_flag_text() {
        assert_eq!(flag_text(&serde_json::json!([2, 3, 4])), "2,3,4");
        assert_eq!(flag_text(&serde_json::json!("weibull:k=3")), "weibull:k=3");
        assert_eq!(flag_text(&serde_json::json!(0.5)), "0.5");
    }

    #[test]
    fn json_model_records() {
        let m = model_spec(r#"{"kind": "power", "beta": 3}"#).unwrap();
        assert_eq!(m.beta, Some(3.0));
    }
}
