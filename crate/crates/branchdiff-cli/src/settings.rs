//! Flag/config merging and model construction. Flags win over the config
//! file; the config section is the subcommand name, with the unnamed
//! section as fallback.

use std::fmt;
use std::path::Path;

use branchdiff::parse::{parse_grid, parse_matrix, parse_vector, Config, Grid};
use branchdiff::rates::{RateMatrix, ThetaModel, ThetaP};
use branchdiff::Error;
use nalgebra::DMatrix;

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or model parameters.
    Config(String),
    /// Solver or quadrature failure, or an I/O error on output.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::Singular(_) => Self::Numeric(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Numeric(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

/// Lookup of one subcommand's settings.
pub struct Settings {
    config: Config,
    section: &'static str,
}

impl Settings {
    pub fn load(path: Option<&Path>, section: &'static str) -> CliResult<Self> {
        let config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        Ok(Self { config, section })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.config.get(self.section, key)
    }

    pub fn f64(&self, flag: Option<f64>, key: &str) -> CliResult<Option<f64>> {
        match flag {
            Some(v) if v.is_finite() => Ok(Some(v)),
            Some(v) => config_err(format!("--{key} must be finite, got {v}")),
            None => Ok(self.config.get_f64(self.section, key)?),
        }
    }

    pub fn f64_or(&self, flag: Option<f64>, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64(flag, key)?.unwrap_or(default))
    }

    pub fn f64_req(&self, flag: Option<f64>, key: &str) -> CliResult<f64> {
        self.f64(flag, key)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing --{key} (flag or [{}] {key})",
                self.section
            ))
        })
    }

    pub fn u64_or(&self, flag: Option<u64>, key: &str, default: u64) -> CliResult<u64> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.config.get_u64(self.section, key)?.unwrap_or(default)),
        }
    }

    pub fn u64_opt(&self, flag: Option<u64>, key: &str) -> CliResult<Option<u64>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.config.get_u64(self.section, key)?),
        }
    }

    pub fn string(&self, flag: Option<&str>, key: &str) -> Option<String> {
        flag.map(str::to_string)
            .or_else(|| self.raw(key).map(str::to_string))
    }

    pub fn grid(&self, flag: Option<&str>, key: &str, default: &str) -> CliResult<Grid> {
        let s = self
            .string(flag, key)
            .unwrap_or_else(|| default.to_string());
        Ok(parse_grid(&s)?)
    }

    pub fn vector(&self, flag: Option<&str>, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.string(flag, key)
            .map(|s| parse_vector(&s).map_err(CliError::from))
            .transpose()
    }

    pub fn matrix(&self, flag: Option<&str>, key: &str) -> CliResult<Option<DMatrix<f64>>> {
        self.string(flag, key)
            .map(|s| parse_matrix(&s).map_err(CliError::from))
            .transpose()
    }

    pub fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => config_err(format!("{key}: expected a boolean, got '{v}'")),
        }
    }
}

/// Rate-model flags shared by the analytic commands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelArgs {
    /// Scaled mutation rate θ.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Stationary vector π for a parent-independent model, e.g. 0.75,0.25.
    #[arg(long)]
    pub pi: Option<String>,
    /// Mutation matrix P, rows separated by ';' (needs --theta).
    #[arg(long)]
    pub p: Option<String>,
    /// Full generator γ, rows separated by ';'.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
}

/// The rate model in both parameterisations.
pub struct Model {
    pub rates: RateMatrix,
    pub theta: ThetaModel,
    pub source: &'static str,
}

impl ModelArgs {
    /// γ, then (θ, P), then (θ, π); `gamma` with `theta` uses that θ
    /// instead of the canonical one.
    pub fn resolve(&self, s: &Settings) -> CliResult<Model> {
        let theta = s.f64(self.theta, "theta")?;
        if let Some(g) = s.matrix(self.gamma.as_deref(), "gamma")? {
            let rates = RateMatrix::new(g)?;
            let tp = match theta {
                Some(t) => rates.to_theta_p(t)?,
                None => rates.canonical_theta_p()?,
            };
            let theta = ThetaModel::new(tp)?;
            return Ok(Model {
                rates,
                theta,
                source: "gamma",
            });
        }
        let Some(theta) = theta else {
            return config_err("model needs --theta (or --gamma)");
        };
        if let Some(p) = s.matrix(self.p.as_deref(), "p")? {
            let tp = ThetaP::new(theta, p)?;
            let rates = RateMatrix::from_theta_p(theta, &tp.p)?;
            let model = ThetaModel::new(tp)?;
            return Ok(Model {
                rates,
                theta: model,
                source: "theta-p",
            });
        }
        let pi = s
            .vector(self.pi.as_deref(), "pi")?
            .unwrap_or_else(|| vec![0.75, 0.25]);
        let rates = RateMatrix::pim(theta, &pi)?;
        let model = ThetaModel::pim(theta, &pi)?;
        Ok(Model {
            rates,
            theta: model,
            source: "pim",
        })
    }
}
