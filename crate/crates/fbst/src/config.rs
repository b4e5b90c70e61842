//! Run configuration: a flat TOML document with dotted keys, e.g.
//!
//! ```toml
//! data = "droplet.csv"
//! alpha = 0.05
//! prior.noise_var = 0.01
//! pragmatic.epsilon = "stokes"
//! pragmatic.measure = "dp:1:0:7"
//! ```
//!
//! Unknown keys are rejected. Values left out fall back to the preset of
//! the command being run, and command-line flags override both.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fbst_core::{GpPrior, Kernel, KernelKind, LinearBasis, MeanFn};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::stokes::StokesParams;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub prior: PriorOverrides,
    pub hypotheses: Option<Vec<String>>,
    #[serde(default)]
    pub pragmatic: PragmaticOverrides,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub draws: DrawsOverrides,
    #[serde(default)]
    pub stokes: StokesOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    pub mean: Option<f64>,
    pub kernel: Option<KernelName>,
    pub length_scale: Option<f64>,
    pub amplitude: Option<f64>,
    pub noise_var: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PragmaticOverrides {
    pub epsilon: Option<EpsilonSpec>,
    pub measure: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawsOverrides {
    pub count: Option<usize>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesOverrides {
    pub delta: Option<f64>,
    pub eta: Option<f64>,
    pub ks: Option<f64>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Exponential,
    SquaredExponential,
}

/// ε given directly or derived from the velocity column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Value(f64),
    Stokes,
}

impl FromStr for EpsilonSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("stokes") {
            return Ok(EpsilonSpec::Stokes);
        }
        s.parse::<f64>()
            .map(EpsilonSpec::Value)
            .map_err(|_| CliError::Config(format!("epsilon must be a number or 'stokes', got '{s}'")))
    }
}

impl fmt::Display for EpsilonSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonSpec::Value(v) => write!(f, "{v}"),
            EpsilonSpec::Stokes => f.write_str("stokes"),
        }
    }
}

impl<'de> Deserialize<'de> for EpsilonSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(EpsilonSpec::Value(v)),
            Raw::Int(v) => Ok(EpsilonSpec::Value(v as f64)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for EpsilonSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpsilonSpec::Value(v) => s.serialize_f64(*v),
            EpsilonSpec::Stokes => s.serialize_str("stokes"),
        }
    }
}

/// Covariate measure used by the infinite-domain pragmatic test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasureSpec {
    /// Uniform over the unique design rows.
    Uniform,
    /// Dirichlet-process predictive with a continuous `U(lo, hi)` base.
    Dp { tau: f64, lo: f64, hi: f64 },
}

impl FromStr for MeasureSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("measure must be 'uniform' or 'dp:TAU:LO:HI', got '{s}'"));
        if s == "uniform" {
            return Ok(MeasureSpec::Uniform);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 || parts[0] != "dp" {
            return Err(bad());
        }
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let (tau, lo, hi) = (num(parts[1])?, num(parts[2])?, num(parts[3])?);
        if !(tau > 0.0 && tau.is_finite()) || !(lo < hi) {
            return Err(bad());
        }
        Ok(MeasureSpec::Dp { tau, lo, hi })
    }
}

impl fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureSpec::Uniform => f.write_str("uniform"),
            MeasureSpec::Dp { tau, lo, hi } => write!(f, "dp:{tau}:{lo}:{hi}"),
        }
    }
}

/// Which command's defaults apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Droplet,
    Custom,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub epsilon: Option<EpsilonSpec>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub measure: Option<MeasureSpec>,
}

/// Fully resolved settings; this is what the manifest echoes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub preset: String,
    pub data: String,
    pub alpha: f64,
    pub seed: u64,
    /// Where reports go; not part of the echo since it does not affect results.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub hypotheses: Vec<String>,
    /// `None` means the finite domain is the set of unique design rows.
    pub domain: Option<DomainSpec>,
    pub prior: PriorSettings,
    pub pragmatic: PragmaticSettings,
    pub draws: DrawSettings,
    pub stokes: StokesSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorSettings {
    pub mean: f64,
    pub kernel: KernelName,
    pub length_scale: f64,
    pub amplitude: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PragmaticSettings {
    pub epsilon: EpsilonSpec,
    pub measure: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DrawSettings {
    pub count: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StokesSettings {
    #[serde(flatten)]
    pub params: StokesParams,
    /// `None` means the size of the finite domain.
    pub n: Option<usize>,
}

impl ResolvedConfig {
    pub fn gp_prior(&self) -> Result<GpPrior> {
        let p = &self.prior;
        let kind = match p.kernel {
            KernelName::Exponential => KernelKind::Exponential,
            KernelName::SquaredExponential => KernelKind::SquaredExponential,
        };
        let kernel = Kernel::new(kind, p.length_scale, p.amplitude)?;
        Ok(GpPrior::new(kernel, p.noise_var)?.with_mean(MeanFn::Constant(p.mean)))
    }

    pub fn measure(&self) -> MeasureSpec {
        self.pragmatic.measure.parse().expect("validated at resolution")
    }

    pub fn bases(&self, dim: usize) -> Result<Vec<LinearBasis>> {
        self.hypotheses.iter().map(|h| basis_by_name(h, dim)).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved configuration serializes")
    }
}

/// `intercept`, `intercept+slope` (first covariate) or `affine` (all covariates).
pub fn basis_by_name(name: &str, dim: usize) -> Result<LinearBasis> {
    match name {
        "intercept" => Ok(LinearBasis::intercept()),
        "intercept+slope" => Ok(LinearBasis::intercept_slope()),
        "affine" => Ok(LinearBasis::affine(dim)),
        other => Err(CliError::Config(format!(
            "unknown hypothesis '{other}' (expected intercept, intercept+slope or affine)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve(&self, preset: Preset, ov: &Overrides) -> Result<ResolvedConfig> {
        let droplet = preset == Preset::Droplet;
        let data = ov.data.clone().or_else(|| self.data.clone());
        let data = match (data, droplet) {
            (Some(p), _) => p.display().to_string(),
            (None, true) => "bundled:droplet.csv".to_string(),
            (None, false) => return Err(CliError::Config("no data file given (set 'data' or pass --data)".into())),
        };
        let alpha = ov.alpha.or(self.alpha).unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let domain = self.domain.or(droplet.then_some(DomainSpec {
            start: 0.0,
            stop: 7.0,
            step: 0.5,
        }));
        if let Some(d) = domain {
            if !(d.step > 0.0) || !(d.stop >= d.start) || !d.start.is_finite() || !d.stop.is_finite() {
                return Err(CliError::Config(format!("bad domain {}:{}:{}", d.start, d.stop, d.step)));
            }
        }

        let p = &self.prior;
        let prior = PriorSettings {
            mean: p.mean.unwrap_or(if droplet { 6.0 } else { 0.0 }),
            kernel: p.kernel.unwrap_or(KernelName::Exponential),
            length_scale: p.length_scale.unwrap_or(2.0),
            amplitude: p.amplitude.unwrap_or(1.0),
            noise_var: p.noise_var.unwrap_or(0.01),
        };

        let epsilon = ov
            .epsilon
            .or(self.pragmatic.epsilon)
            .unwrap_or(if droplet { EpsilonSpec::Stokes } else { EpsilonSpec::Value(0.1) });
        if let EpsilonSpec::Value(e) = epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(CliError::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        let measure = match (ov.measure, &self.pragmatic.measure) {
            (Some(m), _) => m,
            (None, Some(s)) => s.parse()?,
            (None, None) if droplet => MeasureSpec::Dp {
                tau: 1.0,
                lo: 0.0,
                hi: 7.0,
            },
            (None, None) => MeasureSpec::Uniform,
        };

        let hypotheses = self
            .hypotheses
            .clone()
            .unwrap_or_else(|| vec!["intercept+slope".into(), "intercept".into()]);
        if hypotheses.is_empty() {
            return Err(CliError::Config("at least one hypothesis is required".into()));
        }
        for h in &hypotheses {
            basis_by_name(h, 1)?;
        }

        let draws = DrawSettings {
            count: self.draws.count.unwrap_or(20),
            grid_points: self.draws.grid_points.unwrap_or(141),
        };
        if draws.count == 0 || draws.grid_points < 2 {
            return Err(CliError::Config("draws.count must be ≥ 1 and draws.grid_points ≥ 2".into()));
        }
        let d = StokesParams::default();
        let s = &self.stokes;
        let stokes = StokesSettings {
            params: StokesParams {
                delta: s.delta.unwrap_or(d.delta),
                eta: s.eta.unwrap_or(d.eta),
                ks: s.ks.unwrap_or(d.ks),
            },
            n: s.n,
        };
        if stokes.n == Some(0) {
            return Err(CliError::Config("stokes.n must be positive".into()));
        }

        Ok(ResolvedConfig {
            preset: if droplet { "droplet" } else { "custom" }.into(),
            data,
            alpha,
            seed: ov.seed.or(self.seed).unwrap_or(0),
            output_dir: ov
                .output_dir
                .clone()
                .or_else(|| self.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("fbst-out")),
            hypotheses,
            domain,
            prior,
            pragmatic: PragmaticSettings {
                epsilon,
                measure: measure.to_string(),
            },
            draws,
            stokes,
        })
    }
}
