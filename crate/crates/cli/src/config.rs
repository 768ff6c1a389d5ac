//! Run configuration: a TOML file (`key = value` lines under `[section]`
//! headers) or the same structure as JSON, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use edg_core::grid::{parse_grid, validate_grid};
use edg_core::kernel::GrowthBounds;
use edg_core::meanfield::{OdeControls, TruncationPolicy};
use edg_core::tagged::Placement;
use edg_core::Kernel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub kernel: KernelSection,
    pub system: SystemSection,
    pub ode: OdeSection,
    pub tagged: TaggedSection,
    pub scaling: ScalingSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub gamma: Option<f64>,
    pub table: Option<PathBuf>,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "L")]
    pub sites: Option<usize>,
    #[serde(rename = "N")]
    pub particles: Option<usize>,
    pub rho: Option<f64>,
    pub t_end: Option<f64>,
    pub grid: Option<String>,
    pub replicas: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSection {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    /// `"adaptive:CAP"` or `"fixed:K"`.
    pub truncation: Option<String>,
    pub moment_ceiling: Option<f64>,
    pub init: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggedSection {
    /// `"uniform"`, `"size:K"` or `"max"`.
    pub placement: Option<String>,
    pub limit_replicas: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    pub gammas: Option<Vec<f64>>,
    pub t_ends: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    #[serde(rename = "absorption_L")]
    pub absorption_sites: Option<Vec<usize>>,
    pub absorption_replicas: Option<usize>,
    pub wall_cap_secs: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Option<Vec<String>>,
    pub lln_tol: Option<f64>,
    pub tagged_tol: Option<f64>,
    pub tagged_replicas: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Flag overrides; `None` leaves the file value in place.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub gamma: Option<f64>,
    pub sites: Option<usize>,
    pub rho: Option<f64>,
    pub t_end: Option<f64>,
    pub replicas: Option<usize>,
    pub grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    Product { gamma: f64 },
    Table { path: PathBuf, mu: f64, nu: f64, c: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        Ok(match self {
            KernelSpec::Product { gamma } => Kernel::product(*gamma)?,
            KernelSpec::Table { path, mu, nu, c } => {
                Kernel::from_table_csv(path, GrowthBounds::new(*mu, *nu, *c)?)?
            }
        })
    }

    /// Exponent used for the `m_gamma` column.
    pub fn gamma(&self) -> f64 {
        match self {
            KernelSpec::Product { gamma } => *gamma,
            KernelSpec::Table { mu, .. } => *mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub truncation: TruncationPolicy,
    pub moment_ceiling: f64,
    pub init: Option<PathBuf>,
}

impl OdeSettings {
    pub fn controls(&self) -> OdeControls {
        OdeControls {
            rtol: self.rtol,
            atol: self.atol,
            truncation: self.truncation,
            moment_ceiling: self.moment_ceiling,
            ..OdeControls::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedSettings {
    pub placement: String,
    pub limit_replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSettings {
    pub gammas: Vec<f64>,
    pub t_ends: Vec<f64>,
    pub grid_points: usize,
    #[serde(rename = "absorption_L")]
    pub absorption_sites: Vec<usize>,
    pub absorption_replicas: usize,
    pub wall_cap_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySettings {
    pub checks: Vec<String>,
    pub lln_tol: f64,
    pub tagged_tol: f64,
    pub tagged_replicas: usize,
}

pub const ALL_CHECKS: [&str; 8] = [
    "kernel",
    "conservation",
    "oracle",
    "lln",
    "weak_form",
    "moments",
    "size_biased",
    "tagged",
];

/// Fully resolved configuration. Everything except the output directory
/// and the thread count is embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: KernelSpec,
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    pub rho: f64,
    pub t_end: f64,
    pub grid_spec: String,
    #[serde(skip)]
    pub grid: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub ode: OdeSettings,
    pub tagged: TaggedSettings,
    pub scaling: ScalingSettings,
    pub verify: VerifySettings,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text).map_err(|e| {
            anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column())
        })
    } else {
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            match line {
                Some(l) => anyhow::anyhow!("{}:{l}: {}", path.display(), e.message()),
                None => anyhow::anyhow!("{}: {}", path.display(), e.message()),
            }
        })
    }
}

fn parse_truncation(spec: &str) -> Result<TruncationPolicy> {
    let (kind, value) = spec
        .split_once(':')
        .with_context(|| format!("ode.truncation `{spec}`: expected adaptive:CAP or fixed:K"))?;
    let k: usize = value
        .trim()
        .parse()
        .with_context(|| format!("ode.truncation `{spec}`: bad size"))?;
    match kind.trim() {
        "adaptive" => Ok(TruncationPolicy::Adaptive { cap: k }),
        "fixed" => Ok(TruncationPolicy::Fixed(k)),
        other => bail!("ode.truncation: unknown policy `{other}`"),
    }
}

pub fn parse_placement(spec: &str) -> Result<Placement> {
    match spec.trim() {
        "uniform" => Ok(Placement::UniformSite),
        "max" => Ok(Placement::MaxOccupied),
        s => match s.strip_prefix("size:") {
            Some(k) => Ok(Placement::GivenSize(
                k.trim()
                    .parse()
                    .with_context(|| format!("tagged.placement `{spec}`: bad size"))?,
            )),
            None => bail!("tagged.placement: expected uniform, size:K or max, got `{spec}`"),
        },
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name}: must be positive and finite, got {v}");
    }
    Ok(v)
}

/// Particle count rule: `N = round(ρL)` when only `ρ` is given; `ρ = N/L`
/// when only `N` is given; `ρ = 1` when neither is.
pub fn resolve(file: FileConfig, o: &Overrides) -> Result<RunConfig> {
    let kernel = match (o.gamma, file.kernel.table) {
        (Some(gamma), _) => KernelSpec::Product { gamma },
        (None, Some(path)) => {
            if file.kernel.gamma.is_some() {
                bail!("kernel: give either gamma or table, not both");
            }
            KernelSpec::Table {
                path,
                mu: file.kernel.mu.context("kernel.mu: required with a table")?,
                nu: file.kernel.nu.context("kernel.nu: required with a table")?,
                c: file.kernel.c.context("kernel.c: required with a table")?,
            }
        }
        (None, None) => KernelSpec::Product {
            gamma: file.kernel.gamma.unwrap_or(1.0),
        },
    };
    if let KernelSpec::Product { gamma } = kernel {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            bail!("kernel.gamma: must be nonnegative, got {gamma}");
        }
    }
    let s = file.system;
    let sites = o.sites.or(s.sites).unwrap_or(1000);
    if sites == 0 {
        bail!("system.L: must be at least 1");
    }
    let (rho, particles) = match (o.rho, s.rho, s.particles) {
        (Some(_), _, _) | (None, Some(_), None) => {
            let rho = positive("system.rho", o.rho.or(s.rho).unwrap_or(1.0))?;
            (rho, (rho * sites as f64).round() as usize)
        }
        (None, None, Some(n)) => (n as f64 / sites as f64, n),
        (None, Some(_), Some(_)) => bail!("system: give exactly one of N and rho"),
        (None, None, None) => (1.0, sites),
    };
    let t_end = o.t_end.or(s.t_end).unwrap_or(1.0);
    if !(t_end >= 0.0 && t_end.is_finite()) {
        bail!("system.t_end: must be nonnegative and finite, got {t_end}");
    }
    let grid_spec = o
        .grid
        .clone()
        .or(s.grid)
        .unwrap_or_else(|| format!("0:{t_end}:{}", t_end / 20.0));
    let grid = parse_grid(&grid_spec).with_context(|| "system.grid".to_string())?;
    validate_grid(&grid, 0.0, t_end).with_context(|| "system.grid".to_string())?;
    let replicas = o.replicas.or(s.replicas).unwrap_or(1);
    if replicas == 0 {
        bail!("system.replicas: must be at least 1");
    }
    let defaults = OdeControls::default();
    let ode = OdeSettings {
        rtol: positive("ode.rtol", file.ode.rtol.unwrap_or(defaults.rtol))?,
        atol: positive("ode.atol", file.ode.atol.unwrap_or(defaults.atol))?,
        truncation: match file.ode.truncation {
            Some(spec) => parse_truncation(&spec)?,
            None => defaults.truncation,
        },
        moment_ceiling: positive(
            "ode.moment_ceiling",
            file.ode.moment_ceiling.unwrap_or(defaults.moment_ceiling),
        )?,
        init: file.ode.init,
    };
    let placement = file.tagged.placement.unwrap_or_else(|| "uniform".into());
    parse_placement(&placement)?;
    let tagged = TaggedSettings {
        placement,
        limit_replicas: file.tagged.limit_replicas.unwrap_or(replicas),
    };
    let gammas = file.scaling.gammas.unwrap_or_else(|| vec![kernel.gamma()]);
    let t_ends = file.scaling.t_ends.unwrap_or_else(|| vec![t_end; gammas.len()]);
    if t_ends.len() != gammas.len() {
        bail!("scaling.t_ends: need one entry per gamma");
    }
    let scaling = ScalingSettings {
        gammas,
        t_ends,
        grid_points: file.scaling.grid_points.unwrap_or(400).max(2),
        absorption_sites: file.scaling.absorption_sites.unwrap_or_else(|| vec![20, 40, 80]),
        absorption_replicas: file.scaling.absorption_replicas.unwrap_or(200).max(1),
        wall_cap_secs: positive(
            "scaling.wall_cap_secs",
            file.scaling.wall_cap_secs.unwrap_or(60.0),
        )?,
    };
    let checks = file
        .verify
        .checks
        .unwrap_or_else(|| ALL_CHECKS.iter().map(|s| s.to_string()).collect());
    if let Some(bad) = checks.iter().find(|c| !ALL_CHECKS.contains(&c.as_str())) {
        bail!("verify.checks: unknown check `{bad}`");
    }
    let verify = VerifySettings {
        checks,
        lln_tol: file.verify.lln_tol.unwrap_or(0.02),
        tagged_tol: file.verify.tagged_tol.unwrap_or(0.05),
        tagged_replicas: file.verify.tagged_replicas.unwrap_or(1000).max(1),
    };
    Ok(RunConfig {
        kernel,
        sites,
        particles,
        rho,
        t_end,
        grid_spec,
        grid,
        replicas,
        seed: o.seed.or(s.seed).unwrap_or(0),
        ode,
        tagged,
        scaling,
        verify,
        out: o
            .out
            .clone()
            .or(file.output.dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        jobs: o.jobs.or(s.jobs),
    })
}
