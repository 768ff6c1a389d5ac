use std::collections::BTreeMap;

use anyhow::Result;
use edg_core::analysis::{
    limit_reference, lln_distance, moment_growth_check, run_ensemble, summarize,
    tagged_direct_samples, weak_form_residual, EnsembleSpec, EnsembleSummary,
};
use edg_core::kernel::verify_kernel;
use edg_core::meanfield::integrate;
use edg_core::particle::coupled_divergence;
use edg_core::rng::{rng_from_seed, split_seed};
use edg_core::tagged::tagged_law_tv;
use edg_core::{CountState, Kernel, MeanFieldState};
use serde::Serialize;
use serde_json::json;

use super::initial_profile;
use crate::config::RunConfig;
use crate::output::{provenance, write_report};

const SIMULATION_EVENTS: u64 = 1_000_000;
const ORACLE_EVENTS: u64 = 2_000;

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    passed: bool,
    metrics: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Check {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: true,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: f64) -> &mut Self {
        self.metrics.insert(key.into(), value);
        self
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.notes.push(what.into());
        }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        let mut c = Self::new(name);
        c.require(false, err.to_string());
        c
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    kernel: Kernel,
    ensemble: Option<EnsembleSummary>,
}

impl Context<'_> {
    fn ensemble(&mut self) -> Result<&EnsembleSummary> {
        if self.ensemble.is_none() {
            let records = run_ensemble(&EnsembleSpec {
                kernel: self.kernel.clone(),
                sites: self.cfg.sites,
                particles: self.cfg.particles,
                t_end: self.cfg.t_end,
                grid: self.cfg.grid.clone(),
                replicas: self.cfg.replicas,
                master_seed: self.cfg.seed,
                jobs: self.cfg.jobs,
            })?;
            self.ensemble = Some(summarize(&records)?);
        }
        Ok(self.ensemble.as_ref().expect("ensemble was just built"))
    }
}

fn kernel_check(ctx: &mut Context) -> Result<Check> {
    let report = verify_kernel(&ctx.kernel, 64)?;
    let mut c = Check::new("kernel");
    c.metric("worst_bound_ratio", report.worst_ratio)
        .metric("checked_up_to", report.checked_up_to as f64);
    c.require(report.symmetry_ok, "kernel is not symmetric");
    c.require(report.positivity_ok, "kernel is not positive off the zero row");
    c.require(report.bound_ok, "declared growth bound is violated");
    if !ctx.kernel.bounds().is_admissible() {
        c.notes.push("growth metadata is outside the admissible range".into());
    }
    Ok(c)
}

fn conservation_check(ctx: &mut Context) -> Result<Check> {
    let cfg = ctx.cfg;
    let mut c = Check::new("conservation");
    let f0 = initial_profile(cfg)?;
    let run = integrate(&f0, &ctx.kernel, cfg.t_end, &cfg.ode.controls(), None, &cfg.grid)?;
    let mut norm_err: f64 = 0.0;
    let mut mass_excess: f64 = 0.0;
    let mut leak: f64 = 0.0;
    for s in &run.snapshots {
        norm_err = norm_err.max((s.total() - 1.0).abs());
        mass_excess = mass_excess.max((s.mass() - f0.rho).abs() - s.leak);
        leak = leak.max(s.leak);
    }
    c.metric("ode_normalization_error", norm_err)
        .metric("ode_mass_error_beyond_leak", mass_excess)
        .metric("ode_leak", leak);
    c.require(norm_err <= 1e-8, "ODE normalization drifts beyond 1e-8");
    c.require(mass_excess <= 1e-6, "ODE mass drifts beyond 1e-6 + leak");
    c.require(leak <= 1e-4, "ODE leak exceeds 1e-4");
    c.notes.extend(run.annotations.iter().cloned());

    let mut state = CountState::init_iid(ctx.kernel.clone(), cfg.sites, cfg.particles, split_seed(cfg.seed, 0))?;
    let mut rng = rng_from_seed(split_seed(cfg.seed, 1));
    while state.events() < SIMULATION_EVENTS && !state.is_absorbed() {
        state.step(&mut rng)?;
    }
    c.metric("simulation_events", state.events() as f64)
        .metric("simulation_mass", state.mass() as f64);
    c.require(state.mass() == cfg.particles, "simulation lost or gained particles");
    Ok(c)
}

fn oracle_check(ctx: &mut Context) -> Result<Check> {
    let mut c = Check::new("oracle");
    for sites in [3usize, 10, 50] {
        let diverged = coupled_divergence(ctx.kernel.clone(), sites, sites, ctx.cfg.seed, ORACLE_EVENTS)?;
        c.metric(&format!("divergence_event_L{sites}"), diverged.map_or(-1.0, |e| e as f64));
        c.require(diverged.is_none(), format!("engines diverge at L = {sites}"));
    }
    Ok(c)
}

fn lln_check(ctx: &mut Context) -> Result<Check> {
    let tol = ctx.cfg.verify.lln_tol;
    let kernel = ctx.kernel.clone();
    let controls = ctx.cfg.ode.controls();
    let (t_end, grid) = (ctx.cfg.t_end, ctx.cfg.grid.clone());
    let ens = ctx.ensemble()?;
    let f0 = MeanFieldState::new(ens.mean_f[0].clone(), ens.times[0])?;
    let run = integrate(&f0, &kernel, t_end, &controls, None, &grid)?;
    let gaps = lln_distance(ens, &run.snapshots)?;
    let worst = gaps.iter().map(|g| g.l1).fold(0.0, f64::max);
    let mut c = Check::new("lln");
    c.metric("max_l1_gap", worst)
        .metric("max_sup_gap", gaps.iter().map(|g| g.sup).fold(0.0, f64::max));
    c.require(worst <= tol, format!("ℓ¹ gap exceeds {tol}"));
    Ok(c)
}

fn weak_form_check(ctx: &mut Context) -> Result<Check> {
    let kernel = ctx.kernel.clone();
    let ens = ctx.ensemble()?;
    let last = ens.times.len() - 1;
    let ones = weak_form_residual(ens, &kernel, |_| 1.0, last)?;
    let identity = weak_form_residual(ens, &kernel, |k| k as f64, last)?;
    let empty = weak_form_residual(ens, &kernel, |k| f64::from(k == 0), last)?;
    let mut c = Check::new("weak_form");
    c.metric("t", ens.times[last])
        .metric("residual_one", ones)
        .metric("residual_identity", identity)
        .metric("residual_empty_indicator", empty);
    c.require(ones <= 1e-9, "h ≡ 1 residual is not zero");
    c.require(identity <= 1e-9, "h(k) = k residual is not zero");
    c.require(empty <= 0.01, "h = 1{k=0} residual exceeds 0.01");
    Ok(c)
}

fn moments_check(ctx: &mut Context) -> Result<Check> {
    let gamma = ctx.kernel.separable_gamma();
    let ens = ctx.ensemble()?;
    let mut c = Check::new("moments");
    for n in [1u32, 2, 3] {
        let series: Vec<(f64, f64)> = (0..ens.times.len())
            .map(|i| (ens.times[i], ens.moment(i, f64::from(n))))
            .collect();
        let report = moment_growth_check(&series, f64::from(n), gamma);
        c.metric(&format!("rate_m{n}"), report.fitted_rate);
        if let Some(r2) = report.polynomial_r_squared {
            c.metric(&format!("polynomial_r2_m{n}"), r2);
        }
        c.require(report.bounded, format!("m_{n} is not bounded on the grid"));
        if n == 1 {
            let drift = report.ratios.iter().map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max);
            c.metric("mass_ratio_drift", drift);
            c.require(drift <= 1e-12, "first moment is not conserved");
        }
    }
    Ok(c)
}

fn size_biased_check(ctx: &mut Context) -> Result<Check> {
    let cfg = ctx.cfg;
    let f0 = initial_profile(cfg)?;
    let p0 = f0.size_biased();
    let run = integrate(&f0, &ctx.kernel, cfg.t_end, &cfg.ode.controls(), Some(&p0), &cfg.grid)?;
    let mut worst: f64 = 0.0;
    for (f, p) in run.snapshots.iter().zip(&run.size_biased) {
        for (k, pk) in p.p.iter().enumerate() {
            worst = worst.max((pk - k as f64 * f.get(k) / f0.rho).abs());
        }
    }
    let mut c = Check::new("size_biased");
    c.metric("max_gap", worst);
    c.require(worst <= 1e-6, "size-biased solution departs from k f_k / ρ");
    Ok(c)
}

fn tagged_check(ctx: &mut Context) -> Result<Check> {
    let cfg = ctx.cfg;
    let samples = tagged_direct_samples(
        &ctx.kernel,
        cfg.sites,
        cfg.rho,
        cfg.t_end,
        cfg.verify.tagged_replicas,
        cfg.seed,
        cfg.jobs,
    )?;
    let p = limit_reference(&ctx.kernel, cfg.rho, cfg.t_end, &cfg.ode.controls())?;
    let tv = tagged_law_tv(&samples, &p);
    let mut c = Check::new("tagged");
    c.metric("tv", tv).metric("replicas", samples.len() as f64);
    c.require(tv <= cfg.verify.tagged_tol, format!("TV exceeds {}", cfg.verify.tagged_tol));
    Ok(c)
}

/// Runs the configured checks, prints one PASS/FAIL line each, writes
/// `verify.json` and returns whether all passed.
pub fn verify(cfg: &RunConfig) -> Result<bool> {
    let mut ctx = Context {
        cfg,
        kernel: cfg.kernel.build()?,
        ensemble: None,
    };
    let mut checks = Vec::new();
    for name in &cfg.verify.checks {
        let result = match name.as_str() {
            "kernel" => kernel_check(&mut ctx),
            "conservation" => conservation_check(&mut ctx),
            "oracle" => oracle_check(&mut ctx),
            "lln" => lln_check(&mut ctx),
            "weak_form" => weak_form_check(&mut ctx),
            "moments" => moments_check(&mut ctx),
            "size_biased" => size_biased_check(&mut ctx),
            "tagged" => tagged_check(&mut ctx),
            other => Ok(Check::failed(other, "unknown check")),
        };
        let check = result.unwrap_or_else(|e| Check::failed(name, format!("{e:#}")));
        println!(
            "{} {}{}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            if check.notes.is_empty() { String::new() } else { format!(": {}", check.notes.join("; ")) }
        );
        checks.push(check);
    }
    let passed = checks.iter().all(|c| c.passed);
    write_report(
        &cfg.out,
        "verify.json",
        &provenance(cfg)?,
        &json!({ "passed": passed, "checks": checks }),
    )?;
    Ok(passed)
}
