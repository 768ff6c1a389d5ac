use std::time::Duration;

use anyhow::Result;
use edg_core::analysis::{absorption_study, fit_coarsening, AbsorptionSummary, InitRule};
use edg_core::grid::uniform_grid;
use edg_core::io::write_table_csv;
use edg_core::meanfield::integrate;
use edg_core::{Kernel, MeanFieldState};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{create, provenance, write_report};

/// Fits use grid points with leak ≤ this.
const FIT_LEAK_LIMIT: f64 = 1e-4;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn scaling(cfg: &RunConfig) -> Result<()> {
    let prov = provenance(cfg)?;
    let controls = cfg.ode.controls();
    let mut fit_rows = Vec::new();
    let mut ell_rows = Vec::new();
    let mut fits = Vec::new();
    for (&gamma, &t_end) in cfg.scaling.gammas.iter().zip(&cfg.scaling.t_ends) {
        let kernel = Kernel::product(gamma)?;
        let grid = uniform_grid(0.0, t_end, cfg.scaling.grid_points);
        let run = integrate(&MeanFieldState::poisson(cfg.rho)?, &kernel, t_end, &controls, None, &grid)?;
        let mut times = Vec::new();
        let mut ell = Vec::new();
        for s in &run.snapshots {
            let l = s.coarsening_scale()?;
            ell_rows.push(vec![s.t.to_string(), gamma.to_string(), l.to_string(), s.leak.to_string()]);
            if s.leak <= FIT_LEAK_LIMIT {
                times.push(s.t);
                ell.push(l);
            }
        }
        let blow_up = run.outcome.blow_up_time();
        match fit_coarsening(&times, &ell, gamma) {
            Ok(fit) => {
                fit_rows.push(vec![
                    gamma.to_string(),
                    t_end.to_string(),
                    format!("{:?}", fit.regime),
                    fit.beta_hat.to_string(),
                    opt(fit.beta_expected),
                    fit.r_squared.to_string(),
                    opt(fit.t_gel),
                    fit.window.0.to_string(),
                    fit.window.1.to_string(),
                    fit.points.to_string(),
                    fit.dynamic_range.to_string(),
                    opt(blow_up),
                    "ok".into(),
                ]);
                fits.push(json!({ "gamma": gamma, "fit": fit, "blow_up_time": blow_up, "annotations": run.annotations }));
            }
            Err(err) => {
                let mut row = vec![gamma.to_string(), t_end.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 9));
                row.push(opt(blow_up));
                row.push(err.to_string());
                fit_rows.push(row);
                fits.push(json!({ "gamma": gamma, "error": err.to_string(), "blow_up_time": blow_up, "annotations": run.annotations }));
            }
        }
    }
    write_table_csv(
        create(&cfg.out, "coarsening.csv")?,
        &prov,
        &[
            "gamma", "t_end", "regime", "beta_hat", "beta_expected", "r_squared", "t_gel",
            "window_start", "window_end", "points", "dynamic_range", "blow_up_time", "status",
        ],
        &fit_rows,
    )?;
    write_table_csv(create(&cfg.out, "ell.csv")?, &prov, &["t", "gamma", "ell", "leak"], &ell_rows)?;

    let absorption: Vec<AbsorptionSummary> = absorption_study(
        &cfg.kernel.build()?,
        &cfg.scaling.absorption_sites,
        cfg.rho,
        cfg.scaling.absorption_replicas,
        cfg.seed,
        InitRule::Uniform,
        Duration::from_secs_f64(cfg.scaling.wall_cap_secs),
        cfg.jobs,
    )?;
    let rows: Vec<Vec<String>> = absorption
        .iter()
        .map(|a| {
            vec![
                a.sites.to_string(),
                a.particles.to_string(),
                a.replicas.to_string(),
                a.median.to_string(),
                a.q1.to_string(),
                a.q3.to_string(),
                a.std_error.to_string(),
                a.censored.to_string(),
            ]
        })
        .collect();
    write_table_csv(
        create(&cfg.out, "absorption.csv")?,
        &prov,
        &["L", "N", "replicas", "median", "q1", "q3", "std_error", "censored"],
        &rows,
    )?;
    let nondecreasing = absorption.windows(2).all(|w| w[1].median >= w[0].median);
    write_report(
        &cfg.out,
        "scaling.json",
        &prov,
        &json!({ "coarsening": fits, "absorption": absorption, "medians_nondecreasing": nondecreasing }),
    )?;
    Ok(())
}
