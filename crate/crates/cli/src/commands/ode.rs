use anyhow::Result;
use edg_core::io::{write_moments_csv, write_profile_csv, write_summary_csv, SummaryRow};
use edg_core::meanfield::{integrate, Outcome};
use log::warn;
use serde_json::json;

use super::initial_profile;
use crate::config::RunConfig;
use crate::output::{create, provenance, write_report};

pub fn ode(cfg: &RunConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let f0 = initial_profile(cfg)?;
    let run = integrate(&f0, &kernel, cfg.t_end, &cfg.ode.controls(), None, &cfg.grid)?;
    let mut prov = provenance(cfg)?;
    prov.notes = run.annotations.clone();
    if let Outcome::BlowUp { flag, t } = run.outcome {
        prov.notes.push(format!("blow-up flag {flag:?} raised at t = {t}"));
    }
    for note in &prov.notes {
        warn!("{note}");
    }
    let profiles: Vec<(f64, Vec<f64>)> = run.snapshots.iter().map(|s| (s.t, s.f.clone())).collect();
    write_profile_csv(create(&cfg.out, "f_k.csv")?, &prov, "f_k", &profiles)?;
    let moments: Vec<(f64, u32, f64)> = run
        .snapshots
        .iter()
        .flat_map(|s| (0..=3u32).map(move |n| (s.t, n, s.moment(f64::from(n)))))
        .collect();
    write_moments_csv(create(&cfg.out, "moments.csv")?, &prov, &moments)?;
    let rows: Vec<SummaryRow> = run
        .snapshots
        .iter()
        .map(|s| SummaryRow::from_profile(s.t, &s.f, cfg.kernel.gamma(), s.leak))
        .collect();
    write_summary_csv(create(&cfg.out, "summary.csv")?, &prov, &rows)?;
    write_report(
        &cfg.out,
        "ode.json",
        &prov,
        &json!({
            "outcome": run.outcome,
            "blow_up_time": run.outcome.blow_up_time(),
            "annotations": run.annotations,
            "stats": run.stats,
            "final_t": run.final_state.t,
            "final_leak": run.final_state.leak,
        }),
    )?;
    Ok(())
}
