//! Output writers and the initial-profile reader.
//!
//! CSV files start with `#` comment lines carrying `schema_version`, the
//! seed and the resolved configuration as JSON, followed by a header row.
//! JSONL files start with a header object carrying the same fields.
//! Floats are written in shortest round-trip form.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::particle::TrajectoryRecord;
use crate::tagged::{TaggedComparison, TaggedPoint};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub seed: u64,
    pub config: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed,
            config: serde_json::to_value(config)?,
            notes: Vec::new(),
        })
    }

    fn write_comments<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# schema_version={}", self.schema_version)?;
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# config={}", serde_json::to_string(&self.config)?)?;
        for note in &self.notes {
            writeln!(w, "# note={note}")?;
        }
        Ok(())
    }

    fn write_header_line<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *w, &json!({ "header": self }))?;
        writeln!(w)?;
        Ok(())
    }
}

fn csv_writer<W: Write>(w: W, prov: &Provenance, columns: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = w;
    prov.write_comments(&mut w)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns)?;
    Ok(out)
}

fn jsonl<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    t: f64,
    counts: &'a BTreeMap<usize, u64>,
    replica: usize,
    seed: u64,
}

/// One header line, one `{"t","counts","replica","seed"}` line per snapshot
/// and a closing `{"absorbed_at"}` line (`null` when not absorbed).
pub fn write_trajectory_jsonl<W: Write>(
    mut w: W,
    prov: &Provenance,
    replica: usize,
    seed: u64,
    record: &TrajectoryRecord,
) -> Result<()> {
    prov.write_header_line(&mut w)?;
    for s in &record.snapshots {
        jsonl(
            &mut w,
            &TrajectoryLine {
                t: s.t,
                counts: &s.counts,
                replica,
                seed,
            },
        )?;
    }
    jsonl(&mut w, &json!({ "absorbed_at": record.absorbed_at, "events": record.events }))?;
    w.flush()?;
    Ok(())
}

/// `t,k,<value>` rows for each nonzero entry of each profile.
pub fn write_profile_csv<W: Write>(
    w: W,
    prov: &Provenance,
    value_column: &str,
    rows: &[(f64, Vec<f64>)],
) -> Result<()> {
    let mut out = csv_writer(w, prov, &["t", "k", value_column])?;
    for (t, profile) in rows {
        for (k, v) in profile.iter().enumerate() {
            if *v != 0.0 {
                out.write_record(&[t.to_string(), k.to_string(), v.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `t,n,m_n` rows.
pub fn write_moments_csv<W: Write>(w: W, prov: &Provenance, rows: &[(f64, u32, f64)]) -> Result<()> {
    let mut out = csv_writer(w, prov, &["t", "n", "m_n"])?;
    for (t, n, m) in rows {
        out.write_record(&[t.to_string(), n.to_string(), m.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m_gamma: f64,
    pub f0: f64,
    pub ell: f64,
    pub leak: f64,
}

impl SummaryRow {
    /// Row for a dense profile; `m_γ` uses `k^γ`.
    pub fn from_profile(t: f64, f: &[f64], gamma: f64, leak: f64) -> Self {
        let moment = |n: f64| -> f64 {
            f.iter()
                .enumerate()
                .skip(1)
                .map(|(k, v)| (k as f64).powf(n) * v)
                .sum()
        };
        let f0 = f.first().copied().unwrap_or(0.0);
        let m1 = moment(1.0);
        Self {
            t,
            m0: f.iter().sum(),
            m1,
            m2: moment(2.0),
            m_gamma: moment(gamma),
            f0,
            ell: m1 / (1.0 - f0),
            leak,
        }
    }
}

/// `t,m0,m1,m2,m_gamma,f0,ell,leak` rows.
pub fn write_summary_csv<W: Write>(w: W, prov: &Provenance, rows: &[SummaryRow]) -> Result<()> {
    let mut out = csv_writer(w, prov, &["t", "m0", "m1", "m2", "m_gamma", "f0", "ell", "leak"])?;
    for r in rows {
        out.write_record(
            [r.t, r.m0, r.m1, r.m2, r.m_gamma, r.f0, r.ell, r.leak].map(|v| v.to_string()),
        )?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TaggedLine {
    replica: usize,
    t: f64,
    #[serde(rename = "W")]
    w: usize,
}

/// A header line then `{"replica","t","W"}` per point for every replica.
pub fn write_tagged_jsonl<W: Write>(
    mut w: W,
    prov: &Provenance,
    replicas: &[(usize, Vec<TaggedPoint>)],
) -> Result<()> {
    prov.write_header_line(&mut w)?;
    for (replica, points) in replicas {
        for p in points {
            jsonl(
                &mut w,
                &TaggedLine {
                    replica: *replica,
                    t: p.t,
                    w: p.w,
                },
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,TV,L,replicas` rows.
pub fn write_comparison_csv<W: Write>(w: W, prov: &Provenance, rows: &[TaggedComparison]) -> Result<()> {
    let mut out = csv_writer(w, prov, &["t", "TV", "L", "replicas"])?;
    for r in rows {
        out.write_record(&[
            r.t.to_string(),
            r.tv.to_string(),
            r.sites.to_string(),
            r.replicas.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Rows of already formatted fields under `columns`.
pub fn write_table_csv<W: Write>(
    w: W,
    prov: &Provenance,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = csv_writer(w, prov, columns)?;
    for r in rows {
        out.write_record(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ProfileRow {
    t: f64,
    k: usize,
    #[serde(alias = "F_k")]
    f_k: f64,
}

/// Reads a `t,k,f_k` CSV (comment lines allowed) as an initial profile.
/// Only rows at the earliest time are used; the profile must be
/// normalized to within `1e-6`.
pub fn read_profile_csv<R: Read>(r: R, source: &str) -> Result<MeanFieldState> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize::<ProfileRow>().enumerate() {
        rows.push(row.map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?);
    }
    let t0 = rows
        .iter()
        .map(|r| r.t)
        .fold(f64::INFINITY, f64::min);
    if rows.is_empty() {
        return Err(Error::InvalidInitial(format!("{source} holds no rows")));
    }
    let width = rows.iter().map(|r| r.k).max().unwrap_or(0) + 1;
    let mut f = vec![0.0; width.max(2)];
    for r in rows.iter().filter(|r| r.t == t0) {
        f[r.k] += r.f_k;
    }
    MeanFieldState::new(f, t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::Snapshot;

    fn prov() -> Provenance {
        Provenance::new(7, &json!({"gamma": 1.0, "L": 10})).unwrap()
    }

    #[test]
    fn profile_csv_round_trips() {
        let f = MeanFieldState::poisson(1.0).unwrap();
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &prov(), "f_k", &[(0.0, f.f.clone()), (1.0, vec![1.0])]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# schema_version=1\n# seed=7\n# config={"));
        let back = read_profile_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(&back.f[..f.f.len()], &f.f[..]);
    }

    #[test]
    fn unnormalized_profile_is_rejected() {
        let text = "t,k,f_k\n0,0,0.5\n0,1,0.4\n";
        assert!(matches!(
            read_profile_csv(text.as_bytes(), "mem"),
            Err(Error::InvalidInitial(_))
        ));
        let bad = "t,k,f_k\n0,zero,0.5\n";
        assert!(matches!(read_profile_csv(bad.as_bytes(), "mem"), Err(Error::Parse { .. })));
    }

    #[test]
    fn trajectory_jsonl_layout() {
        let record = TrajectoryRecord {
            sites: 2,
            particles: 2,
            snapshots: vec![Snapshot {
                t: 0.0,
                counts: [(1usize, 2u64)].into_iter().collect(),
            }],
            events: 0,
            absorbed_at: None,
        };
        let mut buf = Vec::new();
        write_trajectory_jsonl(&mut buf, &prov(), 3, 99, &record).unwrap();
        let lines: Vec<Value> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0]["header"]["schema_version"], 1);
        assert_eq!(lines[1], json!({"t": 0.0, "counts": {"1": 2}, "replica": 3, "seed": 99}));
        assert_eq!(lines[2]["absorbed_at"], Value::Null);
    }

    #[test]
    fn summary_row_of_poisson() {
        let f = MeanFieldState::poisson(1.0).unwrap();
        let r = SummaryRow::from_profile(0.0, &f.f, 1.0, 0.0);
        assert!((r.m1 - 1.0).abs() < 1e-12);
        assert!((r.m2 - 2.0).abs() < 1e-12);
        assert!((r.ell - 1.0 / (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }
}
