use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use edg_core::io::Provenance;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

pub fn provenance(cfg: &RunConfig) -> Result<Provenance> {
    Ok(Provenance::new(cfg.seed, cfg)?)
}

pub fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Pretty JSON document with the provenance under `header`.
pub fn write_report<T: Serialize>(dir: &Path, name: &str, prov: &Provenance, body: &T) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    if let Some(map) = value.as_object_mut() {
        map.insert("header".into(), serde_json::to_value(prov)?);
    } else {
        value = json!({ "header": prov, "body": value });
    }
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    use std::io::Write;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
