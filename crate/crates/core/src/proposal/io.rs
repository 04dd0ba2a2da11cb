//! Pool files: `<name>.jsonl` with one line per pool and `<name>.f2gd`
//! holding the evidence tokens, one record per unit.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvidencePool, EvidenceUnit};
use crate::error::{Error, Result};
use crate::numerics::TensorFile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub span_id: usize,
    pub start: f64,
    pub end: f64,
    pub objectness: f64,
    pub span: (f64, f64),
    pub padded: bool,
    /// Record name in the token file.
    pub tokens: String,
    /// Byte offset of that record.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub video_id: String,
    pub duration: f64,
    pub fps: f64,
    pub k: usize,
    pub units: Vec<UnitRecord>,
}

pub fn write_pools(dir: &Path, name: &str, pools: &[EvidencePool]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tokens = TensorFile::new();
    for pool in pools {
        for u in &pool.units {
            tokens.push(format!("{}/{}", pool.video_id, u.span_id), u.tokens.clone());
        }
    }
    let offsets = tokens.write(&dir.join(format!("{name}.f2gd")))?;
    let mut w = BufWriter::new(std::fs::File::create(dir.join(format!("{name}.jsonl")))?);
    let mut next = 0;
    for pool in pools {
        let units = pool
            .units
            .iter()
            .map(|u| {
                let rec = UnitRecord {
                    span_id: u.span_id,
                    start: u.interval.0,
                    end: u.interval.1,
                    objectness: u.objectness,
                    span: u.span,
                    padded: u.padded,
                    tokens: format!("{}/{}", pool.video_id, u.span_id),
                    offset: offsets[next],
                };
                next += 1;
                rec
            })
            .collect();
        let rec = PoolRecord {
            video_id: pool.video_id.clone(),
            duration: pool.duration_s,
            fps: pool.fps,
            k: pool.units.len(),
            units,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pools(dir: &Path, name: &str) -> Result<Vec<EvidencePool>> {
    let jsonl = dir.join(format!("{name}.jsonl"));
    let token_path = dir.join(format!("{name}.f2gd"));
    for p in [&jsonl, &token_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.clone()));
        }
    }
    let mut tokens = TensorFile::read(&token_path)?;
    let mut pools = Vec::new();
    for (i, line) in BufReader::new(std::fs::File::open(&jsonl)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: jsonl.display().to_string(),
            line: i + 1,
            msg,
        };
        let rec: PoolRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let units = rec
            .units
            .into_iter()
            .map(|u| {
                let t = tokens
                    .take(&u.tokens)
                    .ok_or_else(|| parse_err(format!("token record {} missing", u.tokens)))?;
                Ok(EvidenceUnit {
                    span_id: u.span_id,
                    interval: (u.start, u.end),
                    tokens: t,
                    objectness: u.objectness,
                    span: u.span,
                    padded: u.padded,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = EvidencePool {
            video_id: rec.video_id,
            duration_s: rec.duration,
            fps: rec.fps,
            units,
        };
        pool.validate()?;
        pools.push(pool);
    }
    Ok(pools)
}
