use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{AgentSpec, HarnessError};

pub const CSV_HEADER: [&str; 8] = [
    "player1",
    "player2",
    "brick",
    "wins1",
    "wins2",
    "games",
    "mean_time1_s",
    "mean_time2_s",
];

/// One line of a results table. `brick` is a square name, a `|`-joined
/// pool, or `all` for an aggregate.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub player1: String,
    pub player2: String,
    pub brick: String,
    pub wins1: u32,
    pub wins2: u32,
    pub games: u32,
    pub mean_time1_s: f64,
    pub mean_time2_s: f64,
}

/// Writes the table with a header, rows in the given order. Times are
/// written in plain decimal (never exponent form) and parse back exactly.
pub fn write_results<W: Write>(w: W, rows: &[ResultRow]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.player1.clone(),
            r.player2.clone(),
            r.brick.clone(),
            r.wins1.to_string(),
            r.wins2.to_string(),
            r.games.to_string(),
            r.mean_time1_s.to_string(),
            r.mean_time2_s.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut input = csv::Reader::from_reader(r);
    if input.headers()? != CSV_HEADER.as_slice() {
        return Err(HarnessError::BadRow {
            row: 0,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in input.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| HarnessError::BadRow {
            row: i + 1,
            reason: format!("bad {field}"),
        };
        let int = |k: usize| rec[k].parse::<u32>().map_err(|_| bad(CSV_HEADER[k]));
        let real = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(CSV_HEADER[k]));
        let row = ResultRow {
            player1: rec[0].to_string(),
            player2: rec[1].to_string(),
            brick: rec[2].to_string(),
            wins1: int(3)?,
            wins2: int(4)?,
            games: int(5)?,
            mean_time1_s: real(6)?,
            mean_time2_s: real(7)?,
        };
        if row.wins1 + row.wins2 != row.games {
            return Err(HarnessError::BadRow {
                row: i + 1,
                reason: "wins do not add up to games".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckpointDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Hashes of every distinct checkpoint the agents refer to.
pub fn checkpoint_digests(agents: &[AgentSpec]) -> std::io::Result<Vec<CheckpointDigest>> {
    let mut paths: Vec<&PathBuf> = agents
        .iter()
        .filter_map(|a| match a {
            AgentSpec::Azero { checkpoint, .. } => Some(checkpoint),
            _ => None,
        })
        .collect();
    paths.sort();
    paths.dedup();
    paths
        .into_iter()
        .map(|p| {
            Ok(CheckpointDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// What produced a results table, written next to it as JSON.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub base_seed: u64,
    pub workers: usize,
    pub agents: Vec<AgentSpec>,
    pub checkpoints: Vec<CheckpointDigest>,
    /// The subcommand's full settings.
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
