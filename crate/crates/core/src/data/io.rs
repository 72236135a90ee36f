//! Line-delimited JSON demonstration files.
//!
//! Line 1 is a header `{"schema", "version", "env"}`; every further line is
//! one transition `{episode_id, step, obs, action, next_obs, done,
//! hidden_reward}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DemoDataset, Result, Source, Transition};
use crate::env::{Action, EnvConfig, Observation};

pub const DEMO_SCHEMA: &str = "diprl-demos";
pub const DEMO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    env: EnvConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    episode_id: usize,
    step: usize,
    obs: Observation,
    action: usize,
    next_obs: Observation,
    done: bool,
    hidden_reward: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the demonstration file format to any writer.
pub fn write_demos<W: Write>(demos: &DemoDataset, env: &EnvConfig, mut out: W) -> std::io::Result<()> {
    let header = Header {
        schema: DEMO_SCHEMA.to_string(),
        version: DEMO_SCHEMA_VERSION,
        env: *env,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for (episode_id, ep) in demos.episodes().iter().enumerate() {
        for (step, t) in ep.iter().enumerate() {
            let rec = Record {
                episode_id,
                step,
                obs: t.obs.clone(),
                action: t.action.index(),
                next_obs: t.next_obs.clone(),
                done: t.done,
                hidden_reward: t.hidden_reward(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

pub fn save_demos(demos: &DemoDataset, env: &EnvConfig, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_demos(demos, env, BufWriter::new(file)).map_err(io_err(path))
}

/// Reads a demonstration file, returning the environment config echoed in
/// its header alongside the episodes.
pub fn load_demos(path: &Path) -> Result<(EnvConfig, DemoDataset)> {
    let file = File::open(path).map_err(io_err(path))?;
    let parse_err = |line: usize, message: String| DataError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header: Header = match lines.next() {
        Some(l) => {
            let l = l.map_err(io_err(path))?;
            serde_json::from_str(&l).map_err(|e| parse_err(1, e.to_string()))?
        }
        None => return Err(parse_err(1, "missing header".into())),
    };
    if header.schema != DEMO_SCHEMA || header.version != DEMO_SCHEMA_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported schema {} v{}", header.schema, header.version),
        ));
    }
    let obs_len = header.env.observation_len();
    let mut episodes: Vec<Vec<Transition>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.obs.len() != obs_len || rec.next_obs.len() != obs_len {
            return Err(parse_err(
                lineno,
                format!("observation length must be {obs_len}"),
            ));
        }
        let action = Action::from_index(rec.action).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.episode_id == episodes.len() {
            episodes.push(Vec::new());
        }
        let n_episodes = episodes.len();
        let ep = match episodes.last_mut() {
            Some(ep) if rec.episode_id + 1 == n_episodes => ep,
            _ => {
                return Err(parse_err(
                    lineno,
                    format!("episode_id {} out of sequence", rec.episode_id),
                ))
            }
        };
        if rec.step != ep.len() {
            return Err(parse_err(lineno, format!("step {} out of sequence", rec.step)));
        }
        ep.push(Transition::new(
            rec.obs,
            action,
            rec.next_obs,
            rec.done,
            rec.hidden_reward,
            Source::Demo,
        ));
    }
    Ok((header.env, DemoDataset::new(episodes)?))
}
