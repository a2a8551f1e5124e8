use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lifelong_core::{EpisodeRow, LinearCmdp, RunMetrics};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const CSV_HEADER: &str =
    "k,context_id,episode_return,optimal_value,instant_regret,cum_regret,planning_calls_cum,replan_flag,wall_micros";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub final_regret: f64,
    pub total_planning_calls: usize,
    pub optimism_violations: usize,
    pub solver_failures: usize,
}

impl SummaryDocument {
    pub fn new(config: &ExperimentConfig, metrics: &RunMetrics) -> Self {
        let s = &metrics.summary;
        Self {
            config: config.clone(),
            seed: s.seed,
            final_regret: s.final_regret,
            total_planning_calls: s.total_planning_calls,
            optimism_violations: s.optimism_violations,
            solver_failures: s.solver_failures,
        }
    }
}

pub fn write_rows<W: Write>(rows: &[EpisodeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<EpisodeRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(
        header.join(",") == CSV_HEADER,
        "unexpected CSV header {:?}",
        header
    );
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn rows_to_csv_string(rows: &[EpisodeRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    Ok(String::from_utf8(buf)?)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`, returning both paths.
pub fn export_run(
    dir: &Path,
    stem: &str,
    config: &ExperimentConfig,
    metrics: &RunMetrics,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let file =
        File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    write_rows(&metrics.rows, file).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = dir.join(format!("{stem}.json"));
    let doc = serde_json::to_string_pretty(&SummaryDocument::new(config, metrics))?;
    fs::write(&json_path, doc).with_context(|| format!("writing {}", json_path.display()))?;
    Ok((csv_path, json_path))
}

pub fn write_env(path: &Path, env: &LinearCmdp) -> Result<()> {
    let text = serde_json::to_string(env)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_env(path: &Path) -> Result<LinearCmdp> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let env: LinearCmdp =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    env.validate()?;
    Ok(env)
}
