use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::agent::{mean_std, EvalPoint};
use crate::error::Result;

pub const SUMMARY_HEADER: &str = "step,episode,mean_return,std_return,policy_loss,bce_loss,pqc_calls,minutes";
pub const AGGREGATE_HEADER: &str = "step,seeds,mean_return,std_return,rolling_mean,band_low,band_high";
pub const ABLATION_HEADER: &str = "variant,shots,qubits,mean_return,std_return,best_return,minutes,pqc_calls,status";

/// Evaluations averaged by the rolling mean of the aggregate CSV.
pub const ROLLING_WINDOW: usize = 10;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(points: &[EvalPoint]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{:.4}",
            p.step,
            p.episode,
            p.mean_return,
            p.std_return,
            opt(p.policy_loss),
            opt(p.bce_loss),
            p.pqc_calls,
            p.minutes
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub seeds: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub rolling_mean: f64,
    pub band_low: f64,
    pub band_high: f64,
}

/// Combines per-seed evaluation curves by step. At each step the mean and
/// population std are taken across seeds; the rolling mean smooths the
/// across-seed mean over the last `ROLLING_WINDOW` evaluation points and the
/// band is that rolling mean ± the across-seed std.
pub fn aggregate(curves: &[Vec<(u64, f64)>]) -> Vec<AggregateRow> {
    let mut steps: Vec<u64> = curves.iter().flatten().map(|(s, _)| *s).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut rows: Vec<AggregateRow> = Vec::with_capacity(steps.len());
    for step in steps {
        let values: Vec<f64> = curves
            .iter()
            .filter_map(|c| c.iter().find(|(s, _)| *s == step).map(|(_, v)| *v))
            .collect();
        let (mean, std) = mean_std(&values);
        let window_start = rows.len().saturating_sub(ROLLING_WINDOW - 1);
        let window: Vec<f64> = rows[window_start..].iter().map(|r| r.mean_return).chain([mean]).collect();
        let rolling = window.iter().sum::<f64>() / window.len() as f64;
        rows.push(AggregateRow {
            step,
            seeds: values.len(),
            mean_return: mean,
            std_return: std,
            rolling_mean: rolling,
            band_low: rolling - std,
            band_high: rolling + std,
        });
    }
    rows
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.seeds, r.mean_return, r.std_return, r.rolling_mean, r.band_low, r.band_high
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// Empty for classical variants.
    pub shots: Option<usize>,
    pub qubits: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub best_return: f64,
    pub minutes: f64,
    pub pqc_calls: u64,
    pub status: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.4},{},{}",
            r.variant,
            r.shots.map(|s| s.to_string()).unwrap_or_default(),
            r.qubits,
            r.mean_return,
            r.std_return,
            r.best_return,
            r.minutes,
            r.pqc_calls,
            csv_field(&r.status)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub checkpoint: PathBuf,
    pub final_mean_return: Option<f64>,
    pub final_std_return: Option<f64>,
    pub pqc_calls: u64,
    pub eval_pqc_calls: u64,
    pub minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean_final_return: Option<f64>,
    pub std_final_return: Option<f64>,
    pub seeds_completed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub seeds: Vec<SeedEntry>,
    pub summary: RunSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn summarize(seeds: &[SeedEntry]) -> RunSummary {
        let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_mean_return).collect();
        let (mean, std) = mean_std(&finals);
        RunSummary {
            mean_final_return: (!finals.is_empty()).then_some(mean),
            std_final_return: (!finals.is_empty()).then_some(std),
            seeds_completed: seeds.iter().filter(|s| s.error.is_none()).count(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
