//! Method comparison across a grid of environment settings.
//!
//! One sweep varies a single environment parameter over a fixed grid and
//! runs every requested method at each value (training first for methods
//! that learn). Cell failures are recorded and the sweep keeps going, so a
//! long comparison never dies on its last cell.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;

use crate::agents::find;
use crate::env::EnvConfig;

use super::config::ExperimentConfig;
use super::experiment::{cmd_eval, cmd_train, EvalReport};
use super::metrics::{mean_stddev, round_sig};
use super::HarnessError;

/// Which environment parameter a comparison varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Delay,
    Loss,
    Bandwidth,
    Cpu,
}

impl SweepKind {
    pub fn parse(name: &str) -> Result<SweepKind, HarnessError> {
        match name {
            "delay" => Ok(SweepKind::Delay),
            "loss" => Ok(SweepKind::Loss),
            "bandwidth" => Ok(SweepKind::Bandwidth),
            "cpu" => Ok(SweepKind::Cpu),
            other => Err(HarnessError::Validation(format!(
                "unknown sweep '{other}'; expected one of delay, loss, bandwidth, cpu"
            ))),
        }
    }

    /// Column name used in the comparison table.
    pub fn parameter(self) -> &'static str {
        match self {
            SweepKind::Delay => "delay_ms",
            SweepKind::Loss => "loss_rate",
            SweepKind::Bandwidth => "bandwidth_mbps",
            SweepKind::Cpu => "cpu_fraction",
        }
    }

    pub fn values(self) -> &'static [f64] {
        match self {
            SweepKind::Delay => &[10.0, 50.0, 100.0, 200.0],
            SweepKind::Loss => &[0.005, 0.02, 0.04, 0.08],
            SweepKind::Bandwidth => &[50.0, 100.0, 200.0, 400.0],
            SweepKind::Cpu => &[0.1, 0.4, 0.6, 0.9],
        }
    }

    /// Applies one grid value. The resource sweeps pin the other resource
    /// so the varied axis is the only thing changing between cells.
    fn apply(self, env: &mut EnvConfig, value: f64) {
        match self {
            SweepKind::Delay => env.base_delay_ms = value,
            SweepKind::Loss => env.base_loss_rate = value,
            SweepKind::Bandwidth => {
                env.total_bandwidth = value;
                env.available_cpu = 0.9;
            }
            SweepKind::Cpu => {
                env.available_cpu = value;
                env.total_bandwidth = 400.0;
            }
        }
    }
}

/// One completed (method, value) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CompareCell {
    pub method: String,
    pub parameter: &'static str,
    pub value: f64,
    pub seed: u64,
    pub eval: EvalReport,
}

/// One cell that errored; the sweep continued past it.
#[derive(Debug, Clone, Serialize)]
pub struct CompareFailure {
    pub method: String,
    pub parameter: &'static str,
    pub value: f64,
    pub error: String,
}

#[derive(Debug)]
pub struct CompareReport {
    pub parameter: &'static str,
    pub cells: Vec<CompareCell>,
    pub failures: Vec<CompareFailure>,
    pub csv_path: PathBuf,
    pub output_dir: PathBuf,
}

fn run_cell(cfg: &ExperimentConfig, learnable: bool) -> Result<EvalReport, HarnessError> {
    if learnable {
        let trained = cmd_train(cfg)?;
        cmd_eval(cfg, trained.checkpoint.as_deref())
    } else {
        cmd_eval(cfg, None)
    }
}

/// Runs the full grid for `kind` over `methods` and writes `compare.csv`
/// (one row per cell and metric: method, parameter, value, metric, mean,
/// stddev over eval episodes) plus `compare_failures.jsonl`.
///
/// Cell seeds are `cfg.seed` plus the cell index, so neighbouring cells
/// never share streams but the whole sweep is reproducible from one seed.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    methods: &[String],
) -> Result<CompareReport, HarnessError> {
    let cfg = cfg.clone().validated()?;
    if methods.is_empty() {
        return Err(HarnessError::Validation("compare needs at least one method".into()));
    }
    let mut specs = Vec::with_capacity(methods.len());
    for (i, name) in methods.iter().enumerate() {
        if methods[..i].contains(name) {
            return Err(HarnessError::Validation(format!("method '{name}' listed twice")));
        }
        let spec = find(name)
            .ok_or_else(|| HarnessError::Validation(format!("unknown method '{name}'")))?;
        specs.push(spec);
    }

    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let parameter = kind.parameter();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut cell_index = 0u64;
    for (name, spec) in methods.iter().zip(&specs) {
        for &value in kind.values() {
            let mut cell_cfg = cfg.clone();
            cell_cfg.method = name.clone();
            cell_cfg.seed = cfg.seed + cell_index;
            kind.apply(&mut cell_cfg.env, value);
            cell_cfg.output_dir = dir.join(format!("{name}-{parameter}-{value}"));
            match run_cell(&cell_cfg, spec.learnable) {
                Ok(eval) => cells.push(CompareCell {
                    method: name.clone(),
                    parameter,
                    value,
                    seed: cell_cfg.seed,
                    eval,
                }),
                Err(e) => failures.push(CompareFailure {
                    method: name.clone(),
                    parameter,
                    value,
                    error: e.to_string(),
                }),
            }
            cell_index += 1;
        }
    }

    let mut csv = String::from("method,parameter,value,metric,mean,stddev\n");
    for cell in &cells {
        let series: [(&str, &[f64]); 6] = [
            ("qoe", &cell.eval.per_episode_qoe),
            ("cumulative_reward", &cell.eval.per_episode_reward),
            ("v_comm", &cell.eval.per_episode_v_comm),
            ("v_comp", &cell.eval.per_episode_v_comp),
            ("util_comm", &cell.eval.per_episode_util_comm),
            ("util_comp", &cell.eval.per_episode_util_comp),
        ];
        for (metric, values) in series {
            let (mean, stddev) = mean_stddev(values);
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.method,
                parameter,
                cell.value,
                metric,
                round_sig(mean),
                round_sig(stddev)
            ));
        }
    }
    let csv_path = dir.join("compare.csv");
    fs::write(&csv_path, csv)?;

    let mut failure_lines = String::new();
    for f in &failures {
        failure_lines
            .push_str(&serde_json::to_string(f).map_err(|e| HarnessError::Runtime(e.to_string()))?);
        failure_lines.push('\n');
    }
    fs::write(dir.join("compare_failures.jsonl"), failure_lines)?;

    Ok(CompareReport { parameter, cells, failures, csv_path, output_dir: dir })
}
