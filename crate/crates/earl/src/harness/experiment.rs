//! Train and eval drivers: run a method against the environment, write the
//! run directory artifacts, and report summary numbers.
//!
//! Every number that lands in `training_log.jsonl`, `eval_metrics.jsonl`, or
//! a checkpoint is a pure function of the config and seed. Wall-clock
//! durations go to `timing.jsonl` and nowhere else, so two runs of the same
//! config can be compared byte for byte across the other artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::agents::{build_method, find, ActMode, Method, MethodContext, StepRecord};
use crate::env::SimEnv;
use crate::nn::{Checkpoint, CheckpointBuilder};
use crate::qoe::{normalize_series, step_metrics, StepMetrics};
use crate::seeding::{derive_seed, streams};

use super::config::ExperimentConfig;
use super::metrics::{emit_metrics, MetricRecord};
use super::HarnessError;

/// Summary of a completed training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub run_id: String,
    pub episodes: u32,
    /// Cumulative reward of each training episode, in order.
    pub episode_rewards: Vec<f64>,
    /// Written only for learnable methods.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Summary of an evaluation run: per-episode series plus their means.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub run_id: String,
    pub episodes: u32,
    pub per_episode_reward: Vec<f64>,
    /// Mean per-step overall QoE of each episode.
    pub per_episode_qoe: Vec<f64>,
    /// `per_episode_qoe` rescaled to [0, 1] over this run.
    pub normalized_qoe: Vec<f64>,
    pub per_episode_v_comm: Vec<f64>,
    pub per_episode_v_comp: Vec<f64>,
    pub per_episode_util_comm: Vec<f64>,
    pub per_episode_util_comp: Vec<f64>,
    pub mean_cumulative_reward: f64,
    pub mean_qoe: f64,
    pub mean_v_comm: f64,
    pub mean_v_comp: f64,
    pub mean_util_comm: f64,
    pub mean_util_comp: f64,
    /// Extremes of the per-step (not per-episode) utilizations.
    pub util_comm_range: (f64, f64),
    pub util_comp_range: (f64, f64),
}

#[derive(Serialize)]
struct RunMeta<'a> {
    run: &'a str,
    method: &'a str,
    seed: u64,
    version: &'a str,
    learnable: bool,
}

fn write_meta(
    dir: &Path,
    file: &str,
    run_id: &str,
    cfg: &ExperimentConfig,
    learnable: bool,
) -> Result<(), HarnessError> {
    let meta = RunMeta {
        run: run_id,
        method: &cfg.method,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        learnable,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    fs::write(dir.join(file), text + "\n")?;
    Ok(())
}

fn prepare_run(cfg: &ExperimentConfig) -> Result<(Box<dyn Method>, bool), HarnessError> {
    let spec = find(&cfg.method).ok_or_else(|| {
        HarnessError::Validation(format!("unknown method '{}'", cfg.method))
    })?;
    let ctx = MethodContext {
        env: cfg.env.clone(),
        sac: cfg.sac.clone(),
        dqn: cfg.dqn.clone(),
        seed: cfg.seed,
        train_steps: u64::from(cfg.episodes) * u64::from(cfg.env.episode_len),
    };
    let method = build_method(&cfg.method, &ctx)?;
    Ok((method, spec.learnable))
}

/// Scores one step and hands back the aggregate metrics.
fn score_step(
    cfg: &ExperimentConfig,
    qoe_inputs: &[crate::qoe::QoeInputs],
    cpu_shares: &[f64],
) -> Result<StepMetrics, HarnessError> {
    let (_, metrics) = step_metrics(
        qoe_inputs,
        cpu_shares,
        &cfg.qoe,
        &cfg.reward,
        cfg.env.total_bandwidth,
        cfg.env.available_cpu,
    )?;
    Ok(metrics)
}

/// Trains `cfg.method` for `cfg.episodes` episodes and writes the run
/// directory: config snapshot, metadata, per-episode log, summary CSV,
/// timing, and (for learnable methods) a checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, HarnessError> {
    let cfg = cfg.clone().validated()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let run_id = format!("{}-seed{}", cfg.method, cfg.seed);
    let (mut method, learnable) = prepare_run(&cfg)?;
    write_meta(&dir, "meta.json", &run_id, &cfg, learnable)?;

    let mut episode_rewards = Vec::with_capacity(cfg.episodes as usize);
    let mut records = Vec::new();
    let mut timing = String::new();

    for e in 0..cfg.episodes {
        let started = Instant::now();
        let ep_seed = derive_seed(cfg.seed, streams::TRAIN_EPISODE + u64::from(e));
        let (mut env, mut observations) = SimEnv::reset(&cfg.env, ep_seed)?;
        method.episode_start();

        let mut cumulative = 0.0;
        let mut critic = (0.0, 0u32);
        let mut policy = (0.0, 0u32);
        loop {
            let neighbors = env.neighbor_lists().to_vec();
            let actions = method.act(&observations, ActMode::Explore);
            let outcome = env.step(&actions)?;
            let metrics = score_step(&cfg, &outcome.qoe_inputs, &outcome.cpu_shares)?;
            cumulative += metrics.reward;
            let next_neighbors = env.neighbor_lists().to_vec();
            let report = method.observe(&StepRecord {
                observations: &observations,
                actions: &actions,
                reward: metrics.reward,
                next_observations: &outcome.observations,
                neighbors: &neighbors,
                next_neighbors: &next_neighbors,
                truncated: outcome.done,
            });
            if let Some(l) = report.critic_loss {
                critic = (critic.0 + l, critic.1 + 1);
            }
            if let Some(l) = report.policy_loss {
                policy = (policy.0 + l, policy.1 + 1);
            }
            observations = outcome.observations;
            if outcome.done {
                break;
            }
        }

        episode_rewards.push(cumulative);
        records.push(MetricRecord::new(&run_id, e, "cumulative_reward", cumulative));
        if critic.1 > 0 {
            records.push(MetricRecord::new(&run_id, e, "critic_loss", critic.0 / f64::from(critic.1)));
        }
        if policy.1 > 0 {
            records.push(MetricRecord::new(&run_id, e, "policy_loss", policy.0 / f64::from(policy.1)));
        }
        timing.push_str(&format!(
            "{{\"episode\":{},\"wall_ms\":{:.3}}}\n",
            e,
            started.elapsed().as_secs_f64() * 1e3
        ));
    }

    emit_metrics(&records, &dir.join("training_log.jsonl"), &dir.join("training_summary.csv"))?;
    fs::write(dir.join("timing.jsonl"), timing)?;

    let checkpoint = if learnable {
        let path = dir.join("checkpoint.earl");
        let mut builder = CheckpointBuilder::new();
        method.save(&mut builder);
        builder.write(&path)?;
        Some(path)
    } else {
        None
    };

    Ok(TrainReport { run_id, episodes: cfg.episodes, episode_rewards, checkpoint, output_dir: dir })
}

/// Evaluates `cfg.method` for `cfg.eval_episodes` deterministic episodes
/// (no exploration, no updates) and writes eval artifacts to the run
/// directory. `checkpoint` restores trained parameters first; passing one
/// for a method that cannot learn is a usage error.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalReport, HarnessError> {
    let cfg = cfg.clone().validated()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;

    let run_id = format!("{}-seed{}-eval", cfg.method, cfg.seed);
    let (mut method, learnable) = prepare_run(&cfg)?;
    write_meta(&dir, "eval_meta.json", &run_id, &cfg, learnable)?;
    if let Some(path) = checkpoint {
        if !learnable {
            return Err(HarnessError::Validation(format!(
                "method '{}' has no parameters; a checkpoint cannot apply",
                cfg.method
            )));
        }
        let ckpt = Checkpoint::read(path).map_err(|e| {
            HarnessError::Validation(format!("{}: {}", path.display(), e))
        })?;
        method.load(&ckpt).map_err(|e| {
            HarnessError::Validation(format!("{}: {}", path.display(), e))
        })?;
    }

    let episodes = cfg.eval_episodes;
    let mut per_episode_reward = Vec::with_capacity(episodes as usize);
    let mut per_episode_qoe = Vec::new();
    let mut per_episode_v_comm = Vec::new();
    let mut per_episode_v_comp = Vec::new();
    let mut per_episode_util_comm = Vec::new();
    let mut per_episode_util_comp = Vec::new();
    let mut util_comm_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut util_comp_range = (f64::INFINITY, f64::NEG_INFINITY);

    for e in 0..episodes {
        let ep_seed = derive_seed(cfg.seed, streams::EVAL_EPISODE + u64::from(e));
        let (mut env, mut observations) = SimEnv::reset(&cfg.env, ep_seed)?;
        method.episode_start();

        let mut cumulative = 0.0;
        let mut sums = StepSums::default();
        loop {
            let actions = method.act(&observations, ActMode::Exploit);
            let outcome = env.step(&actions)?;
            let metrics = score_step(&cfg, &outcome.qoe_inputs, &outcome.cpu_shares)?;
            cumulative += metrics.reward;
            sums.add(&metrics);
            util_comm_range.0 = util_comm_range.0.min(metrics.util_comm);
            util_comm_range.1 = util_comm_range.1.max(metrics.util_comm);
            util_comp_range.0 = util_comp_range.0.min(metrics.util_comp);
            util_comp_range.1 = util_comp_range.1.max(metrics.util_comp);
            observations = outcome.observations;
            if outcome.done {
                break;
            }
        }

        per_episode_reward.push(cumulative);
        per_episode_qoe.push(sums.qoe / sums.steps);
        per_episode_v_comm.push(sums.v_comm / sums.steps);
        per_episode_v_comp.push(sums.v_comp / sums.steps);
        per_episode_util_comm.push(sums.util_comm / sums.steps);
        per_episode_util_comp.push(sums.util_comp / sums.steps);
    }

    let normalized_qoe = normalize_series(&per_episode_qoe);
    let mut records = Vec::new();
    for e in 0..episodes as usize {
        let ep = e as u32;
        records.push(MetricRecord::new(&run_id, ep, "cumulative_reward", per_episode_reward[e]));
        records.push(MetricRecord::new(&run_id, ep, "qoe", per_episode_qoe[e]));
        records.push(MetricRecord::new(&run_id, ep, "qoe_normalized", normalized_qoe[e]));
        records.push(MetricRecord::new(&run_id, ep, "v_comm", per_episode_v_comm[e]));
        records.push(MetricRecord::new(&run_id, ep, "v_comp", per_episode_v_comp[e]));
        records.push(MetricRecord::new(&run_id, ep, "util_comm", per_episode_util_comm[e]));
        records.push(MetricRecord::new(&run_id, ep, "util_comp", per_episode_util_comp[e]));
    }
    emit_metrics(&records, &dir.join("eval_metrics.jsonl"), &dir.join("eval_summary.csv"))?;

    let report = EvalReport {
        run_id,
        episodes,
        mean_cumulative_reward: mean(&per_episode_reward),
        mean_qoe: mean(&per_episode_qoe),
        mean_v_comm: mean(&per_episode_v_comm),
        mean_v_comp: mean(&per_episode_v_comp),
        mean_util_comm: mean(&per_episode_util_comm),
        mean_util_comp: mean(&per_episode_util_comp),
        per_episode_reward,
        per_episode_qoe,
        normalized_qoe,
        per_episode_v_comm,
        per_episode_v_comp,
        per_episode_util_comm,
        per_episode_util_comp,
        util_comm_range,
        util_comp_range,
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    fs::write(dir.join("eval_report.json"), text + "\n")?;
    Ok(report)
}

#[derive(Default)]
struct StepSums {
    steps: f64,
    qoe: f64,
    v_comm: f64,
    v_comp: f64,
    util_comm: f64,
    util_comp: f64,
}

impl StepSums {
    fn add(&mut self, m: &StepMetrics) {
        self.steps += 1.0;
        self.qoe += m.overall_qoe;
        self.v_comm += m.v_comm;
        self.v_comp += m.v_comp;
        self.util_comm += m.util_comm;
        self.util_comp += m.util_comp;
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::read_metrics;

    fn tiny_config(method: &str, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.method = method.to_string();
        cfg.episodes = 2;
        cfg.eval_episodes = 3;
        cfg.env.episode_len = 5;
        cfg.sac.batch_size = 4;
        cfg.sac.buffer_capacity = 64;
        cfg.dqn.batch_size = 4;
        cfg.dqn.buffer_capacity = 64;
        cfg.output_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn train_writes_the_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("uniform", dir.path());
        let report = cmd_train(&cfg).unwrap();
        assert_eq!(report.episodes, 2);
        assert_eq!(report.episode_rewards.len(), 2);
        assert!(report.checkpoint.is_none());
        for name in ["config.toml", "meta.json", "training_log.jsonl", "training_summary.csv", "timing.jsonl"] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        let records = read_metrics(&dir.path().join("training_log.jsonl")).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.metric == "cumulative_reward"));
    }

    #[test]
    fn learnable_train_emits_losses_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("isac", dir.path());
        let report = cmd_train(&cfg).unwrap();
        let ckpt = report.checkpoint.expect("learnable methods checkpoint");
        assert!(ckpt.exists());
        let records = read_metrics(&dir.path().join("training_log.jsonl")).unwrap();
        assert!(records.iter().any(|r| r.metric == "critic_loss"));
        assert!(records.iter().any(|r| r.metric == "policy_loss"));
    }

    #[test]
    fn eval_reports_per_episode_series() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("uniform", dir.path());
        let report = cmd_eval(&cfg, None).unwrap();
        assert_eq!(report.per_episode_reward.len(), 3);
        assert_eq!(report.normalized_qoe.len(), 3);
        assert!(report.util_comm_range.0 >= 0.0 && report.util_comm_range.1 <= 1.0);
        assert!(dir.path().join("eval_report.json").exists());
        assert!(dir.path().join("eval_meta.json").exists());
        let records = read_metrics(&dir.path().join("eval_metrics.jsonl")).unwrap();
        assert_eq!(records.len(), 3 * 7);
    }

    #[test]
    fn eval_rejects_checkpoint_for_rule_based_method() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("uniform", dir.path());
        let bogus = dir.path().join("none.earl");
        let err = cmd_eval(&cfg, Some(&bogus)).unwrap_err();
        assert!(matches!(err, HarnessError::Validation(_)));
    }

    #[test]
    fn eval_round_trips_through_a_checkpoint() {
        let train_dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config("isac", train_dir.path());
        let report = cmd_train(&cfg).unwrap();
        let ckpt = report.checkpoint.unwrap();

        let eval_a_dir = tempfile::tempdir().unwrap();
        let mut eval_cfg = tiny_config("isac", eval_a_dir.path());
        eval_cfg.eval_episodes = 2;
        let a = cmd_eval(&eval_cfg, Some(&ckpt)).unwrap();

        let eval_b_dir = tempfile::tempdir().unwrap();
        eval_cfg.output_dir = eval_b_dir.path().to_path_buf();
        let b = cmd_eval(&eval_cfg, Some(&ckpt)).unwrap();
        assert_eq!(a.per_episode_reward, b.per_episode_reward);
    }
}
