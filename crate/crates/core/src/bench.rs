//! Episode-loop driver, learning-curve metrics and report files.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::agents::{Agent, AgentConfig, ConfigError, EpisodeRecord, PolicyMctsConfig, QLearnConfig};
use crate::env::{EnvConfig, EnvError, FrozenLake};
use crate::oracle::PolicyVector;
use crate::rng::episode_rng;
use crate::search::SearchConfig;

/// Episodes in the trailing window used for "final" summary metrics.
pub const FINAL_WINDOW: usize = 10_000;

/// Band around the final-window mean reward that defines stabilization.
pub const STABILIZATION_BAND: f64 = 0.05;

pub const METRICS_HEADER: &str =
    "episode,reward,steps,success,smoothed_reward,smoothed_steps,cumulative_success_rate";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed metrics CSV: {0}")]
    Csv(String),
    #[error("{algorithm} run failed: {source}")]
    Run { algorithm: Algorithm, source: Box<BenchError> },
}

impl BenchError {
    /// Configuration problems (exit code 2) as opposed to runtime failures.
    pub fn is_config_error(&self) -> bool {
        match self {
            BenchError::Config(_) | BenchError::Agent(_) => true,
            BenchError::Env(EnvError::MalformedMap(_) | EnvError::InvalidConfig(_)) => true,
            BenchError::Run { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    OptimizedMcts,
    PolicyMcts,
    QLearning,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::OptimizedMcts, Algorithm::QLearning, Algorithm::PolicyMcts];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OptimizedMcts => "optimized_mcts",
            Algorithm::PolicyMcts => "policy_mcts",
            Algorithm::QLearning => "q_learning",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "optimized_mcts" => Ok(Algorithm::OptimizedMcts),
            "policy_mcts" => Ok(Algorithm::PolicyMcts),
            "q_learning" => Ok(Algorithm::QLearning),
            _ => Err(BenchError::Config(format!("unknown algorithm {s:?}"))),
        }
    }
}

/// Hyperparameters for all three learners; `RunConfig` picks one.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hyperparameters {
    pub search: SearchConfig,
    pub qlearn: QLearnConfig,
    pub policy_mcts: PolicyMctsConfig,
}

impl Hyperparameters {
    pub fn agent_config(&self, algorithm: Algorithm) -> AgentConfig {
        match algorithm {
            Algorithm::OptimizedMcts => AgentConfig::OptimizedMcts(self.search),
            Algorithm::QLearning => AgentConfig::QLearning(self.qlearn),
            Algorithm::PolicyMcts => AgentConfig::PolicyMcts(self.policy_mcts),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub episodes: u64,
    pub env: EnvConfig,
    /// Label for the map source (built-in name or file path).
    pub map_label: String,
    pub seed: u64,
    pub smoothing_window: usize,
}

impl RunConfig {
    /// Defaults: 100k episodes, smoothing window 1000.
    pub fn new(algorithm: Algorithm, env: EnvConfig, seed: u64) -> RunConfig {
        RunConfig {
            agent: Hyperparameters::default().agent_config(algorithm),
            episodes: 100_000,
            env,
            map_label: String::from("custom"),
            seed,
            smoothing_window: 1_000,
        }
    }

    pub fn with_episodes(mut self, episodes: u64) -> RunConfig {
        self.episodes = episodes;
        self.smoothing_window = self.smoothing_window.min(episodes.max(1) as usize);
        self
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.agent {
            AgentConfig::OptimizedMcts(_) => Algorithm::OptimizedMcts,
            AgentConfig::QLearning(_) => Algorithm::QLearning,
            AgentConfig::PolicyMcts(_) => Algorithm::PolicyMcts,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.episodes == 0 {
            return Err(BenchError::Config("episodes must be positive".into()));
        }
        if self.smoothing_window == 0 {
            return Err(BenchError::Config("smoothing window must be positive".into()));
        }
        if self.smoothing_window as u64 > self.episodes {
            return Err(BenchError::Config(format!(
                "smoothing window {} exceeds episode count {}",
                self.smoothing_window, self.episodes
            )));
        }
        if self.env.step_cap == 0 {
            return Err(BenchError::Config("step cap must be positive".into()));
        }
        self.agent.validate()?;
        Ok(())
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: u64,
    pub reward: u8,
    pub steps: usize,
    pub success: u8,
    pub smoothed_reward: f64,
    pub smoothed_steps: f64,
    pub cumulative_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub episodes: u64,
    /// Success rate over the last `min(10k, episodes)` episodes.
    pub final_success_rate: f64,
    /// Mean reward over the same trailing window.
    pub final_mean_reward: f64,
    pub overall_success_rate: f64,
    pub overall_mean_reward: f64,
    pub mean_steps_final: f64,
    pub stabilization_episode: usize,
    pub wall_time_seconds: f64,
    pub seed: u64,
}

/// Everything a run produces, including the learner's final state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub agent: Agent,
    pub policy: PolicyVector,
}

/// Trailing mean: element `i` averages `series[max(0, i-window+1)..=i]`.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First index after which `smoothed` stays within `band` of `reference`.
///
/// Run summaries use the mean reward of the final window as the reference;
/// a single smoothed sample carries about 0.015 of sampling noise at a
/// window of 1000, which is too large against a 0.05 band.
pub fn stabilization_episode(smoothed: &[f64], reference: f64, band: f64) -> usize {
    smoothed
        .iter()
        .rposition(|x| (x - reference).abs() > band)
        .map_or(0, |i| i + 1)
}

pub fn metrics_rows(records: &[EpisodeRecord], window: usize) -> Vec<MetricsRow> {
    let rewards: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let steps: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
    let smoothed_reward = moving_average(&rewards, window);
    let smoothed_steps = moving_average(&steps, window);
    let mut successes = 0u64;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            successes += r.success as u64;
            MetricsRow {
                episode: r.episode_index,
                reward: r.episode_return as u8,
                steps: r.steps,
                success: r.success as u8,
                smoothed_reward: smoothed_reward[i],
                smoothed_steps: smoothed_steps[i],
                cumulative_success_rate: successes as f64 / (i + 1) as f64,
            }
        })
        .collect()
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    xs.sum::<f64>() / n as f64
}

pub fn summarize(cfg: &RunConfig, records: &[EpisodeRecord], rows: &[MetricsRow], wall_time_seconds: f64) -> Summary {
    let tail = &records[records.len().saturating_sub(FINAL_WINDOW)..];
    let smoothed: Vec<f64> = rows.iter().map(|r| r.smoothed_reward).collect();
    let final_mean_reward = mean(tail.iter().map(|r| r.episode_return));
    Summary {
        algorithm: cfg.algorithm(),
        episodes: records.len() as u64,
        final_success_rate: mean(tail.iter().map(|r| r.success as u8 as f64)),
        final_mean_reward,
        overall_success_rate: mean(records.iter().map(|r| r.success as u8 as f64)),
        overall_mean_reward: mean(records.iter().map(|r| r.episode_return)),
        mean_steps_final: mean(tail.iter().map(|r| r.steps as f64)),
        stabilization_episode: stabilization_episode(&smoothed, final_mean_reward, STABILIZATION_BAND),
        wall_time_seconds,
        seed: cfg.seed,
    }
}

/// Runs `cfg.episodes` episodes with learning state carried across them.
/// Wall time covers the episode loop only.
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunOutput, BenchError> {
    cfg.validate()?;
    let mut env = FrozenLake::new(cfg.env.clone());
    let mut agent = Agent::new(cfg.agent, cfg.env.map.n_states());
    let mut records = Vec::with_capacity(cfg.episodes as usize);

    let started = Instant::now();
    for k in 0..cfg.episodes {
        let mut rng = episode_rng(cfg.seed, k);
        records.push(agent.run_episode(&mut env, &mut rng, k)?);
    }
    let wall = started.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);

    let rows = metrics_rows(&records, cfg.smoothing_window);
    let summary = summarize(cfg, &records, &rows, wall);
    let policy = agent.greedy_policy(&cfg.env.map);
    Ok(RunOutput { records, rows, summary, agent, policy })
}

/// Runs every config (same seed and map required) in order.
pub fn compare(cfgs: &[RunConfig]) -> Result<Vec<RunOutput>, BenchError> {
    if cfgs.len() < 2 {
        return Err(BenchError::Config("compare needs at least two configurations".into()));
    }
    let first = &cfgs[0];
    for c in &cfgs[1..] {
        if c.seed != first.seed || *c.env.map != *first.env.map || c.env.slippery != first.env.slippery {
            return Err(BenchError::Config("compared runs must share seed and map".into()));
        }
    }
    cfgs.iter()
        .map(|c| {
            run_benchmark(c).map_err(|e| BenchError::Run { algorithm: c.algorithm(), source: Box::new(e) })
        })
        .collect()
}

pub fn write_csv_to<W: Write>(rows: &[MetricsRow], w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(METRICS_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.episode, r.reward, r.steps, r.success, r.smoothed_reward, r.smoothed_steps, r.cumulative_success_rate
        )?;
    }
    w.flush()
}

pub fn write_csv(rows: &[MetricsRow], path: &Path) -> Result<(), BenchError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_csv_to(rows, file).map_err(io_err(path))
}

pub fn read_csv_from<R: io::Read>(r: R) -> Result<Vec<MetricsRow>, BenchError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = reader.headers().map_err(|e| BenchError::Csv(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(BenchError::Csv(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| BenchError::Csv(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let bad = |e: &dyn fmt::Display| BenchError::Csv(format!("line {:?}: {e}", rec.position().map(|p| p.line())));
        rows.push(MetricsRow {
            episode: field(0).parse().map_err(|e| bad(&e))?,
            reward: field(1).parse().map_err(|e| bad(&e))?,
            steps: field(2).parse().map_err(|e| bad(&e))?,
            success: field(3).parse().map_err(|e| bad(&e))?,
            smoothed_reward: field(4).parse().map_err(|e| bad(&e))?,
            smoothed_steps: field(5).parse().map_err(|e| bad(&e))?,
            cumulative_success_rate: field(6).parse().map_err(|e| bad(&e))?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricsRow>, BenchError> {
    read_csv_from(File::open(path).map_err(io_err(path))?)
}

pub const SUMMARY_CSV_HEADER: &str = "algorithm,episodes,seed,final_success_rate,final_mean_reward,overall_success_rate,overall_mean_reward,mean_steps_final,stabilization_episode,wall_time_seconds";

pub fn summary_csv(summaries: &[Summary]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}\n",
            s.algorithm,
            s.episodes,
            s.seed,
            s.final_success_rate,
            s.final_mean_reward,
            s.overall_success_rate,
            s.overall_mean_reward,
            s.mean_steps_final,
            s.stabilization_episode,
            s.wall_time_seconds
        ));
    }
    out
}

/// Aligned text table: algorithm, final success rate, mean reward, mean
/// steps, stabilization episode and wall time.
pub fn summary_table(summaries: &[Summary]) -> String {
    let header = ["algorithm", "success(final)", "reward(final)", "steps(final)", "stabilized@", "wall_time_s"];
    let rows: Vec<[String; 6]> = summaries
        .iter()
        .map(|s| {
            [
                s.algorithm.to_string(),
                format!("{:.4}", s.final_success_rate),
                format!("{:.4}", s.final_mean_reward),
                format!("{:.2}", s.mean_steps_final),
                s.stabilization_episode.to_string(),
                format!("{:.2}", s.wall_time_seconds),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    out.push_str(&line(&widths.map(|w| "-".repeat(w)).iter().map(String::as_str).collect::<Vec<_>>()));
    for r in &rows {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}

/// Writes `summary.txt` and `summary.csv` into `dir`.
pub fn write_summaries(dir: &Path, summaries: &[Summary]) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let txt = dir.join("summary.txt");
    fs::write(&txt, summary_table(summaries)).map_err(io_err(&txt))?;
    let csv = dir.join("summary.csv");
    fs::write(&csv, summary_csv(summaries)).map_err(io_err(&csv))?;
    Ok(())
}

/// `metrics.csv`, `summary.txt` and `summary.csv` for a single run.
pub fn write_run(dir: &Path, output: &RunOutput) -> Result<(), BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_csv(&output.rows, &dir.join("metrics.csv"))?;
    write_summaries(dir, std::slice::from_ref(&output.summary))
}

/// One sub-directory per algorithm plus combined summaries at the top.
pub fn write_comparison(dir: &Path, outputs: &[RunOutput]) -> Result<(), BenchError> {
    for o in outputs {
        write_run(&dir.join(o.summary.algorithm.name()), o)?;
    }
    let summaries: Vec<Summary> = outputs.iter().map(|o| o.summary.clone()).collect();
    write_summaries(dir, &summaries)
}
