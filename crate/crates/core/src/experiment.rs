//! Config-driven runs: training, greedy evaluation, homomorphism checks,
//! gradient checks and seed sweeps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{AgentKind, ConfigError, ExperimentConfig, Precision};
use crate::env::MoveEffectEnv;
use crate::homomorphism::{run_homcheck, AbstractionReport, HomError};
use crate::learner::{
    run_curriculum, Agent, Context, CurveRow, DeicticAgent, DqnAgent, LearnError, StageSummary,
};
use crate::nn::check::gradcheck_seed_with;
use crate::nn::NnError;
use crate::scalar::Scalar;

pub const CURVE_FILE: &str = "curve.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const Q_FILE: &str = "q.params";
pub const Q1_FILE: &str = "q1.params";
pub const V_FILE: &str = "v.params";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Hom(#[from] HomError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub name: Option<String>,
    pub agent: AgentKind,
    pub precision: Precision,
    pub seed: u64,
    pub episodes: usize,
    pub total_steps: u64,
    pub stages: Vec<StageSummary>,
    pub parameter_files: Vec<String>,
}

impl TrainSummary {
    /// Every configured stage was reached and solved.
    pub fn all_solved(&self, num_stages: usize) -> bool {
        self.stages.len() == num_stages && self.stages.iter().all(|s| s.solved_at.is_some())
    }
}

/// Train per `cfg`, writing the curve, parameters, summary and resolved
/// config into `out`.
pub fn train(
    cfg: &ExperimentConfig,
    out: &Path,
    progress: impl FnMut(&CurveRow),
) -> Result<TrainSummary, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    let summary = match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg, out, progress)?,
        Precision::F64 => train_as::<f64>(cfg, out, progress)?,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn train_as<T: Scalar>(
    cfg: &ExperimentConfig,
    out: &Path,
    mut progress: impl FnMut(&CurveRow),
) -> Result<TrainSummary, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let plans = cfg.plans();
    let curve_path = out.join(CURVE_FILE);
    let mut csv = BufWriter::new(File::create(&curve_path).map_err(io_err(&curve_path))?);
    writeln!(csv, "{}", CurveRow::HEADER).map_err(io_err(&curve_path))?;
    let mut write_failure = None;
    let mut on_row = |row: &CurveRow| {
        if write_failure.is_none() {
            if let Err(e) = writeln!(csv, "{}", row.to_csv()) {
                write_failure = Some(e);
            }
        }
        progress(row);
    };
    let eps = &cfg.learner.epsilon;
    let (curve, files) = match cfg.agent {
        AgentKind::Deictic => {
            let mut agent =
                DeicticAgent::<T>::new(cfg.learner.clone(), cfg.deictic, plans[0].stage, &mut rng)?;
            let curve = run_curriculum(
                &mut agent,
                &plans,
                &cfg.rules,
                eps,
                &cfg.curriculum,
                &mut rng,
                &mut on_row,
            )?;
            agent
                .q_network()
                .save(agent.q_params(), &out.join(Q_FILE))?;
            agent
                .q_network()
                .save(agent.q1_params(), &out.join(Q1_FILE))?;
            agent
                .v_network()
                .save(agent.v_params(), &out.join(V_FILE))?;
            (curve, vec![Q_FILE, Q1_FILE, V_FILE])
        }
        AgentKind::Baseline => {
            let mut agent = DqnAgent::<T>::new(cfg.learner.clone(), plans[0].stage, &mut rng)?;
            let curve = run_curriculum(
                &mut agent,
                &plans,
                &cfg.rules,
                eps,
                &cfg.curriculum,
                &mut rng,
                &mut on_row,
            )?;
            agent.network().save(agent.params(), &out.join(Q_FILE))?;
            (curve, vec![Q_FILE])
        }
    };
    if let Some(e) = write_failure {
        return Err(io_err(&curve_path)(e));
    }
    csv.flush().map_err(io_err(&curve_path))?;
    Ok(TrainSummary {
        name: cfg.name.clone(),
        agent: cfg.agent,
        precision: cfg.precision,
        seed: cfg.seed,
        episodes: curve.rows.len(),
        total_steps: curve.total_steps(),
        stages: curve.stages,
        parameter_files: files.into_iter().map(String::from).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    /// 1-based index of the evaluated stage within the config.
    pub stage: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_steps: f64,
}

/// Greedy (ε = 0) rollouts on the last configured stage with parameters
/// from `params`: either a run directory or a `q.params` file. Sibling
/// `q1.params` is loaded when the stage uses the hierarchy.
pub fn eval(
    cfg: &ExperimentConfig,
    params: &Path,
    episodes: usize,
) -> Result<EvalSummary, ExperimentError> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(ConfigError::Invalid {
            key: "episodes".into(),
            message: "must be positive".into(),
        }
        .into());
    }
    let q_path = if params.is_dir() {
        params.join(Q_FILE)
    } else {
        params.to_path_buf()
    };
    if !q_path.is_file() {
        return Err(io_err(&q_path)(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "parameter file not found",
        )));
    }
    match cfg.precision {
        Precision::F32 => eval_as::<f32>(cfg, &q_path, episodes),
        Precision::F64 => eval_as::<f64>(cfg, &q_path, episodes),
    }
}

fn eval_as<T: Scalar>(
    cfg: &ExperimentConfig,
    q_path: &Path,
    episodes: usize,
) -> Result<EvalSummary, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let plans = cfg.plans();
    let plan = plans[plans.len() - 1];
    match cfg.agent {
        AgentKind::Deictic => {
            let mut agent =
                DeicticAgent::<T>::new(cfg.learner.clone(), cfg.deictic, plan.stage, &mut rng)?;
            agent.begin_stage(&plan, &cfg.rules, &mut rng)?;
            agent.set_q_params(agent.q_network().load(q_path)?);
            if agent.config().hierarchy.enabled {
                let q1_path = q_path.with_file_name(Q1_FILE);
                agent.set_q1_params(agent.q_network().load(&q1_path)?);
            }
            rollouts(&agent, cfg, plans.len(), episodes, &mut rng)
        }
        AgentKind::Baseline => {
            let mut agent = DqnAgent::<T>::new(cfg.learner.clone(), plan.stage, &mut rng)?;
            agent.set_params(agent.network().load(q_path)?);
            rollouts(&agent, cfg, plans.len(), episodes, &mut rng)
        }
    }
}

fn rollouts<T: Scalar, A: Agent<T>>(
    agent: &A,
    cfg: &ExperimentConfig,
    stage_index: usize,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EvalSummary, ExperimentError> {
    let stage = cfg.stages[stage_index - 1].stage();
    let mut env = MoveEffectEnv::new(stage, cfg.rules).map_err(LearnError::from)?;
    let keep = agent.history_len();
    let (mut successes, mut reward, mut steps) = (0usize, 0.0, 0u64);
    for _ in 0..episodes {
        let obs = env.reset::<T>(rng.gen()).map_err(LearnError::from)?;
        let mut ctx = Context {
            history: Vec::new(),
            image: obs.image,
            theta: obs.theta,
        };
        let mut solved = false;
        while !env.is_done() {
            let a = agent.greedy_action(&ctx, rng)?;
            let res = env.step::<T>(&a).map_err(LearnError::from)?;
            steps += 1;
            reward += res.reward;
            solved |= res.done && res.reward > 0.0;
            ctx = ctx.advance(a, res.observation, keep);
        }
        successes += solved as usize;
    }
    let n = episodes as f64;
    Ok(EvalSummary {
        stage: stage_index,
        episodes,
        successes,
        success_rate: successes as f64 / n,
        mean_reward: reward / n,
        mean_steps: steps as f64 / n,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomcheckResult {
    pub stage: usize,
    pub gap_tolerance: f64,
    /// Well defined, θ-independent and within the value-gap tolerance.
    pub certified: bool,
    #[serde(flatten)]
    pub report: AbstractionReport,
}

/// Run the homomorphism check on every configured stage.
pub fn homcheck(cfg: &ExperimentConfig) -> Result<Vec<HomcheckResult>, ExperimentError> {
    cfg.validate()?;
    let opts = cfg.homcheck_options();
    let tol = opts.gap_tolerance();
    cfg.stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let report = run_homcheck(&s.stage(), &cfg.rules, &opts)?;
            let certified = report.well_defined
                && report.theta_independence_holds
                && report.value_equivalence_gap <= tol;
            Ok(HomcheckResult {
                stage: i + 1,
                gap_tolerance: tol,
                certified,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckCase {
    pub seed: u64,
    pub parameters: usize,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckSummary {
    pub tolerance: f64,
    pub step: f64,
    pub max_relative_error: f64,
    pub passed: bool,
    pub cases: Vec<GradcheckCase>,
}

/// Finite-difference checks on `count` random specs from `seed` on. With
/// `corrupt` the analytic gradient is deliberately skewed, which must fail.
pub fn gradcheck(
    seed: u64,
    count: usize,
    step: f64,
    tolerance: f64,
    corrupt: bool,
) -> GradcheckSummary {
    let cases: Vec<GradcheckCase> = (seed..seed + count as u64)
        .map(|s| {
            let (spec, r) = gradcheck_seed_with(s, step, |g| {
                if corrupt {
                    for v in &mut g.values {
                        *v = *v * 1.5 + 0.1;
                    }
                }
            });
            let parameters = crate::nn::Network::new(spec)
                .expect("valid spec")
                .num_params();
            GradcheckCase {
                seed: s,
                parameters,
                checked: r.checked,
                skipped_kinks: r.skipped_kinks,
                max_relative_error: r.max_relative_error,
            }
        })
        .collect();
    let worst = cases
        .iter()
        .map(|c| c.max_relative_error)
        .fold(0.0, f64::max);
    GradcheckSummary {
        tolerance,
        step,
        max_relative_error: worst,
        passed: worst <= tolerance,
        cases,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub output: PathBuf,
    pub summary: TrainSummary,
}

/// Train once per seed into `out/seed-<n>`, writing `sweep.csv` with the
/// per-stage episodes-to-threshold (empty when unsolved).
pub fn sweep(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<SweepRow>, ExperimentError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut rows = Vec::with_capacity(seeds.len());
    let mut csv = String::from("seed,stage,episodes,solved_at,best_rolling,steps\n");
    for &seed in seeds {
        let mut c = cfg.clone();
        c.seed = seed;
        let dir = out.join(format!("seed-{seed}"));
        let summary = train(&c, &dir, |_| {})?;
        for s in &summary.stages {
            let solved = s.solved_at.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!(
                "{seed},{},{},{solved},{:.6},{}\n",
                s.stage, s.episodes, s.best_rolling, s.steps
            ));
        }
        rows.push(SweepRow {
            seed,
            output: dir,
            summary,
        });
    }
    write_file(&out.join("sweep.csv"), csv.as_bytes())?;
    Ok(rows)
}

/// Parse a seed list such as `1,2,7` or `1-5`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, ConfigError> {
    crate::config::parse_stage_list(s)
        .map(|v| v.into_iter().map(|x| x as u64).collect())
        .map_err(|_| ConfigError::Invalid {
            key: "--seeds".into(),
            message: format!("cannot parse `{s}`"),
        })
}
