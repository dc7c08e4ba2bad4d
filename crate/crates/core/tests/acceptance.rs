//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use deictic::config::{AgentKind, ExperimentConfig, HomcheckSettings, Precision, StageConfig};
use deictic::deictic::{CropSpec, CropTable, DeicticConfig, Resampling};
use deictic::env::{action_space, Action, MoveEffectEnv, Rules, Stage, Task};
use deictic::experiment;
use deictic::homomorphism::{run_homcheck, HomCheckOptions};
use deictic::learner::{
    run_curriculum, Architecture, Context, CurriculumOptions, DeicticAgent, DqnAgent,
    EpsilonSchedule, LearnerConfig, LearningCurve, ReplayMode, StagePlan,
};
use deictic::nn::ConvSpec;
use deictic::{GridTransform, Image, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HOM_TOL: f64 = 1e-9;
const HOM_GAMMA: f64 = 0.9;
const HOM_RUNTIME: Duration = Duration::from_secs(60);

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const SOLVE_THRESHOLD: f64 = 0.8;
const EPISODE_BUDGET: usize = 20_000;
const SPEEDUP_RATIO: f64 = 0.5;

const ABLATION_STEP_BUDGET: u64 = 2_000;
const ABLATION_CURRICULUM_MIN: f64 = 0.7;
const ABLATION_DIRECT_MAX: f64 = 0.5;
const ABLATION_MIN_ACTIONS: usize = 1_200;

const HIERARCHY_PROBES: usize = 1_000;
const PRUNING_SCENES: usize = 1_000;
const GRADCHECK_SPECS: usize = 50;
const GRADCHECK_STEP: f64 = 1e-3;
const GRADCHECK_TOL: f64 = 1e-4;
const INVARIANCE_STATES: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Episodes until the rolling mean first reaches the threshold; unsolved
/// runs count as one past the budget.
fn episodes_to_solve(curve: &LearningCurve) -> usize {
    curve.stages[0].solved_at.unwrap_or(EPISODE_BUDGET + 1)
}

fn scaling_config() -> (LearnerConfig, EpsilonSchedule, CurriculumOptions) {
    let eps = EpsilonSchedule::new(1.0, 0.1, 1000);
    let cfg = LearnerConfig::new(eps);
    let mut opts = CurriculumOptions::new(EPISODE_BUDGET);
    opts.threshold = SOLVE_THRESHOLD;
    (cfg, eps, opts)
}

fn baseline_run(side: usize, seed: u64) -> usize {
    let (cfg, eps, opts) = scaling_config();
    let stage = Stage::grid_disk(side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent: DqnAgent<f32> = DqnAgent::new(cfg, stage, &mut rng).unwrap();
    let curve = run_curriculum(
        &mut agent,
        &[stage.into()],
        &Rules::default(),
        &eps,
        &opts,
        &mut rng,
        |_| {},
    )
    .unwrap();
    episodes_to_solve(&curve)
}

fn deictic_run(side: usize, seed: u64) -> usize {
    let (cfg, eps, opts) = scaling_config();
    let stage = Stage::grid_disk(side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent: DeicticAgent<f32> =
        DeicticAgent::new(cfg, DeicticConfig::new(2, 3), stage, &mut rng).unwrap();
    let curve = run_curriculum(
        &mut agent,
        &[stage.into()],
        &Rules::default(),
        &eps,
        &opts,
        &mut rng,
        |_| {},
    )
    .unwrap();
    episodes_to_solve(&curve)
}

fn criterion_1() -> Outcome {
    let mut opts = HomCheckOptions::new(2, CropSpec::new(3));
    opts.tol = HOM_TOL;
    opts.gamma = HOM_GAMMA;
    let t = Instant::now();
    let r = run_homcheck(&Stage::grid_disk(3), &Rules::default(), &opts).unwrap();
    let elapsed = t.elapsed();
    let bound = 2.0 * HOM_TOL / (1.0 - HOM_GAMMA);
    let pass = r.well_defined
        && r.max_transition_discrepancy == 0.0
        && r.max_reward_discrepancy == 0.0
        && r.theta_independence_holds
        && r.value_equivalence_gap <= bound
        && elapsed <= HOM_RUNTIME;
    outcome(
        pass,
        format!(
            "well_defined={} transition={} reward={} theta_independent={} gap={:e} (bound {:e}) states {}->{} in {:.1}s",
            r.well_defined,
            r.max_transition_discrepancy,
            r.max_reward_discrepancy,
            r.theta_independence_holds,
            r.value_equivalence_gap,
            bound,
            r.ground_states,
            r.abstract_states,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut opts = HomCheckOptions::new(2, CropSpec::new(1));
    opts.tol = HOM_TOL;
    opts.gamma = HOM_GAMMA;
    let r = run_homcheck(&Stage::grid_disk(3), &Rules::default(), &opts).unwrap();
    let discrepancy = r.max_transition_discrepancy.max(r.max_reward_discrepancy);
    let pass = !r.well_defined && discrepancy > 0.0 && r.value_equivalence_gap > 0.0;
    outcome(
        pass,
        format!(
            "1x1 crop: well_defined={} transition={} reward={} gap={}",
            r.well_defined,
            r.max_transition_discrepancy,
            r.max_reward_discrepancy,
            r.value_equivalence_gap
        ),
    )
}

fn criteria_3_and_4() -> (Outcome, Outcome) {
    let mut medians = Vec::new();
    let mut baseline_5 = Vec::new();
    for side in [3, 4, 5] {
        let runs: Vec<usize> = SEEDS.iter().map(|&s| baseline_run(side, s)).collect();
        if side == 5 {
            baseline_5 = runs.clone();
        }
        medians.push((side, runs.clone(), median(runs)));
    }
    let monotone = medians.windows(2).all(|w| w[0].2 < w[1].2);
    let all_solved = medians
        .iter()
        .all(|(_, r, _)| r.iter().all(|&e| e <= EPISODE_BUDGET));
    let detail = medians
        .iter()
        .map(|(side, runs, m)| format!("{side}x{side} median {m} {runs:?}"))
        .collect::<Vec<_>>()
        .join("; ");
    let c3 = outcome(monotone && all_solved, detail);

    let deictic: Vec<usize> = SEEDS.iter().map(|&s| deictic_run(5, s)).collect();
    let (md, mb) = (median(deictic.clone()), median(baseline_5.clone()));
    let ratio = md / mb;
    let c4 = outcome(
        ratio <= SPEEDUP_RATIO,
        format!("5x5 deictic median {md} {deictic:?} vs baseline median {mb} {baseline_5:?}, ratio {ratio:.3}"),
    );
    (c3, c4)
}

fn ablation_stages() -> Vec<Stage> {
    let s = |task, side, n| Stage {
        num_objects: 2,
        ..Stage::new(task, side, side, n)
    };
    vec![
        s(Task::GridDisk, 5, 2),
        s(Task::GridDisk, 5, 8),
        s(Task::BlockAlign, 5, 2),
        s(Task::BlockAlign, 5, 4),
        s(Task::BlockAlign, 9, 8),
    ]
}

fn ablation_learner() -> (LearnerConfig, EpsilonSchedule) {
    let eps = EpsilonSchedule::new(0.5, 0.1, 1000);
    let mut cfg = LearnerConfig::new(eps);
    cfg.replay = ReplayMode::prioritized();
    cfg.pruning = true;
    cfg.use_value_net = true;
    cfg.network = Architecture {
        conv: vec![
            ConvSpec {
                channels: 16,
                kernel: 3,
                stride: 1,
                pool: true,
            },
            ConvSpec {
                channels: 32,
                kernel: 3,
                stride: 1,
                pool: true,
            },
        ],
        fc: vec![48],
    };
    (cfg, eps)
}

/// Best full-window rolling reward in the last stage counting only the
/// episodes that end within `budget` steps of that stage.
fn last_stage_best(curve: &LearningCurve, window: usize, budget: u64) -> f64 {
    let last = curve.stages.len();
    let base = curve
        .rows
        .iter()
        .filter(|r| r.stage < last)
        .map(|r| r.steps)
        .max()
        .unwrap_or(0);
    let rewards: Vec<f64> = curve
        .rows
        .iter()
        .filter(|r| r.stage == last && r.steps - base <= budget)
        .map(|r| r.reward)
        .collect();
    rewards
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .fold(0.0, f64::max)
}

fn ablation_arm(seed: u64, curriculum: bool) -> f64 {
    let all = ablation_stages();
    let plans: Vec<StagePlan> = if curriculum {
        all.iter().map(|&s| s.into()).collect()
    } else {
        vec![all[4].into()]
    };
    let (cfg, eps) = ablation_learner();
    let mut opts = CurriculumOptions::new(5_000);
    if curriculum {
        opts.step_budget = Some(40_000);
    } else {
        opts.step_budget = Some(ABLATION_STEP_BUDGET);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent: DeicticAgent<f32> =
        DeicticAgent::new(cfg, DeicticConfig::new(2, 5), plans[0].stage, &mut rng).unwrap();
    let curve = run_curriculum(
        &mut agent,
        &plans,
        &Rules::default(),
        &eps,
        &opts,
        &mut rng,
        |_| {},
    )
    .unwrap();
    if curve.stages.len() < plans.len() {
        return 0.0;
    }
    last_stage_best(&curve, opts.window, ABLATION_STEP_BUDGET)
}

fn criterion_5() -> Outcome {
    let target = ablation_stages()[4];
    let mut wins = 0;
    let mut detail = Vec::new();
    for &seed in &SEEDS {
        let with = ablation_arm(seed, true);
        let without = ablation_arm(seed, false);
        let ok = with >= ABLATION_CURRICULUM_MIN && without < ABLATION_DIRECT_MAX;
        wins += ok as usize;
        detail.push(format!(
            "seed {seed}: curriculum {with:.2} direct {without:.2}"
        ));
    }
    let pass = target.num_actions() >= ABLATION_MIN_ACTIONS && wins * 2 > SEEDS.len();
    outcome(
        pass,
        format!(
            "{} actions, budget {} steps, {wins}/{} seeds; {}",
            target.num_actions(),
            ABLATION_STEP_BUDGET,
            SEEDS.len(),
            detail.join("; ")
        ),
    )
}

/// A random reachable context: reset, then a few random steps, keeping the
/// last `keep` (image, action) pairs.
fn random_context(env: &mut MoveEffectEnv, keep: usize, rng: &mut ChaCha8Rng) -> Context<f64> {
    let actions = action_space(env.stage());
    loop {
        let obs = env.reset::<f64>(rng.gen()).unwrap();
        let mut ctx = Context {
            history: Vec::new(),
            image: obs.image,
            theta: obs.theta,
        };
        let steps = rng.gen_range(0..4);
        for _ in 0..steps {
            if env.is_done() {
                break;
            }
            let a = actions[rng.gen_range(0..actions.len())];
            let res = env.step::<f64>(&a).unwrap();
            ctx = ctx.advance(a, res.observation, keep);
        }
        if !env.is_done() {
            return ctx;
        }
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let stages = [
        Stage::new(Task::BlockAlign, 5, 5, 4),
        Stage::new(Task::GridDisk, 5, 5, 2),
        Stage {
            num_objects: 3,
            ..Stage::new(Task::BlockAlign, 6, 4, 8)
        },
    ];
    let (mut exact, mut bounded) = (0, 0);
    for probe in 0..HIERARCHY_PROBES {
        let stage = stages[probe % stages.len()];
        let mut cfg = LearnerConfig::new(EpsilonSchedule::new(0.0, 0.0, 1));
        cfg.hierarchy.enabled = true;
        cfg.pruning = probe % 2 == 0;
        cfg.network = Architecture {
            conv: vec![ConvSpec {
                channels: 4,
                kernel: 3,
                stride: 1,
                pool: true,
            }],
            fc: vec![8],
        };
        let agent: DeicticAgent<f64> =
            DeicticAgent::new(cfg, DeicticConfig::new(2, 3), stage, &mut rng).unwrap();
        let mut env = MoveEffectEnv::new(stage, Rules::default()).unwrap();
        let ctx = random_context(&mut env, 1, &mut rng);
        let cands = agent.candidates(&ctx.image);
        let max = agent
            .q_values(&ctx, &cands)
            .unwrap()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let (_, full) = agent
            .hierarchical_argmax(&ctx, &cands, 1.0, &mut rng)
            .unwrap();
        let (_, partial) = agent
            .hierarchical_argmax(&ctx, &cands, 0.2, &mut rng)
            .unwrap();
        exact += (full == max) as usize;
        bounded += (partial <= max) as usize;
    }
    outcome(
        exact == HIERARCHY_PROBES && bounded == HIERARCHY_PROBES,
        format!(
            "eta=1 exact {exact}/{HIERARCHY_PROBES}, eta=0.2 bounded {bounded}/{HIERARCHY_PROBES}"
        ),
    )
}

/// Nearest-neighbour crop computed directly from the pose angle.
fn oracle_crop(image: &Image<f64>, pose: &Pose, n: usize, spec: &CropSpec) -> Vec<f64> {
    let w = spec.window as i64;
    let r = w / 2;
    let theta = pose.orientation as f64 * std::f64::consts::PI / n as f64;
    let mut out = Vec::new();
    for row in 0..w {
        for col in 0..w {
            let (u, v) = ((col - r) as f64, (row - r) as f64);
            let x = pose.x as f64 + theta.cos() * u - theta.sin() * v;
            let y = pose.y as f64 + theta.sin() * u + theta.cos() * v;
            let v = image
                .get(x.round() as i64, y.round() as i64)
                .unwrap_or(spec.padding);
            out.push(v);
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut violations, mut crop_mismatches) = (0, 0);
    let (mut kept_total, mut dropped_total) = (0usize, 0usize);
    for scene in 0..PRUNING_SCENES {
        let (w, h) = (rng.gen_range(2..=9), rng.gen_range(2..=9));
        let n = [1, 2, 4, 8][rng.gen_range(0..4)];
        let task = if scene % 2 == 0 {
            Task::GridDisk
        } else {
            Task::BlockAlign
        };
        let stage = Stage::new(task, w, h, n);
        let image: Image<f64> = if scene % 3 == 0 {
            // arbitrary heights, including negative ones
            let data = (0..w * h)
                .map(|_| {
                    if rng.gen_bool(0.15) {
                        [-1.0, 0.25, 1.0, 3.0][rng.gen_range(0..4)]
                    } else {
                        0.0
                    }
                })
                .collect();
            Image::from_vec(w, h, data).unwrap()
        } else {
            let stage = Stage {
                num_objects: rng.gen_range(1..=3),
                ..stage
            };
            match MoveEffectEnv::new(stage, Rules::default()) {
                Ok(mut env) => match env.reset::<f64>(rng.gen()) {
                    Ok(obs) => obs.image,
                    Err(_) => Image::zeros(w, h),
                },
                Err(_) => Image::zeros(w, h),
            }
        };
        let mut spec = CropSpec::new([1, 3, 5][rng.gen_range(0..3)]);
        if rng.gen_bool(0.25) {
            spec.resampling = Resampling::Bilinear;
        }
        let table = CropTable::new(spec, n);
        let actions = action_space(&stage);
        let kept: HashSet<Action> = table.prune(&actions, &image).into_iter().collect();
        for a in &actions {
            let crop = table.crop(&image, &a.motion);
            let positive = crop.values().iter().any(|v| *v > 0.0);
            if spec.resampling == Resampling::Nearest
                && oracle_crop(&image, &a.motion, n, &spec) != crop.values()
            {
                crop_mismatches += 1;
            }
            if kept.contains(a) {
                kept_total += 1;
                violations += (!positive) as usize;
            } else {
                dropped_total += 1;
                violations += positive as usize;
            }
        }
    }
    outcome(
        violations == 0 && crop_mismatches == 0,
        format!(
            "{PRUNING_SCENES} scenes, {kept_total} retained, {dropped_total} discarded, {violations} violations, \
             {crop_mismatches} crops differing from the direct construction"
        ),
    )
}

fn criterion_8() -> Outcome {
    let s = experiment::gradcheck(0, GRADCHECK_SPECS, GRADCHECK_STEP, GRADCHECK_TOL, false);
    let checked: usize = s.cases.iter().map(|c| c.checked).sum();
    outcome(
        s.passed && checked > 0,
        format!(
            "{} specs, {checked} components, max relative error {:e} (tol {:e})",
            s.cases.len(),
            s.max_relative_error,
            GRADCHECK_TOL
        ),
    )
}

/// Sorted candidate values and the set of greedy abstract-action keys.
fn greedy_view(agent: &DeicticAgent<f64>, ctx: &Context<f64>) -> (Vec<f64>, HashSet<Vec<u8>>) {
    let cands = agent.candidates(&ctx.image);
    let values = agent.q_values(ctx, &cands).unwrap();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = cands
        .iter()
        .zip(&values)
        .filter(|(_, v)| **v == max)
        .map(|(a, _)| agent.abstract_action(&ctx.image, a).key())
        .collect();
    let mut distinct: Vec<(Vec<u8>, f64)> = cands
        .iter()
        .zip(&values)
        .map(|(a, v)| (agent.abstract_action(&ctx.image, a).key(), *v))
        .collect();
    distinct.sort_by(|a, b| a.0.cmp(&b.0));
    distinct.dedup_by(|a, b| a.0 == b.0);
    let mut sorted: Vec<f64> = distinct.into_iter().map(|(_, v)| v).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (sorted, best)
}

fn positives_within(image: &Image<f64>, margin: i64) -> bool {
    let (w, h) = (image.width() as i64, image.height() as i64);
    (0..h).all(|y| {
        (0..w).all(|x| {
            image.get(x, y).unwrap() == 0.0
                || (x >= margin && y >= margin && x < w - margin && y < h - margin)
        })
    })
}

fn transform_context(
    ctx: &Context<f64>,
    t: &GridTransform,
    n: usize,
    margin: i64,
) -> Option<Context<f64>> {
    let (w, h) = (ctx.image.width(), ctx.image.height());
    let image = ctx.image.transformed(t)?;
    if !positives_within(&image, margin) {
        return None;
    }
    let mut history = Vec::new();
    for (img, a) in &ctx.history {
        let timg = img.transformed(t)?;
        if !positives_within(&timg, margin) {
            return None;
        }
        let (x, y) = t.apply_cell(a.motion.x as i64, a.motion.y as i64, w, h);
        let (tw, th) = t.output_dims(w, h);
        if x < 0 || y < 0 || x >= tw as i64 || y >= th as i64 {
            return None;
        }
        let o = (a.motion.orientation + (t.quarter_turns as usize % 4) * n / 2) % n;
        history.push((
            timg,
            Action {
                motion: Pose::new(x as usize, y as usize, o),
                effector: a.effector,
            },
        ));
    }
    Some(Context {
        history,
        image,
        theta: ctx.theta,
    })
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let side = 7usize;
    let margin = 1i64;
    let (mut states, mut transforms, mut mismatches) = (0, 0, 0);
    while states < INVARIANCE_STATES {
        let n = [2, 4][states % 2];
        let stage = Stage::new(Task::GridDisk, side, side, n);
        let mut cfg = LearnerConfig::new(EpsilonSchedule::new(0.0, 0.0, 1));
        cfg.pruning = true;
        let agent: DeicticAgent<f64> =
            DeicticAgent::new(cfg, DeicticConfig::new(2, 3), stage, &mut rng).unwrap();
        let mut env = MoveEffectEnv::new(stage, Rules::default()).unwrap();
        let ctx = random_context(&mut env, 1, &mut rng);
        if transform_context(&ctx, &GridTransform::translation(0, 0), n, margin).is_none() {
            continue;
        }
        states += 1;
        let reference = greedy_view(&agent, &ctx);
        let s = side as i64;
        for turns in 0..4u8 {
            for dx in -s..s {
                for dy in -s..s {
                    let t = GridTransform {
                        quarter_turns: turns,
                        dx,
                        dy,
                    };
                    let Some(moved) = transform_context(&ctx, &t, n, margin) else {
                        continue;
                    };
                    transforms += 1;
                    if greedy_view(&agent, &moved) != reference {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    outcome(
        mismatches == 0 && transforms > INVARIANCE_STATES,
        format!("{states} states, {transforms} transforms, {mismatches} mismatches"),
    )
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig {
        name: Some("determinism".into()),
        agent: AgentKind::Deictic,
        precision: Precision::F32,
        seed: 10,
        output_dir: "unused".into(),
        rules: Rules::default(),
        deictic: DeicticConfig::new(2, 3),
        learner: {
            let mut l = LearnerConfig::new(EpsilonSchedule::new(1.0, 0.1, 200));
            l.replay = ReplayMode::prioritized();
            l.pruning = true;
            l.use_value_net = true;
            l
        },
        curriculum: CurriculumOptions::new(150),
        stages: vec![
            StageConfig {
                task: Task::GridDisk,
                width: 3,
                height: 3,
                orientations: 1,
                objects: 2,
                hierarchy: None,
            },
            StageConfig {
                task: Task::GridDisk,
                width: 4,
                height: 4,
                orientations: 2,
                objects: 2,
                hierarchy: Some(true),
            },
        ],
        homcheck: HomcheckSettings::default(),
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    experiment::train(&cfg, &a, |_| {}).unwrap();
    experiment::train(&cfg, &b, |_| {}).unwrap();
    let read = |p: &std::path::Path, f: &str| std::fs::read(p.join(f)).unwrap();
    let csv_same = read(&a, experiment::CURVE_FILE) == read(&b, experiment::CURVE_FILE);
    let params_same = [experiment::Q_FILE, experiment::Q1_FILE, experiment::V_FILE]
        .iter()
        .all(|f| read(&a, f) == read(&b, f));
    let rows = read(&a, experiment::CURVE_FILE)
        .iter()
        .filter(|c| **c == b'\n')
        .count()
        - 1;
    outcome(
        csv_same && params_same,
        format!("{rows} curve rows, csv identical={csv_same}, parameters identical={params_same}"),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: usize| {
        filter
            .as_deref()
            .map_or(true, |f| f.split(',').any(|x| x.trim() == n.to_string()))
    };
    let mut failed = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!(
            "criterion {n:>2} {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed.push(n);
        }
    };
    let t = Instant::now();
    if wanted(1) {
        report(1, "homomorphism certificate", criterion_1());
    }
    if wanted(2) {
        report(2, "negative control", criterion_2());
    }
    if wanted(3) || wanted(4) {
        let (c3, c4) = criteria_3_and_4();
        if wanted(3) {
            report(3, "baseline scaling", c3);
        }
        if wanted(4) {
            report(4, "deictic speedup", c4);
        }
    }
    if wanted(5) {
        report(5, "curriculum ablation", criterion_5());
    }
    if wanted(6) {
        report(6, "hierarchy exactness", criterion_6());
    }
    if wanted(7) {
        report(7, "pruning soundness", criterion_7());
    }
    if wanted(8) {
        report(8, "gradient integrity", criterion_8());
    }
    if wanted(9) {
        report(9, "pose invariance", criterion_9());
    }
    if wanted(10) {
        report(10, "determinism", criterion_10());
    }
    println!("acceptance finished in {:.1}s", t.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
