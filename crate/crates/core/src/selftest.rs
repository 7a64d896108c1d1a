//! Deterministic invariant suite behind the `selftest` command.
//!
//! Every check is seeded and reports only values that do not depend on
//! timing, so two runs print the same bytes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auditory::{self, AuditoryConfig, ItdObservation};
use crate::belief::{self, BeliefMap, Motion};
use crate::bridge::{serve_stream, Session};
use crate::config::Config;
use crate::environment::{replay, Action, CognitiveState, EnvConfig, Environment, EpisodeLog, OutcomeKind};
use crate::geometry::{EgoPolar, PolarGrid, Pose, WorldPoint};
use crate::harness::{episode_seed, generate_map_set, MapEntry, MetricRow};
use crate::policy::{GreedyPlanner, PolicyKind};
use crate::render::{render_image, render_text, RenderConfig};
use crate::scene::{Color, SceneMap, SceneObject, SlotLayout};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            out.push_str(&format!("{mark} {:<24} {}\n", c.name, c.detail));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Runs every check under `cfg`.
pub fn run(cfg: &Config) -> Report {
    let checks: [(&'static str, fn(&Config) -> Outcome); 11] = [
        ("itd_closed_form", itd_closed_form),
        ("belief_normalization", belief_normalization),
        ("turn_inverse", turn_inverse),
        ("forward_point_mass", forward_point_mass),
        ("front_back", front_back),
        ("reward_examples", reward_examples),
        ("episode_contract", episode_contract),
        ("planner_rationality", planner_rationality),
        ("map_determinism", map_determinism),
        ("render_determinism", render_determinism),
        ("bridge_determinism", bridge_determinism),
    ];
    let checks = checks
        .iter()
        .map(|&(name, f)| {
            let (passed, detail) = match f(cfg) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            log::info!("selftest {name}: {}", if passed { "ok" } else { "FAIL" });
            Check { name, passed, detail }
        })
        .collect();
    Report { checks }
}

fn itd_closed_form(cfg: &Config) -> Outcome {
    let a = &cfg.env.auditory;
    let zero = auditory::itd(0.0, a);
    ensure(zero == 0.0, || format!("itd(0) = {zero:e}"))?;
    let ninety = auditory::itd(90.0, a) * 1e6;
    let expected = AuditoryConfig::default();
    if a == &expected {
        ensure((ninety - 655.9).abs() <= 0.1, || format!("itd(90) = {ninety:.4} us"))?;
    }
    let mut worst = 0.0f64;
    for j in 0..360 {
        let t = -180.0 + j as f64 + 0.5;
        worst = worst.max((auditory::itd(-t, a) + auditory::itd(t, a)).abs());
        worst = worst.max((auditory::itd(180.0 - t, a) - auditory::itd(t, a)).abs());
    }
    ensure(worst <= 1e-12, || format!("symmetry error {worst:e}"))?;
    Ok(format!("itd(90)={ninety:.4}us symmetry_err={worst:.1e}"))
}

fn random_belief(grid: PolarGrid, rng: &mut ChaCha8Rng) -> BeliefMap {
    let logs = (0..grid.num_cells()).map(|_| rng.random_range(-30.0..5.0)).collect();
    BeliefMap::from_log_values(grid, logs).expect("finite").normalized()
}

fn belief_normalization(cfg: &Config) -> Outcome {
    let grids = [PolarGrid::new(3, 8, 1.0).expect("valid"), cfg.env.grid];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut ops = 0usize;
    for (g, sequences) in grids.iter().zip([400, 20]) {
        let res = g.azimuth_resolution;
        for _ in 0..sequences {
            let mut b = random_belief(*g, &mut rng);
            for _ in 0..6 {
                b = match rng.random_range(0..4) {
                    0 => belief::transport(&b, &Motion::Turn(res * rng.random_range(-3..=3) as f64)).map_err(|e| e.to_string())?,
                    1 => belief::transport(&b, &Motion::Forward(rng.random_range(0.2..2.0))).map_err(|e| e.to_string())?,
                    2 => {
                        let theta = rng.random_range(-180.0..180.0);
                        let obs = auditory::observe_with_noise(theta, &cfg.env.auditory, rng.random_range(-2.0..2.0));
                        let audio = auditory::audio_likelihood(&obs, g, &cfg.env.auditory);
                        let visual = random_belief(*g, &mut rng);
                        let joint = belief::fuse(&audio, &visual, &cfg.env.belief).map_err(|e| e.to_string())?;
                        belief::leaky_update(&b, &joint, &cfg.env.belief).map_err(|e| e.to_string())?
                    }
                    _ => belief::init_uniform(*g),
                };
                ops += 1;
                worst = worst.max((b.total_mass() - 1.0).abs());
            }
        }
    }
    ensure(worst < 1e-9, || format!("mass error {worst:e}"))?;
    Ok(format!("{ops} operations, max |sum-1| {}", if worst < 1e-12 { "< 1e-12" } else { "< 1e-9" }))
}

fn turn_inverse(cfg: &Config) -> Outcome {
    let g = cfg.env.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let turn = cfg.env.motion.turn_deg;
    for _ in 0..20 {
        let b = random_belief(g, &mut rng);
        let k = rng.random_range(1..=6) as f64;
        let there = belief::transport(&b, &Motion::Turn(k * turn)).map_err(|e| e.to_string())?;
        let back = belief::transport(&there, &Motion::Turn(-k * turn)).map_err(|e| e.to_string())?;
        let err = b
            .values()
            .iter()
            .zip(back.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-12, || format!("round trip error {err:e}"))?;
    }
    Ok("20 random maps".into())
}

fn forward_point_mass(cfg: &Config) -> Outcome {
    let g = cfg.env.grid;
    let cases = [
        (EgoPolar::new(5.0, 0.0), EgoPolar::new(4.0, 0.0)),
        (EgoPolar::new(2.0, 90.0), EgoPolar::new(5f64.sqrt(), 116.565)),
    ];
    let mut out = Vec::new();
    for (from, to) in cases {
        let cell = g.cell_of(&from).ok_or("source outside grid")?;
        let moved = belief::transport(&BeliefMap::point_mass(g, cell), &Motion::Forward(1.0)).map_err(|e| e.to_string())?;
        let got = g.cell_center(moved.argmax());
        let (i, j) = g.split(moved.argmax());
        let want = g.cell_of(&to).ok_or("target outside grid")?;
        let (wi, wj) = g.split(want);
        let dj = (j as i64 - wj as i64).rem_euclid(g.num_azimuth_bins as i64);
        let dj = dj.min(g.num_azimuth_bins as i64 - dj);
        ensure((i as i64 - wi as i64).abs() <= 1 && dj <= 1, || {
            format!("({},{}) moved to ({:.2},{:.1})", from.r, from.theta, got.r, got.theta)
        })?;
        out.push(format!("({:.1},{:.1})", got.r, got.theta));
    }
    Ok(out.join(" "))
}

fn front_back(cfg: &Config) -> Outcome {
    let g = cfg.env.grid;
    let a = &cfg.env.auditory;
    // target at 60 deg right, mirrored hypothesis at 120 deg
    let mut v = vec![0.0; g.num_cells()];
    for t in [60.0, 120.0] {
        v[g.cell_of(&EgoPolar::new(6.0, t)).ok_or("outside grid")?] = 0.5;
    }
    let prior = BeliefMap::from_values(g, &v).map_err(|e| e.to_string())?.normalized();
    let turn = cfg.env.motion.turn_deg;
    let moved = belief::transport(&prior, &Motion::Turn(turn)).map_err(|e| e.to_string())?;
    let obs = ItdObservation {
        itd: auditory::itd(60.0 - turn, a),
    };
    let audio = auditory::audio_likelihood(&obs, &g, a);
    let joint = belief::fuse(&audio, &belief::init_uniform(g), &cfg.env.belief).map_err(|e| e.to_string())?;
    let post = belief::leaky_update(&moved, &joint, &cfg.env.belief).map_err(|e| e.to_string())?;
    let marginal = post.azimuth_marginal();
    let window = |centre: f64| -> f64 {
        (0..g.num_azimuth_bins)
            .filter(|&j| crate::geometry::wrap_deg(g.azimuth_center(j) - centre).abs() <= 10.0)
            .map(|j| marginal[j])
            .sum()
    };
    let (truth, mirror) = (window(60.0 - turn), window(120.0 - turn));
    ensure(truth >= 10.0 * mirror, || format!("true {truth:.3e} mirror {mirror:.3e}"))?;
    Ok(format!("ratio {}", if mirror > 0.0 { format!("{:.3e}", truth / mirror) } else { "inf".into() }))
}

fn car(id: u32, x: f64, y: f64, color: Color, is_target: bool) -> SceneObject {
    SceneObject {
        id,
        position: WorldPoint::new(x, y),
        color,
        is_target,
        footprint_radius: 0.9,
    }
}

fn reward_examples(cfg: &Config) -> Outcome {
    let mut env_cfg = cfg.env;
    env_cfg.reward = EnvConfig::default().reward;
    // target 4 m straight ahead, plus a white car directly in front of a
    // second start pose
    let map = Arc::new(
        SceneMap::from_parts(
            29.0,
            13.0,
            vec![car(0, 10.0, 6.0, Color::Blue, true), car(1, 20.0, 6.0, Color::White, false)],
            Pose::new(10.0, 2.0, 0.0),
            1,
        )
        .map_err(|e| e.to_string())?,
    );
    let mut env = Environment::new(env_cfg, map.clone(), 1).map_err(|e| e.to_string())?;
    let stay = env.step(Action::Stay).map_err(|e| e.to_string())?.reward;
    ensure(stay == -0.1, || format!("stay {stay}"))?;

    let point = EgoPolar::new(4.0, 0.0);
    let mut one_hot = Environment::new(env_cfg, map.clone(), 1).map_err(|e| e.to_string())?;
    let verdict = crate::environment::judge_commit(&map, &one_hot.pose(), &point, &env_cfg.commit);
    ensure(verdict.correct, || "commit oracle disagrees".into())?;
    let commit = loop {
        // stay until the belief points at the target, then commit
        if one_hot.state().summary.map_estimate.distance(&point) <= env_cfg.commit.tolerance {
            let t = one_hot.step(Action::Commit).map_err(|e| e.to_string())?;
            break Some((t.reward, one_hot.state().elapsed_steps));
        }
        if one_hot.is_done() {
            break None;
        }
        one_hot.step(Action::Stay).map_err(|e| e.to_string())?;
    };
    let (commit, steps) = commit.ok_or("belief never settled on the target")?;
    ensure(commit == 10.0 - 0.1, || format!("correct commit {commit}"))?;

    let blocked = Arc::new(
        SceneMap::from_parts(
            29.0,
            13.0,
            vec![car(0, 10.0, 6.0, Color::Blue, true), car(1, 20.0, 3.5, Color::White, false)],
            Pose::new(20.0, 2.0, 0.0),
            1,
        )
        .map_err(|e| e.to_string())?,
    );
    let mut env = Environment::new(env_cfg, blocked, 1).map_err(|e| e.to_string())?;
    let t = env.step(Action::MoveForward).map_err(|e| e.to_string())?;
    ensure(t.reward == -5.4 && t.done, || format!("collision {}", t.reward))?;
    ensure(t.outcome.map(|o| o.kind) == Some(OutcomeKind::Collision), || "no collision outcome".into())?;
    Ok(format!("commit {commit} (after {steps} steps), collision {}, stay {stay}", t.reward))
}

fn mini_set() -> std::result::Result<Vec<MapEntry>, String> {
    generate_map_set(5, 1, &SlotLayout::default()).map_err(|e| e.to_string())
}

fn recomputed_reward(cfg: &EnvConfig, action: Action, last: bool, log: &EpisodeLog) -> f64 {
    let r = &cfg.reward;
    let mut v = -r.timestep_penalty - r.action_cost(action);
    if last {
        match log.outcome.map(|o| o.kind) {
            Some(OutcomeKind::CommittedCorrect) => v += r.task_reward,
            Some(OutcomeKind::CommittedWrong) => v -= r.wrong_commit_penalty,
            Some(OutcomeKind::Collision) => v -= r.collision_penalty,
            _ => {}
        }
    }
    v
}

fn episode_contract(cfg: &Config) -> Outcome {
    let maps = mini_set()?;
    let mut episodes = 0;
    let mut steps = 0;
    for policy in [PolicyKind::Random, PolicyKind::Heuristic, PolicyKind::Greedy] {
        for m in &maps {
            let seed = episode_seed(cfg.harness.seed, m.id, 0);
            let mut env = Environment::new(cfg.env, m.map.clone(), seed).map_err(|e| e.to_string())?;
            let mut agent = policy.build(&cfg.env, &cfg.planner).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while !env.is_done() {
                let a = agent.decide(env.state(), &mut rng);
                env.step(a).map_err(|e| e.to_string())?;
            }
            let log = env.log().clone();
            let n = log.steps.len();
            ensure(n <= cfg.env.reward.max_steps as usize, || format!("{n} steps"))?;
            ensure(log.outcome.is_some(), || "missing outcome".into())?;
            ensure(env.step(Action::Stay).is_err(), || "step after termination accepted".into())?;
            if log.outcome.map(|o| o.kind) == Some(OutcomeKind::Collision) {
                ensure(log.steps.last().map(|s| s.action) == Some(Action::MoveForward), || "collision not last".into())?;
            }
            for (k, s) in log.steps.iter().enumerate() {
                let want = recomputed_reward(&cfg.env, s.action, k + 1 == n, &log);
                ensure(s.reward == want, || format!("reward {} != {want}", s.reward))?;
            }
            let again = replay(cfg.env, m.map.clone(), seed, &log.actions()).map_err(|e| e.to_string())?;
            ensure(again.state() == env.state() && again.pose() == env.pose(), || "replay diverged".into())?;
            let text = log.to_jsonl(&cfg.env.motion, cfg.env.reward.gamma).map_err(|e| e.to_string())?;
            let text2 = again.log().to_jsonl(&cfg.env.motion, cfg.env.reward.gamma).map_err(|e| e.to_string())?;
            ensure(text == text2, || "replayed log differs".into())?;
            let parsed = EpisodeLog::from_jsonl(&text).map_err(|e| e.to_string())?;
            ensure(parsed == log, || "log does not round-trip".into())?;
            let row = MetricRow::from_log(m.id, 0, &m.map, &log, cfg);
            ensure(MetricRow::from_log(m.id, 0, &m.map, &parsed, cfg) == row, || "metrics not re-derivable".into())?;
            episodes += 1;
            steps += n;
        }
    }
    Ok(format!("{episodes} episodes, {steps} steps"))
}

fn planner_rationality(cfg: &Config) -> Outcome {
    let g = cfg.env.grid;
    let planner = GreedyPlanner::new(&cfg.env, &cfg.planner).map_err(|e| e.to_string())?;
    let one_hot = CognitiveState::new(BeliefMap::point_mass(g, g.index(6, 200)), 0);
    let a = planner.choose(&one_hot, &mut ChaCha8Rng::seed_from_u64(1));
    ensure(a == Action::Commit, || format!("one-hot chose {a}"))?;
    let scaled = planner.rescaled(7.5);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let fuzzed = 10;
    for k in 0..fuzzed {
        let s = CognitiveState::new(random_belief(g, &mut rng), 0);
        let a = planner.choose(&s, &mut ChaCha8Rng::seed_from_u64(k));
        let b = scaled.choose(&s, &mut ChaCha8Rng::seed_from_u64(k));
        ensure(a == b, || format!("scaling changed {a} to {b}"))?;
        let c = planner.choose(&s, &mut ChaCha8Rng::seed_from_u64(k));
        ensure(a == c, || "decision not pure".into())?;
    }
    Ok(format!("one-hot commit, {fuzzed} scaled states agree"))
}

fn map_determinism(_cfg: &Config) -> Outcome {
    let a = mini_set()?;
    let b = mini_set()?;
    for (x, y) in a.iter().zip(&b) {
        let tx = x.map.to_json().map_err(|e| e.to_string())?;
        ensure(tx == y.map.to_json().map_err(|e| e.to_string())?, || "regenerated map differs".into())?;
        let parsed = SceneMap::from_json(&tx).map_err(|e| e.to_string())?;
        ensure(&parsed == x.map.as_ref(), || "map does not round-trip".into())?;
    }
    Ok(format!("{} maps", a.len()))
}

fn render_determinism(cfg: &Config) -> Outcome {
    let maps = mini_set()?;
    let m = &maps[0];
    let render = || -> std::result::Result<(Vec<u8>, String), String> {
        let log = crate::harness::run_episode(cfg, PolicyKind::Heuristic, m.map.clone(), 3).map_err(|e| e.to_string())?;
        let rc = RenderConfig::default();
        Ok((render_image(&m.map, &log, &rc).to_ppm(), render_text(&m.map, &log, &rc)))
    };
    let a = render()?;
    ensure(a == render()?, || "render differs between runs".into())?;
    Ok(format!("{} image bytes", a.0.len()))
}

fn bridge_determinism(cfg: &Config) -> Outcome {
    let maps = mini_set()?;
    let script = "{\"type\":\"reset\",\"seed\":9}\n{\"type\":\"step\",\"action\":\"turn_left\"}\n{\"type\":\"step\",\"action\":3}\n{\"type\":\"step\",\"action\":\"commit\"}\n{\"type\":\"close\"}\n";
    let session = || -> std::result::Result<Vec<u8>, String> {
        let mut out = Vec::new();
        let mut s = Session::new(cfg.env, Some(maps[0].map.clone()));
        serve_stream(script.as_bytes(), &mut out, &mut s).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let a = session()?;
    ensure(a == session()?, || "bridge replies differ between runs".into())?;
    ensure(a.iter().filter(|&&b| b == b'\n').count() == 6, || "unexpected reply count".into())?;
    Ok(format!("{} reply bytes", a.len()))
}
