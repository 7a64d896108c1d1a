//! The search POMDP: world transitions, rewards, termination, and the
//! observation handed to policies.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auditory::{self, itd_table, AuditoryConfig, ItdTable};
use crate::belief::{self, BeliefConfig, BeliefMap, BeliefSummary, Motion};
use crate::error::{Error, Result};
use crate::geometry::{ego_to_world, world_to_ego, EgoPolar, PolarGrid, Pose, WorldPoint};
use crate::scene::SceneMap;
use crate::visual::{self, VisualConfig};

pub const HISTORY_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TurnLeft,
    TurnRight,
    MoveForward,
    Stay,
    Commit,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::MoveForward,
        Action::Stay,
        Action::Commit,
    ];

    /// Wire code; 0 is reserved for "no action yet".
    pub fn code(self) -> u8 {
        match self {
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
            Action::MoveForward => 3,
            Action::Stay => 4,
            Action::Commit => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Action> {
        Action::ALL.iter().copied().find(|a| a.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::MoveForward => "move_forward",
            Action::Stay => "stay",
            Action::Commit => "commit",
        }
    }

    pub fn is_turn(self) -> bool {
        matches!(self, Action::TurnLeft | Action::TurnRight)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Protocol(format!("unknown action {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub task_reward: f64,
    /// Penalty for a wrong commit.
    pub wrong_commit_penalty: f64,
    pub timestep_penalty: f64,
    pub forward_penalty: f64,
    pub turn_penalty: f64,
    pub collision_penalty: f64,
    pub gamma: f64,
    pub max_steps: u32,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            task_reward: 10.0,
            wrong_commit_penalty: 10.0,
            timestep_penalty: 0.1,
            forward_penalty: 0.3,
            turn_penalty: 0.1,
            collision_penalty: 5.0,
            gamma: 0.99,
            max_steps: 30,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("task_reward", self.task_reward),
            ("wrong_commit_penalty", self.wrong_commit_penalty),
            ("timestep_penalty", self.timestep_penalty),
            ("forward_penalty", self.forward_penalty),
            ("turn_penalty", self.turn_penalty),
            ("collision_penalty", self.collision_penalty),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must be in (0, 1], got {}", self.gamma)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Effort cost of an action, excluding the per-step time penalty.
    pub fn action_cost(&self, action: Action) -> f64 {
        match action {
            Action::TurnLeft | Action::TurnRight => self.turn_penalty,
            Action::MoveForward => self.forward_penalty,
            Action::Stay | Action::Commit => 0.0,
        }
    }

    /// Same preferences with every reward and cost multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            task_reward: self.task_reward * k,
            wrong_commit_penalty: self.wrong_commit_penalty * k,
            timestep_penalty: self.timestep_penalty * k,
            forward_penalty: self.forward_penalty * k,
            turn_penalty: self.turn_penalty * k,
            collision_penalty: self.collision_penalty * k,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Heading change per turn action, degrees.
    pub turn_deg: f64,
    /// Forward step length, metres.
    pub stride: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            turn_deg: 30.0,
            stride: 1.0,
        }
    }
}

impl MotionConfig {
    pub fn motion(&self, action: Action) -> Motion {
        match action {
            Action::TurnLeft => Motion::Turn(-self.turn_deg),
            Action::TurnRight => Motion::Turn(self.turn_deg),
            Action::MoveForward => Motion::Forward(self.stride),
            Action::Stay | Action::Commit => Motion::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitConfig {
    /// Maximum distance from the estimate to the target centre, metres.
    pub tolerance: f64,
}

impl Default for CommitConfig {
    fn default() -> Self {
        Self { tolerance: 1.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub grid: PolarGrid,
    pub auditory: AuditoryConfig,
    pub visual: VisualConfig,
    pub belief: BeliefConfig,
    pub reward: RewardConfig,
    pub motion: MotionConfig,
    pub commit: CommitConfig,
    /// Disables ITD noise.
    pub noiseless: bool,
    /// Stores the full posterior in every step record.
    pub log_snapshots: bool,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.auditory.validate()?;
        self.visual.validate()?;
        self.belief.validate()?;
        self.reward.validate()?;
        self.grid.azimuth_steps(self.motion.turn_deg)?;
        if !(self.motion.stride > 0.0) {
            return Err(Error::InvalidConfig("stride must be positive".into()));
        }
        if !(self.commit.tolerance > 0.0) {
            return Err(Error::InvalidConfig("commit tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// What a policy is allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct CognitiveState {
    pub posterior: BeliefMap,
    pub summary: BeliefSummary,
    /// Oldest first; `None` pads the start of an episode.
    pub last_actions: [Option<Action>; HISTORY_LEN],
    pub elapsed_steps: u32,
}

impl CognitiveState {
    pub fn new(posterior: BeliefMap, elapsed_steps: u32) -> Self {
        let summary = belief::summarize(&posterior);
        Self {
            posterior,
            summary,
            last_actions: [None; HISTORY_LEN],
            elapsed_steps,
        }
    }

    pub fn last_action_codes(&self) -> [u8; HISTORY_LEN] {
        self.last_actions.map(|a| a.map_or(0, Action::code))
    }

    fn push_action(&mut self, action: Action) {
        self.last_actions.rotate_left(1);
        self.last_actions[HISTORY_LEN - 1] = Some(action);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    CommittedCorrect,
    CommittedWrong,
    Collision,
    Timeout,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::CommittedCorrect => "committed_correct",
            OutcomeKind::CommittedWrong => "committed_wrong",
            OutcomeKind::Collision => "collision",
            OutcomeKind::Timeout => "timeout",
        }
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: OutcomeKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub commit: Option<CommitVerdict>,
}

/// Result of judging a commit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommitVerdict {
    pub estimate: EgoPolar,
    pub point: WorldPoint,
    pub correct: bool,
    /// Index of the object nearest to the committed point.
    pub nearest: usize,
    pub target_distance: f64,
    /// Two objects were equally near; the lower id was chosen.
    pub tie: bool,
}

/// Correct iff the object nearest to the committed point is the target and
/// lies within `tolerance` metres of it.
pub fn judge_commit(map: &SceneMap, pose: &Pose, estimate: &EgoPolar, cfg: &CommitConfig) -> CommitVerdict {
    const TIE_EPS: f64 = 1e-9;
    let point = ego_to_world(pose, estimate);
    let mut nearest: Option<(usize, f64)> = None;
    let mut tie = false;
    for (i, o) in map.objects.iter().enumerate() {
        let d = o.position.distance(&point);
        match nearest {
            None => nearest = Some((i, d)),
            Some((j, best)) => {
                if (d - best).abs() <= TIE_EPS {
                    tie = true;
                    if o.id < map.objects[j].id {
                        nearest = Some((i, best.min(d)));
                    }
                } else if d < best {
                    nearest = Some((i, d));
                    tie = false;
                }
            }
        }
    }
    let (nearest, _) = nearest.expect("maps always hold a target");
    let target_distance = map.target().position.distance(&point);
    CommitVerdict {
        estimate: *estimate,
        point,
        correct: map.objects[nearest].is_target && target_distance <= cfg.tolerance,
        nearest,
        target_distance,
        tie,
    }
}

/// Reward, termination flag and outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub done: bool,
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub action: Action,
    pub pose: Pose,
    pub reward: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub itd: Option<f64>,
    pub summary: BeliefSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snapshot: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTotals {
    pub steps: u32,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub discounted_return: f64,
    pub head_turn_deg: f64,
    pub displacement_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub map_seed: u64,
    pub condition: String,
    pub episode_seed: u64,
    pub start_pose: Pose,
    pub initial_itd: Option<f64>,
    pub initial: BeliefSummary,
    pub steps: Vec<StepRecord>,
    pub outcome: Option<Outcome>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Episode {
        map_seed: u64,
        condition: String,
        episode_seed: u64,
        start_pose: Pose,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        initial_itd: Option<f64>,
        initial: BeliefSummary,
    },
    Step(StepRecord),
    Outcome {
        outcome: Outcome,
        totals: EpisodeTotals,
    },
}

impl EpisodeLog {
    pub fn end_pose(&self) -> Pose {
        self.steps.last().map_or(self.start_pose, |s| s.pose)
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn totals(&self, motion: &MotionConfig, gamma: f64) -> EpisodeTotals {
        let mut discount = 1.0;
        let mut discounted_return = 0.0;
        for s in &self.steps {
            discounted_return += discount * s.reward;
            discount *= gamma;
        }
        let turns = self.steps.iter().filter(|s| s.action.is_turn()).count();
        EpisodeTotals {
            steps: self.steps.len() as u32,
            episode_return: self.steps.iter().map(|s| s.reward).sum(),
            discounted_return,
            head_turn_deg: turns as f64 * motion.turn_deg,
            displacement_m: self.start_pose.position().distance(&self.end_pose().position()),
        }
    }

    /// One JSON record per line: a header, one line per step, then the outcome.
    pub fn to_jsonl(&self, motion: &MotionConfig, gamma: f64) -> Result<String> {
        let mut out = serde_json::to_string(&LogLine::Episode {
            map_seed: self.map_seed,
            condition: self.condition.clone(),
            episode_seed: self.episode_seed,
            start_pose: self.start_pose,
            initial_itd: self.initial_itd,
            initial: self.initial,
        })?;
        out.push('\n');
        for s in &self.steps {
            out.push_str(&serde_json::to_string(&LogLine::Step(s.clone()))?);
            out.push('\n');
        }
        if let Some(outcome) = self.outcome {
            out.push_str(&serde_json::to_string(&LogLine::Outcome {
                outcome,
                totals: self.totals(motion, gamma),
            })?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut log: Option<EpisodeLog> = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<LogLine>(line)? {
                LogLine::Episode {
                    map_seed,
                    condition,
                    episode_seed,
                    start_pose,
                    initial_itd,
                    initial,
                } => {
                    log = Some(EpisodeLog {
                        map_seed,
                        condition,
                        episode_seed,
                        start_pose,
                        initial_itd,
                        initial,
                        steps: Vec::new(),
                        outcome: None,
                    })
                }
                LogLine::Step(s) => log
                    .as_mut()
                    .ok_or_else(|| Error::InvalidConfig("log step before header".into()))?
                    .steps
                    .push(s),
                LogLine::Outcome { outcome, .. } => {
                    log.as_mut()
                        .ok_or_else(|| Error::InvalidConfig("log outcome before header".into()))?
                        .outcome = Some(outcome)
                }
            }
        }
        log.ok_or_else(|| Error::InvalidConfig("empty episode log".into()))
    }
}

/// Where the standard-normal ITD noise draws come from.
#[derive(Debug, Clone)]
enum NoiseSource {
    Seeded(ChaCha8Rng),
    Scripted(std::vec::IntoIter<f64>),
    Silent,
}

impl NoiseSource {
    fn draw(&mut self) -> f64 {
        match self {
            NoiseSource::Seeded(rng) => rng.sample(StandardNormal),
            NoiseSource::Scripted(it) => it.next().unwrap_or(0.0),
            NoiseSource::Silent => 0.0,
        }
    }
}

/// One episode's world, belief and bookkeeping.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    table: Arc<ItdTable>,
    map: Arc<SceneMap>,
    pose: Pose,
    visual: BeliefMap,
    state: CognitiveState,
    noise: NoiseSource,
    done: bool,
    log: EpisodeLog,
}

impl Environment {
    /// Starts an episode on `map`; ITD noise is drawn from a generator seeded by `seed`.
    pub fn new(cfg: EnvConfig, map: Arc<SceneMap>, seed: u64) -> Result<Self> {
        let noise = if cfg.noiseless {
            NoiseSource::Silent
        } else {
            NoiseSource::Seeded(ChaCha8Rng::seed_from_u64(seed))
        };
        Self::start(cfg, map, seed, noise)
    }

    /// Starts an episode whose ITD noise draws are taken from `draws` in order
    /// (zero once exhausted).
    pub fn with_noise_script(cfg: EnvConfig, map: Arc<SceneMap>, draws: Vec<f64>) -> Result<Self> {
        Self::start(cfg, map, 0, NoiseSource::Scripted(draws.into_iter()))
    }

    fn start(cfg: EnvConfig, map: Arc<SceneMap>, seed: u64, noise: NoiseSource) -> Result<Self> {
        cfg.validate()?;
        map.validate()?;
        let table = Arc::new(itd_table(&cfg.grid, &cfg.auditory));
        let grid = cfg.grid;
        let pose = map.start_pose;
        let mut env = Self {
            cfg,
            table,
            pose,
            visual: BeliefMap::uniform(grid),
            state: CognitiveState::new(BeliefMap::uniform(grid), 0),
            noise,
            done: false,
            log: EpisodeLog {
                map_seed: map.seed,
                condition: map.condition.label(),
                episode_seed: seed,
                start_pose: pose,
                initial_itd: None,
                initial: belief::summarize(&BeliefMap::uniform(grid)),
                steps: Vec::new(),
                outcome: None,
            },
            map,
        };
        let itd = env.perceive(Motion::Hold)?;
        env.log.initial_itd = Some(itd);
        env.log.initial = env.state.summary;
        Ok(env)
    }

    /// Restarts on the same map with a new seed.
    pub fn reset(&mut self, seed: u64) -> Result<&CognitiveState> {
        *self = Self::new(self.cfg, self.map.clone(), seed)?;
        Ok(&self.state)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn map(&self) -> &SceneMap {
        &self.map
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn state(&self) -> &CognitiveState {
        &self.state
    }

    pub fn visual_likelihood(&self) -> &BeliefMap {
        &self.visual
    }

    pub fn itd_table(&self) -> &Arc<ItdTable> {
        &self.table
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.log.outcome
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn into_log(self) -> EpisodeLog {
        self.log
    }

    /// Transports belief and visual memory, observes, and applies the update.
    /// Returns the observed ITD.
    fn perceive(&mut self, motion: Motion) -> Result<f64> {
        let cfg = &self.cfg;
        let bearing = world_to_ego(&self.pose, &self.map.target().position)?.theta;
        let obs = auditory::observe_with_noise(bearing, &cfg.auditory, self.noise.draw());
        let audio = auditory::audio_likelihood_with(&obs, &cfg.grid, &self.table, &cfg.auditory);

        let evidence = visual::evidence_map(&self.map, &self.pose, self.map.target_color(), &cfg.grid, &cfg.visual);
        let carried = belief::transport(&self.visual, &motion)?;
        self.visual = visual::blend_linear(&carried, &evidence, cfg.visual.blend);

        let prior = belief::transport(&self.state.posterior, &motion)?;
        let joint = belief::fuse(&audio, &self.visual, &cfg.belief)?;
        let posterior = belief::leaky_update(&prior, &joint, &cfg.belief)?;
        self.state.summary = belief::summarize(&posterior);
        self.state.posterior = posterior;
        Ok(obs.itd)
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let reward_cfg = self.cfg.reward;
        let mut reward = -reward_cfg.timestep_penalty - reward_cfg.action_cost(action);
        let mut outcome = None;
        let mut itd = None;
        self.state.elapsed_steps += 1;

        match action {
            Action::Commit => {
                let verdict = judge_commit(&self.map, &self.pose, &self.state.summary.map_estimate, &self.cfg.commit);
                reward += if verdict.correct {
                    reward_cfg.task_reward
                } else {
                    -reward_cfg.wrong_commit_penalty
                };
                outcome = Some(Outcome {
                    kind: if verdict.correct {
                        OutcomeKind::CommittedCorrect
                    } else {
                        OutcomeKind::CommittedWrong
                    },
                    commit: Some(verdict),
                });
            }
            Action::MoveForward => {
                let next = self.pose.advanced(self.cfg.motion.stride);
                if self.map.collides_path(&self.pose.position(), &next.position()) || self.map.collides(&next) {
                    reward -= reward_cfg.collision_penalty;
                    outcome = Some(Outcome {
                        kind: OutcomeKind::Collision,
                        commit: None,
                    });
                } else {
                    self.pose = next;
                    itd = Some(self.perceive(self.cfg.motion.motion(action))?);
                }
            }
            Action::TurnLeft | Action::TurnRight | Action::Stay => {
                let motion = self.cfg.motion.motion(action);
                if let Motion::Turn(delta) = motion {
                    self.pose = self.pose.turned(delta);
                }
                itd = Some(self.perceive(motion)?);
            }
        }

        if outcome.is_none() && self.state.elapsed_steps >= reward_cfg.max_steps {
            outcome = Some(Outcome {
                kind: OutcomeKind::Timeout,
                commit: None,
            });
        }
        self.done = outcome.is_some();
        self.state.push_action(action);
        self.log.steps.push(StepRecord {
            t: self.state.elapsed_steps,
            action,
            pose: self.pose,
            reward,
            itd,
            summary: self.state.summary,
            snapshot: self
                .cfg
                .log_snapshots
                .then(|| self.state.posterior.log_values().to_vec()),
        });
        self.log.outcome = outcome;
        Ok(Transition {
            reward,
            done: self.done,
            outcome,
        })
    }
}

/// Re-runs a recorded action sequence under the same configuration and seed.
pub fn replay(cfg: EnvConfig, map: Arc<SceneMap>, seed: u64, actions: &[Action]) -> Result<Environment> {
    let mut env = Environment::new(cfg, map, seed)?;
    for &a in actions {
        env.step(a)?;
    }
    Ok(env)
}

/// Flattened observation in the shape external trainers expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub est_theta: f64,
    pub est_r: f64,
    pub theta_uncertainty: f64,
    pub r_uncertainty: f64,
    pub last_actions: [u8; HISTORY_LEN],
    pub posterior_entropy: f64,
    pub elapsed_steps: u32,
    /// Probabilities, one row per range bin, azimuth ascending from -180.
    pub posterior: Vec<f64>,
}

impl Observation {
    pub fn from_state(state: &CognitiveState) -> Self {
        Self {
            est_theta: state.summary.map_estimate.theta,
            est_r: state.summary.map_estimate.r,
            theta_uncertainty: state.summary.theta_uncertainty,
            r_uncertainty: state.summary.r_uncertainty,
            last_actions: state.last_action_codes(),
            posterior_entropy: state.summary.entropy,
            elapsed_steps: state.elapsed_steps,
            posterior: state.posterior.values(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Color, SceneObject};

    fn car(id: u32, x: f64, y: f64, color: Color, is_target: bool) -> SceneObject {
        SceneObject {
            id,
            position: WorldPoint::new(x, y),
            color,
            is_target,
            footprint_radius: 0.9,
        }
    }

    fn ahead_map() -> Arc<SceneMap> {
        // target 4 m straight ahead, a white car off to the right
        let objects = vec![
            car(0, 10.0, 6.0, Color::Blue, true),
            car(1, 16.0, 6.0, Color::White, false),
        ];
        Arc::new(SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 2.0, 0.0), 3).unwrap())
    }

    #[test]
    fn reset_state() {
        let env = Environment::new(EnvConfig::default(), ahead_map(), 1).unwrap();
        let s = env.state();
        assert_eq!(s.elapsed_steps, 0);
        assert_eq!(s.last_action_codes(), [0; 4]);
        assert!(s.summary.entropy < (10800f64).ln());
        let again = Environment::new(EnvConfig::default(), ahead_map(), 1).unwrap();
        assert_eq!(again.state(), s);
    }

    #[test]
    fn reward_examples() {
        let cfg = EnvConfig {
            noiseless: true,
            ..Default::default()
        };
        let mut env = Environment::new(cfg, ahead_map(), 1).unwrap();
        let est = env.state().summary.map_estimate;
        assert_eq!((est.r, est.theta), (4.0, 0.0));
        let t = env.step(Action::Commit).unwrap();
        assert_eq!(t.reward, 10.0 - 0.1);
        assert!(t.done);
        assert_eq!(t.outcome.unwrap().kind, OutcomeKind::CommittedCorrect);
        assert!(matches!(env.step(Action::Stay), Err(Error::EpisodeDone)));

        let mut env = Environment::new(cfg, ahead_map(), 1).unwrap();
        let t = env.step(Action::Stay).unwrap();
        assert_eq!(t.reward, -0.1);
        assert_eq!(env.pose(), ahead_map().start_pose);
        // the car's footprint starts at y = 5.1: steps to y = 3, 4, 5 are free
        for _ in 0..3 {
            let t = env.step(Action::MoveForward).unwrap();
            assert_eq!(t.reward, -0.1 - 0.3);
            assert!(!t.done);
        }
        let t = env.step(Action::MoveForward).unwrap();
        assert_eq!(t.reward, -0.1 - 0.3 - 5.0);
        assert_eq!(t.outcome.unwrap().kind, OutcomeKind::Collision);
        assert_eq!(env.pose().y, 5.0);
    }

    #[test]
    fn timeout_after_max_steps() {
        let mut env = Environment::new(EnvConfig::default(), ahead_map(), 2).unwrap();
        for k in 1..=30 {
            let t = env.step(Action::Stay).unwrap();
            assert_eq!(t.done, k == 30);
        }
        assert_eq!(env.outcome().unwrap().kind, OutcomeKind::Timeout);
        assert_eq!(env.log().steps.len(), 30);
    }

    #[test]
    fn judge_rules() {
        let m = ahead_map();
        let pose = m.start_pose;
        let cfg = CommitConfig::default();
        assert!(judge_commit(&m, &pose, &EgoPolar::new(4.0, 0.0), &cfg).correct);
        let d = world_to_ego(&pose, &WorldPoint::new(16.0, 6.0)).unwrap();
        assert!(!judge_commit(&m, &pose, &d, &cfg).correct);
        let far = EgoPolar::new(6.0, 0.0);
        assert!(!judge_commit(&m, &pose, &far, &cfg).correct);
        // midway between the two cars: tie goes to id 0, the target, but it is 3 m away
        let mid = world_to_ego(&pose, &WorldPoint::new(13.0, 6.0)).unwrap();
        let v = judge_commit(&m, &pose, &mid, &cfg);
        assert!(v.tie);
        assert_eq!(v.nearest, 0);
        assert!(!v.correct);
    }

    #[test]
    fn history_ring_and_replay() {
        let cfg = EnvConfig::default();
        let actions = [
            Action::TurnLeft,
            Action::Stay,
            Action::TurnRight,
            Action::TurnRight,
            Action::MoveForward,
            Action::Commit,
        ];
        let env = replay(cfg, ahead_map(), 9, &actions).unwrap();
        assert_eq!(env.state().last_action_codes(), [2, 2, 3, 5]);
        let again = replay(cfg, ahead_map(), 9, &env.log().actions()).unwrap();
        let a = env.log().to_jsonl(&cfg.motion, cfg.reward.gamma).unwrap();
        let b = again.log().to_jsonl(&cfg.motion, cfg.reward.gamma).unwrap();
        assert_eq!(a, b);
        assert_eq!(EpisodeLog::from_jsonl(&a).unwrap(), *env.log());
        let totals = env.log().totals(&cfg.motion, cfg.reward.gamma);
        assert_eq!(totals.head_turn_deg, 90.0);
        assert!((totals.displacement_m - 1.0).abs() < 1e-12);
    }
}
