//! Action selection: a belief-space lookahead planner and two baselines.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auditory;
use crate::belief::ForwardKernel;
use crate::environment::{Action, CognitiveState, EnvConfig, RewardConfig};
use crate::error::{Error, Result};
use crate::geometry::{wrap_deg, EgoPolar, PolarGrid};

/// Decides the next action from the agent's own state.
pub trait Policy: Send {
    fn decide(&mut self, state: &CognitiveState, rng: &mut ChaCha8Rng) -> Action;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Greedy,
    Heuristic,
    Random,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Heuristic => "heuristic",
            PolicyKind::Random => "random",
        }
    }

    pub fn build(self, env: &EnvConfig, planner: &PlannerConfig) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicyKind::Greedy => Box::new(GreedyPlanner::new(env, planner)?),
            PolicyKind::Heuristic => Box::new(HeuristicPolicy::default()),
            PolicyKind::Random => Box::new(RandomPolicy::default()),
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PolicyKind::Greedy),
            "heuristic" => Ok(PolicyKind::Heuristic),
            "random" => Ok(PolicyKind::Random),
            other => Err(Error::InvalidConfig(format!("unknown policy {other:?}"))),
        }
    }
}

/// Turn toward the estimate, walk up to it, commit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicPolicy {
    pub aim_tolerance: f64,
    pub commit_range: f64,
}

impl Default for HeuristicPolicy {
    fn default() -> Self {
        Self {
            aim_tolerance: 15.0,
            commit_range: 2.0,
        }
    }
}

impl HeuristicPolicy {
    pub fn choose(&self, state: &CognitiveState) -> Action {
        let est = state.summary.map_estimate;
        if est.theta.abs() >= self.aim_tolerance {
            if est.theta > 0.0 {
                Action::TurnRight
            } else {
                Action::TurnLeft
            }
        } else if est.r > self.commit_range {
            Action::MoveForward
        } else {
            Action::Commit
        }
    }
}

impl Policy for HeuristicPolicy {
    fn decide(&mut self, state: &CognitiveState, _rng: &mut ChaCha8Rng) -> Action {
        self.choose(state)
    }
}

/// Commits with a fixed probability, otherwise picks uniformly among the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPolicy {
    pub commit_probability: f64,
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self {
            commit_probability: 0.05,
        }
    }
}

impl RandomPolicy {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        if rng.random::<f64>() < self.commit_probability {
            return Action::Commit;
        }
        const MOVES: [Action; 4] = [Action::TurnLeft, Action::TurnRight, Action::MoveForward, Action::Stay];
        MOVES[rng.random_range(0..MOVES.len())]
    }
}

impl Policy for RandomPolicy {
    fn decide(&mut self, _state: &CognitiveState, rng: &mut ChaCha8Rng) -> Action {
        self.draw(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Lookahead depth in actions before the leaf estimate.
    pub horizon: u32,
    /// Target hypotheses drawn from the posterior per decision.
    pub samples: usize,
    /// Azimuth bins of the planning grid; range bins follow the belief grid.
    pub azimuth_bins: usize,
    /// Assumed chance that a forward step ends in a collision. The agent has
    /// no map, so this stands in for what it would learn from bumping into cars.
    pub forward_risk: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            samples: 32,
            azimuth_bins: 60,
            forward_risk: 0.5,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.samples == 0 {
            return Err(Error::InvalidConfig("planner horizon and samples must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.forward_risk) {
            return Err(Error::InvalidConfig("forward_risk must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Order in which equal-valued actions are preferred.
pub const TIE_ORDER: [Action; 5] = [
    Action::Commit,
    Action::Stay,
    Action::TurnLeft,
    Action::TurnRight,
    Action::MoveForward,
];

const MOVES: [Action; 4] = [Action::Stay, Action::TurnLeft, Action::TurnRight, Action::MoveForward];

/// Bound on per-column audio log ratios, keeps products finite.
const MAX_LOG_RATIO: f64 = 50.0;

/// Precomputed tables shared by every decision of one configuration.
#[derive(Debug, Clone)]
struct PlannerModel {
    grid: PolarGrid,
    fine: PolarGrid,
    reward: RewardConfig,
    /// Coarse bins per turn.
    turn_steps: usize,
    turn_deg: f64,
    stride: f64,
    /// Scaled audio log likelihood per (hypothesis column, column).
    audio: Vec<f64>,
    /// Factor applied to cells newly seen empty.
    cleared: f64,
    /// Factor applied to the hypothesis cell when it comes into view.
    sighted: f64,
    /// Cells within commit tolerance of each cell.
    neighbours: Vec<Vec<u32>>,
    /// Columns wholly inside the field of view.
    in_view: Vec<bool>,
    /// Fine azimuth bin to coarse azimuth bin.
    fine_to_coarse: Vec<usize>,
    forward: Arc<ForwardKernel>,
    /// Columns first brought into view by the k-th further turn, per direction.
    sweep_bands: [Vec<Vec<usize>>; 2],
}

/// One sampled target carried through the lookahead.
#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    at: EgoPolar,
    /// Already in view without being seen, so it never shows up.
    hidden: bool,
}

impl PlannerModel {
    fn new(env: &EnvConfig, cfg: &PlannerConfig) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let fine = env.grid;
        let grid = PolarGrid::new(fine.num_range_bins, cfg.azimuth_bins, fine.range_resolution)?;
        let turn_steps = grid.azimuth_steps(env.motion.turn_deg)?.unsigned_abs() as usize;
        let n_az = grid.num_azimuth_bins;

        let scale = env.belief.alpha * (1.0 - env.belief.visual_weight);
        let var = env.auditory.itd_noise.powi(2);
        let mut audio = vec![0.0; n_az * n_az];
        for h in 0..n_az {
            let obs = auditory::itd(grid.azimuth_center(h), &env.auditory);
            for j in 0..n_az {
                let d = obs - auditory::itd(grid.azimuth_center(j), &env.auditory);
                audio[h * n_az + j] = -scale * d * d / (2.0 * var);
            }
        }
        let vis = env.belief.alpha * env.belief.visual_weight;
        let peak = env.visual.visible_weight * env.visual.match_similarity + env.visual.floor;
        let cleared = (1.0 - env.visual.exclusion_decay).powf(vis);
        let sighted = (peak / env.visual.floor).powf(vis);

        let tol = env.commit.tolerance;
        let neighbours = (0..grid.num_cells())
            .map(|c| {
                let a = grid.cell_center(c);
                (0..grid.num_cells())
                    .filter(|&d| a.distance(&grid.cell_center(d)) <= tol + 1e-9)
                    .map(|d| d as u32)
                    .collect()
            })
            .collect();
        // a column counts as viewed only when all of it lies inside the field of view
        let in_view = (0..n_az)
            .map(|j| grid.azimuth_center(j).abs() + grid.azimuth_resolution / 2.0 <= env.visual.fov / 2.0 + 1e-9)
            .collect();
        let fine_to_coarse = (0..fine.num_azimuth_bins)
            .map(|j| grid.azimuth_bin(fine.azimuth_center(j)))
            .collect();
        let half_fov = env.visual.fov / 2.0;
        let sweep_turns = ((180.0 - half_fov) / env.motion.turn_deg).ceil().max(1.0) as usize;
        let band = |dir: f64, k: usize| -> Vec<usize> {
            let lo = half_fov + (k - 1) as f64 * env.motion.turn_deg;
            let hi = lo + env.motion.turn_deg;
            (0..n_az)
                .filter(|&j| {
                    let t = grid.azimuth_center(j) * dir;
                    let t = if t <= 0.0 { t + 360.0 } else { t };
                    t > lo && t <= hi && t > half_fov
                })
                .collect()
        };
        let sweep_bands = [-1.0, 1.0].map(|dir| (1..=sweep_turns).map(|k| band(dir, k)).collect());
        Ok(Self {
            grid,
            fine,
            reward: env.reward,
            turn_steps,
            turn_deg: env.motion.turn_deg,
            stride: env.motion.stride,
            audio,
            cleared,
            sighted,
            neighbours,
            in_view,
            fine_to_coarse,
            forward: Arc::new(ForwardKernel::leaky(&grid, env.motion.stride)),
            sweep_bands,
        })
    }

    fn coarse(&self, state: &CognitiveState) -> Vec<f64> {
        let n_az = self.fine.num_azimuth_bins;
        let mut out = vec![0.0; self.grid.num_cells()];
        let z = state.posterior.log_total();
        for (i, row) in state.posterior.log_values().chunks_exact(n_az).enumerate() {
            for (j, l) in row.iter().enumerate() {
                out[self.grid.index(i, self.fine_to_coarse[j])] += (l - z).exp();
            }
        }
        out
    }

    fn argmax(b: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in b.iter().enumerate() {
            if v > b[best] {
                best = i;
            }
        }
        best
    }

    /// Mass within commit tolerance of the most probable cell.
    fn hit_mass(&self, b: &[f64]) -> f64 {
        let best = Self::argmax(b);
        self.neighbours[best].iter().map(|&c| b[c as usize]).sum::<f64>().min(1.0)
    }

    fn commit_value(&self, p_hit: f64) -> f64 {
        let r = &self.reward;
        -r.timestep_penalty + r.task_reward * p_hit - r.wrong_commit_penalty * (1.0 - p_hit)
    }

    /// Best of committing now or after sweeping the view to one side.
    /// Mass swept into unseen columns is either sighted or thinned out.
    fn leaf_value(&self, b: &[f64], seen: &[bool]) -> f64 {
        let best_cell = Self::argmax(b);
        let p_hit = self.neighbours[best_cell].iter().map(|&c| b[c as usize]).sum::<f64>().min(1.0);
        let mut best = self.commit_value(p_hit);
        let n_az = self.grid.num_azimuth_bins;
        let best_col = best_cell % n_az;
        let mut cols = [0.0; 360];
        let mut peaks = [0.0f64; 360];
        for row in b.chunks_exact(n_az) {
            for (j, &v) in row.iter().enumerate() {
                cols[j] += v;
                peaks[j] = peaks[j].max(v);
            }
        }
        let r = &self.reward;
        let step = r.timestep_penalty + r.turn_penalty;
        let thin = 1.0 - self.cleared;
        for bands in &self.sweep_bands {
            let mut cost = 0.0;
            let mut discount = 1.0;
            let mut q = 0.0;
            let mut peak = 0.0f64;
            let mut keeps_best = true;
            for band in bands {
                cost += discount * step;
                discount *= r.gamma;
                for &j in band.iter().filter(|&&j| !seen[j]) {
                    q += cols[j];
                    peak = peak.max(peaks[j]);
                    keeps_best &= j != best_col;
                }
                let q = q.min(1.0);
                let found = self.sighted * peak / (self.sighted * peak + 1.0 - peak);
                let rest = if keeps_best { p_hit } else { p_hit * self.cleared };
                let missed = (rest / (1.0 - q * thin)).min(1.0);
                let v = q * self.commit_value(found) + (1.0 - q) * self.commit_value(missed);
                best = best.max(-cost + discount * v);
            }
        }
        best
    }

    /// Moves the hypothesis through `action` and names the belief update it
    /// implies. Samples with equal keys share one child belief.
    fn transition(&self, hyp: Hypothesis, action: Action, seen: &[bool]) -> (Hypothesis, Step) {
        match action {
            Action::Stay | Action::Commit => (hyp, Step::Same),
            Action::MoveForward => {
                let (f, l) = hyp.at.to_forward_right();
                let at = EgoPolar::from_forward_right(f - self.stride, l);
                (Hypothesis { at, ..hyp }, Step::Forward)
            }
            Action::TurnLeft | Action::TurnRight => {
                let delta = if action == Action::TurnRight { self.turn_deg } else { -self.turn_deg };
                let at = EgoPolar {
                    r: hyp.at.r,
                    theta: wrap_deg(hyp.at.theta - delta),
                };
                let n_az = self.grid.num_azimuth_bins;
                let old_col = self.grid.azimuth_bin(hyp.at.theta);
                let col = self.grid.azimuth_bin(at.theta);
                let before = (col + self.shift(action)) % n_az;
                let sighted = if !hyp.hidden && self.in_view[col] && !seen[before] {
                    self.grid.range_bin(at.r.max(1e-9)).map(|row| self.grid.index(row, col))
                } else {
                    None
                };
                (Hypothesis { at, ..hyp }, Step::Turn { action, old_col, col, sighted })
            }
        }
    }

    /// Coarse columns the view content moves by under a turn, as a
    /// non-negative offset.
    fn shift(&self, action: Action) -> usize {
        let n_az = self.grid.num_azimuth_bins;
        match action {
            Action::TurnRight => self.turn_steps % n_az,
            Action::TurnLeft => (n_az - self.turn_steps % n_az) % n_az,
            _ => 0,
        }
    }

    /// Looked-at columns after `step`, in the new frame.
    fn look(&self, seen: &[bool], step: Step) -> Vec<bool> {
        match step {
            Step::Turn { action, .. } => {
                let n_az = seen.len();
                let s = self.shift(action);
                (0..n_az).map(|j| seen[(j + s) % n_az] || self.in_view[j]).collect()
            }
            _ => seen.to_vec(),
        }
    }

    /// Belief after `step`, written into `out`.
    fn apply(&self, parent: &[f64], step: Step, hears: bool, out: &mut [f64]) {
        let n_az = self.grid.num_azimuth_bins;
        match step {
            Step::Same => out.copy_from_slice(parent),
            Step::Forward => self.forward.apply_linear_into(parent, out),
            Step::Turn { action, old_col, col, sighted } => {
                let s = self.shift(action);
                for (dst, src) in out.chunks_exact_mut(n_az).zip(parent.chunks_exact(n_az)) {
                    dst[..n_az - s].copy_from_slice(&src[s..]);
                    dst[n_az - s..].copy_from_slice(&src[..s]);
                }
                // the cue heard at the new heading replaces the one heard before
                let new_audio = &self.audio[col * n_az..(col + 1) * n_az];
                let old_audio = &self.audio[old_col * n_az..(old_col + 1) * n_az];
                let mut factor = [1.0; 360];
                for j in 0..n_az {
                    let before = (j + s) % n_az;
                    if hears {
                        factor[j] = (new_audio[j] - old_audio[before]).clamp(-MAX_LOG_RATIO, MAX_LOG_RATIO).exp();
                    }
                    if self.in_view[j] && !self.in_view[before] {
                        factor[j] *= self.cleared;
                    }
                }
                for row in out.chunks_exact_mut(n_az) {
                    for (v, f) in row.iter_mut().zip(&factor) {
                        *v *= f;
                    }
                }
                if let Some(cell) = sighted {
                    // the sighted car stays unknown behind, everything before it is seen empty
                    let (row, c) = self.grid.split(cell);
                    out[cell] *= self.sighted / self.cleared;
                    for i in row + 1..self.grid.num_range_bins {
                        out[self.grid.index(i, c)] /= self.cleared;
                    }
                }
            }
        }
        let z: f64 = out.iter().sum();
        if z > 0.0 && z.is_finite() {
            out.iter_mut().for_each(|v| *v /= z);
        } else {
            out.copy_from_slice(parent);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Same,
    Forward,
    Turn {
        action: Action,
        old_col: usize,
        col: usize,
        sighted: Option<usize>,
    },
}

/// Belief nodes of one decision, deduplicated by parent and update.
struct Lookahead {
    beliefs: Vec<Vec<f64>>,
    /// Columns looked at so far along the path to each node.
    seen: Vec<Vec<bool>>,
    /// Whether the path to each node steps forward, after which the audio
    /// reference of the hypothesis no longer matches the belief.
    moved: Vec<bool>,
    children: Vec<((usize, Step), usize)>,
    leaf: Vec<Option<f64>>,
    commit: Vec<Option<f64>>,
}

impl Lookahead {
    fn child(&mut self, model: &PlannerModel, parent: usize, step: Step) -> usize {
        if step == Step::Same {
            return parent;
        }
        if let Some(&(_, id)) = self.children.iter().find(|(k, _)| *k == (parent, step)) {
            return id;
        }
        let mut out = vec![0.0; self.beliefs[parent].len()];
        let moved = self.moved[parent] || step == Step::Forward;
        model.apply(&self.beliefs[parent], step, !self.moved[parent], &mut out);
        let seen = model.look(&self.seen[parent], step);
        let id = self.push(out, seen, moved);
        self.children.push(((parent, step), id));
        id
    }

    fn push(&mut self, belief: Vec<f64>, seen: Vec<bool>, moved: bool) -> usize {
        self.beliefs.push(belief);
        self.moved.push(moved);
        self.seen.push(seen);
        self.leaf.push(None);
        self.commit.push(None);
        self.beliefs.len() - 1
    }

    fn leaf(&mut self, model: &PlannerModel, node: usize) -> f64 {
        *self.leaf[node].get_or_insert_with(|| model.leaf_value(&self.beliefs[node], &self.seen[node]))
    }

    fn commit(&mut self, model: &PlannerModel, node: usize) -> f64 {
        *self.commit[node].get_or_insert_with(|| model.commit_value(model.hit_mass(&self.beliefs[node])))
    }
}

/// A sample's current belief node and hypothesis.
type Track = (usize, Hypothesis);

impl PlannerModel {
    /// Value of `action` for samples that share an observation history.
    /// Samples that would see different outcomes are split so the next choice
    /// may depend on what was observed.
    fn action_value(&self, work: &mut Lookahead, members: &[Track], action: Action, depth: u32, risk: f64) -> f64 {
        let mut seen = Vec::new();
        let mut unseen = Vec::new();
        for &(node, hyp) in members {
            let (h, step) = self.transition(hyp, action, &work.seen[node]);
            let child = work.child(self, node, step);
            match step {
                Step::Turn { sighted: Some(_), .. } => seen.push((child, h)),
                _ => unseen.push((child, h)),
            }
        }
        let mut total = 0.0;
        for group in [seen, unseen] {
            if group.is_empty() {
                continue;
            }
            let v = if depth == 1 {
                group.iter().map(|&(n, _)| work.leaf(self, n)).sum::<f64>() / group.len() as f64
            } else {
                self.group_value(work, &group, depth - 1, risk)
            };
            total += v * group.len() as f64;
        }
        let r = &self.reward;
        let future = r.gamma * total / members.len() as f64;
        let base = -r.timestep_penalty - r.action_cost(action);
        if action == Action::MoveForward {
            base + (1.0 - risk) * future - risk * r.collision_penalty
        } else {
            base + future
        }
    }

    fn group_value(&self, work: &mut Lookahead, members: &[Track], depth: u32, risk: f64) -> f64 {
        let commit = members.iter().map(|&(n, _)| work.commit(self, n)).sum::<f64>() / members.len() as f64;
        MOVES
            .iter()
            .map(|&a| self.action_value(work, members, a, depth, risk))
            .fold(commit, f64::max)
    }
}

/// Lookahead over sampled target hypotheses with a commit-or-sweep leaf value.
#[derive(Debug, Clone)]
pub struct GreedyPlanner {
    model: Arc<PlannerModel>,
    cfg: PlannerConfig,
    memory: ViewMemory,
}

/// Planning columns already looked at this episode, in the frame of the
/// decision at `step`.
#[derive(Debug, Clone, Default)]
struct ViewMemory {
    seen: Vec<bool>,
    step: Option<u32>,
}

type ModelCache = Mutex<Vec<((EnvConfig, PlannerConfig), Arc<PlannerModel>)>>;

impl GreedyPlanner {
    /// Tables are built once per configuration and shared afterwards.
    pub fn new(env: &EnvConfig, cfg: &PlannerConfig) -> Result<Self> {
        if env.grid.num_azimuth_bins > 360 || cfg.azimuth_bins > 360 {
            return Err(Error::InvalidConfig("planner supports at most 360 azimuth bins".into()));
        }
        static CACHE: OnceLock<ModelCache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (*env, *cfg);
        let found = cache
            .lock()
            .expect("planner cache poisoned")
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, m)| m.clone());
        let model = match found {
            Some(m) => m,
            None => {
                let m = Arc::new(PlannerModel::new(env, cfg)?);
                cache.lock().expect("planner cache poisoned").push((key, m.clone()));
                m
            }
        };
        Ok(Self {
            model,
            cfg: *cfg,
            memory: ViewMemory::default(),
        })
    }

    /// Same tables with rewards and costs scaled by `k`.
    pub fn rescaled(&self, k: f64) -> Self {
        let mut model = (*self.model).clone();
        model.reward = model.reward.scaled(k);
        Self {
            model: Arc::new(model),
            cfg: self.cfg,
            memory: ViewMemory::default(),
        }
    }

    /// Updates the view memory with the step just taken and the current view.
    pub fn remember(&mut self, state: &CognitiveState) {
        let m = &*self.model;
        let t = state.elapsed_steps;
        let continues = t > 0 && self.memory.step == Some(t - 1) && !self.memory.seen.is_empty();
        let seen = match (continues, state.last_actions[state.last_actions.len() - 1]) {
            (true, Some(a)) if a.is_turn() => {
                let n_az = m.grid.num_azimuth_bins;
                let s = m.shift(a);
                (0..n_az).map(|j| self.memory.seen[(j + s) % n_az] || m.in_view[j]).collect()
            }
            (true, _) => self.memory.seen.clone(),
            (false, _) => m.in_view.clone(),
        };
        self.memory = ViewMemory { seen, step: Some(t) };
    }

    fn seen_for(&self, state: &CognitiveState) -> Vec<bool> {
        if self.memory.step == Some(state.elapsed_steps) {
            self.memory.seen.clone()
        } else {
            self.model.in_view.clone()
        }
    }

    /// Expected value of every action, in [`Action::ALL`] order.
    pub fn action_values(&self, state: &CognitiveState, rng: &mut ChaCha8Rng) -> [f64; 5] {
        let m = &*self.model;
        let root = m.coarse(state);
        let cells = sample_cells(&root, self.cfg.samples, rng);
        let seen = self.seen_for(state);
        let mut work = Lookahead {
            beliefs: Vec::new(),
            seen: Vec::new(),
            moved: Vec::new(),
            children: Vec::new(),
            leaf: Vec::new(),
            commit: Vec::new(),
        };
        let tracks: Vec<Track> = cells
            .iter()
            .map(|&cell| {
                let at = m.grid.cell_center(cell);
                let hidden = seen[cell % m.grid.num_azimuth_bins];
                (0, Hypothesis { at, hidden })
            })
            .collect();
        let root_node = work.push(root, seen, false);
        let tracks: Vec<Track> = tracks.into_iter().map(|(_, h)| (root_node, h)).collect();
        let mut values = [0.0; 5];
        for (k, &a) in Action::ALL.iter().enumerate() {
            values[k] = match a {
                Action::Commit => work.commit(m, root_node),
                _ => m.action_value(&mut work, &tracks, a, self.cfg.horizon, self.cfg.forward_risk),
            };
        }
        values
    }

    pub fn choose(&self, state: &CognitiveState, rng: &mut ChaCha8Rng) -> Action {
        let values = self.action_values(state, rng);
        let value_of = |a: Action| values[Action::ALL.iter().position(|&x| x == a).expect("listed")];
        let mut best = TIE_ORDER[0];
        for &a in &TIE_ORDER[1..] {
            if value_of(a) > value_of(best) {
                best = a;
            }
        }
        best
    }
}

impl Policy for GreedyPlanner {
    fn decide(&mut self, state: &CognitiveState, rng: &mut ChaCha8Rng) -> Action {
        self.remember(state);
        self.choose(state, rng)
    }
}

/// Draws `n` cell indices from a normalized linear distribution.
fn sample_cells(p: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for v in p {
        acc += v;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(p.len() - 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefMap;
    use rand::SeedableRng;

    fn state_with(posterior: BeliefMap) -> CognitiveState {
        CognitiveState::new(posterior, 0)
    }

    #[test]
    fn heuristic_examples() {
        let g = PolarGrid::default();
        let h = HeuristicPolicy::default();
        let at = |r: f64, t: f64| state_with(BeliefMap::point_mass(g, g.cell_of(&EgoPolar::new(r, t)).unwrap()));
        assert_eq!(h.choose(&at(5.0, 120.0)), Action::TurnRight);
        assert_eq!(h.choose(&at(5.0, -120.0)), Action::TurnLeft);
        assert_eq!(h.choose(&at(6.0, 5.0)), Action::MoveForward);
        assert_eq!(h.choose(&at(1.0, 0.0)), Action::Commit);
    }

    #[test]
    fn random_frequencies() {
        let p = RandomPolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let a = p.draw(&mut rng);
            counts[Action::ALL.iter().position(|&x| x == a).unwrap()] += 1;
        }
        let probs = [0.2375, 0.2375, 0.2375, 0.2375, 0.05];
        for (c, q) in counts.iter().zip(probs) {
            let sd = (n as f64 * q * (1.0 - q)).sqrt();
            assert!((*c as f64 - n as f64 * q).abs() < 3.0 * sd, "{counts:?}");
        }
        let a: Vec<_> = (0..20).map(|_| p.draw(&mut ChaCha8Rng::seed_from_u64(8))).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn one_hot_commits() {
        let env = EnvConfig::default();
        let planner = GreedyPlanner::new(&env, &PlannerConfig::default()).unwrap();
        let g = env.grid;
        let s = state_with(BeliefMap::point_mass(g, g.cell_of(&EgoPolar::new(7.0, 140.0)).unwrap()));
        assert_eq!(planner.choose(&s, &mut ChaCha8Rng::seed_from_u64(1)), Action::Commit);
    }

    #[test]
    fn front_back_ambiguity_prefers_turning() {
        let env = EnvConfig::default();
        let planner = GreedyPlanner::new(&env, &PlannerConfig::default()).unwrap();
        let g = env.grid;
        let mut v = vec![0.0; g.num_cells()];
        for t in [30.0, 150.0] {
            v[g.cell_of(&EgoPolar::new(6.0, t)).unwrap()] = 0.5;
        }
        let s = state_with(BeliefMap::from_values(g, &v).unwrap().normalized());
        let a = planner.choose(&s, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(a.is_turn(), "{a:?}");
    }

    #[test]
    fn dearer_actions_commit_sooner() {
        use crate::environment::Environment;
        use crate::scene::{generate_map, AngleClass, Condition, SlotLayout};

        let cheap = EnvConfig::default();
        let mut dear = cheap;
        for c in [
            &mut dear.reward.timestep_penalty,
            &mut dear.reward.forward_penalty,
            &mut dear.reward.turn_penalty,
            &mut dear.reward.collision_penalty,
        ] {
            *c *= 100.0;
        }
        let uniform = state_with(BeliefMap::uniform(cheap.grid));
        let choose = |env: &EnvConfig| GreedyPlanner::new(env, &PlannerConfig::default()).unwrap().choose(&uniform, &mut ChaCha8Rng::seed_from_u64(5));
        assert_ne!(choose(&cheap), Action::Commit);
        assert_eq!(choose(&dear), Action::Commit);

        // the same ordering over whole episodes
        let steps_to_commit = |env: EnvConfig, seed: u64| {
            let map = generate_map(Condition::new(AngleClass::Back, 5, 2), &SlotLayout::default(), seed).unwrap();
            let mut e = Environment::new(env, std::sync::Arc::new(map), seed).unwrap();
            let mut p = GreedyPlanner::new(&env, &PlannerConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            while !e.is_done() {
                let a = p.decide(e.state(), &mut rng);
                e.step(a).unwrap();
            }
            e.log().steps.len()
        };
        let (mut a, mut b) = (0, 0);
        for seed in 0..4 {
            a += steps_to_commit(cheap, seed);
            b += steps_to_commit(dear, seed);
        }
        assert!(b < a, "dear {b} vs cheap {a}");
    }

    #[test]
    fn decisions_are_pure() {
        let env = EnvConfig::default();
        let planner = GreedyPlanner::new(&env, &PlannerConfig::default()).unwrap();
        let s = state_with(BeliefMap::uniform(env.grid));
        let a = planner.action_values(&s, &mut ChaCha8Rng::seed_from_u64(4));
        let b = planner.action_values(&s, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
