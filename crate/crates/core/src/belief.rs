//! Posterior maintenance over the egocentric polar grid.
//!
//! Maps are stored as natural-log values, row-major with one row per range
//! bin and azimuth ascending from -180 degrees. Every public operation that
//! yields a belief returns it normalized.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EgoPolar, PolarGrid};

/// Smallest linear value kept when converting back to log space.
const TINY: f64 = 1e-300;

/// Circular resultant length below which the mean direction is undefined.
const RESULTANT_FLOOR: f64 = 1e-12;

/// A (possibly unnormalized) log-valued map over a [`PolarGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    grid: PolarGrid,
    log_values: Vec<f64>,
}

impl BeliefMap {
    /// Uniform normalized belief.
    pub fn uniform(grid: PolarGrid) -> Self {
        let n = grid.num_cells();
        Self {
            grid,
            log_values: vec![-(n as f64).ln(); n],
        }
    }

    pub fn from_log_values(grid: PolarGrid, log_values: Vec<f64>) -> Result<Self> {
        if log_values.len() != grid.num_cells() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                log_values.len(),
                grid.num_cells()
            )));
        }
        Ok(Self { grid, log_values })
    }

    /// Builds a map from linear values; zeros are clamped to a tiny positive value.
    pub fn from_values(grid: PolarGrid, values: &[f64]) -> Result<Self> {
        Self::from_log_values(grid, values.iter().map(|v| v.max(TINY).ln()).collect())
    }

    /// Normalized point mass on one cell (other cells at the log floor).
    pub fn point_mass(grid: PolarGrid, cell: usize) -> Self {
        let mut values = vec![0.0; grid.num_cells()];
        values[cell] = 1.0;
        Self::from_values(grid, &values).expect("sizes match").normalized()
    }

    #[inline]
    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    #[inline]
    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn into_log_values(self) -> Vec<f64> {
        self.log_values
    }

    pub fn log_at(&self, range_bin: usize, azimuth_bin: usize) -> f64 {
        self.log_values[self.grid.index(range_bin, azimuth_bin)]
    }

    /// Linear values `exp(log)`.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }

    /// `log(sum(exp(values)))`.
    pub fn log_total(&self) -> f64 {
        log_sum_exp(&self.log_values)
    }

    pub fn total_mass(&self) -> f64 {
        self.log_values.iter().map(|l| l.exp()).sum()
    }

    pub fn normalize(&mut self) {
        let z = self.log_total();
        for l in &mut self.log_values {
            *l -= z;
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// Azimuth rotation `out(theta) = self(theta + steps * resolution)`.
    pub fn rotated(&self, steps: i64) -> Self {
        let n = self.grid.num_azimuth_bins;
        let s = steps.rem_euclid(n as i64) as usize;
        let mut out = Vec::with_capacity(self.log_values.len());
        for row in self.log_values.chunks_exact(n) {
            out.extend_from_slice(&row[s..]);
            out.extend_from_slice(&row[..s]);
        }
        Self {
            grid: self.grid,
            log_values: out,
        }
    }

    /// Azimuth marginal of the normalized belief.
    pub fn azimuth_marginal(&self) -> Vec<f64> {
        let n = self.grid.num_azimuth_bins;
        let z = self.log_total();
        let mut m = vec![0.0; n];
        for row in self.log_values.chunks_exact(n) {
            for (acc, l) in m.iter_mut().zip(row) {
                *acc += (l - z).exp();
            }
        }
        m
    }

    /// Range marginal of the normalized belief.
    pub fn range_marginal(&self) -> Vec<f64> {
        let z = self.log_total();
        self.log_values
            .chunks_exact(self.grid.num_azimuth_bins)
            .map(|row| row.iter().map(|l| (l - z).exp()).sum())
            .collect()
    }

    /// Index of the maximum cell; ties go to the lowest range bin, then the
    /// lowest azimuth bin.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.log_values.iter().enumerate() {
            if l > self.log_values[best] {
                best = i;
            }
        }
        best
    }

    fn check_grid(&self, other: &BeliefMap) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefConfig {
    /// Weight of new evidence in the leaky log-space update.
    pub alpha: f64,
    /// Visual share of the log-linear audiovisual fusion.
    pub visual_weight: f64,
}

impl Default for BeliefConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            visual_weight: 0.7,
        }
    }
}

impl BeliefConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.visual_weight) {
            return Err(Error::InvalidConfig(format!(
                "visual weight must be in [0, 1], got {}",
                self.visual_weight
            )));
        }
        Ok(())
    }
}

/// Joint log-likelihood `w * log L_visual + (1 - w) * log L_audio`.
pub fn fuse(audio: &BeliefMap, visual: &BeliefMap, cfg: &BeliefConfig) -> Result<BeliefMap> {
    audio.check_grid(visual)?;
    let w = cfg.visual_weight;
    let log_values = audio
        .log_values
        .iter()
        .zip(&visual.log_values)
        .map(|(a, v)| w * v + (1.0 - w) * a)
        .collect();
    Ok(BeliefMap {
        grid: audio.grid,
        log_values,
    })
}

/// Leaky update `log b_t = (1 - alpha) log b_{t-1} + alpha log L_joint`, normalized.
pub fn leaky_update(prior: &BeliefMap, joint_log: &BeliefMap, cfg: &BeliefConfig) -> Result<BeliefMap> {
    prior.check_grid(joint_log)?;
    let a = cfg.alpha;
    let log_values = prior
        .log_values
        .iter()
        .zip(&joint_log.log_values)
        .map(|(p, j)| (1.0 - a) * p + a * j)
        .collect();
    Ok(BeliefMap {
        grid: prior.grid,
        log_values,
    }
    .normalized())
}

/// Egocentric frame change caused by one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    /// Heading change in degrees, positive to the right.
    Turn(f64),
    /// Translation along the heading in metres.
    Forward(f64),
    Hold,
}

/// Moves a normalized map into the agent's frame after `motion`.
pub fn transport(belief: &BeliefMap, motion: &Motion) -> Result<BeliefMap> {
    match *motion {
        Motion::Hold => Ok(belief.clone()),
        Motion::Turn(degrees) => {
            let steps = belief.grid.azimuth_steps(degrees)?;
            Ok(belief.rotated(steps))
        }
        Motion::Forward(distance) => {
            let kernel = ForwardKernel::shared(&belief.grid, distance);
            Ok(kernel.apply(belief))
        }
    }
}

/// Sparse linear operator re-projecting a map after a forward translation.
///
/// Each source cell centre is moved into the new frame and its mass is split
/// bilinearly over the four surrounding bin centres. Mass landing nearer than
/// half a range step is dropped, mass beyond the last range bin is clamped
/// into it. Destination cells that receive nothing are filled by bilinear
/// interpolation of the source map at the pre-image of their centre, clamped
/// at the grid edges. The result is renormalized.
#[derive(Debug)]
pub struct ForwardKernel {
    grid: PolarGrid,
    distance: f64,
    /// `(destination, source, weight)` triples, sorted by destination.
    push: Vec<(u32, u32, f64)>,
    /// Bilinear pull stencils for uncovered destinations.
    fill: Vec<(u32, [(u32, f64); 4])>,
    /// Destination cells whose pre-image lies outside the old field of view
    /// of a given half-angle is computed on demand from this table.
    source_of: Vec<EgoPolar>,
}

type KernelKey = (usize, usize, u64, u64, u64);

impl ForwardKernel {
    pub fn new(grid: &PolarGrid, distance: f64) -> Self {
        Self::build(grid, distance, true)
    }

    /// Variant that lets mass carried past the far edge leave the grid and
    /// leaves uncovered cells empty.
    pub fn leaky(grid: &PolarGrid, distance: f64) -> Self {
        Self::build(grid, distance, false)
    }

    fn build(grid: &PolarGrid, distance: f64, clamp_far: bool) -> Self {
        let n_az = grid.num_azimuth_bins;
        let n_r = grid.num_range_bins;
        let mut push = Vec::with_capacity(grid.num_cells() * 4);
        for src in 0..grid.num_cells() {
            let c = grid.cell_center(src);
            let (f, l) = c.to_forward_right();
            let moved = EgoPolar::from_forward_right(f - distance, l);
            if moved.r < 0.5 * grid.range_resolution {
                continue;
            }
            if !clamp_far && moved.r > grid.max_range() + 0.5 * grid.range_resolution {
                continue;
            }
            for (dst, w) in bilinear(grid, &moved) {
                if w > 0.0 {
                    push.push((dst as u32, src as u32, w));
                }
            }
        }
        push.sort_by_key(|&(d, s, _)| (d, s));

        let mut covered = vec![false; grid.num_cells()];
        for &(d, _, _) in &push {
            covered[d as usize] = true;
        }
        let mut source_of = Vec::with_capacity(grid.num_cells());
        let mut fill = Vec::new();
        for dst in 0..grid.num_cells() {
            let c = grid.cell_center(dst);
            let (f, l) = c.to_forward_right();
            let pre = EgoPolar::from_forward_right(f + distance, l);
            source_of.push(pre);
            if clamp_far && !covered[dst] {
                let mut stencil = [(0u32, 0.0); 4];
                for (k, (s, w)) in bilinear(grid, &pre).into_iter().enumerate() {
                    stencil[k] = (s as u32, w);
                }
                fill.push((dst as u32, stencil));
            }
        }
        debug_assert!(n_r > 0 && n_az > 0);
        Self {
            grid: *grid,
            distance,
            push,
            fill,
            source_of,
        }
    }

    /// Process-wide cache keyed by grid and distance.
    pub fn shared(grid: &PolarGrid, distance: f64) -> Arc<ForwardKernel> {
        static CACHE: OnceLock<Mutex<HashMap<KernelKey, Arc<ForwardKernel>>>> = OnceLock::new();
        let key = (
            grid.num_range_bins,
            grid.num_azimuth_bins,
            grid.range_resolution.to_bits(),
            grid.azimuth_resolution.to_bits(),
            distance.to_bits(),
        );
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("kernel cache poisoned");
        guard
            .entry(key)
            .or_insert_with(|| Arc::new(ForwardKernel::new(grid, distance)))
            .clone()
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Pre-image (in the old frame) of each destination cell centre.
    pub fn source_of(&self) -> &[EgoPolar] {
        &self.source_of
    }

    /// Applies the kernel to linear values without normalizing.
    pub fn apply_linear(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.num_cells()];
        self.apply_linear_into(values, &mut out);
        out
    }

    /// [`Self::apply_linear`] writing into a caller buffer of the grid's size.
    pub fn apply_linear_into(&self, values: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(d, s, w) in &self.push {
            out[d as usize] += w * values[s as usize];
        }
        for (d, stencil) in &self.fill {
            out[*d as usize] = stencil.iter().map(|&(s, w)| w * values[s as usize]).sum();
        }
    }

    /// Mass retained by the push step alone, for a normalized input.
    pub fn pushed_mass(&self, values: &[f64]) -> f64 {
        self.push.iter().map(|&(_, s, w)| w * values[s as usize]).sum()
    }

    pub fn apply(&self, belief: &BeliefMap) -> BeliefMap {
        let max = belief
            .log_values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let linear: Vec<f64> = belief.log_values.iter().map(|l| (l - max).exp()).collect();
        let moved = self.apply_linear(&linear);
        BeliefMap::from_values(self.grid, &moved)
            .expect("kernel preserves grid size")
            .normalized()
    }
}

/// Bilinear weights of a continuous polar point over bin centres, clamped
/// at the range edges and wrapped in azimuth.
pub(crate) fn bilinear(grid: &PolarGrid, p: &EgoPolar) -> [(usize, f64); 4] {
    let n_r = grid.num_range_bins;
    let n_az = grid.num_azimuth_bins;
    let u = p.r / grid.range_resolution - 1.0;
    let (i0, fu) = if u <= 0.0 {
        (0, 0.0)
    } else if u >= (n_r - 1) as f64 {
        (n_r - 1, 0.0)
    } else {
        let i0 = u.floor();
        (i0 as usize, u - i0)
    };
    let i1 = (i0 + 1).min(n_r - 1);
    let v = (p.theta + 180.0) / grid.azimuth_resolution;
    let v0 = v.floor();
    let fv = v - v0;
    let j0 = (v0 as i64).rem_euclid(n_az as i64) as usize;
    let j1 = (j0 + 1) % n_az;
    [
        (grid.index(i0, j0), (1.0 - fu) * (1.0 - fv)),
        (grid.index(i0, j1), (1.0 - fu) * fv),
        (grid.index(i1, j0), fu * (1.0 - fv)),
        (grid.index(i1, j1), fu * fv),
    ]
}

/// Policy-facing summary statistics of a belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefSummary {
    /// Centre of the maximum a posteriori cell.
    pub map_estimate: EgoPolar,
    pub map_cell: usize,
    /// Circular standard deviation of the azimuth marginal, degrees.
    pub theta_uncertainty: f64,
    /// Standard deviation of the range marginal, metres.
    pub r_uncertainty: f64,
    /// Shannon entropy in nats.
    pub entropy: f64,
    /// Circular mean of the azimuth marginal, `None` when the resultant vanishes.
    pub theta_mean: Option<f64>,
}

pub fn summarize(belief: &BeliefMap) -> BeliefSummary {
    let grid = belief.grid;
    let z = belief.log_total();
    let n_az = grid.num_azimuth_bins;
    let mut az = vec![0.0; n_az];
    let mut entropy = 0.0;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (i, row) in belief.log_values.chunks_exact(n_az).enumerate() {
        let r = grid.range_center(i);
        let mut row_mass = 0.0;
        for (acc, &l) in az.iter_mut().zip(row) {
            let lp = l - z;
            let p = lp.exp();
            if p > 0.0 {
                entropy -= p * lp;
            }
            *acc += p;
            row_mass += p;
        }
        m1 += row_mass * r;
        m2 += row_mass * r * r;
    }
    let (mut c, mut s) = (0.0, 0.0);
    for (j, p) in az.iter().enumerate() {
        let t = grid.azimuth_center(j).to_radians();
        c += p * t.cos();
        s += p * t.sin();
    }
    let resultant = c.hypot(s).min(1.0);
    let theta_uncertainty = (-2.0 * resultant.max(RESULTANT_FLOOR).ln()).max(0.0).sqrt().to_degrees();
    let theta_mean = (resultant >= RESULTANT_FLOOR).then(|| s.atan2(c).to_degrees());
    let map_cell = belief.argmax();
    BeliefSummary {
        map_estimate: grid.cell_center(map_cell),
        map_cell,
        theta_uncertainty,
        r_uncertainty: (m2 - m1 * m1).max(0.0).sqrt(),
        entropy: entropy.max(0.0),
        theta_mean,
    }
}

/// Uniform prior over the grid.
pub fn init_uniform(grid: PolarGrid) -> BeliefMap {
    BeliefMap::uniform(grid)
}
