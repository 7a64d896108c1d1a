//! Visual evidence: nearest-object visibility, line-of-sight discounting and
//! an egocentric moving average of past evidence.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::geometry::{PolarGrid, Pose};
use crate::scene::{Color, SceneMap};

/// The accumulated visual likelihood is an ordinary normalized map.
pub type VisualLikelihood = BeliefMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualConfig {
    /// Full horizontal field of view, degrees.
    pub fov: f64,
    /// Objects closer than this in bearing occlude one another.
    pub merge_bearing: f64,
    /// Weight of new evidence in the moving average.
    pub blend: f64,
    /// Multiplicative discount `1 - decay` applied to cells seen empty.
    pub exclusion_decay: f64,
    pub visible_weight: f64,
    pub match_similarity: f64,
    pub mismatch_similarity: f64,
    /// Per-cell evidence floor before normalization.
    pub floor: f64,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self {
            fov: 110.0,
            merge_bearing: 5.0,
            blend: 0.7,
            exclusion_decay: 0.5,
            visible_weight: 5.0,
            match_similarity: 1.0,
            mismatch_similarity: 0.1,
            floor: 1e-6,
        }
    }
}

impl VisualConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.fov > 0.0 && self.fov <= 360.0) {
            return bad(format!("fov must be in (0, 360], got {}", self.fov));
        }
        if !(self.merge_bearing >= 0.0) {
            return bad(format!("merge_bearing must be non-negative, got {}", self.merge_bearing));
        }
        if !(self.blend > 0.0 && self.blend <= 1.0) {
            return bad(format!("blend must be in (0, 1], got {}", self.blend));
        }
        if !(0.0..1.0).contains(&self.exclusion_decay) {
            return bad(format!("exclusion_decay must be in [0, 1), got {}", self.exclusion_decay));
        }
        for (name, v) in [
            ("visible_weight", self.visible_weight),
            ("match_similarity", self.match_similarity),
            ("mismatch_similarity", self.mismatch_similarity),
            ("floor", self.floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.match_similarity > 1.0 || self.mismatch_similarity > 1.0 {
            return bad("similarities must not exceed 1".into());
        }
        Ok(())
    }

    pub fn similarity(&self, color: Color, target: Color) -> f64 {
        if color == target {
            self.match_similarity
        } else {
            self.mismatch_similarity
        }
    }
}

/// Instantaneous evidence plus the mask of cells that were discounted.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualEvidence {
    pub map: BeliefMap,
    pub discounted: Vec<bool>,
}

/// Normalized instantaneous evidence map for one viewpoint.
pub fn evidence_map(
    map: &SceneMap,
    pose: &Pose,
    target_color: Color,
    grid: &PolarGrid,
    cfg: &VisualConfig,
) -> BeliefMap {
    evidence(map, pose, target_color, grid, cfg).map
}

pub fn evidence(
    map: &SceneMap,
    pose: &Pose,
    target_color: Color,
    grid: &PolarGrid,
    cfg: &VisualConfig,
) -> VisualEvidence {
    let n = grid.num_cells();
    let mut values = vec![cfg.floor; n];

    let visible = map.visible_set(pose, cfg.fov, cfg.merge_bearing);
    if !visible.is_empty() {
        let share = cfg.visible_weight / visible.len() as f64;
        for v in &visible {
            if let Some(cell) = grid.cell_of(&v.ego) {
                let obj = &map.objects[v.index];
                values[cell] += share * cfg.similarity(obj.color, target_color);
            }
        }
    }

    let mut discounted = vec![false; n];
    for j in 0..grid.num_azimuth_bins {
        let theta = grid.azimuth_center(j);
        if !PolarGrid::in_fov(theta, cfg.fov) {
            continue;
        }
        let ray = map.ray_march(pose, theta, grid);
        for &i in &ray.pre_occluder {
            discounted[grid.index(i, j)] = true;
        }
        if let Some(hit) = ray.first_surface {
            if map.objects[hit.index].color != target_color {
                // a surface centred beyond the grid discounts the whole ray
                let last = grid.range_bin(hit.center_range).unwrap_or(grid.num_range_bins - 1);
                for i in 0..=last {
                    discounted[grid.index(i, j)] = true;
                }
            }
        }
    }
    let keep = 1.0 - cfg.exclusion_decay;
    for (v, d) in values.iter_mut().zip(&discounted) {
        if *d {
            *v *= keep;
        }
    }
    VisualEvidence {
        map: BeliefMap::from_values(*grid, &values)
            .expect("evidence spans the grid")
            .normalized(),
        discounted,
    }
}

/// `out(theta) = prev(theta + delta)`: the previous map seen from a heading
/// `delta` degrees further to the right.
pub fn rotate_shift(prev: &VisualLikelihood, delta: f64) -> Result<VisualLikelihood> {
    let steps = prev.grid().azimuth_steps(delta)?;
    Ok(prev.rotated(steps))
}

/// Moving average `(1 - blend) * rotated prev + blend * evidence`, normalized.
pub fn accumulate(
    prev: &VisualLikelihood,
    delta: f64,
    evidence: &BeliefMap,
    cfg: &VisualConfig,
) -> Result<VisualLikelihood> {
    if prev.grid() != evidence.grid() {
        return Err(Error::GridMismatch("visual accumulation".into()));
    }
    let shifted = rotate_shift(prev, delta)?;
    Ok(blend_linear(&shifted, evidence, cfg.blend))
}

pub(crate) fn blend_linear(old: &BeliefMap, new: &BeliefMap, weight: f64) -> BeliefMap {
    let zo = old.log_total();
    let zn = new.log_total();
    let values: Vec<f64> = old
        .log_values()
        .iter()
        .zip(new.log_values())
        .map(|(o, e)| (1.0 - weight) * (o - zo).exp() + weight * (e - zn).exp())
        .collect();
    BeliefMap::from_values(*old.grid(), &values)
        .expect("same grid")
        .normalized()
}

/// Plain-text dump of a map's log values.
///
/// One line per range bin (nearest first), azimuth ascending from -180.
/// Values use the shortest round-trip representation so the dump is exact.
pub fn matrix_dump(map: &BeliefMap) -> String {
    let g = map.grid();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# ln-probability rows={} cols={} range_res={} azimuth_res={}",
        g.num_range_bins, g.num_azimuth_bins, g.range_resolution, g.azimuth_resolution
    );
    for row in map.log_values().chunks_exact(g.num_azimuth_bins) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses the output of [`matrix_dump`].
pub fn parse_matrix_dump(text: &str, grid: PolarGrid) -> Result<BeliefMap> {
    let values = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .flat_map(|l| l.split_whitespace())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad matrix value {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    BeliefMap::from_log_values(grid, values)
}

/// Binary grayscale image, one pixel per cell, nearest range on top, scaled to the map maximum.
pub fn heatmap_pgm(map: &BeliefMap) -> Vec<u8> {
    let g = map.grid();
    let values = map.values();
    let max = values.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P5\n{} {}\n255\n", g.num_azimuth_bins, g.num_range_bins).into_bytes();
    out.extend(values.iter().map(|v| {
        if max > 0.0 {
            (v / max * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn write_heatmap(map: &BeliefMap, path: &Path) -> Result<()> {
    std::fs::write(path, heatmap_pgm(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{EgoPolar, WorldPoint};
    use crate::scene::SceneObject;

    fn object(id: u32, x: f64, y: f64, color: Color, is_target: bool) -> SceneObject {
        SceneObject {
            id,
            position: WorldPoint::new(x, y),
            color,
            is_target,
            footprint_radius: 0.5,
        }
    }

    fn scene(objects: Vec<SceneObject>) -> SceneMap {
        SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 2.0, 0.0), 0).unwrap()
    }

    #[test]
    fn empty_view_discounts_only_fov() {
        let grid = PolarGrid::default();
        let cfg = VisualConfig::default();
        let m = scene(vec![object(0, 25.0, 12.0, Color::Blue, true)]);
        let pose = Pose::new(10.0, 2.0, 180.0);
        let ev = evidence(&m, &pose, Color::Blue, &grid, &cfg);
        let v = ev.map.values();
        let inside = v[grid.index(3, grid.azimuth_bin(0.0))];
        let outside = v[grid.index(3, grid.azimuth_bin(90.0))];
        assert!((inside / outside - 0.5).abs() < 1e-12);
        assert!((ev.map.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_target_is_argmax() {
        let grid = PolarGrid::default();
        let cfg = VisualConfig::default();
        // target at r=4, 10 degrees right of north
        let p = crate::geometry::ego_to_world(&Pose::new(10.0, 2.0, 0.0), &EgoPolar::new(4.0, 10.0));
        let m = scene(vec![object(0, p.x, p.y, Color::Blue, true)]);
        let e = evidence_map(&m, &Pose::new(10.0, 2.0, 0.0), Color::Blue, &grid, &cfg);
        let best = grid.cell_center(e.argmax());
        assert_eq!(best.r, 4.0);
        assert_eq!(best.theta, 10.0);
    }

    #[test]
    fn mismatching_surface_is_demoted() {
        let grid = PolarGrid::default();
        let cfg = VisualConfig::default();
        let m = scene(vec![
            object(0, 10.0, 6.0, Color::White, false),
            object(1, 25.0, 12.0, Color::Blue, true),
        ]);
        let pose = Pose::new(10.0, 2.0, 0.0);
        let ev = evidence(&m, &pose, Color::Blue, &grid, &cfg);
        let j = grid.azimuth_bin(0.0);
        // cells in front of the car and the car's own cell are discounted
        for i in 0..=3 {
            assert!(ev.discounted[grid.index(i, j)]);
        }
        assert!(!ev.discounted[grid.index(4, j)]);
        let v = ev.map.values();
        let behind = v[grid.index(4, j)];
        let front = v[grid.index(1, j)];
        assert!((front / behind - 0.5).abs() < 1e-12);
        let car = v[grid.index(3, j)];
        let expect = (1e-6 + 5.0 * 0.1) * 0.5 / 1e-6;
        assert!((car / behind - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn rotation_is_exact_permutation() {
        let grid = PolarGrid::new(3, 8, 1.0).unwrap();
        let m = BeliefMap::from_values(grid, &(1..=24).map(|k| k as f64).collect::<Vec<_>>())
            .unwrap()
            .normalized();
        assert_eq!(rotate_shift(&m, 0.0).unwrap(), m);
        assert_eq!(rotate_shift(&m, 360.0).unwrap(), m);
        let back = rotate_shift(&rotate_shift(&m, 45.0).unwrap(), -45.0).unwrap();
        assert_eq!(back, m);
        assert!(rotate_shift(&m, 10.0).is_err());
    }

    #[test]
    fn accumulation_limits_and_hand_sequence() {
        let grid = PolarGrid::new(3, 8, 1.0).unwrap();
        let cfg = VisualConfig::default();
        let e = BeliefMap::from_values(grid, &(1..=24).map(|k| (k * k) as f64).collect::<Vec<_>>())
            .unwrap()
            .normalized();
        let u = BeliefMap::uniform(grid);
        let full = accumulate(&u, 0.0, &e, &VisualConfig { blend: 1.0, ..cfg }).unwrap();
        for (a, b) in full.log_values().iter().zip(e.log_values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let fixed = accumulate(&u, 45.0, &u, &cfg).unwrap();
        for v in fixed.values() {
            assert!((v - 1.0 / 24.0).abs() < 1e-15);
        }

        // three steps against a direct evaluation
        let evs: Vec<Vec<f64>> = (0..3)
            .map(|t| (0..24).map(|c| 1.0 + ((c * 7 + t * 5) % 11) as f64).collect())
            .collect();
        let deltas = [0.0, 45.0, -90.0];
        let mut engine = u.clone();
        let mut direct = vec![1.0 / 24.0; 24];
        for t in 0..3 {
            let et = BeliefMap::from_values(grid, &evs[t]).unwrap().normalized();
            engine = accumulate(&engine, deltas[t], &et, &cfg).unwrap();
            let s = (deltas[t] / 45.0) as i64;
            let ez: f64 = evs[t].iter().sum();
            let mut next = vec![0.0; 24];
            for r in 0..3 {
                for a in 0..8 {
                    let src = r * 8 + ((a as i64 + s).rem_euclid(8)) as usize;
                    next[r * 8 + a] = 0.3 * direct[src] + 0.7 * evs[t][r * 8 + a] / ez;
                }
            }
            let z: f64 = next.iter().sum();
            direct = next.iter().map(|v| v / z).collect();
        }
        for (a, b) in engine.values().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_round_trips() {
        let grid = PolarGrid::new(3, 8, 1.0).unwrap();
        let m = BeliefMap::from_values(grid, &(1..=24).map(|k| k as f64 / 7.0).collect::<Vec<_>>())
            .unwrap()
            .normalized();
        let text = matrix_dump(&m);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_matrix_dump(&text, grid).unwrap(), m);
        let pgm = heatmap_pgm(&m);
        assert!(pgm.starts_with(b"P5\n8 3\n255\n"));
        assert_eq!(*pgm.last().unwrap(), 255);
    }
}
