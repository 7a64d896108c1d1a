//! Static parking-lot scenes: generation, persistence, visibility and collision queries.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{world_to_ego, wrap_deg, EgoPolar, PolarGrid, Pose, WorldPoint};

pub const MAP_FORMAT: &str = "avsearch-map";
pub const MAP_VERSION: u32 = 1;

pub const DEFAULT_WIDTH: f64 = 29.0;
pub const DEFAULT_DEPTH: f64 = 13.0;
pub const DEFAULT_FOOTPRINT: f64 = 0.9;

/// Maximum start-pose draws before generation gives up.
pub const START_POSE_ATTEMPTS: usize = 10_000;
/// Free space required around the start position beyond any footprint.
pub const START_CLEARANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Black,
    White,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Blue, Color::Black, Color::White];

    pub fn as_str(&self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Black => "black",
            Color::White => "white",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub position: WorldPoint,
    pub color: Color,
    pub is_target: bool,
    #[serde(default = "default_footprint")]
    pub footprint_radius: f64,
}

fn default_footprint() -> f64 {
    DEFAULT_FOOTPRINT
}

/// Initial egocentric bearing class of the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleClass {
    Front,
    Side,
    Back,
}

impl AngleClass {
    pub const ALL: [AngleClass; 3] = [AngleClass::Front, AngleClass::Side, AngleClass::Back];

    /// Classifies a bearing by magnitude: `|b| <= 55` front, `|b| <= 125` side, else back.
    pub fn classify(bearing: f64) -> AngleClass {
        let b = wrap_deg(bearing).abs();
        if b <= 55.0 {
            AngleClass::Front
        } else if b <= 125.0 {
            AngleClass::Side
        } else {
            AngleClass::Back
        }
    }

    pub fn contains(&self, bearing: f64) -> bool {
        AngleClass::classify(bearing) == *self
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AngleClass::Front => "front",
            AngleClass::Side => "side",
            AngleClass::Back => "back",
        }
    }
}

impl fmt::Display for AngleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AngleClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front" => Ok(AngleClass::Front),
            "side" => Ok(AngleClass::Side),
            "back" => Ok(AngleClass::Back),
            other => Err(Error::InvalidConfig(format!("unknown angle class {other:?}"))),
        }
    }
}

/// One cell of the ANGLE x NUM_OBJS x DISTRACTORS design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub angle: AngleClass,
    pub num_objs: usize,
    /// Non-target objects sharing the target's color.
    pub num_distractors: usize,
}

impl Condition {
    pub const NUM_OBJS_LEVELS: [usize; 3] = [5, 7, 12];
    pub const DISTRACTOR_LEVELS: [usize; 3] = [0, 2, 4];

    pub fn new(angle: AngleClass, num_objs: usize, num_distractors: usize) -> Self {
        Self {
            angle,
            num_objs,
            num_distractors,
        }
    }

    /// The 27 study conditions in a fixed order (angle, then objects, then distractors).
    pub fn study_grid() -> Vec<Condition> {
        let mut out = Vec::with_capacity(27);
        for angle in AngleClass::ALL {
            for n in Self::NUM_OBJS_LEVELS {
                for d in Self::DISTRACTOR_LEVELS {
                    out.push(Condition::new(angle, n, d));
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.angle, self.num_objs, self.num_distractors)
    }
}

/// Parking slot centres available to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLayout {
    pub width: f64,
    pub depth: f64,
    pub slots: Vec<WorldPoint>,
}

impl Default for SlotLayout {
    /// Two rows of 13 slots along the long axis, 2 m apart, separated by a
    /// 3 m corridor between footprint edges.
    fn default() -> Self {
        let corridor_half = 1.5 + DEFAULT_FOOTPRINT;
        let mid = DEFAULT_DEPTH / 2.0;
        let mut slots = Vec::with_capacity(26);
        for y in [mid - corridor_half, mid + corridor_half] {
            for k in 0..13 {
                slots.push(WorldPoint::new(2.5 + 2.0 * k as f64, y));
            }
        }
        Self {
            width: DEFAULT_WIDTH,
            depth: DEFAULT_DEPTH,
            slots,
        }
    }
}

impl SlotLayout {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: SlotLayout = serde_json::from_str(&text)?;
        if layout.slots.is_empty() {
            return Err(Error::InvalidMap("slot layout has no slots".into()));
        }
        Ok(layout)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMap {
    pub width: f64,
    pub depth: f64,
    pub slots: Vec<WorldPoint>,
    pub objects: Vec<SceneObject>,
    pub start_pose: Pose,
    pub condition: Condition,
    pub seed: u64,
}

#[derive(Serialize)]
struct MapDocumentRef<'a> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    map: &'a SceneMap,
}

#[derive(Deserialize)]
struct MapDocument {
    format: String,
    version: u32,
    #[serde(flatten)]
    map: SceneMap,
}

/// An object visible from a pose, with its egocentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibleObject {
    pub index: usize,
    pub ego: EgoPolar,
}

/// First footprint intersected by a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub index: usize,
    /// Distance along the ray to the footprint boundary.
    pub entry: f64,
    /// Distance from the agent to the object centre.
    pub center_range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayMarch {
    /// Range bins whose centres lie strictly before the first footprint.
    pub pre_occluder: Vec<usize>,
    pub first_surface: Option<SurfaceHit>,
}

impl SceneMap {
    /// Builds a hand-crafted map; the condition is derived from its contents.
    pub fn from_parts(
        width: f64,
        depth: f64,
        objects: Vec<SceneObject>,
        start_pose: Pose,
        seed: u64,
    ) -> Result<Self> {
        let target = objects
            .iter()
            .find(|o| o.is_target)
            .ok_or_else(|| Error::InvalidMap("no target object".into()))?;
        let bearing = world_to_ego(&start_pose, &target.position)?.theta;
        let num_distractors = objects
            .iter()
            .filter(|o| !o.is_target && o.color == target.color)
            .count();
        let map = SceneMap {
            width,
            depth,
            slots: Vec::new(),
            condition: Condition::new(AngleClass::classify(bearing), objects.len(), num_distractors),
            objects,
            start_pose,
            seed,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn target_index(&self) -> usize {
        self.objects
            .iter()
            .position(|o| o.is_target)
            .expect("validated map has a target")
    }

    pub fn target(&self) -> &SceneObject {
        &self.objects[self.target_index()]
    }

    pub fn target_color(&self) -> Color {
        self.target().color
    }

    pub fn in_bounds(&self, p: &WorldPoint) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.depth
    }

    /// True when the position is outside the grid or inside any footprint.
    pub fn collides(&self, pose: &Pose) -> bool {
        let p = pose.position();
        !self.in_bounds(&p)
            || self
                .objects
                .iter()
                .any(|o| o.position.distance(&p) <= o.footprint_radius)
    }

    /// Swept collision test for a straight move between two positions.
    pub fn collides_path(&self, from: &WorldPoint, to: &WorldPoint) -> bool {
        if !self.in_bounds(to) || !self.in_bounds(from) {
            return true;
        }
        self.objects
            .iter()
            .any(|o| segment_point_distance(from, to, &o.position) <= o.footprint_radius)
    }

    /// Objects inside the field of view; among objects whose bearings differ
    /// by less than `merge_bearing`, only the nearest is kept.
    pub fn visible_set(&self, pose: &Pose, fov: f64, merge_bearing: f64) -> Vec<VisibleObject> {
        let mut candidates: Vec<VisibleObject> = self
            .objects
            .iter()
            .enumerate()
            .filter_map(|(index, o)| {
                let ego = world_to_ego(pose, &o.position).ok()?;
                PolarGrid::in_fov(ego.theta, fov).then_some(VisibleObject { index, ego })
            })
            .collect();
        candidates.sort_by(|a, b| {
            a.ego
                .r
                .total_cmp(&b.ego.r)
                .then(self.objects[a.index].id.cmp(&self.objects[b.index].id))
        });
        let mut visible: Vec<VisibleObject> = Vec::with_capacity(candidates.len());
        for c in candidates {
            if visible
                .iter()
                .all(|v| wrap_deg(v.ego.theta - c.ego.theta).abs() >= merge_bearing)
            {
                visible.push(c);
            }
        }
        visible
    }

    /// Marches along egocentric bearing `theta` until the first footprint.
    /// A ray exactly tangent to a footprint counts as a hit. Hits beyond the
    /// grid's maximum range are ignored.
    pub fn ray_march(&self, pose: &Pose, theta: f64, grid: &PolarGrid) -> RayMarch {
        let b = (pose.heading + theta).to_radians();
        let (ux, uy) = (b.sin(), b.cos());
        let mut best: Option<SurfaceHit> = None;
        for (index, o) in self.objects.iter().enumerate() {
            let cx = o.position.x - pose.x;
            let cy = o.position.y - pose.y;
            let along = cx * ux + cy * uy;
            let dist2 = cx * cx + cy * cy;
            let rad2 = o.footprint_radius * o.footprint_radius;
            let entry = if dist2 <= rad2 {
                0.0
            } else {
                if along <= 0.0 {
                    continue;
                }
                let perp2 = (dist2 - along * along).max(0.0);
                if perp2 > rad2 + 1e-12 {
                    continue;
                }
                along - (rad2 - perp2).max(0.0).sqrt()
            };
            if entry > grid.max_range() {
                continue;
            }
            if best.map_or(true, |h| entry < h.entry) {
                best = Some(SurfaceHit {
                    index,
                    entry,
                    center_range: dist2.sqrt(),
                });
            }
        }
        let limit = best.map_or(f64::INFINITY, |h| h.entry);
        let pre_occluder = (0..grid.num_range_bins)
            .take_while(|&i| grid.range_center(i) < limit)
            .collect();
        RayMarch {
            pre_occluder,
            first_surface: best,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidMap(m));
        if !(self.width > 0.0 && self.depth > 0.0) {
            return invalid("grid extents must be positive".into());
        }
        let targets = self.objects.iter().filter(|o| o.is_target).count();
        if targets != 1 {
            return invalid(format!("expected exactly one target, found {targets}"));
        }
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.objects.len() {
            return invalid("object ids must be unique".into());
        }
        for o in &self.objects {
            if !(o.footprint_radius > 0.0) || !o.position.x.is_finite() || !o.position.y.is_finite() {
                return invalid(format!("object {} has invalid geometry", o.id));
            }
        }
        if !self.slots.is_empty() {
            let mut used = vec![false; self.slots.len()];
            for o in &self.objects {
                let slot = self
                    .slots
                    .iter()
                    .position(|s| s.distance(&o.position) < 1e-9);
                match slot {
                    Some(k) if !used[k] => used[k] = true,
                    Some(_) => return invalid(format!("object {} shares a slot", o.id)),
                    None => return invalid(format!("object {} is not on a slot", o.id)),
                }
            }
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if a.position.distance(&b.position) < 1e-9 {
                    return invalid(format!("objects {} and {} overlap", a.id, b.id));
                }
            }
        }
        if self.objects.len() != self.condition.num_objs {
            return invalid(format!(
                "condition expects {} objects, map has {}",
                self.condition.num_objs,
                self.objects.len()
            ));
        }
        let target = self.target();
        let distractors = self
            .objects
            .iter()
            .filter(|o| !o.is_target && o.color == target.color)
            .count();
        if distractors != self.condition.num_distractors {
            return invalid(format!(
                "condition expects {} distractors, map has {distractors}",
                self.condition.num_distractors
            ));
        }
        if self.collides(&self.start_pose) {
            return invalid("start pose collides or lies outside the grid".into());
        }
        let bearing = world_to_ego(&self.start_pose, &target.position)?.theta;
        if !self.condition.angle.contains(bearing) {
            return invalid(format!(
                "start bearing {bearing:.2} is not in the {} class",
                self.condition.angle
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MapDocumentRef {
            format: MAP_FORMAT,
            version: MAP_VERSION,
            map: self,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MapDocument = serde_json::from_str(text)?;
        if doc.format != MAP_FORMAT {
            return Err(Error::InvalidMap(format!("unexpected format {:?}", doc.format)));
        }
        if doc.version != MAP_VERSION {
            return Err(Error::InvalidMap(format!("unsupported map version {}", doc.version)));
        }
        doc.map.validate()?;
        Ok(doc.map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn segment_point_distance(a: &WorldPoint, b: &WorldPoint, p: &WorldPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    WorldPoint::new(a.x + t * dx, a.y + t * dy).distance(p)
}

/// Generates a map for `condition`, deterministic in `seed`.
///
/// The target takes a random slot and color, the remaining cars fill other
/// random slots, exactly `num_distractors` of them share the target color,
/// and start poses are drawn until the bearing to the target falls inside
/// the condition's angle class.
pub fn generate_map(condition: Condition, layout: &SlotLayout, seed: u64) -> Result<SceneMap> {
    if condition.num_objs == 0 {
        return Err(Error::Generation("at least one object is required".into()));
    }
    if condition.num_distractors >= condition.num_objs {
        return Err(Error::Generation(format!(
            "{} distractors cannot fit among {} objects",
            condition.num_distractors, condition.num_objs
        )));
    }
    if condition.num_objs > layout.slots.len() {
        return Err(Error::Generation(format!(
            "{} objects do not fit into {} slots",
            condition.num_objs,
            layout.slots.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slot_order: Vec<usize> = (0..layout.slots.len()).collect();
    slot_order.shuffle(&mut rng);
    let target_color = Color::ALL[rng.random_range(0..3)];
    let others: Vec<Color> = Color::ALL
        .iter()
        .copied()
        .filter(|c| *c != target_color)
        .collect();

    let mut objects = Vec::with_capacity(condition.num_objs);
    for (k, &slot) in slot_order[..condition.num_objs].iter().enumerate() {
        let color = if k == 0 || k <= condition.num_distractors {
            target_color
        } else {
            others[rng.random_range(0..others.len())]
        };
        objects.push(SceneObject {
            id: k as u32,
            position: layout.slots[slot],
            color,
            is_target: k == 0,
            footprint_radius: DEFAULT_FOOTPRINT,
        });
    }

    let grid = PolarGrid::default();
    let nx = layout.width.floor() as usize;
    let ny = layout.depth.floor() as usize;
    let target = objects[0].position;
    for _ in 0..START_POSE_ATTEMPTS {
        let x = rng.random_range(0..nx) as f64 + 0.5;
        let y = rng.random_range(0..ny) as f64 + 0.5;
        let heading = rng.random_range(-180i32..180) as f64;
        let pose = Pose::new(x, y, heading);
        let p = pose.position();
        if objects
            .iter()
            .any(|o| o.position.distance(&p) <= o.footprint_radius + START_CLEARANCE)
        {
            continue;
        }
        let ego = world_to_ego(&pose, &target)?;
        if ego.r > grid.max_range() - 1.0 || !condition.angle.contains(ego.theta) {
            continue;
        }
        let map = SceneMap {
            width: layout.width,
            depth: layout.depth,
            slots: layout.slots.clone(),
            objects,
            start_pose: pose,
            condition,
            seed,
        };
        map.validate()?;
        return Ok(map);
    }
    Err(Error::Generation(format!(
        "no admissible start pose for {} after {START_POSE_ATTEMPTS} attempts",
        condition.label()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(id: u32, x: f64, y: f64, color: Color, is_target: bool) -> SceneObject {
        SceneObject {
            id,
            position: WorldPoint::new(x, y),
            color,
            is_target,
            footprint_radius: DEFAULT_FOOTPRINT,
        }
    }

    #[test]
    fn generated_maps_meet_their_condition() {
        let layout = SlotLayout::default();
        let m = generate_map(Condition::new(AngleClass::Front, 5, 0), &layout, 1).unwrap();
        assert_eq!(m.objects.len(), 5);
        let tc = m.target_color();
        assert!(m.objects.iter().filter(|o| !o.is_target).all(|o| o.color != tc));
        let b = world_to_ego(&m.start_pose, &m.target().position).unwrap();
        assert!(b.theta.abs() <= 55.0);

        let m = generate_map(Condition::new(AngleClass::Back, 12, 4), &layout, 7).unwrap();
        assert_eq!(m.objects.len(), 12);
        let tc = m.target_color();
        assert_eq!(m.objects.iter().filter(|o| !o.is_target && o.color == tc).count(), 4);
        let b = world_to_ego(&m.start_pose, &m.target().position).unwrap();
        assert!(b.theta.abs() > 125.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let layout = SlotLayout::default();
        let c = Condition::new(AngleClass::Side, 7, 2);
        let a = generate_map(c, &layout, 99).unwrap().to_json().unwrap();
        let b = generate_map(c, &layout, 99).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let other = generate_map(c, &layout, 100).unwrap().to_json().unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn unsatisfiable_conditions_fail() {
        let layout = SlotLayout {
            slots: vec![WorldPoint::new(5.0, 5.0), WorldPoint::new(9.0, 5.0)],
            ..SlotLayout::default()
        };
        assert!(matches!(
            generate_map(Condition::new(AngleClass::Front, 5, 0), &layout, 1),
            Err(Error::Generation(_))
        ));
        assert!(generate_map(Condition::new(AngleClass::Front, 2, 2), &layout, 1).is_err());
    }

    #[test]
    fn angle_classes_partition_the_circle() {
        for k in -1800..1800 {
            let b = k as f64 / 10.0;
            let n = AngleClass::ALL.iter().filter(|c| c.contains(b)).count();
            assert_eq!(n, 1, "bearing {b}");
        }
        assert_eq!(AngleClass::classify(55.0), AngleClass::Front);
        assert_eq!(AngleClass::classify(-125.0), AngleClass::Side);
        assert_eq!(AngleClass::classify(-180.0), AngleClass::Back);
    }

    #[test]
    fn nearest_of_aligned_objects_is_visible() {
        let objects = vec![
            car(0, 10.0, 9.0, Color::Blue, true),
            car(1, 10.0, 6.0, Color::Black, false),
        ];
        let m = SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 3.0, 0.0), 0).unwrap();
        let v = m.visible_set(&m.start_pose, 110.0, 5.0);
        assert_eq!(v.len(), 1);
        assert_eq!(m.objects[v[0].index].id, 1);
        assert!((v[0].ego.r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fov_boundary_and_empty_map() {
        // 60 degrees right of the heading is outside a 110 degree field of view
        let t = 60f64.to_radians();
        let objects = vec![car(0, 10.0 + 5.0 * t.sin(), 3.0 + 5.0 * t.cos(), Color::Blue, true)];
        let m = SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 3.0, 0.0), 0).unwrap();
        assert!(m.visible_set(&m.start_pose, 110.0, 5.0).is_empty());
        assert_eq!(m.visible_set(&m.start_pose, 130.0, 5.0).len(), 1);

        let mut empty = m.clone();
        empty.objects.clear();
        assert!(empty.visible_set(&empty.start_pose, 110.0, 5.0).is_empty());
    }

    #[test]
    fn ray_march_stops_at_first_footprint() {
        let grid = PolarGrid::default();
        let objects = vec![car(0, 10.0, 7.0, Color::Blue, true)];
        let m = SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 3.0, 0.0), 0).unwrap();
        let ray = m.ray_march(&m.start_pose, 0.0, &grid);
        // object centre at r=4, footprint entry at 3.1: bins centred on 1, 2, 3 m
        assert_eq!(ray.pre_occluder, vec![0, 1, 2]);
        let hit = ray.first_surface.unwrap();
        assert!((hit.entry - 3.1).abs() < 1e-12);
        assert!((hit.center_range - 4.0).abs() < 1e-12);

        let open = m.ray_march(&m.start_pose, 90.0, &grid);
        assert_eq!(open.pre_occluder.len(), grid.num_range_bins);
        assert!(open.first_surface.is_none());
    }

    #[test]
    fn tangent_ray_counts_as_hit() {
        let grid = PolarGrid::default();
        // centre offset laterally by exactly the footprint radius
        let objects = vec![car(0, 10.5, 8.0, Color::Blue, true)];
        let mut m = SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 3.0, 0.0), 0).unwrap();
        m.objects[0].footprint_radius = 0.5;
        let ray = m.ray_march(&m.start_pose, 0.0, &grid);
        let hit = ray.first_surface.expect("tangent hit");
        assert!((hit.entry - 5.0).abs() < 1e-9);
        m.objects[0].footprint_radius = 0.5 - 1e-6;
        assert!(m.ray_march(&m.start_pose, 0.0, &grid).first_surface.is_none());
    }

    #[test]
    fn collision_cases() {
        let objects = vec![car(0, 10.0, 7.0, Color::Blue, true)];
        let m = SceneMap::from_parts(29.0, 13.0, objects, Pose::new(10.0, 3.0, 0.0), 0).unwrap();
        assert!(m.collides(&Pose::new(10.0, 7.0, 0.0)));
        assert!(m.collides(&Pose::new(29.1, 3.0, 0.0)));
        assert!(m.collides(&Pose::new(3.0, -0.1, 0.0)));
        assert!(!m.collides(&Pose::new(29.0, 3.0, 0.0)));
        assert!(!m.collides(&Pose::new(3.0, 3.0, 0.0)));
        // endpoints clear, segment clips the footprint
        assert!(m.collides_path(&WorldPoint::new(9.5, 6.0), &WorldPoint::new(10.5, 6.5)));
        assert!(!m.collides_path(&WorldPoint::new(3.0, 3.0), &WorldPoint::new(3.0, 4.0)));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let layout = SlotLayout::default();
        let m = generate_map(Condition::new(AngleClass::Side, 12, 2), &layout, 5).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"format\": \"avsearch-map\""));
        assert_eq!(SceneMap::from_json(&text).unwrap(), m);

        let mut broken = m.clone();
        broken.objects[1].is_target = true;
        assert!(SceneMap::from_json(&broken.to_json().unwrap()).is_err());

        let bad_version = text.replace("\"version\": 1", "\"version\": 9");
        assert!(SceneMap::from_json(&bad_version).is_err());
    }
}
