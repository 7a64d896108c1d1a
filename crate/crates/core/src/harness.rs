//! Batch experiments: map sets, episode runs, metrics and aggregation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::environment::{Environment, EpisodeLog, OutcomeKind};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::scene::{generate_map, AngleClass, Condition, SceneMap, SlotLayout};

/// Overall accuracy of human participants in the reference study.
pub const HUMAN_ACCURACY: f64 = 0.947;

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub seed: u64,
    pub maps_per_condition: usize,
    pub repeats: usize,
    pub seconds_per_step: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            maps_per_condition: 10,
            repeats: 12,
            seconds_per_step: 1.0,
        }
    }
}

/// A generated map together with its position in the experiment.
#[derive(Debug, Clone)]
pub struct MapEntry {
    pub id: usize,
    pub map: Arc<SceneMap>,
}

impl MapEntry {
    pub fn file_name(&self) -> String {
        format!("map_{:04}_{}.json", self.id, self.map.condition.label())
    }
}

/// Maps for every condition of the study grid, deterministic in `seed`.
pub fn generate_map_set(seed: u64, maps_per_condition: usize, layout: &SlotLayout) -> Result<Vec<MapEntry>> {
    let mut out = Vec::new();
    for (ci, condition) in Condition::study_grid().into_iter().enumerate() {
        for k in 0..maps_per_condition {
            let id = ci * maps_per_condition + k;
            let map = generate_map(condition, layout, mix_seed(seed, id as u64))?;
            out.push(MapEntry { id, map: Arc::new(map) });
        }
    }
    Ok(out)
}

pub fn save_map_set(maps: &[MapEntry], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for m in maps {
        m.map.save(&dir.join(m.file_name()))?;
    }
    Ok(())
}

/// Loads every `*.json` map in `dir`, ordered by file name; ids are the sorted positions.
pub fn load_map_set(dir: &Path) -> Result<Vec<MapEntry>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .enumerate()
        .map(|(id, p)| {
            Ok(MapEntry {
                id,
                map: Arc::new(SceneMap::load(p)?),
            })
        })
        .collect()
}

/// One metrics row per episode, in the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub map_id: usize,
    pub angle: AngleClass,
    pub num_objs: usize,
    pub distractors: usize,
    pub repeat: usize,
    pub outcome: OutcomeKind,
    pub correct: bool,
    pub steps: u32,
    pub search_time_s: f64,
    pub head_turn_deg: f64,
    pub displacement_m: f64,
    #[serde(rename = "return")]
    pub episode_return: f64,
}

impl MetricRow {
    pub fn from_log(map_id: usize, repeat: usize, map: &SceneMap, log: &EpisodeLog, cfg: &Config) -> Self {
        let totals = log.totals(&cfg.env.motion, cfg.env.reward.gamma);
        let outcome = log.outcome.map_or(OutcomeKind::Timeout, |o| o.kind);
        Self {
            map_id,
            angle: map.condition.angle,
            num_objs: map.condition.num_objs,
            distractors: map.condition.num_distractors,
            repeat,
            outcome,
            correct: outcome == OutcomeKind::CommittedCorrect,
            steps: totals.steps,
            search_time_s: totals.steps as f64 * cfg.harness.seconds_per_step,
            head_turn_deg: totals.head_turn_deg,
            displacement_m: totals.displacement_m,
            episode_return: totals.episode_return,
        }
    }

    pub fn condition(&self) -> Condition {
        Condition::new(self.angle, self.num_objs, self.distractors)
    }
}

pub fn episode_seed(seed: u64, map_id: usize, repeat: usize) -> u64 {
    mix_seed(mix_seed(seed, 0x5EED_0000 + map_id as u64), repeat as u64)
}

/// Runs one episode to termination. The policy draws from its own stream of
/// the episode seed, so the environment noise is independent of it.
pub fn run_episode(cfg: &Config, policy: PolicyKind, map: Arc<SceneMap>, seed: u64) -> Result<EpisodeLog> {
    let mut env = Environment::new(cfg.env, map, seed)?;
    let mut agent = policy.build(&cfg.env, &cfg.planner)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    while !env.is_done() {
        let action = agent.decide(env.state(), &mut rng);
        env.step(action)?;
    }
    Ok(env.into_log())
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<MetricRow>,
    /// Episode logs as JSON lines, in row order.
    pub logs: Vec<String>,
}

/// Every (map, repeat) pair, run in parallel and returned in (map, repeat) order.
pub fn run_experiment(cfg: &Config, policy: PolicyKind, maps: &[MapEntry], repeats: usize) -> Result<ExperimentResult> {
    let jobs: Vec<(usize, usize)> = (0..maps.len())
        .flat_map(|m| (0..repeats).map(move |r| (m, r)))
        .collect();
    let results: Vec<Result<(MetricRow, String)>> = jobs
        .par_iter()
        .map(|&(mi, rep)| {
            let entry = &maps[mi];
            let seed = episode_seed(cfg.harness.seed, entry.id, rep);
            let log = run_episode(cfg, policy, entry.map.clone(), seed)?;
            let row = MetricRow::from_log(entry.id, rep, &entry.map, &log, cfg);
            let text = log.to_jsonl(&cfg.env.motion, cfg.env.reward.gamma)?;
            Ok((row, text))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for r in results {
        let (row, text) = r?;
        rows.push(row);
        logs.push(text);
    }
    Ok(ExperimentResult { rows, logs })
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Writes `metrics.csv` and `episodes.jsonl` into `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = dir.join("metrics.csv");
    let file = std::fs::File::create(&metrics).map_err(|e| Error::io(&metrics, e))?;
    write_metrics(&result.rows, std::io::BufWriter::new(file))?;
    let logs = dir.join("episodes.jsonl");
    std::fs::write(&logs, result.logs.concat()).map_err(|e| Error::io(&logs, e))
}

/// Splits a concatenation of episode logs, as written by [`write_experiment`].
pub fn read_episode_logs(text: &str) -> Result<Vec<EpisodeLog>> {
    let mut chunks: Vec<String> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if line.starts_with("{\"kind\":\"episode\"") || chunks.is_empty() {
            chunks.push(String::new());
        }
        let chunk = chunks.last_mut().expect("pushed above");
        chunk.push_str(line);
        chunk.push('\n');
    }
    chunks.iter().map(|c| EpisodeLog::from_jsonl(c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub episodes: usize,
    pub accuracy: f64,
    pub median_steps: f64,
    pub mean_steps: f64,
    pub median_search_time_s: f64,
    pub median_head_turn_deg: f64,
    pub mean_head_turn_deg: f64,
    pub median_displacement_m: f64,
    pub mean_displacement_m: f64,
    pub mean_return: f64,
}

impl GroupStats {
    pub fn of(rows: &[&MetricRow]) -> Self {
        let col = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
        let steps = col(&|r| r.steps as f64);
        let time = col(&|r| r.search_time_s);
        let turn = col(&|r| r.head_turn_deg);
        let disp = col(&|r| r.displacement_m);
        let ret = col(&|r| r.episode_return);
        Self {
            episodes: rows.len(),
            accuracy: rows.iter().filter(|r| r.correct).count() as f64 / rows.len().max(1) as f64,
            median_steps: median(&steps),
            mean_steps: mean(&steps),
            median_search_time_s: median(&time),
            median_head_turn_deg: median(&turn),
            mean_head_turn_deg: mean(&turn),
            median_displacement_m: median(&disp),
            mean_displacement_m: mean(&disp),
            mean_return: mean(&ret),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub overall: GroupStats,
    pub by_condition: BTreeMap<String, GroupStats>,
    pub by_map: BTreeMap<usize, GroupStats>,
    pub by_angle: BTreeMap<String, GroupStats>,
    pub by_distractors: BTreeMap<usize, GroupStats>,
    pub by_num_objs: BTreeMap<usize, GroupStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_accuracy: Option<f64>,
}

pub fn aggregate(rows: &[MetricRow]) -> Result<Aggregate> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no metric rows to aggregate".into()));
    }
    fn group<K: Ord>(rows: &[MetricRow], key: impl Fn(&MetricRow) -> K) -> BTreeMap<K, GroupStats> {
        let mut groups: BTreeMap<K, Vec<&MetricRow>> = BTreeMap::new();
        for r in rows {
            groups.entry(key(r)).or_default().push(r);
        }
        groups.into_iter().map(|(k, v)| (k, GroupStats::of(&v))).collect()
    }
    Ok(Aggregate {
        overall: GroupStats::of(&rows.iter().collect::<Vec<_>>()),
        by_condition: group(rows, |r| r.condition().label()),
        by_map: group(rows, |r| r.map_id),
        by_angle: group(rows, |r| r.angle.as_str().to_string()),
        by_distractors: group(rows, |r| r.distractors),
        by_num_objs: group(rows, |r| r.num_objs),
        human_accuracy: None,
    })
}

impl Aggregate {
    pub fn with_human_reference(mut self) -> Self {
        self.human_accuracy = Some(HUMAN_ACCURACY);
        self
    }

    /// Fixed-width text table per condition.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>5} {:>6} {:>8} {:>8} {:>9} {:>8}\n",
            "condition", "n", "acc", "med_step", "mean_stp", "med_turn", "med_disp"
        );
        let mut line = |name: &str, s: &GroupStats| {
            out.push_str(&format!(
                "{:<18} {:>5} {:>6.3} {:>8.1} {:>8.2} {:>9.1} {:>8.2}\n",
                name, s.episodes, s.accuracy, s.median_steps, s.mean_steps, s.median_head_turn_deg, s.median_displacement_m
            ));
        };
        for (k, s) in &self.by_condition {
            line(k, s);
        }
        for (k, s) in &self.by_angle {
            line(&format!("angle={k}"), s);
        }
        for (k, s) in &self.by_num_objs {
            line(&format!("objs={k}"), s);
        }
        for (k, s) in &self.by_distractors {
            line(&format!("distractors={k}"), s);
        }
        line("overall", &self.overall);
        if let Some(h) = self.human_accuracy {
            out.push_str(&format!("human reference accuracy {h:.3}\n"));
        }
        out
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(map_id: usize, steps: u32, correct: bool) -> MetricRow {
        MetricRow {
            map_id,
            angle: AngleClass::Front,
            num_objs: 5,
            distractors: 0,
            repeat: 0,
            outcome: if correct {
                OutcomeKind::CommittedCorrect
            } else {
                OutcomeKind::CommittedWrong
            },
            correct,
            steps,
            search_time_s: steps as f64,
            head_turn_deg: 30.0 * steps as f64,
            displacement_m: 0.0,
            episode_return: 0.0,
        }
    }

    #[test]
    fn medians_by_hand() {
        let rows = vec![row(0, 1, true), row(0, 4, true), row(1, 2, false), row(1, 9, true)];
        let a = aggregate(&rows).unwrap();
        assert_eq!(a.overall.median_steps, 3.0);
        assert_eq!(a.overall.mean_steps, 4.0);
        assert_eq!(a.overall.accuracy, 0.75);
        assert_eq!(a.by_map[&0].median_steps, 2.5);
        assert_eq!(a.by_map[&1].median_head_turn_deg, 165.0);
        assert_eq!(a.with_human_reference().human_accuracy, Some(0.947));
    }

    #[test]
    fn all_correct_table() {
        let rows: Vec<_> = (0..6).map(|k| row(k % 3, 2, true)).collect();
        let a = aggregate(&rows).unwrap();
        assert!(a.by_condition.values().all(|s| s.accuracy == 1.0));
        assert!(a.by_map.values().all(|s| s.accuracy == 1.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(0, 1, true), row(3, 7, false)];
        let mut buf = Vec::new();
        write_metrics(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "map_id,angle,num_objs,distractors,repeat,outcome,correct,steps,search_time_s,head_turn_deg,displacement_m,return\n"
        ));
        assert_eq!(read_metrics(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn seeds_are_spread() {
        let a = episode_seed(1, 0, 0);
        assert_ne!(a, episode_seed(1, 0, 1));
        assert_ne!(a, episode_seed(1, 1, 0));
        assert_ne!(a, episode_seed(2, 0, 0));
    }
}
