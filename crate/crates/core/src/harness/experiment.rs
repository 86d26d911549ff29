//! Training, multi-seed comparison and parameter sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::harness::config::SimConfig;
use crate::harness::episode::{run_episode, Environment, EpisodeOptions, EpisodeResult, Mapper};
use crate::mapper::{MapperKind, RlMapper};
use crate::reliability::{json_years, Mechanism, SystemMttf};
use crate::seeds::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub epsilon: f64,
    pub bin_reward: f64,
    pub core_reward: f64,
    pub system_combined_years: f64,
    pub final_spread: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub mapper: RlMapper,
    pub curve: Vec<CurveRow>,
}

/// Trains a fresh RL mapper for `episodes` passes over `env`'s trace, with
/// exploration drawn from the master seed's exploration stream.
pub fn train_on(env: &Environment, episodes: usize) -> Result<TrainResult> {
    let mut rl = RlMapper::new(env.cfg.rl)?;
    let mut rng = stream_rng(env.seed, Stream::Exploration);
    let mut curve = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let epsilon = env.cfg.rl.epsilon.at(ep);
        let mut mapper = Mapper::Rl(Box::new(rl));
        let r = run_episode(env, &mut mapper, EpisodeOptions { epsilon, epoch: ep as u64 }, &mut rng)?;
        rl = match mapper {
            Mapper::Rl(m) => *m,
            _ => unreachable!(),
        };
        curve.push(CurveRow {
            episode: ep,
            epsilon,
            bin_reward: r.bin_reward_sum,
            core_reward: r.core_reward_sum,
            system_combined_years: r.report.system.combined,
            final_spread: r.final_state.spread(),
        });
    }
    Ok(TrainResult { mapper: rl, curve })
}

/// Trains on the configured workload for `cfg.experiment.seed`.
pub fn train(cfg: &SimConfig, episodes: usize) -> Result<TrainResult> {
    if cfg.experiment.mapper != MapperKind::Rl {
        return Err(invalid(format!("training needs the rl mapper, config selects {}", cfg.experiment.mapper)));
    }
    train_on(&Environment::build(cfg, cfg.experiment.seed)?, episodes)
}

/// Greedy evaluation of a trained mapper with frozen tables.
pub fn evaluate_rl(env: &Environment, trained: &RlMapper) -> Result<EpisodeResult> {
    let mut rl = trained.clone();
    rl.learning = false;
    let mut rng = stream_rng(env.seed, Stream::Exploration);
    run_episode(env, &mut Mapper::Rl(Box::new(rl)), EpisodeOptions { epsilon: 0.0, epoch: 0 }, &mut rng)
}

/// One episode of `kind` on `env`. The RL mapper is trained first.
pub fn run_mapper(env: &Environment, kind: MapperKind, episodes: usize) -> Result<EpisodeResult> {
    match kind {
        MapperKind::Rl => evaluate_rl(env, &train_on(env, episodes)?.mapper),
        MapperKind::Random => {
            let mut rng = stream_rng(env.seed, Stream::Baseline);
            run_episode(env, &mut Mapper::Random, EpisodeOptions { epsilon: 0.0, epoch: 0 }, &mut rng)
        }
        MapperKind::TcGreedy => {
            let mut rng = stream_rng(env.seed, Stream::Baseline);
            run_episode(env, &mut Mapper::TcGreedy, EpisodeOptions { epsilon: 0.0, epoch: 0 }, &mut rng)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    #[serde(serialize_with = "ser_system")]
    pub system: SystemMttf,
    pub final_spread: f64,
    /// Final core temperatures, row-major, kelvin.
    pub final_temps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapperSummary {
    pub label: String,
    pub kind: MapperKind,
    /// Seed-averaged system MTTF per mechanism, years.
    #[serde(serialize_with = "ser_mech_map")]
    pub mttf_years: BTreeMap<Mechanism, f64>,
    pub mean_final_spread: f64,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Improvement {
    pub mapper: String,
    pub baseline: String,
    pub mechanism: Mechanism,
    /// `(MTTF_mapper - MTTF_baseline) / MTTF_baseline`.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub grid: (usize, usize),
    pub mappers: Vec<MapperSummary>,
    pub improvements: Vec<Improvement>,
}

fn ser_system<S: serde::Serializer>(s: &SystemMttf, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = serde_json::Map::new();
    for m in Mechanism::ALL {
        map.insert(m.name().to_string(), json_years(s.get(m)));
    }
    map.insert("tc_infinite_cores".into(), s.tc_infinite_cores.into());
    serde::Serialize::serialize(&map, ser)
}

fn ser_mech_map<S: serde::Serializer>(m: &BTreeMap<Mechanism, f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let map: serde_json::Map<String, serde_json::Value> = m.iter().map(|(k, v)| (k.name().to_string(), json_years(*v))).collect();
    serde::Serialize::serialize(&map, ser)
}

impl ComparisonReport {
    pub fn summary(&self, label: &str) -> Option<&MapperSummary> {
        self.mappers.iter().find(|m| m.label == label)
    }

    pub fn improvement(&self, mapper: &str, baseline: &str, mechanism: Mechanism) -> Option<f64> {
        self.improvements.iter().find(|i| i.mapper == mapper && i.baseline == baseline && i.mechanism == mechanism).map(|i| i.relative)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    /// One row per mapper, one column per mechanism, plus the mean final spread.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mapper");
        for m in Mechanism::ALL {
            out.push_str(&format!(",{}_years", m.name()));
        }
        out.push_str(",mean_final_spread_K\n");
        for s in &self.mappers {
            out.push_str(&s.label);
            for m in Mechanism::ALL {
                out.push_str(&format!(",{}", crate::reliability::fmt_years(s.mttf_years[&m])));
            }
            out.push_str(&format!(",{:.6}\n", s.mean_final_spread));
        }
        out
    }
}

/// Labels for a mapper list; repeated kinds get `#2`, `#3`, ...
pub fn mapper_labels(mappers: &[MapperKind]) -> Vec<String> {
    let mut seen: BTreeMap<MapperKind, usize> = BTreeMap::new();
    mappers
        .iter()
        .map(|&k| {
            let n = seen.entry(k).or_insert(0);
            *n += 1;
            if *n == 1 {
                k.name().to_string()
            } else {
                format!("{}#{n}", k.name())
            }
        })
        .collect()
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Runs every mapper on every seed. Each seed fixes the PV map and the trace
/// shared by all mappers; seeds run in parallel and are merged in order.
pub fn compare(cfg: &SimConfig, mappers: &[MapperKind], seeds: &[u64]) -> Result<ComparisonReport> {
    if seeds.is_empty() {
        return Err(invalid("seed list is empty"));
    }
    if mappers.len() < 2 {
        return Err(invalid(format!("comparison needs at least two mappers, got {}", mappers.len())));
    }
    cfg.validate()?;
    let episodes = cfg.experiment.episodes;
    let per_seed: Vec<Vec<SeedRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let env = Environment::build(cfg, seed)?;
            mappers
                .iter()
                .map(|&kind| {
                    let r = run_mapper(&env, kind, episodes)?;
                    Ok(SeedRun { seed, system: r.report.system, final_spread: r.final_state.spread(), final_temps: r.final_state.temps })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let labels = mapper_labels(mappers);
    let summaries: Vec<MapperSummary> = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let runs: Vec<SeedRun> = per_seed.iter().map(|runs| runs[i].clone()).collect();
            let mttf_years = Mechanism::ALL.iter().map(|&m| (m, mean_finite(runs.iter().map(|r| r.system.get(m))))).collect();
            MapperSummary {
                label: label.clone(),
                kind: mappers[i],
                mttf_years,
                mean_final_spread: runs.iter().map(|r| r.final_spread).sum::<f64>() / runs.len() as f64,
                runs,
            }
        })
        .collect();

    let mut improvements = Vec::new();
    for a in &summaries {
        for b in &summaries {
            if a.label == b.label {
                continue;
            }
            for m in Mechanism::ALL {
                let (va, vb) = (a.mttf_years[&m], b.mttf_years[&m]);
                improvements.push(Improvement {
                    mapper: a.label.clone(),
                    baseline: b.label.clone(),
                    mechanism: m,
                    relative: (va - vb) / vb,
                });
            }
        }
    }

    Ok(ComparisonReport { seeds: seeds.to_vec(), episodes, grid: (cfg.grid.rows, cfg.grid.cols), mappers: summaries, improvements })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub report: ComparisonReport,
}

/// Runs the configured comparison once per value of the dotted `key`.
pub fn sweep(cfg: &SimConfig, key: &str, values: &[String]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(invalid("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let c = cfg.with_override(key, v)?;
            Ok(SweepPoint { value: v.clone(), report: compare(&c, &c.experiment.mappers, &c.experiment.seeds)? })
        })
        .collect()
}

pub fn sweep_csv(key: &str, points: &[SweepPoint]) -> String {
    let mut out = format!("{key},mapper");
    for m in Mechanism::ALL {
        out.push_str(&format!(",{}_years", m.name()));
    }
    out.push_str(",mean_final_spread_K\n");
    for p in points {
        for s in &p.report.mappers {
            out.push_str(&format!("{},{}", p.value, s.label));
            for m in Mechanism::ALL {
                out.push_str(&format!(",{}", crate::reliability::fmt_years(s.mttf_years[&m])));
            }
            out.push_str(&format!(",{:.6}\n", s.mean_final_spread));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rlcore::toy::{greedy_policy, train as toy_train, ToyMdp};
    use crate::rlcore::{EpsilonSchedule, QTable};

    fn quick_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.workload.n_tasks = 20;
        cfg.experiment.episodes = 2;
        cfg
    }

    #[test]
    fn zero_episodes_leaves_tables_untouched() {
        let r = train(&quick_cfg(), 0).unwrap();
        assert!(r.mapper.bin_table.is_empty());
        assert!(r.mapper.core_table.is_empty());
        assert!(r.curve.is_empty());
    }

    #[test]
    fn curve_has_one_row_per_episode() {
        let r = train(&quick_cfg(), 3).unwrap();
        assert_eq!(r.curve.len(), 3);
        assert_eq!(r.curve.iter().map(|c| c.episode).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(!r.mapper.bin_table.is_empty());
    }

    #[test]
    fn non_rl_mapper_cannot_train() {
        let mut cfg = quick_cfg();
        cfg.experiment.mapper = MapperKind::Random;
        assert!(matches!(train(&cfg, 1), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn toy_two_bin_fixture_matches_value_iteration() {
        let mdp = ToyMdp::two_bin();
        let mut table = QTable::new(0.72, 0.28, 0.0).unwrap();
        let mut rng = stream_rng(1, Stream::Exploration);
        toy_train(&mdp, &mut table, 200, 20, &EpsilonSchedule::default(), &mut rng).unwrap();
        // Value iteration on the fixture.
        let (ns, na) = (mdp.states(), mdp.actions());
        let mut v = vec![0.0; ns];
        for _ in 0..2000 {
            v = (0..ns).map(|s| (0..na).map(|a| mdp.reward[s][a] + 0.28 * v[mdp.next[s][a]]).fold(f64::NEG_INFINITY, f64::max)).collect();
        }
        let optimal: Vec<usize> = (0..ns)
            .map(|s| {
                (0..na)
                    .max_by(|&a, &b| {
                        let qa = mdp.reward[s][a] + 0.28 * v[mdp.next[s][a]];
                        let qb = mdp.reward[s][b] + 0.28 * v[mdp.next[s][b]];
                        qa.total_cmp(&qb).then(b.cmp(&a))
                    })
                    .unwrap()
            })
            .collect();
        assert_eq!(greedy_policy(&mdp, &table), optimal);
    }

    #[test]
    fn compare_argument_errors() {
        let cfg = quick_cfg();
        assert!(compare(&cfg, &[MapperKind::Random, MapperKind::TcGreedy], &[]).is_err());
        assert!(compare(&cfg, &[MapperKind::Random], &[1]).is_err());
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let cfg = quick_cfg();
        let r = compare(&cfg, &[MapperKind::Random, MapperKind::Random, MapperKind::TcGreedy], &[1, 2]).unwrap();
        assert_eq!(r.mappers.len(), 3);
        assert_eq!(r.mappers[1].label, "random#2");
        for m in Mechanism::ALL {
            assert_eq!(r.improvement("random", "random#2", m), Some(0.0));
        }
        // 3 mappers x 5 mechanisms of averages; 3*2 ordered pairs x 5.
        assert!(r.mappers.iter().all(|s| s.mttf_years.len() == 5 && s.runs.len() == 2));
        assert_eq!(r.improvements.len(), 30);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().next().unwrap().split(',').count(), 7);
    }

    #[test]
    fn improvement_definition() {
        let cfg = quick_cfg();
        let r = compare(&cfg, &[MapperKind::Random, MapperKind::TcGreedy], &[3]).unwrap();
        let a = r.summary("random").unwrap().mttf_years[&Mechanism::Combined];
        let b = r.summary("tc_greedy").unwrap().mttf_years[&Mechanism::Combined];
        assert_eq!(r.improvement("random", "tc_greedy", Mechanism::Combined), Some((a - b) / b));
    }

    #[test]
    fn labels_deduplicate() {
        let l = mapper_labels(&[MapperKind::Rl, MapperKind::Rl, MapperKind::Random, MapperKind::Rl]);
        assert_eq!(l, vec!["rl", "rl#2", "random", "rl#3"]);
    }

    #[test]
    fn sweep_runs_each_value() {
        let mut cfg = quick_cfg();
        cfg.experiment.mappers = vec![MapperKind::Random, MapperKind::TcGreedy];
        cfg.experiment.seeds = vec![1];
        let pts = sweep(&cfg, "clustering.epsilon", &["0.5".into(), "1.0".into()]).unwrap();
        assert_eq!(pts.len(), 2);
        let csv = sweep_csv("clustering.epsilon", &pts);
        assert_eq!(csv.lines().count(), 5);
        assert!(sweep(&cfg, "clustering.epsilon", &["-3".into()]).is_err());
    }
}
