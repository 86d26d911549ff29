//! One pass of a workload trace through the mapping loop.

use std::collections::VecDeque;

use rand::Rng;

use crate::clustering::{pack_bins, BinPartition};
use crate::error::{invalid, Error, Result};
use crate::harness::config::{Repack, SimConfig, WorkloadSource};
use crate::mapper::{map_random, map_tc_greedy, MachineView, MapperKind, MappingDecision, PendingCoreUpdate, RlMapper};
use crate::pvgrid::{footprint_cp_sets, generate_pv_grid, max_frequencies, CoreFrequencyMap, PvGrid};
use crate::reliability::{
    core_mttf, mttf_em, mttf_hci, mttf_nbti, AgingAccumulator, AgingParams, CoreMttf, MttfReport, TcParams, TcTracker,
};
use crate::seeds::{stream_seed, Stream};
use crate::thermal::{TemperatureTrace, ThermalModel, ThermalState};
use crate::workload::{generate_trace, load_trace, preset_trace, scale_duration, WorkloadTrace};

/// Everything an episode needs that does not depend on the mapper.
#[derive(Debug, Clone)]
pub struct Environment {
    pub cfg: SimConfig,
    pub seed: u64,
    pub pv: PvGrid,
    pub frequencies: CoreFrequencyMap,
    pub trace: WorkloadTrace,
    pub thermal: ThermalModel,
    pub tc: TcParams,
    pub aging: AgingParams,
}

impl Environment {
    /// Builds the PV map, core frequencies and workload for master `seed`.
    pub fn build(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let trace = match cfg.workload.source {
            WorkloadSource::Preset => preset_trace(cfg.workload.n_tasks, stream_seed(seed, Stream::Workload), cfg.workload.arrival_rate)?,
            WorkloadSource::Synthetic => {
                generate_trace(cfg.workload.n_tasks, stream_seed(seed, Stream::Workload), &cfg.workload.ranges, cfg.workload.arrival_rate)?
            }
            WorkloadSource::File => load_trace(cfg.workload.path.as_deref().expect("validated"))?,
        };
        Self::with_trace(cfg, seed, trace)
    }

    /// Like [`Environment::build`] but with a caller-supplied trace.
    pub fn with_trace(cfg: &SimConfig, seed: u64, trace: WorkloadTrace) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols) = (cfg.grid.rows, cfg.grid.cols);
        let cpc = cfg.pv.cells_per_core;
        let pv = match &cfg.grid.pv_file {
            Some(path) => PvGrid::load(path)?,
            None => generate_pv_grid(rows * cpc, cols * cpc, stream_seed(seed, Stream::ProcessVariation), &cfg.pv)?,
        };
        if pv.rows() != rows * cpc || pv.cols() != cols * cpc {
            return Err(Error::Config {
                field: "grid.pv_file".into(),
                msg: format!("PV map is {}x{}, expected {}x{}", pv.rows(), pv.cols(), rows * cpc, cols * cpc),
            });
        }
        let frequencies = max_frequencies(&pv, &footprint_cp_sets(rows, cols, cpc), cfg.pv.beta_f)?;
        let thermal = ThermalModel::new(cfg.thermal.model_config(), rows, cols)?;
        let (tc, aging) = cfg.reliability.resolved()?;
        Ok(Environment { cfg: cfg.clone(), seed, pv, frequencies, trace, thermal, tc, aging })
    }

    pub fn cores(&self) -> usize {
        self.thermal.cores()
    }
}

/// The mapper driving an episode.
#[derive(Debug, Clone)]
pub enum Mapper {
    Rl(Box<RlMapper>),
    Random,
    TcGreedy,
}

impl Mapper {
    pub fn kind(&self) -> MapperKind {
        match self {
            Mapper::Rl(_) => MapperKind::Rl,
            Mapper::Random => MapperKind::Random,
            Mapper::TcGreedy => MapperKind::TcGreedy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub epsilon: f64,
    /// Epoch tag passed to action sets; the episode index during training.
    pub epoch: u64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub report: MttfReport,
    pub decisions: Vec<MappingDecision>,
    pub final_state: ThermalState,
    pub temperatures: TemperatureTrace,
    pub bin_reward_sum: f64,
    pub core_reward_sum: f64,
    pub dispatched: usize,
    pub completed: usize,
    pub queued_at_end: usize,
}

struct Running {
    task: usize,
    decision: usize,
    end_step: u64,
    pending: Option<PendingCoreUpdate>,
}

/// Per-core lifetime bookkeeping shared by the mappers and the final report.
struct Lifetimes<'a> {
    tc: Vec<TcTracker>,
    aging: Vec<AgingAccumulator>,
    params: &'a AgingParams,
    idle_i_sub: f64,
    idle_i_em: f64,
}

impl Lifetimes<'_> {
    /// Damage-integral lifetimes, or the pointwise idle value before any time
    /// has elapsed.
    fn aging_years(&self, core: usize, temp: f64) -> Result<(f64, f64, f64)> {
        let acc = &self.aging[core];
        if acc.elapsed > 0.0 {
            return Ok(acc.lifetimes());
        }
        let mut p = *self.params;
        p.hci.i_sub = self.idle_i_sub;
        p.em.current = self.idle_i_em;
        Ok((mttf_nbti(temp, &p)?, mttf_hci(temp, &p)?, mttf_em(temp, &p)?))
    }

    fn snapshot(&self, core: usize, temp: f64) -> Result<CoreMttf> {
        let (nbti, hci, em) = self.aging_years(core, temp)?;
        Ok(CoreMttf::new(self.tc[core].mttf_years(), nbti, hci, em))
    }

    fn combined(&self, cores: &[usize], state: &ThermalState) -> Result<Vec<f64>> {
        cores.iter().map(|&c| Ok(self.snapshot(c, state.temps[c])?.combined.effective())).collect()
    }
}

fn quantize(t: f64, dt: f64) -> u64 {
    let x = t / dt;
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// Simulates the whole trace once.
///
/// Each step first retires finished tasks (applying delayed rewards), then
/// enqueues arrivals and repacks the bins per `clustering.repack`, then dispatches
/// queued tasks in FIFO order while a core is free. Power is applied, aging
/// integrals advance and the thermal model steps. The episode ends once the
/// last task has finished.
pub fn run_episode<R: Rng + ?Sized>(env: &Environment, mapper: &mut Mapper, opts: EpisodeOptions, rng: &mut R) -> Result<EpisodeResult> {
    let cfg = &env.cfg;
    let n = env.cores();
    let dt = cfg.thermal.dt;
    let steps_per_sample = cfg.thermal.steps_per_sample()?;
    let ambient = env.thermal.config().ambient;
    let r_vertical = env.thermal.config().r_vertical;
    let nominal = cfg.pv.beta_f;

    let mut tasks: Vec<usize> = (0..env.trace.tasks.len()).collect();
    tasks.sort_by(|&a, &b| env.trace.tasks[a].arrival.total_cmp(&env.trace.tasks[b].arrival).then(a.cmp(&b)));

    let mut state = env.thermal.initial_state();
    let mut temperatures = TemperatureTrace::new(n, cfg.thermal.sample_period)?;
    temperatures.record(&state)?;
    let mut life = Lifetimes {
        tc: (0..n).map(|_| TcTracker::new(cfg.thermal.sample_period, env.tc)).collect::<Result<_>>()?,
        aging: vec![AgingAccumulator::default(); n],
        params: &env.aging,
        idle_i_sub: cfg.reliability.idle_i_sub,
        idle_i_em: cfg.reliability.idle_i_em,
    };
    for (c, tracker) in life.tc.iter_mut().enumerate() {
        tracker.push(state.temps[c]);
    }

    let mut busy = vec![false; n];
    let mut running: Vec<Option<Running>> = (0..n).map(|_| None).collect();
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut next_arrival = 0usize;
    let mut decisions: Vec<MappingDecision> = Vec::with_capacity(tasks.len());
    let mut partition: BinPartition = pack_bins(&state.temps, cfg.clustering.epsilon, cfg.clustering.min_pts)?;
    let (mut bin_reward_sum, mut core_reward_sum) = (0.0, 0.0);
    let (mut dispatched, mut completed) = (0usize, 0usize);
    let mut power = vec![0.0; n];
    let mut step: u64 = 0;

    loop {
        let now = step as f64 * dt;

        for core in 0..n {
            if running[core].as_ref().is_some_and(|r| r.end_step == step) {
                let done = running[core].take().expect("checked");
                busy[core] = false;
                completed += 1;
                let d = &mut decisions[done.decision];
                d.completion_time = Some(now);
                if let (Mapper::Rl(rl), Some(pending)) = (&mut *mapper, done.pending) {
                    let mttf = life.combined(&pending.cores, &state)?;
                    let flags: Vec<bool> = pending.cores.iter().map(|&c| busy[c]).collect();
                    let r = rl.complete_core(&pending, &mttf, &flags, opts.epoch)?;
                    d.core_reward = Some(r);
                    core_reward_sum += r;
                }
            }
        }

        let mut arrived = false;
        while next_arrival < tasks.len() && quantize(env.trace.tasks[tasks[next_arrival]].arrival, dt) <= step {
            queue.push_back(tasks[next_arrival]);
            next_arrival += 1;
            arrived = true;
        }
        if arrived && cfg.clustering.repack == Repack::Arrival {
            partition = pack_bins(&state.temps, cfg.clustering.epsilon, cfg.clustering.min_pts)?;
        }

        while let Some(&ti) = queue.front() {
            if busy.iter().all(|&b| b) {
                break;
            }
            let task = &env.trace.tasks[ti];
            if cfg.clustering.repack == Repack::Task {
                partition = pack_bins(&state.temps, cfg.clustering.epsilon, cfg.clustering.min_pts)?;
            }
            let bins = partition.mapping_bins();
            let (bin, core, bin_reward, pending) = match mapper {
                Mapper::Rl(rl) => {
                    let view = MachineView { state: &state, busy: &busy, ambient, r_vertical };
                    let (bin, reward) = rl
                        .select_bin(task, &partition, &view, opts.epsilon, opts.epoch, rng)?
                        .ok_or_else(|| invalid("no bin with a free core despite a free core"))?;
                    let cores = &bins[bin];
                    let mttf = life.combined(cores, &state)?;
                    let flags: Vec<bool> = cores.iter().map(|&c| busy[c]).collect();
                    let (core, pending) = rl
                        .select_core(cores, &mttf, &flags, opts.epsilon, opts.epoch, rng)?
                        .ok_or_else(|| invalid("selected bin has no free core"))?;
                    bin_reward_sum += reward;
                    (bin, core, reward, Some(pending))
                }
                Mapper::Random | Mapper::TcGreedy => {
                    let free: Vec<usize> = (0..n).filter(|&c| !busy[c]).collect();
                    let core = if matches!(mapper, Mapper::Random) {
                        map_random(&free, rng)
                    } else {
                        let tc: Vec<f64> = life.tc.iter().map(TcTracker::mttf_years).collect();
                        map_tc_greedy(&free, &tc)
                    }
                    .expect("free list is non-empty");
                    let bin = bins.iter().position(|b| b.contains(&core)).expect("bins cover all cores");
                    (bin, core, 0.0, None)
                }
            };
            debug_assert!(!busy[core] && bins[bin].contains(&core));
            queue.pop_front();
            let run = scale_duration(task, env.frequencies.frequencies[core], nominal)?;
            let steps = ((run / dt).round() as u64).max(1);
            busy[core] = true;
            dispatched += 1;
            running[core] = Some(Running { task: ti, decision: decisions.len(), end_step: step + steps, pending });
            decisions.push(MappingDecision {
                task_id: task.id,
                arrival: task.arrival,
                bin,
                core,
                bin_reward,
                core_reward: None,
                dispatch_time: now,
                completion_time: None,
            });
        }

        if next_arrival == tasks.len() && queue.is_empty() && busy.iter().all(|&b| !b) {
            break;
        }

        for core in 0..n {
            let (p, i_sub, i_em) = match &running[core] {
                Some(r) => {
                    let t = &env.trace.tasks[r.task];
                    (t.power + cfg.thermal.idle_power, t.i_sub, t.i_em)
                }
                None => (cfg.thermal.idle_power, life.idle_i_sub, life.idle_i_em),
            };
            power[core] = p;
            life.aging[core].add(dt, state.temps[core], i_sub, i_em, &env.aging)?;
        }
        env.thermal.step_in_place(&mut state, &power)?;
        step += 1;
        if step.is_multiple_of(steps_per_sample) {
            temperatures.record(&state)?;
            for (c, tracker) in life.tc.iter_mut().enumerate() {
                tracker.push(state.temps[c]);
            }
        }
    }

    let mut cores = Vec::with_capacity(n);
    for c in 0..n {
        let mut m = core_mttf(temperatures.core(c), temperatures.period(), &life.aging[c], &env.tc)?;
        if life.aging[c].elapsed == 0.0 {
            let (nbti, hci, em) = life.aging_years(c, state.temps[c])?;
            m = CoreMttf::new(m.tc, nbti, hci, em);
        }
        cores.push(m);
    }

    Ok(EpisodeResult {
        report: MttfReport::new(cores),
        decisions,
        final_state: state,
        temperatures,
        bin_reward_sum,
        core_reward_sum,
        dispatched,
        completed,
        queued_at_end: queue.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::RlSettings;
    use crate::workload::TraceSource;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.workload.n_tasks = 40;
        cfg
    }

    #[test]
    fn empty_trace_reports_idle_baseline() {
        let cfg = SimConfig::default();
        let trace = WorkloadTrace::new(vec![], TraceSource::Generated { seed: 0 }).unwrap();
        let env = Environment::with_trace(&cfg, 1, trace).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = run_episode(&env, &mut Mapper::Random, EpisodeOptions { epsilon: 0.0, epoch: 0 }, &mut rng).unwrap();
        assert!(r.decisions.is_empty());
        assert_eq!(r.report.system.tc_infinite_cores, 16);
        let mut p = env.aging;
        p.hci.i_sub = cfg.reliability.idle_i_sub;
        p.em.current = cfg.reliability.idle_i_em;
        let ambient = env.thermal.config().ambient;
        for c in &r.report.cores {
            assert!(c.tc.is_infinite());
            assert_eq!(c.nbti, mttf_nbti(ambient, &p).unwrap());
            assert_eq!(c.hci, mttf_hci(ambient, &p).unwrap());
            assert_eq!(c.em, mttf_em(ambient, &p).unwrap());
            assert!(c.combined.infinite_dominated);
        }
    }

    #[test]
    fn repack_cadence_controls_bin_indices() {
        let run = |repack| {
            let mut cfg = small_cfg();
            cfg.clustering.repack = repack;
            let env = Environment::build(&cfg, 3).unwrap();
            let mut rl = Mapper::Rl(Box::new(RlMapper::new(cfg.rl).unwrap()));
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            run_episode(&env, &mut rl, EpisodeOptions { epsilon: 0.5, epoch: 0 }, &mut rng).unwrap()
        };
        let once = run(Repack::Once);
        assert_eq!(once.completed, 40);
        assert!(once.decisions.iter().all(|d| d.bin == 0));
        for repack in [Repack::Arrival, Repack::Task] {
            let r = run(repack);
            assert_eq!(r.completed, 40);
            assert!(r.decisions.iter().any(|d| d.bin > 0), "{repack:?}");
        }
    }

    #[test]
    fn every_task_dispatched_once() {
        let mut cfg = small_cfg();
        cfg.workload.source = WorkloadSource::Synthetic;
        cfg.workload.n_tasks = 100;
        let env = Environment::build(&cfg, 4).unwrap();
        for mut mapper in [Mapper::Random, Mapper::TcGreedy, Mapper::Rl(Box::new(RlMapper::new(RlSettings::default()).unwrap()))] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let r = run_episode(&env, &mut mapper, EpisodeOptions { epsilon: 0.3, epoch: 0 }, &mut rng).unwrap();
            let mut ids: Vec<u64> = r.decisions.iter().map(|d| d.task_id).collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..100).collect::<Vec<_>>());
            assert_eq!(r.dispatched, 100);
            assert_eq!(r.dispatched, r.completed + r.queued_at_end);
            for d in &r.decisions {
                assert!(d.completion_time.unwrap() > d.dispatch_time);
                assert!(d.dispatch_time + 1e-9 >= d.arrival);
                assert!(d.bin_reward.is_finite());
                if matches!(mapper, Mapper::Rl(_)) {
                    assert!(d.core_reward.unwrap().is_finite());
                }
            }
        }
    }

    #[test]
    fn cores_never_double_booked() {
        let env = Environment::build(&small_cfg(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Mapper::Rl(Box::new(RlMapper::new(RlSettings::default()).unwrap()));
        let r = run_episode(&env, &mut m, EpisodeOptions { epsilon: 0.5, epoch: 0 }, &mut rng).unwrap();
        for core in 0..16 {
            let mut spans: Vec<(f64, f64)> =
                r.decisions.iter().filter(|d| d.core == core).map(|d| (d.dispatch_time, d.completion_time.unwrap())).collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in spans.windows(2) {
                assert!(w[0].1 <= w[1].0 + 1e-9, "core {core}: {w:?}");
            }
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let env = Environment::build(&small_cfg(), 9).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut m = Mapper::Rl(Box::new(RlMapper::new(RlSettings::default()).unwrap()));
            run_episode(&env, &mut m, EpisodeOptions { epsilon: 0.4, epoch: 0 }, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.report, b.report);
        assert_eq!(a.decisions, b.decisions);
        assert_eq!(a.final_state, b.final_state);
    }

    #[test]
    fn workload_independent_of_mapper_and_pv_of_workload() {
        let cfg = small_cfg();
        let a = Environment::build(&cfg, 3).unwrap();
        let mut other = cfg.clone();
        other.experiment.mapper = MapperKind::Random;
        let b = Environment::build(&other, 3).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.pv, b.pv);
        let mut synthetic = cfg.clone();
        synthetic.workload.source = WorkloadSource::Synthetic;
        assert_eq!(Environment::build(&synthetic, 3).unwrap().pv, a.pv);
    }

    #[test]
    fn quantization_rounds_up_between_steps() {
        assert_eq!(quantize(0.0, 0.1), 0);
        assert_eq!(quantize(0.3, 0.1), 3);
        assert_eq!(quantize(0.31, 0.1), 4);
    }
}
