use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use relmap::harness::experiment::{evaluate_rl, mapper_labels, sweep_csv};
use relmap::harness::output::{decisions_csv, learning_curve_csv, write_file};
use relmap::harness::{compare, emit_heatmap, run_mapper, sweep, train, Environment, EpisodeResult, SimConfig};
use relmap::mapper::{MapperKind, RlMapper};
use relmap::rlcore::QTable;

/// Lifetime-reliability simulator with two-level Q-learning task mapping.
#[derive(Debug, Parser)]
#[command(name = "relmap", version)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed. For `compare` and `sweep` it replaces the seed list with
    /// as many consecutive seeds starting here.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// rl, random or tc_greedy.
    #[arg(long, global = true)]
    mapper: Option<MapperKind>,
    /// RL training episodes.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode with the selected mapper.
    Simulate {
        /// Directory holding `q_bin.txt` and `q_core.txt` from `train`.
        #[arg(long)]
        q_dir: Option<PathBuf>,
    },
    /// Train the RL mapper and evaluate it greedily.
    Train,
    /// Evaluate several mappers over the seed list.
    Compare {
        /// Comma-separated mapper list; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        mappers: Option<Vec<MapperKind>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Repeat the comparison over values of one dotted config key.
    Sweep {
        /// e.g. `clustering.epsilon`
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.seed = s;
        let n = cfg.experiment.seeds.len().max(1) as u64;
        cfg.experiment.seeds = (s..s + n).collect();
    }
    if let Some(m) = cli.mapper {
        cfg.experiment.mapper = m;
    }
    if let Some(e) = cli.episodes {
        cfg.experiment.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_episode(dir: &Path, cfg: &SimConfig, r: &EpisodeResult, tag: &str) -> Result<()> {
    write_file(dir, "mttf_report.csv", &r.report.to_csv())?;
    write_file(dir, "decisions.csv", &decisions_csv(&r.decisions))?;
    write_file(dir, "temperatures.csv", &r.temperatures.to_csv())?;
    let mut summary = r.report.summary_json();
    summary["tasks_dispatched"] = r.dispatched.into();
    summary["tasks_completed"] = r.completed.into();
    summary["final_spread_K"] = r.final_state.spread().into();
    write_file(dir, "summary.json", &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    emit_heatmap(&r.final_state, cfg.grid.rows, cfg.grid.cols, dir, tag)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    let out = &cli.out_dir;
    match &cli.command {
        Command::PrintConfig => print!("{}", cfg.to_toml()),
        Command::Simulate { q_dir } => {
            let env = Environment::build(&cfg, cfg.experiment.seed)?;
            let r = match (cfg.experiment.mapper, q_dir) {
                (MapperKind::Rl, Some(q)) => {
                    let mut rl = RlMapper::new(cfg.rl)?;
                    rl.bin_table = QTable::load(&q.join("q_bin.txt"))?;
                    rl.core_table = QTable::load(&q.join("q_core.txt"))?;
                    evaluate_rl(&env, &rl)?
                }
                (MapperKind::Rl, None) => evaluate_rl(&env, &RlMapper::new(cfg.rl)?)?,
                (kind, _) => run_mapper(&env, kind, 0)?,
            };
            write_file(out, "trace.csv", &env.trace.to_csv())?;
            write_episode(out, &cfg, &r, "final")?;
            println!(
                "{} tasks on {} cores, system combined MTTF {:.4} years, final spread {:.3} K",
                r.dispatched,
                env.cores(),
                r.report.system.combined,
                r.final_state.spread()
            );
        }
        Command::Train => {
            if cfg.experiment.mapper != MapperKind::Rl {
                bail!("train needs --mapper rl (config selects {})", cfg.experiment.mapper);
            }
            let t = train(&cfg, cfg.experiment.episodes)?;
            std::fs::create_dir_all(out)?;
            write_file(out, "learning_curve.csv", &learning_curve_csv(&t.curve))?;
            t.mapper.bin_table.save(&out.join("q_bin.txt"))?;
            t.mapper.core_table.save(&out.join("q_core.txt"))?;
            let env = Environment::build(&cfg, cfg.experiment.seed)?;
            let r = evaluate_rl(&env, &t.mapper)?;
            write_episode(out, &cfg, &r, "trained")?;
            println!("trained {} episodes; greedy system combined MTTF {:.4} years", t.curve.len(), r.report.system.combined);
        }
        Command::Compare { mappers, seeds } => {
            let mappers = mappers.clone().unwrap_or_else(|| cfg.experiment.mappers.clone());
            let seeds = seeds.clone().unwrap_or_else(|| cfg.experiment.seeds.clone());
            let report = compare(&cfg, &mappers, &seeds)?;
            write_file(out, "comparison.json", &report.to_json())?;
            write_file(out, "comparison.csv", &report.to_csv())?;
            for (label, summary) in mapper_labels(&mappers).iter().zip(&report.mappers) {
                for run in &summary.runs {
                    let state = relmap::thermal::ThermalState { temps: run.final_temps.clone(), time: 0.0 };
                    let tag = format!("{}_seed{}", label.replace('#', "_"), run.seed);
                    emit_heatmap(&state, cfg.grid.rows, cfg.grid.cols, out, &tag)?;
                }
            }
            print!("{}", report.to_csv());
            for s in &report.mappers[1..] {
                let first = &report.mappers[0].label;
                let v = report.improvement(first, &s.label, relmap::reliability::Mechanism::Combined).unwrap_or(f64::NAN);
                println!("{first} over {}: {:+.2}% combined MTTF", s.label, 100.0 * v);
            }
        }
        Command::Sweep { param, values } => {
            let points = sweep(&cfg, param, values)?;
            let csv = sweep_csv(param, &points);
            write_file(out, "sweep.csv", &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}
