use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use frenet_lab::agents::{train_ddpg, train_dqn, write_curve_csv};
use frenet_lab::config::Config;
use frenet_lab::env::{run_episode, HighwayEnv};
use frenet_lab::eval::{
    compute_metrics, plan_snapshot, run_benchmark, run_case_study, AgentInstance, AgentSpec, BenchmarkOptions,
    PlanSnapshot, CASE_IDS,
};
use frenet_lab::sim::ScenarioConfig;

#[derive(Parser)]
#[command(name = "frenet-lab", version, about = "Frenet lattice planning and RL agents on a seeded highway simulator")]
struct Cli {
    /// Configuration file; falls back to $FRENET_LAB_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its summary and metrics.
    Simulate {
        /// `baseline`, `dqn[=weights]` or `ddpg[=weights]`.
        #[arg(long, default_value = "baseline")]
        agent: String,
        /// Driving profile of the baseline agent.
        #[arg(long, value_enum, default_value_t = Profile::Safe)]
        profile: Profile,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML scenario replacing the configured one.
        #[arg(long)]
        scenario_file: Option<PathBuf>,
        /// Write the JSONL episode log here.
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// Train a learning agent and save its weights.
    Train {
        #[arg(long, value_enum)]
        agent: Learner,
        /// Weight file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-episode reward curve as CSV.
        #[arg(long)]
        curve_out: Option<PathBuf>,
        /// Use the built-in two-lane overtaking task instead of the configured environment.
        #[arg(long)]
        toy: bool,
        /// Override the configured number of environment steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Save the network with the best 100-episode average instead of the last one.
        #[arg(long)]
        keep_best: bool,
    },
    /// Run agents over shared seeded scenarios and report Speed/Safety/Comfort.
    Evaluate {
        /// Comma-separated: safe, agile, dqn[=weights], ddpg[=weights].
        #[arg(long, default_value = "safe,agile")]
        agents: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Directory receiving rows.csv and summary.json.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Directory receiving one JSONL log per episode.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Run the scripted case studies.
    CaseStudy {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        #[arg(long, default_value = "safe,agile")]
        agents: String,
        /// Directory receiving the SVG snapshot, metrics CSV and logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the lattice planner once on a frozen scene and dump every candidate.
    Plan {
        #[arg(long)]
        snapshot_file: PathBuf,
        #[arg(long)]
        svg_out: Option<PathBuf>,
        /// Candidate CSV destination; stdout when omitted.
        #[arg(long)]
        csv_out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Safe,
    Agile,
}

#[derive(Clone, Copy, ValueEnum)]
enum Learner {
    Dqn,
    Ddpg,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(
    cfg: &Config,
    agent: &str,
    profile: Profile,
    seed: u64,
    scenario_file: Option<&Path>,
    log_out: Option<&Path>,
) -> Result<()> {
    let spec = if agent == "baseline" {
        match profile {
            Profile::Safe => AgentSpec::Safe,
            Profile::Agile => AgentSpec::Agile,
        }
    } else {
        agent.parse()?
    };
    let mut env_cfg = cfg.env.clone();
    if let Some(p) = scenario_file {
        env_cfg.scenario = toml::from_str::<ScenarioConfig>(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
    }
    let mut policy: AgentInstance = spec.instantiate(cfg)?;
    let log = run_episode(&mut policy, &env_cfg, seed)?;
    let metrics = compute_metrics(&log, &cfg.metrics).ok();
    let out = serde_json::json!({ "summary": log.summary, "metrics": metrics });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(p) = log_out {
        log.save(p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn train(cfg: &Config, agent: Learner, out: &Path, curve_out: Option<&Path>, toy: bool, steps: Option<usize>, keep_best: bool) -> Result<()> {
    let base = if toy { Config::toy_dqn() } else { cfg.clone() };
    let mut env = HighwayEnv::new(base.env.clone())?;
    let (curve, total) = match agent {
        Learner::Dqn => {
            let mut tc = base.dqn.clone();
            tc.total_steps = steps.unwrap_or(tc.total_steps);
            let o = train_dqn(&mut env, &tc)?;
            let chosen = if keep_best { o.best.as_ref().unwrap_or(&o.agent) } else { &o.agent };
            chosen.save(out)?;
            (o.curve, o.steps)
        }
        Learner::Ddpg => {
            let mut tc = base.ddpg.clone();
            tc.total_steps = steps.unwrap_or(tc.total_steps);
            let o = train_ddpg(&mut env, &tc)?;
            let chosen = if keep_best { o.best.as_ref().unwrap_or(&o.agent) } else { &o.agent };
            chosen.save(out)?;
            (o.curve, o.steps)
        }
    };
    if let Some(p) = curve_out {
        write_curve_csv(&curve, p)?;
    }
    let last = curve.last().map(|c| c.moving_avg_100).unwrap_or(0.0);
    println!(
        "trained {} episodes ({total} steps); final 100-episode mean reward {last:.2}; weights in {}",
        curve.len(),
        out.display()
    );
    Ok(())
}

fn evaluate(cfg: &Config, agents: &str, opts: BenchmarkOptions, report_out: Option<&Path>) -> Result<()> {
    let agents = AgentSpec::parse_list(agents)?;
    let report = run_benchmark(&agents, &opts, cfg)?;
    print!("{}", report.summary_table());
    if let Some(dir) = report_out {
        report.write(dir).with_context(|| format!("writing report to {}", dir.display()))?;
    }
    Ok(())
}

fn case_study(cfg: &Config, id: u8, agents: &str, out: Option<&Path>) -> Result<()> {
    if !CASE_IDS.contains(&id) {
        bail!("unknown case study {id}");
    }
    let agents = AgentSpec::parse_list(agents)?;
    let report = run_case_study(id, &agents, cfg)?;
    print!("{}", report.metrics_csv());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join(format!("case{id}.svg")), &report.svg)?;
        write(&dir.join(format!("case{id}.csv")), &report.metrics_csv())?;
        for r in &report.results {
            r.log.save(&dir.join(format!("case{id}-{}.jsonl", r.agent)))?;
        }
    }
    Ok(())
}

fn plan(cfg: &Config, snapshot_file: &Path, svg_out: Option<&Path>, csv_out: Option<&Path>) -> Result<()> {
    let snap = PlanSnapshot::from_toml(&read(snapshot_file)?).with_context(|| format!("parsing {}", snapshot_file.display()))?;
    let report = plan_snapshot(&snap, cfg)?;
    match csv_out {
        Some(p) => write(p, &report.csv())?,
        None => print!("{}", report.csv()),
    }
    if let Some(p) = svg_out {
        write(p, &report.svg())?;
    }
    let feasible = report.rows.iter().filter(|r| r.feasible).count();
    eprintln!(
        "{} candidates, {feasible} feasible, chosen {}",
        report.rows.len(),
        report.chosen.map_or("none (braking fallback)".to_string(), |i| format!("#{i}"))
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate {
            agent,
            profile,
            seed,
            scenario_file,
            log_out,
        } => simulate(&cfg, &agent, profile, seed, scenario_file.as_deref(), log_out.as_deref()),
        Command::Train {
            agent,
            out,
            curve_out,
            toy,
            steps,
            keep_best,
        } => train(&cfg, agent, &out, curve_out.as_deref(), toy, steps, keep_best),
        Command::Evaluate {
            agents,
            n,
            base_seed,
            workers,
            report_out,
            log_dir,
        } => {
            let opts = BenchmarkOptions {
                n,
                base_seed,
                workers,
                log_dir,
            };
            evaluate(&cfg, &agents, opts, report_out.as_deref())
        }
        Command::CaseStudy { id, agents, out } => case_study(&cfg, id, &agents, out.as_deref()),
        Command::Plan {
            snapshot_file,
            svg_out,
            csv_out,
        } => plan(&cfg, &snapshot_file, svg_out.as_deref(), csv_out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
