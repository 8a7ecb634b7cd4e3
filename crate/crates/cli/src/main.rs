//! `lanemerge`: train, evaluate, plan and time lane-merge policies.
//!
//! Exit codes: 0 clean, 2 fallback engaged (plan), 1 usage or config error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lanemerge::pipeline::{evaluate, load_policy, plan, summarize, PlanResult, EVAL_CSV_HEADER};
use lanemerge::postopt::{solve_lm, OptConfig, OptProblem};
use lanemerge::sac::{greedy_action, train, SacConfig};
use lanemerge::sim::{ScenarioConfig, World};
use lanemerge::Execution;

#[derive(Parser)]
#[command(
    name = "lanemerge",
    version,
    about = "Lane-merge behavior generation: SAC guidance plus least-squares post-optimization"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy and write checkpoints plus the training curve.
    Train(TrainArgs),
    /// Greedy success rate and average reward over consecutive seeds.
    Eval(EvalArgs),
    /// Run the two-stage planner for one seed, or a batch of seeds.
    Plan(PlanArgs),
    /// Time policy inference and post-optimization solves.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or one of two_lane_3v, two_lane_4v, highway_5v.
    #[arg(long)]
    scenario: String,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// SAC config file; the desk-scale defaults when omitted.
    #[arg(long)]
    sac_config: Option<PathBuf>,
    #[arg(long)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Print a progress line every this many episodes (0 disables).
    #[arg(long, default_value_t = 10)]
    progress_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    /// First seed; runs use seed, seed+1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan seeds seed..seed+runs and write per-seed and aggregate rows.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Post-optimization config file; defaults when omitted.
    #[arg(long)]
    opt_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    opt_config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Plan(a) => cmd_plan(a),
        Cmd::Bench(a) => cmd_bench(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

impl Common {
    fn scenario(&self) -> Result<Arc<ScenarioConfig>> {
        let sc = ScenarioConfig::resolve(&self.scenario).with_context(|| format!("scenario `{}`", self.scenario))?;
        Ok(Arc::new(sc))
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn opt_config(path: &Option<PathBuf>) -> Result<OptConfig> {
    match path {
        Some(p) => OptConfig::load(p).with_context(|| format!("opt config {}", p.display())),
        None => Ok(OptConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let scenario = a.common.scenario()?;
    let cfg = match &a.sac_config {
        Some(p) => SacConfig::load(p).with_context(|| format!("sac config {}", p.display()))?,
        None => SacConfig::desk(),
    };
    let t0 = Instant::now();
    let every = a.progress_every;
    let out = train(&scenario, &cfg, a.episodes, a.seed, Some(&a.out), |s| {
        if (every > 0 && s.episode % every == 0) || s.validation.is_some() {
            let mut line = format!(
                "episode {} return {:.1} avg {:.1} collided {} env_steps {} elapsed {:.0}s",
                s.episode,
                s.episode_return,
                s.avg_reward,
                s.collided,
                s.total_env_steps,
                t0.elapsed().as_secs_f64()
            );
            if let Some((rate, ret)) = s.validation {
                let _ = write!(line, " validation success {:.2} return {:.1}", rate, ret);
            }
            println!("{line}");
        }
    })?;
    if let Some(p) = out.curve.last() {
        println!("final avg_reward {:.2} after {} episodes", p.avg_reward, p.episode);
    }
    println!("wrote {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> Result<ExitCode> {
    let scenario = a.common.scenario()?;
    let policy = load_policy(&a.checkpoint, &scenario).with_context(|| format!("checkpoint {}", a.checkpoint.display()))?;
    let seeds: Vec<u64> = (a.seed..a.seed + a.runs).collect();
    let summary = evaluate(&policy, Arc::clone(&scenario), &seeds, a.common.exec())?;
    let csv = format!("{EVAL_CSV_HEADER}\n{}\n", summary.csv_row(&scenario.name));
    print!("{csv}");
    if let Some(p) = &a.out {
        write(p, &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

const PLANS_CSV_HEADER: &str = "seed,fallback,reason,post_check_passed,rl_reward,rl_collided,rl_jerk,opt_jerk,min_clearance_rl,min_clearance_opt,iterations";
const SUMMARY_CSV_HEADER: &str = "scenario,plans,fallbacks,unsafe_delivered,rl_collisions,jerk_ratio,mean_rl_reward";

fn plan_row(r: &PlanResult) -> String {
    let m = &r.metrics;
    format!(
        "{},{},{},{},{:.3},{},{:.6},{:.6},{:.4},{:.4},{}",
        r.seed,
        r.fallback_engaged() as u8,
        r.fallback.as_ref().map(|f| f.to_string().replace(',', ";")).unwrap_or_default(),
        r.post_check_passed as u8,
        m.rl_reward,
        m.rl_collided as u8,
        m.rl_jerk,
        m.opt_jerk,
        m.min_clearance_rl,
        m.min_clearance_opt,
        r.optimized.as_ref().map_or(0, |o| o.iterations)
    )
}

fn breakdown_csv(r: &PlanResult) -> String {
    let mut s = String::from("term,initial,final\n");
    if let Some(o) = &r.optimized {
        let (i, f) = (&o.initial_breakdown, &o.final_breakdown);
        for (name, a, b) in [
            ("tracking", i.tracking, f.tracking),
            ("jerk", i.jerk, f.jerk),
            ("collision", i.collision, f.collision),
            ("boundary", i.boundary, f.boundary),
            ("limits", i.limits, f.limits),
            ("total", i.total(), f.total()),
        ] {
            let _ = writeln!(s, "{name},{a},{b}");
        }
    }
    s
}

fn cmd_plan(a: PlanArgs) -> Result<ExitCode> {
    let scenario = a.common.scenario()?;
    let policy = load_policy(&a.checkpoint, &scenario).with_context(|| format!("checkpoint {}", a.checkpoint.display()))?;
    let cfg = opt_config(&a.opt_config)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let exec = a.common.exec();
    if a.runs <= 1 {
        let r = plan(&policy, Arc::clone(&scenario), a.seed, &cfg, exec)?;
        write(&a.out.join("plan.txt"), &r.to_text())?;
        write(&a.out.join("rl_trajectory.csv"), &r.rl_csv())?;
        write(&a.out.join("optimized_trajectory.csv"), &r.delivered_csv())?;
        write(&a.out.join("cost_breakdown.csv"), &breakdown_csv(&r))?;
        print!("{}", r.to_text());
        return Ok(if r.fallback_engaged() { ExitCode::from(2) } else { ExitCode::SUCCESS });
    }
    let seeds: Vec<u64> = (a.seed..a.seed + a.runs).collect();
    let results = exec
        .map(&seeds, |&seed| plan(&policy, Arc::clone(&scenario), seed, &cfg, Execution::Sequential))
        .into_iter()
        .collect::<lanemerge::Result<Vec<_>>>()?;
    let mut rows = format!("{PLANS_CSV_HEADER}\n");
    for r in &results {
        rows.push_str(&plan_row(r));
        rows.push('\n');
    }
    let s = summarize(&results);
    let summary = format!(
        "{SUMMARY_CSV_HEADER}\n{},{},{},{},{},{:.6},{:.3}\n",
        scenario.name, s.plans, s.fallbacks, s.unsafe_delivered, s.rl_collisions, s.jerk_ratio, s.mean_rl_reward
    );
    write(&a.out.join("plans.csv"), &rows)?;
    write(&a.out.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(if s.fallbacks > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

const BENCH_CSV_HEADER: &str = "phase,mean_ms,p95_ms";

fn stats(mut ms: Vec<f64>) -> (f64, f64) {
    if ms.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    ms.sort_by(f64::total_cmp);
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    let idx = ((ms.len() as f64 * 0.95).ceil() as usize).clamp(1, ms.len()) - 1;
    (mean, ms[idx])
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let scenario = a.common.scenario()?;
    let policy = load_policy(&a.checkpoint, &scenario).with_context(|| format!("checkpoint {}", a.checkpoint.display()))?;
    let cfg = opt_config(&a.opt_config)?;
    let mut infer = Vec::new();
    let mut solve = Vec::new();
    for seed in a.seed..a.seed + a.runs {
        let mut world = World::reset(Arc::clone(&scenario), seed)?;
        while !world.is_done() {
            let t = Instant::now();
            let u = greedy_action(&policy, &world.observe_normalized())?;
            infer.push(t.elapsed().as_secs_f64() * 1e3);
            world.step(u)?;
        }
        let rec = world.into_record();
        let t = Instant::now();
        let p = OptProblem::from_record(&rec, &scenario, cfg)?;
        solve_lm(&p, a.common.exec())?;
        solve.push(t.elapsed().as_secs_f64() * 1e3);
    }
    println!("{BENCH_CSV_HEADER}");
    for (phase, v) in [("inference", infer), ("solve", solve)] {
        let (mean, p95) = stats(v);
        println!("{phase},{mean:.4},{p95:.4}");
    }
    Ok(ExitCode::SUCCESS)
}
