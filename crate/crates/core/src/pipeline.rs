//! Two-stage planner: greedy policy rollout with recorded histories, then
//! post-optimization against those histories, the safety check and the
//! emergency-brake fallback.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::neural::checkpoint;
use crate::parallel::Execution;
use crate::postopt::{
    jerk_metric, min_clearance, post_collision_check, rollout_controls, solve_lm, stays_on_road, OptConfig, OptProblem, SolveReport, Termination,
};
use crate::sac::{greedy_episode, PolicyNet};
use crate::sim::record::write_trajectory_csv;
use crate::sim::{Action, ActionLimits, EpisodeRecord, ScenarioConfig, VehicleState};

/// Greedy execution of the policy for one episode with every agent's
/// history recorded.
pub fn rollout_greedy(policy: &PolicyNet, scenario: Arc<ScenarioConfig>, seed: u64) -> Result<EpisodeRecord> {
    greedy_episode(policy, scenario, seed)
}

/// Straight-line braking at `a_min` until standstill, then zero input. The
/// last braking step is shortened so the speed lands exactly on zero.
pub fn emergency_brake(x0: VehicleState, dt: f64, n: usize, limits: &ActionLimits) -> Vec<Action> {
    let mut v = x0.v;
    (0..n)
        .map(|_| {
            if v <= 1e-9 || limits.a_min >= 0.0 {
                return Action::new(0.0, 0.0);
            }
            let a = limits.a_min.max(-v / dt);
            v = (v + a * dt).max(0.0);
            Action::new(0.0, a)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FallbackReason {
    /// The problem could not be built or solved.
    SolverError(String),
    NotConverged(Termination),
    /// The optimized trajectory overlaps a recorded agent.
    PostCheckFailed,
    /// The optimized trajectory touches a road edge.
    LeftRoad,
}

impl fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FallbackReason::SolverError(e) => write!(f, "solver error: {e}"),
            FallbackReason::NotConverged(t) => write!(f, "not converged ({})", t.as_str()),
            FallbackReason::PostCheckFailed => f.write_str("post collision check failed"),
            FallbackReason::LeftRoad => f.write_str("optimized trajectory leaves the road"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanMetrics {
    pub rl_jerk: f64,
    /// Jerk of the delivered controls.
    pub opt_jerk: f64,
    pub min_clearance_rl: f64,
    /// Minimum clearance of the delivered trajectory.
    pub min_clearance_opt: f64,
    pub rl_reward: f64,
    pub rl_collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub seed: u64,
    pub dt: f64,
    /// The greedy rollout: guiding reference, initial controls and the
    /// frozen histories of the other agents.
    pub rl: EpisodeRecord,
    /// None when the solve could not run at all.
    pub optimized: Option<SolveReport>,
    /// Either the checked optimizer output or the braking profile.
    pub controls: Vec<Action>,
    pub trajectory: Vec<VehicleState>,
    pub fallback: Option<FallbackReason>,
    /// Post collision check of the delivered trajectory.
    pub post_check_passed: bool,
    pub metrics: PlanMetrics,
}

impl PlanResult {
    pub fn fallback_engaged(&self) -> bool {
        self.fallback.is_some()
    }

    /// `key: value` lines followed by the solver report, if any.
    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "fallback_engaged: {}", self.fallback_engaged());
        if let Some(r) = &self.fallback {
            let _ = writeln!(s, "fallback_reason: {r}");
        }
        let _ = writeln!(s, "post_check_passed: {}", self.post_check_passed);
        let _ = writeln!(s, "rl_reward: {}", m.rl_reward);
        let _ = writeln!(s, "rl_collided: {}", m.rl_collided);
        let _ = writeln!(s, "rl_jerk: {}", m.rl_jerk);
        let _ = writeln!(s, "opt_jerk: {}", m.opt_jerk);
        let _ = writeln!(s, "min_clearance_rl: {}", m.min_clearance_rl);
        let _ = writeln!(s, "min_clearance_opt: {}", m.min_clearance_opt);
        if let Some(rep) = &self.optimized {
            s.push_str(&rep.to_text());
        }
        s
    }

    /// The greedy rollout in the episode CSV schema.
    pub fn rl_csv(&self) -> String {
        self.rl.to_csv(self.dt)
    }

    /// The delivered trajectory with the recorded histories, in the episode
    /// CSV schema (reward and collision columns zero).
    pub fn delivered_csv(&self) -> String {
        let n = self.controls.len();
        write_trajectory_csv(
            &self.trajectory,
            &self.controls,
            &vec![0.0; n],
            &vec![false; n],
            &self.rl.other_histories,
            self.dt,
        )
    }
}

/// Runs the full two-stage planner for one seed. Only rollout errors
/// (policy and scenario widths disagree) are returned; every failure of
/// the optimization stage engages the fallback instead. `exec` applies to
/// the Jacobian columns.
pub fn plan(policy: &PolicyNet, scenario: Arc<ScenarioConfig>, seed: u64, config: &OptConfig, exec: Execution) -> Result<PlanResult> {
    let rl = rollout_greedy(policy, Arc::clone(&scenario), seed)?;
    Ok(plan_from_record(rl, &scenario, seed, config, exec))
}

/// Second stage only, on an existing record.
pub fn plan_from_record(rl: EpisodeRecord, scenario: &ScenarioConfig, seed: u64, config: &OptConfig, exec: Execution) -> PlanResult {
    let solved = OptProblem::from_record(&rl, scenario, *config).and_then(|p| Ok((solve_lm(&p, exec)?, p)));
    let (optimized, fallback, problem) = match solved {
        Ok((rep, p)) => {
            let reason = if !rep.converged {
                Some(FallbackReason::NotConverged(rep.termination))
            } else if !rep.post_check_passed {
                Some(FallbackReason::PostCheckFailed)
            } else if !rep.stays_on_road {
                Some(FallbackReason::LeftRoad)
            } else {
                None
            };
            (Some(rep), reason, Some(p))
        }
        Err(e) => (None, Some(FallbackReason::SolverError(e.to_string())), None),
    };
    let x0 = rl.ego_states[0];
    let (controls, trajectory) = match (&optimized, &fallback) {
        (Some(rep), None) => (rep.controls.clone(), rep.trajectory.clone()),
        _ => {
            let u = emergency_brake(x0, scenario.dt, rl.steps(), &scenario.action_limits);
            let t = rollout_controls(x0, &u, scenario.dt, scenario.wheelbase).expect("braking from a recorded state stays finite");
            (u, t)
        }
    };
    let (post_check_passed, min_clear_rl, min_clear_opt) = match &problem {
        Some(p) => (
            post_collision_check(&trajectory, p),
            min_clearance(&rl.ego_states, p),
            min_clearance(&trajectory, p),
        ),
        None => (false, f64::NAN, f64::NAN),
    };
    let metrics = PlanMetrics {
        rl_jerk: jerk_metric(&rl.ego_actions, scenario.dt),
        opt_jerk: jerk_metric(&controls, scenario.dt),
        min_clearance_rl: min_clear_rl,
        min_clearance_opt: min_clear_opt,
        rl_reward: rl.total_reward(),
        rl_collided: rl.collided(),
    };
    debug_assert!(problem.as_ref().is_none_or(|p| fallback.is_some() || stays_on_road(&trajectory, p)));
    PlanResult {
        seed,
        dt: scenario.dt,
        rl,
        optimized,
        controls,
        trajectory,
        fallback,
        post_check_passed,
        metrics,
    }
}

/// Plans every seed; results come back in seed order. Parallelism is over
/// seeds, each solve runs its Jacobian sequentially.
pub fn plan_batch(policy: &PolicyNet, scenario: Arc<ScenarioConfig>, seeds: &[u64], config: &OptConfig, exec: Execution) -> Vec<Result<PlanResult>> {
    exec.map(seeds, |&seed| plan(policy, Arc::clone(&scenario), seed, config, Execution::Sequential))
}

/// Loads an actor checkpoint and attaches the scenario's action limits.
pub fn load_policy(path: impl AsRef<Path>, scenario: &ScenarioConfig) -> Result<PolicyNet> {
    let policy = PolicyNet::for_vehicle(checkpoint::load(path)?, &scenario.action_limits)?;
    if policy.obs_dim() != scenario.observation_dim() {
        return Err(Error::Shape {
            context: "checkpoint input width vs scenario observation",
            expected: scenario.observation_dim(),
            actual: policy.obs_dim(),
        });
    }
    Ok(policy)
}

/// Greedy success rate and mean return over a set of seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub runs: usize,
    pub successes: usize,
    /// Percent in [0, 100].
    pub success_rate: f64,
    pub avg_reward: f64,
}

pub const EVAL_CSV_HEADER: &str = "scenario,runs,success_rate,avg_reward";

impl EvalSummary {
    pub fn csv_row(&self, scenario: &str) -> String {
        format!("{scenario},{},{:.2},{:.2}", self.runs, self.success_rate, self.avg_reward)
    }
}

pub fn evaluate(policy: &PolicyNet, scenario: Arc<ScenarioConfig>, seeds: &[u64], exec: Execution) -> Result<EvalSummary> {
    let records = exec.map(seeds, |&seed| {
        rollout_greedy(policy, Arc::clone(&scenario), seed).map(|r| (r.success, r.total_reward()))
    });
    let mut successes = 0;
    let mut total = 0.0;
    for r in records {
        let (ok, ret) = r?;
        successes += ok as usize;
        total += ret;
    }
    let runs = seeds.len();
    let denom = runs.max(1) as f64;
    Ok(EvalSummary {
        runs,
        successes,
        success_rate: 100.0 * successes as f64 / denom,
        avg_reward: total / denom,
    })
}

/// Aggregate over a batch of plans.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchSummary {
    pub plans: usize,
    pub fallbacks: usize,
    /// Delivered non-fallback plans that fail the post check. Zero unless
    /// the pipeline is broken.
    pub unsafe_delivered: usize,
    pub rl_collisions: usize,
    /// Σ opt_jerk / Σ rl_jerk over plans delivering optimizer output.
    pub jerk_ratio: f64,
    pub mean_rl_reward: f64,
}

pub fn summarize(results: &[PlanResult]) -> BatchSummary {
    let mut s = BatchSummary {
        plans: results.len(),
        ..Default::default()
    };
    let (mut num, mut den) = (0.0, 0.0);
    for r in results {
        s.fallbacks += r.fallback_engaged() as usize;
        s.unsafe_delivered += (!r.fallback_engaged() && !r.post_check_passed) as usize;
        s.rl_collisions += r.metrics.rl_collided as usize;
        s.mean_rl_reward += r.metrics.rl_reward;
        if !r.fallback_engaged() {
            num += r.metrics.opt_jerk;
            den += r.metrics.rl_jerk;
        }
    }
    s.jerk_ratio = if den > 0.0 { num / den } else { f64::NAN };
    if !results.is_empty() {
        s.mean_rl_reward /= results.len() as f64;
    }
    s
}
