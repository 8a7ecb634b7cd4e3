use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{LossReport, SacAgent};
use super::config::SacConfig;
use super::policy::{greedy_action, PolicyNet};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::neural::checkpoint;
use crate::sim::{Action, EpisodeRecord, ScenarioConfig, World};

pub const CURVE_CSV_HEADER: &str = "episode,avg_reward";

/// Validation worlds are drawn from seeds at and above this value so they
/// never coincide with the small evaluation seeds.
pub const VALIDATION_SEED_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    /// Mean episode return over the trailing window.
    pub avg_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub episode_return: f64,
    pub avg_reward: f64,
    pub steps: usize,
    pub collided: bool,
    pub total_env_steps: usize,
    pub last_loss: Option<LossReport>,
    /// Greedy validation score (success rate, mean return), when run.
    pub validation: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: SacAgent,
    pub curve: Vec<CurvePoint>,
    /// Best validated policy and its (success rate, mean return).
    pub best: Option<(PolicyNet, (f64, f64))>,
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from(CURVE_CSV_HEADER);
    s.push('\n');
    for p in curve {
        let _ = writeln!(s, "{},{}", p.episode, p.avg_reward);
    }
    s
}

/// Runs one episode with the greedy policy.
pub fn greedy_episode(policy: &PolicyNet, scenario: Arc<ScenarioConfig>, seed: u64) -> Result<EpisodeRecord> {
    if policy.obs_dim() != scenario.observation_dim() {
        return Err(Error::Shape {
            context: "policy input width vs scenario observation",
            expected: scenario.observation_dim(),
            actual: policy.obs_dim(),
        });
    }
    if policy.action_dim() != 2 {
        return Err(Error::Shape {
            context: "policy action width",
            expected: 2,
            actual: policy.action_dim(),
        });
    }
    let mut world = World::reset(scenario, seed)?;
    while !world.is_done() {
        let a = greedy_action(policy, &world.observe_normalized())?;
        world.step(a)?;
    }
    Ok(world.into_record())
}

fn validate(policy: &PolicyNet, scenario: &Arc<ScenarioConfig>, episodes: usize) -> Result<(f64, f64)> {
    let mut wins = 0;
    let mut total = 0.0;
    for k in 0..episodes {
        let rec = greedy_episode(policy, Arc::clone(scenario), VALIDATION_SEED_BASE + k as u64)?;
        wins += rec.success as usize;
        total += rec.total_reward();
    }
    let n = episodes.max(1) as f64;
    Ok((wins as f64 / n, total / n))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_outputs(dir: &Path, agent: &SacAgent, curve: &[CurvePoint]) -> Result<()> {
    checkpoint::save(agent.policy().net(), dir.join("actor.ckpt"))?;
    for (i, c) in agent.critics().iter().enumerate() {
        checkpoint::save(c, dir.join(format!("critic{}.ckpt", i + 1)))?;
    }
    write_file(&dir.join("training_curve.csv"), curve_to_csv(curve))
}

/// Trains a policy on `scenario`. With `out_dir`, writes `actor.ckpt`,
/// the critics and `training_curve.csv` periodically and at the end, plus
/// `actor_best.ckpt` whenever greedy validation improves.
pub fn train(
    scenario: &ScenarioConfig,
    cfg: &SacConfig,
    episodes: usize,
    seed: u64,
    out_dir: Option<&Path>,
    mut on_episode: impl FnMut(&EpisodeStats),
) -> Result<TrainOutcome> {
    scenario.validate()?;
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let scenario = Arc::new(scenario.clone());
    let limits = scenario.action_limits;
    let (low, high) = (limits.low(), limits.high());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut episode_rng = ChaCha8Rng::seed_from_u64(seed);
    episode_rng.set_stream(2);

    let obs_dim = scenario.observation_dim();
    let mut agent = SacAgent::new(obs_dim, low.to_vec(), high.to_vec(), cfg.clone(), &mut rng)?;
    let mut buffer = ReplayBuffer::new(obs_dim, 2, cfg.buffer_capacity)?;
    let mut returns: Vec<f64> = Vec::with_capacity(episodes);
    let mut curve = Vec::with_capacity(episodes);
    let mut best: Option<(PolicyNet, (f64, f64))> = None;
    let mut total_steps = 0usize;
    let mut last_loss = None;

    for episode in 0..episodes {
        let mut world = World::reset(Arc::clone(&scenario), episode_rng.next_u64())?;
        let mut obs = world.observe_normalized();
        let mut ret = 0.0;
        loop {
            let squashed: Vec<f64> = if total_steps < cfg.warmup_steps {
                (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()
            } else {
                agent.policy().sample(&obs, &mut rng)?.squashed
            };
            let act: Vec<f64> = (0..2).map(|i| 0.5 * (high[i] + low[i]) + 0.5 * (high[i] - low[i]) * squashed[i]).collect();
            let out = world.step(Action::new(act[0], act[1]))?;
            let next = world.observe_normalized();
            buffer.push(&obs, &squashed, out.reward, &next, out.collided)?;
            ret += out.reward;
            total_steps += 1;
            if total_steps >= cfg.warmup_steps && buffer.len() >= cfg.batch_size && total_steps.is_multiple_of(cfg.steps_per_update) {
                last_loss = Some(agent.update(&buffer, &mut rng)?);
            }
            obs = next;
            if out.done {
                break;
            }
        }
        returns.push(ret);
        let window = &returns[returns.len().saturating_sub(cfg.curve_window)..];
        let avg = window.iter().sum::<f64>() / window.len() as f64;
        curve.push(CurvePoint {
            episode: episode + 1,
            avg_reward: avg,
        });

        let mut validation = None;
        if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
            let score = validate(agent.policy(), &scenario, cfg.eval_episodes)?;
            validation = Some(score);
            let better = best.as_ref().is_none_or(|(_, b)| score.0 > b.0 || (score.0 == b.0 && score.1 > b.1));
            if better {
                if let Some(dir) = out_dir {
                    checkpoint::save(agent.policy().net(), dir.join("actor_best.ckpt"))?;
                }
                best = Some((agent.policy().clone(), score));
            }
        }
        on_episode(&EpisodeStats {
            episode: episode + 1,
            episode_return: ret,
            avg_reward: avg,
            steps: world.step_count(),
            collided: world.record().collided(),
            total_env_steps: total_steps,
            last_loss,
            validation,
        });
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
                write_outputs(dir, &agent, &curve)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        write_outputs(dir, &agent, &curve)?;
    }
    Ok(TrainOutcome { agent, curve, best })
}
