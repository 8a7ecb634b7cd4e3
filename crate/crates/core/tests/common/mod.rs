#![allow(dead_code)]

use lanemerge::sac::{ReplayBuffer, SacAgent, SacConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BANDIT_OPTIMUM: f64 = 0.3;

/// Single-state bandit with reward −(a − 0.3)² over a ∈ [−1, 1]. Returns
/// the greedy action after `updates` gradient steps.
pub fn run_bandit(updates: usize, seed: u64) -> f64 {
    let cfg = SacConfig {
        batch_size: 64,
        warmup_steps: 0,
        actor_hidden: vec![32, 32],
        critic_hidden: vec![32, 32],
        actor_lr: 1e-3,
        critic_lr: 1e-3,
        alpha_lr: 1e-3,
        reward_scale: 1.0,
        ..SacConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = SacAgent::new(1, vec![-1.0], vec![1.0], cfg, &mut rng).unwrap();
    let mut buf = ReplayBuffer::new(1, 1, 100_000).unwrap();
    let obs = [1.0];
    let mut done_updates = 0;
    while done_updates < updates {
        let s = agent.policy().sample(&obs, &mut rng).unwrap();
        let r = -(s.action[0] - BANDIT_OPTIMUM).powi(2);
        buf.push(&obs, &s.squashed, r, &obs, true).unwrap();
        if buf.len() >= 64 {
            agent.update(&buf, &mut rng).unwrap();
            done_updates += 1;
        }
    }
    agent.policy().greedy(&obs).unwrap()[0]
}
