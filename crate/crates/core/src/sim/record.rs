use std::fmt::Write as _;

use super::dynamics::{Action, VehicleState};

pub const EPISODE_CSV_HEADER: &str = "t,agent_id,x,y,theta,v,delta,a,reward,collided";

/// Everything that happened in one episode: the bridge between a policy
/// rollout and the post-optimization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord {
    /// N+1 ego states.
    pub ego_states: Vec<VehicleState>,
    /// N ego inputs as applied (after clamping).
    pub ego_actions: Vec<Action>,
    /// One N+1 state list per non-ego agent, in config order.
    pub other_histories: Vec<Vec<VehicleState>>,
    pub rewards: Vec<f64>,
    pub collisions: Vec<bool>,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn start(states: &[VehicleState]) -> Self {
        Self {
            ego_states: vec![states[0]],
            ego_actions: Vec::new(),
            other_histories: states[1..].iter().map(|s| vec![*s]).collect(),
            rewards: Vec::new(),
            collisions: Vec::new(),
            success: false,
        }
    }

    pub fn push(&mut self, action: Action, states: &[VehicleState], reward: f64, collided: bool) {
        self.ego_actions.push(action);
        self.ego_states.push(states[0]);
        for (h, s) in self.other_histories.iter_mut().zip(&states[1..]) {
            h.push(*s);
        }
        self.rewards.push(reward);
        self.collisions.push(collided);
    }

    pub fn steps(&self) -> usize {
        self.ego_actions.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn collided(&self) -> bool {
        self.collisions.iter().any(|&c| c)
    }

    /// Lengths agree with the executed step count.
    pub fn is_consistent(&self) -> bool {
        let n = self.steps();
        self.ego_states.len() == n + 1 && self.rewards.len() == n && self.collisions.len() == n && self.other_histories.iter().all(|h| h.len() == n + 1)
    }

    /// One row per agent per step. Row `k` carries the state at step `k` and,
    /// for the ego, the input applied from `k` and the reward it earned; the
    /// final row and non-ego rows carry zeros there.
    pub fn to_csv(&self, dt: f64) -> String {
        write_trajectory_csv(&self.ego_states, &self.ego_actions, &self.rewards, &self.collisions, &self.other_histories, dt)
    }
}

/// Writes the shared trajectory CSV schema. Used both for recorded episodes
/// and for optimized trajectories paired with the recorded histories.
pub fn write_trajectory_csv(ego: &[VehicleState], actions: &[Action], rewards: &[f64], collisions: &[bool], others: &[Vec<VehicleState>], dt: f64) -> String {
    let mut out = String::new();
    out.push_str(EPISODE_CSV_HEADER);
    out.push('\n');
    for (k, s) in ego.iter().enumerate() {
        let t = k as f64 * dt;
        let u = actions.get(k).copied().unwrap_or_default();
        let r = rewards.get(k).copied().unwrap_or(0.0);
        // collision flag describes the state at step k, reached by input k-1
        let c = k > 0 && collisions.get(k - 1).copied().unwrap_or(false);
        row(&mut out, t, 0, s, u.delta, u.a, r, c);
        for (j, h) in others.iter().enumerate() {
            if let Some(o) = h.get(k) {
                row(&mut out, t, j + 1, o, 0.0, 0.0, 0.0, false);
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn row(out: &mut String, t: f64, id: usize, s: &VehicleState, delta: f64, a: f64, r: f64, c: bool) {
    let _ = writeln!(out, "{t:.3},{id},{},{},{},{},{delta},{a},{r},{}", s.x, s.y, s.theta, s.v, c as u8);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_row_per_agent_per_step() {
        let s = [VehicleState::new(0.0, 0.0, 0.0, 5.0), VehicleState::new(10.0, 3.5, 0.0, 5.0)];
        let mut rec = EpisodeRecord::start(&s);
        rec.push(Action::new(0.1, 0.5), &s, 19.5, false);
        rec.push(Action::new(0.0, 0.0), &s, -80.0, true);
        assert!(rec.is_consistent());
        let csv = rec.to_csv(0.2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], EPISODE_CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[1].starts_with("0.000,0,0,0,0,5,0.1,0.5,19.5,0"));
        assert!(lines[5].ends_with(",1"));
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 10);
            for f in l.split(',') {
                f.parse::<f64>().unwrap();
            }
        }
    }
}
