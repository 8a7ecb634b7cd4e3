use rand::Rng;

use crate::error::{Error, Result};

/// A sampled minibatch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Vec<f64>,
    /// Actions rescaled to (-1, 1), i.e. tanh of the pre-squash sample.
    pub act: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Ring buffer of transitions. Storage grows on demand up to `capacity`,
/// then the oldest entries are overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    cursor: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        Ok(Self {
            obs_dim,
            act_dim,
            capacity,
            cursor: 0,
            obs: Vec::new(),
            act: Vec::new(),
            reward: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], act: &[f64], reward: f64, next_obs: &[f64], done: bool) -> Result<()> {
        for (ctx, got, want) in [
            ("replay obs", obs.len(), self.obs_dim),
            ("replay action", act.len(), self.act_dim),
            ("replay next obs", next_obs.len(), self.obs_dim),
        ] {
            if got != want {
                return Err(Error::Shape {
                    context: ctx,
                    expected: want,
                    actual: got,
                });
            }
        }
        let d = if done { 1.0 } else { 0.0 };
        if self.len() < self.capacity {
            self.obs.extend_from_slice(obs);
            self.act.extend_from_slice(act);
            self.reward.push(reward);
            self.next_obs.extend_from_slice(next_obs);
            self.done.push(d);
        } else {
            let i = self.cursor;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.obs[i * o..(i + 1) * o].copy_from_slice(obs);
            self.act[i * a..(i + 1) * a].copy_from_slice(act);
            self.reward[i] = reward;
            self.next_obs[i * o..(i + 1) * o].copy_from_slice(next_obs);
            self.done[i] = d;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.len())).collect()
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut b = Batch {
            obs: Vec::with_capacity(idx.len() * o),
            act: Vec::with_capacity(idx.len() * a),
            reward: Vec::with_capacity(idx.len()),
            next_obs: Vec::with_capacity(idx.len() * o),
            done: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            b.obs.extend_from_slice(&self.obs[i * o..(i + 1) * o]);
            b.act.extend_from_slice(&self.act[i * a..(i + 1) * a]);
            b.reward.push(self.reward[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * o..(i + 1) * o]);
            b.done.push(self.done[i]);
        }
        b
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::config("batch_size", "cannot sample from an empty buffer"));
        }
        Ok(self.gather(&self.sample_indices(n, rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(1, 1, 3).unwrap();
        for i in 0..5 {
            let x = i as f64;
            b.push(&[x], &[0.0], x, &[x + 1.0], false).unwrap();
        }
        assert_eq!(b.len(), 3);
        let all = b.gather(&[0, 1, 2]);
        // slots 0 and 1 were overwritten by transitions 3 and 4
        assert_eq!(all.reward, vec![3.0, 4.0, 2.0]);
        assert_eq!(all.next_obs, vec![4.0, 5.0, 3.0]);
        assert!(b.push(&[0.0, 1.0], &[0.0], 0.0, &[0.0], true).is_err());
    }

    #[test]
    fn uniform_sampling_chi_squared() {
        let k = 100;
        let mut b = ReplayBuffer::new(1, 1, k).unwrap();
        for i in 0..k {
            b.push(&[i as f64], &[0.0], 0.0, &[0.0], false).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut counts = vec![0usize; k];
        for i in b.sample_indices(n, &mut rng) {
            counts[i] += 1;
        }
        let e = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99th percentile of chi-squared with 99 degrees of freedom
        assert!(chi2 < 134.64, "chi2 = {chi2}");
    }
}
