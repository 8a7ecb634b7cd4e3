use rand::Rng;
use rand_distr::StandardNormal;

use super::config::SacConfig;
use super::policy::{clamp_log_std, log_density_1d, PolicyNet};
use super::replay::{Batch, ReplayBuffer};
use crate::error::{Error, Result};
use crate::neural::{AdamState, ForwardCache, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    /// Minus the mean log-probability of the actions sampled for the actor loss.
    pub entropy: f64,
}

/// y = r + γ·(1 − done)·(min Q'(s', a') − α·log π(a'|s')).
pub fn soft_bellman_target(reward: f64, done: f64, gamma: f64, q_next_min: f64, alpha: f64, log_prob_next: f64) -> f64 {
    reward + gamma * (1.0 - done) * (q_next_min - alpha * log_prob_next)
}

/// Actor outputs for a batch under fixed Gaussian noise.
struct ActorPass {
    cache: ForwardCache,
    /// tanh(u), batch × d.
    squashed: Vec<f64>,
    std: Vec<f64>,
    clamped: Vec<bool>,
    log_prob: Vec<f64>,
}

fn concat_rows(a: &[f64], da: usize, b: &[f64], db: usize, rows: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * (da + db));
    for r in 0..rows {
        out.extend_from_slice(&a[r * da..(r + 1) * da]);
        out.extend_from_slice(&b[r * db..(r + 1) * db]);
    }
    out
}

/// Soft actor-critic learner: squashed-Gaussian actor, one or two critics
/// with Polyak-averaged targets, and an optionally auto-tuned temperature.
#[derive(Debug, Clone)]
pub struct SacAgent {
    policy: PolicyNet,
    critics: Vec<MlpParams>,
    targets: Vec<MlpParams>,
    actor_opt: AdamState,
    critic_opts: Vec<AdamState>,
    log_alpha: f64,
    alpha_opt: AdamState,
    target_entropy: f64,
    cfg: SacConfig,
    updates: usize,
}

impl SacAgent {
    pub fn new<R: Rng>(obs_dim: usize, low: Vec<f64>, high: Vec<f64>, cfg: SacConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = low.len();
        let policy = PolicyNet::init(obs_dim, &cfg.actor_hidden, low, high, rng)?;
        let mut sizes = vec![obs_dim + d];
        sizes.extend_from_slice(&cfg.critic_hidden);
        sizes.push(1);
        let n_critics = if cfg.twin_critics { 2 } else { 1 };
        let critics = (0..n_critics).map(|_| MlpParams::init(&sizes, rng)).collect::<Result<Vec<_>>>()?;
        let n = critics[0].params().len();
        Ok(Self {
            actor_opt: AdamState::new(policy.net().params().len(), cfg.actor_lr),
            critic_opts: (0..n_critics).map(|_| AdamState::new(n, cfg.critic_lr)).collect(),
            targets: critics.clone(),
            critics,
            policy,
            log_alpha: cfg.init_alpha.ln(),
            alpha_opt: AdamState::new(1, cfg.alpha_lr),
            target_entropy: cfg.target_entropy.unwrap_or(-(d as f64)),
            cfg,
            updates: 0,
        })
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut PolicyNet {
        &mut self.policy
    }

    pub fn into_policy(self) -> PolicyNet {
        self.policy
    }

    pub fn critics(&self) -> &[MlpParams] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [MlpParams] {
        &mut self.critics
    }

    pub fn targets(&self) -> &[MlpParams] {
        &self.targets
    }

    pub fn targets_mut(&mut self) -> &mut [MlpParams] {
        &mut self.targets
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    fn act_dim(&self) -> usize {
        self.policy.action_dim()
    }

    fn actor_pass(&self, obs: &[f64], rows: usize, eps: &[f64]) -> Result<ActorPass> {
        let d = self.act_dim();
        if eps.len() != rows * d {
            return Err(Error::Shape {
                context: "actor noise",
                expected: rows * d,
                actual: eps.len(),
            });
        }
        let cache = self.policy.net().forward_batch(obs, rows)?;
        let out = cache.output();
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                update: self.updates,
                reason: format!("non-finite actor output at index {i}"),
            });
        }
        let mut p = ActorPass {
            squashed: Vec::with_capacity(rows * d),
            std: Vec::with_capacity(rows * d),
            clamped: Vec::with_capacity(rows * d),
            log_prob: vec![0.0; rows],
            cache: cache.clone(),
        };
        for r in 0..rows {
            for i in 0..d {
                let mean = out[r * 2 * d + i];
                let (log_std, clamped) = clamp_log_std(out[r * 2 * d + d + i]);
                let std = log_std.exp();
                let u = mean + std * eps[r * d + i];
                let (_, half) = self.policy.mid_half(i);
                p.squashed.push(u.tanh());
                p.std.push(std);
                p.clamped.push(clamped);
                p.log_prob[r] += log_density_1d(u, mean, log_std, half);
            }
        }
        Ok(p)
    }

    fn q_min(nets: &[MlpParams], input: &[f64], rows: usize) -> Result<(Vec<f64>, Vec<usize>, Vec<ForwardCache>)> {
        let caches = nets.iter().map(|n| n.forward_batch(input, rows)).collect::<Result<Vec<_>>>()?;
        let mut q = caches[0].output().to_vec();
        let mut arg = vec![0; rows];
        for (c, cache) in caches.iter().enumerate().skip(1) {
            for (r, &v) in cache.output().iter().enumerate() {
                if v < q[r] {
                    q[r] = v;
                    arg[r] = c;
                }
            }
        }
        Ok((q, arg, caches))
    }

    /// Critic targets under caller-supplied noise for the next-state actions.
    pub fn critic_target_with_noise(&self, batch: &Batch, eps: &[f64]) -> Result<Vec<f64>> {
        let rows = batch.len();
        let ap = self.actor_pass(&batch.next_obs, rows, eps)?;
        let input = concat_rows(&batch.next_obs, self.obs_dim(), &ap.squashed, self.act_dim(), rows);
        let (q_next, _, _) = Self::q_min(&self.targets, &input, rows)?;
        let alpha = self.alpha();
        Ok((0..rows)
            .map(|r| {
                soft_bellman_target(
                    self.cfg.reward_scale * batch.reward[r],
                    batch.done[r],
                    self.cfg.gamma,
                    q_next[r],
                    alpha,
                    ap.log_prob[r],
                )
            })
            .collect())
    }

    pub fn critic_target<R: Rng>(&self, batch: &Batch, rng: &mut R) -> Result<Vec<f64>> {
        let eps = normals(rng, batch.len() * self.act_dim());
        self.critic_target_with_noise(batch, &eps)
    }

    /// Actor loss mean(α·log π − min Q) under fixed noise, its parameter
    /// gradient and the per-sample log-probabilities.
    fn actor_gradient(&self, obs: &[f64], rows: usize, eps: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (od, d) = (self.obs_dim(), self.act_dim());
        let ap = self.actor_pass(obs, rows, eps)?;
        let input = concat_rows(obs, od, &ap.squashed, d, rows);
        let (q, arg, caches) = Self::q_min(&self.critics, &input, rows)?;
        let ones = vec![1.0; rows];
        let input_grads = self
            .critics
            .iter()
            .zip(&caches)
            .map(|(n, cache)| n.input_gradient(cache, &ones))
            .collect::<Result<Vec<_>>>()?;
        let alpha = self.alpha();
        let n = rows as f64;
        let loss = (0..rows).map(|r| alpha * ap.log_prob[r] - q[r]).sum::<f64>() / n;
        let mut out_grad = vec![0.0; rows * 2 * d];
        for r in 0..rows {
            let ig = &input_grads[arg[r]][r * (od + d)..(r + 1) * (od + d)];
            for i in 0..d {
                let k = r * d + i;
                let t = ap.squashed[k];
                // dL/du with ε fixed: −dQ/dt·(1 − t²) from the critic, 2αt
                // from the tanh correction inside log π
                let g_u = -ig[od + i] * (1.0 - t * t) + alpha * 2.0 * t;
                out_grad[r * 2 * d + i] = g_u / n;
                out_grad[r * 2 * d + d + i] = if ap.clamped[k] { 0.0 } else { (g_u * ap.std[k] * eps[k] - alpha) / n };
            }
        }
        let (pg, _) = self.policy.net().backward_batch(&ap.cache, &out_grad)?;
        Ok((loss, pg, ap.log_prob))
    }

    /// One gradient step on the critics, the actor and the temperature,
    /// followed by the target update.
    pub fn update<R: Rng>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<LossReport> {
        let bs = self.cfg.batch_size;
        if buffer.len() < bs {
            return Err(Error::config("batch_size", format!("buffer holds {} transitions, need {bs}", buffer.len())));
        }
        let batch = buffer.sample(bs, rng)?;
        let (od, d) = (self.obs_dim(), self.act_dim());
        let diverged = |update: usize, e: Error| Error::Diverged { update, reason: e.to_string() };

        let y = self.critic_target(&batch, rng)?;
        let input = concat_rows(&batch.obs, od, &batch.act, d, bs);
        let mut critic_loss = 0.0;
        for c in 0..self.critics.len() {
            let cache = self.critics[c].forward_batch(&input, bs)?;
            let diff: Vec<f64> = cache.output().iter().zip(&y).map(|(q, t)| q - t).collect();
            critic_loss += diff.iter().map(|e| e * e).sum::<f64>() / bs as f64;
            let g: Vec<f64> = diff.iter().map(|e| e / bs as f64).collect();
            let (pg, _) = self.critics[c].backward_batch(&cache, &g)?;
            self.critic_opts[c]
                .step(self.critics[c].params_mut(), &pg)
                .map_err(|e| diverged(self.updates, e))?;
        }
        critic_loss /= self.critics.len() as f64;

        let eps = normals(rng, bs * d);
        let (actor_loss, pg, log_prob) = self.actor_gradient(&batch.obs, bs, &eps)?;
        self.actor_opt
            .step(self.policy.net_mut().params_mut(), &pg)
            .map_err(|e| diverged(self.updates, e))?;

        let mean_lp = log_prob.iter().sum::<f64>() / bs as f64;
        if self.cfg.auto_alpha {
            let g = -(mean_lp + self.target_entropy);
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[g]).map_err(|e| diverged(self.updates, e))?;
            self.log_alpha = la[0];
        }

        for (t, o) in self.targets.iter_mut().zip(&self.critics) {
            t.polyak_from(o, self.cfg.tau);
        }
        self.updates += 1;

        let report = LossReport {
            critic_loss,
            actor_loss,
            alpha: self.alpha(),
            entropy: -mean_lp,
        };
        if !(critic_loss.is_finite() && actor_loss.is_finite() && report.alpha.is_finite()) {
            return Err(Error::Diverged {
                update: self.updates,
                reason: format!("{report:?}"),
            });
        }
        Ok(report)
    }
}

fn normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
