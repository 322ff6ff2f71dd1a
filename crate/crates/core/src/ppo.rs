//! Clipped-surrogate PPO over the match-timing environment.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, Observation, StepOutcome, OBS_DIM};
use crate::error::{Error, Result};
use crate::policy::{
    action_rng, d_entropy_d_logit, d_log_prob_d_logit, entropy, log_prob, sample_action, Gradients, PolicyParams,
};
use crate::rng::{child_seed, stream, Concern};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub num_envs: usize,
    pub num_steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub num_minibatches: usize,
    pub update_epochs: usize,
    pub clip_coef: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub anneal_lr: bool,
    pub norm_adv: bool,
    pub clip_vloss: bool,
    /// Number of collect-then-update rounds.
    pub iterations: usize,
    /// When set, overrides `iterations` with enough rounds to cover this
    /// many episodes.
    pub total_episodes: Option<usize>,
    /// Train on shaped rewards; natural rewards otherwise.
    pub pbrs: bool,
    /// Multiplier applied to rewards before they reach the learner.
    pub reward_scale: f64,
    /// Save a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.5e-4,
            num_envs: 4,
            num_steps: 120,
            gamma: 1.0,
            gae_lambda: 0.95,
            num_minibatches: 8,
            update_epochs: 4,
            clip_coef: 0.2,
            ent_coef: 0.01,
            vf_coef: 0.5,
            max_grad_norm: 1.0,
            anneal_lr: true,
            norm_adv: true,
            clip_vloss: true,
            iterations: 500,
            total_episodes: None,
            pbrs: true,
            reward_scale: 1e-3,
            checkpoint_every: 50,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(format!("ppo.{m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.num_envs == 0 || self.num_steps == 0 || self.num_minibatches == 0 || self.update_epochs == 0 {
            return bad("num_envs, num_steps, num_minibatches and update_epochs must be positive");
        }
        if self.num_minibatches > self.num_envs * self.num_steps {
            return bad("num_minibatches exceeds the batch size");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_coef > 0.0 && self.clip_coef < 1.0) {
            return bad("clip_coef must lie in (0, 1)");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if !(self.ent_coef >= 0.0 && self.vf_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return bad("ent_coef and vf_coef must be non-negative, max_grad_norm positive");
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.num_envs * self.num_steps
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size() / self.num_minibatches
    }

    /// Rounds to run for an episode length of `horizon` ticks.
    pub fn resolved_iterations(&self, horizon: u32) -> usize {
        match self.total_episodes {
            Some(eps) => (eps * horizon as usize).div_ceil(self.batch_size()),
            None => self.iterations,
        }
    }
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub iteration: usize,
    pub env: usize,
    pub seed: u64,
    pub natural_return: f64,
    pub shaped_return: f64,
    /// Fraction of steps with action 1.
    pub match_rate: f64,
    pub served: usize,
    pub cancelled: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

impl UpdateStats {
    pub fn is_finite(&self) -> bool {
        [
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.approx_kl,
            self.clip_fraction,
            self.grad_norm,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// One record per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub global_step: usize,
    pub learning_rate: f64,
    #[serde(flatten)]
    pub stats: UpdateStats,
    /// Fraction of rollout steps with action 1.
    pub action_rate: f64,
    pub mean_shaped_reward: f64,
    pub mean_natural_reward: f64,
    pub episodes: Vec<EpisodeLog>,
    /// Steps of environment 0 when tracing is on.
    #[serde(skip)]
    pub trace: Vec<StepOutcome>,
}

/// Transitions from one rollout, stored env-major.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub num_steps: usize,
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<u8>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Rewards the learner sees: shaped or natural per config, then scaled.
    pub rewards: Vec<f64>,
    pub natural_rewards: Vec<f64>,
    /// Set when the transition ended its episode.
    pub dones: Vec<bool>,
    /// Value of the observation following each env's last step.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeLog>,
    pub trace: Vec<StepOutcome>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// An environment plus the bookkeeping the trainer keeps for it.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub index: usize,
    /// Keep every step outcome for the trace log.
    pub tracing: bool,
    env: Env,
    obs: Observation,
    rng: ChaCha8Rng,
    scenario: Scenario,
    base_seed: u64,
    pbrs: bool,
    episodes_started: u32,
    episode_seed: u64,
    natural: f64,
    shaped: f64,
    matches: usize,
}

impl EnvSlot {
    pub fn new(scenario: &Scenario, seed: u64, index: usize, pbrs: bool) -> Result<Self> {
        let episode_seed = Self::seed_for(seed, index, 0);
        let ep = scenario.generate_episode(episode_seed)?;
        let env = Env::new(scenario.sim.clone(), ep)?.with_shaping(pbrs);
        Ok(Self {
            index,
            tracing: false,
            obs: env.observe(),
            env,
            rng: action_rng(seed, index as u32),
            scenario: scenario.clone(),
            base_seed: seed,
            pbrs,
            episodes_started: 1,
            episode_seed,
            natural: 0.0,
            shaped: 0.0,
            matches: 0,
        })
    }

    fn seed_for(seed: u64, index: usize, episode: u32) -> u64 {
        child_seed(child_seed(seed, Concern::Episodes, index as u32), Concern::Episodes, episode)
    }

    pub fn observation(&self) -> Observation {
        self.obs
    }

    fn next_episode(&mut self) -> Result<()> {
        self.episode_seed = Self::seed_for(self.base_seed, self.index, self.episodes_started);
        self.episodes_started += 1;
        let ep = self.scenario.generate_episode(self.episode_seed)?;
        self.obs = self.env.reset(ep)?;
        self.natural = 0.0;
        self.shaped = 0.0;
        self.matches = 0;
        Ok(())
    }
}

struct SlotRollout {
    obs: Vec<[f64; OBS_DIM]>,
    actions: Vec<u8>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    natural: Vec<f64>,
    dones: Vec<bool>,
    bootstrap: f64,
    episodes: Vec<EpisodeLog>,
    trace: Vec<StepOutcome>,
}

fn roll_slot(params: &PolicyParams, slot: &mut EnvSlot, num_steps: usize, scale: f64, iteration: usize) -> Result<SlotRollout> {
    let mut out = SlotRollout {
        obs: Vec::with_capacity(num_steps),
        actions: Vec::with_capacity(num_steps),
        log_probs: Vec::with_capacity(num_steps),
        values: Vec::with_capacity(num_steps),
        rewards: Vec::with_capacity(num_steps),
        natural: Vec::with_capacity(num_steps),
        dones: Vec::with_capacity(num_steps),
        bootstrap: 0.0,
        episodes: Vec::new(),
        trace: Vec::new(),
    };
    for _ in 0..num_steps {
        let f = params.forward(&slot.obs.0)?;
        let a = sample_action(f.p, &mut slot.rng);
        let step = slot.env.step(a)?;
        out.obs.push(slot.obs.0);
        out.actions.push(a);
        out.log_probs.push(log_prob(f.p, a));
        out.values.push(f.v);
        out.rewards.push(scale * if slot.pbrs { step.shaped_reward } else { step.reward });
        out.natural.push(step.reward);
        out.dones.push(step.done);
        if slot.tracing {
            out.trace.push(step);
        }
        slot.natural += step.reward;
        slot.shaped += step.shaped_reward;
        slot.matches += a as usize;
        slot.obs = step.observation;
        if step.done {
            let ledger = slot.env.ledger();
            out.episodes.push(EpisodeLog {
                iteration,
                env: slot.index,
                seed: slot.episode_seed,
                natural_return: slot.natural,
                shaped_return: slot.shaped,
                match_rate: slot.matches as f64 / slot.env.horizon() as f64,
                served: ledger.matched,
                cancelled: ledger.cancelled,
            });
            slot.next_episode()?;
        }
    }
    out.bootstrap = params.forward(&slot.obs.0)?.v;
    Ok(out)
}

/// Steps every slot `num_steps` times under a fixed parameter snapshot.
/// Up to `jobs` slots run concurrently; results are merged in slot order.
pub fn collect_rollout(
    params: &PolicyParams,
    slots: &mut [EnvSlot],
    num_steps: usize,
    reward_scale: f64,
    iteration: usize,
    jobs: usize,
) -> Result<RolloutBuffer> {
    let jobs = jobs.max(1);
    let mut parts: Vec<Option<Result<SlotRollout>>> = (0..slots.len()).map(|_| None).collect();
    if jobs == 1 || slots.len() == 1 {
        for (slot, part) in slots.iter_mut().zip(parts.iter_mut()) {
            *part = Some(roll_slot(params, slot, num_steps, reward_scale, iteration));
        }
    } else {
        let per = slots.len().div_ceil(jobs);
        std::thread::scope(|s| {
            for (chunk, outs) in slots.chunks_mut(per).zip(parts.chunks_mut(per)) {
                s.spawn(move || {
                    for (slot, part) in chunk.iter_mut().zip(outs.iter_mut()) {
                        *part = Some(roll_slot(params, slot, num_steps, reward_scale, iteration));
                    }
                });
            }
        });
    }
    let mut buf = RolloutBuffer {
        num_envs: slots.len(),
        num_steps,
        ..Default::default()
    };
    for part in parts {
        let p = part.expect("every slot was rolled")?;
        buf.obs.extend(p.obs);
        buf.actions.extend(p.actions);
        buf.log_probs.extend(p.log_probs);
        buf.values.extend(p.values);
        buf.rewards.extend(p.rewards);
        buf.natural_rewards.extend(p.natural);
        buf.dones.extend(p.dones);
        buf.bootstrap.push(p.bootstrap);
        buf.episodes.extend(p.episodes);
        buf.trace.extend(p.trace);
    }
    Ok(buf)
}

/// GAE for one env's trajectory segment.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Advantages and returns for a whole buffer, env-major.
pub fn compute_gae(buf: &RolloutBuffer, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(buf.len());
    let mut ret = Vec::with_capacity(buf.len());
    for e in 0..buf.num_envs {
        let r = e * buf.num_steps..(e + 1) * buf.num_steps;
        let (a, g) = gae(
            &buf.rewards[r.clone()],
            &buf.values[r.clone()],
            &buf.dones[r],
            buf.bootstrap[e],
            gamma,
            lambda,
        );
        adv.extend(a);
        ret.extend(g);
    }
    (adv, ret)
}

/// Samples the loss is evaluated on.
#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<u8>,
    pub old_log_probs: Vec<f64>,
    pub old_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn gather(buf: &RolloutBuffer, adv: &[f64], ret: &[f64], idx: &[usize]) -> Self {
        Self {
            obs: idx.iter().map(|&i| buf.obs[i]).collect(),
            actions: idx.iter().map(|&i| buf.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| buf.log_probs[i]).collect(),
            old_values: idx.iter().map(|&i| buf.values[i]).collect(),
            advantages: idx.iter().map(|&i| adv[i]).collect(),
            returns: idx.iter().map(|&i| ret[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Mean 0, sample std 1 (with a small guard); unchanged below two samples.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len();
    if n < 2 {
        return adv.to_vec();
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

/// Loss to minimise, its statistics and its parameter gradient.
pub fn ppo_loss(params: &PolicyParams, mb: &Minibatch, cfg: &PpoConfig) -> Result<(f64, UpdateStats, Gradients)> {
    let n = mb.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let nf = n as f64;
    let adv = if cfg.norm_adv {
        normalize_advantages(&mb.advantages)
    } else {
        mb.advantages.clone()
    };
    let eps = cfg.clip_coef;
    let mut grad = params.zero_grad();
    let mut stats = UpdateStats::default();
    for k in 0..n {
        let f = params.forward(&mb.obs[k])?;
        let a = mb.actions[k];
        let logp = log_prob(f.p, a);
        let logratio = logp - mb.old_log_probs[k];
        let ratio = logratio.exp();
        stats.approx_kl += ((ratio - 1.0) - logratio) / nf;
        if (ratio - 1.0).abs() > eps {
            stats.clip_fraction += 1.0 / nf;
        }

        let pg1 = -adv[k] * ratio;
        let pg2 = -adv[k] * ratio.clamp(1.0 - eps, 1.0 + eps);
        stats.policy_loss += pg1.max(pg2) / nf;
        let mut d_logit = if pg1 >= pg2 {
            -adv[k] * ratio * d_log_prob_d_logit(f.p, a) / nf
        } else {
            0.0
        };

        let h = entropy(f.p);
        stats.entropy += h / nf;
        d_logit -= cfg.ent_coef * d_entropy_d_logit(f.p, f.logit) / nf;

        let ret = mb.returns[k];
        let unclipped = (f.v - ret).powi(2);
        let d_value = if cfg.clip_vloss {
            let dv = f.v - mb.old_values[k];
            let v_clipped = mb.old_values[k] + dv.clamp(-eps, eps);
            let clipped = (v_clipped - ret).powi(2);
            stats.value_loss += unclipped.max(clipped) / nf;
            if unclipped >= clipped {
                2.0 * (f.v - ret) / nf
            } else if dv.abs() < eps {
                2.0 * (v_clipped - ret) / nf
            } else {
                0.0
            }
        } else {
            stats.value_loss += unclipped / nf;
            2.0 * (f.v - ret) / nf
        };
        params.backward_into(&f.cache, d_logit, cfg.vf_coef * d_value, &mut grad)?;
    }
    let loss = stats.policy_loss - cfg.ent_coef * stats.entropy + cfg.vf_coef * stats.value_loss;
    stats.grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok((loss, stats, grad))
}

/// Scales `grad` so its global norm is at most `max_norm`; returns the
/// norm before scaling.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != params.len() || grad.len() != self.m.len() {
            return Err(Error::Contract("gradient shape does not match parameters".into()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Clips `grad` then applies one Adam step; returns the pre-clip norm.
pub fn optimizer_step(params: &mut PolicyParams, grad: &mut [f64], opt: &mut Adam, lr: f64, max_grad_norm: f64) -> Result<f64> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    let norm = clip_grad_norm(grad, max_grad_norm);
    opt.step(params.as_mut_slice(), grad, lr)?;
    Ok(norm)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<IterationLog>,
    /// Set when training stopped early on a numeric failure; `params` then
    /// holds the last finite parameters.
    pub failure: Option<String>,
}

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for rollouts.
    pub jobs: usize,
    /// Record environment 0's steps in each log record.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, trace: false }
    }
}

/// Runs PPO. `on_iteration` sees every log record and the parameters after
/// that iteration's update, and may abort by returning an error.
pub fn train(
    scenario: &Scenario,
    cfg: &PpoConfig,
    opts: RunOptions,
    mut on_iteration: impl FnMut(&IterationLog, &PolicyParams) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    scenario.validate()?;
    let iterations = cfg.resolved_iterations(scenario.sim.horizon);
    let mut params = PolicyParams::init(cfg.seed);
    let mut opt = Adam::new(params.len());
    let mut slots = (0..cfg.num_envs)
        .map(|i| EnvSlot::new(scenario, cfg.seed, i, cfg.pbrs))
        .collect::<Result<Vec<_>>>()?;
    slots[0].tracing = opts.trace;
    let mut shuffle_rng = stream(cfg.seed, Concern::Minibatch, 0);
    let mut log = Vec::with_capacity(iterations);
    let mb_size = cfg.minibatch_size();
    let mut indices: Vec<usize> = (0..cfg.batch_size()).collect();

    for it in 1..=iterations {
        let lr = if cfg.anneal_lr {
            (1.0 - (it - 1) as f64 / iterations as f64) * cfg.learning_rate
        } else {
            cfg.learning_rate
        };
        let buf = collect_rollout(&params, &mut slots, cfg.num_steps, cfg.reward_scale, it, opts.jobs)?;
        let (adv, ret) = compute_gae(&buf, cfg.gamma, cfg.gae_lambda);
        let last_good = params.clone();
        let mut sums = UpdateStats::default();
        let mut count = 0.0;
        let mut failure = None;
        'epochs: for _ in 0..cfg.update_epochs {
            indices.shuffle(&mut shuffle_rng);
            for chunk in indices.chunks(mb_size).take(cfg.num_minibatches) {
                let mb = Minibatch::gather(&buf, &adv, &ret, chunk);
                let (loss, stats, mut grad) = ppo_loss(&params, &mb, cfg)?;
                if !loss.is_finite() || !stats.is_finite() {
                    failure = Some(format!("non-finite loss {loss} at iteration {it}"));
                    break 'epochs;
                }
                let norm = match optimizer_step(&mut params, &mut grad, &mut opt, lr, cfg.max_grad_norm) {
                    Ok(n) => n,
                    Err(e) => {
                        failure = Some(format!("{e} at iteration {it}"));
                        break 'epochs;
                    }
                };
                sums.policy_loss += stats.policy_loss;
                sums.value_loss += stats.value_loss;
                sums.entropy += stats.entropy;
                sums.approx_kl += stats.approx_kl;
                sums.clip_fraction += stats.clip_fraction;
                sums.grad_norm += norm;
                count += 1.0;
            }
        }
        if failure.is_none() && !params.is_finite() {
            failure = Some(format!("non-finite parameters after iteration {it}"));
        }
        if let Some(msg) = failure {
            return Ok(TrainOutcome {
                params: last_good,
                log,
                failure: Some(msg),
            });
        }
        let mean = |x: f64| if count > 0.0 { x / count } else { 0.0 };
        let n = buf.len() as f64;
        let rec = IterationLog {
            iteration: it,
            global_step: it * cfg.batch_size(),
            learning_rate: lr,
            stats: UpdateStats {
                policy_loss: mean(sums.policy_loss),
                value_loss: mean(sums.value_loss),
                entropy: mean(sums.entropy),
                approx_kl: mean(sums.approx_kl),
                clip_fraction: mean(sums.clip_fraction),
                grad_norm: mean(sums.grad_norm),
            },
            action_rate: buf.actions.iter().map(|&a| a as f64).sum::<f64>() / n,
            mean_shaped_reward: buf.rewards.iter().sum::<f64>() / n / cfg.reward_scale,
            mean_natural_reward: buf.natural_rewards.iter().sum::<f64>() / n,
            episodes: buf.episodes,
            trace: buf.trace,
        };
        on_iteration(&rec, &params)?;
        log.push(rec);
    }
    Ok(TrainOutcome {
        params,
        log,
        failure: None,
    })
}
