//! Double DQN for the discrete lane-choice agent and a deterministic
//! actor-critic for the continuous terminal-manifold agent.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{Action, HighwayEnv, ObservationTensor, Policy};
use crate::error::{Error, Result};
use crate::nn::{load_weights_checked, save_weights, Adam, NetSpec, Network};
use crate::sim::{derive_seed, Status};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<A> {
    pub obs: Vec<f32>,
    pub action: A,
    pub reward: f64,
    pub next_obs: Vec<f32>,
    pub done: bool,
}

pub fn compress(obs: &ObservationTensor) -> Vec<f32> {
    obs.values.iter().map(|&v| v as f32).collect()
}

fn expand(obs: &[f32]) -> Vec<f64> {
    obs.iter().map(|&v| v as f64).collect()
}

/// Fixed-capacity FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: VecDeque<Transition<A>>,
}

impl<A: Clone> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition<A>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        self.items.iter()
    }

    /// Uniform sample of `n` distinct transitions (fewer if the buffer is
    /// smaller).
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&Transition<A>> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Learning rate of the Q network or critic.
    pub lr: f64,
    pub actor_lr: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Gradient updates between hard target copies (DQN).
    pub target_sync: usize,
    /// Polyak coefficient (actor-critic).
    pub tau: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: usize,
    /// Exploration noise standard deviation (actor-critic).
    pub action_noise: f64,
    pub total_steps: usize,
    pub max_episodes: usize,
    /// Environment steps collected before the first update.
    pub learning_starts: usize,
    pub train_every: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
    pub net: NetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-3,
            actor_lr: 1e-4,
            batch_size: 64,
            replay_capacity: 50_000,
            target_sync: 1000,
            tau: 0.005,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            action_noise: 0.2,
            total_steps: 200_000,
            max_episodes: 1_000_000,
            learning_starts: 1000,
            train_every: 1,
            max_grad_norm: 10.0,
            seed: 0,
            net: NetSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0
            && self.gamma < 1.0
            && self.lr > 0.0
            && self.actor_lr > 0.0
            && self.batch_size > 0
            && self.replay_capacity > 0
            && self.target_sync > 0
            && self.tau > 0.0
            && self.tau <= 1.0
            && (0.0..=1.0).contains(&self.eps_start)
            && (0.0..=1.0).contains(&self.eps_end)
            && self.action_noise >= 0.0
            && self.train_every > 0
            && self.max_grad_norm > 0.0;
        if ok {
            self.net.validate()
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        let f = (step as f64 / self.eps_decay_steps.max(1) as f64).min(1.0);
        self.eps_start + f * (self.eps_end - self.eps_start)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn clip_grad(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
}

/// Double-DQN bootstrap target: the online network picks the next action,
/// the target network values it.
pub fn double_dqn_target(reward: f64, done: bool, gamma: f64, q_online_next: &[f64], q_target_next: &[f64]) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_target_next[argmax(q_online_next)]
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub online: Network,
    pub target: Network,
    opt: Adam,
    gamma: f64,
    max_grad_norm: f64,
    target_sync: usize,
    updates: usize,
    rng: ChaCha8Rng,
}

impl DqnAgent {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let spec = NetSpec {
            outputs: 3,
            extra_inputs: 0,
            squash: false,
            ..cfg.net.clone()
        };
        let online = Network::new(spec, &mut rng)?;
        Ok(Self {
            target: online.clone(),
            opt: Adam::new(cfg.lr, online.param_count()),
            online,
            gamma: cfg.gamma,
            max_grad_norm: cfg.max_grad_norm,
            target_sync: cfg.target_sync,
            updates: 0,
            rng,
        })
    }

    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online.predict(obs, &[])
    }

    /// Epsilon-greedy choice; ties in Q go to the lowest index.
    pub fn select_action(&mut self, obs: &[f64], epsilon: f64) -> Result<usize> {
        if self.rng.random::<f64>() < epsilon {
            Ok(self.rng.random_range(0..3))
        } else {
            Ok(argmax(&self.q_values(obs)?))
        }
    }

    /// One gradient step on the mean squared TD error; returns the loss
    /// before the step.
    pub fn update(&mut self, batch: &[&Transition<usize>]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let m = batch.len() as f64;
        let mut grad = vec![0.0; self.online.param_count()];
        let mut loss = 0.0;
        for t in batch {
            let next = expand(&t.next_obs);
            let y = if t.done {
                t.reward
            } else {
                let qo = self.online.predict(&next, &[])?;
                let qt = self.target.predict(&next, &[])?;
                double_dqn_target(t.reward, false, self.gamma, &qo, &qt)
            };
            let cache = self.online.forward(&expand(&t.obs), &[])?;
            let q = cache.output();
            let err = q[t.action] - y;
            loss += err * err / m;
            let mut d_out = vec![0.0; q.len()];
            d_out[t.action] = 2.0 * err / m;
            self.online.backward(&cache, &d_out, &mut grad);
        }
        clip_grad(&mut grad, self.max_grad_norm);
        self.opt.step(&mut self.online.params, &grad);
        self.updates += 1;
        if self.updates % self.target_sync == 0 {
            self.target.params.clone_from(&self.online.params);
        }
        Ok(loss)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(&[("q", &self.online)], path)
    }

    /// Greedy policy from a saved weight file.
    pub fn load_policy(path: &Path, spec: &NetSpec) -> Result<GreedyQPolicy> {
        let spec = NetSpec {
            outputs: 3,
            extra_inputs: 0,
            squash: false,
            ..spec.clone()
        };
        let net = load_weights_checked(path, &[("q", &spec)])?.remove(0);
        Ok(GreedyQPolicy { net })
    }

    pub fn greedy_policy(&self) -> GreedyQPolicy {
        GreedyQPolicy {
            net: self.online.clone(),
        }
    }
}

/// Discrete agent acting greedily on a frozen Q network.
#[derive(Debug, Clone)]
pub struct GreedyQPolicy {
    pub net: Network,
}

impl Policy for GreedyQPolicy {
    fn name(&self) -> String {
        "dqn".into()
    }

    fn act(&mut self, _env: &HighwayEnv, obs: &ObservationTensor) -> Result<Action> {
        Ok(Action::Discrete(argmax(&self.net.predict(&obs.values, &[])?)))
    }
}

/// Anything that can value an action and report the action gradient.
pub trait Critic {
    fn value_and_action_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Critic for Network {
    fn value_and_action_grad(&self, obs: &[f64], action: &[f64]) -> Result<(f64, Vec<f64>)> {
        let cache = self.forward(obs, action)?;
        let mut scratch = vec![0.0; self.param_count()];
        let da = self.backward(&cache, &[1.0], &mut scratch);
        Ok((cache.output()[0], da))
    }
}

/// One ascent step of `actor` on `critic` over the observations; returns the
/// actor loss `-mean Q(s, mu(s))` before the step.
pub fn actor_step(actor: &mut Network, opt: &mut Adam, critic: &dyn Critic, obs: &[Vec<f64>], max_norm: f64) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let m = obs.len() as f64;
    let mut grad = vec![0.0; actor.param_count()];
    let mut loss = 0.0;
    for o in obs {
        let cache = actor.forward(o, &[])?;
        let (q, da) = critic.value_and_action_grad(o, cache.output())?;
        loss -= q / m;
        let d_out: Vec<f64> = da.iter().map(|g| -g / m).collect();
        actor.backward(&cache, &d_out, &mut grad);
    }
    clip_grad(&mut grad, max_norm);
    opt.step(&mut actor.params, &grad);
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub actor: Network,
    pub critic: Network,
    pub actor_target: Network,
    pub critic_target: Network,
    actor_opt: Adam,
    critic_opt: Adam,
    gamma: f64,
    tau: f64,
    noise: f64,
    max_grad_norm: f64,
    rng: ChaCha8Rng,
}

impl DdpgAgent {
    pub fn actor_spec(net: &NetSpec) -> NetSpec {
        NetSpec {
            outputs: 3,
            extra_inputs: 0,
            squash: true,
            ..net.clone()
        }
    }

    pub fn critic_spec(net: &NetSpec) -> NetSpec {
        NetSpec {
            outputs: 1,
            extra_inputs: 3,
            squash: false,
            ..net.clone()
        }
    }

    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actor = Network::new(Self::actor_spec(&cfg.net), &mut rng)?;
        let critic = Network::new(Self::critic_spec(&cfg.net), &mut rng)?;
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(cfg.actor_lr, actor.param_count()),
            critic_opt: Adam::new(cfg.lr, critic.param_count()),
            actor,
            critic,
            gamma: cfg.gamma,
            tau: cfg.tau,
            noise: cfg.action_noise,
            max_grad_norm: cfg.max_grad_norm,
            rng,
        })
    }

    /// `mu(obs)`, plus clipped Gaussian noise when exploring; always inside
    /// `[-1, 1]^3`.
    pub fn select_action(&mut self, obs: &[f64], explore: bool) -> Result<[f64; 3]> {
        let mu = self.actor.predict(obs, &[])?;
        let mut a = [mu[0], mu[1], mu[2]];
        if explore && self.noise > 0.0 {
            let n = Normal::new(0.0, self.noise).expect("noise is finite");
            for x in &mut a {
                *x += n.sample(&mut self.rng).clamp(-2.0 * self.noise, 2.0 * self.noise);
            }
        }
        Ok(a.map(|x| x.clamp(-1.0, 1.0)))
    }

    /// Critic regression on the Bellman target, actor ascent on the critic,
    /// then Polyak averaging of both targets. Returns `(actor_loss,
    /// critic_loss)` measured before the steps.
    pub fn update(&mut self, batch: &[&Transition<[f64; 3]>]) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let m = batch.len() as f64;
        let mut grad = vec![0.0; self.critic.param_count()];
        let mut critic_loss = 0.0;
        let mut states = Vec::with_capacity(batch.len());
        for t in batch {
            let obs = expand(&t.obs);
            let y = if t.done {
                t.reward
            } else {
                let next = expand(&t.next_obs);
                let a_next = self.actor_target.predict(&next, &[])?;
                t.reward + self.gamma * self.critic_target.predict(&next, &a_next)?[0]
            };
            let cache = self.critic.forward(&obs, &t.action)?;
            let err = cache.output()[0] - y;
            critic_loss += err * err / m;
            self.critic.backward(&cache, &[2.0 * err / m], &mut grad);
            states.push(obs);
        }
        clip_grad(&mut grad, self.max_grad_norm);
        self.critic_opt.step(&mut self.critic.params, &grad);
        let actor_loss = actor_step(&mut self.actor, &mut self.actor_opt, &self.critic, &states, self.max_grad_norm)?;
        self.actor_target.soft_update_from(&self.actor, self.tau);
        self.critic_target.soft_update_from(&self.critic, self.tau);
        Ok((actor_loss, critic_loss))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_weights(&[("actor", &self.actor), ("critic", &self.critic)], path)
    }

    pub fn load_policy(path: &Path, spec: &NetSpec) -> Result<ActorPolicy> {
        let actor = load_weights_checked(path, &[("actor", &Self::actor_spec(spec))])?.remove(0);
        Ok(ActorPolicy { actor })
    }

    pub fn greedy_policy(&self) -> ActorPolicy {
        ActorPolicy {
            actor: self.actor.clone(),
        }
    }
}

/// Continuous agent acting deterministically on a frozen actor.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    pub actor: Network,
}

impl Policy for ActorPolicy {
    fn name(&self) -> String {
        "ddpg".into()
    }

    fn act(&mut self, _env: &HighwayEnv, obs: &ObservationTensor) -> Result<Action> {
        let a = self.actor.predict(&obs.values, &[])?;
        Ok(Action::Continuous([a[0], a[1], a[2]].map(|x| x.clamp(-1.0, 1.0))))
    }
}

/// Uniformly random discrete actions.
#[derive(Debug, Clone)]
pub struct RandomDiscretePolicy {
    pub rng: ChaCha8Rng,
}

impl Policy for RandomDiscretePolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&mut self, _env: &HighwayEnv, _obs: &ObservationTensor) -> Result<Action> {
        Ok(Action::Discrete(self.rng.random_range(0..3)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub reward: f64,
    pub moving_avg_100: f64,
}

fn push_curve(curve: &mut Vec<CurvePoint>, reward: f64) -> f64 {
    let episode = curve.len();
    let lo = (episode + 1).saturating_sub(100);
    let window = curve[lo..].iter().map(|c| c.reward).sum::<f64>() + reward;
    let avg = window / (episode + 1 - lo) as f64;
    curve.push(CurvePoint {
        episode,
        reward,
        moving_avg_100: avg,
    });
    avg
}

pub fn write_curve_csv(curve: &[CurvePoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in curve {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome<A> {
    pub agent: A,
    /// Copy of the agent at the best 100-episode moving average.
    pub best: Option<A>,
    pub curve: Vec<CurvePoint>,
    pub steps: usize,
}

fn terminal_for_bootstrap(status: Status) -> bool {
    status.is_terminal() && status != Status::TimeLimit
}

pub fn train_dqn(env: &mut HighwayEnv, cfg: &TrainConfig) -> Result<TrainOutcome<DqnAgent>> {
    let mut agent = DqnAgent::new(cfg)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
    let mut curve = Vec::new();
    let mut best: Option<(f64, DqnAgent)> = None;
    let mut steps = 0;
    let mut episode = 0;
    while steps < cfg.total_steps && episode < cfg.max_episodes {
        let mut obs = env.reset(derive_seed(cfg.seed, episode as u64)).map_err(|e| e.in_episode(episode))?;
        let mut total = 0.0;
        while !env.is_done() && steps < cfg.total_steps {
            let a = agent.select_action(&obs.values, cfg.epsilon(steps))?;
            let r = env.step(Action::Discrete(a)).map_err(|e| e.in_episode(episode))?;
            total += r.reward;
            replay.push(Transition {
                obs: compress(&obs),
                action: a,
                reward: r.reward,
                next_obs: compress(&r.obs),
                done: terminal_for_bootstrap(r.info.status),
            });
            obs = r.obs;
            steps += 1;
            if steps >= cfg.learning_starts && steps % cfg.train_every == 0 {
                let batch = replay.sample(cfg.batch_size, &mut sample_rng);
                agent.update(&batch)?;
            }
        }
        if env.is_done() {
            let avg = push_curve(&mut curve, total);
            if curve.len() >= 100 && best.as_ref().is_none_or(|(b, _)| avg > *b) {
                best = Some((avg, agent.clone()));
            }
        }
        episode += 1;
    }
    Ok(TrainOutcome {
        agent,
        best: best.map(|(_, a)| a),
        curve,
        steps,
    })
}

pub fn train_ddpg(env: &mut HighwayEnv, cfg: &TrainConfig) -> Result<TrainOutcome<DdpgAgent>> {
    let mut agent = DdpgAgent::new(cfg)?;
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
    let mut curve = Vec::new();
    let mut best: Option<(f64, DdpgAgent)> = None;
    let mut steps = 0;
    let mut episode = 0;
    while steps < cfg.total_steps && episode < cfg.max_episodes {
        let mut obs = env.reset(derive_seed(cfg.seed, episode as u64)).map_err(|e| e.in_episode(episode))?;
        let mut total = 0.0;
        while !env.is_done() && steps < cfg.total_steps {
            let a = if steps < cfg.learning_starts {
                [0; 3].map(|_| sample_rng.random_range(-1.0..=1.0))
            } else {
                agent.select_action(&obs.values, true)?
            };
            let r = env.step(Action::Continuous(a)).map_err(|e| e.in_episode(episode))?;
            total += r.reward;
            replay.push(Transition {
                obs: compress(&obs),
                action: a,
                reward: r.reward,
                next_obs: compress(&r.obs),
                done: terminal_for_bootstrap(r.info.status),
            });
            obs = r.obs;
            steps += 1;
            if steps >= cfg.learning_starts && steps % cfg.train_every == 0 {
                let batch = replay.sample(cfg.batch_size, &mut sample_rng);
                agent.update(&batch)?;
            }
        }
        if env.is_done() {
            let avg = push_curve(&mut curve, total);
            if curve.len() >= 100 && best.as_ref().is_none_or(|(b, _)| avg > *b) {
                best = Some((avg, agent.clone()));
            }
        }
        episode += 1;
    }
    Ok(TrainOutcome {
        agent,
        best: best.map(|(_, a)| a),
        curve,
        steps,
    })
}
