//! Deterministic-policy actor-critic learning (DDPG). The modular
//! controller is the actor; a centralized critic sees every actuated
//! voxel's local state and action plus the shared time signal, so its
//! input width is morphology-specific. Updates happen within episodes,
//! every few control steps, from a uniform replay buffer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::nets::{Adam, Mlp};
use super::{EvalEntry, LearnerKind, LearnerRecord};
use crate::controller::{
    assemble_observation, sigmoid, time_signal, ControllerParams, ObservationGrid,
    ACTUATION_MAX, ACTUATION_MIN, HIDDEN,
};
use crate::env::EnvInstance;
use crate::morphology::MorphGenome;
use crate::sim::{Sim, SimConfig, SimError};

/// Signals per actuated voxel in the critic input: vx, vy, volume, touch.
const STATE_SIGNALS: usize = 4;
const CRITIC_HIDDEN: [usize; 2] = [128, 64];

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    /// Learning episodes per individual.
    pub episodes: usize,
    /// One gradient update after every this many control steps.
    pub update_every: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Discount factor for the TD target.
    pub gamma: f64,
    /// Target-network blend rate per update.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Gaussian exploration noise (action units) added before clipping.
    pub noise_std: f64,
}

impl Default for RlConfig {
    fn default() -> RlConfig {
        RlConfig {
            episodes: 50,
            update_every: 5,
            replay_capacity: 25_000,
            batch_size: 64,
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Error)]
pub enum RlError {
    #[error("critic expects input width {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite gradient during update")]
    NonFiniteGrad,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Width of the critic input for a robot with `n_act` actuated voxels.
pub fn critic_input_width(n_act: usize) -> usize {
    n_act * (STATE_SIGNALS + 1) + 2
}

pub fn critic_sizes(n_act: usize) -> Vec<usize> {
    vec![
        critic_input_width(n_act),
        CRITIC_HIDDEN[0],
        CRITIC_HIDDEN[1],
        1,
    ]
}

/// Assemble the critic input: per-voxel state blocks, then all actions,
/// then the time signal.
pub fn critic_input(
    obs: &ObservationGrid,
    actuators: &[(usize, usize)],
    actions: &[f64],
    step: u32,
) -> Vec<f64> {
    debug_assert_eq!(actions.len(), actuators.len());
    let mut v = Vec::with_capacity(critic_input_width(actuators.len()));
    for &(r, c) in actuators {
        let s = obs.get(r as isize, c as isize);
        v.extend_from_slice(&[s.vx, s.vy, s.volume, if s.touch { 1.0 } else { 0.0 }]);
    }
    v.extend_from_slice(actions);
    let (sin_t, cos_t) = time_signal(step);
    v.push(sin_t);
    v.push(cos_t);
    v
}

pub fn critic_forward(critic: &Mlp, input: &[f64]) -> Result<f64, RlError> {
    if input.len() != critic.input_len() {
        return Err(RlError::WidthMismatch {
            expected: critic.input_len(),
            got: input.len(),
        });
    }
    Ok(critic.forward(input)[0])
}

/// Analytic gradient of sum_v upstream[v] * u(params, inputs[v]) with
/// respect to the shared parameter vector, accumulated voxel by voxel
/// exactly as the actor update does. One input vector per actuated voxel.
pub fn shared_actor_gradient(
    params: &ControllerParams,
    inputs: &[Vec<f64>],
    upstream: &[f64],
) -> Result<Vec<f64>, RlError> {
    if inputs.len() != upstream.len() {
        return Err(RlError::WidthMismatch {
            expected: inputs.len(),
            got: upstream.len(),
        });
    }
    for x in inputs {
        if x.len() != params.n_inputs() {
            return Err(RlError::WidthMismatch {
                expected: params.n_inputs(),
                got: x.len(),
            });
        }
    }
    let mut grad = vec![0.0; params.values().len()];
    for (x, &up) in inputs.iter().zip(upstream) {
        actor_backward(params, &actor_forward_cached(params, x), up, &mut grad);
    }
    Ok(grad)
}

/// TD target. A terminal transition truncates the bootstrap.
fn td_target(reward: f64, done: bool, gamma: f64, q_next: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// Cached actor pass, mirroring ControllerParams::forward so gradients can
/// flow back through it.
struct ActorCache {
    x: Vec<f64>,
    /// Post-ReLU hidden activations.
    h: [f64; HIDDEN],
    u: f64,
}

fn actor_forward_cached(p: &ControllerParams, x: &[f64]) -> ActorCache {
    debug_assert_eq!(x.len(), p.n_inputs());
    let v = p.values();
    let mut h = [0.0; HIDDEN];
    for (j, hj) in h.iter_mut().enumerate() {
        let mut z = v[p.b1(j)];
        for (i, xi) in x.iter().enumerate() {
            z += xi * v[p.w1(i, j)];
        }
        if z > 0.0 {
            *hj = z;
        }
    }
    let mut z_out = v[p.b2()];
    for (j, hj) in h.iter().enumerate() {
        z_out += hj * v[p.w2(j)];
    }
    ActorCache {
        x: x.to_vec(),
        h,
        u: ACTUATION_MIN + sigmoid(z_out),
    }
}

/// Accumulate d(upstream * u) / d(params) into `grad`. Called once per
/// actuated voxel; the shared parameter vector collects every voxel's
/// contribution.
fn actor_backward(p: &ControllerParams, cache: &ActorCache, upstream: f64, grad: &mut [f64]) {
    let v = p.values();
    let s = cache.u - ACTUATION_MIN;
    let dz_out = upstream * s * (1.0 - s);
    grad[p.b2()] += dz_out;
    for (j, hj) in cache.h.iter().enumerate() {
        grad[p.w2(j)] += dz_out * hj;
        if *hj > 0.0 {
            let dz = dz_out * v[p.w2(j)];
            grad[p.b1(j)] += dz;
            for (i, xi) in cache.x.iter().enumerate() {
                grad[p.w1(i, j)] += dz * xi;
            }
        }
    }
}

struct Transition {
    obs: ObservationGrid,
    next_obs: ObservationGrid,
    /// Executed (noisy) actions.
    actions: Vec<f64>,
    reward: f64,
    /// Time index of `obs`; `next_obs` is at step + 1.
    step: u32,
    done: bool,
}

struct Learner<'a> {
    cfg: &'a RlConfig,
    env: &'a EnvInstance,
    actuators: Vec<(usize, usize)>,
    actor: ControllerParams,
    actor_target: ControllerParams,
    critic: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    replay: Vec<Transition>,
    replay_head: usize,
}

impl Learner<'_> {
    fn actor_actions(
        params: &ControllerParams,
        obs: &ObservationGrid,
        actuators: &[(usize, usize)],
        step: u32,
        env: &EnvInstance,
    ) -> Vec<f64> {
        actuators
            .iter()
            .map(|&(r, c)| {
                let x = assemble_observation(obs, r, c, step, env.goal_sign, env.sensor);
                actor_forward_cached(params, &x).u
            })
            .collect()
    }

    fn push(&mut self, t: Transition) {
        if self.replay.len() < self.cfg.replay_capacity {
            self.replay.push(t);
        } else {
            self.replay[self.replay_head] = t;
            self.replay_head = (self.replay_head + 1) % self.cfg.replay_capacity;
        }
    }

    fn update(&mut self, rng: &mut ChaCha8Rng) -> Result<(), RlError> {
        let batch: Vec<usize> = (0..self.cfg.batch_size)
            .map(|_| rng.gen_range(0..self.replay.len()))
            .collect();
        let inv_b = 1.0 / self.cfg.batch_size as f64;

        let mut critic_grad = vec![0.0; self.critic.params().len()];
        let mut actor_grad = vec![0.0; self.actor.values().len()];
        let n_act = self.actuators.len();

        for &i in &batch {
            let t = &self.replay[i];

            // Critic regression toward the TD target.
            let next_actions = Self::actor_actions(
                &self.actor_target,
                &t.next_obs,
                &self.actuators,
                t.step + 1,
                self.env,
            );
            let next_in = critic_input(&t.next_obs, &self.actuators, &next_actions, t.step + 1);
            let q_next = self.critic_target.forward(&next_in)[0];
            let y = td_target(t.reward, t.done, self.cfg.gamma, q_next);

            let online_in = critic_input(&t.obs, &self.actuators, &t.actions, t.step);
            let (q, cache) = self.critic.forward_cached(&online_in);
            let dq = 2.0 * (q[0] - y) * inv_b;
            let g = self.critic.backward(&cache, &[dq]);
            for (acc, gi) in critic_grad.iter_mut().zip(&g.params) {
                *acc += gi;
            }

            // Actor ascends Q(s, actor(s)); the critic's action-input
            // gradient is chained through each voxel's shared forward pass.
            let actor_caches: Vec<ActorCache> = self
                .actuators
                .iter()
                .map(|&(r, c)| {
                    let x =
                        assemble_observation(&t.obs, r, c, t.step, self.env.goal_sign, self.env.sensor);
                    actor_forward_cached(&self.actor, &x)
                })
                .collect();
            let pi_actions: Vec<f64> = actor_caches.iter().map(|c| c.u).collect();
            let pi_in = critic_input(&t.obs, &self.actuators, &pi_actions, t.step);
            let (_, pi_cache) = self.critic.forward_cached(&pi_in);
            let dq_din = self.critic.backward(&pi_cache, &[inv_b]).input;
            let action_grads = &dq_din[n_act * STATE_SIGNALS..n_act * (STATE_SIGNALS + 1)];
            for (cache, dq_da) in actor_caches.iter().zip(action_grads) {
                // Descent on -Q.
                actor_backward(&self.actor, cache, -dq_da, &mut actor_grad);
            }
        }

        if !critic_grad.iter().all(|g| g.is_finite())
            || !actor_grad.iter().all(|g| g.is_finite())
        {
            return Err(RlError::NonFiniteGrad);
        }
        self.critic_opt.step(self.critic.params_mut(), &critic_grad);
        self.actor_opt.step(self.actor.values_mut(), &actor_grad);

        self.critic_target.blend_from(&self.critic, self.cfg.tau);
        let tau = self.cfg.tau;
        for (t, o) in self
            .actor_target
            .values_mut()
            .iter_mut()
            .zip(self.actor.values())
        {
            *t += tau * (o - *t);
        }
        Ok(())
    }
}

/// Run the full DDPG lifetime: `episodes` episodes of `steps` control
/// steps in a fixed environment. The critic and its target start from a
/// fresh random draw; nothing of them is inherited. Each record entry is
/// one episode with the actor parameters snapshotted at its start, so the
/// best entry's theta is the Lamarckian bequest. `first_inherited` marks
/// episode 0's snapshot as coming from the parent.
#[allow(clippy::too_many_arguments)]
pub fn run_rl_learning(
    genome: &MorphGenome,
    env: &EnvInstance,
    initial_actor: &ControllerParams,
    cfg: &RlConfig,
    sim_cfg: &SimConfig,
    steps: u32,
    first_inherited: bool,
    rng: &mut ChaCha8Rng,
) -> LearnerRecord {
    let mut rec = LearnerRecord::new(LearnerKind::Rl);
    if let Err(e) = run_inner(
        genome,
        env,
        initial_actor,
        cfg,
        sim_cfg,
        steps,
        first_inherited,
        rng,
        &mut rec,
    ) {
        log::warn!("rl learning aborted: {e}");
        rec.aborted = true;
    }
    rec
}

#[allow(clippy::too_many_arguments)]
fn run_inner(
    genome: &MorphGenome,
    env: &EnvInstance,
    initial_actor: &ControllerParams,
    cfg: &RlConfig,
    sim_cfg: &SimConfig,
    steps: u32,
    first_inherited: bool,
    rng: &mut ChaCha8Rng,
    rec: &mut LearnerRecord,
) -> Result<(), RlError> {
    let actuators: Vec<(usize, usize)> = genome.actuators().map(|(r, c, _)| (r, c)).collect();
    let critic = Mlp::random(&critic_sizes(actuators.len()), rng);
    let mut learner = Learner {
        cfg,
        env,
        actor: initial_actor.clone(),
        actor_target: initial_actor.clone(),
        critic_target: critic.clone(),
        actor_opt: Adam::new(initial_actor.values().len(), cfg.actor_lr),
        critic_opt: Adam::new(critic.params().len(), cfg.critic_lr),
        critic,
        replay: Vec::new(),
        replay_head: 0,
        actuators,
    };
    let goal = env.goal_sign;

    for ep in 0..cfg.episodes {
        let snapshot = learner.actor.values().to_vec();
        let mut sim = Sim::new(genome, env, sim_cfg)?;
        let com_start = sim.com_x();
        let mut com_prev = com_start;
        let mut obs = sim.observe();

        for k in 0..steps {
            let mut actions =
                Learner::actor_actions(&learner.actor, &obs, &learner.actuators, k, env);
            for a in actions.iter_mut() {
                let noise: f64 = rng.sample(StandardNormal);
                *a = (*a + cfg.noise_std * noise).clamp(ACTUATION_MIN, ACTUATION_MAX);
            }
            sim.step(&actions)?;
            let next_obs = sim.observe();
            let com = sim.com_x();
            learner.push(Transition {
                obs,
                next_obs,
                actions,
                reward: goal * (com - com_prev),
                step: k,
                done: k + 1 == steps,
            });
            obs = next_obs;
            com_prev = com;

            if (k + 1) % cfg.update_every as u32 == 0
                && learner.replay.len() >= cfg.batch_size
            {
                learner.update(rng)?;
            }
        }

        rec.entries.push(EvalEntry {
            index: ep,
            theta: snapshot,
            f: goal * (com_prev - com_start),
            inherited: first_inherited && ep == 0,
        });
    }
    Ok(())
}
