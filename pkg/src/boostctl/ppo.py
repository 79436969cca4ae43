"""Proximal policy optimisation for duty-cycle control.

The actor is a Gaussian policy whose mean duty comes from an MLP; the critic
is a separate MLP value function.  One episode is collected per iteration,
advantages come from GAE, and both networks are trained for ``epochs`` passes
of shuffled minibatches with plain gradient descent.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .converter import SOFT_START, soft_start_duty
from .errors import ConfigurationError, DimensionError, NumericalBlowupError
from .nn import MLP

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
RATIO_EXP_LIMIT = 20.0
STD_MIN, STD_MAX = 1e-3, 1.0
FALLBACK_LR = 3e-3


@dataclass
class PPOConfig:
    episodes: int = 50
    epochs: int = 5
    lr_actor: float = 0.05
    lr_critic: float = 0.05
    gamma: float = 0.99
    clip: float = 0.2
    gae_lambda: float = 0.98
    minibatch_size: int = 8
    hidden_layers: int = 3
    neurons: int = 256
    seed: int = 0
    init_std: float = 0.01
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    # rewards are multiplied by this before GAE so value targets stay O(1)
    reward_scale: float = 0.01
    # multiplies the actor's final-layer weights at initialisation
    actor_output_gain: float = 1.0
    # the policy mean is an offset from a centre duty: the nominal operating duty
    # 1 - v_in_nominal/v_ref when known, else the middle of the duty range
    centered: bool = True
    actor_output: str = "tanh"
    # duty soft-start applied to the policy command in training and evaluation
    soft_start: float = SOFT_START

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 < self.gae_lambda <= 1):
            raise ConfigurationError("gamma and gae_lambda must lie in (0, 1]")
        if not 0 < self.clip < 1:
            raise ConfigurationError("clip must lie in (0, 1)")
        if self.minibatch_size < 1 or self.epochs < 0 or self.episodes < 0:
            raise ConfigurationError("minibatch_size >= 1, epochs >= 0, episodes >= 0 required")
        if not (STD_MIN <= self.init_std <= STD_MAX):
            raise ConfigurationError(f"init_std must lie in [{STD_MIN}, {STD_MAX}]")

    def layer_sizes(self, n_out=1):
        return [3] + [self.neurons] * self.hidden_layers + [n_out]


def normalize_observation(obs, v_ref, dt):
    """Scale ``(v_out, e, e')`` to ``(v_out/v_ref, e/v_ref, e'*dt/v_ref)``."""
    return np.array([obs.v_out / v_ref, obs.error / v_ref, obs.error_rate * dt / v_ref])


# -- policy ------------------------------------------------------------------------

class GaussianPolicy:
    """Normal distribution over the duty command.

    ``mean = action_center + action_scale * actor(obs)``; the environment clamps
    the sampled action to the duty limits.
    """

    def __init__(self, actor, log_std, action_center=0.5, action_scale=0.5):
        if actor.layer_sizes[-1] != 1:
            raise DimensionError("actor must have a single output")
        self.actor = actor
        self.log_std = float(np.clip(log_std, math.log(STD_MIN), math.log(STD_MAX)))
        self.action_center = action_center
        self.action_scale = action_scale

    @property
    def std(self):
        return math.exp(self.log_std)

    def mean(self, obs):
        out = self.actor(obs)
        return self.action_center + self.action_scale * out[..., 0]

    def log_prob(self, obs, action):
        mu = self.mean(obs)
        return gaussian_log_prob(action, mu, self.log_std)

    def sample(self, obs, rng):
        mu = float(self.mean(obs))
        action = mu + self.std * float(rng.standard_normal())
        return action, float(gaussian_log_prob(action, mu, self.log_std))

    def copy(self):
        return GaussianPolicy(self.actor.copy(), self.log_std, self.action_center,
                              self.action_scale)


def gaussian_log_prob(x, mean, log_std):
    z = (np.asarray(x) - mean) * math.exp(-log_std)
    return -0.5 * z * z - log_std - 0.5 * LOG_2PI


def policy_sample(policy, obs, rng):
    return policy.sample(obs, rng)


def prob_ratio(new_log_prob, old_log_prob):
    """``exp(new - old)`` with the exponent clamped to ``±20``."""
    diff = np.clip(np.asarray(new_log_prob, dtype=np.float64) - old_log_prob,
                   -RATIO_EXP_LIMIT, RATIO_EXP_LIMIT)
    return np.exp(diff)


def clipped_surrogate(ratio, advantage, eps):
    """Per-sample ``min(r*A, clip(r, 1-eps, 1+eps)*A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


def compute_gae(rewards, values, bootstrap_value, gamma, lam, dones=None):
    """Generalised advantage estimates and value targets.

    ``dones[t]`` marks the last transition of an episode that terminated; the
    value after it is taken as zero.  For the final transition, if it is not
    done, ``bootstrap_value`` stands in for ``V(s_{T})``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(rewards)
    if len(values) != n:
        raise DimensionError(f"{n} rewards but {len(values)} values")
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    if len(dones) != n:
        raise DimensionError(f"{n} rewards but {len(dones)} done flags")
    adv = np.zeros(n)
    next_adv = 0.0
    next_value = float(bootstrap_value)
    for t in range(n - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


# -- rollout storage -----------------------------------------------------------------

@dataclass
class Transition:
    observation: np.ndarray
    action: float
    log_prob: float
    reward: float
    value: float
    done: bool


@dataclass
class RolloutBuffer:
    transitions: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, transition):
        self.transitions.append(transition)

    def __len__(self):
        return len(self.transitions)

    def arrays(self):
        tr = self.transitions
        return (np.array([t.observation for t in tr]), np.array([t.action for t in tr]),
                np.array([t.log_prob for t in tr]), np.array([t.reward for t in tr]),
                np.array([t.value for t in tr]), np.array([t.done for t in tr]))

    def compute_advantages(self, bootstrap_value, gamma, lam, reward_scale=1.0,
                           normalize=True):
        _, _, _, rewards, values, dones = self.arrays()
        adv, ret = compute_gae(rewards * reward_scale, values, bootstrap_value, gamma, lam, dones)
        self.returns = ret
        if normalize and len(adv) > 1:
            adv = (adv - adv.mean()) / (adv.std() + 1e-12)
        self.advantages = adv
        return self.advantages, self.returns


# -- update ---------------------------------------------------------------------------------

@dataclass
class UpdateStats:
    actor_loss: float = math.nan
    critic_loss: float = math.nan
    mean_ratio: float = math.nan
    clip_fraction: float = math.nan
    minibatches: int = 0


def actor_loss_and_grads(policy, obs, actions, old_log_probs, advantages, eps):
    """Clipped-surrogate actor loss over one minibatch and its gradients.

    Returns ``(loss, actor ParamGrads, d loss / d log_std, ratios)``.
    """
    m = len(actions)
    out, cache = policy.actor.forward(obs)
    mu = policy.action_center + policy.action_scale * out[:, 0]
    inv_var = math.exp(-2.0 * policy.log_std)
    diff = actions - mu
    new_lp = -0.5 * diff * diff * inv_var - policy.log_std - 0.5 * LOG_2PI
    raw_exp = new_lp - old_log_probs
    ratio = prob_ratio(new_lp, old_log_probs)
    surr = clipped_surrogate(ratio, advantages, eps)
    loss = -float(np.mean(surr))
    # the unclipped branch carries gradient whenever min() selects it
    unclipped = ratio * advantages <= np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    active = unclipped & (np.abs(raw_exp) < RATIO_EXP_LIMIT)
    d_lp = np.where(active, -advantages * ratio / m, 0.0)
    d_mu = d_lp * diff * inv_var
    grads = policy.actor.backward(cache, (d_mu * policy.action_scale)[:, None])
    d_log_std = float(np.sum(d_lp * (diff * diff * inv_var - 1.0)))
    return loss, grads, d_log_std, ratio


def critic_loss_and_grads(critic, obs, returns):
    m = len(returns)
    out, cache = critic.forward(obs)
    resid = out[:, 0] - returns
    loss = float(np.mean(resid * resid))
    grads = critic.backward(cache, (2.0 / m * resid)[:, None])
    return loss, grads


def _clip_scale(grads, extra, max_norm):
    """Factor bringing the joint gradient norm down to ``max_norm`` (1 if already below)."""
    norm = math.sqrt(grads.global_norm() ** 2 + extra * extra)
    if not math.isfinite(norm):
        raise NumericalBlowupError("non-finite PPO gradient")
    if max_norm is not None and norm > max_norm:
        return max_norm / norm
    return 1.0


def ppo_update(policy, critic, buffer, config, rng):
    """K epochs of shuffled minibatch updates on ``buffer``; mutates both networks."""
    if buffer.advantages is None:
        raise ConfigurationError("compute advantages before updating")
    obs, actions, old_lp, _, _, _ = buffer.arrays()
    adv, ret = buffer.advantages, buffer.returns
    n = len(actions)
    stats = UpdateStats()
    a_losses, c_losses, ratios, clipped = [], [], [], []
    lo_std, hi_std = math.log(STD_MIN), math.log(STD_MAX)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = perm[start:start + config.minibatch_size]
            c_loss, c_grads = critic_loss_and_grads(critic, obs[idx], ret[idx])
            a_loss, a_grads, d_ls, ratio = actor_loss_and_grads(
                policy, obs[idx], actions[idx], old_lp[idx], adv[idx], config.clip)
            if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                stats.actor_loss = float(np.mean(a_losses)) if a_losses else math.nan
                stats.critic_loss = float(np.mean(c_losses)) if c_losses else math.nan
                raise NumericalBlowupError(f"non-finite PPO loss (actor={a_loss}, "
                                           f"critic={c_loss}); last stats {stats}")
            c_scale = _clip_scale(c_grads, 0.0, config.max_grad_norm)
            a_scale = _clip_scale(a_grads, d_ls, config.max_grad_norm)
            critic.apply_update(c_grads, config.lr_critic * c_scale)
            policy.actor.apply_update(a_grads, config.lr_actor * a_scale)
            policy.log_std = min(max(policy.log_std - config.lr_actor * a_scale * d_ls, lo_std),
                                 hi_std)
            a_losses.append(a_loss)
            c_losses.append(c_loss)
            ratios.extend(ratio.tolist())
            clipped.extend((np.abs(ratio - 1.0) > config.clip).tolist())
            stats.minibatches += 1
    if stats.minibatches:
        stats.actor_loss = float(np.mean(a_losses))
        stats.critic_loss = float(np.mean(c_losses))
        stats.mean_ratio = float(np.mean(ratios))
        stats.clip_fraction = float(np.mean(clipped))
    return stats


# -- agent ------------------------------------------------------------------------------------

def nominal_duty(params, v_ref):
    """Ideal boost duty at the rated input voltage."""
    return 1.0 - params.v_in_nominal / v_ref


def make_agent(config, duty_min=0.05, duty_max=0.95, center_duty=None):
    """Fresh actor/critic pair; the two networks use independent seeds."""
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    actor_seed, critic_seed = (int(s.generate_state(1)[0]) for s in seeds)
    actor = MLP.init(config.layer_sizes(), "tanh", config.actor_output, seed=actor_seed)
    actor.weights[-1] *= config.actor_output_gain
    critic = MLP.init(config.layer_sizes(), "tanh", "identity", seed=critic_seed)
    center = 0.5 * (duty_min + duty_max) if center_duty is None else center_duty
    center = min(max(center, duty_min), duty_max) if config.centered else 0.0
    scale = 0.5 * (duty_max - duty_min) if config.centered else 1.0
    policy = GaussianPolicy(actor, math.log(config.init_std), center, scale)
    return policy, critic


def collect_episode(env, policy, critic, rng, soft_start=0.0):
    """Roll out one episode with a stochastic policy; returns ``(buffer, bootstrap, total)``."""
    params, v_ref = env.params, env.spec.v_ref
    obs = env.reset()
    buffer = RolloutBuffer()
    total = 0.0
    done = False
    s = normalize_observation(obs, v_ref, params.dt)
    while not done:
        action, lp = policy.sample(s, rng)
        value = float(critic(s)[0])
        obs, reward, done = env.step(
            float(soft_start_duty(env.t, action, params.duty_min, soft_start)))
        terminated = done and env.steps < env.spec.horizon_steps
        buffer.add(Transition(s, action, lp, reward, value, terminated))
        total += reward
        s = normalize_observation(obs, v_ref, params.dt)
    bootstrap = 0.0 if buffer.transitions[-1].done else float(critic(s)[0])
    return buffer, bootstrap, total


@dataclass
class TrainResult:
    policy: GaussianPolicy
    critic: MLP
    reward_curve: list
    stats: list
    config: PPOConfig


def train(env_factory, config=None, callback=None):
    """Alternate episode collection and clipped-surrogate updates for ``config.episodes``."""
    config = config or PPOConfig()
    env = env_factory()
    policy, critic = make_agent(config, env.params.duty_min, env.params.duty_max,
                                nominal_duty(env.params, env.spec.v_ref))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(3)[2])
    curve, history = [], []
    for episode in range(config.episodes):
        buffer, bootstrap, total = collect_episode(env, policy, critic, rng, config.soft_start)
        buffer.compute_advantages(bootstrap, config.gamma, config.gae_lambda,
                                  config.reward_scale, config.normalize_advantages)
        stats = ppo_update(policy, critic, buffer, config, rng)
        curve.append(total)
        history.append(stats)
        log.info("episode %d: steps=%d return=%.3f std=%.4f actor=%.4f critic=%.4f clip=%.3f",
                 episode, len(buffer), total, policy.std, stats.actor_loss,
                 stats.critic_loss, stats.clip_fraction)
        if callback is not None:
            callback(episode, buffer, stats, policy, critic)
    return TrainResult(policy, critic, curve, history, config)


class PPOControl:
    """Closed-loop adapter: deterministic mean action of a trained policy."""

    name = "rl"

    def __init__(self, policy, soft_start=SOFT_START):
        self.policy = policy
        self.soft_start = soft_start

    def reset(self):
        pass

    def __call__(self, obs, t, v_in, scenario):
        p = scenario.params()
        s = normalize_observation(obs, scenario.v_ref, p.dt)
        return float(soft_start_duty(t, float(self.policy.mean(s)), p.duty_min, self.soft_start))


# -- checkpoints ---------------------------------------------------------------------------

def save_agent(directory, result, extra=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    result.policy.actor.save(directory / "actor.json")
    result.critic.save(directory / "critic.json")
    header = {"format": "boostctl.ppo/1", "config": asdict(result.config),
              "log_std": result.policy.log_std,
              "action_center": result.policy.action_center,
              "action_scale": result.policy.action_scale,
              "reward_curve": [float(r) for r in result.reward_curve]}
    header.update(extra or {})
    (directory / "agent.json").write_text(json.dumps(header, indent=2))
    return header


def load_agent(directory):
    directory = Path(directory)
    header = json.loads((directory / "agent.json").read_text())
    actor = MLP.load(directory / "actor.json")
    critic = MLP.load(directory / "critic.json")
    policy = GaussianPolicy(actor, header["log_std"], header["action_center"],
                            header["action_scale"])
    return policy, critic, header
