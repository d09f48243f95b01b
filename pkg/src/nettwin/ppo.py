"""PPO learner: shared conv encoder, two categorical action branches, value head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .world import Action

N_BRANCH = 3  # categories per action branch: -1, 0, +1


@dataclass
class PpoConfig:
    learning_rate: float = 3e-4
    batch_size: int = 500
    buffer_size: int = 2048
    beta: float = 0.01
    epsilon: float = 0.2
    lam: float = 0.95
    gamma: float = 0.99
    lr_schedule: str = "linear"
    max_steps: int = 1_000_000
    epochs_per_update: int = 3
    value_coef: float = 0.5
    hidden_units: int = 128
    num_layers: int = 2

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must be in [0, 1]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be at least batch_size")
        if self.lr_schedule not in ("linear", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")


def lr_schedule(env_step: int, config: PpoConfig) -> float:
    if config.lr_schedule == "constant":
        return config.learning_rate
    return config.learning_rate * max(0.0, 1.0 - env_step / config.max_steps)


def frames_to_input(frames: np.ndarray) -> np.ndarray:
    """uint8 (N, H, W, 3) frames -> float32 (N, 3, H, W) in [0, 1]."""
    return np.ascontiguousarray(frames.transpose(0, 3, 1, 2), dtype=np.float32) / np.float32(255.0)


def quantize(frame: np.ndarray) -> np.ndarray:
    """Float frame in [0, 1] -> uint8, the form every network consumes."""
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def build_policy_network(config: PpoConfig | None = None, dtype=np.float32) -> nn.Sequential:
    config = config or PpoConfig()
    h = config.hidden_units
    layers = nn.visual_encoder(hidden=h, dtype=dtype)
    layers += nn.mlp([h] * (config.num_layers + 1) + [2 * N_BRANCH + 1], dtype=dtype)
    return nn.Sequential(layers)


def split_heads(out: np.ndarray):
    """Network output -> (translation logits, rotation logits, value)."""
    return out[:, :N_BRANCH], out[:, N_BRANCH:2 * N_BRANCH], out[:, 2 * N_BRANCH]


def _sample(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs, dtype=np.float64)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(probs) - 1))


class Agent:
    """Policy/value network plus its optimizer state."""

    def __init__(self, rng: np.random.Generator, config: PpoConfig | None = None):
        self.config = config or PpoConfig()
        self.net = nn.init_params(rng, build_policy_network(self.config))
        self.adam = nn.AdamState(self.net.parameters())

    def evaluate(self, frames_u8: np.ndarray):
        return split_heads(self.net(frames_to_input(frames_u8)))

    def select_action(self, obs_u8: np.ndarray, rng: np.random.Generator, greedy: bool = False):
        """Sample one action for a single uint8 frame.

        Returns (Action, joint log-prob, value estimate).
        """
        lt, lr, v = self.evaluate(obs_u8[None])
        logp_t = nn.log_softmax(lt[0].astype(np.float64))
        logp_r = nn.log_softmax(lr[0].astype(np.float64))
        if greedy:
            it, ir = int(np.argmax(logp_t)), int(np.argmax(logp_r))
        else:
            it = _sample(np.exp(logp_t), rng.random())
            ir = _sample(np.exp(logp_r), rng.random())
        return Action.from_index(it, ir), float(logp_t[it] + logp_r[ir]), float(v[0])

    def value(self, obs_u8: np.ndarray) -> float:
        return float(self.evaluate(obs_u8[None])[2][0])


def gae(rewards, values, gamma: float, lam: float, dones=None):
    """Generalized advantage estimates and returns.

    ``values`` has one more entry than ``rewards``: the last is the bootstrap
    value.  ``dones[t]`` marks transition t as the end of an episode, so
    neither the next value nor later residuals flow back across it.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(rewards)
    if len(values) != n + 1:
        raise ValueError(f"values must have length {n + 1}, got {len(values)}")
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    if len(dones) != n:
        raise ValueError("dones must match rewards in length")
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values[:n]


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    if std < 1e-8:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / std


class RolloutBuffer:
    def __init__(self, capacity: int, frame_shape=(96, 96, 3)):
        self.capacity = capacity
        self.obs = np.zeros((capacity, *frame_shape), dtype=np.uint8)
        self.actions = np.zeros((capacity, 2), dtype=np.int64)
        self.logp = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.advantages = np.zeros(capacity)
        self.returns = np.zeros(capacity)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    def add(self, obs_u8, action: Action, logp: float, value: float, reward: float, done: bool) -> None:
        if self.full:
            raise RuntimeError("rollout buffer is full")
        i = self.size
        self.obs[i] = obs_u8
        self.actions[i] = action.index
        self.logp[i], self.values[i], self.rewards[i], self.dones[i] = logp, value, reward, done
        self.size += 1

    def finish(self, last_value: float, gamma: float, lam: float) -> None:
        """Compute GAE over the stored transitions; ``last_value`` bootstraps the tail."""
        n = self.size
        vals = np.append(self.values[:n], 0.0 if self.dones[n - 1] else last_value)
        adv, ret = gae(self.rewards[:n], vals, gamma, lam, self.dones[:n])
        self.advantages[:n] = normalize_advantages(adv)
        self.returns[:n] = ret

    def clear(self) -> None:
        self.size = 0


def _branch_terms(logits: np.ndarray, idx: np.ndarray):
    """log-prob of chosen categories, entropy, and their gradients w.r.t. logits."""
    logp_all = nn.log_softmax(logits)
    p = np.exp(logp_all)
    rows = np.arange(len(idx))
    logp = logp_all[rows, idx]
    entropy = -(p * logp_all).sum(axis=1)
    dlogp = -p
    dlogp[rows, idx] += 1.0
    dent = -p * (logp_all + entropy[:, None])
    return logp, entropy, dlogp, dent


def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray, epsilon: float):
    """Per-sample min(rA, clip(r, 1-eps, 1+eps)A) and a mask of where rA is the minimum."""
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1 - epsilon, 1 + epsilon) * advantages
    return np.minimum(surr1, surr2), surr1 <= surr2


def ppo_loss_and_grad(net: nn.Sequential, obs: np.ndarray, actions: np.ndarray, old_logp: np.ndarray,
                      advantages: np.ndarray, returns: np.ndarray, config: PpoConfig) -> dict:
    """Clipped-surrogate PPO loss on one minibatch; accumulates gradients into ``net``.

    ``obs`` is already network input (N, 3, H, W).  Loss is the batch mean of
    ``-min(rA, clip(r)A) + c_v (V - R)^2 / 2 - beta * (H_trans + H_rot)``.
    """
    out = net(obs)
    lt, lr, v = split_heads(out)
    dt = out.dtype
    lpt, ht, dlpt, dht = _branch_terms(lt.astype(np.float64), actions[:, 0])
    lpr, hr, dlpr, dhr = _branch_terms(lr.astype(np.float64), actions[:, 1])
    logp = lpt + lpr
    ratio = np.exp(logp - old_logp)
    eps = config.epsilon
    policy_obj, active = clipped_surrogate(ratio, advantages, eps)
    entropy = ht + hr
    v64 = v.astype(np.float64)
    value_err = v64 - returns
    n = len(obs)
    loss = (-policy_obj + config.value_coef * 0.5 * value_err ** 2 - config.beta * entropy).mean()

    # d(-min)/dlogp: only the unclipped branch carries gradient.
    dlogp = np.where(active, -ratio * advantages, 0.0) / n
    grad = np.zeros(out.shape, dtype=np.float64)
    grad[:, :N_BRANCH] = dlogp[:, None] * dlpt - config.beta / n * dht
    grad[:, N_BRANCH:2 * N_BRANCH] = dlogp[:, None] * dlpr - config.beta / n * dhr
    grad[:, 2 * N_BRANCH] = config.value_coef * value_err / n
    net.backward(grad.astype(dt))
    return {
        "loss": float(loss),
        "policy_loss": float(-policy_obj.mean()),
        "value_loss": float((0.5 * value_err ** 2).mean()),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1) > eps)),
        "ratio_mean": float(ratio.mean()),
    }


def minibatch_slices(n: int, batch_size: int) -> list[tuple[int, int]]:
    """Consecutive slices covering all n samples; the last may be short."""
    return [(a, min(a + batch_size, n)) for a in range(0, n, batch_size)]


def ppo_update(buffer: RolloutBuffer, config: PpoConfig, agent: Agent, rng: np.random.Generator,
               lr: float) -> dict:
    """Several epochs of shuffled minibatch Adam steps over a full buffer.

    Returns the mean policy loss, value loss and entropy over all minibatches.
    """
    if not buffer.full:
        raise ValueError(f"buffer not full ({buffer.size}/{buffer.capacity})")
    n = buffer.size
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    count = 0
    params = agent.net.parameters()
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for a, b in minibatch_slices(n, config.batch_size):
            idx = order[a:b]
            agent.net.zero_grad()
            diag = ppo_loss_and_grad(agent.net, frames_to_input(buffer.obs[idx]), buffer.actions[idx],
                                     buffer.logp[idx], buffer.advantages[idx], buffer.returns[idx], config)
            nn.adam_step(params, agent.net.gradients(), agent.adam, lr)
            for k in sums:
                sums[k] += diag[k]
            count += 1
    return {k: v / count for k, v in sums.items()}

