"""Self-supervised reward generators: ICM, RND and contrastive curiosity.

Every generator exposes ``step(obs, action, next_obs) -> reward``, which scores
the transition and then takes its own learning step.  Frames arrive as uint8
(H, W, 3) arrays, the same form the policy consumes.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .ppo import N_BRANCH, frames_to_input
from .world import Action

ALGORITHMS = ("icm", "rnd", "contrastive")


@dataclass
class IntrinsicConfig:
    algorithm: str = "icm"
    strength: float = 1.0
    gamma: float = 0.99
    learning_rate: float = 3e-4
    hidden_units: int = 128
    embedding_dim: int = 128
    icm_forward_weight: float = 0.2
    contrastive_memory: int = 1024
    contrastive_temperature: float = 0.5
    contrastive_update_period: int = 64
    contrastive_batch: int = 32
    contrastive_replay: int = 256
    contrastive_projection_dim: int = 64

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown intrinsic algorithm {self.algorithm!r}")
        if self.strength < 0:
            raise ValueError("strength must be non-negative")


def one_hot_actions(actions: np.ndarray, dtype=np.float32) -> np.ndarray:
    """(N, 2) branch indices -> (N, 6) concatenated one-hots."""
    out = np.zeros((len(actions), 2 * N_BRANCH), dtype=dtype)
    rows = np.arange(len(actions))
    out[rows, actions[:, 0]] = 1
    out[rows, N_BRANCH + actions[:, 1]] = 1
    return out


def _cross_entropy(logits: np.ndarray, idx: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. logits (already divided by N)."""
    logp = nn.log_softmax(logits.astype(np.float64))
    rows = np.arange(len(idx))
    loss = -logp[rows, idx].mean()
    grad = np.exp(logp)
    grad[rows, idx] -= 1.0
    return loss, grad / len(idx)


class IntrinsicModule:
    name = ""

    def __init__(self, config: IntrinsicConfig):
        self.config = config

    def step(self, obs: np.ndarray, action: Action, next_obs: np.ndarray) -> float:
        raise NotImplementedError

    def networks(self) -> dict[str, nn.Sequential]:
        raise NotImplementedError

    def _adam(self, nets):
        params = [p for net in nets for p in net.parameters()]
        return nn.AdamState(params)

    def _apply(self, nets, state):
        params = [p for net in nets for p in net.parameters()]
        grads = [g for net in nets for g in net.gradients()]
        nn.adam_step(params, grads, state, self.config.learning_rate)


class IcmModule(IntrinsicModule):
    """Pathak-style curiosity: reward is the forward model's error in embedding space.

    The embedding is shaped by the inverse-dynamics loss only; the forward loss
    treats both embeddings as constants.
    """

    name = "icm"

    def __init__(self, config: IntrinsicConfig, rng: np.random.Generator):
        super().__init__(config)
        h, e = config.hidden_units, config.embedding_dim
        self.encoder = nn.init_params(rng, nn.Sequential(nn.visual_encoder(hidden=e)))
        self.forward_model = nn.init_params(rng, nn.Sequential(nn.mlp([e + 2 * N_BRANCH, h, e])))
        self.inverse_model = nn.init_params(rng, nn.Sequential(nn.mlp([2 * e, h, 2 * N_BRANCH])))
        self.adam = self._adam(self._nets())

    def _nets(self):
        return [self.encoder, self.forward_model, self.inverse_model]

    def networks(self):
        return {"icm.encoder": self.encoder, "icm.forward": self.forward_model, "icm.inverse": self.inverse_model}

    def embed(self, x: np.ndarray) -> np.ndarray:
        return self.encoder(x)

    def forward_loss(self, phi_s, actions, phi_next, backward: bool = False, scale: float = 1.0):
        """Per-sample 0.5*||f(phi_s, a) - phi_next||^2; optionally backprops ``scale * mean``."""
        inp = np.concatenate([phi_s, one_hot_actions(actions, phi_s.dtype)], axis=1)
        err = self.forward_model(inp) - phi_next
        per_sample = 0.5 * (err.astype(np.float64) ** 2).sum(axis=1)
        if backward:
            self.forward_model.backward((scale * err / len(err)).astype(err.dtype))
        return per_sample

    def inverse_loss(self, x_s, actions, x_next, backward: bool = False, scale: float = 1.0) -> float:
        """Cross-entropy of both action branches predicted from (phi(s), phi(s'))."""
        n = len(x_s)
        phi = self.encoder(np.concatenate([x_s, x_next], axis=0))
        logits = self.inverse_model(np.concatenate([phi[:n], phi[n:]], axis=1))
        lt, gt = _cross_entropy(logits[:, :N_BRANCH], actions[:, 0])
        lr, gr = _cross_entropy(logits[:, N_BRANCH:], actions[:, 1])
        if backward:
            grad = scale * np.concatenate([gt, gr], axis=1)
            dinp = self.inverse_model.backward(grad.astype(logits.dtype))
            e = phi.shape[1]
            self.encoder.backward(np.concatenate([dinp[:, :e], dinp[:, e:]], axis=0))
        return float(lt + lr)

    def update(self, x_s, actions, x_next) -> tuple[np.ndarray, float]:
        """One Adam step on the mixed loss; returns (forward loss per sample, inverse loss)."""
        beta = self.config.icm_forward_weight
        for net in self._nets():
            net.zero_grad()
        inv = self.inverse_loss(x_s, actions, x_next, backward=True, scale=1.0 - beta)
        n = len(x_s)
        phi = self.encoder(np.concatenate([x_s, x_next], axis=0))
        fwd = self.forward_loss(phi[:n], actions, phi[n:], backward=True, scale=beta)
        self._apply(self._nets(), self.adam)
        return fwd, inv

    def step(self, obs, action, next_obs):
        x = frames_to_input(np.stack([obs, next_obs]))
        acts = np.array([action.index])
        phi = self.encoder(x)
        raw = self.forward_loss(phi[:1], acts, phi[1:])[0]
        self.update(x[:1], acts, x[1:])
        return float(self.config.strength * raw)


class RunningMeanStd:
    """Welford accumulator."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / self.count) if self.count else 0.0


class RndModule(IntrinsicModule):
    """Random network distillation: reward is the predictor's error on a frozen random target."""

    name = "rnd"

    def __init__(self, config: IntrinsicConfig, rng: np.random.Generator):
        super().__init__(config)
        h, e = config.hidden_units, config.embedding_dim
        self.target = nn.init_params(rng, nn.Sequential(nn.visual_encoder(hidden=h) + [nn.Dense(h, e)]))
        self.predictor = nn.init_params(rng, nn.Sequential(nn.visual_encoder(hidden=h) + [nn.Dense(h, e)]))
        self.adam = self._adam([self.predictor])
        self.raw_stats = RunningMeanStd()

    def networks(self):
        return {"rnd.target": self.target, "rnd.predictor": self.predictor}

    def predictor_loss(self, x: np.ndarray, backward: bool = False) -> np.ndarray:
        """Per-sample ||f_hat(x) - f(x)||^2; optionally backprops the batch mean."""
        target = self.target(x)
        err = self.predictor(x) - target
        raw = (err.astype(np.float64) ** 2).sum(axis=1)
        if backward:
            self.predictor.backward((2.0 * err / len(err)).astype(err.dtype))
        return raw

    def update(self, x: np.ndarray) -> np.ndarray:
        self.predictor.zero_grad()
        raw = self.predictor_loss(x, backward=True)
        self._apply([self.predictor], self.adam)
        return raw

    def step(self, obs, action, next_obs):
        x = frames_to_input(next_obs[None])
        raw = float(self.update(x)[0])
        self.raw_stats.update(raw)
        std = self.raw_stats.std
        scale = std if self.raw_stats.count > 1 and std > 1e-8 else 1.0
        return self.config.strength * raw / scale


def l2_normalize(y: np.ndarray):
    norm = np.sqrt((y.astype(np.float64) ** 2).sum(axis=1, keepdims=True))
    norm = np.maximum(norm, 1e-12)
    return y / norm, norm


def l2_normalize_backward(z: np.ndarray, norm: np.ndarray, dz: np.ndarray) -> np.ndarray:
    return (dz - z * (z * dz).sum(axis=1, keepdims=True)) / norm


def nt_xent(z: np.ndarray, temperature: float):
    """NT-Xent loss for 2B unit vectors where rows i and i+B are positive pairs.

    Returns (mean loss, gradient w.r.t. z).
    """
    z = z.astype(np.float64)
    m = len(z)
    if m % 2:
        raise ValueError("NT-Xent needs an even number of embeddings")
    b = m // 2
    sim = z @ z.T / temperature
    np.fill_diagonal(sim, -np.inf)
    pos = np.concatenate([np.arange(b, m), np.arange(b)])
    rows = np.arange(m)
    logp = sim - sim.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    loss = -logp[rows, pos].mean()
    g = np.exp(logp)
    g[rows, pos] -= 1.0
    g /= m
    dz = (g + g.T) @ z / temperature
    return float(loss), dz


def augment(x: np.ndarray, rng: np.random.Generator, scale=(0.8, 1.0), brightness: float = 0.2) -> np.ndarray:
    """Random square crop resized back (nearest) plus additive brightness jitter; (C, H, W) input."""
    _, h, w = x.shape
    s = rng.uniform(*scale)
    ch, cw = max(1, int(round(s * h))), max(1, int(round(s * w)))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    rows = top + (np.arange(h) * ch) // h
    cols = left + (np.arange(w) * cw) // w
    out = x[:, rows][:, :, cols]
    out = out + np.float32(rng.uniform(-brightness, brightness))
    return np.clip(out, 0.0, 1.0).astype(x.dtype)


class ContrastiveModule(IntrinsicModule):
    """Novelty as distance from recent embeddings, with a SimCLR-trained encoder."""

    name = "contrastive"

    def __init__(self, config: IntrinsicConfig, rng: np.random.Generator):
        super().__init__(config)
        h, p = config.hidden_units, config.contrastive_projection_dim
        self.net = nn.init_params(rng, nn.Sequential(nn.visual_encoder(hidden=h) + nn.mlp([h, h, p])))
        self.adam = self._adam([self.net])
        self.rng = np.random.default_rng(rng.integers(2 ** 63))
        self.memory: collections.deque = collections.deque(maxlen=config.contrastive_memory)
        self.replay: collections.deque = collections.deque(maxlen=config.contrastive_replay)
        self.steps = 0
        self.last_loss = math.nan

    def networks(self):
        return {"contrastive.net": self.net}

    def project(self, x: np.ndarray) -> np.ndarray:
        z, _ = l2_normalize(self.net(x))
        return z.astype(np.float32)

    def score(self, frame_u8: np.ndarray) -> tuple[float, np.ndarray]:
        """Reward for a frame against the current memory; no side effects."""
        z = self.project(frame_to_single_input(frame_u8))[0]
        if not self.memory:
            return self.config.strength, z
        mem = np.asarray(self.memory, dtype=np.float64)
        best = float(np.max(mem @ z.astype(np.float64)))
        return self.config.strength * max(0.0, 1.0 - best), z

    def contrastive_loss(self, views: np.ndarray, backward: bool = False) -> float:
        """NT-Xent on (2B, C, H, W) views arranged as [first views; second views]."""
        y = self.net(views)
        z, norm = l2_normalize(y)
        loss, dz = nt_xent(z, self.config.contrastive_temperature)
        if backward:
            self.net.backward(l2_normalize_backward(z, norm, dz).astype(y.dtype))
        return loss

    def update(self) -> float:
        k = min(self.config.contrastive_batch, len(self.replay))
        idx = self.rng.choice(len(self.replay), size=k, replace=False)
        frames = frames_to_input(np.stack([self.replay[i] for i in idx]))
        first = np.stack([augment(f, self.rng) for f in frames])
        second = np.stack([augment(f, self.rng) for f in frames])
        self.net.zero_grad()
        loss = self.contrastive_loss(np.concatenate([first, second]), backward=True)
        self._apply([self.net], self.adam)
        return loss

    def step(self, obs, action, next_obs):
        reward, z = self.score(next_obs)
        self.memory.append(z)
        self.replay.append(next_obs.copy())
        self.steps += 1
        if self.steps % self.config.contrastive_update_period == 0 and len(self.replay) >= 2:
            self.last_loss = self.update()
        return reward


def frame_to_single_input(frame_u8: np.ndarray) -> np.ndarray:
    return frames_to_input(frame_u8[None])


def make_intrinsic(config: IntrinsicConfig, rng: np.random.Generator) -> IntrinsicModule:
    cls = {"icm": IcmModule, "rnd": RndModule, "contrastive": ContrastiveModule}[config.algorithm]
    return cls(config, rng)


def intrinsic_reward_stats(rewards) -> dict:
    """Mean, min, max and sample standard deviation of one episode's rewards."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("no rewards to summarize")
    return {
        "mean": float(r.mean()),
        "min": float(r.min()),
        "max": float(r.max()),
        "std": float(r.std(ddof=1)) if r.size > 1 else 0.0,
    }
