"""Training Phase: rearing with intrinsic rewards and PPO updates."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..intrinsic import intrinsic_reward_stats, make_intrinsic
from ..ppo import Agent, RolloutBuffer, lr_schedule, ppo_update
from ..world import familiar_range, spawn, step_pose
from . import checkpoint
from .config import RunConfig
from .manifest import write_manifest
from .scene import Scene

log = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.bin"
METRICS = "metrics.csv"
EPISODES = "episodes.csv"
METRIC_COLUMNS = ["env_step", "policy_loss", "value_loss", "entropy", "mean_intrinsic_reward", "lr"]
EPISODE_COLUMNS = ["episode", "reward_mean", "reward_min", "reward_max", "reward_std"]


@dataclass
class TrainingResult:
    checkpoint: Path
    metrics: Path
    env_steps: int
    updates: int


def _rngs(seed: int):
    streams = np.random.SeedSequence(seed).spawn(5)
    return [np.random.default_rng(s) for s in streams]


def run_training(config: RunConfig, out_dir) -> TrainingResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    complete = False
    files = [METRICS, EPISODES]
    try:
        result = _train(config, out_dir)
        files.append(CHECKPOINT)
        complete = True
        return result
    finally:
        write_manifest(out_dir, "train", config.to_dict(), complete,
                       {"train": round(time.perf_counter() - t0, 3)}, files,
                       {"checkpoint": CHECKPOINT if complete else None})


def _train(config: RunConfig, out_dir: Path) -> TrainingResult:
    rng_init, rng_intr, rng_env, rng_act, rng_ppo = _rngs(config.seed)
    agent = Agent(rng_init, config.ppo)
    intrinsic = make_intrinsic(config.intrinsic, rng_intr)
    buffer = RolloutBuffer(config.ppo.buffer_size)
    scene = Scene(config)
    cond = config.rearing
    rearing_range = familiar_range(cond)
    blank = scene.texture(None, None, 0)

    def textures(t):
        shown = scene.texture(cond.object_id, rearing_range, t)
        return scene.displays(config.training_wall, shown, blank)

    env_step = 0
    updates = 0
    with open(out_dir / METRICS, "w", newline="") as mf, open(out_dir / EPISODES, "w", newline="") as ef:
        metrics = csv.writer(mf)
        metrics.writerow(METRIC_COLUMNS)
        episodes = csv.writer(ef)
        episodes.writerow(EPISODE_COLUMNS)
        for ep in range(config.episodes):
            pose = spawn(rng_env, config.chamber, config.body)
            obs = scene.observe(pose, *textures(env_step))
            rewards = []
            for k in range(config.episode_steps):
                action, logp, value = agent.select_action(obs, rng_act)
                pose = step_pose(pose, action, config.body, config.chamber)
                env_step += 1
                next_obs = scene.observe(pose, *textures(env_step))
                reward = intrinsic.step(obs, action, next_obs)
                done = k == config.episode_steps - 1
                buffer.add(obs, action, logp, value, reward, done)
                rewards.append(reward)
                if buffer.full:
                    last_value = 0.0 if done else agent.value(next_obs)
                    buffer.finish(last_value, config.ppo.gamma, config.ppo.lam)
                    lr = lr_schedule(env_step, config.ppo)
                    diag = ppo_update(buffer, config.ppo, agent, rng_ppo, lr)
                    metrics.writerow([env_step, diag["policy_loss"], diag["value_loss"], diag["entropy"],
                                      float(buffer.rewards.mean()), lr])
                    mf.flush()
                    buffer.clear()
                    updates += 1
                obs = next_obs
            s = intrinsic_reward_stats(rewards)
            episodes.writerow([ep, s["mean"], s["min"], s["max"], s["std"]])
            log.info("episode %d/%d mean intrinsic reward %.4g", ep + 1, config.episodes, s["mean"])
    # A trailing partial buffer is discarded.
    nets = {"policy": agent.net, **intrinsic.networks()}
    ckpt = out_dir / CHECKPOINT
    ckpt.write_bytes(checkpoint.save_networks(nets))
    return TrainingResult(ckpt, out_dir / METRICS, env_step, updates)
