"""Test Phase: frozen-weight imprinting and recognition trials."""

from __future__ import annotations

import csv
import hashlib
import math
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from ..ppo import Agent
from ..world import (TrialRecord, TrialSpec, familiar_range, make_trial_schedule, spawn, step_pose,
                     viewpoint_ranges)
from . import checkpoint
from .config import RunConfig, config_from_dict
from .manifest import read_manifest, sha256_file, write_manifest
from .scene import Scene

INDEX = "trials.csv"
TRIAL_DIR = "trials"
INDEX_COLUMNS = ["trial_id", "kind", "viewpoint_index", "imprint_wall", "file"]
TRACE_COLUMNS = ["step", "x", "y", "heading_deg"]


def trial_rng(seed: int, trial_id: int) -> np.random.Generator:
    """Independent stream per trial, so any trial can be replayed on its own."""
    return np.random.default_rng(np.random.SeedSequence([seed, trial_id]))


def weights_digest(agent: Agent) -> str:
    h = hashlib.sha256()
    for p in agent.net.parameters():
        h.update(p.tobytes())
    return h.hexdigest()


def load_checkpoint_file(path) -> tuple[bytes, dict | None]:
    """Read checkpoint bytes and, if the run manifest sits next to it, verify its checksum."""
    path = Path(path)
    data = path.read_bytes()
    manifest = read_manifest(path.parent)
    if manifest is not None:
        expected = manifest.get("files", {}).get(path.name)
        if expected is not None and hashlib.sha256(data).hexdigest() != expected:
            raise checkpoint.CheckpointError("corrupt: checksum mismatch")
    return data, manifest


def load_agent(data: bytes, config: RunConfig) -> Agent:
    tensors = checkpoint.load_tensors(data)
    agent = Agent(np.random.default_rng(0), config.ppo)
    checkpoint.restore(agent.net, "policy", tensors)
    return agent


def run_trial(agent: Agent, trial: TrialSpec, config: RunConfig, scene: Scene, greedy: bool) -> TrialRecord:
    cond = config.rearing
    rng = trial_rng(config.seed, trial.trial_id)
    fam = familiar_range(cond)
    if trial.kind == "imprinting":
        shown_obj, shown_range = cond.object_id, fam
        other_obj, other_range = None, None
    else:
        shown_obj, shown_range = cond.object_id, viewpoint_ranges(cond)[trial.viewpoint_index]
        other_obj, other_range = cond.unfamiliar_object, fam
    pose = spawn(rng, config.chamber, config.body)
    trace = np.zeros((trial.duration, 3))
    for k in range(trial.duration):
        shown = scene.texture(shown_obj, shown_range, k)
        other = scene.texture(other_obj, other_range, k)
        obs = scene.observe(pose, *scene.displays(trial.imprint_wall, shown, other))
        action, _, _ = agent.select_action(obs, rng, greedy=greedy)
        pose = step_pose(pose, action, config.body, config.chamber)
        trace[k] = (pose.x, pose.y, pose.heading)
    return TrialRecord(trial.trial_id, trial.kind, trial.viewpoint_index, trial.imprint_wall, trace)


def trial_schedule(config: RunConfig) -> list[TrialSpec]:
    return make_trial_schedule(config.rearing, config.n_imprinting, seed=config.seed,
                               duration=config.test_trial_steps)


def run_test(checkpoint_path, out_dir, config: RunConfig | None = None, greedy: bool | None = None,
             trial_ids: Sequence[int] | None = None) -> list[TrialRecord]:
    """Run the whole schedule (or ``trial_ids``) with frozen weights and write TrialRecords."""
    t0 = time.perf_counter()
    checkpoint_path = Path(checkpoint_path)
    data, train_manifest = load_checkpoint_file(checkpoint_path)
    if config is None:
        if train_manifest is None:
            raise FileNotFoundError(f"no manifest next to {checkpoint_path}; pass a config")
        config = config_from_dict(train_manifest["config"])
    greedy = config.greedy if greedy is None else greedy
    agent = load_agent(data, config)
    digest = weights_digest(agent)
    scene = Scene(config)
    schedule = trial_schedule(config)
    if trial_ids is not None:
        wanted = set(trial_ids)
        schedule = [t for t in schedule if t.trial_id in wanted]
    records = [run_trial(agent, t, config, scene, greedy) for t in schedule]
    if weights_digest(agent) != digest:
        raise RuntimeError("policy weights changed during the Test Phase")
    out_dir = Path(out_dir)
    files = write_records(records, out_dir)
    try:
        alignment = heading_alignment(records)
    except ValueError:
        alignment = None
    write_manifest(out_dir, "test", config.to_dict(), True, {"test": round(time.perf_counter() - t0, 3)},
                   files, {"checkpoint": str(checkpoint_path.resolve()),
                           "checkpoint_sha256": sha256_file(checkpoint_path),
                           "greedy": greedy, "weights_sha256": digest,
                           "heading_alignment_deg": alignment})
    return records


def _fmt(v: float) -> str:
    return repr(float(v))


def write_records(records: Sequence[TrialRecord], out_dir) -> list[str]:
    out_dir = Path(out_dir)
    (out_dir / TRIAL_DIR).mkdir(parents=True, exist_ok=True)
    files = [INDEX]
    with open(out_dir / INDEX, "w", newline="") as fh:
        index = csv.writer(fh)
        index.writerow(INDEX_COLUMNS)
        for rec in records:
            rel = f"{TRIAL_DIR}/trial_{rec.trial_id:04d}.csv"
            vp = "" if rec.viewpoint_index is None else rec.viewpoint_index
            index.writerow([rec.trial_id, rec.kind, vp, rec.imprint_wall, rel])
            with open(out_dir / rel, "w", newline="") as tf:
                w = csv.writer(tf)
                w.writerow(TRACE_COLUMNS)
                for k, (x, y, h) in enumerate(rec.trace):
                    w.writerow([k, _fmt(x), _fmt(y), _fmt(h)])
            files.append(rel)
    return files


def read_records(run_dir) -> list[TrialRecord]:
    run_dir = Path(run_dir)
    records = []
    with open(run_dir / INDEX, newline="") as fh:
        for row in csv.DictReader(fh):
            trace = np.loadtxt(run_dir / row["file"], delimiter=",", skiprows=1, ndmin=2)[:, 1:4]
            vp = int(row["viewpoint_index"]) if row["viewpoint_index"] != "" else None
            records.append(TrialRecord(int(row["trial_id"]), row["kind"], vp, row["imprint_wall"], trace))
    return records


def heading_alignment(records: Sequence[TrialRecord]) -> float:
    """Mean absolute angle (degrees) between heading and displacement over moving steps."""
    if not records:
        raise ValueError("no trial records")
    total, count = 0.0, 0
    for rec in records:
        tr = np.asarray(rec.trace, dtype=np.float64)
        d = np.diff(tr[:, :2], axis=0)
        moving = np.hypot(d[:, 0], d[:, 1]) > 1e-12
        if not moving.any():
            continue
        move_dir = np.degrees(np.arctan2(d[moving, 1], d[moving, 0]))
        diff = np.abs((tr[1:, 2][moving] - move_dir + 180.0) % 360.0 - 180.0)
        total += float(diff.sum())
        count += int(moving.sum())
    if count == 0:
        raise ValueError("no moving steps in any trial")
    return total / count


def trace_within_bounds(record: TrialRecord, config: RunConfig) -> bool:
    r = config.body.radius
    x, y = record.trace[:, 0], record.trace[:, 1]
    eps = 1e-9
    return bool(np.all(x >= r - eps) and np.all(x <= config.chamber.length_x - r + eps)
                and np.all(y >= r - eps) and np.all(y <= config.chamber.width_y - r + eps)
                and not math.isnan(float(x.sum())))
