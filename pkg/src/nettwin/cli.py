"""Command-line entry point.

Exit codes: 0 ok, 1 usage, 2 invalid config, 3 I/O failure, 4 corrupt checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import emit_report, load_reference
from .harness import CheckpointError, ConfigError, RunConfig, load_config, run_test, run_training, smoke_config
from .harness.config import config_from_dict
from .intrinsic import ALGORITHMS
from .world import CONDITIONS

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_CORRUPT = 0, 1, 2, 3, 4

log = logging.getLogger("nettwin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _base_config(path: str | None, smoke: bool) -> RunConfig:
    if path is not None:
        return load_config(path)
    return smoke_config() if smoke else RunConfig()


def _override(cfg: RunConfig, **changes) -> RunConfig:
    changes = {k: v for k, v in changes.items() if v is not None}
    return config_from_dict({**cfg.to_dict(), **changes}) if changes else cfg


def cmd_train(args) -> int:
    cfg = _override(_base_config(args.config, args.smoke), seed=args.seed, algorithm=args.algo,
                    condition=args.condition)
    result = run_training(cfg, args.out)
    print(f"trained {result.env_steps} steps, {result.updates} updates -> {result.checkpoint}")
    return EXIT_OK


def cmd_test(args) -> int:
    cfg = load_config(args.config) if args.config else None
    records = run_test(args.checkpoint, args.out, config=cfg, greedy=True if args.greedy else None)
    print(f"wrote {len(records)} trial records -> {args.out}")
    return EXIT_OK


def _population_job(job: tuple[dict, str]) -> str:
    cfg_dict, out = job
    cfg = config_from_dict(cfg_dict)
    result = run_training(cfg, Path(out) / "train")
    run_test(result.checkpoint, Path(out) / "test", config=cfg)
    return out


def population_jobs(cfg: RunConfig, agents: int, out, algos, conditions) -> list[tuple[dict, str]]:
    """One (config, directory) pair per algorithm x condition x seed."""
    jobs = []
    for algo in algos:
        for cond in conditions:
            for seed in range(cfg.seed, cfg.seed + agents):
                job_cfg = _override(cfg, algorithm=algo, condition=cond, seed=seed)
                jobs.append((job_cfg.to_dict(), str(Path(out) / algo / f"condition{cond}" / f"seed{seed:04d}")))
    return jobs


def cmd_population(args) -> int:
    cfg = _base_config(args.config, args.smoke)
    if args.agents < 1:
        raise UsageError("--agents must be >= 1")
    jobs = population_jobs(cfg, args.agents, args.out, args.algos, args.conditions)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for done in pool.map(_population_job, jobs):
                log.info("finished %s", done)
    else:
        for job in jobs:
            log.info("finished %s", _population_job(job))
    print(f"ran {len(jobs)} agents -> {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        ref = load_reference(args.ref)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid chick reference {args.ref}: {exc}") from exc
    report = emit_report(args.runs, ref, args.out, perplexity=args.perplexity, seed=args.seed)
    verdict = report["comparison"]["all"]
    for metric, c in verdict.items():
        if c["adequate"] is None:
            print(f"{metric}: no comparison available")
        else:
            status = "adequate" if c["adequate"] else "not adequate"
            print(f"{metric}: machines {c['machine_mean']:.2f} vs chicks {c['chick_center']:.2f} "
                  f"+/- {c['chick_halfwidth']:.2f} -> {status} (gap {c['gap']:.2f})")
    flags = [c["adequate"] for c in verdict.values() if c["adequate"] is not None]
    overall = "unavailable" if not flags else ("adequate" if all(flags) else "not adequate")
    print(f"verdict: {overall}")
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_frame(args) -> int:
    """Render the first observation an agent would see and write it as PPM."""
    from .harness.scene import Scene
    from .render import write_ppm
    from .world import familiar_range, spawn
    import numpy as np

    cfg = _override(_base_config(args.config, args.smoke), seed=args.seed, condition=args.condition)
    scene = Scene(cfg)
    rng_env = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(5)[2])
    pose = spawn(rng_env, cfg.chamber, cfg.body)
    shown = scene.texture(cfg.rearing.object_id, familiar_range(cfg.rearing), args.step)
    frame = scene.observe(pose, *scene.displays(cfg.training_wall, shown, scene.texture(None, None, 0)))
    write_ppm(args.out, frame.astype(np.float32) / 255.0)
    print(json.dumps({"pose": [pose.x, pose.y, pose.heading], "out": args.out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nettwin", description="Digital-twin controlled-rearing experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the Training Phase for one agent")
    t.add_argument("--config", help="run config JSON (defaults to the full-scale config)")
    t.add_argument("--smoke", action="store_true", help="start from the small smoke config")
    t.add_argument("--seed", type=int)
    t.add_argument("--algo", choices=ALGORITHMS)
    t.add_argument("--condition", type=int, choices=sorted(CONDITIONS))
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("test", help="run the Test Phase on a trained checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--greedy", action="store_true", help="argmax actions instead of sampling")
    s.add_argument("--config", help="config to use when no training manifest sits next to the checkpoint")
    s.set_defaults(func=cmd_test)

    pop = sub.add_parser("population", help="train and test many agents")
    pop.add_argument("--config")
    pop.add_argument("--smoke", action="store_true")
    pop.add_argument("--agents", type=int, default=26, help="agents per algorithm and condition")
    pop.add_argument("--algos", nargs="+", choices=ALGORITHMS, default=list(ALGORITHMS))
    pop.add_argument("--conditions", nargs="+", type=int, choices=sorted(CONDITIONS), default=sorted(CONDITIONS))
    pop.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    pop.add_argument("--out", required=True)
    pop.set_defaults(func=cmd_population)

    a = sub.add_parser("analyze", help="score test runs and compare with a chick reference")
    a.add_argument("--runs", required=True)
    a.add_argument("--ref", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--perplexity", type=float, default=10.0)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("frame", help="write an agent's first rearing observation as PPM")
    f.add_argument("--config")
    f.add_argument("--smoke", action="store_true")
    f.add_argument("--seed", type=int)
    f.add_argument("--condition", type=int, choices=sorted(CONDITIONS))
    f.add_argument("--step", type=int, default=0, help="stimulus clock")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_frame)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
