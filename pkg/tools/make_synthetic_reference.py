"""Regenerate src/nettwin/data/chick_reference_synthetic.json.

The output is synthetic: it only matches published group summaries
(imprinting mean 88, sd 7, n 23, range 72-97; 87% view-invariant).
It exists to exercise the analysis pipeline, not as ground truth.
"""

import json
import sys
from pathlib import Path

import numpy as np

N, MEAN, SD, LO, HI = 23, 88.0, 7.0, 72.0, 97.0
N_INVARIANT = 20  # 20 / 23 = 0.87


def imprinting_scores(rng) -> np.ndarray:
    # Pin the extremes, then fit the remaining scores to the exact mean and sd.
    m = N - 2
    total = N * MEAN
    ss_total = SD ** 2 * (N - 1)
    mid_mean = (total - LO - HI) / m
    ss_mid = ss_total - (LO - MEAN) ** 2 - (HI - MEAN) ** 2 - m * (mid_mean - MEAN) ** 2
    while True:
        z = rng.normal(size=m)
        z = (z - z.mean()) / z.std()
        mid = mid_mean + z * np.sqrt(ss_mid / m)
        if mid.min() > LO and mid.max() < HI:
            return np.concatenate([[LO], np.sort(mid), [HI]])


def behavior_vectors(rng) -> np.ndarray:
    rows = []
    for i in range(N):
        level = rng.uniform(62.0, 85.0) if i < N_INVARIANT else rng.uniform(46.0, 54.0)
        rows.append(np.clip(level + rng.normal(0.0, 5.0, size=12), 0.0, 100.0))
    return np.array(rows)


def main(out: Path) -> None:
    rng = np.random.default_rng(20130806)
    imp = imprinting_scores(rng)
    beh = behavior_vectors(rng)
    rec = beh.mean(axis=1)
    doc = {
        "synthetic": True,
        "note": "Synthetic chick reference matched to published group summaries. Demonstration only.",
        "group": {
            "imprinting": {"mean": MEAN, "sd": SD, "n": N, "range": [LO, HI]},
            "recognition": {"mean": float(rec.mean()), "sd": float(rec.std(ddof=1)), "n": N},
            "fraction_view_invariant": round(N_INVARIANT / N, 2),
        },
        "imprinting_individuals": [round(float(v), 6) for v in imp],
        "individuals": [[round(float(v), 3) for v in row] for row in beh],
    }
    out.write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "nettwin" / "data" / "chick_reference_synthetic.json"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
