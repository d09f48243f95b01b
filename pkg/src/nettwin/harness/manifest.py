from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .. import __version__

MANIFEST = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, phase: str, config: dict, complete: bool, timing: dict,
                   files: list[str], extra: dict | None = None) -> Path:
    """Record config, code version, timings and checksums of ``files`` (relative to out_dir)."""
    inventory = {}
    for rel in sorted(files):
        p = out_dir / rel
        if p.exists():
            inventory[rel] = sha256_file(p)
    doc = {
        "phase": phase,
        "complete": complete,
        "code_version": __version__,
        "config": config,
        "timing_seconds": timing,
        "files": inventory,
    }
    if extra:
        doc.update(extra)
    path = out_dir / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory: Path) -> dict | None:
    path = Path(directory) / MANIFEST
    if not path.exists():
        return None
    return json.loads(path.read_text())
