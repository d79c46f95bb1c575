"""Shared helpers for the experiment scripts."""
from __future__ import annotations

import argparse
from pathlib import Path

from twowayrelay.harness import preset, run


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="results", help="root output directory")
    p.add_argument("--seed", type=int, default=None, help="override the preset seed")
    return p


def run_presets(names, out_root: str, seed: int | None = None, **overrides):
    """Run each named preset into ``out_root/<name>`` and return the manifests."""
    manifests = {}
    for name in names:
        config = preset(name).replace(out=str(Path(out_root) / name), **overrides)
        if seed is not None and config.seed is not None:
            config = config.replace(seed=seed)
        manifests[name] = run(config)
        print(f"{name}: {manifests[name].summary}")
    return manifests
