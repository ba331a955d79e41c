"""Shared helper: run one bundled config through the CLI into results/."""

from __future__ import annotations

import json
import sys
from pathlib import Path

from fidkit.cli import main

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"
RESULTS = ROOT / "results"


def run(config: str, out_name: str, fmt: str | None = None) -> int:
    cfg_path = CONFIGS / config
    command = json.loads(cfg_path.read_text())["command"]
    RESULTS.mkdir(exist_ok=True)
    argv = [command, "--config", str(cfg_path), "--out", str(RESULTS / out_name)]
    if fmt:
        argv += ["--format", fmt]
    code = main(argv)
    if code == 0:
        print(f"wrote {RESULTS / out_name}")
    return code


if __name__ == "__main__":
    sys.exit(run(sys.argv[1], sys.argv[2]))
