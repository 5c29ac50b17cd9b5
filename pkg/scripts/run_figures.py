#!/usr/bin/env python3
"""Run every bundled preset sweep and write one CSV per preset.

Usage: python3 scripts/run_figures.py [output_dir]
"""
from __future__ import annotations

import sys
import time
from pathlib import Path

from uavcache import emit_csv, load_config, run_sweep

PRESET_DIR = Path(__file__).resolve().parents[1] / "src" / "uavcache" / "presets"


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for preset in sorted(PRESET_DIR.glob("*.yaml")):
        run_cfg = load_config(preset)
        rows = []
        t0 = time.time()
        for spec in run_cfg.sweeps:
            rows.extend(run_sweep(spec))
        target = out_dir / (preset.stem + ".csv")
        emit_csv(rows, target)
        failed = sum(r.method == "failed" for r in rows)
        if failed:
            status = 3
        print(f"{preset.stem}: {len(rows)} rows ({failed} failed) "
              f"in {time.time() - t0:.1f}s -> {target}")
    return status


if __name__ == "__main__":
    sys.exit(main())
