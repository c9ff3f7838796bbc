"""Run every simulation config in a directory, then render figures.

    python scripts/run_comparison.py scripts/configs --out results --threads 8
    python scripts/run_comparison.py scripts/configs --only smoke

Each config writes to ``<out>/<config stem>/``; figures for all runs sharing
a prefix (``main33``, ``main20``) go to ``<out>/figures_<prefix>/``.
"""

import argparse
import sys
from collections import defaultdict
from pathlib import Path

from gates_ri.cli import main as cli


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config_dir", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", default="", help="run configs whose stem starts with this")
    return ap.parse_args()


def run():
    args = parse_args()
    configs = sorted(p for p in args.config_dir.glob("*.yaml") if p.stem.startswith(args.only))
    if not configs:
        sys.exit(f"no configs matched in {args.config_dir}")
    by_prefix = defaultdict(list)
    for cfg in configs:
        out_dir = args.out / cfg.stem
        print(f"== {cfg.name} -> {out_dir}", flush=True)
        code = cli(["simulate", str(cfg), "--out-dir", str(out_dir), "--threads", str(args.threads)])
        if code:
            sys.exit(code)
        by_prefix[cfg.stem.split("_")[0]].append(str(out_dir))
    for prefix, dirs in by_prefix.items():
        code = cli(["report", *dirs, "--out-dir", str(args.out / f"figures_{prefix}")])
        if code:
            sys.exit(code)


if __name__ == "__main__":
    run()
