"""Regenerate every figure dataset with the shipped configs.

    python3 scripts/reproduce_figures.py --out figures

Each mode writes its CSV files and a manifest.json into its own directory.
Exit status is nonzero if any run fails.
"""
import argparse
import sys
from pathlib import Path

from backaction.cli import main as cli_main

RUNS = [
    ("transfer", "fig2", []),
    ("power_surface", "fig2", []),
    ("gain_vs_power", "fig2", []),
    ("threshold", "fig2", []),
    ("timedomain", "fig2", ["--seed", "1"]),
    ("notch", "fig4", []),
    ("sql", "fig5", []),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("figures"))
    args = ap.parse_args()
    failed = []
    for mode, config, extra in RUNS:
        target = args.out / f"{config}_{mode}"
        status = cli_main([mode, "--config", config, "--out", str(target), *extra])
        print(f"{mode:14s} {config}: exit {status} -> {target}")
        if status:
            failed.append(mode)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
