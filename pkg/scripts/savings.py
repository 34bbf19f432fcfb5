"""Run a task family in tree and baseline mode, then compare shots to a fidelity threshold.

    python3 scripts/savings.py tfim --fidelity 0.98
    python3 scripts/savings.py maxcut --fidelity 0.9
"""

import argparse
import sys
from pathlib import Path

from vqatree.cli import main as cli

CONFIGS = Path(__file__).resolve().parent / "configs"
RUNS = Path(__file__).resolve().parent.parent / "runs"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("family", choices=["tfim", "maxcut"])
    p.add_argument("--fidelity", type=float, default=None, help="default: 0.98 for tfim, 0.9 for maxcut")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    T = args.fidelity or {"tfim": 0.98, "maxcut": 0.9}[args.family]
    extra = ["--threads", str(args.threads)] + (["--seed", str(args.seed)] if args.seed is not None else [])
    outs = {}
    for mode in ("tree", "baseline"):
        outs[mode] = RUNS / f"{args.family}_{mode}"
        code = cli(["run", str(CONFIGS / f"{args.family}_{mode}.json"), "--output", str(outs[mode]), *extra])
        if code:
            return code
    return cli(["compare", str(outs["tree"] / "run.json"), str(outs["baseline"] / "run.json"),
                "--fidelity", str(T), "--out", str(RUNS / f"{args.family}_compare")])


if __name__ == "__main__":
    sys.exit(main())
