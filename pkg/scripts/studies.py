"""Sweep split timing, monitor window and split threshold on a task family.

    python3 scripts/studies.py                      # all three on the 6-site TFIM family
    python3 scripts/studies.py --kinds split-timing --config scripts/configs/tfim_small.json
"""

import argparse
import sys
from pathlib import Path

from vqatree.cli import main as cli

HERE = Path(__file__).resolve().parent
SWEEPS = {
    "split-timing": ["--values", "0.1,0.3,0.5,0.7,0.9"],
    "window": ["--values", "10,20,40,80,160"],
    "threshold": ["--values", "1e-6:1e-3:4", "--log"],
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", default=str(HERE / "configs" / "tfim_tree.json"))
    p.add_argument("--kinds", nargs="+", choices=list(SWEEPS), default=list(SWEEPS))
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    stem = Path(args.config).stem
    for kind in args.kinds:
        out = HERE.parent / "runs" / f"study_{stem}_{kind}"
        code = cli(["study", kind, args.config, *SWEEPS[kind], "--threads", str(args.threads), "--out", str(out)])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
