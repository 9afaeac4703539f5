#!/usr/bin/env python3
"""Deterministic torso-sweep experiment, all five shipped conditions.

Runs the passive baseline, then kFF/iFB with neck+eyes and with eyes only,
and prints the comparison table (overall and per script segment).  Logs and
summary sidecars land in --outdir.
"""

import argparse
import os
import sys

from gazestab.cli import main
from gazestab.fileio import default_data_dir

CONDITIONS = ("exp_a_off", "exp_a_kff", "exp_a_ifb", "exp_a_kff_eyes", "exp_a_ifb_eyes")


def run(outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    logs = []
    for name in CONDITIONS:
        config = os.path.join(default_data_dir(), f"{name}.config")
        out = os.path.join(outdir, f"{name}.csv")
        code = main(["run", "--config", config, "--out", out])
        if code:
            return code
        logs.append(out)
    return main(["compare", "--baseline", logs[0], *logs[1:]])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="runs/exp_a", help="where to put CSV logs")
    sys.exit(run(ap.parse_args().outdir))
