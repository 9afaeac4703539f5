#!/usr/bin/env python3
"""Pure head-translation experiment.

A gyroscope cannot see translation, so inertial feedback should match the
baseline exactly while kinematic feedforward (which knows the commanded
stage velocity) removes most of the flow.
"""

import argparse
import os
import sys

from gazestab.cli import main
from gazestab.fileio import default_data_dir

CONDITIONS = ("translate_off", "translate_kff", "translate_ifb")


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
    ap.add_argument("--outdir", default="runs/translation", help="where to put CSV logs")
    sys.exit(run(ap.parse_args().outdir))
