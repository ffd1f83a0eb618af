"""
The command-line pipeline
=========================

``synth -> train-bridge -> calibrate -> eval -> report`` in a scratch
directory. Each step is a plain ``posecp`` invocation; rerunning with the
same seeds reproduces every file byte for byte.
"""

import os
import tempfile

from posecp.cli import main

DATA = ["--trajectory", "B=B/truth.txt", "--predictions", "B=B/pred.txt", "--predictor-name", "synth", "--k", "1"]

STEPS = [
    ["synth", "--out-dir", "A", "--participant", "A", "--seed", "0"],
    ["synth", "--out-dir", "B", "--participant", "B", "--seed", "1"],
    ["train-bridge", "--trajectory", "A=A/truth.txt", "--teacher", "A/sigma.txt", "--out", "model.json"],
    ["calibrate", *DATA, "--out", "cal_standard.json"],
    ["calibrate", *DATA, "--adaptive", "--model", "model.json", "--out", "cal_adaptive.json"],
    ["eval", *DATA, "--calibration", "cal_standard.json", "--calibration", "cal_adaptive.json",
     "--model", "model.json", "--out", "report.json"],
    ["report", "report.json", "--format", "table"],
]

with tempfile.TemporaryDirectory() as root:
    os.chdir(root)
    for argv in STEPS:
        print("$ posecp", " ".join(argv))
        status = main(argv)
        if status:
            raise SystemExit(status)
