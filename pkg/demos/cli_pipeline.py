"""The whole pipeline through the command-line entry point.

Writes everything under a scratch directory (first argument, default
./uir-demo) and prints the two evaluation reports side by side.

Run: python3 demos/cli_pipeline.py [workdir]
"""

import json
import os
import sys

from uirloss.cli import run

work = sys.argv[1] if len(sys.argv) > 1 else "uir-demo"
os.makedirs(work, exist_ok=True)
p = lambda name: os.path.join(work, name)
train_flags = ["--scale", "16", "--seed", "0"]


def step(*argv):
    print("$ uirloss", " ".join(argv))
    code = run(list(argv))
    if code:
        sys.exit(code)


step("gen-data", "--out-dir", p("data"), "--seed", "0", "--n-planted", "200")
step("train", "--phase", "supervised", "--labeled", p("data/labeled.txt"),
     "--checkpoint-out", p("sup.ckpt"), "--log", p("sup.jsonl"), *train_flags)
step("filter-unlabeled", "--unlabeled", p("data/unlabeled.txt"), "--checkpoint", p("sup.ckpt"),
     "--out", p("filtered.txt"), "--report", p("filter.json"))
step("train", "--phase", "semisup", "--labeled", p("data/labeled.txt"),
     "--unlabeled", p("filtered.txt"), "--checkpoint-in", p("sup.ckpt"),
     "--checkpoint-out", p("semi.ckpt"), "--log", p("semi.jsonl"), *train_flags)
for name in ("sup", "semi"):
    step("eval", "--checkpoint", p(f"{name}.ckpt"), "--dataset", p("data/heldout.txt"),
         "--far", "0.001,0.01,0.1", "--report", p(f"eval-{name}.json"))

with open(p("filter.json")) as fh:
    f = json.load(fh)
print(f"\nfilter kept {f['kept']}, discarded {f['discarded']}")
sup, semi = (json.load(open(p(f"eval-{n}.json"))) for n in ("sup", "semi"))
for key in ("mean_activation", "avg_center_distance"):
    print(f"{key:22s} {sup[key]:.4f} -> {semi[key]:.4f}")
for far, tar in sup["tar_at_far"].items():
    print(f"TAR@FAR={far:<6s}          {tar:.4f} -> {semi['tar_at_far'][far]:.4f}")
