"""Baseline vs rejection-trained model on synthetic identities.

Trains the supervised baseline, filters the unlabeled pool, continues
with the combined loss and compares both models on 50 identities neither
phase has seen. About ten seconds per seed.

Run: python3 demos/toy_experiment.py [seed ...]
"""

import sys

from uirloss.experiment import ToySetup, run_toy_experiment

seeds = [int(s) for s in sys.argv[1:]] or [0, 1, 2]
setup = ToySetup(n_planted=200)
fars = (1e-3, 1e-2, 1e-1)

rows = []
for seed in seeds:
    r, _ = run_toy_experiment(seed, setup, fars=fars)
    rows.append(r)
    rep = r.filter_report
    print(f"seed {seed}: {len(r.supervised_log.records)} supervised epochs, "
          f"filter kept {rep.kept} of {rep.kept + rep.discarded}, "
          f"planted known samples discarded {r.planted_discard_rate:.1%}")

print("\nmean max activation on held-out unknowns (lower is better)")
for r in rows:
    print(f"  seed {r.seed}: {r.baseline_mean_activation:.4f} -> {r.uir_mean_activation:.4f}")

print("\naverage pairwise center distance")
for r in rows:
    print(f"  seed {r.seed}: {r.baseline_center_distance:.5f} -> {r.uir_center_distance:.5f}")

print("\nheld-out verification TAR")
print("  seed " + "".join(f"  FAR={f:<8g}" for f in fars))
for r in rows:
    print(f"  {r.seed:4d} " + "".join(
        f"  {r.baseline_tar[f]:.3f}->{r.uir_tar[f]:.3f}" for f in fars))

print("\nactivation CDF, fraction below t (baseline / rejection)")
for r in rows[:1]:
    for t, b in r.baseline_cdf.items():
        print(f"  <{t:.1f}  {b:.3f} / {r.uir_cdf[t]:.3f}")
