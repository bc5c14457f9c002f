"""Walk through the whole pipeline on the bundled noiseless ladder.

Ten recipes are trained (synthetically) at six sizes. We ask how well
cheap experiments predict which recipe wins at the 1B target, first by
ranking recipes at one small size, then by extrapolating scaling-law fits.

    python3 demos/pipeline_walkthrough.py
"""

from scaledecide.cli import BUNDLED_MANIFEST
from scaledecide.decision import (
    decision_accuracy,
    fit_recipe,
    gold_targets,
    predict_multi_scale,
    rank_single_scale,
)
from scaledecide.ingest import parse_manifest
from scaledecide.scaling import resolve_subset
from scaledecide.synthetic import gen_suite, truths_from_manifest


def main():
    manifest = parse_manifest(BUNDLED_MANIFEST.read_text())
    suite = gen_suite(truths_from_manifest(manifest), manifest, rng_seed=0)
    gold = gold_targets(suite.points, manifest)
    print(f"{len(suite.points)} metric points, gold winner: {max(gold.values, key=gold.values.get)}\n")

    print(f"{'method':<28}{'% of target compute':>22}{'decision acc.':>16}")
    sizes = manifest.size_labels[:-1]
    for size in sizes:
        rep = decision_accuracy(rank_single_scale(suite.points, manifest, size), gold)
        print(f"{'single-scale @ ' + size:<28}{rep.budget.percent_of_target:>22.4f}{rep.decision_accuracy:>16.3f}")

    for k in (3, 4, 5):
        used = resolve_subset(f"prefix:{k}", sizes)
        fits = {r: fit_recipe(suite.points, manifest, r, "synthetic", "three_param", used) for r in manifest.recipes}
        rep = decision_accuracy(predict_multi_scale(fits, manifest, used, subset=f"prefix:{k}"), gold)
        label = f"multi-scale, {k} smallest"
        print(f"{label:<28}{rep.budget.percent_of_target:>22.4f}{rep.decision_accuracy:>16.3f}")

    print("\nWithout noise and without crossovers every method should be perfect;")
    print("the other demos break one of those assumptions at a time.")


if __name__ == "__main__":
    main()
