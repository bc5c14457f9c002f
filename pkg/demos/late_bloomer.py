"""A recipe that starts slow but scales better.

We add a "late-bloomer" whose loss curve meets the best recipe's curve at
2e20 FLOPs, past the largest experiment but short of the target. Every
small-scale ranking puts it behind; a fitted scaling law sees the steeper
slope and gets the order right.

    python3 demos/late_bloomer.py
"""

from scaledecide.cli import BUNDLED_MANIFEST
from scaledecide.decision import (
    decision_accuracy,
    fit_recipe,
    gold_targets,
    predict_multi_scale,
    rank_single_scale,
)
from scaledecide.ingest import SuiteManifest, parse_manifest
from scaledecide.synthetic import GroundTruthRecipe, crossing_law, gen_suite, truths_from_manifest

CROSS_AT = 2e20


def main():
    base_manifest = parse_manifest(BUNDLED_MANIFEST.read_text())
    truths = truths_from_manifest(base_manifest)
    best = truths[0]
    bloomer = GroundTruthRecipe("late-bloomer", crossing_law(best.law, best.law.alpha + 0.1, CROSS_AT), best.link)
    m = SuiteManifest(
        base_manifest.ladder, base_manifest.recipes + ("late-bloomer",),
        base_manifest.seeds, base_manifest.target, base_manifest.early_stop_fraction,
    )
    suite = gen_suite(truths + [bloomer], m, rng_seed=0)
    gold = gold_targets(suite.points, m)
    sizes = m.size_labels[:-1]
    print(f"largest experiment: {m.config(sizes[-1]).flops:.2e} FLOPs, curves cross at {CROSS_AT:.0e},")
    print(f"target: {m.target_config.flops:.2e} FLOPs")
    print(f"at the target, late-bloomer {gold.values['late-bloomer']:.4f} vs {best.recipe} {gold.values[best.recipe]:.4f}\n")

    def verdict(pred):
        v = pred.values
        return "late-bloomer" if v["late-bloomer"] > v[best.recipe] else best.recipe

    for size in sizes:
        pred = rank_single_scale(suite.points, m, size)
        print(f"single-scale @ {size:<5} prefers {verdict(pred):<13} DA {decision_accuracy(pred, gold).decision_accuracy:.3f}")

    fits = {r: fit_recipe(suite.points, m, r, "synthetic", "three_param", sizes) for r in m.recipes}
    pred = predict_multi_scale(fits, m, sizes, subset="prefix:5")
    print(f"multi-scale fit      prefers {verdict(pred):<13} DA {decision_accuracy(pred, gold).decision_accuracy:.3f}")


if __name__ == "__main__":
    main()
