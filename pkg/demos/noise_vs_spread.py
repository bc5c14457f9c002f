"""How seed noise erodes small-scale decisions.

Recipes are spaced evenly in irreducible loss. We turn up the per-checkpoint
noise and watch the seed-to-seed std (noise) approach the gap between
recipes (spread). Decision accuracy at the smallest sizes drops first.

    python3 demos/noise_vs_spread.py
"""

import statistics

from scaledecide.analysis import noise_spread
from scaledecide.cli import BUNDLED_MANIFEST
from scaledecide.decision import decision_accuracy, rank_single_scale
from scaledecide.ingest import parse_manifest
from scaledecide.synthetic import spread_truths, true_gold, gen_suite

DRAWS = 10


def main():
    m = parse_manifest(BUNDLED_MANIFEST.read_text())
    small, mid = m.size_labels[0], m.size_labels[3]
    metric = m.target.metric
    print(f"{'sigma':>7}{'noise':>9}{'spread':>9}{'DA @ ' + small:>11}{'DA @ ' + mid:>12}")
    for sigma in (0.0, 0.002, 0.005, 0.01, 0.02, 0.05):
        truths = spread_truths(m.recipes, step=0.01, sigma=sigma)
        gold = true_gold(truths, m)
        rows = []
        for draw in range(DRAWS):
            suite = gen_suite(truths, m, rng_seed=draw)
            ns = noise_spread(suite.points, m, m.target.size_label, "synthetic", metric)
            rows.append((
                ns.noise, ns.spread,
                decision_accuracy(rank_single_scale(suite.points, m, small), gold).decision_accuracy,
                decision_accuracy(rank_single_scale(suite.points, m, mid), gold).decision_accuracy,
            ))
        n, s, a, b = (statistics.fmean(col) for col in zip(*rows))
        print(f"{sigma:>7.3f}{n:>9.4f}{s:>9.4f}{a:>11.3f}{b:>12.3f}")
    print(f"\naveraged over {DRAWS} draws; noise and spread are measured at the fully trained target size")


if __name__ == "__main__":
    main()
