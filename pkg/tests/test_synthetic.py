import math

import pytest

from conftest import small_manifest
from scaledecide.decision import gold_targets, rank_single_scale
from scaledecide.metrics import compute_all
from scaledecide.scaling import NDParams, PowerLawParams, SigmoidParams
from scaledecide.synthetic import (
    GroundTruthRecipe,
    cell_rng,
    checkpoint_steps,
    crossing_law,
    crossover_compute,
    gen_suite,
    spread_truths,
    true_gold,
    truth_from_dict,
    truth_to_dict,
)

LINK = SigmoidParams(0.6, 0.25, -5.0, 1.2)
BASE = PowerLawParams(200.0, 0.15, 0.8)


def test_noiseless_values_on_curve():
    m = small_manifest()
    truths = spread_truths(m.recipes)
    suite = gen_suite(truths, m, rng_seed=0)
    by = {t.recipe: t for t in truths}
    for p in suite.points:
        cfg = m.config(p.key.size_label)
        t = by[p.key.recipe]
        loss = float(t.law(6.0 * cfg.non_embedding_params * p.key.tokens_seen))
        want = loss if p.metric == "nll_per_char" else float(t.link(loss))
        assert p.value == want


def test_deterministic_and_seed_sensitive():
    m = small_manifest()
    truths = spread_truths(m.recipes, sigma=0.01)
    a = gen_suite(truths, m, rng_seed=3)
    assert a == gen_suite(truths, m, rng_seed=3)
    assert a != gen_suite(truths, m, rng_seed=4)


def test_noise_stream_is_keyed_by_cell():
    # a cell's draw does not depend on what else was generated
    m = small_manifest()
    full = gen_suite(spread_truths(m.recipes, sigma=0.01), m, rng_seed=9)
    sub = small_manifest(recipes=("r1",))
    part = gen_suite(spread_truths(("r0", "r1"), sigma=0.01)[1:], sub, rng_seed=9)
    want = {p.ident: p.value for p in full.points if p.key.recipe == "r1"}
    assert {p.ident: p.value for p in part.points} == want
    assert cell_rng(1, "a", 2).normal() == cell_rng(1, "a", 2).normal()


def test_early_stopped_seeds():
    m = small_manifest(seeds=("default", "s2"), early_stop=0.25)
    suite = gen_suite(spread_truths(m.recipes), m, rng_seed=0)
    last = {}
    for p in suite.points:
        last[p.key.run] = max(last.get(p.key.run, 0), p.key.step)
    assert last[("r0", "m0", "s2")] == 250
    assert last[("r0", "m0", "default")] == 1000
    assert last[("r0", m.target.size_label, "s2")] == 1000


def test_checkpoint_steps():
    assert checkpoint_steps(800, 8) == [100, 200, 300, 400, 500, 600, 700, 800]
    assert checkpoint_steps(800, 8, 0.25) == [100, 200]
    assert checkpoint_steps(1000, 8, 0.3) == [125, 250, 300]


def test_crossover_flips_order():
    at = 1e19
    steep = crossing_law(BASE, 0.25, at)
    assert crossover_compute(BASE, steep) == pytest.approx(at, rel=1e-9)
    a = GroundTruthRecipe("a", BASE, LINK)
    b = GroundTruthRecipe("b", steep, LINK)
    for c in (1e16, 1e17, 1e18, 5e18):
        assert float(a.link(a.law(c))) > float(b.link(b.law(c)))
    for c in (2e19, 1e20, 1e21):
        assert float(b.link(b.law(c))) > float(a.link(a.law(c)))


def test_crossover_orderings_flip_across_sizes():
    # sizes m0..m5 have full-run compute 6e14 ... 6e19; the pair crosses at 1e17
    m = small_manifest(n_sizes=6, recipes=("a", "b"), seeds=("default",))
    truths = [GroundTruthRecipe("a", BASE, LINK), GroundTruthRecipe("b", crossing_law(BASE, 0.25, 1e17), LINK)]
    suite = gen_suite(truths, m, rng_seed=0)
    for cfg in m.ladder:
        vals = rank_single_scale(suite.points, m, cfg.size_label).values
        assert (vals["a"] > vals["b"]) == (cfg.flops < 1e17)
    gold = true_gold(truths, m)
    cfg = m.target_config
    analytic = {t.recipe: float(t.link(t.law(cfg.flops))) for t in truths}
    assert max(gold.values, key=gold.values.get) == max(analytic, key=analytic.get) == "b"


def test_true_gold_single_recipe():
    m = small_manifest(recipes=("only",))
    assert list(true_gold(spread_truths(m.recipes), m).values) == ["only"]


def test_noiseless_gold_identity():
    m = small_manifest(seeds=("default", "s2", "s3"))
    truths = spread_truths(m.recipes)
    assert gold_targets(gen_suite(truths, m, rng_seed=1).points, m).values == true_gold(truths, m).values


def test_item_records_realize_the_curves():
    m = small_manifest(n_sizes=3, recipes=("r0", "r1"), seeds=("default",))
    truths = spread_truths(m.recipes, sigma=0.02)
    suite = gen_suite(truths, m, rng_seed=2, items=True)
    derived = compute_all(suite.items, ["norm_correct_prob_per_char", "nll_per_char"])
    want = {p.ident: p.value for p in suite.points}
    assert len(derived) == len(want)
    for p in derived:
        assert p.value == pytest.approx(want[p.ident], rel=1e-9)


def test_nd_truth_and_serialization():
    nd = GroundTruthRecipe("x", NDParams(400.0, 0.34, 410.0, 0.28, 1.7), LINK, 0.01, {"with": "y", "at": 1e19})
    assert truth_from_dict(truth_to_dict(nd)) == nd
    assert nd.loss(1e8, 1e10) == pytest.approx(400 * 1e8 ** -0.34 + 410 * 1e10 ** -0.28 + 1.7, rel=1e-12)
    pw = spread_truths(["p"])[0]
    assert truth_from_dict(truth_to_dict(pw)) == pw


def test_truth_validation():
    with pytest.raises(ValueError):
        GroundTruthRecipe("x", BASE, LINK, sigma=-1.0)
    with pytest.raises(ValueError):
        GroundTruthRecipe("x", PowerLawParams(-1.0, 0.1, 0.0), LINK)
    with pytest.raises(ValueError, match="no ground truth"):
        gen_suite(spread_truths(["r0"]), small_manifest(), rng_seed=0)


def test_crossing_law_needs_distinct_exponent():
    with pytest.raises(ValueError):
        crossover_compute(BASE, BASE)
    assert math.isclose(crossing_law(BASE, BASE.alpha, 1e18).A, BASE.A)
