import pytest
from hypothesis import given, settings, strategies as st

from scaledecide.budget import (
    budget_of_prediction,
    flops,
    multi_scale_budget,
    percent_of_target,
    single_scale_budget,
    target_flops,
)


def test_flops_anchor():
    assert flops(1.1768e9, 1.0e11) == pytest.approx(7.0608e20, rel=1e-12)
    assert flops(151.9e6, 15.0e9) == pytest.approx(1.36710e19, rel=1e-12)
    assert flops(123456.0, 0) == 0.0
    with pytest.raises(ValueError):
        flops(-1, 10)


def test_percent_of_target():
    assert percent_of_target(7.0608e20, 7.0608e20) == 100.0
    assert percent_of_target(0.0, 5.0) == 0.0
    # full 10M run against the 1B target
    assert percent_of_target(flops(9.9e6, 1.0e9), flops(1.1768e9, 1.0e11)) == pytest.approx(0.0084, abs=5e-5)
    with pytest.raises(ValueError):
        percent_of_target(1.0, 0.0)


def test_manifest_budgets(ladder14):
    assert target_flops(ladder14) == pytest.approx(7.0608e20, rel=1e-12)
    b = single_scale_budget(ladder14, "150M", 15_000_000_000)
    assert b.flops == pytest.approx(1.36710e19, rel=1e-12)
    assert b.percent_of_target == pytest.approx(1.36710e19 / 7.0608e20 * 100, rel=1e-12)
    assert single_scale_budget(ladder14, "150M", 0).flops == 0.0

    hand = 6 * (3.7e6 * 0.4e9 + 6.0e6 * 0.6e9 + 8.5e6 * 0.9e9)
    assert multi_scale_budget(ladder14, ["4M", "6M", "8M"]).flops == pytest.approx(hand, rel=1e-12)


def test_budget_of_prediction(ladder14):
    final = budget_of_prediction({"size": "150M"}, ladder14)
    assert final == budget_of_prediction({"sizes": ["150M"]}, ladder14)
    half = budget_of_prediction({"size": "150M", "tokens_seen": 7_500_000_000}, ladder14)
    assert half.flops / final.flops == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(KeyError):
        budget_of_prediction({"size": "2B"}, ladder14)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**11), st.integers(1, 10**10))
def test_monotone_in_tokens(tokens, extra):
    from conftest import small_manifest

    m = small_manifest()
    assert single_scale_budget(m, "m1", tokens + extra).flops > single_scale_budget(m, "m1", tokens).flops


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["4M", "10M", "60M", "300M", "750M"]), min_size=1, max_size=4, unique=True),
       st.sampled_from(["6M", "20M", "150M", "1B"]))
def test_monotone_in_sizes(sizes, extra):
    from conftest import DATA
    from scaledecide.ingest import parse_manifest

    m = parse_manifest((DATA / "ladder14.yaml").read_text())
    assert multi_scale_budget(m, sizes + [extra]).flops > multi_scale_budget(m, sizes).flops
