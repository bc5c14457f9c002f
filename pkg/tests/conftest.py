from pathlib import Path

import pytest

from scaledecide.ingest import ModelConfig, SuiteManifest, TargetSpec, parse_manifest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def ladder14():
    return parse_manifest((DATA / "ladder14.yaml").read_text())


@pytest.fixture
def items3_text():
    return (DATA / "items3.jsonl").read_text()


def small_manifest(n_sizes=4, recipes=("r0", "r1", "r2"), seeds=("default", "s2"), tasks=("t",),
                   metric="norm_correct_prob_per_char", early_stop=0.25, target=None):
    """A toy ladder with 100 tokens per parameter and 1000 steps per size."""
    ladder = []
    for i in range(n_sizes):
        n = 10 ** (6 + 0.5 * i)
        ladder.append(ModelConfig(f"m{i}", int(n), int(100 * n), 1000, 32, 64, 4, 4, 1e-3))
    return SuiteManifest(
        ladder=tuple(ladder),
        recipes=tuple(recipes),
        seeds=tuple(seeds),
        target=TargetSpec(target or ladder[-1].size_label, tuple(tasks), metric),
        early_stop_fraction=early_stop,
    )


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
