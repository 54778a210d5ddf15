import pytest

from conservative_imitation import bounds, toyworld

ACCEPTANCE_LINES: list[str] = []

TOY_SEEDS = range(20)


@pytest.fixture(scope="session")
def toy_runs():
    """The 20-seed, 2**15-step toy reproduction, shared across test modules."""
    return [toyworld.run_toy(seed) for seed in TOY_SEEDS]


@pytest.fixture(scope="session")
def exact_reports():
    checks = ("1", "2", "3", "4", "4lit", "5")
    return [r for cfg in bounds.default_configs() for r in bounds.exact_checks(cfg, checks)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
