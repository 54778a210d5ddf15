"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]`` or ``[FAIL]`` line and also queues it
for the end-of-session summary.  Run directly with ``python
tests/test_acceptance.py`` or through pytest.
"""

import filecmp
import sys
from pathlib import Path

import numpy as np
import pytest

import conftest
from conservative_imitation import bounds
from conservative_imitation import toyworld as tw
from conservative_imitation.cli import main
from conservative_imitation.core import ActionTableEnvironment
from conservative_imitation.imitator import run_episode
from conservative_imitation.posterior import WeightedModelClass, bayes_update, top_set, top_set_from_log_weights
from helpers import top_set_oracle, inequality_violations, phi_size_violations, random_instance


def report(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_c1_toy_reproduction(toy_runs):
    q = np.array([r.queries for r in toy_runs])
    quits = sum(sum(r.quits) for r in toy_runs)
    ok = len(toy_runs) == 20 and quits == 0 and 330 <= q.mean() <= 650
    report("C1 toy reproduction", ok, f"20 seeds, mean queries {q.mean():.2f} (sd {q.std(ddof=1):.2f}), quits {quits}")


def test_c2_query_decay(toy_runs):
    decays = sum(r.queries_second_half < r.queries_first_half for r in toy_runs)
    report("C2 query decay", decays >= 18, f"{decays}/20 seeds query less in the second half")


def test_c3_exact_theorems(exact_reports):
    wanted = {"thm1", "thm2", "thm3", "thm4", "thm5"}
    by_config = {}
    for r in exact_reports:
        if r.theorem in wanted:
            by_config.setdefault(r.config, []).append(r)
    passing = [c for c, rs in by_config.items() if {r.theorem for r in rs} == wanted and all(r.holds for r in rs)]
    failing = [r.line() for rs in by_config.values() for r in rs if not r.holds]
    report("C3 exact theorem suite", len(passing) >= 3 and not failing, f"theorems 1-5 hold on {len(passing)} configs: {', '.join(passing)}")


@pytest.mark.xfail(
    strict=True,
    reason="conditioning the demonstrator law on its own truth-in-top-set event gives an "
    "infinite KL whenever that event can fail; see the decisions ledger",
)
def test_c3_literal_theorem4(exact_reports):
    lit = [r for r in exact_reports if r.theorem == "thm4lit"]
    bad = [f"{r.config} ({r.detail})" for r in lit if not r.holds]
    report("C3 literal two-sided KL reading", not bad, f"fails on {len(bad)}/{len(lit)} configs: {'; '.join(bad)}")


def test_c4_monte_carlo_theorems():
    reports = []
    for cfg in bounds.default_configs():
        reports += bounds.mc_checks(cfg, runs=500, steps=200, seed=0)
    reports += bounds.smap_checks(bounds.SmapConfig(sequences=500, length=200), seed=0, checks=("6", "7"))
    failed = [r.line() for r in reports if not r.holds]
    names = sorted({r.theorem for r in reports})
    report("C4 Monte Carlo theorem suite", not failed, f"{len(reports) - len(failed)}/{len(reports)} checks hold ({', '.join(names)}); 500 runs each")


def test_c5_smap_inequalities():
    rng = np.random.default_rng(2024)
    chain, size = 0, 0
    for _ in range(1000):
        cls, mu = random_instance(rng)
        chain += bool(inequality_violations(cls, mu))
        size += bool(phi_size_violations(cls))
    report("C5 SMAP inequality suite", chain == 0 and size == 0, f"1000 instances, {chain} chain violations, {size} size-bound violations")


def test_c6_factored_posterior_oracle():
    digits = np.random.default_rng(6).integers(0, 3, size=8)
    demo = tw.ToyDemonstrator(digits, 2)
    env = ActionTableEnvironment([[0.3, 0.4, 0.3]])
    fact = tw.ToyModelClass.uniform(2)
    res = run_episode(fact, 1e-14, demo, env, 200, np.random.default_rng(7), true_index=fact.index_of(demo))
    brute = WeightedModelClass.from_prior([fact.model(i) for i in range(len(fact))])
    history = res.history.steps
    for t, step in enumerate(history):
        if step.q == 1:
            stripped = tuple((s.a, s.o) for s in history[:t])
            brute = bayes_update(brute, stripped, step.a)
    a = res.model_class.joint_log_posterior()
    b = brute.log_posterior
    same_support = np.array_equal(np.isinf(a), np.isinf(b))
    finite = np.isfinite(a)
    err = float(np.max(np.abs(a[finite] - b[finite]))) if finite.any() else 0.0
    # near-tied weights may be ranked differently, so compare membership only
    same_top = set(top_set(res.model_class, 1e-14).members.tolist()) == set(top_set(brute, 1e-14).members.tolist())
    ok = len(brute) == 6561 and same_support and err <= 1e-9 and same_top and res.queries > 0
    report("C6 factored posterior oracle", ok, f"3^8 models, {res.queries} queries, max log error {err:.2e}, top sets equal: {same_top}")


def test_c7_top_set_oracle():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(1000):
        k = int(rng.integers(1, 65))
        w = rng.random(k) ** 3 + 1e-9
        w = w / w.sum()
        alpha = float(rng.choice([1e-14, 1e-3, 0.01, 0.1, 0.3, 0.7, 1.0]))
        mismatches += top_set_from_log_weights(np.log(w), alpha).members.tolist() != top_set_oracle(w, alpha)
    report("C7 top-set oracle", mismatches == 0, f"1000 weight vectors, {mismatches} mismatches")


def test_c8_conservatism(toy_runs):
    toy = sum(r.conservatism_violations for r in toy_runs)
    synthetic = 0
    steps = 0
    for cfg in bounds.default_configs():
        rng = np.random.default_rng(8)
        for _ in range(50):
            res = run_episode(cfg.model_class(), cfg.alpha, cfg.demonstrator(), cfg.environment(), 100, rng, true_index=cfg.true_index)
            synthetic += res.violations
            steps += 100
    report("C8 conservatism", toy == 0 and synthetic == 0, f"{toy} violations over 20 toy runs, {synthetic} over {steps} synthetic steps")


def _same_tree(a: Path, b: Path) -> bool:
    names = sorted(p.name for p in a.iterdir())
    if names != sorted(p.name for p in b.iterdir()):
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    return not mismatch and not errors


def test_c9_determinism(tmp_path):
    commands = {
        "toy-run": ["--steps", "3000", "--seeds", "2"],
        "bounds-check": ["--runs", "40", "--steps", "60"],
        "smap-demo": ["--steps", "300", "--seeds", "2"],
    }
    identical = []
    for cmd, extra in commands.items():
        dirs = [tmp_path / f"{cmd}-{i}" for i in range(2)]
        for d in dirs:
            d.mkdir()
            assert main([cmd, "--out", str(d), *extra]) == 0
        identical.append(_same_tree(*dirs))
    report("C9 determinism", all(identical), f"byte-identical reruns: {dict(zip(commands, identical))}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
