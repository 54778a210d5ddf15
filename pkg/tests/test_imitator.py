import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conservative_imitation.core import ActionTableEnvironment, NormalizationError, ObservationTablePolicy
from conservative_imitation.imitator import (
    ActionDistribution,
    Imitator,
    distribution_from_mins,
    imitator_distribution,
    run_episode,
    sample_step,
)
from conservative_imitation.posterior import WeightedModelClass, bayes_update, top_set


def iid(*p):
    return ObservationTablePolicy([p, p], initial=p)


class Fixed:
    n_actions = 2

    def __init__(self, p):
        self.p = np.asarray(p, dtype=float)

    def probs(self, stripped):
        return self.p


def test_min_over_top_set():
    cls = WeightedModelClass.from_prior([iid(0.7, 0.3), iid(0.6, 0.4)])
    dist = imitator_distribution(cls, top_set(cls, 0.1), ())
    np.testing.assert_allclose(dist.self_probs, [0.6, 0.3])
    assert dist.query_prob == pytest.approx(0.1)


def test_singleton_top_set_never_queries():
    cls = WeightedModelClass.from_prior([iid(0.7, 0.3)])
    dist = imitator_distribution(cls, top_set(cls, 0.5), ())
    np.testing.assert_allclose(dist.self_probs, [0.7, 0.3])
    assert dist.query_prob == 0.0


def test_stale_top_set_rejected():
    cls = WeightedModelClass.from_prior([iid(0.7, 0.3), iid(0.6, 0.4)])
    top = top_set(cls, 0.1)
    with pytest.raises(ValueError):
        imitator_distribution(bayes_update(cls, (), 0), top, ())


def test_mins_overshooting_one_rejected():
    with pytest.raises(ValueError):
        distribution_from_mins(np.array([0.6, 0.5]))
    assert distribution_from_mins(np.array([0.5, 0.5 + 1e-15])).query_prob == 0.0


def test_no_query_when_theta_zero():
    rng = np.random.default_rng(0)
    dist = ActionDistribution(np.array([0.4, 0.6]), 0.0)
    assert all(sample_step(dist, Fixed([0.5, 0.5]), (), rng).q == 0 for _ in range(500))


def test_pure_query():
    rng = np.random.default_rng(1)
    dist = ActionDistribution(np.zeros(2), 1.0)
    outs = [sample_step(dist, Fixed([0.0, 1.0]), (), rng) for _ in range(200)]
    assert all(o.q == 1 and o.a == 1 for o in outs)


def test_unnormalized_demonstrator_propagates():
    dist = ActionDistribution(np.zeros(2), 1.0)
    with pytest.raises(NormalizationError):
        sample_step(dist, Fixed([0.7, 0.7]), (), np.random.default_rng(0))


def test_marginal_action_law():
    rng = np.random.default_rng(2)
    dist = ActionDistribution(np.array([0.6, 0.3]), 0.1)
    n = 200_000
    a = np.array([sample_step(dist, Fixed([0.7, 0.3]), (), rng).a for _ in range(n)])
    freq = np.mean(a == 0)
    expect = 0.6 + 0.1 * 0.7
    assert abs(freq - expect) < 3 * np.sqrt(expect * (1 - expect) / n)
    np.testing.assert_allclose(dist.marginal([0.7, 0.3]), [0.67, 0.33])


def test_episode_zero_steps():
    cls = WeightedModelClass.from_prior([iid(0.5, 0.5)])
    res = run_episode(cls, 0.1, iid(0.5, 0.5), ActionTableEnvironment([[1.0]]), 0, np.random.default_rng(0))
    assert len(res.history) == 0
    assert res.queries == 0


def test_singleton_episode_never_queries():
    demo = iid(0.3, 0.7)
    cls = WeightedModelClass.from_prior([demo])
    res = run_episode(cls, 0.1, demo, ActionTableEnvironment([[0.5, 0.5]]), 100, np.random.default_rng(0), true_index=0)
    assert res.queries == 0
    assert np.all(res.thetas == 0)


def test_posterior_moves_only_on_queries():
    models = [iid(0.5, 0.5), iid(0.9, 0.1), iid(0.2, 0.8)]
    cls = WeightedModelClass.from_prior(models)
    res = run_episode(cls, 0.01, models[0], ActionTableEnvironment([[1.0]]), 60, np.random.default_rng(3))
    queried = [s.a for s in res.history.steps if s.q == 1]
    expect = cls
    for a in queried:
        expect = bayes_update(expect, (), a)
    np.testing.assert_allclose(res.model_class.log_posterior, expect.log_posterior, atol=1e-12)
    assert res.model_class.version == len(queried)


def test_imitator_caches_per_version():
    cls = WeightedModelClass.from_prior([ObservationTablePolicy([[0.7, 0.3], [0.2, 0.8]]), ObservationTablePolicy([[0.6, 0.4], [0.1, 0.9]])])
    imit = Imitator(cls, 0.1)
    d1 = imit.distribution(((0, 1),))
    assert imit.distribution(((1, 1),)) is d1
    np.testing.assert_allclose(imit.distribution(((1, 0),)).self_probs, [0.6, 0.3])


reactive = st.lists(
    st.lists(st.floats(0.01, 1.0), min_size=2, max_size=2).map(lambda r: [r[0] / sum(r), r[1] / sum(r)]),
    min_size=2,
    max_size=2,
)


@settings(max_examples=40, deadline=None)
@given(st.lists(reactive, min_size=2, max_size=4), st.integers(0, 2**16), st.sampled_from([0.01, 0.1, 0.3]))
def test_conservatism_and_l1_bound(tables, seed, alpha):
    models = [ObservationTablePolicy(t) for t in tables]
    cls = WeightedModelClass.from_prior(models)
    env = ActionTableEnvironment([[0.6, 0.4], [0.3, 0.7]])
    res = run_episode(cls, alpha, models[0], env, 40, np.random.default_rng(seed), true_index=0)
    assert res.violations == 0
    # when the truth is a member, sum_a |i_a - d_a| equals the query mass
    np.testing.assert_allclose(res.l1[res.truth_in_top], res.thetas[res.truth_in_top], atol=1e-12)


@settings(max_examples=60)
@given(st.lists(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda r: sum(r) > 0.1), min_size=1, max_size=5))
def test_distribution_is_valid(rows):
    tables = np.array([np.array(r) / sum(r) for r in rows])
    dist = distribution_from_mins(tables.min(axis=0))
    assert np.all(dist.self_probs >= 0)
    assert 0 <= dist.query_prob <= 1
    assert dist.self_probs.sum() + dist.query_prob == pytest.approx(1.0, abs=1e-12)
    # multiplicative domination for every member of the set
    for d in tables:
        assert np.all(dist.marginal(d) <= (1 + dist.query_prob) * d + 1e-12)
