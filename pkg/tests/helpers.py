"""Shared oracles and random-instance generators for tests."""

import numpy as np
from scipy.special import logsumexp

from conservative_imitation import smap


def top_set_oracle(w, alpha):
    """Direct top-set evaluation: rank by weight (ties by index), test each rank."""
    order = sorted(range(len(w)), key=lambda i: (-w[i], i))
    members, cum = [], 0.0
    for i in order:
        cum += w[i]
        if w[i] >= alpha * cum:
            members.append(i)
    return members


def random_measure(rng, n_symbols):
    if rng.random() < 0.5:
        return smap.CategoricalMeasure(rng.dirichlet(np.ones(n_symbols)))
    return smap.MarkovMeasure(rng.dirichlet(np.ones(n_symbols)), rng.dirichlet(np.ones(n_symbols), size=n_symbols))


def random_instance(rng):
    """A random class with a prefix drawn from one of its members."""
    n_symbols = int(rng.integers(2, 5))
    k = int(rng.integers(1, 9))
    measures = [random_measure(rng, n_symbols) for _ in range(k)]
    prior = rng.dirichlet(np.ones(k)) * 0.98 + 0.02 / k
    cls = smap.MeasureClass(measures, prior / prior.sum())
    mu = int(rng.integers(k))
    for _ in range(int(rng.integers(0, 16))):
        p = measures[mu].conditional(cls.prefix)
        cls.observe(int(rng.choice(n_symbols, p=p)))
    return cls, mu


def inequality_violations(cls, mu, tol=1e-12):
    """Failures of the xi >= rho_n >= w(mu) mu chain and of rho_n >= rho_norm, rho_stat."""
    bad = []
    lj = cls.log_joint()
    log_xi = logsumexp(lj)
    for n in range(1, len(cls) + 1):
        log_rho = smap.log_rho_n_sequence(cls, n)
        if log_rho > log_xi + tol:
            bad.append(("xi>=rho_n", n))
        if lj[mu] > log_rho + tol:
            bad.append(("rho_n>=w mu", n))
        pr = smap.predictions(cls, n, 0.5)
        if np.any(pr["rho_norm"] > pr["rho_n"] + tol):
            bad.append(("rho_n>=rho_norm", n))
        if np.any(pr["rho_stat"] > pr["rho_n"] + tol):
            bad.append(("rho_n>=rho_stat", n))
    return bad


def phi_size_violations(cls, alphas=(0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9)):
    bad = []
    for a in alphas:
        ranks = smap.included_ranks(cls, a)
        if np.any(ranks >= 1 / a):
            bad.append(a)
    return bad
