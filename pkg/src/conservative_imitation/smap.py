"""Bayesian sequence prediction with top-n mixtures over a measure class.

Estimators at the current prefix ``x_{<t}``, with measures ranked by
``w(nu) nu(x_{<t})`` (ties by ascending index):

* ``xi``: the full Bayes mixture.
* ``rho_n``: ratio of top-n masses, with the top set re-ranked after the next
  symbol.  Its conditionals may sum to more than one.
* ``rho_norm``: ``rho_n`` normalized over the alphabet.
* ``rho_stat``: posterior-weighted average over the top-n at ``x_{<t}``.
* ``phi_n``: posterior of the n-th measure over the cumulative top-n posterior.
* ``top_min``: per symbol, the least conditional among measures with
  ``phi_n > alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import check_distribution


class ImpossiblePrefixError(ValueError):
    """The class assigns zero total mass to the observed prefix."""


class MarkovMeasure:
    """First-order Markov measure over ``{0, ..., K-1}``.

    ``table[0]`` is the law of the first symbol and ``table[1 + y]`` the law
    after symbol ``y``.
    """

    def __init__(self, initial, transition):
        self.table = np.vstack([initial, transition]).astype(float)
        for row in self.table:
            check_distribution(row)
        self.n_symbols = self.table.shape[1]

    def conditional(self, prefix: Sequence[int]) -> np.ndarray:
        return self.table[0 if not prefix else 1 + prefix[-1]]

    def log_prob(self, seq: Sequence[int]) -> float:
        with np.errstate(divide="ignore"):
            return float(sum(np.log(self.conditional(seq[:i])[x]) for i, x in enumerate(seq)))


class CategoricalMeasure(MarkovMeasure):
    """i.i.d. measure with symbol law ``p``."""

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        super().__init__(p, np.tile(p, (len(p), 1)))
        self.p = p

    def __repr__(self):
        return f"CategoricalMeasure({self.p.tolist()})"


def bernoulli_class(probs: Sequence[float]) -> list[CategoricalMeasure]:
    """Measures with ``P(x=1) = p`` for each ``p``."""
    return [CategoricalMeasure([1 - p, p]) for p in probs]


class MeasureClass:
    """Measure class plus its running log-likelihoods on one prefix."""

    def __init__(self, measures, prior=None):
        self.measures = list(measures)
        k = len(self.measures)
        if prior is None:
            prior = np.full(k, 1.0 / k)
        prior = np.asarray(prior, dtype=float)
        if np.any(prior <= 0) or abs(prior.sum() - 1) > 1e-9:
            raise ValueError("prior must be positive and sum to 1")
        self.n_symbols = self.measures[0].n_symbols
        self.log_prior = np.log(prior)
        self.log_likelihood = np.zeros(k)
        self.prefix: list[int] = []

    def __len__(self) -> int:
        return len(self.measures)

    def copy(self) -> "MeasureClass":
        other = MeasureClass.__new__(MeasureClass)
        other.measures = self.measures
        other.n_symbols = self.n_symbols
        other.log_prior = self.log_prior
        other.log_likelihood = self.log_likelihood.copy()
        other.prefix = list(self.prefix)
        return other

    def conditionals(self) -> np.ndarray:
        """``C[nu, x] = nu(x | x_{<t})``."""
        return np.stack([m.conditional(self.prefix) for m in self.measures])

    def log_joint(self) -> np.ndarray:
        """``log w(nu) nu(x_{<t})`` per measure."""
        return self.log_prior + self.log_likelihood

    def observe(self, x: int) -> None:
        with np.errstate(divide="ignore"):
            self.log_likelihood = self.log_likelihood + np.log(self.conditionals()[:, x])
        self.prefix.append(x)
        if not np.isfinite(self.log_joint().max()):
            raise ImpossiblePrefixError(f"prefix {self.prefix} has zero mass")


def rank(log_joint: np.ndarray) -> np.ndarray:
    return np.argsort(-log_joint, kind="stable")


@dataclass(frozen=True)
class RankedState:
    order: np.ndarray
    posterior: np.ndarray  # sorted by rank
    cumulative: np.ndarray

    @property
    def phi(self) -> np.ndarray:
        return self.posterior / self.cumulative


def ranked_state(cls: MeasureClass) -> RankedState:
    lj = cls.log_joint()
    z = logsumexp(lj)
    if not np.isfinite(z):
        raise ImpossiblePrefixError("zero mass on prefix")
    order = rank(lj)
    post = np.exp(lj[order] - z)
    return RankedState(order, post, np.cumsum(post))


def _check_n(cls: MeasureClass, n: int) -> None:
    if not 1 <= n <= len(cls):
        raise ValueError(f"n must lie in 1..{len(cls)}, got {n}")


def _top_logsum(lj: np.ndarray, n: int) -> float:
    return float(logsumexp(lj[rank(lj)[:n]]))


def log_rho_n_sequence(cls: MeasureClass, n: int) -> float:
    """``log rho_n(x_{<t})``: log of the summed top-n joint masses."""
    _check_n(cls, n)
    return _top_logsum(cls.log_joint(), n)


def xi_predict(cls: MeasureClass, x: int) -> float:
    lj = cls.log_joint()
    z = logsumexp(lj)
    if not np.isfinite(z):
        raise ImpossiblePrefixError("zero mass on prefix")
    return float(np.exp(lj - z) @ cls.conditionals()[:, x])


def _rho_n_all(cls: MeasureClass, n: int) -> np.ndarray:
    _check_n(cls, n)
    lj = cls.log_joint()
    denom = _top_logsum(lj, n)
    if not np.isfinite(denom):
        raise ImpossiblePrefixError("zero mass on prefix")
    with np.errstate(divide="ignore"):
        logc = np.log(cls.conditionals())
    return np.array([np.exp(_top_logsum(lj + logc[:, x], n) - denom) for x in range(cls.n_symbols)])


def rho_n_predict(cls: MeasureClass, n: int, x: int) -> float:
    return float(_rho_n_all(cls, n)[x])


def rho_norm_predict(cls: MeasureClass, n: int, x: int) -> float:
    r = _rho_n_all(cls, n)
    return float(r[x] / r.sum())


def rho_stat_predict(cls: MeasureClass, n: int, x: int) -> float:
    _check_n(cls, n)
    st = ranked_state(cls)
    top = st.order[:n]
    w = st.posterior[:n]
    return float(w @ cls.conditionals()[top, x] / w.sum())


def phi(cls: MeasureClass, n: int) -> float:
    _check_n(cls, n)
    return float(ranked_state(cls).phi[n - 1])


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def included_ranks(cls: MeasureClass, alpha: float) -> np.ndarray:
    """Ranks ``n`` (1-based) with ``phi_n > alpha``."""
    _check_alpha(alpha)
    return np.flatnonzero(ranked_state(cls).phi > alpha) + 1


def top_min_all(cls: MeasureClass, alpha: float) -> np.ndarray:
    st = ranked_state(cls)
    _check_alpha(alpha)
    members = st.order[st.phi > alpha]
    return cls.conditionals()[members].min(axis=0)


def top_min_predict(cls: MeasureClass, alpha: float, x: int) -> float:
    return float(top_min_all(cls, alpha)[x])


def missing_mass(cls: MeasureClass, alpha: float) -> float:
    return float(min(1.0, max(0.0, 1.0 - top_min_all(cls, alpha).sum())))


def predictions(cls: MeasureClass, n: int, alpha: float) -> dict:
    """Every estimator's conditional vector at the current prefix."""
    r = _rho_n_all(cls, n)
    st = ranked_state(cls)
    cond = cls.conditionals()
    w = st.posterior[:n]
    return {
        "xi": np.array([xi_predict(cls, x) for x in range(cls.n_symbols)]),
        "rho_n": r,
        "rho_norm": r / r.sum(),
        "rho_stat": w @ cond[st.order[:n]] / w.sum(),
        "top_min": top_min_all(cls, alpha),
        "phi_n": float(st.phi[n - 1]),
        "missing_mass": missing_mass(cls, alpha),
    }


# --- batched Monte Carlo over many sequences drawn from the true measure ---


@dataclass
class SmapErrorSums:
    """Per-sequence sums over time; arrays indexed ``[sequence, n - 1]``."""

    stat_sq: np.ndarray  # sum_t sum_x (rho_stat_n - mu)^2
    rho_excess: np.ndarray  # sum_t (sum_x rho_n(x_{<t} x) / rho_n(x_{<t}) - 1)
    top_min_sq: np.ndarray  # sum_t sum_x (mu - top_min)^2, one column per alpha
    missing_sq: np.ndarray  # sum_t (1 - sum_x top_min)^2
    max_included: int  # largest rank ever admitted by phi_n > alpha


def smap_error_sums(
    measures: Sequence[MarkovMeasure],
    prior,
    true_index: int,
    n_sequences: int,
    length: int,
    alphas: Sequence[float],
    rng: np.random.Generator,
) -> SmapErrorSums:
    """Draw sequences from ``measures[true_index]`` and accumulate the error
    sums of SMAP convergence, the rho_n normalizer, and top-model convergence."""
    tables = np.stack([m.table for m in measures])  # (K, 1 + X, X)
    k, _, nx = tables.shape
    log_prior = np.log(np.asarray(prior, dtype=float))
    with np.errstate(divide="ignore"):
        log_tables = np.log(tables)
    s = n_sequences
    # likelihoods kept apart from the prior so float ties match MeasureClass
    loglik = np.zeros((s, k))
    ctx = np.zeros(s, dtype=int)
    stat_sq = np.zeros((s, k))
    excess = np.zeros((s, k))
    tm_sq = np.zeros((s, len(alphas)))
    miss_sq = np.zeros((s, len(alphas)))
    max_inc = 0
    for _ in range(length):
        lj = log_prior + loglik
        cond = tables[:, ctx, :].transpose(1, 0, 2)  # (S, K, X)
        mu = cond[:, true_index, :]
        order = np.argsort(-lj, axis=1, kind="stable")
        sorted_lj = np.take_along_axis(lj, order, axis=1)
        m = sorted_lj[:, :1]
        mass = np.exp(sorted_lj - m)
        cum = np.cumsum(mass, axis=1)  # rho_n(x_{<t}) up to exp(m)
        sorted_cond = np.take_along_axis(cond, order[:, :, None], axis=1)
        stat = np.cumsum(mass[:, :, None] * sorted_cond, axis=1) / cum[:, :, None]
        stat_sq += ((stat - mu[:, None, :]) ** 2).sum(axis=2)
        nxt = np.zeros((s, k))
        for x in range(nx):
            lx = lj + log_tables[:, ctx, x].T
            cum_x = np.cumsum(np.exp(-np.sort(-lx, axis=1) - m), axis=1)
            nxt += cum_x
        excess += nxt / cum - 1.0
        phi = mass / cum
        for j, a in enumerate(alphas):
            inc = phi > a
            max_inc = max(max_inc, int(inc.sum(axis=1).max()))
            big = np.where(inc[:, :, None], sorted_cond, np.inf).min(axis=1)
            tm_sq[:, j] += ((mu - big) ** 2).sum(axis=1)
            miss_sq[:, j] += (1.0 - big.sum(axis=1)) ** 2
        u = rng.random(s)
        x = (u[:, None] > np.cumsum(mu, axis=1)).sum(axis=1)
        x = np.minimum(x, nx - 1)
        loglik = loglik + log_tables[np.arange(k)[None, :], ctx[:, None], x[:, None]]
        ctx = 1 + x
    return SmapErrorSums(stat_sq, excess, tm_sq, miss_sq, max_inc)
