"""Bayesian posterior over a finite demonstrator-model class and its top set.

Weights are kept in log space.  The posterior only moves on demonstrator
chosen steps; callers must not call :func:`bayes_update` when the imitator
picked the action itself.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .core import PolicyModel, StrippedHistory

PRIOR_TOL = 1e-9


class RealizabilityError(ValueError):
    """Every model in the class assigns zero probability to a demonstrated action."""


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    z = logsumexp(logw)
    if not np.isfinite(z):
        raise RealizabilityError("posterior mass vanished: no model supports the data")
    return logw - z


@dataclass(frozen=True)
class WeightedModelClass:
    """A finite class of :class:`PolicyModel` with prior and posterior log weights."""

    models: tuple
    log_prior: np.ndarray
    log_posterior: np.ndarray
    version: int = 0

    @classmethod
    def from_prior(cls, models: Sequence[PolicyModel], prior=None) -> "WeightedModelClass":
        models = tuple(models)
        if prior is None:
            prior = np.full(len(models), 1.0 / len(models))
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (len(models),):
            raise ValueError("prior length must match the number of models")
        if np.any(prior <= 0):
            raise ValueError("prior weights must be strictly positive")
        if abs(prior.sum() - 1.0) > PRIOR_TOL:
            raise ValueError(f"prior sums to {prior.sum()}, not 1")
        logp = np.log(prior)
        return cls(models, logp, logp.copy(), 0)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def n_actions(self) -> int:
        return self.models[0].n_actions

    def joint_log_posterior(self) -> np.ndarray:
        return self.log_posterior

    def action_probs(self, indices, stripped: StrippedHistory) -> np.ndarray:
        """Rows are ``pi_n(1, . | h)`` for each model index in ``indices``."""
        return np.stack([self.models[i].probs(stripped) for i in indices])

    def min_action_probs(self, members, stripped: StrippedHistory) -> np.ndarray:
        return self.action_probs(members, stripped).min(axis=0)

    def context_key(self, stripped: StrippedHistory):
        """Key under which model outputs are constant, or ``None`` if unknown."""
        if not all(hasattr(m, "context") for m in self.models):
            return None
        keys = {m.context(stripped) for m in self.models}
        return keys.pop() if len(keys) == 1 else None

    def updated(self, stripped: StrippedHistory, action: int) -> "WeightedModelClass":
        probs = self.action_probs(range(len(self)), stripped)[:, action]
        with np.errstate(divide="ignore"):
            loglik = np.log(probs)
        if not np.any(np.isfinite(loglik)):
            raise RealizabilityError(f"no model assigns positive probability to action {action}")
        logpost = _normalize_log(self.log_posterior + loglik)
        return replace(self, log_posterior=logpost, version=self.version + 1)


def bayes_update(model_class, stripped: StrippedHistory, action: int):
    """Posterior after the demonstrator chose ``action`` at history ``stripped``.

    Only call this for demonstrator-chosen steps.
    """
    return model_class.updated(stripped, action)


def posterior_of(model_class, index: int) -> float:
    if not 0 <= index < len(model_class):
        raise IndexError(f"model index {index} out of range")
    if hasattr(model_class, "log_weight"):
        return float(np.exp(model_class.log_weight(index)))
    return float(np.exp(model_class.log_posterior[index]))


@dataclass(frozen=True)
class TopSet:
    """Ranked prefix of the class satisfying the top-model predicate.

    ``order`` lists every model that could possibly qualify, sorted by
    nonincreasing posterior with ties broken by ascending index; models
    outside it are strictly lighter than ``alpha`` times the MAP weight and
    are never members.  The members are ``order[:cutoff]``.
    """

    order: np.ndarray
    cutoff: int
    version: int
    weights: np.ndarray = field(repr=False)

    @property
    def members(self) -> np.ndarray:
        return self.order[: self.cutoff]

    def __len__(self) -> int:
        return self.cutoff

    def __contains__(self, index) -> bool:
        return bool(np.any(self.members == index))


def top_set_from_log_weights(
    logw: np.ndarray, alpha: float, version: int = 0, log_normalizer: float | None = None
) -> TopSet:
    """Members ``n`` with ``w_n >= alpha * sum_{m<=n} w_m`` under the ranked order.

    ``log_normalizer`` is ``log sum exp(logw)`` when the caller already knows it.
    """
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    logw = np.asarray(logw, dtype=float)
    lmax = logw.max()
    # models below alpha * w_max fail since the cumulative mass is at least w_max
    candidates = np.flatnonzero(logw >= lmax + np.log(alpha) - 1e-9)
    ranked = candidates[np.argsort(-logw[candidates], kind="stable")]
    z = logsumexp(logw) if log_normalizer is None else log_normalizer
    w = np.exp(logw[ranked] - z)
    ok = w >= alpha * np.cumsum(w)
    cutoff = int(np.argmin(ok)) if not ok.all() else len(ok)
    if ok[cutoff:].any():
        raise AssertionError("top-model predicate is not a prefix of the ranked order")
    return TopSet(ranked, max(cutoff, 1), version, w)


def top_set(model_class, alpha: float) -> TopSet:
    z = getattr(model_class, "log_normalizer", None)
    return top_set_from_log_weights(
        model_class.joint_log_posterior(), alpha, model_class.version, z() if z else None
    )


def _outer_sum(rows: np.ndarray) -> np.ndarray:
    # balanced split keeps the large intermediate to a single outer sum
    if len(rows) == 1:
        return rows[0]
    mid = len(rows) // 2
    return np.add.outer(_outer_sum(rows[:mid]), _outer_sum(rows[mid:])).ravel()


@dataclass(frozen=True)
class FactoredModelClass:
    """Product class: a model is one value per factor, weights multiply.

    Joint model ``index`` enumerates value tuples in C order (the last
    factor varies fastest).  Only the per-factor log posteriors are stored;
    joint weights are materialized on demand.
    """

    values: np.ndarray
    log_prior: np.ndarray
    log_posterior: np.ndarray
    version: int = 0

    @classmethod
    def uniform(cls, n_factors: int, values) -> "FactoredModelClass":
        values = np.asarray(values, dtype=float)
        k = len(values)
        lp = np.full((n_factors, k), -np.log(k))
        return cls(values, lp, lp.copy(), 0)

    @property
    def n_factors(self) -> int:
        return self.log_posterior.shape[0]

    def __len__(self) -> int:
        return len(self.values) ** self.n_factors

    def digits(self, index: int) -> tuple:
        return tuple(int(d) for d in np.unravel_index(index, (len(self.values),) * self.n_factors))

    def index_of(self, digits) -> int:
        return int(np.ravel_multi_index(tuple(digits), (len(self.values),) * self.n_factors))

    def log_weight(self, index: int) -> float:
        d = self.digits(index)
        return float(sum(self.log_posterior[f, v] for f, v in enumerate(d)))

    def joint_log_posterior(self) -> np.ndarray:
        return _outer_sum(self.log_posterior)

    def log_normalizer(self) -> float:
        return float(logsumexp(self.log_posterior, axis=1).sum())

    def update_factors(self, factors: Sequence[int], loglik: np.ndarray) -> "FactoredModelClass":
        """Add ``loglik[j]`` (one entry per value) to factor ``factors[j]``, renormalize."""
        lp = self.log_posterior.copy()
        for f, row in zip(factors, loglik):
            lp[f] = _normalize_log(lp[f] + row)
        return replace(self, log_posterior=lp, version=self.version + 1)


def write_posterior_csv(model_class, path, labels=None) -> None:
    """Log2 posterior table: one row per factor (or per model when unfactored)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if isinstance(model_class, FactoredModelClass):
            labels = labels or [f"{v:g}" for v in model_class.values]
            writer.writerow(["factor", *labels])
            for f, row in enumerate(model_class.log_posterior / np.log(2)):
                writer.writerow([f, *(f"{x:.4f}" for x in row)])
        else:
            writer.writerow(["model", "log2_posterior"])
            for i, x in enumerate(model_class.log_posterior / np.log(2)):
                writer.writerow([i, f"{x:.4f}"])
