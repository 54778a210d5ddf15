"""The conservative imitation policy.

For every action the imitator takes the smallest probability any top-set
model assigns to it, acts with that mass, and hands the leftover mass to the
demonstrator as a query.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (
    Environment,
    History,
    HistoryStep,
    PolicyModel,
    StrippedHistory,
    categorical,
    check_distribution,
)
from .posterior import TopSet, bayes_update, top_set

THETA_TOL = 1e-12


@dataclass(frozen=True)
class ActionDistribution:
    self_probs: np.ndarray
    query_prob: float

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return np.cumsum(np.append(self.self_probs, self.query_prob))

    def marginal(self, demonstrator_probs: np.ndarray) -> np.ndarray:
        """Action law once the query branch is resolved by the demonstrator."""
        return self.self_probs + self.query_prob * np.asarray(demonstrator_probs)


@dataclass(frozen=True)
class StepOutcome:
    q: int
    a: int
    theta_q: float


def distribution_from_mins(mins: np.ndarray) -> ActionDistribution:
    theta = 1.0 - float(mins.sum())
    if theta < -THETA_TOL:
        raise ValueError(f"min-probabilities sum to {1 - theta} > 1")
    return ActionDistribution(mins, max(theta, 0.0))


def imitator_distribution(model_class, top: TopSet, stripped: StrippedHistory) -> ActionDistribution:
    if top.version != model_class.version:
        raise ValueError("top set is stale for this posterior")
    return distribution_from_mins(model_class.min_action_probs(top.members, stripped))


def sample_step(
    dist: ActionDistribution,
    demonstrator: PolicyModel,
    stripped: StrippedHistory,
    rng: np.random.Generator,
) -> StepOutcome:
    cum = dist._cumulative
    u = rng.random()
    k = int(np.searchsorted(cum, u, side="right"))
    n = len(dist.self_probs)
    if k < n:
        return StepOutcome(0, k, dist.query_prob)
    if dist.query_prob <= 0.0:
        # u fell past a sum that rounded just below one
        return StepOutcome(0, int(np.flatnonzero(dist.self_probs)[-1]), dist.query_prob)
    demo = check_distribution(demonstrator.probs(stripped))
    return StepOutcome(1, categorical(rng, demo), dist.query_prob)


class Imitator:
    """Stateful wrapper that caches the top set per posterior version.

    Action distributions are memoized per ``(version, context)`` when the
    model class can name the context its models condition on.
    """

    def __init__(self, model_class, alpha: float):
        if not 0 < alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        self.model_class = model_class
        self.alpha = alpha
        self._top: TopSet | None = None
        self._dists: dict = {}

    @property
    def top(self) -> TopSet:
        if self._top is None or self._top.version != self.model_class.version:
            self._top = top_set(self.model_class, self.alpha)
            self._dists.clear()
        return self._top

    def distribution(self, stripped: StrippedHistory) -> ActionDistribution:
        top = self.top
        key = self.model_class.context_key(stripped)
        if key is None:
            return imitator_distribution(self.model_class, top, stripped)
        dist = self._dists.get(key)
        if dist is None:
            dist = self._dists[key] = imitator_distribution(self.model_class, top, stripped)
        return dist

    def observe(self, stripped: StrippedHistory, outcome: StepOutcome) -> None:
        if outcome.q == 1:
            self.model_class = bayes_update(self.model_class, stripped, outcome.a)


@dataclass
class EpisodeResult:
    history: History
    thetas: np.ndarray
    truth_in_top: np.ndarray | None = None
    l1: np.ndarray | None = None
    model_class: object = field(default=None, repr=False)
    violations: int = 0

    @property
    def queries(self) -> int:
        return int(sum(self.history.query_record))


def run_episode(
    model_class,
    alpha: float,
    demonstrator: PolicyModel,
    environment: Environment,
    steps: int,
    rng: np.random.Generator,
    true_index: int | None = None,
) -> EpisodeResult:
    """Run the imitator for ``steps`` steps.

    With ``true_index`` set, also records whether that model was in the top
    set at each step and the l1 distance between the imitator's self-action
    probabilities and the demonstrator's policy.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    imitator = Imitator(model_class, alpha)
    history = History(demonstrator.n_actions, environment.n_observations)
    thetas = np.zeros(steps)
    in_top = np.zeros(steps, dtype=bool) if true_index is not None else None
    l1 = np.zeros(steps) if true_index is not None else None
    violations = 0
    for t in range(steps):
        h = history.stripped()
        dist = imitator.distribution(h)
        thetas[t] = dist.query_prob
        if true_index is not None:
            demo = demonstrator.probs(h)
            in_top[t] = true_index in imitator.top
            l1[t] = np.abs(dist.self_probs - demo).sum()
            if in_top[t] and np.any(dist.self_probs > demo):
                violations += 1
        outcome = sample_step(dist, demonstrator, h, rng)
        obs = categorical(rng, check_distribution(environment.probs(h, outcome.a)))
        imitator.observe(h, outcome)
        history = history.append(HistoryStep(outcome.q, outcome.a, obs))
    return EpisodeResult(history, thetas, in_top, l1, imitator.model_class, violations)
