"""Interaction records and the policy/environment contracts.

Policies and environments only ever receive the *stripped* history, a tuple
of ``(action, observation)`` pairs.  The query record never reaches them, so
every model, demonstrator and environment built on these signatures is fair
by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

StrippedHistory = Tuple[Tuple[int, int], ...]
FullHistory = Tuple[Tuple[int, int, int], ...]

NORMALIZATION_TOL = 1e-12


class AlphabetError(ValueError):
    """An action or observation id lies outside its alphabet."""


class NormalizationError(ValueError):
    """A distribution does not sum to one."""


@dataclass(frozen=True, slots=True)
class HistoryStep:
    q: int
    a: int
    o: int

    def __post_init__(self):
        if self.q not in (0, 1):
            raise AlphabetError(f"query flag must be 0 or 1, got {self.q}")


@dataclass(frozen=True)
class History:
    """Immutable interaction history ``h_{<t}`` over fixed alphabets.

    ``append`` returns a new history; the prefix is shared, never mutated.
    """

    n_actions: int
    n_observations: int
    steps: Tuple[HistoryStep, ...] = ()
    _stripped: StrippedHistory = field(default=(), repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, step: HistoryStep) -> "History":
        return append_step(self, step)

    def stripped(self) -> StrippedHistory:
        return self._stripped

    @property
    def query_record(self) -> Tuple[int, ...]:
        return tuple(s.q for s in self.steps)


def append_step(history: History, step: HistoryStep) -> History:
    if not 0 <= step.a < history.n_actions:
        raise AlphabetError(f"action {step.a} outside alphabet of size {history.n_actions}")
    if not 0 <= step.o < history.n_observations:
        raise AlphabetError(
            f"observation {step.o} outside alphabet of size {history.n_observations}"
        )
    return History(
        history.n_actions,
        history.n_observations,
        history.steps + (step,),
        history._stripped + ((step.a, step.o),),
    )


def strip(history: History | Sequence[HistoryStep]) -> StrippedHistory:
    """Drop the query flags, keeping ``(a, o)`` pairs in order."""
    if isinstance(history, History):
        return history.stripped()
    return tuple((s.a, s.o) for s in history)


@runtime_checkable
class PolicyModel(Protocol):
    """A demonstrator model: ``probs(h)`` is ``pi(1, . | h)`` over actions."""

    n_actions: int

    def probs(self, stripped: StrippedHistory) -> np.ndarray: ...


@runtime_checkable
class Environment(Protocol):
    """``probs(h, a)`` is the observation law after action ``a``."""

    n_observations: int

    def probs(self, stripped: StrippedHistory, action: int) -> np.ndarray: ...


def check_distribution(p: np.ndarray, tol: float = NORMALIZATION_TOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
        raise NormalizationError(f"not a probability vector: {p!r}")
    return p


class ObservationTablePolicy:
    """Policy whose action law depends only on the latest observation.

    ``table[o]`` is the action distribution after observation ``o``;
    ``initial`` is used on the empty history (defaults to ``table[0]``).
    """

    def __init__(self, table, initial=None):
        self.table = np.array(table, dtype=float)
        if self.table.ndim == 1:
            self.table = self.table[None, :]
        for row in self.table:
            check_distribution(row)
        self.n_actions = self.table.shape[1]
        self.initial = self.table[0] if initial is None else check_distribution(initial)

    def probs(self, stripped: StrippedHistory) -> np.ndarray:
        if not stripped:
            return self.initial
        return self.table[stripped[-1][1]]

    def context(self, stripped: StrippedHistory):
        return stripped[-1][1] if stripped else -1

    def __repr__(self):
        return f"ObservationTablePolicy({self.table.tolist()})"


class ActionTableEnvironment:
    """Environment whose observation law depends only on the latest action."""

    def __init__(self, table):
        self.table = np.array(table, dtype=float)
        if self.table.ndim == 1:
            self.table = self.table[None, :]
        for row in self.table:
            check_distribution(row)
        self.n_observations = self.table.shape[1]

    def probs(self, stripped: StrippedHistory, action: int) -> np.ndarray:
        if self.table.shape[0] == 1:
            return self.table[0]
        return self.table[action]


def categorical(rng: np.random.Generator, p: np.ndarray) -> int:
    """One draw from ``p`` using a single uniform variate."""
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    if idx >= len(p):
        # rounding left u above the final cumulative sum
        idx = int(np.flatnonzero(p)[-1])
    return idx
