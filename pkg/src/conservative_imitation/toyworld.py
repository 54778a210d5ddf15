"""Travel-agency toy world.

Three clients ask for restaurant recommendations.  A recommendation is a
Boolean 4-tuple (vegetarian, Michelin, local, Instagram); each demonstrator
model is a 12-tuple over {1/3, 2/3, 1} giving, per client and feature, the
probability that the bit is True.  Observation 0 means nobody asked and every
model emits the null action.

Action ids: 0 is null, ``1 + code`` is the bit pattern whose binary
expansion ``code`` lists the bits most significant first in the order above.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .core import StrippedHistory, categorical
from .imitator import ActionDistribution, Imitator, distribution_from_mins, sample_step
from .posterior import FactoredModelClass, RealizabilityError, write_posterior_csv

VALUES = np.array([1 / 3, 2 / 3, 1.0])
VALUE_LABELS = ("1/3", "2/3", "1")
N_CLIENTS = 3
N_FEATURES = 4
FEATURE_NAMES = ("veg", "michelin", "local", "instagram")
NULL_ACTION = 0
N_ACTIONS = 1 + 2**N_FEATURES
# observation ids 0..3 stand for "", 1, 2, 3
OBS_PROBS = np.array([43 / 64, 1 / 4, 1 / 16, 1 / 64])
N_OBSERVATIONS = len(OBS_PROBS)
QUIT_RATIO = 100.0

PATTERNS = np.array(list(product((0, 1), repeat=N_FEATURES)), dtype=np.int8)
SUBTUPLES = np.array(list(product(range(3), repeat=N_FEATURES)), dtype=np.int8)


def _pattern_probs() -> np.ndarray:
    p = VALUES[SUBTUPLES]  # (81, 4)
    bits = PATTERNS.astype(bool)  # (16, 4)
    table = np.where(bits[None, :, :], p[:, None, :], 1.0 - p[:, None, :])
    return table.prod(axis=2)


# SUB_PROBS[s, code]: probability the 4-tuple ``SUBTUPLES[s]`` emits pattern ``code``
SUB_PROBS = _pattern_probs()
with np.errstate(divide="ignore"):
    SUB_LOGPROBS = np.log(SUB_PROBS)
    # BIT_LOGLIK[b, v]: log-probability of bit b under feature value VALUES[v]
    BIT_LOGLIK = np.log(np.stack([1.0 - VALUES, VALUES]))


def action_to_bits(action: int) -> np.ndarray:
    if not 1 <= action < N_ACTIONS:
        raise ValueError(f"action {action} is not a recommendation")
    return PATTERNS[action - 1]


def bits_to_action(bits: Sequence[int]) -> int:
    code = 0
    for b in bits:
        code = 2 * code + int(b)
    return 1 + code


def subtuple_index(digits: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(digits), (3,) * N_FEATURES))


def client_factors(client: int) -> range:
    return range(N_FEATURES * (client - 1), N_FEATURES * client)


def _latest_observation(stripped: StrippedHistory) -> int:
    return stripped[-1][1] if stripped else 0


class ToyDemonstrator:
    """Demonstrator model given by value indices into :data:`VALUES`.

    Four indices per client; the standard world has 12.  Reduced worlds with
    fewer clients are used to check the factored posterior.
    """

    n_actions = N_ACTIONS

    def __init__(self, digits: Sequence[int], n_clients: int = N_CLIENTS):
        digits = tuple(int(d) for d in digits)
        if len(digits) != n_clients * N_FEATURES or not all(0 <= d < 3 for d in digits):
            raise ValueError(f"need {n_clients * N_FEATURES} value indices in 0..2, got {digits}")
        self.digits = digits
        self.n_clients = n_clients
        self.tuple12 = tuple(float(VALUES[d]) for d in digits)
        self._rows = np.zeros((1 + n_clients, N_ACTIONS))
        self._rows[0, NULL_ACTION] = 1.0
        for c in range(1, n_clients + 1):
            sub = subtuple_index(digits[N_FEATURES * (c - 1) : N_FEATURES * c])
            self._rows[c, 1:] = SUB_PROBS[sub]

    @classmethod
    def from_probabilities(cls, tuple12: Sequence[float]) -> "ToyDemonstrator":
        digits = [int(np.argmin(np.abs(VALUES - p))) for p in tuple12]
        if not np.allclose(VALUES[digits], tuple12, atol=1e-9):
            raise ValueError(f"entries must be 1/3, 2/3 or 1: {tuple12}")
        return cls(digits, len(digits) // N_FEATURES)

    def subtuple(self, client: int) -> int:
        return subtuple_index(self.digits[N_FEATURES * (client - 1) : N_FEATURES * client])

    def probs(self, stripped: StrippedHistory) -> np.ndarray:
        return self._rows[_latest_observation(stripped)]

    def context(self, stripped: StrippedHistory) -> int:
        return _latest_observation(stripped)


@dataclass(frozen=True)
class ToyModelClass:
    """The 3**12 demonstrator models with a per-feature factored posterior."""

    factors: FactoredModelClass

    @classmethod
    def uniform(cls, n_clients: int = N_CLIENTS) -> "ToyModelClass":
        return cls(FactoredModelClass.uniform(n_clients * N_FEATURES, VALUES))

    @property
    def n_clients(self) -> int:
        return self.factors.n_factors // N_FEATURES

    @property
    def version(self) -> int:
        return self.factors.version

    @property
    def log_posterior(self) -> np.ndarray:
        return self.factors.log_posterior

    n_actions = N_ACTIONS

    def __len__(self) -> int:
        return len(self.factors)

    def model(self, index: int) -> ToyDemonstrator:
        return ToyDemonstrator(self.factors.digits(index), self.n_clients)

    def index_of(self, demonstrator: ToyDemonstrator) -> int:
        return self.factors.index_of(demonstrator.digits)

    def log_weight(self, index: int) -> float:
        return self.factors.log_weight(index)

    def joint_log_posterior(self) -> np.ndarray:
        return self.factors.joint_log_posterior()

    def log_normalizer(self) -> float:
        return self.factors.log_normalizer()

    def context_key(self, stripped: StrippedHistory) -> int:
        return _latest_observation(stripped)

    def action_probs(self, indices, stripped: StrippedHistory) -> np.ndarray:
        return np.stack([self.model(int(i)).probs(stripped) for i in indices])

    def min_action_probs(self, members: np.ndarray, stripped: StrippedHistory) -> np.ndarray:
        client = _latest_observation(stripped)
        out = np.zeros(N_ACTIONS)
        if client == 0:
            out[NULL_ACTION] = 1.0
            return out
        present = np.zeros(len(SUBTUPLES), dtype=bool)
        present[(members // 81 ** (self.n_clients - client)) % 81] = True
        out[1:] = SUB_PROBS[present].min(axis=0)
        return out

    def updated(self, stripped: StrippedHistory, action: int) -> "ToyModelClass":
        client = _latest_observation(stripped)
        if client == 0:
            if action != NULL_ACTION:
                raise RealizabilityError("only the null action is possible without a client")
            return ToyModelClass(self.factors.update_factors([], []))
        bits = action_to_bits(action)
        return ToyModelClass(
            self.factors.update_factors(list(client_factors(client)), BIT_LOGLIK[bits])
        )


class ClientMonitor:
    """Likelihood-ratio quit test for each client.

    For every client and each candidate 4-tuple, keeps the log-likelihood of
    all recommendations that client has received.  The alternative hypothesis
    pools the other 80 tuples: ``rule="mixture"`` averages their likelihoods
    under a uniform prior, ``rule="max"`` takes the best one.  A client quits
    once the alternative beats the desired tuple by more than ``threshold``.
    """

    RULES = ("mixture", "max")

    def __init__(self, desired: Sequence[int], threshold: float = QUIT_RATIO, rule: str = "mixture"):
        if rule not in self.RULES:
            raise ValueError(f"unknown quit rule {rule!r}")
        self.desired = [int(s) for s in desired]
        self.log_threshold = float(np.log(threshold))
        self.rule = rule
        self.loglik = np.zeros((N_CLIENTS, len(SUBTUPLES)))
        self.quit = [False] * N_CLIENTS
        self.received = [0] * N_CLIENTS

    @classmethod
    def for_demonstrator(cls, demonstrator: ToyDemonstrator, **kw) -> "ClientMonitor":
        return cls([demonstrator.subtuple(c) for c in range(1, N_CLIENTS + 1)], **kw)

    def log_ratio(self, client: int) -> float:
        """log of L(alternative) / L(desired) for ``client``'s recommendations."""
        ll = self.loglik[client - 1]
        d = self.desired[client - 1]
        others = np.delete(ll, d)
        top = others.max()
        if self.rule == "max":
            alt = top
        else:
            alt = top + np.log(np.exp(others - top).sum() / len(others))
        if ll[d] == -np.inf:
            return np.inf
        return float(alt - ll[d])


def record_recommendation(monitor: ClientMonitor, client: int, bits4) -> ClientMonitor:
    if client not in (1, 2, 3):
        raise ValueError(f"client must be 1, 2 or 3, got {client}")
    code = bits_to_action(bits4) - 1
    monitor.loglik[client - 1] += SUB_LOGPROBS[:, code]
    monitor.received[client - 1] += 1
    if monitor.log_ratio(client) > monitor.log_threshold:
        monitor.quit[client - 1] = True
    return monitor


def sample_observation(rng: np.random.Generator) -> int:
    return categorical(rng, OBS_PROBS)


def build_toy_class() -> ToyModelClass:
    return ToyModelClass.uniform()


def random_demonstrator(rng: np.random.Generator) -> ToyDemonstrator:
    return ToyDemonstrator(rng.integers(0, 3, size=N_CLIENTS * N_FEATURES))


@dataclass
class RunSummary:
    seed: int
    steps: int
    alpha: float
    demonstrator: ToyDemonstrator
    queries: int
    quits: list
    thetas: np.ndarray = field(repr=False)
    query_record: np.ndarray = field(repr=False)
    final_class: ToyModelClass = field(repr=False)
    snapshot_class: ToyModelClass | None = field(default=None, repr=False)
    snapshot_step: int | None = None
    final_truth_posterior: float = 0.0
    truth_always_top: bool = True
    conservatism_violations: int = 0
    wall_time: float = 0.0

    @property
    def queries_first_half(self) -> int:
        return int(self.query_record[: self.steps // 2].sum())

    @property
    def queries_second_half(self) -> int:
        return int(self.query_record[self.steps // 2 :].sum())


def run_toy(
    seed: int,
    steps: int = 2**15,
    alpha: float = 1e-14,
    demonstrator: ToyDemonstrator | None = None,
    snapshot_step: int | None = 1000,
    quit_rule: str = "mixture",
) -> RunSummary:
    """One imitator run in the toy world.

    The demonstrator is drawn uniformly from the class with the run's own
    generator unless one is given.  Every recommendation, whoever chose it,
    is shown to the client monitor.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    if demonstrator is None:
        demonstrator = random_demonstrator(rng)
    model_class = build_toy_class()
    truth = model_class.index_of(demonstrator)
    imitator = Imitator(model_class, alpha)
    monitor = ClientMonitor.for_demonstrator(demonstrator, rule=quit_rule)

    thetas = np.zeros(steps)
    record = np.zeros(steps, dtype=np.uint8)
    truth_top: dict[int, bool] = {}
    violations = 0
    all_top = True
    snapshot = model_class if snapshot_step == 0 else None
    window: StrippedHistory = ()
    for t in range(steps):
        dist: ActionDistribution = imitator.distribution(window)
        version = imitator.model_class.version
        in_top = truth_top.get(version)
        if in_top is None:
            in_top = truth_top[version] = truth in imitator.top
        all_top &= in_top
        if in_top and np.any(dist.self_probs > demonstrator.probs(window)):
            violations += 1
        thetas[t] = dist.query_prob
        outcome = sample_step(dist, demonstrator, window, rng)
        record[t] = outcome.q
        client = _latest_observation(window)
        if client:
            record_recommendation(monitor, client, action_to_bits(outcome.a))
        imitator.observe(window, outcome)
        # toy models read only the latest observation, so a one-step window suffices
        window = ((outcome.a, sample_observation(rng)),)
        if snapshot_step is not None and t + 1 == snapshot_step:
            snapshot = imitator.model_class

    final = imitator.model_class
    return RunSummary(
        seed=seed,
        steps=steps,
        alpha=alpha,
        demonstrator=demonstrator,
        queries=int(record.sum()),
        quits=list(monitor.quit),
        thetas=thetas,
        query_record=record,
        final_class=final,
        snapshot_class=snapshot,
        snapshot_step=snapshot_step if snapshot is not None else None,
        final_truth_posterior=float(np.exp(final.log_weight(truth))),
        truth_always_top=bool(all_top),
        conservatism_violations=violations,
        wall_time=time.perf_counter() - start,
    )


def write_query_record(record: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("".join("1" if q else "0" for q in record) + "\n")


def write_query_bitmap(record: np.ndarray, path, width: int = 256) -> None:
    """Plain PBM, queries black, read left to right, top to bottom."""
    rows = -(-len(record) // width)
    padded = np.zeros(rows * width, dtype=np.uint8)
    padded[: len(record)] = record
    with open(path, "w") as fh:
        fh.write(f"P1\n{width} {rows}\n")
        for r in padded.reshape(rows, width):
            fh.write(" ".join(str(int(b)) for b in r) + "\n")


def write_toy_posterior(model_class: ToyModelClass, path) -> None:
    write_posterior_csv(model_class.factors, path, labels=list(VALUE_LABELS))


def toy_distribution(client_subtuples: dict, client: int) -> ActionDistribution:
    """Imitator distribution for ``client`` when the top set's tuples for that
    client are exactly ``client_subtuples[client]`` (a list of 4-tuples of
    value indices)."""
    present = np.zeros(len(SUBTUPLES), dtype=bool)
    for digits in client_subtuples[client]:
        present[subtuple_index(digits)] = True
    mins = np.zeros(N_ACTIONS)
    mins[1:] = SUB_PROBS[present].min(axis=0)
    return distribution_from_mins(mins)


SUMMARY_FIELDS = [
    "seed",
    "steps",
    "queries",
    "quits_client1",
    "quits_client2",
    "quits_client3",
    "final_truth_posterior",
    "queries_first_half",
    "queries_second_half",
    "truth_always_top",
    "conservatism_violations",
    "demonstrator",
]


def summary_row(run: RunSummary) -> dict:
    return {
        "seed": run.seed,
        "steps": run.steps,
        "queries": run.queries,
        "quits_client1": int(run.quits[0]),
        "quits_client2": int(run.quits[1]),
        "quits_client3": int(run.quits[2]),
        "final_truth_posterior": f"{run.final_truth_posterior:.10g}",
        "queries_first_half": run.queries_first_half,
        "queries_second_half": run.queries_second_half,
        "truth_always_top": int(run.truth_always_top),
        "conservatism_violations": run.conservatism_violations,
        "demonstrator": " ".join(VALUE_LABELS[d] for d in run.demonstrator.digits),
    }


def write_summary_csv(runs: Sequence[RunSummary], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, SUMMARY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for run in sorted(runs, key=lambda r: r.seed):
            writer.writerow(summary_row(run))
