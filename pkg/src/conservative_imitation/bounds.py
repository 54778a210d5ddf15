"""Bound checks for the imitator and the top-n sequence predictors.

Each check pairs a closed-form right-hand side with a left-hand side that is
either estimated by simulation or computed exactly by enumerating every
length-t history of a tiny configuration.  Infinite-horizon quantities are
truncated at the horizon and the event "truth always in the top set" is
evaluated at the decision times ``0..t-1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    ActionTableEnvironment,
    FullHistory,
    ObservationTablePolicy,
    StrippedHistory,
    check_distribution,
)
from .imitator import distribution_from_mins, run_episode
from .posterior import WeightedModelClass, bayes_update, top_set
from .smap import bernoulli_class, smap_error_sums

MAX_HISTORIES = 10**7
SLACK = 1e-9


class InvalidConfigurationError(ValueError):
    """A theorem's precondition does not hold for the supplied configuration."""


class StateSpaceTooLarge(ValueError):
    pass


# --- closed-form right-hand sides ---


def _check_unit(name: str, value: float, allow_zero: bool = False) -> None:
    lo_ok = value >= 0 if allow_zero else value > 0
    if not (lo_ok and value <= 1):
        raise InvalidConfigurationError(f"{name} must lie in {'[0' if allow_zero else '(0'}, 1], got {value}")


def s_alpha(action_count: int, alpha: float, w_d: float) -> float:
    _check_unit("alpha", alpha)
    _check_unit("w_d", w_d)
    return action_count * alpha**-3 * (24 / w_d + 12)


def theorem1_rhs(action_count: int, alpha: float, w_d: float) -> float:
    return s_alpha(action_count, alpha, w_d)


def theorem2_rhs(alpha: float, w_d: float) -> float:
    _check_unit("alpha", alpha, allow_zero=True)
    _check_unit("w_d", w_d)
    return 1 - alpha / w_d


def _require_alpha_below(alpha: float, w_d: float) -> None:
    if not alpha < w_d:
        raise InvalidConfigurationError(f"requires alpha < w_d, got alpha={alpha}, w_d={w_d}")


def theorem3_rhs(action_count: int, alpha: float, w_d: float) -> float:
    _require_alpha_below(alpha, w_d)
    return theorem1_rhs(action_count, alpha, w_d) / (1 - alpha / w_d)


def theorem4_rhs(t: int, alpha: float, w_d: float, action_count: int) -> float:
    _check_unit("alpha", alpha)
    _check_unit("w_d", w_d)
    _require_alpha_below(alpha, w_d)
    gap = 1 - alpha / w_d
    lead = action_count ** (1 / 3) * (24 / w_d + 12) ** (1 / 3) / (alpha * gap**2)
    return lead * t ** (2 / 3) - math.log(gap)


def theorem5_rhs_detail(t: int, s: float, p_b: float) -> tuple[float, bool]:
    """Bound on P(B and E) plus whether it was clamped to the trivial value 1."""
    if t < 1:
        raise InvalidConfigurationError(f"requires t >= 1, got {t}")
    if not 0 < p_b <= 1:
        raise InvalidConfigurationError(f"requires p_B in (0, 1], got {p_b}")
    ts = t * t * s
    inner = math.log1p(t ** (2 / 3) * s ** (1 / 3) / (3 * p_b ** (1 / 3)))
    base = math.log(ts / (27 * p_b)) - 3 * math.log(inner)
    if base <= 0:
        return 1.0, True
    value = ts / base**3
    return (1.0, True) if value > 1 else (value, False)


def theorem5_rhs(t: int, s: float, p_b: float) -> float:
    return theorem5_rhs_detail(t, s, p_b)[0]


def theorem6_rhs(alpha: float, w_mu: float, n_symbols: int = 1) -> float:
    """Part (i) with ``n_symbols=1``; part (ii) with the alphabet size."""
    _check_unit("alpha", alpha)
    _check_unit("w_mu", w_mu)
    return n_symbols * alpha**-3 * (24 / w_mu + 12)


def theorem7_rhs(w_mu: float) -> float:
    _check_unit("w_mu", w_mu)
    return 6 / w_mu + 3


def lemma1_rhs(w_mu: float) -> float:
    _check_unit("w_mu", w_mu)
    return 1 / w_mu


# --- reports ---


@dataclass
class BoundReport:
    theorem: str
    config: str
    mode: str  # "exact" or "mc"
    lhs: float
    stderr: float
    rhs: float
    holds: bool
    detail: str = ""

    def line(self) -> str:
        mark = "ok  " if self.holds else "FAIL"
        err = "" if self.mode == "exact" else f" +/- {self.stderr:.3g}"
        return f"{mark} {self.theorem:<8} {self.config:<12} {self.mode:<5} lhs={self.lhs:.6g}{err} rhs={self.rhs:.6g} {self.detail}".rstrip()


REPORT_FIELDS = ("theorem", "config", "mode", "lhs", "stderr", "rhs", "holds", "detail")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_reports_csv(reports: Iterable[BoundReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in reports:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in REPORT_FIELDS])


def write_reports_text(reports: Iterable[BoundReport], path) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(r.line() + "\n")


def _upper(theorem, config, mode, lhs, stderr, rhs, detail="") -> BoundReport:
    return BoundReport(theorem, config, mode, lhs, stderr, rhs, lhs - 3 * stderr <= rhs + SLACK, detail)


def _lower(theorem, config, mode, lhs, stderr, rhs, detail="") -> BoundReport:
    return BoundReport(theorem, config, mode, lhs, stderr, rhs, lhs + 3 * stderr >= rhs - SLACK, detail)


# --- tiny configurations ---


@dataclass
class TinyConfig:
    """A small imitation problem whose histories can be enumerated.

    Each model is an observation-conditioned action table with an initial
    row; the environment is an action-conditioned observation table.
    """

    name: str
    models: list  # each (initial, table)
    prior: Sequence[float]
    true_index: int
    env_table: list
    alpha: float
    horizon: int
    bad_action: int = 0

    def model_class(self) -> WeightedModelClass:
        policies = [ObservationTablePolicy(tab, init) for init, tab in self.models]
        return WeightedModelClass.from_prior(policies, self.prior)

    def demonstrator(self) -> ObservationTablePolicy:
        init, tab = self.models[self.true_index]
        return ObservationTablePolicy(tab, init)

    def environment(self) -> ActionTableEnvironment:
        return ActionTableEnvironment(self.env_table)

    @property
    def w_d(self) -> float:
        return float(self.prior[self.true_index])

    @property
    def n_actions(self) -> int:
        return len(self.models[0][0])

    def echo(self) -> dict:
        return {
            "name": self.name,
            "models": [[list(i), [list(r) for r in t]] for i, t in self.models],
            "prior": list(self.prior),
            "true_index": self.true_index,
            "env_table": [list(r) for r in self.env_table],
            "alpha": self.alpha,
            "horizon": self.horizon,
            "bad_action": self.bad_action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TinyConfig":
        return cls(
            d["name"],
            [(tuple(i), tuple(tuple(r) for r in t)) for i, t in d["models"]],
            tuple(d["prior"]),
            int(d["true_index"]),
            [tuple(r) for r in d["env_table"]],
            float(d["alpha"]),
            int(d["horizon"]),
            int(d.get("bad_action", 0)),
        )


def _iid(p, n_obs):
    return (tuple(p), tuple(tuple(p) for _ in range(n_obs)))


def default_configs() -> list[TinyConfig]:
    """Built-in tiny instances (2 actions, 1-2 observations, 2-4 models)."""
    return [
        TinyConfig(
            "two-iid",
            [_iid((0.5, 0.5), 1), _iid((0.9, 0.1), 1)],
            (0.5, 0.5),
            0,
            [(1.0,)],
            0.05,
            8,
        ),
        TinyConfig(
            "two-iid-tight",
            [_iid((0.5, 0.5), 1), _iid((0.9, 0.1), 1)],
            (0.5, 0.5),
            0,
            [(1.0,)],
            1e-3,
            8,
        ),
        TinyConfig(
            "three-reactive",
            [
                ((0.6, 0.4), ((0.8, 0.2), (0.3, 0.7))),
                ((0.6, 0.4), ((0.5, 0.5), (0.5, 0.5))),
                ((0.2, 0.8), ((0.8, 0.2), (0.1, 0.9))),
            ],
            (0.5, 0.3, 0.2),
            0,
            [(0.7, 0.3), (0.4, 0.6)],
            0.1,
            5,
        ),
        TinyConfig(
            "four-uniform",
            [
                ((0.5, 0.5), ((0.7, 0.3), (0.4, 0.6))),
                ((0.9, 0.1), ((0.7, 0.3), (0.4, 0.6))),
                ((0.5, 0.5), ((0.2, 0.8), (0.9, 0.1))),
                ((0.3, 0.7), ((0.6, 0.4), (0.5, 0.5))),
            ],
            (0.25, 0.25, 0.25, 0.25),
            0,
            [(0.5, 0.5), (0.8, 0.2)],
            0.025,
            6,
        ),
    ]


def singleton_config(horizon: int = 4) -> TinyConfig:
    return TinyConfig("singleton", [_iid((0.7, 0.3), 1)], (1.0,), 0, [(1.0,)], 0.5, horizon)


# --- exact enumeration ---


@dataclass
class ExactDistribution:
    """Exact law of every length-t full history.

    ``in_event`` marks histories on which the true model stayed in the top
    set at every decision time; ``theta_cubed`` and ``l1_cubed`` hold the
    per-history sums of cubed query probabilities and cubed l1 gaps.
    """

    probs: dict  # FullHistory -> probability
    in_event: dict = field(default_factory=dict)
    theta_cubed: dict = field(default_factory=dict)
    l1_cubed: dict = field(default_factory=dict)

    def total(self) -> float:
        return math.fsum(self.probs.values())

    def event_probability(self) -> float:
        return math.fsum(p for h, p in self.probs.items() if self.in_event.get(h, True))

    def expect(self, values: dict, event_only: bool = False) -> float:
        return math.fsum(
            p * values[h] for h, p in self.probs.items() if not event_only or self.in_event.get(h, True)
        )

    def stripped_marginal(self, event: "Event" = None) -> dict:
        out: dict = {}
        for h, p in self.probs.items():
            if _in(self, h, event):
                s = tuple((a, o) for _, a, o in h)
                out[s] = out.get(s, 0.0) + p
        return out

    def probability(self, predicate: Callable[[StrippedHistory], bool], event: "Event" = None) -> float:
        return math.fsum(p for s, p in self.stripped_marginal(event).items() if predicate(s))


Event = "None | str | Callable[[FullHistory], bool]"


def _in(dist: ExactDistribution, h, event) -> bool:
    if event is None:
        return True
    if event == "E":
        return dist.in_event.get(h, True)
    return bool(event(h))


def enumerate_distribution(
    policy: str,
    model_class,
    alpha: float,
    demonstrator,
    environment,
    t: int,
    true_index: int | None = None,
    max_histories: int = MAX_HISTORIES,
) -> ExactDistribution:
    """Chain-rule probabilities of every length-t history.

    ``policy`` is ``"imitator"`` (posterior evolved along each branch, updated
    on queried steps only) or ``"demonstrator"`` (every step is a query).
    """
    if policy not in ("imitator", "demonstrator"):
        raise ValueError(f"unknown policy {policy!r}")
    n_a, n_o = demonstrator.n_actions, environment.n_observations
    size = (n_a * n_o * 2) ** t
    if size > max_histories:
        raise StateSpaceTooLarge(f"{size} histories exceed the limit of {max_histories}")
    probs: dict = {}
    in_event: dict = {}
    th3: dict = {}
    l13: dict = {}
    memo: dict = {}
    updates: dict = {}

    def state_key(cls, stripped):
        # models that cannot name their context are keyed on the whole history
        ctx = cls.context_key(stripped)
        return (cls.log_posterior.tobytes(), ("ctx", ctx) if ctx is not None else ("h", stripped))

    def update(cls, stripped, a):
        key = (state_key(cls, stripped), a)
        nxt = updates.get(key)
        if nxt is None:
            nxt = updates[key] = bayes_update(cls, stripped, a)
        return nxt

    def decide(cls, stripped):
        key = state_key(cls, stripped)
        hit = memo.get(key)
        if hit is None:
            top = top_set(cls, alpha)
            dist = distribution_from_mins(cls.min_action_probs(top.members, stripped))
            truth_in = true_index is None or true_index in top
            hit = memo[key] = (truth_in, dist)
        return hit

    def walk(full, stripped, p, cls, ok, s3, l3):
        if len(full) == t:
            probs[full] = p
            in_event[full] = ok
            th3[full] = s3
            l13[full] = l3
            return
        truth_in, dist = decide(cls, stripped)
        demo = check_distribution(demonstrator.probs(stripped))
        ok = ok and truth_in
        if policy == "imitator":
            theta = dist.query_prob
            s3 = s3 + theta**3
            l3 = l3 + float(np.abs(dist.self_probs - demo).sum()) ** 3
            branches = [(0, a, float(pa)) for a, pa in enumerate(dist.self_probs) if pa > 0]
            if theta > 0:
                branches += [(1, a, theta * float(pa)) for a, pa in enumerate(demo) if pa > 0]
        else:
            branches = [(1, a, float(pa)) for a, pa in enumerate(demo) if pa > 0]
        for q, a, pa in branches:
            nxt = update(cls, stripped, a) if q == 1 else cls
            obs = environment.probs(stripped, a)
            for o, po in enumerate(obs):
                if po > 0:
                    walk(full + ((q, a, o),), stripped + ((a, o),), p * pa * float(po), nxt, ok, s3, l3)

    walk((), (), 1.0, model_class, True, 0.0, 0.0)
    return ExactDistribution(probs, in_event, th3, l13)


@dataclass(frozen=True)
class KLResult:
    value: float
    infinite: bool


def exact_kl_restricted(P: ExactDistribution, Q: ExactDistribution, event=None, q_event="same") -> KLResult:
    """KL between the event-conditioned stripped-history laws of P and Q.

    ``event`` is ``None`` (whole space), ``"E"`` (the distribution's own
    truth-in-top-set flags) or a predicate on full histories.  ``q_event``
    conditions Q; ``"same"`` reuses ``event`` and ``"all"`` leaves Q
    unconditioned.
    """
    if q_event == "same":
        q_event = event
    elif q_event == "all":
        q_event = None
    p = P.stripped_marginal(event)
    q = Q.stripped_marginal(q_event)
    zp = math.fsum(p.values())
    zq = math.fsum(q.values())
    if zp <= 0 or zq <= 0:
        raise InvalidConfigurationError("conditioning event has zero probability")
    terms = []
    for s, ps in p.items():
        if ps <= 0:
            continue
        qs = q.get(s, 0.0)
        if qs <= 0:
            return KLResult(math.inf, True)
        a, b = ps / zp, qs / zq
        terms.append(a * math.log(a / b))
    return KLResult(max(0.0, math.fsum(terms)), False)


def exact_pair(cfg: TinyConfig) -> tuple[ExactDistribution, ExactDistribution]:
    cls = cfg.model_class()
    demo, env = cfg.demonstrator(), cfg.environment()
    imit = enumerate_distribution("imitator", cls, cfg.alpha, demo, env, cfg.horizon, cfg.true_index)
    dem = enumerate_distribution("demonstrator", cls, cfg.alpha, demo, env, cfg.horizon, cfg.true_index)
    return imit, dem


def bad_event(action: int) -> Callable[[StrippedHistory], bool]:
    """B = "``action`` taken at some step"."""
    return lambda s: any(a == action for a, _ in s)


DEFAULT_EXACT = ("1", "2", "3", "4", "5")


def exact_checks(cfg: TinyConfig, checks: Sequence[str] = DEFAULT_EXACT) -> list[BoundReport]:
    imit, dem = exact_pair(cfg)
    w_d, k, alpha, t = cfg.w_d, cfg.n_actions, cfg.alpha, cfg.horizon
    out = []
    p_e = imit.event_probability()
    if "1" in checks:
        out.append(_upper("thm1", cfg.name, "exact", imit.expect(imit.theta_cubed), 0.0, theorem1_rhs(k, alpha, w_d)))
    if "2" in checks:
        out.append(_lower("thm2", cfg.name, "exact", p_e, 0.0, theorem2_rhs(alpha, w_d)))
    if "3" in checks:
        lhs = imit.expect(imit.l1_cubed, event_only=True) / p_e
        out.append(_upper("thm3", cfg.name, "exact", lhs, 0.0, theorem3_rhs(k, alpha, w_d)))
    if "4" in checks:
        # the quantity the proof chain bounds: demonstrator law left unconditioned
        kl = exact_kl_restricted(imit, dem, "E", "all")
        detail = "infinite" if kl.infinite else ""
        out.append(_upper("thm4", cfg.name, "exact", kl.value, 0.0, theorem4_rhs(t, alpha, w_d, k), detail))
    if "4lit" in checks:
        # both laws conditioned on their own truth-in-top-set event
        kl = exact_kl_restricted(imit, dem, "E", "E")
        detail = f"P_d(E)={dem.event_probability():.6g}" + (" infinite" if kl.infinite else "")
        out.append(_upper("thm4lit", cfg.name, "exact", kl.value, 0.0, theorem4_rhs(t, alpha, w_d, k), detail))
    if "5" in checks:
        b = bad_event(cfg.bad_action)
        p_b = dem.probability(b)
        lhs = imit.probability(b, "E")
        rhs, clamped = theorem5_rhs_detail(t, s_alpha(k, alpha, w_d), p_b)
        out.append(_upper("thm5", cfg.name, "exact", lhs, 0.0, rhs, "clamped" if clamped else ""))
    return out


# --- Monte Carlo ---


@dataclass
class EpisodeStats:
    theta_cubed: np.ndarray
    l1_cubed: np.ndarray
    in_event: np.ndarray


def mc_episode_stats(cfg: TinyConfig, runs: int, steps: int, seed: int) -> EpisodeStats:
    """Per-run sums of cubed query probabilities and cubed l1 gaps, plus E."""
    rng = np.random.default_rng(seed)
    cls, demo, env = cfg.model_class(), cfg.demonstrator(), cfg.environment()
    th3 = np.zeros(runs)
    l13 = np.zeros(runs)
    ev = np.zeros(runs, dtype=bool)
    for r in range(runs):
        res = run_episode(cls, cfg.alpha, demo, env, steps, rng, true_index=cfg.true_index)
        th3[r] = np.sum(res.thetas**3)
        l13[r] = np.sum(res.l1**3)
        ev[r] = bool(res.truth_in_top.all())
    return EpisodeStats(th3, l13, ev)


def mc_theta_cubed(cfg: TinyConfig, runs: int, steps: int, seed: int) -> tuple[float, float]:
    th3 = mc_episode_stats(cfg, runs, steps, seed).theta_cubed
    return float(th3.mean()), float(th3.std(ddof=1) / math.sqrt(runs))


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if len(x) < 2:
        return float(x.mean()) if len(x) else 0.0, 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def mc_checks(cfg: TinyConfig, runs: int = 500, steps: int = 200, seed: int = 0, checks=("1", "2", "3")) -> list[BoundReport]:
    st = mc_episode_stats(cfg, runs, steps, seed)
    k, alpha, w_d = cfg.n_actions, cfg.alpha, cfg.w_d
    out = []
    if "1" in checks:
        m, se = _mean_se(st.theta_cubed)
        out.append(_upper("thm1", cfg.name, "mc", m, se, theorem1_rhs(k, alpha, w_d)))
    if "2" in checks:
        f = float(st.in_event.mean())
        se = math.sqrt(f * (1 - f) / runs)
        out.append(_lower("thm2", cfg.name, "mc", f, se, theorem2_rhs(alpha, w_d)))
    if "3" in checks:
        m, se = _mean_se(st.l1_cubed[st.in_event])
        out.append(_upper("thm3", cfg.name, "mc", m, se, theorem3_rhs(k, alpha, w_d)))
    return out


@dataclass
class SmapConfig:
    name: str = "bernoulli8"
    probs: Sequence[float] = (0.1, 0.2, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9)
    true_index: int = 3
    alpha: float = 0.1
    sequences: int = 500
    length: int = 200

    def echo(self) -> dict:
        return asdict(self) | {"probs": list(self.probs)}


def smap_checks(cfg: SmapConfig, seed: int = 0, checks=("6", "7", "lemma1")) -> list[BoundReport]:
    measures = bernoulli_class(cfg.probs)
    k = len(measures)
    prior = np.full(k, 1.0 / k)
    w_mu = 1.0 / k
    sums = smap_error_sums(measures, prior, cfg.true_index, cfg.sequences, cfg.length, [cfg.alpha], np.random.default_rng(seed))
    out = []
    if "6" in checks:
        m, se = _mean_se(sums.top_min_sq[:, 0])
        out.append(_upper("thm6i", cfg.name, "mc", m, se, theorem6_rhs(cfg.alpha, w_mu)))
        m, se = _mean_se(sums.missing_sq[:, 0])
        out.append(_upper("thm6ii", cfg.name, "mc", m, se, theorem6_rhs(cfg.alpha, w_mu, 2)))
    if "7" in checks:
        for n in range(1, k + 1):
            m, se = _mean_se(sums.stat_sq[:, n - 1])
            out.append(_upper("thm7", cfg.name, "mc", m, se, theorem7_rhs(w_mu), f"n={n}"))
    if "lemma1" in checks:
        for n in range(1, k + 1):
            m, se = _mean_se(sums.rho_excess[:, n - 1])
            lo = m + 3 * se >= -SLACK
            r = _upper("lemma1", cfg.name, "mc", m, se, lemma1_rhs(w_mu), f"n={n}")
            r.holds = r.holds and lo
            out.append(r)
    return out
