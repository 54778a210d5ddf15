"""Command-line front end.

Subcommands write into an existing output directory.  Every run echoes its
resolved configuration to ``config.json`` there, and all CSV outputs depend
only on that configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, smap, toyworld

RNG_ALGORITHM = "numpy.random.default_rng / PCG64"

DEFAULTS = {
    "toy-run": {
        "alpha": 1e-14,
        "steps": 2**15,
        "seeds": 20,
        "seed_list": None,
        "quit_rule": "mixture",
        "snapshot_step": 1000,
        "bitmap_width": 256,
        "workers": 1,
        "timings": False,
    },
    "bounds-check": {
        "alpha": None,
        "steps": 200,
        "runs": 500,
        "seeds": 1,
        "seed_list": None,
        "exact": False,
        "mc": False,
        "checks": "1,2,3,4,5,6,7,lemma1",
        "suite": "default",
        "configs": None,
        "smap": None,
    },
    "smap-demo": {
        "alpha": 0.1,
        "steps": 200,
        "seeds": 1,
        "seed_list": None,
        "probs": "0.2,0.5,0.8",
        "true_index": 0,
        "n": None,
    },
}


class ConfigError(ValueError):
    pass


def _csv_list(text: str, kind=str) -> list:
    try:
        return [kind(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conservative-imitation", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, type=Path, help="existing output directory")
        p.add_argument("--config", type=Path, help="JSON file of option values; flags override it")
        p.add_argument("--alpha", type=float)
        p.add_argument("--steps", type=int)
        p.add_argument("--seeds", type=int, help="use seeds 0..N-1")
        p.add_argument("--seed-list", type=lambda s: _csv_list(s, int), help="comma-separated seeds")

    toy = sub.add_parser("toy-run", help="travel-agency imitation runs")
    common(toy)
    toy.add_argument("--quit-rule", choices=toyworld.ClientMonitor.RULES)
    toy.add_argument("--snapshot-step", type=int, help="also write the posterior at this step")
    toy.add_argument("--workers", type=int, help="processes to spread seeds over")
    toy.add_argument("--timings", action="store_true", default=None, help="also write wall times (not reproducible)")

    b = sub.add_parser("bounds-check", help="theorem checks on tiny instances")
    common(b)
    b.add_argument("--exact", action="store_true", default=None, help="exact enumeration checks only")
    b.add_argument("--mc", action="store_true", default=None, help="Monte Carlo checks only")
    b.add_argument("--checks", help="comma-separated ids from 1,2,3,4,4lit,5,6,7,lemma1")
    b.add_argument("--runs", type=int, help="Monte Carlo runs per configuration")
    b.add_argument("--suite", choices=("default", "singleton"))

    s = sub.add_parser("smap-demo", help="estimator trajectories on a Bernoulli class")
    common(s)
    s.add_argument("--probs", help="comma-separated P(x=1) per measure")
    s.add_argument("--true-index", type=int)
    s.add_argument("--n", type=int, help="top-n size (default: whole class)")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        for k, v in loaded.items():
            k = k.replace("-", "_")
            if k not in cfg:
                raise ConfigError(f"unknown config key {k!r} for {args.command}")
            cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["seed_list"] is not None:
        seeds = [int(x) for x in (cfg["seed_list"] if isinstance(cfg["seed_list"], list) else _csv_list(cfg["seed_list"]))]
    else:
        seeds = list(range(int(cfg["seeds"])))
    if not seeds:
        raise ConfigError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    cfg["seed_list"] = sorted(seeds)
    cfg.pop("seeds")
    if cfg["steps"] < 0:
        raise ConfigError("steps must be nonnegative")
    if cfg.get("alpha") is not None and not 0 < cfg["alpha"] < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {cfg['alpha']}")
    out = Path(args.out)
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist")
    cfg = {"command": args.command, **cfg, "rng": RNG_ALGORITHM}
    return cfg


def _write_config(cfg: dict, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --- toy-run ---


def _toy_one(job):
    seed, cfg = job
    snap = cfg["snapshot_step"]
    return toyworld.run_toy(seed, cfg["steps"], cfg["alpha"], snapshot_step=snap, quit_rule=cfg["quit_rule"])


def cmd_toy(cfg: dict, out: Path) -> int:
    jobs = [(s, cfg) for s in cfg["seed_list"]]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            runs = list(pool.map(_toy_one, jobs))
    else:
        runs = [_toy_one(j) for j in jobs]
    runs.sort(key=lambda r: r.seed)
    for r in runs:
        stem = out / f"seed{r.seed}"
        toyworld.write_query_record(r.query_record, f"{stem}_queries.txt")
        toyworld.write_query_bitmap(r.query_record, f"{stem}_queries.pbm", cfg["bitmap_width"])
        toyworld.write_toy_posterior(r.final_class, f"{stem}_posterior.csv")
        if r.snapshot_class is not None:
            toyworld.write_toy_posterior(r.snapshot_class, f"{stem}_posterior_step{r.snapshot_step}.csv")
    toyworld.write_summary_csv(runs, out / "summary.csv")
    q = [r.queries for r in runs]
    sd = statistics.stdev(q) if len(q) > 1 else 0.0
    quits = sum(sum(r.quits) for r in runs)
    decays = sum(r.queries_second_half < r.queries_first_half for r in runs)
    violations = sum(r.conservatism_violations for r in runs)
    _write_rows(
        out / "aggregate.csv",
        ["runs", "mean_queries", "sd_queries", "total_quits", "runs_with_query_decay", "conservatism_violations"],
        [[len(runs), f"{statistics.fmean(q):.6g}", f"{sd:.6g}", quits, decays, violations]],
    )
    if cfg["timings"]:
        _write_rows(out / "timings.csv", ["seed", "wall_time"], [[r.seed, f"{r.wall_time:.3f}"] for r in runs])
    print(f"runs={len(runs)} mean_queries={statistics.fmean(q):.2f} sd={sd:.2f} quits={quits} violations={violations}")
    return 0


# --- bounds-check ---


def _bounds_suite(cfg: dict) -> tuple[list, "bounds.SmapConfig"]:
    if cfg["configs"] is not None:
        tiny = [bounds.TinyConfig.from_dict(d) for d in cfg["configs"]]
    elif cfg["suite"] == "singleton":
        tiny = [bounds.singleton_config()]
    else:
        tiny = bounds.default_configs()
    if cfg["alpha"] is not None:
        for t in tiny:
            t.alpha = cfg["alpha"]
    sm = bounds.SmapConfig(**cfg["smap"]) if cfg["smap"] else bounds.SmapConfig()
    if cfg["suite"] == "singleton" and not cfg["smap"]:
        sm = bounds.SmapConfig(name="singleton", probs=(0.3,), true_index=0)
    if cfg["alpha"] is not None:
        sm.alpha = cfg["alpha"]
    sm.length = cfg["steps"]
    sm.sequences = cfg["runs"]
    return tiny, sm


def cmd_bounds(cfg: dict, out: Path) -> int:
    checks = _csv_list(cfg["checks"]) if isinstance(cfg["checks"], str) else [str(c) for c in cfg["checks"]]
    known = {"1", "2", "3", "4", "4lit", "5", "6", "7", "lemma1"}
    bad = set(checks) - known
    if bad:
        raise ConfigError(f"unknown checks {sorted(bad)}")
    do_exact = not cfg["mc"] or cfg["exact"]
    do_mc = not cfg["exact"] or cfg["mc"]
    tiny, sm = _bounds_suite(cfg)
    reports = []
    for seed in cfg["seed_list"]:
        for t in tiny:
            if do_exact and seed == cfg["seed_list"][0]:
                reports += bounds.exact_checks(t, [c for c in checks if c in ("1", "2", "3", "4", "4lit", "5")])
            if do_mc:
                reports += bounds.mc_checks(t, cfg["runs"], cfg["steps"], seed, [c for c in checks if c in ("1", "2", "3")])
        if do_mc:
            reports += bounds.smap_checks(sm, seed, [c for c in checks if c in ("6", "7", "lemma1")])
    cfg_echo = dict(cfg, tiny_configs=[t.echo() for t in tiny], smap_config=sm.echo())
    _write_config(cfg_echo, out)
    bounds.write_reports_csv(reports, out / "bounds.csv")
    bounds.write_reports_text(reports, out / "bounds.txt")
    for r in reports:
        print(r.line())
    failed = sum(not r.holds for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks hold")
    return 1 if failed else 0


# --- smap-demo ---


SMAP_COLUMNS = ("seed", "t", "x", "xi", "rho_n", "rho_norm", "rho_stat", "top_min", "mu", "phi_n", "missing_mass")


def cmd_smap(cfg: dict, out: Path) -> int:
    probs = _csv_list(cfg["probs"], float) if isinstance(cfg["probs"], str) else [float(p) for p in cfg["probs"]]
    if not probs or any(not 0 <= p <= 1 for p in probs):
        raise ConfigError("probs must be values in [0, 1]")
    if not 0 <= cfg["true_index"] < len(probs):
        raise ConfigError("true_index out of range")
    n = cfg["n"] if cfg["n"] is not None else len(probs)
    if not 1 <= n <= len(probs):
        raise ConfigError(f"n must lie in 1..{len(probs)}")
    rows = []
    for seed in cfg["seed_list"]:
        rng = np.random.default_rng(seed)
        cls = smap.MeasureClass(smap.bernoulli_class(probs))
        mu = cls.measures[cfg["true_index"]]
        for t in range(cfg["steps"]):
            pr = smap.predictions(cls, n, cfg["alpha"])
            m = mu.conditional(cls.prefix)
            x = int(rng.random() >= m[0])
            rows.append(
                [seed, t, x]
                + [f"{pr[k][1]:.12g}" for k in ("xi", "rho_n", "rho_norm", "rho_stat", "top_min")]
                + [f"{m[1]:.12g}", f"{pr['phi_n']:.12g}", f"{pr['missing_mass']:.12g}"]
            )
            cls.observe(x)
    _write_config(dict(cfg, n=n), out)
    _write_rows(out / "smap.csv", SMAP_COLUMNS, rows)
    print(f"wrote {len(rows)} rows to {out / 'smap.csv'}")
    return 0


COMMANDS = {"toy-run": cmd_toy, "bounds-check": cmd_bounds, "smap-demo": cmd_smap}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        if args.command == "toy-run":
            _write_config(cfg, out)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, bounds.InvalidConfigurationError, bounds.StateSpaceTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
