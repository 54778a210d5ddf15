import csv
import json

import pytest

from conservative_imitation.cli import RNG_ALGORITHM, main


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_toy_run_outputs(tmp_path):
    rc = main(["toy-run", "--out", str(tmp_path), "--steps", "600", "--seed-list", "3,1", "--snapshot-step", "300"])
    assert rc == 0
    for seed in (1, 3):
        for suffix in ("queries.txt", "queries.pbm", "posterior.csv", "posterior_step300.csv"):
            assert (tmp_path / f"seed{seed}_{suffix}").exists()
    assert not (tmp_path / "timings.csv").exists()
    summary = rows(tmp_path / "summary.csv")
    assert [r["seed"] for r in summary] == ["1", "3"]
    agg = rows(tmp_path / "aggregate.csv")[0]
    assert agg["runs"] == "2"
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["rng"] == RNG_ALGORITHM
    assert cfg["seed_list"] == [1, 3]


def test_timings_opt_in(tmp_path):
    assert main(["toy-run", "--out", str(tmp_path), "--steps", "10", "--seeds", "1", "--timings"]) == 0
    assert rows(tmp_path / "timings.csv")[0]["seed"] == "0"


def test_missing_output_directory(tmp_path, capsys):
    assert main(["smap-demo", "--out", str(tmp_path / "nope")]) == 2
    assert "does not exist" in capsys.readouterr().err


@pytest.mark.parametrize("alpha", ["0", "1.0", "-0.2", "7"])
def test_bad_alpha_rejected(tmp_path, alpha):
    assert main(["smap-demo", "--out", str(tmp_path), "--alpha", alpha]) == 2


def test_alpha_above_prior_rejected(tmp_path):
    # theorem 3 needs alpha below the demonstrator's prior weight
    assert main(["bounds-check", "--out", str(tmp_path), "--exact", "--alpha", "0.6"]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"steps": 7, "probs": "0.3,0.6", "seeds": 2}))
    assert main(["smap-demo", "--out", str(tmp_path), "--config", str(conf), "--steps", "5"]) == 0
    echo = json.loads((tmp_path / "config.json").read_text())
    assert echo["steps"] == 5
    assert echo["probs"] == "0.3,0.6"
    assert len(rows(tmp_path / "smap.csv")) == 10


def test_unknown_config_key(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"horizon": 3}))
    assert main(["smap-demo", "--out", str(tmp_path), "--config", str(conf)]) == 2


def test_bounds_singleton_suite(tmp_path):
    assert main(["bounds-check", "--out", str(tmp_path), "--suite", "singleton", "--runs", "20", "--steps", "30"]) == 0
    reports = rows(tmp_path / "bounds.csv")
    assert reports and all(r["holds"] == "True" for r in reports)
    for r in reports:
        if r["theorem"] in ("thm1", "thm3", "thm4", "thm6i", "thm6ii", "thm7"):
            assert float(r["lhs"]) == 0.0, r
    echo = json.loads((tmp_path / "config.json").read_text())
    assert echo["tiny_configs"][0]["name"] == "singleton"
    assert echo["rng"] == RNG_ALGORITHM


def test_bounds_exact_default(tmp_path):
    assert main(["bounds-check", "--out", str(tmp_path), "--exact", "--checks", "1,2,3,4,5"]) == 0
    reports = rows(tmp_path / "bounds.csv")
    assert {r["config"] for r in reports} >= {"two-iid", "three-reactive", "four-uniform"}
    assert all(r["mode"] == "exact" for r in reports)
    assert len((tmp_path / "bounds.txt").read_text().splitlines()) == len(reports)


def test_bounds_unknown_check(tmp_path):
    assert main(["bounds-check", "--out", str(tmp_path), "--checks", "9"]) == 2


def test_smap_singleton_columns_agree(tmp_path):
    assert main(["smap-demo", "--out", str(tmp_path), "--probs", "0.4", "--steps", "20"]) == 0
    for r in rows(tmp_path / "smap.csv"):
        vals = {r[k] for k in ("xi", "rho_n", "rho_norm", "rho_stat", "top_min", "mu")}
        assert len(vals) == 1
        assert float(r["phi_n"]) == 1.0


def test_smap_orderings(tmp_path):
    assert main(["smap-demo", "--out", str(tmp_path), "--probs", "0.2,0.5,0.8", "--n", "1", "--steps", "50"]) == 0
    for r in rows(tmp_path / "smap.csv"):
        assert float(r["rho_n"]) >= float(r["rho_norm"]) - 1e-12
        assert float(r["rho_n"]) >= float(r["rho_stat"]) - 1e-12


def test_smap_full_class_equals_xi(tmp_path):
    assert main(["smap-demo", "--out", str(tmp_path), "--probs", "0.2,0.5,0.8", "--steps", "50"]) == 0
    for r in rows(tmp_path / "smap.csv"):
        assert float(r["rho_stat"]) == pytest.approx(float(r["xi"]), abs=1e-11)


def test_smap_bad_n(tmp_path):
    assert main(["smap-demo", "--out", str(tmp_path), "--probs", "0.2,0.5", "--n", "3"]) == 2
