import csv
import json
import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from ngvi.cli import main
from ngvi.data import DesignMatrix
from ngvi.errors import ConfigError
from ngvi.harness import (SUMMARY_COLS, ExperimentConfig, compute_test_metrics, emit_plot_data,
                          fmt, load_config, load_run_dir, parse_config, preset_names,
                          run_experiment)

# step sizes and regularization of the bundled dataset presets
PRESET_STEPS = {
    "australian": (1e-5, 5e-3, 5e-3, 4.4e-3),
    "diabetes": (1e-2, 5e-3, 5e-3, 9e-4),
    "breast-cancer": (1e-1, 9e-3, 6e-3, 6.3e-3),
    "mushrooms": (1e-2, 2.5e-4, 2.5e-4, 8.5e-5),
    "phishing": (1e-2, 4e-4, 4e-4, 8e-5),
    "mnist": (1e-1, 5e-6, 5e-6, 1e-6),
    "covtype": (2e-2, 1e-5, 1e-5, 1e-6),
    "leukemia": (2e-1, 5e-6, 5e-6, 1.5e-6),
}


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def toy_cfg(**kw):
    return replace(load_config("toy"), max_iters=300, **kw)


@pytest.mark.parametrize("name", sorted(PRESET_STEPS))
def test_presets_carry_reference_settings(name):
    cfg = load_config(name)
    beta, vn, srvn, bwgd = PRESET_STEPS[name]
    assert cfg.beta == beta
    assert cfg.steps == {"vn": vn, "srvn": srvn, "bwgd": bwgd}
    assert cfg.c0 > 0


def test_all_presets_listed():
    assert set(PRESET_STEPS) | {"toy"} == set(preset_names())


def test_config_round_trip_and_hash():
    cfg = load_config("diabetes")
    again = parse_config(cfg.to_ini())
    assert again == cfg and again.digest() == cfg.digest()
    assert replace(cfg, out_dir="elsewhere").digest() == cfg.digest()
    assert replace(cfg, beta=0.02).digest() != cfg.digest()


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig("x", "diabetes", methods=("vn",), steps={})
    with pytest.raises(ConfigError):
        ExperimentConfig("x", "diabetes", methods=("vn",), steps={"vn": 1.0}, c0=0.0)
    with pytest.raises(ConfigError):
        load_config("no-such-preset")
    with pytest.raises(ConfigError):
        parse_config("[steps]\nvn = 1\n")


def test_fmt_round_trips_doubles():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x and fmt(True) == "1" and fmt(None) == "" and fmt(7) == "7"


def test_metrics_uninformative_predictor():
    y = np.array([1.0, -1.0, 1.0, 1.0])
    tm = compute_test_metrics(np.zeros(2), DesignMatrix(sp.csr_matrix(np.ones((4, 2))), y))
    assert abs(tm.nll_mean - math.log(2)) < 1e-15
    assert tm.accuracy == 0.75


def test_metrics_large_margin():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    y = np.array([1.0, 1.0, -1.0])
    tm = compute_test_metrics(np.array([25.0, 30.0]), DesignMatrix(sp.csr_matrix(X), y))
    assert tm.nll_sum < 1e-10 and tm.accuracy == 1.0


def test_toy_run_outputs(tmp_path):
    res = run_experiment(toy_cfg(seeds=(0, 1)), out_dir=tmp_path)
    by = {(r["method"], r["seed"]): r for r in res.summary}
    assert by[("vn", 0)]["iterations"] == 1 and by[("vn", 0)]["converged"]
    for s in (0, 1):
        assert by[("bwgd", s)]["iterations"] > by[("vn", s)]["iterations"]
    rows = read_rows(tmp_path / "summary.csv")
    assert tuple(rows[0]) == SUMMARY_COLS and len(rows) == 1 + 4 * 2
    for r in rows[1:]:
        rec = dict(zip(rows[0], r))
        assert rec["config_hash"] and rec["git_describe"] and rec["dataset_digest"]
    meta = json.loads((tmp_path / "summary.json").read_text())
    assert meta["config_hash"] == res.config.digest()
    header = read_rows(tmp_path / "srvn_seed1.csv")[0]
    assert header[:3] == ["iter", "neg_elbo", "grad_norm"]
    assert (tmp_path / "timing" / "srvn_seed1.csv").exists()
    assert (tmp_path / "plots" / "bwgd_neg_elbo_iteration.csv").exists()
    assert (tmp_path / "plots" / "timing" / "bwgd_neg_elbo_seconds.csv").exists()


def test_toy_run_is_reproducible(tmp_path):
    run_experiment(toy_cfg(), out_dir=tmp_path / "a")
    run_experiment(toy_cfg(), out_dir=tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv")
                   if "timing" not in p.parts)
    assert len(files) > 10
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_step_failure_is_recorded_per_method(tmp_path):
    cfg = toy_cfg(seeds=(0,), methods=("vn", "srvn"), steps={"vn": 1.0, "srvn": 5.0})
    res = run_experiment(cfg, out_dir=tmp_path, plots=False)
    by = {r["method"]: r for r in res.summary}
    assert by["srvn"]["error"] and not by["vn"]["error"] and by["vn"]["converged"]


def test_single_seed_envelope_collapses(tmp_path):
    res = run_experiment(toy_cfg(seeds=(3,)), out_dir=tmp_path, plots=False)
    emit_plot_data(res.records, tmp_path / "plots")
    for p in (tmp_path / "plots").glob("*_iteration.csv"):
        data = np.array(read_rows(p)[1:], dtype=float)
        assert np.array_equal(data[:, 1], data[:, 2]) and np.array_equal(data[:, 1], data[:, 3])


def test_gap_to_best_subtracts_global_minimum(tmp_path):
    res = run_experiment(toy_cfg(seeds=(0, 1, 2)), out_dir=tmp_path, plots=False)
    emit_plot_data(res.records, tmp_path / "plots", metrics=["neg_elbo"])
    best = min(r.column("neg_elbo").min() for recs in res.records.values() for r in recs)
    offsets = dict(read_rows(tmp_path / "plots" / "offsets.csv")[1:])
    assert float(offsets["neg_elbo"]) == best
    lows = [np.array(read_rows(p)[1:], dtype=float)[:, 2].min()
            for p in (tmp_path / "plots").glob("*_neg_elbo_iteration.csv")]
    assert min(lows) == 0.0 and all(v >= 0 for v in lows)
    vn = np.array(read_rows(tmp_path / "plots" / "vn_neg_elbo_iteration.csv")[1:], dtype=float)
    assert np.all(vn[:, 2] <= vn[:, 1]) and np.all(vn[:, 1] <= vn[:, 3])


def test_plot_data_rebuilt_from_run_dir(tmp_path):
    res = run_experiment(toy_cfg(seeds=(0, 1)), out_dir=tmp_path)
    records = load_run_dir(tmp_path)
    assert set(records) == set(res.config.methods)
    emit_plot_data(records, tmp_path / "replot", metrics=["neg_elbo"])
    for m in res.config.methods:
        name = f"{m}_neg_elbo_iteration.csv"
        assert (tmp_path / "replot" / name).read_bytes() == (tmp_path / "plots" / name).read_bytes()


def test_emit_requires_records(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data({}, tmp_path)


def test_svg_rendering(tmp_path):
    pytest.importorskip("matplotlib")
    res = run_experiment(toy_cfg(seeds=(0,)), out_dir=tmp_path, svg=True)
    svg = tmp_path / "plots" / "neg_elbo_iteration.svg"
    assert svg.exists() and svg.read_text().lstrip().startswith("<?xml")
    assert res.out_dir == tmp_path


def test_cli_run_and_plot(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "toy", "--seed", "2", "--max-iters", "200", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "vn" in text and str(out) in text
    assert read_rows(out / "summary.csv")[1][1] == "2"
    assert main(["plot", str(out), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "srvn_neg_elbo_iteration.csv").exists()


def test_cli_fetch_offline_miss(tmp_path, capsys):
    assert main(["fetch", "diabetes", "--offline", "--cache-dir", str(tmp_path)]) == 1
    assert "offline" in capsys.readouterr().err


def test_cli_fetch_cached(tmp_path, capsys):
    from ngvi.data import seed_cache

    seed_cache("diabetes", Path(__file__).parent / "data" / "diabetes_scale", tmp_path)
    assert main(["fetch", "diabetes", "--offline", "--cache-dir", str(tmp_path)]) == 0
    assert "diabetes_scale" in capsys.readouterr().out


def test_cli_verify_fast(capsys):
    assert main(["verify", "--level", "fast"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("PASS") for line in lines) == 7


def test_cli_rejects_unknown_config(capsys):
    assert main(["run", "nope"]) == 1
    assert "preset" in capsys.readouterr().err
