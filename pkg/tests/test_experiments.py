import json
from pathlib import Path

import numpy as np
import pytest

from idslab.experiments import ConfigError, load_config, run_experiment
from idslab.experiments.cli import main
from idslab.experiments.io import CellStore, read_csv
from idslab.experiments.plots import EmptyResultError, MissingColumnError, emit_plots

GOLDEN = Path(__file__).parent / "golden"


def free_dos_config(n=33):
    return {
        "kind": "free-dos",
        "kernel": "laplacian_1d",
        "seed": 1,
        "energies": np.linspace(-1.9, 1.9, n).tolist(),
        "resolution": 1 << 20,
    }


def window_config(**over):
    cfg = json.loads((GOLDEN / "window_zero_kernel.json").read_text())
    cfg.update(over)
    return cfg


def digests(res):
    return {o["file"]: o["sha256"] for o in res.manifest["outputs"]}


def test_free_dos_row_count(tmp_path):
    res = run_experiment(load_config(free_dos_config()), tmp_path)
    meta, cols, rows = read_csv(tmp_path / "free_dos.csv")
    assert len(rows) == 33
    assert meta["config_hash"] == res.manifest["config_hash"]
    assert meta["master_seed"] == "1"
    assert res.passed


def test_same_config_same_digests(tmp_path):
    a = run_experiment(load_config(window_config()), tmp_path / "a")
    b = run_experiment(load_config(window_config()), tmp_path / "b", threads=3)
    assert digests(a) == digests(b)


def test_golden_window_csv(tmp_path):
    run_experiment(load_config(window_config()), tmp_path)
    assert (tmp_path / "window.csv").read_bytes() == (GOLDEN / "window_zero_kernel.csv").read_bytes()


def test_output_dir_not_part_of_hash():
    a = load_config(window_config())
    b = load_config(window_config(output_dir="elsewhere"))
    assert a.config_hash == b.config_hash
    assert a.with_seed(5).config_hash != a.config_hash


def test_resume_from_cells(tmp_path):
    cfg = load_config(window_config(lambdas=[0.5, 1.0]))
    full = run_experiment(cfg, tmp_path / "full")
    part = tmp_path / "part"
    part.mkdir()
    lines = (tmp_path / "full" / "cells.jsonl").read_text().splitlines()
    # keep the first cell plus a torn second line, as after a crash
    (part / "cells.jsonl").write_text(lines[0] + "\n" + lines[1][:20])
    store = CellStore(part / "cells.jsonl", cfg.config_hash)
    assert len(store.cells) == 1
    resumed = run_experiment(cfg, part)
    assert digests(resumed) == digests(full)


def test_validation_reports_field_paths():
    bad = window_config(lambdas=[1.0, 0.5], box={"L": 1}, ensemble=0)
    with pytest.raises(ConfigError) as exc:
        load_config(bad)
    paths = {p for p, _ in exc.value.errors}
    assert "$.box.L" in paths and "$.ensemble" in paths


def test_semantic_validation():
    with pytest.raises(ConfigError) as exc:
        load_config(window_config(lambdas=[1.0, 0.5]))
    assert exc.value.errors[0][0] == "$.lambdas"
    with pytest.raises(ConfigError, match="self-energy"):
        load_config({"kind": "self-energy", "kernel": "laplacian_1d", "seed": 0,
                     "disorder": {"family": "uniform"}, "box": {"L": 8}, "lambdas": [0.1], "ensemble": 2})
    with pytest.raises(ConfigError, match="support radius"):
        load_config({"kind": "window", "kernel": "laplacian_1d", "seed": 0, "disorder": {"family": "uniform"},
                     "box": {"L": 2}, "lambdas": [1.0], "ensemble": 1, "energies": [0.0], "deltas": [0.1]})


def test_resource_cap_exit_code(tmp_path):
    cfg = window_config(box={"L": 5000}, method="dense")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["window", "--config", str(path), "--out", str(tmp_path / "o")]) == 3


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(free_dos_config(5)))
    assert main(["free-dos", "--config", str(good), "--out", str(tmp_path / "o"), "--check"]) == 0
    assert main(["window", "--config", str(good)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["free-dos", "--config", str(bad)]) == 2
    failing = dict(free_dos_config(5), options={"closed_form_tol": 0.0}, resolution=32)
    fpath = tmp_path / "fail.json"
    fpath.write_text(json.dumps(failing))
    assert main(["free-dos", "--config", str(fpath), "--out", str(tmp_path / "f"), "--check"]) == 4


def test_seed_override(tmp_path):
    path = tmp_path / "w.json"
    path.write_text(json.dumps(window_config()))
    assert main(["window", "--config", str(path), "--out", str(tmp_path / "s"), "--seed", "7"]) == 0
    meta, _, _ = read_csv(tmp_path / "s" / "window.csv")
    assert meta["master_seed"] == "7"


def test_threads_env_does_not_change_output(tmp_path, monkeypatch):
    path = tmp_path / "w.json"
    path.write_text(json.dumps(window_config()))
    monkeypatch.setenv("IDSLAB_THREADS", "4")
    assert main(["window", "--config", str(path), "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "window.csv").read_bytes() == (GOLDEN / "window_zero_kernel.csv").read_bytes()


def test_plots(tmp_path):
    run_experiment(load_config(free_dos_config()), tmp_path / "fd")
    svgs = emit_plots([tmp_path / "fd" / "free_dos.csv"], tmp_path / "plots")
    assert len(svgs) == 1 and svgs[0].read_text().startswith("<?xml")
    again = emit_plots([tmp_path / "fd" / "free_dos.csv"], tmp_path / "plots2")
    assert again[0].read_bytes() == svgs[0].read_bytes()


def test_free_dos_curve_monotone_for_plot(tmp_path):
    run_experiment(load_config(free_dos_config()), tmp_path)
    _, _, rows = read_csv(tmp_path / "free_dos.csv")
    n = [r["N0"] for r in rows]
    assert all(b >= a for a, b in zip(n, n[1:])) and 0 < n[0] < n[-1] < 1


def test_holder_plot_has_slope_annotation(tmp_path):
    cfg = {
        "kind": "holder", "kernel": "laplacian_1d", "seed": 3,
        "disorder": {"family": "uniform", "standardize": True}, "box": {"L": 64},
        "lambdas": [0.5, 1.0], "deltas": [0.1, 0.2, 0.4], "energies": [0.0], "ensemble": 4,
    }
    run_experiment(load_config(cfg), tmp_path)
    svgs = emit_plots([tmp_path / "holder_E=0.0.json"], tmp_path / "p", ["mass-delta"])
    assert "slope" in svgs[0].read_text()


def test_plot_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("# kind=window\n")
    with pytest.raises(EmptyResultError):
        emit_plots([empty], tmp_path / "p")
    assert not (tmp_path / "p").exists()
    nocol = tmp_path / "window.csv"
    nocol.write_text("lam,E,mass\n1.0,0.0,0.2\n")
    with pytest.raises(MissingColumnError, match="delta"):
        emit_plots([nocol], tmp_path / "p")
    assert not (tmp_path / "p").exists()


@pytest.mark.parametrize("kind_cfg", [
    {"kind": "expansion-identity", "kernel": "laplacian_1d", "seed": 1, "options": {"n_fixtures": 5}},
    {"kind": "classify-point", "kernel": "laplacian_1d", "seed": 1, "energies": [0.0, 2.0, 3.0]},
    {"kind": "ids", "kernel": "laplacian_1d", "seed": 1, "disorder": {"family": "gaussian"}, "box": {"L": 32},
     "lambdas": [0.0, 1.0], "ensemble": 3, "energies": [-1.0, 0.0, 1.0]},
    {"kind": "wegner", "kernel": "laplacian_1d", "seed": 1, "disorder": {"family": "uniform"}, "box": {"L": 32},
     "lambdas": [1.0], "ensemble": 3, "energies": [0.0], "deltas": [0.1]},
    {"kind": "cauchy-check", "kernel": "laplacian_1d", "seed": 1, "disorder": {"family": "cauchy"},
     "box": {"L": 32}, "lambdas": [1.0], "ensemble": 3, "energies": [0.0], "deltas": [0.2]},
    {"kind": "self-energy", "kernel": "laplacian_1d", "seed": 1,
     "disorder": {"family": "uniform", "standardize": True}, "box": {"L": 16}, "lambdas": [0.5],
     "ensemble": 3, "options": {"z": [0.0, 1.0]}},
    {"kind": "conjecture-probe", "kernel": "laplacian_1d", "seed": 1, "disorder": {"family": "gaussian"},
     "box": {"L": 32}, "lambdas": [0.0, 0.5, 1.0], "ensemble": 3, "energies": [0.0],
     "options": {"half_width": 0.4, "n_energies": 3}},
], ids=lambda c: c["kind"])
def test_every_kind_runs_and_plots(tmp_path, kind_cfg):
    res = run_experiment(load_config(kind_cfg), tmp_path)
    assert (tmp_path / "manifest.json").exists()
    for o in res.outputs:
        assert o.exists()
        head = o.read_text()[:400]
        assert res.manifest["config_hash"] in head
    plottable = [o for o in res.outputs if o.suffix == ".csv" and o.name.startswith(("ids", "wegner", "cauchy", "self_energy_"))]
    if plottable:
        assert emit_plots(plottable, tmp_path / "plots")
