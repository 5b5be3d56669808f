import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from a3gcn import cli, harness
from a3gcn.config import ConfigError, ExperimentConfig, make_config
from a3gcn.data import read_embeddings, write_bundle

SMALL_SBM = {"sbm": {"num_nodes": 90, "num_classes": 3, "p_intra": 0.15, "p_inter": 0.01,
                     "feature_dim": 10, "feature_noise": 0.5, "seed": 2}}


def tiny(**kw):
    base = dict(dataset=SMALL_SBM, k=3, max_epochs=6, trials=3)
    base.update(kw)
    return make_config(base)


def write_config(tmp_path, **kw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(tiny(**kw).to_dict()))
    return p


def test_summary_uses_sample_std(tmp_path):
    res = harness.run_experiment(tiny(), tmp_path)
    acc = [t.test_acc for t in res.trials]
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["test_acc_mean"] == pytest.approx(np.mean(acc), abs=1e-15)
    assert summary["test_acc_std"] == pytest.approx(np.std(acc, ddof=1), abs=1e-15)


def test_summary_records_every_field(tmp_path):
    harness.run_experiment(tiny(), tmp_path)
    cfg = json.loads((tmp_path / "summary.json").read_text())["config"]
    assert set(cfg) == {f.name for f in dataclasses.fields(ExperimentConfig)}


def test_epoch_csv_round_trip(tmp_path):
    res = harness.run_experiment(tiny(), tmp_path)
    back = harness.load_experiment(tmp_path)
    assert len(back.trials) == 3
    for a, b in zip(res.trials, back.trials):
        assert [m.test_acc for m in a.epochs] == [m.test_acc for m in b.epochs]
        assert [m.theta for m in a.epochs] == [m.theta for m in b.epochs]
    header = (tmp_path / "trial_00.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == harness.EPOCH_COLUMNS


def _tree(path):
    return {p.relative_to(path): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_rerun_is_byte_identical(tmp_path):
    harness.run_experiment(tiny(), tmp_path / "a")
    harness.run_experiment(tiny(), tmp_path / "b")
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_parallel_matches_serial(tmp_path):
    harness.run_experiment(tiny(trials=2), tmp_path / "a")
    harness.run_experiment(tiny(trials=2), tmp_path / "b", jobs=2)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_sweep_grid(tmp_path):
    cfg = tiny(trials=2, max_epochs=3, sweep={"k": [1, 3, 5], "alpha": [0.0, 0.1]})
    res = harness.run_sweep(cfg, tmp_path)
    assert len(res.points) == 6
    rows = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert rows[0] == "point,k,alpha,test_acc_mean,test_acc_std,trials"
    assert len(rows) == 7
    assert {(p["k"], p["alpha"]) for p, _ in res.points} == {(k, a) for k in (1, 3, 5) for a in (0.0, 0.1)}
    back = harness.load_sweep(tmp_path)
    assert [r.mean for _, r in back.points] == [r.mean for _, r in res.points]


def test_sweep_rejects_unknown_key():
    with pytest.raises(ConfigError):
        tiny(sweep={"lr": [0.1]})


def test_figure_shapes(tmp_path):
    res = harness.run_experiment(tiny(trials=2), tmp_path / "a3")
    base = harness.run_experiment(tiny(trials=2, variant="baseline-gcn"), tmp_path / "base")
    for fig, ncols in (("fig-4", 3), ("fig-5", 5), ("fig-6", 3)):
        header, rows = harness.figure_rows({"a3": res, "gcn": base}, fig)
        assert len(header) == ncols
        assert len(rows) == 2 * 6
    sweep = harness.run_sweep(tiny(trials=2, max_epochs=3, sweep={"noise_q": [0.0, 0.5]}), tmp_path / "sw")
    header, rows = harness.figure_rows({"a3": sweep}, "fig-8")
    assert header == ["series", "noise_q", "test_acc_mean", "test_acc_std"]
    assert [r[1] for r in rows] == [0.0, 0.5]
    header, rows = harness.figure_rows({"a3": sweep}, "fig-7")
    assert len(rows) == 2


def test_figure_needs_right_kind(tmp_path):
    res = harness.run_experiment(tiny(trials=2), tmp_path)
    with pytest.raises(harness.FigureDataError):
        harness.figure_rows({"a3": res}, "fig-8")
    sweep = harness.run_sweep(tiny(trials=2, max_epochs=3, sweep={"k": [1, 3]}), tmp_path / "sw")
    with pytest.raises(harness.FigureDataError):
        harness.figure_rows({"a3": sweep}, "fig-4")
    with pytest.raises(harness.FigureDataError):
        harness.figure_rows({"a3": sweep}, "fig-8")


# ---------------------------------------------------------------- cli

def test_cli_run(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--trials", "2", "--seed", "4"]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["master_seed"] == 4 and len(summary["trials"]) == 2
    assert "test accuracy" in capsys.readouterr().out


def test_cli_set_override(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--set", "variant=ablation-fixed-theta(0.9)",
              "--set", "k=2"])
    c = json.loads((tmp_path / "o" / "summary.json").read_text())["config"]
    assert c["variant"] == "ablation-fixed-theta" and c["theta_init"] == 0.9 and c["k"] == 2


def test_cli_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["run", str(cfg), "--set", "bogus=1"]) == 1
    assert "ConfigError" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 1


def test_cli_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_cli_gen_validate_noise(tmp_path, capsys):
    spec = json.dumps(SMALL_SBM["sbm"])
    assert cli.main(["gen-sbm", spec, str(tmp_path / "b")]) == 0
    capsys.readouterr()
    assert cli.main(["validate", str(tmp_path / "b")]) == 0
    out = capsys.readouterr().out
    assert "90" in out and "train=" in out
    assert cli.main(["inject-noise", str(tmp_path / "b"), "0.5", str(tmp_path / "n")]) == 0
    (tmp_path / "b" / "meta.json").unlink()
    assert cli.main(["validate", str(tmp_path / "b")]) == 1
    assert "MissingFileError" in capsys.readouterr().err


def test_cli_export_embeddings_flags(tmp_path, small_sbm):
    bundle = write_bundle(small_sbm, tmp_path / "b")
    cfg = write_config(tmp_path, dataset=str(bundle), max_epochs=8, alpha=0.5, theta_init=0.7, trials=1)
    out = tmp_path / "emb.csv"
    assert cli.main(["export-embeddings", str(cfg), "5", str(out)]) == 0
    mat, lab, hc, ag = read_embeddings(out)
    assert mat.shape == (small_sbm.num_nodes, 16)
    np.testing.assert_array_equal(lab, small_sbm.labels)
    res = harness.run_experiment(make_config(json.loads(cfg.read_text())))
    m = res.trials[0].epochs[4]
    assert int(hc.sum()) == m.n_intersection
    assert int(ag.sum()) == m.n_consensus
    assert cli.main(["export-embeddings", str(cfg), "99", str(out)]) == 1


def test_cli_figure(tmp_path):
    cfg = write_config(tmp_path, trials=2)
    cli.main(["run", str(cfg), "--out", str(tmp_path / "r")])
    assert cli.main(["figure", "fig-6", str(tmp_path / "f.csv"), f"a3={tmp_path / 'r'}"]) == 0
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "series,epoch,theta" and len(lines) == 7
    assert cli.main(["figure", "fig-8", str(tmp_path / "g.csv"), f"a3={tmp_path / 'r'}"]) == 1


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "a3gcn.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("run", "sweep", "export-embeddings", "gen-sbm", "inject-noise", "validate", "figure"):
        assert sub in out.stdout
