"""Run configured experiments, write metric files, and tabulate figure data.

Output layout under ``out_dir``::

    summary.json         config, per-trial results, mean/std of test accuracy
    trial_XX.csv         one row per epoch (columns: EPOCH_COLUMNS)

A sweep writes one such directory per grid point (``point_XX/``) plus
``sweep_summary.csv``.  Every file is a deterministic function of the config.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .config import SBM_DEFAULTS, ExperimentConfig, make_config
from .data import Dataset, generate_sbm, load_bundle
from .ensemble import EpochMetrics, TrialResult, run_trial
from .rng import Stream, make_rng, trial_seed

log = logging.getLogger(__name__)

EPOCH_COLUMNS = (
    "epoch", "agreement", "theta", "n_intersection", "n_union", "n_consensus",
    "consensus_loss", "consensus_train_size", "val_acc", "test_acc",
    "member_acc_mean", "member_acc_std", "pseudo_correct_ratio",
)
_INT_COLUMNS = {"epoch", "n_intersection", "n_union", "n_consensus", "consensus_train_size"}
FIGURES = ("fig-4", "fig-5", "fig-6", "fig-7", "fig-8")


class FigureDataError(ValueError):
    pass


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialResult]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([t.test_acc for t in self.trials])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        a = self.accuracies
        return float(a.std(ddof=1)) if a.size > 1 else 0.0


@dataclass
class SweepResult:
    config: ExperimentConfig
    points: list[tuple[dict, ExperimentResult]]


def load_dataset(config: ExperimentConfig) -> Dataset:
    if isinstance(config.dataset, str):
        return load_bundle(config.dataset)
    spec = {**SBM_DEFAULTS, **config.dataset["sbm"]}
    seed = spec.pop("seed")
    return generate_sbm(rng=make_rng(seed, Stream.SBM), **spec)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _json_safe(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def write_epoch_csv(epochs: list[EpochMetrics], path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(EPOCH_COLUMNS) + "\n")
        for m in epochs:
            fh.write(",".join(_fmt(getattr(m, c)) for c in EPOCH_COLUMNS) + "\n")


def read_epoch_csv(path: Path) -> list[EpochMetrics]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochMetrics(**{c: (int(r[c]) if c in _INT_COLUMNS else float(r[c])) for c in EPOCH_COLUMNS})
            for r in rows]


def _trial_job(args) -> TrialResult:
    config, ds, seed = args
    return run_trial(config, ds, seed)


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1,
                   dataset: Dataset | None = None) -> ExperimentResult:
    """Run ``config.trials`` trials; write metric files when ``out_dir`` is given."""
    ds = dataset if dataset is not None else load_dataset(config)
    seeds = [trial_seed(config.master_seed, t) for t in range(config.trials)]
    work = [(config, ds, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_trial_job, work))
    else:
        trials = [_trial_job(w) for w in work]
    result = ExperimentResult(config, trials)
    log.info("%s: %.4f +/- %.4f over %d trials", config.variant, result.mean, result.std, len(trials))
    if out_dir is not None:
        write_experiment(result, Path(out_dir))
    return result


def summary_dict(result: ExperimentResult) -> dict:
    member = [t.member_test_acc for t in result.trials]
    member_means = np.mean(member, axis=0).tolist() if member and member[0] else []
    final_ratio = np.array([t.epochs[-1].pseudo_correct_ratio for t in result.trials])
    return _json_safe({
        "config": result.config.to_dict(),
        "test_acc_mean": result.mean,
        "test_acc_std": result.std,
        "member_test_acc_mean": member_means,
        "final_pseudo_correct_ratio_mean": (float(np.nanmean(final_ratio))
                                            if np.isfinite(final_ratio).any() else float("nan")),
        "trials": [
            {
                "trial": i,
                "seed": t.seed,
                "test_acc": t.test_acc,
                "val_acc": t.val_acc,
                "final_epoch_test_acc": t.final_epoch_test_acc,
                "best_val_epoch": t.best_val_epoch,
                "member_test_acc": t.member_test_acc,
            }
            for i, t in enumerate(result.trials)
        ],
    })


def write_experiment(result: ExperimentResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(result.trials):
        write_epoch_csv(t.epochs, out_dir / f"trial_{i:02d}.csv")
    text = json.dumps(summary_dict(result), indent=2, sort_keys=True)
    (out_dir / "summary.json").write_text(text + "\n")


def load_experiment(out_dir) -> ExperimentResult:
    out_dir = Path(out_dir)
    summary = json.loads((out_dir / "summary.json").read_text())
    config = make_config(summary["config"])
    trials = []
    for t in summary["trials"]:
        epochs = read_epoch_csv(out_dir / f"trial_{t['trial']:02d}.csv")
        trials.append(TrialResult(seed=t["seed"], test_acc=_nan(t["test_acc"]), val_acc=_nan(t["val_acc"]),
                                  final_epoch_test_acc=_nan(t["final_epoch_test_acc"]),
                                  best_val_epoch=t["best_val_epoch"],
                                  member_test_acc=[_nan(a) for a in t["member_test_acc"]], epochs=epochs))
    return ExperimentResult(config, trials)


def _nan(v) -> float:
    return float("nan") if v is None else float(v)


# ---------------------------------------------------------------- sweeps

def sweep_points(config: ExperimentConfig) -> list[dict]:
    grid = config.sweep or {}
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def run_sweep(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> SweepResult:
    if not config.sweep:
        raise ValueError("config has no sweep grid")
    base = dataclasses.replace(config, sweep=None).to_dict()
    cache: dict[str, Dataset] = {}
    points = []
    for i, point in enumerate(sweep_points(config)):
        cfg = make_config(base, **point)
        key = json.dumps(cfg.dataset, sort_keys=True)
        if key not in cache:
            cache[key] = load_dataset(cfg)
        sub = None if out_dir is None else Path(out_dir) / f"point_{i:02d}"
        points.append((point, run_experiment(cfg, sub, jobs=jobs, dataset=cache[key])))
    result = SweepResult(config, points)
    if out_dir is not None:
        write_sweep_summary(result, Path(out_dir) / "sweep_summary.csv")
    return result


def write_sweep_summary(result: SweepResult, path: Path) -> None:
    keys = list(result.config.sweep)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["point", *keys, "test_acc_mean", "test_acc_std", "trials"]) + "\n")
        for i, (point, res) in enumerate(result.points):
            vals = [str(point[k]) for k in keys]
            fh.write(",".join([str(i), *vals, _fmt(res.mean), _fmt(res.std), str(len(res.trials))]) + "\n")


def load_sweep(out_dir) -> SweepResult:
    out_dir = Path(out_dir)
    points = []
    for sub in sorted(out_dir.glob("point_*")):
        res = load_experiment(sub)
        points.append(res)
    if not points:
        raise FigureDataError(f"{out_dir} holds no sweep points")
    grid_keys = None
    with open(out_dir / "sweep_summary.csv", newline="") as fh:
        grid_keys = [c for c in next(csv.reader(fh))[1:] if c not in ("test_acc_mean", "test_acc_std", "trials")]
    base = dataclasses.replace(points[0].config, sweep={k: [None] for k in grid_keys})
    return SweepResult(base, [({k: getattr(r.config, k) for k in grid_keys}, r) for r in points])


# ---------------------------------------------------------------- figure data

def _epoch_mean(result: ExperimentResult, attr: str) -> np.ndarray:
    n = min(len(t.epochs) for t in result.trials)
    vals = np.array([[getattr(m, attr) for m in t.epochs[:n]] for t in result.trials], dtype=float)
    with warnings.catch_warnings():
        # epochs where every trial is NaN stay NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(vals, axis=0)


def figure_rows(results: Mapping[str, ExperimentResult | SweepResult], which: str) -> tuple[list[str], list[list]]:
    """Tidy rows for one figure.  ``results`` maps a series label to its run."""
    if which not in FIGURES:
        raise FigureDataError(f"unknown figure {which!r}; choose from {FIGURES}")
    sweep_fig = which in ("fig-7", "fig-8")
    for label, res in results.items():
        if sweep_fig != isinstance(res, SweepResult):
            kind = "a sweep" if sweep_fig else "a single experiment"
            raise FigureDataError(f"{which} needs {kind}; series {label!r} is not one")

    if which == "fig-4":
        header = ["series", "epoch", "pseudo_correct_ratio"]
        rows = [[label, e + 1, v] for label, res in results.items()
                for e, v in enumerate(_epoch_mean(res, "pseudo_correct_ratio"))]
    elif which == "fig-5":
        header = ["series", "epoch", "member_acc_mean", "member_acc_std", "consensus_acc"]
        rows = []
        for label, res in results.items():
            mm, ms, ca = (_epoch_mean(res, a) for a in ("member_acc_mean", "member_acc_std", "test_acc"))
            rows += [[label, e + 1, mm[e], ms[e], ca[e]] for e in range(len(ca))]
    elif which == "fig-6":
        header = ["series", "epoch", "theta"]
        rows = [[label, e + 1, v] for label, res in results.items() for e, v in enumerate(_epoch_mean(res, "theta"))]
    elif which == "fig-7":
        keys = sorted({k for res in results.values() for k in res.config.sweep})
        header = ["series", *keys, "test_acc_mean", "test_acc_std"]
        rows = [[label, *(point.get(k, "") for k in keys), r.mean, r.std]
                for label, res in results.items() for point, r in res.points]
    else:
        header = ["series", "noise_q", "test_acc_mean", "test_acc_std"]
        rows = []
        for label, res in results.items():
            if "noise_q" not in res.config.sweep:
                raise FigureDataError(f"fig-8 needs a sweep over noise_q; series {label!r} lacks it")
            for point, r in res.points:
                extra = [f"{k}={v}" for k, v in point.items() if k != "noise_q"]
                name = label if not extra else f"{label}[{','.join(extra)}]"
                rows.append([name, point["noise_q"], r.mean, r.std])
    return header, rows


def emit_figure_data(results: Mapping[str, ExperimentResult | SweepResult], which: str, path) -> Path:
    header, rows = figure_rows(results, which)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")
    return path
