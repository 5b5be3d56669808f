"""Command-line entry point: ``a3gcn <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gcn
from .config import SBM_DEFAULTS, ConfigError, coerce_override, load_config
from .data import BundleError, export_embeddings, generate_sbm, inject_noisy_edges, load_bundle, write_bundle
from .ensemble import feature_matrix, prepare_dataset, run_trial
from .graph import GraphInputError
from .harness import (FIGURES, FigureDataError, emit_figure_data, load_dataset, load_experiment,
                      load_sweep, run_experiment, run_sweep)
from .rng import Stream, make_rng, trial_seed


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key] = coerce_override(value)
    if args.seed is not None:
        out["master_seed"] = args.seed
    if args.trials is not None:
        out["trials"] = args.trials
    if args.select_best_val:
        out["select_best_val"] = True
    return out


def _config(args):
    return load_config(args.config, _overrides(args))


def cmd_run(args) -> int:
    cfg = _config(args)
    if cfg.sweep:
        raise ConfigError("config has a sweep grid; use the 'sweep' subcommand")
    res = run_experiment(cfg, args.out, jobs=args.jobs)
    print(f"{cfg.variant}: test accuracy {100 * res.mean:.2f} +/- {100 * res.std:.2f} "
          f"({len(res.trials)} trials) -> {args.out}/summary.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not cfg.sweep:
        raise ConfigError("config has no 'sweep' grid")
    res = run_sweep(cfg, args.out, jobs=args.jobs)
    for point, r in res.points:
        print(f"{json.dumps(point, sort_keys=True)}: {100 * r.mean:.2f} +/- {100 * r.std:.2f}")
    print(f"{len(res.points)} grid points -> {args.out}/sweep_summary.csv")
    return 0


def _parse_spec(text: str) -> dict:
    p = Path(text)
    raw = json.loads(p.read_text()) if p.is_file() else json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("sbm spec must be a JSON object")
    unknown = set(raw) - set(SBM_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown sbm field(s): {sorted(unknown)}")
    return {**SBM_DEFAULTS, **raw}


def cmd_gen_sbm(args) -> int:
    spec = _parse_spec(args.spec)
    seed = spec.pop("seed")
    ds = generate_sbm(rng=make_rng(seed, Stream.SBM), **spec)
    write_bundle(ds, args.out_dir)
    print(ds.summary_line())
    return 0


def cmd_inject_noise(args) -> int:
    ds = load_bundle(args.bundle)
    noisy = inject_noisy_edges(ds, args.q, make_rng(args.seed or 0, Stream.NOISE))
    write_bundle(noisy, args.out_dir)
    print(noisy.summary_line())
    return 0


def cmd_validate(args) -> int:
    ds = load_bundle(args.bundle)
    print(ds.summary_line())
    print(f"splits: train={ds.train.size} val={ds.val.size} test={ds.test.size}")
    return 0


def cmd_export_embeddings(args) -> int:
    cfg = _config(args)
    if not 1 <= args.epoch <= cfg.max_epochs:
        raise ConfigError(f"epoch must be in [1, {cfg.max_epochs}]")
    ds = load_dataset(cfg)
    seed = trial_seed(cfg.master_seed, args.trial)
    captured = {}

    def hook(state, metrics):
        if metrics.epoch != args.epoch:
            return False
        n = ds.num_nodes
        high = np.zeros(n, dtype=bool)
        agreed = np.zeros(n, dtype=bool)
        if state.last_sets is not None:
            high[state.last_sets.intersection] = True
        if state.last_consensus is not None:
            agreed[state.last_consensus.nodes] = True
        trial_ds = prepare_dataset(cfg, ds, seed)
        x = feature_matrix(trial_ds, cfg.normalize_features)
        captured["emb"] = gcn.hidden_embeddings(state.consensus_model, state.graph, x)
        captured["labels"] = trial_ds.labels
        captured["flags"] = (high, agreed)
        return True

    run_trial(cfg, ds, seed, on_epoch=hook)
    high, agreed = captured["flags"]
    export_embeddings(captured["emb"], captured["labels"], high, agreed, args.out)
    print(f"wrote {captured['emb'].shape[0]} rows to {args.out}")
    return 0


def cmd_figure(args) -> int:
    series = {}
    for item in args.series:
        label, sep, path = item.partition("=")
        if not sep:
            raise FigureDataError(f"series must be LABEL=DIR, got {item!r}")
        loader = load_sweep if args.fig in ("fig-7", "fig-8") else load_experiment
        series[label] = loader(path)
    emit_figure_data(series, args.fig, args.out)
    print(f"{args.fig} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="a3gcn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def config_cmd(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (JSON value)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--trials", type=int)
        p.add_argument("--select-best-val", action="store_true")
        p.set_defaults(fn=fn)
        return p

    for name, fn, h in (("run", cmd_run, "run one experiment"), ("sweep", cmd_sweep, "run a grid sweep")):
        p = config_cmd(name, fn, h)
        p.add_argument("--out", default="results")
        p.add_argument("--jobs", type=int, default=1)

    p = config_cmd("export-embeddings", cmd_export_embeddings, "dump consensus hidden embeddings")
    p.add_argument("epoch", type=int)
    p.add_argument("out")
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("gen-sbm", help="write a planted-partition bundle")
    p.add_argument("spec", help="JSON object or file with generator fields")
    p.add_argument("out_dir")
    p.set_defaults(fn=cmd_gen_sbm)

    p = sub.add_parser("inject-noise", help="replace inter-class edges by q*|E_intra| random ones")
    p.add_argument("bundle")
    p.add_argument("q", type=float)
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_inject_noise)

    p = sub.add_parser("validate", help="load and check a bundle")
    p.add_argument("bundle")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("figure", help="tabulate figure data from result directories")
    p.add_argument("fig", choices=FIGURES)
    p.add_argument("out")
    p.add_argument("series", nargs="+", metavar="LABEL=DIR")
    p.set_defaults(fn=cmd_figure)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, BundleError, FigureDataError, GraphInputError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
