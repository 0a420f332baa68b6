"""Command-line driver: ``mist gen|train|eval|ablate|sweep|plot``.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure. Relative
output paths are resolved under ``$MIST_OUTPUT_ROOT`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import model as mlp
from .config import COMBOS, ConfigError, MistConfig, format_config, load_config, parse_overrides
from .datasets import GENERATORS, load_csv, load_labels, save_csv, save_labels
from .evaluation import clustering_accuracy, kmeans
from .plot import scatter_svg
from .trainer import (SWEEP_AXES, SweepCell, prepare, run_ablation, run_sweep, train,
                      write_metrics_csv, write_table_csv)

log = logging.getLogger("mist")

OUTPUT_ROOT_ENV = "MIST_OUTPUT_ROOT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _out_path(p) -> Path:
    p = Path(p)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def _prepare_run_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise UsageError(f"{path} already exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_inputs(args):
    data_path = Path(args.data)
    if not data_path.is_file():
        raise FileNotFoundError(f"data file not found: {data_path}")
    cfg = load_config(args.config) if args.config else MistConfig()
    if args.set:
        cfg = cfg.with_(**parse_overrides(args.set))
    ds = load_csv(data_path, n_clusters=cfg.n_clusters)
    return ds, cfg


def _write_manifest(out: Path, args, cfg: MistConfig, ds, seeds) -> None:
    manifest = {
        "command": ["mist", *sys.argv[1:]] if sys.argv else [],
        "subcommand": args.command,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "data": str(Path(args.data).resolve()),
        "dataset_sha256": ds.digest(),
        "seeds": list(seeds),
        "output_dir": str(out.resolve()),
        "tool_version": __version__,
    }
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.txt").write_text(format_config(cfg))


def _train_one(ds, cfg, seed, sampler, radii, out: Path) -> float:
    cfg = cfg.with_(seed=seed)
    state, report = train(ds, cfg, sampler, radii)
    d = out / f"seed_{seed}"
    d.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(report, d / "metrics.csv")
    save_labels(report.labels, d / "labels.csv")
    adam = mlp.AdamState(lr=cfg.lr)
    mlp.save_checkpoint(d / "checkpoint.npz", state, adam, cfg.digest())
    rep = report.to_dict()
    rep.pop("steps")
    (d / "report.json").write_text(json.dumps(rep, indent=1) + "\n")
    return report.final_acc


def cmd_gen(args) -> int:
    gen = GENERATORS.get(args.dataset)
    if gen is None:
        raise UsageError(f"unknown dataset {args.dataset!r}; choose from {', '.join(GENERATORS)}")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    kw = dict(n=args.n, seed=args.seed)
    if args.noise is not None:
        kw["noise"] = args.noise
    if args.dataset == "two-rings" and args.factor is not None:
        kw["factor"] = args.factor
    try:
        ds = gen(**kw)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    counts = np.bincount(ds.labels)
    print(f"{ds.name}: n={ds.n} d={ds.d} C={ds.n_clusters} balance={'/'.join(map(str, counts))} -> {out}")
    return 0


def cmd_train(args) -> int:
    seeds = _int_list(args.seeds)
    ds, cfg = _load_inputs(args)
    out = _prepare_run_dir(_out_path(args.out), args.force)
    _write_manifest(out, args, cfg, ds, seeds)
    sampler, radii = prepare(ds, cfg, cache_dir=args.cache_dir)
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            accs = list(pool.map(_train_one, *zip(*[(ds, cfg, s, sampler, radii, out) for s in seeds])))
    else:
        accs = [_train_one(ds, cfg, s, sampler, radii, out) for s in seeds]
    if ds.labels is not None:
        for s, a in zip(seeds, accs):
            print(f"seed {s}: ACC {a:.2f}")
        print(f"ACC mean(std) over {len(seeds)} seeds: {np.mean(accs):.1f}({np.std(accs):.1f})")
    else:
        print(f"trained {len(seeds)} seed(s); labels in {out}")
    return 0


def cmd_eval(args) -> int:
    data_path = Path(args.data)
    if not data_path.is_file():
        raise FileNotFoundError(f"data file not found: {data_path}")
    ds = load_csv(data_path, n_clusters=args.n_clusters)
    if ds.labels is None:
        raise UsageError("evaluation needs a data file with a label column")
    C = args.n_clusters or ds.n_clusters
    if args.kmeans:
        pred = kmeans(ds, C, seed=args.seed)
        if args.out:
            save_labels(pred, _out_path(args.out))
        print(f"K-means ACC {clustering_accuracy(ds.labels, pred, C):.2f}")
        return 0
    if not args.labels:
        raise UsageError("pass --labels PATH or --kmeans")
    pred = load_labels(args.labels)
    if pred.shape[0] != ds.n:
        raise ValueError(f"{pred.shape[0]} predicted labels for {ds.n} points")
    C = max(C, int(pred.max()) + 1)
    print(f"ACC {clustering_accuracy(ds.labels, pred, C):.2f}")
    return 0


def _print_table(cells: list[SweepCell], header: str) -> None:
    print(f"{header:>12}  ACC mean(std)")
    for c in cells:
        print(f"{c.label:>12}  {c.summary()}")


def cmd_ablate(args) -> int:
    combos = [c.strip() for c in args.combo.split(",") if c.strip()]
    if not combos:
        raise UsageError("--combo needs at least one combination")
    seeds = _int_list(args.seeds)
    ds, cfg = _load_inputs(args)
    for c in combos:
        try:
            from .config import normalize_combo
            normalize_combo(c)
        except ConfigError as e:
            raise UsageError(str(e)) from None
    out = _prepare_run_dir(_out_path(args.out), args.force)
    _write_manifest(out, args, cfg, ds, seeds)
    cells = [run_ablation(ds, c, cfg, seeds, profile=args.profile, cache_dir=args.cache_dir) for c in combos]
    write_table_csv(cells, out / "ablation.csv", first_column="combo")
    _print_table(cells, "combo")
    return 0


def cmd_sweep(args) -> int:
    if args.axis.lower() not in SWEEP_AXES:
        raise UsageError(f"unsupported axis {args.axis!r}; choose from {', '.join(SWEEP_AXES)}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values needs at least one value")
    try:
        values = [int(v) if args.axis.lower() == "k0" else float(v) for v in values]
    except ValueError:
        raise UsageError(f"cannot parse --values {args.values!r}") from None
    seeds = _int_list(args.seeds)
    ds, cfg = _load_inputs(args)
    out = _prepare_run_dir(_out_path(args.out), args.force)
    _write_manifest(out, args, cfg, ds, seeds)
    cells = run_sweep(ds, args.axis, values, cfg, seeds, cache_dir=args.cache_dir)
    write_table_csv(cells, out / f"sweep_{args.axis.lower()}.csv", first_column=args.axis.lower())
    _print_table(cells, args.axis.lower())
    return 0


def cmd_plot(args) -> int:
    ds = load_csv(args.data)
    if ds.d != 2:
        raise UsageError(f"plot needs 2-D data (got d={ds.d}); it is meant for the synthetic datasets")
    labels = load_labels(args.labels) if args.labels else ds.labels
    if labels is None:
        labels = np.zeros(ds.n, dtype=np.int64)
    if labels.shape[0] != ds.n:
        raise ValueError(f"labels file has {labels.shape[0]} rows for {ds.n} points")
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(scatter_svg(ds.features, labels, title=args.title or ds.name))
    print(f"wrote {out}")
    return 0


def _add_run_args(p, combo=False, sweep=False):
    p.add_argument("--config", help="flat key = value config file (defaults to the Two-Moons setting)")
    p.add_argument("--data", required=True, help="CSV with columns f0..f{d-1}[,label]")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--cache-dir", default=None, help="directory for cached geodesic tables")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mist", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset as CSV")
    g.add_argument("dataset", help="two-moons or two-rings")
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--noise", type=float, default=None)
    g.add_argument("--factor", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train on a CSV dataset for one or more seeds")
    _add_run_args(t)
    t.add_argument("--jobs", type=int, default=1, help="worker processes for independent seeds")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="clustering accuracy of a labels file, or the K-means baseline")
    e.add_argument("--data", required=True)
    e.add_argument("--labels", default=None, help="CSV index,pred_label")
    e.add_argument("--kmeans", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--n-clusters", type=int, default=None)
    e.add_argument("--out", default=None, help="write K-means labels here")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="train objective-term ablations")
    _add_run_args(a)
    a.add_argument("--combo", required=True, help=f"comma-separated, from {' '.join(COMBOS)}")
    a.add_argument("--profile", choices=("synthetic", "real"), default="synthetic")
    a.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep", help="robustness sweep over one hyperparameter")
    _add_run_args(s)
    s.add_argument("--axis", required=True, help="k0, alpha or gamma")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="SVG scatter of a 2-D dataset coloured by labels")
    pl.add_argument("--data", required=True)
    pl.add_argument("--labels", default=None)
    pl.add_argument("--out", required=True)
    pl.add_argument("--title", default=None)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"mist {args.command}: error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, FloatingPointError) as e:
        print(f"mist {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
