"""
Command-line pipeline: simulate -> filter -> evaluate (+ preview).

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from polgnlm import io as gio
from polgnlm.baselines import boxcar_filter, single_look
from polgnlm.classify import dataset_from_grids, kfold_scores
from polgnlm.core import CovGrid, LabelGrid, OpticalGrid, SlcGrid
from polgnlm.features import extract_features, ndvi
from polgnlm.metrics import channel_enl, mean_frobenius_error
from polgnlm.pgnlm import FilterParams, pgnlm_filter, set_threads
from polgnlm.simulate import (
    NotPositiveDefiniteError,
    SceneSpecError,
    default_scene_path,
    generate_scene,
    load_scene_spec,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _odd(value: str) -> int:
    v = int(value)
    if v < 1 or v % 2 != 1:
        raise argparse.ArgumentTypeError("window must be odd")
    return v


def cmd_simulate(args) -> int:
    spec_path = args.spec or default_scene_path()
    try:
        spec = load_scene_spec(spec_path, seed=args.seed)
    except (SceneSpecError, NotPositiveDefiniteError) as exc:
        raise DataError(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slc, opt, truth = generate_scene(spec)
    w = args.scalar_width
    gio.write_grid(out / "slc.psg", slc, w)
    gio.write_grid(out / "optical.psg", opt, w)
    gio.write_grid(out / "labels.psg", truth.labels, w)
    gio.write_grid(out / "sigma.psg", truth.sigma_field, w)
    counts = {c: int(np.sum(truth.labels.data == c)) for c in sorted(spec.classes)}
    print(f"simulated {spec.height}x{spec.width} scene, seed {spec.seed}, "
          f"{opt.bands} optical bands, pixels per class {counts} -> {out}")
    return EXIT_OK


def _read(path, kind):
    try:
        return gio.read_grid(path, expect=kind)
    except gio.GridFormatError as exc:
        raise DataError(str(exc)) from exc
    except FileNotFoundError as exc:
        raise DataError(f"{path}: no such file") from exc


def cmd_filter(args) -> int:
    slc = _read(args.slc, SlcGrid)
    params = opt = None
    if args.method == "pgnlm":
        if args.optical is None:
            raise UsageError("--optical is required for method pgnlm")
        opt = _read(args.optical, OpticalGrid)
        if opt.shape != slc.shape:
            raise DataError(f"dimension mismatch: SAR {slc.shape} vs optical {opt.shape}")
        try:
            params = FilterParams.from_windows(
                args.search, args.patch, gamma=args.gamma, lam=args.lam,
                tau_sar=args.tau_sar, n_min=args.n_min)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            if args.method == "none":
                cov = single_look(slc)
            elif args.method == "boxcar":
                cov = boxcar_filter(slc, args.window)
            else:
                cov = pgnlm_filter(slc, opt, params, threads=args.threads)
    except ValueError as exc:
        # grids reject non-finite values, so overflow surfaces here
        raise FloatingPointError(str(exc)) from exc
    gio.write_grid(args.out, cov, args.scalar_width)
    print(f"{args.method}: wrote {cov.height}x{cov.width} covariance grid -> {args.out}")
    return EXIT_OK


def region_ids(labels: np.ndarray) -> np.ndarray:
    """Connected same-label components, numbered in row-major order of appearance."""
    from scipy import ndimage

    out = np.full(labels.shape, -1, dtype=np.int64)
    nxt = 0
    for c in np.unique(labels[labels >= 0]):
        comp, n = ndimage.label(labels == c)
        out[comp > 0] = comp[comp > 0] - 1 + nxt
        nxt += n
    return out


def _score_rows(dataset_name, filter_name, feats, labels, args, groups):
    data = dataset_from_grids(feats, labels, per_class_cap=args.per_class_cap,
                              seed=args.seed, groups=groups)
    scores = kfold_scores(data, args.k, args.trees, args.seed,
                          by_group=args.fold_by_region, threads=args.threads)
    rows = [(dataset_name, filter_name, f, s) for f, s in enumerate(scores)]
    rows.append((dataset_name, filter_name, "mean", float(np.mean(scores))))
    return rows


def cmd_evaluate(args) -> int:
    cov = _read(args.cov, CovGrid)
    labels = _read(args.labels, LabelGrid)
    if labels.shape != cov.shape:
        raise DataError(f"dimension mismatch: labels {labels.shape} vs covariance {cov.shape}")
    set_threads(args.threads)
    groups = region_ids(labels.data) if args.fold_by_region else None
    filter_name = args.filter_name or Path(args.cov).stem
    try:
        rows = _score_rows(args.dataset_name, filter_name,
                           extract_features(cov, db=args.db), labels.data, args, groups)
        if args.optical:
            opt = _read(args.optical, OpticalGrid)
            if opt.shape != cov.shape:
                raise DataError(f"dimension mismatch: optical {opt.shape} vs covariance {cov.shape}")
            rows += _score_rows(args.dataset_name, "optical", opt.data, labels.data, args, groups)
            nd = ndvi(opt, args.red_band, args.nir_band)[..., None]
            rows += _score_rows(args.dataset_name, "ndvi", nd, labels.data, args, groups)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    gio.write_accuracy_csv(args.report, rows)
    for name, filt, fold, acc in rows:
        if fold == "mean":
            print(f"{name} {filt}: mean {args.k}-fold accuracy {acc:.4f}")

    if args.sigma:
        sigma = _read(args.sigma, CovGrid)
        if sigma.shape != cov.shape:
            raise DataError(f"dimension mismatch: sigma {sigma.shape} vs covariance {cov.shape}")
        metrics = {"mean_frobenius_error": mean_frobenius_error(cov, sigma, args.margin)}
        for c in np.unique(labels.data[labels.data >= 0]):
            mask = labels.data == c
            if args.margin > 0:
                from scipy import ndimage
                mask = ndimage.binary_erosion(mask, iterations=args.margin, border_value=0)
            if mask.sum() < 2:
                continue
            for ch, v in zip(("hh", "hv", "vv"), channel_enl(cov, mask)):
                metrics[f"enl_{ch}_class{c}"] = v
        if args.metrics:
            gio.write_metrics_csv(args.metrics, metrics)
        for k, v in metrics.items():
            print(f"{k} {v:.6g}")
    return EXIT_OK


def cmd_preview(args) -> int:
    cov = _read(args.cov, CovGrid)
    if args.channel:
        try:
            gio.write_pgm(args.out, gio.cov_channel(cov, args.channel))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        gio.write_png_composite(args.out, cov)
    print(f"preview -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="polgnlm", description=__doc__.splitlines()[1])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic scene")
    s.add_argument("spec", nargs="?", help="scene config (YAML); defaults to the shipped forest scene")
    s.add_argument("out_dir", nargs="?", default="scene")
    s.add_argument("--seed", type=int, default=None, help="override the config seed")
    s.add_argument("--scalar-width", type=int, choices=(4, 8), default=8)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("filter", help="estimate covariance grids")
    f.add_argument("--slc", default="scene/slc.psg")
    f.add_argument("--optical", default="scene/optical.psg")
    f.add_argument("--method", choices=("pgnlm", "boxcar", "none"), default="pgnlm")
    f.add_argument("--search", type=_odd, default=39, help="search window width (odd)")
    f.add_argument("--patch", type=_odd, default=9, help="patch width (odd)")
    f.add_argument("--gamma", type=float, default=0.85)
    f.add_argument("--lam", type=float, default=0.5)
    f.add_argument("--tau-sar", type=float, default=FilterParams.tau_sar,
                   help="SAR dissimilarity cutoff; 'inf' disables pruning")
    f.add_argument("--n-min", type=int, default=FilterParams.n_min)
    f.add_argument("--window", type=_odd, default=5, help="boxcar window (odd)")
    f.add_argument("--threads", type=int, default=None)
    f.add_argument("--scalar-width", type=int, choices=(4, 8), default=8)
    f.add_argument("--out", default="cov.psg")
    f.set_defaults(func=cmd_filter)

    e = sub.add_parser("evaluate", help="random-forest accuracy and estimation metrics")
    e.add_argument("--cov", default="cov.psg")
    e.add_argument("--labels", default="scene/labels.psg")
    e.add_argument("--sigma", default=None)
    e.add_argument("--optical", default=None, help="also score optical bands and NDVI")
    e.add_argument("--red-band", type=int, default=0)
    e.add_argument("--nir-band", type=int, default=3)
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--trees", type=int, default=200)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--per-class-cap", type=int, default=None)
    e.add_argument("--fold-by-region", action="store_true")
    e.add_argument("--db", action="store_true", help="intensities in dB before classification")
    e.add_argument("--margin", type=int, default=0, help="border pixels excluded from metrics")
    e.add_argument("--dataset-name", default="synthetic")
    e.add_argument("--filter-name", default=None)
    e.add_argument("--threads", type=int, default=None)
    e.add_argument("--report", default="accuracy.csv")
    e.add_argument("--metrics", default=None, help="CSV for estimation metrics")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("preview", help="PGM of one channel or RGB PNG of the intensities")
    v.add_argument("--cov", default="cov.psg")
    v.add_argument("--channel", default=None)
    v.add_argument("--out", default="preview.png")
    v.set_defaults(func=cmd_preview)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("polgnlm: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"polgnlm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, gio.GridFormatError, SceneSpecError) as exc:
        print(f"polgnlm: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"polgnlm: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"polgnlm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
