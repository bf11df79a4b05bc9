"""``freeunmix`` command line: ``unmix`` a dataset or run a ``demo`` experiment.

Exit codes: 0 success, 2 bad input (parse errors, missing files, incompatible
options, unwritable output), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments as ex
from .embeddings import rectangular_spec, spectrogram_spec, symmetric_spec
from .evaluation import unmixing_error
from .exceptions import DimensionError, NumericalError, ParseError
from .factorization import fcf, icf, unmix_via_embedding
from .io_formats import read_image_pgm, read_manifest, write_result
from .manifold_opt import OptimizerConfig
from .stack import RECTANGULAR, SELF_ADJOINT, MatrixStack, is_hermitian

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

EMBEDDINGS = ("none", "symmetric", "rectangular", "spectrogram")


def _optimizer_args(p):
    p.add_argument("--restarts", type=int, default=5, help="optimizer restarts (default 5)")
    p.add_argument("--max-iters", type=int, default=1000, help="iterations per restart")
    p.add_argument("--grad-tol", type=float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freeunmix", description="Unmix additive mixtures of matrices."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    u = sub.add_parser("unmix", help="factorize the dataset described by a manifest")
    u.add_argument("--input", required=True, type=Path, help="JSON dataset manifest")
    u.add_argument("--method", choices=ex.METHODS, default="fca-kurtosis")
    u.add_argument("--embed", choices=EMBEDDINGS, default="none")
    u.add_argument("--seed", type=int, default=None, help="overrides the manifest seed")
    u.add_argument("--out", required=True, type=Path, help="output directory")
    u.add_argument("--target-dim", type=int, default=None, help="symmetric embedding size")
    u.add_argument("--target-rows", type=int, default=None)
    u.add_argument("--target-cols", type=int, default=None)
    u.add_argument("--window", type=int, default=250, help="STFT window length")
    u.add_argument("--hop", type=int, default=125, help="STFT hop")
    u.add_argument("--dft", type=int, default=256, help="STFT DFT length")
    _optimizer_args(u)

    d = sub.add_parser("demo", help="run a desk-scale experiment")
    d.add_argument("--experiment", required=True, choices=ex.EXPERIMENTS)
    d.add_argument("--trials", type=int, default=20)
    d.add_argument("--n", type=int, default=800, help="matrix rows (largest N for convergence)")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True, type=Path)
    d.add_argument("--image", type=Path, default=None, help="PGM for image-denoise/landscape")
    _optimizer_args(d)
    return parser


def _config(args, seed):
    return OptimizerConfig(
        max_iters=args.max_iters,
        grad_tol=args.grad_tol,
        restarts=args.restarts,
        rng_seed=seed,
    )


# -- unmix ------------------------------------------------------------------


def _stack_kind(arrays, declared):
    if declared is not None:
        if declared not in (SELF_ADJOINT, RECTANGULAR):
            raise ParseError(f"unknown stack_kind {declared!r}")
        return declared
    if all(a.ndim == 2 and a.shape[0] == a.shape[1] and is_hermitian(a) for a in arrays):
        return SELF_ADJOINT
    return RECTANGULAR


def _rect_target(n_entries, rows, cols):
    if rows is None and cols is None:
        rows = math.isqrt(n_entries)
        rows += rows * rows < n_entries
    if rows is None:
        rows = -(-n_entries // cols)
    if cols is None:
        cols = -(-n_entries // rows)
    return rows, cols


def _unmix(args) -> int:
    manifest = read_manifest(args.input)
    seed = manifest.seed if args.seed is None else args.seed
    arrays, _ = manifest.load_components()
    signals = arrays[0].ndim == 1
    raw = np.stack([a[None, :] if signals else a for a in arrays])
    A = manifest.mixing_matrix
    if A is not None:
        raw = np.tensordot(A, raw, axes=(1, 0))
    cfg = _config(args, seed)
    kind = ex.method_kind(args.method)

    if args.embed == "none":
        stack_kind = _stack_kind(list(raw), manifest.stack_kind)
        Z = MatrixStack(raw, stack_kind)
        kind = ex.method_kind(args.method, stack_kind == SELF_ADJOINT)
        result = icf(Z, kind, cfg) if kind.is_scalar else fcf(Z, kind, cfg)
        A_hat = result.mixing_estimate
    else:
        shape = raw.shape[1:]
        if args.embed == "spectrogram":
            spec = spectrogram_spec(args.window, args.hop, args.dft)
            source = [z.ravel() for z in raw]
        elif args.embed == "symmetric":
            spec = symmetric_spec(shape, args.target_dim, seed=seed)
            source = MatrixStack(raw, RECTANGULAR)
            kind = ex.method_kind(args.method, self_adjoint=True)
        else:
            rows, cols = _rect_target(shape[0] * shape[1], args.target_rows, args.target_cols)
            spec = rectangular_spec(shape, rows, cols, seed=seed)
            source = MatrixStack(raw, RECTANGULAR)
        A_hat, unmixed, result = unmix_via_embedding(source, spec, kind, cfg, full_output=True)
        unmixed = np.asarray(unmixed).reshape(raw.shape)
        result = dataclasses.replace(result, components=MatrixStack(unmixed, RECTANGULAR))

    error = None if A is None else unmixing_error(A, A_hat).error
    extra = {
        "method": args.method,
        "embed": args.embed,
        "input": str(args.input),
        "mixing_matrix": None if A is None else A,
        "config": dataclasses.asdict(cfg),
    }
    images = all(ref.kind == "pgm" for ref in manifest.components)
    write_result(result, args.out, error=error, seed=seed, images=images, extra=extra)
    err_text = "n/a" if error is None else f"{error:.6g}"
    print(
        f"method={args.method} error={err_text} iters={result.trace.iterations} "
        f"converged={str(bool(result.trace.converged)).lower()}"
    )
    return EXIT_OK


# -- demo -------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _demo(args) -> int:
    if args.trials < 1 or args.n < 2:
        raise ParseError("--trials must be >= 1 and --n >= 2")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg = _config(args, args.seed)
    image = read_image_pgm(args.image) if args.image is not None else None
    name = args.experiment
    summary = {
        "experiment": name,
        "config": {
            "trials": args.trials,
            "n": args.n,
            "seed": args.seed,
            "image": None if args.image is None else str(args.image),
            "threads": ex.thread_count(),
            "optimizer": ex.config_dict(cfg),
        },
    }
    started = time.perf_counter()

    if name == "landscape":
        rows = ex.landscape(image, seed=args.seed)
        summary["config"]["mixing_matrix"] = ex.ORTHOGONAL_MIXING.tolist()
        summary["config"]["points"] = len(rows)
        _write_csv(out / f"{name}.csv", ["theta", "abs_c", "abs_kappa", "E"],
                   [[_fmt(v) for v in r] for r in rows])
        summary["results"] = {
            "argmax_theta": {
                col: float(rows[int(np.argmax(rows[:, j])), 0])
                for j, col in ((1, "abs_c"), (2, "abs_kappa"), (3, "E"))
            }
        }
    else:
        if name == "sa-separation":
            records = ex.sa_separation(args.trials, args.n, args.seed, cfg=cfg)
            mixing = ex.SA_MIXING
        elif name == "rect-separation":
            records = ex.rect_separation(args.trials, args.n, args.seed, cfg=cfg, m=args.n * 5 // 4)
            mixing = ex.SA_MIXING
        elif name == "image-denoise":
            records = ex.image_denoise(args.trials, image, args.seed, cfg=cfg)
            mixing = ex.ORTHOGONAL_MIXING
        elif name == "waveform":
            records = ex.waveform(args.seed, cfg=cfg)
            mixing = ex.ORTHOGONAL_MIXING
        else:
            records = ex.convergence(args.trials, args.n, args.seed, cfg=cfg)
            mixing = ex.ORTHOGONAL_MIXING
        summary["config"]["mixing_matrix"] = mixing.tolist()
        means = ex.mean_errors(records)
        rows = [[r.method, r.n, r.m, r.trial, _fmt(r.error)] for r in records]
        if name != "convergence":
            rows += [[method, n, "", "mean", _fmt(v)] for (method, n), v in means.items()]
        _write_csv(out / f"{name}.csv", ["method", "n", "m", "trial", "error"], rows)
        results = {f"{method}@{n}": v for (method, n), v in means.items()}
        if name == "convergence":
            _write_csv(
                out / "convergence_means.csv",
                ["method", "n", "mean_error"],
                [[method, n, _fmt(v)] for (method, n), v in means.items()],
            )
            slopes = {}
            for method in sorted({k[0] for k in means}):
                ns = [n for (m_, n) in means if m_ == method]
                slopes[method] = ex.loglog_slope(ns, [means[(method, n)] for n in ns])
            results["loglog_slope"] = slopes
        if name == "image-denoise":
            fca = {r.trial: r.error for r in records if r.method == "fca-kurtosis"}
            ica = {r.trial: r.error for r in records if r.method == "ica-kurtosis"}
            results["fca_better_trials"] = sum(fca[t] < ica[t] for t in fca)
        summary["results"] = results

    (out / f"{name}.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    for key, value in summary["results"].items():
        print(f"{key}: {value}")
    print(f"wrote {out / (name + '.csv')} in {time.perf_counter() - started:.1f}s")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = _unmix if args.command == "unmix" else _demo
    try:
        return handler(args)
    except (ParseError, DimensionError, FileNotFoundError, PermissionError,
            IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # incompatible method / embedding / data kind combinations
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
