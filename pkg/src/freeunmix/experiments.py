"""Desk-scale reproductions of the separation experiments.

Every trial ``i`` of a run with base seed ``seed`` draws its random
components from ``stream(seed + i, j)`` (``j`` the component index) and seeds
its optimizer restarts with ``seed + i``, so trials are independent of each
other and of the order in which they run. Trials execute on a thread pool
whose size is capped by ``FREEUNMIX_THREADS`` (0 or unset means one worker
per CPU); results are sorted before they are returned.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .datagen import EnsembleSpec, gaussian, mix, normalize_component, sample, stream, synth_waveform
from .embeddings import spectrogram_spec
from .evaluation import unmixing_error
from .factorization import fcf, icf, unmix_via_embedding
from .free_stats import classical_kurtosis, free_entropy_rect, free_kurtosis_rect
from .io_formats import read_image_pgm
from .manifold_opt import OptimizerConfig
from .stack import MatrixStack, ObjectiveKind
from .whitening import whiten, whiten_vectorized

__all__ = [
    "EXPERIMENTS",
    "METHODS",
    "SA_MIXING",
    "ORTHOGONAL_MIXING",
    "Record",
    "default_texture",
    "method_kind",
    "run_trials",
    "sa_separation",
    "rect_separation",
    "image_denoise",
    "waveform",
    "convergence",
    "landscape",
    "loglog_slope",
]

EXPERIMENTS = (
    "sa-separation",
    "rect-separation",
    "image-denoise",
    "waveform",
    "convergence",
    "landscape",
)
METHODS = ("fca-kurtosis", "fca-entropy", "ica-kurtosis", "ica-entropy")

SA_MIXING = np.array([[0.5, 0.5], [-0.5, 0.6]])
ORTHOGONAL_MIXING = np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2.0)

LANDSCAPE_POINTS = 720
WAVE_LENGTH = 8000
WAVE_PERIODS = {"square": 160.0, "sawtooth": 237.0}


@dataclass(frozen=True)
class Record:
    """One unmixing error; ``n``/``m`` are the source matrix dimensions."""

    method: str
    trial: int
    n: int
    m: int
    error: float


def method_kind(method, self_adjoint=False) -> ObjectiveKind:
    """Objective behind a CLI method name for a given stack kind."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    family, contrast = method.split("-")
    if family == "ica":
        if contrast == "kurtosis":
            return ObjectiveKind.SCALAR_KURTOSIS
        return ObjectiveKind.SCALAR_NEGENTROPY
    if self_adjoint:
        return ObjectiveKind.SA_KURTOSIS if contrast == "kurtosis" else ObjectiveKind.SA_ENTROPY
    return ObjectiveKind.RECT_KURTOSIS if contrast == "kurtosis" else ObjectiveKind.RECT_ENTROPY


def _factorize(method, Z, cfg):
    kind = method_kind(method, Z.kind == "self-adjoint")
    if kind.is_scalar:
        return icf(Z, kind, cfg)
    return fcf(Z, kind, cfg)


def thread_count() -> int:
    raw = os.environ.get("FREEUNMIX_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FREEUNMIX_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError("FREEUNMIX_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def run_trials(fn, jobs):
    """Map ``fn`` over ``jobs`` on the trial pool, preserving job order."""
    jobs = list(jobs)
    workers = min(thread_count(), max(len(jobs), 1))
    if workers == 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _sorted(records):
    return sorted(records, key=lambda r: (r.method, r.n, r.trial))


def _trial_config(cfg, seed):
    cfg = cfg or OptimizerConfig()
    return OptimizerConfig(
        max_iters=cfg.max_iters,
        grad_tol=cfg.grad_tol,
        initial_step=cfg.initial_step,
        restarts=cfg.restarts,
        rng_seed=seed,
    )


def _separate(sources, A, methods, trial, seed, cfg):
    Z = mix(sources, A)
    out = []
    tcfg = _trial_config(cfg, seed + trial)
    for method in methods:
        result = _factorize(method, Z, tcfg)
        err = unmixing_error(A, result.mixing_estimate).error
        out.append(Record(method, trial, sources.rows, sources.cols, err))
    return out


def sa_separation(trials=20, n=800, seed=0, methods=("fca-kurtosis", "fca-entropy"), cfg=None, m=None):
    """GOE (``N x N``) plus Wishart (``N x M`` factor, ``M = 2N``) mixed by ``SA_MIXING``."""
    m = 2 * n if m is None else m

    def trial(i):
        X1 = sample(EnsembleSpec("GOE", n), stream(seed + i, 0))
        X2 = sample(EnsembleSpec("Wishart", n, m), stream(seed + i, 1))
        return _separate(MatrixStack.from_matrices([X1, X2], "self-adjoint"), SA_MIXING, methods, i, seed, cfg)

    return _sorted(r for rs in run_trials(trial, range(trials)) for r in rs)


def dct_source(n, m):
    """Normalised ``U D V^T`` source with spectrum ``f(x) = (x - 1)^4``."""
    return normalize_component(
        sample(EnsembleSpec("DCT-spectrum", n, m, spectrum_fn=lambda x: (x - 1.0) ** 4))
    )


def rect_separation(trials=20, n=800, seed=0, methods=("fca-kurtosis", "fca-entropy"), cfg=None, m=None):
    """Deterministic DCT-spectrum matrix plus an iid Gaussian one, mixed by ``SA_MIXING``."""
    m = int(round(n / 0.8)) if m is None else m
    X1 = dct_source(n, m)

    def trial(i):
        X2 = sample(EnsembleSpec("iid-Gaussian", n, m), stream(seed + i, 1))
        return _separate(MatrixStack.from_matrices([X1, X2]), SA_MIXING, methods, i, seed, cfg)

    return _sorted(r for rs in run_trials(trial, range(trials)) for r in rs)


def default_texture() -> np.ndarray:
    """The bundled 256 x 256 grayscale texture, scaled to ``[0, 1]``."""
    ref = resources.files("freeunmix") / "data" / "texture.pgm"
    with resources.as_file(ref) as path:
        return read_image_pgm(path)


def image_denoise(trials=20, image=None, seed=0, methods=("fca-kurtosis", "ica-kurtosis"), cfg=None):
    """An image plus matched-variance Gaussian noise, mixed orthogonally.

    Both sources are centred and scaled to ``Tr(X X^T)/N = 1``, which gives
    the noise entries the same variance as the centred image pixels.
    """
    image = default_texture() if image is None else np.asarray(image, dtype=float)
    X1 = normalize_component(image)
    n, m = X1.shape

    def trial(i):
        X2 = normalize_component(gaussian(stream(seed + i, 1), (n, m)))
        sources = MatrixStack.from_matrices([X1, X2])
        return _separate(sources, ORTHOGONAL_MIXING, methods, i, seed, cfg)

    return _sorted(r for rs in run_trials(trial, range(trials)) for r in rs)


def waveform(seed=0, methods=METHODS, cfg=None, length=WAVE_LENGTH, A=ORTHOGONAL_MIXING):
    """Square and sawtooth waves mixed by ``A``.

    FCA runs on the spectrogram embedding of the mixtures; ICA runs on the
    raw samples. Errors are against the true ``A``.
    """
    signals = [synth_waveform(kind, length, period) for kind, period in WAVE_PERIODS.items()]
    Z = np.asarray(A) @ np.stack(signals)
    spec = spectrogram_spec(250, 125, 256)
    tcfg = _trial_config(cfg, seed)
    out = []
    for method in methods:
        kind = method_kind(method)
        if kind.is_scalar:
            A_hat = icf(MatrixStack(Z[:, None, :], "rectangular"), kind, tcfg).mixing_estimate
        else:
            A_hat, _ = unmix_via_embedding(list(Z), spec, kind, tcfg)
        out.append(Record(method, 0, 1, length, unmixing_error(A, A_hat).error))
    return _sorted(out)


def convergence(trials=20, n_max=800, seed=0, methods=METHODS, cfg=None, ratio=0.8, levels=4):
    """Errors for ``N = n_max / 2^k`` (``k < levels``) at fixed ``N/M``.

    Sources are the normalised DCT-spectrum matrix and normalised iid
    Gaussian noise, mixed by ``ORTHOGONAL_MIXING``.
    """
    sizes = [n_max // 2**k for k in reversed(range(levels))]
    records = []
    for n in sizes:
        m = int(round(n / ratio))
        X1 = dct_source(n, m)

        def trial(i, n=n, m=m, X1=X1):
            X2 = normalize_component(sample(EnsembleSpec("iid-Gaussian", n, m), stream(seed + i, 1)))
            sources = MatrixStack.from_matrices([X1, X2])
            return _separate(sources, ORTHOGONAL_MIXING, methods, i, seed, cfg)

        records += [r for rs in run_trials(trial, range(trials)) for r in rs]
    return _sorted(records)


def mean_errors(records):
    """``{(method, n): mean error}`` in sorted key order."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.n), []).append(r.error)
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}


def loglog_slope(ns, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(n)``."""
    return float(np.polyfit(np.log(ns), np.log(errors), 1)[0])


def landscape(image=None, seed=0, points=LANDSCAPE_POINTS):
    """Objective landscapes over rotation angle for image + noise.

    Returns an array with columns ``theta, |c(theta)|, |kappa(theta)|,
    E(theta)``: classical kurtosis of ``cos t z1 + sin t z2`` (ICA-whitened
    vectors), free rectangular kurtosis of ``cos t Z1 + sin t Z2``
    (whitened matrices) and the negated free entropy summed over both rows
    of the rotation ``W(theta)``.
    """
    image = default_texture() if image is None else np.asarray(image, dtype=float)
    X1 = normalize_component(image)
    X2 = normalize_component(gaussian(stream(seed, 1), X1.shape))
    Z = mix(MatrixStack.from_matrices([X1, X2]), ORTHOGONAL_MIXING)
    Zw = whiten(Z).whitened.data
    zw = whiten_vectorized(Z).whitened.data.reshape(2, -1)
    thetas = 2.0 * np.pi * np.arange(points) / points
    rows = np.empty((points, 4))
    for k, t in enumerate(thetas):
        c, s = math.cos(t), math.sin(t)
        first = c * Zw[0] + s * Zw[1]
        second = -s * Zw[0] + c * Zw[1]
        rows[k] = (
            t,
            abs(classical_kurtosis(c * zw[0] + s * zw[1])),
            abs(free_kurtosis_rect(first)),
            -free_entropy_rect(first) - free_entropy_rect(second),
        )
    return rows


def config_dict(cfg) -> dict:
    return asdict(cfg or OptimizerConfig())
