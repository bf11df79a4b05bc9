"""Reading and writing matrices, images, audio, manifests and results.

Matrix formats
--------------
``csv``
    UTF-8, comma separated, ``.`` decimal point, one matrix row per line.
``f64le``
    16-byte header of two little-endian uint64 (rows, cols) followed by the
    row-major little-endian float64 entries. Round trips are bit exact.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import DimensionError, ParseError, UnsupportedCodecError

__all__ = [
    "read_matrix",
    "write_matrix",
    "read_image_pgm",
    "write_image_pgm",
    "read_audio_wav",
    "write_audio_wav",
    "DatasetManifest",
    "ComponentRef",
    "read_manifest",
    "write_result",
    "SUMMARY_KEYS",
]

MATRIX_FORMATS = ("csv", "f64le")
COMPONENT_KINDS = ("csv", "f64le", "pgm", "wav")
SUMMARY_KEYS = (
    "objective_kind",
    "statistic_per_component",
    "error",
    "iterations",
    "converged",
    "seed",
)

_HEADER = struct.Struct("<QQ")

_WAV_CODECS = {
    0x0001: "PCM",
    0x0002: "Microsoft ADPCM",
    0x0003: "IEEE float",
    0x0006: "A-law",
    0x0007: "mu-law",
    0x0011: "IMA ADPCM",
    0x0031: "GSM 6.10",
    0x0055: "MPEG Layer 3",
    0xFFFE: "extensible",
}


def _format_from(path, fmt):
    if fmt is None:
        suffix = Path(path).suffix.lower().lstrip(".")
        fmt = {"csv": "csv", "f64": "f64le", "f64le": "f64le", "bin": "f64le"}.get(suffix)
        if fmt is None:
            raise ParseError("cannot infer matrix format from extension", path=path)
    if fmt not in MATRIX_FORMATS:
        raise ValueError(f"unknown matrix format {fmt!r}")
    return fmt


def read_matrix(path, format=None) -> np.ndarray:
    """Read a real matrix in ``csv`` or ``f64le`` format.

    Raises
    ------
    ParseError
        On ragged rows, non-numeric tokens (with the 1-based line) or a
        truncated binary payload (with the byte offset).
    """
    fmt = _format_from(path, format)
    if fmt == "csv":
        return _read_csv(path)
    return _read_f64le(path)


def _read_csv(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 ({exc.reason})", path=path) from None
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split(",")
        try:
            row = [float(tok) for tok in tokens]
        except ValueError:
            bad = next(tok for tok in tokens if not _is_float(tok))
            raise ParseError(f"non-numeric token {bad.strip()!r}", path=path, line=lineno) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(
                f"ragged row: {len(row)} values, expected {width}", path=path, line=lineno
            )
        rows.append(row)
    if not rows:
        raise ParseError("empty matrix file", path=path)
    return np.array(rows, dtype=np.float64)


def _is_float(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def _read_f64le(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated header", path=path, offset=len(raw))
    rows, cols = _HEADER.unpack_from(raw, 0)
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) < expected:
        raise ParseError(
            f"truncated payload: {rows}x{cols} needs {expected} bytes",
            path=path,
            offset=len(raw),
        )
    if len(raw) > expected:
        raise ParseError("trailing bytes after payload", path=path, offset=expected)
    data = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return data.reshape(rows, cols).astype(np.float64)


def write_matrix(path, X, format=None):
    """Write a real 2-D matrix; csv uses 17 significant digits."""
    fmt = _format_from(path, format)
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {X.shape}")
    if np.iscomplexobj(X):
        raise DimensionError("matrix formats store real values only")
    X = X.astype(np.float64)
    if fmt == "csv":
        lines = [",".join(repr(float(v)) for v in row) for row in X]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(*X.shape))
            fh.write(X.astype("<f8").tobytes(order="C"))


# -- PGM --------------------------------------------------------------------


def _pgm_tokens(raw, count, start, path):
    """Read ``count`` whitespace separated header tokens, skipping comments."""
    tokens = []
    i = start
    n = len(raw)
    while len(tokens) < count:
        while i < n and raw[i : i + 1].isspace():
            i += 1
        if i < n and raw[i : i + 1] == b"#":
            while i < n and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not raw[j : j + 1].isspace() and raw[j : j + 1] != b"#":
            j += 1
        if j == i:
            raise ParseError("truncated header", path=path, offset=i)
        tokens.append(raw[i:j])
        i = j
    return tokens, i


def read_image_pgm(path) -> np.ndarray:
    """Read a P2 (ASCII) or P5 (binary) graymap scaled to ``[0, 1]``."""
    raw = Path(path).read_bytes()
    magic = raw[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a PGM file (magic {magic!r})", path=path, offset=0)
    tokens, pos = _pgm_tokens(raw, 3, 2, path)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ParseError(f"malformed header {tokens!r}", path=path) from None
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ParseError(
            f"invalid header values width={width} height={height} maxval={maxval}",
            path=path,
        )
    count = width * height
    if magic == b"P2":
        body = raw[pos:].split()
        if len(body) != count:
            raise ParseError(f"expected {count} pixels, found {len(body)}", path=path)
        try:
            pixels = np.array([int(t) for t in body], dtype=np.float64)
        except ValueError:
            raise ParseError("non-integer pixel value", path=path) from None
    else:
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(raw) - pos < need:
            raise ParseError(
                f"truncated raster: need {need} bytes", path=path, offset=len(raw)
            )
        pixels = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).astype(np.float64)
    if pixels.max(initial=0) > maxval:
        raise ParseError("pixel value exceeds maxval", path=path)
    return pixels.reshape(height, width) / maxval


def write_image_pgm(path, X, maxval=255):
    """Write a binary (P5) graymap; values are clipped to ``[0, 1]`` first."""
    X = np.clip(np.asarray(X, dtype=np.float64), 0.0, 1.0)
    q = np.rint(X * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    height, width = X.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        fh.write(q.astype(dtype).tobytes())


# -- WAV --------------------------------------------------------------------


def read_audio_wav(path):
    """Read 16-bit PCM WAV audio; returns ``(signal, sample_rate)``.

    Multi-channel files yield their first channel. Samples are divided by
    32768.

    Raises
    ------
    UnsupportedCodecError
        For any format other than PCM, naming the codec.
    ParseError
        For malformed RIFF structure or truncated data.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file", path=path, offset=0)
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise ParseError(f"truncated {cid!r} chunk", path=path, offset=len(raw))
        if cid == b"fmt ":
            if size < 16:
                raise ParseError("fmt chunk too short", path=path, offset=pos)
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", body)
            if tag == 0xFFFE and size >= 40:
                # WAVE_FORMAT_EXTENSIBLE: the real tag opens the sub-format GUID
                (tag,) = struct.unpack_from("<H", body, 24)
            fmt = (tag, channels, rate, block_align, bits)
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise ParseError("missing fmt chunk", path=path)
    if data is None:
        raise ParseError("missing data chunk", path=path)
    tag, channels, rate, block_align, bits = fmt
    if tag != 1:
        raise UnsupportedCodecError(_WAV_CODECS.get(tag, f"format tag 0x{tag:04x}"), path=path)
    if bits != 16:
        raise UnsupportedCodecError(f"{bits}-bit PCM", path=path)
    if channels < 1 or block_align != 2 * channels:
        raise ParseError("inconsistent channel layout", path=path)
    frames = len(data) // block_align
    samples = np.frombuffer(data, dtype="<i2", count=frames * channels)
    signal = samples.reshape(frames, channels)[:, 0].astype(np.float64) / 32768.0
    return signal, rate


def write_audio_wav(path, signal, sample_rate, channels=1):
    """Write 16-bit PCM audio from samples in ``[-1, 1]``.

    ``signal`` may be 1-D (replicated to ``channels``) or ``(frames, channels)``.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = np.repeat(x[:, None], channels, axis=1)
    pcm = np.clip(np.rint(x * 32768.0), -32768, 32767).astype("<i2")
    nch = pcm.shape[1]
    payload = pcm.tobytes()
    fmt = struct.pack("<HHIIHH", 1, nch, sample_rate, sample_rate * 2 * nch, 2 * nch, 16)
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
        fh.write(b"data" + struct.pack("<I", len(payload)) + payload)


# -- manifests --------------------------------------------------------------


@dataclass
class ComponentRef:
    path: Path
    kind: str


@dataclass
class DatasetManifest:
    """A JSON dataset description.

    ``{"components": [{"path": "a.pgm", "kind": "pgm"}, ...],
    "mixing_matrix": [[...], ...], "seed": 0, "stack_kind": "rectangular"}``

    With ``mixing_matrix`` the components are sources that get mixed and the
    error against the known matrix is reported; without it they are the
    observed mixtures. Relative paths resolve against the manifest's folder.
    """

    components: list
    mixing_matrix: Optional[np.ndarray] = None
    seed: int = 0
    stack_kind: Optional[str] = None
    base_dir: Path = field(default_factory=Path)

    def load_components(self):
        """Load every component; returns ``(arrays, sample_rate or None)``."""
        arrays = []
        rate = None
        for ref in self.components:
            if ref.kind in MATRIX_FORMATS:
                arrays.append(read_matrix(ref.path, ref.kind))
            elif ref.kind == "pgm":
                arrays.append(read_image_pgm(ref.path))
            else:
                signal, rate = read_audio_wav(ref.path)
                arrays.append(signal)
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ParseError(f"component shapes disagree: {sorted(shapes)}")
        return arrays, rate


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError("manifest not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=path, line=exc.lineno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("components"), list):
        raise ParseError("manifest needs a 'components' list", path=path)
    base = path.parent
    refs = []
    for i, entry in enumerate(doc["components"]):
        if isinstance(entry, str):
            entry = {"path": entry}
        if not isinstance(entry, dict) or "path" not in entry:
            raise ParseError(f"component {i} needs a 'path'", path=path)
        cpath = base / entry["path"]
        kind = entry.get("kind") or _kind_from_suffix(cpath)
        if kind not in COMPONENT_KINDS:
            raise ParseError(f"component {i}: unknown kind {kind!r}", path=path)
        if not cpath.is_file():
            raise ParseError(f"component {i}: missing file {cpath}", path=path)
        refs.append(ComponentRef(cpath, kind))
    if not refs:
        raise ParseError("manifest lists no components", path=path)
    A = doc.get("mixing_matrix")
    if A is not None:
        try:
            A = np.array(A, dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError("mixing_matrix is not numeric", path=path) from None
        if A.shape != (len(refs), len(refs)):
            raise ParseError(
                f"mixing_matrix must be {len(refs)}x{len(refs)}, got {A.shape}", path=path
            )
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ParseError("seed must be a non-negative integer", path=path)
    return DatasetManifest(refs, A, seed, doc.get("stack_kind"), base)


def _kind_from_suffix(path):
    suffix = path.suffix.lower().lstrip(".")
    return {"f64": "f64le", "bin": "f64le"}.get(suffix, suffix)


# -- results ----------------------------------------------------------------


def _write_both(directory, stem, X):
    X = np.asarray(X)
    written = []
    parts = [("", X)] if not np.iscomplexobj(X) else [("_re", X.real), ("_im", X.imag)]
    for suffix, part in parts:
        for fmt, ext in (("csv", "csv"), ("f64le", "f64")):
            p = directory / f"{stem}{suffix}.{ext}"
            write_matrix(p, part, fmt)
            written.append(p)
    return written


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def write_result(result, directory, *, error=None, seed=None, images=False, extra=None):
    """Persist a factorization (or an :class:`ErrorReport`) to ``directory``.

    For a factorization: ``mixing_estimate.{csv,f64}``, one
    ``component_<i>.{csv,f64}`` per component (``_re``/``_im`` pairs for
    complex data), optional ``component_<i>.pgm`` images, and
    ``summary.json`` with the keys in :data:`SUMMARY_KEYS` plus ``extra``.

    Returns the list of written paths.
    """
    from .evaluation import ErrorReport

    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"output directory {directory} is not writable")
    written = []
    if isinstance(result, ErrorReport):
        summary = {
            "error": result.error,
            "best_permutation": result.best_permutation.tolist(),
            "best_scaling": result.best_scaling.tolist(),
            "seed": seed,
        }
    else:
        written += _write_both(directory, "mixing_estimate", result.mixing_estimate)
        for i, X in enumerate(result.components.data):
            written += _write_both(directory, f"component_{i}", X)
            if images and not np.iscomplexobj(X):
                p = directory / f"component_{i}.pgm"
                write_image_pgm(p, X)
                written.append(p)
        trace = result.trace
        summary = {
            "objective_kind": result.objective_kind.value,
            "statistic_per_component": result.statistic_per_component.tolist(),
            "error": error,
            "iterations": trace.iterations,
            "converged": bool(trace.converged),
            "seed": seed,
        }
    if extra:
        summary.update({k: _jsonable(v) for k, v in extra.items()})
    p = directory / "summary.json"
    p.write_text(json.dumps(summary, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    written.append(p)
    return written
