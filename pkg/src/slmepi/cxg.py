"""CXG complex-array files.

A CXG dataset is a small JSON header (``*.cxg``) next to a raw data file
(``*.cxd``). The header records ``dims`` ``[nx, ny, nc, ns]``, the
``domain`` flag and ``dtype: "c64"``; the data file holds little-endian
64-bit float ``(re, im)`` pairs with x fastest, then y, channel and shot.
Extra header keys carry sampling patterns or nullspace metadata.
"""

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kspace import KSPACE, ComplexGrid, MeasuredData, SamplingPattern

FORMAT = "CXG"
VERSION = 1


def _data_path(header_path):
    return Path(header_path).with_suffix(".cxd")


def write_cxg(path, array, domain=KSPACE, **extra):
    """Write a complex array of up to four dimensions; returns both file paths."""
    if isinstance(array, ComplexGrid):
        domain = array.domain
        array = array.data
    a = np.asarray(array, dtype=np.complex128)
    if a.ndim > 4:
        raise ValidationError("CXG holds at most four dimensions")
    a = a.reshape(a.shape + (1,) * (4 - a.ndim))
    path = Path(path)
    data_path = _data_path(path)
    header = {"format": FORMAT, "version": VERSION, "dims": list(a.shape), "domain": domain,
              "dtype": "c64", "data": data_path.name}
    header.update(extra)
    data_path.write_bytes(a.astype("<c16").ravel(order="F").tobytes())
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path, data_path


def read_header(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such CXG header: {path}")
    try:
        header = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed CXG header ({exc})") from None
    if header.get("format") != FORMAT or header.get("dtype") != "c64":
        raise ValidationError(f"{path}: not a c64 CXG header")
    dims = header.get("dims")
    if not (isinstance(dims, list) and len(dims) == 4 and all(isinstance(d, int) and d > 0 for d in dims)):
        raise ValidationError(f"{path}: dims must be four positive integers")
    return header


def read_cxg(path):
    """Return ``(array, header)``; the array has shape ``dims``."""
    header = read_header(path)
    data_path = Path(path).parent / header["data"]
    if not data_path.is_file():
        raise ValidationError(f"missing CXG data file: {data_path}")
    raw = np.frombuffer(data_path.read_bytes(), dtype="<c16")
    dims = tuple(header["dims"])
    if raw.size != int(np.prod(dims)):
        raise ValidationError(f"{data_path}: holds {raw.size} values, header expects {int(np.prod(dims))}")
    return raw.reshape(dims, order="F").astype(np.complex128), header


def read_grid(path):
    a, header = read_cxg(path)
    return ComplexGrid(a, header["domain"])


def write_measured(path, data):
    """Store one polarity (a list of per-shot :class:`MeasuredData`) as a zero-filled grid."""
    data = list(data) if isinstance(data, (list, tuple)) else [data]
    ny = data[0].pattern.ny
    nx, _, nc, _ = data[0].samples.shape
    k = np.zeros((nx, ny, nc, len(data)), dtype=np.complex128)
    lines = []
    for s, d in enumerate(data):
        k[..., s][:, list(d.pattern.kept_lines)] = d.samples[..., 0]
        lines.append(list(d.pattern.kept_lines))
    pat = data[0].pattern
    return write_cxg(path, k, KSPACE, lines=lines, polarity=pat.polarity,
                     acceleration=pat.acceleration)


def read_measured(path):
    """Inverse of :func:`write_measured`."""
    a, header = read_cxg(path)
    if "lines" not in header:
        raise ValidationError(f"{path}: header has no sampling lines")
    lines = header["lines"]
    if len(lines) != a.shape[3]:
        raise ValidationError(f"{path}: {len(lines)} line sets for {a.shape[3]} shots")
    out = []
    for s, kept in enumerate(lines):
        pat = SamplingPattern(a.shape[1], tuple(kept), header.get("polarity", "positive"),
                              header.get("acceleration", 1))
        out.append(MeasuredData(pat, a[:, list(pat.kept_lines), :, s:s + 1]))
    return out
