"""Snapshot file format for fields and 1D profiles.

Layout (binary):

    b"ACF1\\n"
    one ASCII header line: "nx ny m eps l h dx\\n"  (decimal text; nan when a
        value does not apply, e.g. l/h on a disc; ny = 1 marks a 1D profile
        with nx samples over [0, l] or [-l, l] encoded by the grid origin h)
    nx * ny * m float64 little-endian values, C order, index (ix, iy, c)

Write-then-read is bit-identical.  Format violations raise
:class:`SnapshotFormatError` with the byte offset; short payloads name the
missing byte count; a different version magic raises
:class:`UnsupportedVersionError`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAGIC = b"ACF1\n"


class SnapshotFormatError(ValueError):
    """Malformed snapshot; the message carries the failing byte offset."""


class UnsupportedVersionError(SnapshotFormatError):
    """Recognized family but unsupported version magic."""


@dataclass
class Snapshot:
    values: np.ndarray   # (nx, ny, m) or (n, 1, m) for profiles
    eps: float
    l: float
    h: float
    dx: float

    @property
    def is_profile(self) -> bool:
        return self.values.shape[1] == 1


def _format_float(x: float) -> str:
    return repr(float(x))


def write_snapshot(path, values: np.ndarray, eps: float, l: float, h: float,
                   dx: float) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise ValueError("snapshot values must have shape (nx, ny, m)")
    nx, ny, m = values.shape
    header = " ".join([str(nx), str(ny), str(m), _format_float(eps),
                       _format_float(l), _format_float(h), _format_float(dx)])
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("ascii") + b"\n")
        fh.write(values.tobytes(order="C"))


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_snapshot(data)


def parse_snapshot(data: bytes) -> Snapshot:
    if len(data) < len(MAGIC):
        raise SnapshotFormatError(
            f"truncated magic: file has {len(data)} bytes, need {len(MAGIC)} "
            f"(offset 0)")
    magic = data[:len(MAGIC)]
    if magic != MAGIC:
        if magic[:3] == b"ACF":
            raise UnsupportedVersionError(
                f"unsupported version magic {magic!r} at offset 0")
        raise SnapshotFormatError(f"bad magic {magic!r} at offset 0")
    nl = data.find(b"\n", len(MAGIC))
    if nl < 0:
        raise SnapshotFormatError(f"unterminated header at offset {len(MAGIC)}")
    header = data[len(MAGIC):nl].decode("ascii", errors="replace").split()
    if len(header) != 7:
        raise SnapshotFormatError(
            f"header has {len(header)} fields, expected 7 (offset {len(MAGIC)})")
    try:
        nx, ny, m = int(header[0]), int(header[1]), int(header[2])
        eps, l, h, dx = (float(v) for v in header[3:])
    except ValueError as exc:
        raise SnapshotFormatError(f"unparsable header: {exc} (offset {len(MAGIC)})")
    payload = data[nl + 1:]
    need = nx * ny * m * 8
    if len(payload) != need:
        missing = need - len(payload)
        if missing > 0:
            raise SnapshotFormatError(
                f"truncated payload: missing {missing} bytes (offset {nl + 1 + len(payload)})")
        raise SnapshotFormatError(
            f"payload has {-missing} extra bytes (offset {nl + 1 + need})")
    values = np.frombuffer(payload, dtype="<f8").reshape(nx, ny, m).copy()
    return Snapshot(values=values, eps=eps, l=l, h=h, dx=dx)


def write_field_snapshot(path, field) -> None:
    d = field.domain
    write_snapshot(path, field.values, field.eps,
                   d.l if d.l is not None else np.nan,
                   d.h if d.h is not None else np.nan, d.dx)


def write_profile_snapshot(path, profile) -> None:
    """1D variant: ny = 1; grid span stored in (l, h) = (s[0], s[-1])."""
    write_snapshot(path, profile.v[:, None, :], profile.eps,
                   float(profile.s[0]), float(profile.s[-1]), profile.h)


def profile_csv(path, profile) -> None:
    """Columns s, v_1..v_m."""
    m = profile.v.shape[1]
    header = "s," + ",".join(f"v_{c + 1}" for c in range(m))
    data = np.column_stack([profile.s, profile.v])
    np.savetxt(path, data, delimiter=",", header=header, comments="")


def field_csv(path, field) -> None:
    """Columns x, y, u_1..u_m over active cells (plotting export)."""
    d = field.domain
    X, Y = d.cell_centers()
    mask = d.active
    m = field.m
    header = "x,y," + ",".join(f"u_{c + 1}" for c in range(m))
    data = np.column_stack([X[mask], Y[mask], field.values[mask].reshape(-1, m)])
    np.savetxt(path, data, delimiter=",", header=header, comments="")
