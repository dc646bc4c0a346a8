"""Binary field files and CSV report emission.

Volume fields use the "CNSF1" format: one ASCII header line

    CNSF1 N1 N2 Nz L1 L2 b\n

followed by N1*N2*Nz little-endian float64 values in row-major order with
the vertical index fastest.  Surface fields use "CNSS1" with header

    CNSS1 N1 N2 L1 L2\n

and N1*N2 values.  Byte order is fixed little-endian; files from the wrong
byte order are rejected, never swapped transparently.
"""

from __future__ import annotations

import csv

import numpy as np

from cns.grid import SlabGrid

FIELD_MAGIC = "CNSF1"
SURFACE_MAGIC = "CNSS1"


class FieldFormatError(RuntimeError):
    """Malformed, truncated, or wrong-byte-order field file."""


def _check_finite_header(values, path):
    for v in values:
        if not np.isfinite(v):
            raise FieldFormatError(
                f"{path}: non-finite header value {v!r} (wrong byte order "
                "or corrupted header; files must be little-endian)")


def write_field(path, values: np.ndarray, grid: SlabGrid) -> None:
    """Write a volume sample array (N1, N2, Nz) as a CNSF1 file."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid "
                         f"{grid.shape}")
    header = (f"{FIELD_MAGIC} {grid.N1} {grid.N2} {grid.Nz} "
              f"{grid.L1!r} {grid.L2!r} {grid.b!r}\n")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def write_surface(path, values: np.ndarray, grid: SlabGrid) -> None:
    """Write a surface sample array (N1, N2) as a CNSS1 file."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N1, grid.N2):
        raise ValueError(f"surface shape {values.shape} does not match grid "
                         f"({grid.N1}, {grid.N2})")
    header = f"{SURFACE_MAGIC} {grid.N1} {grid.N2} {grid.L1!r} {grid.L2!r}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def _read(path, magic, n_ints, n_floats):
    with open(path, "rb") as f:
        header = f.readline(256)
        payload = f.read()
    parts = header.split()
    if not parts or parts[0] != magic.encode("ascii"):
        raise FieldFormatError(
            f"{path}: bad magic {parts[0]!r} (expected {magic}; "
            "little-endian files written by this package start with an "
            "ASCII header line)")
    if len(parts) != 1 + n_ints + n_floats:
        raise FieldFormatError(f"{path}: malformed header {header!r}")
    try:
        ints = [int(p) for p in parts[1:1 + n_ints]]
        floats = [float(p) for p in parts[1 + n_ints:]]
    except ValueError as exc:
        raise FieldFormatError(f"{path}: malformed header {header!r}") \
            from exc
    _check_finite_header(floats, path)
    count = int(np.prod(ints))
    expected = 8 * count
    if len(payload) < expected:
        raise FieldFormatError(
            f"{path}: truncated payload ({len(payload)} bytes, expected "
            f"{expected})")
    if len(payload) > expected:
        raise FieldFormatError(
            f"{path}: {len(payload) - expected} trailing bytes after the "
            "payload")
    values = np.frombuffer(payload, dtype="<f8").astype(float)
    return ints, floats, values.reshape(ints)


def read_field(path, grid: SlabGrid | None = None):
    """Read a CNSF1 file; returns (values, meta) with meta the header dict.

    If grid is supplied, the header must match it exactly.
    """
    (N1, N2, Nz), (L1, L2, b), values = _read(path, FIELD_MAGIC, 3, 3)
    meta = {"N1": N1, "N2": N2, "Nz": Nz, "L1": L1, "L2": L2, "b": b}
    if grid is not None and ((N1, N2, Nz) != grid.shape
                             or (L1, L2, b) != (grid.L1, grid.L2, grid.b)):
        raise FieldFormatError(f"{path}: header {meta} does not match the "
                               "run grid")
    return values, meta


def read_surface(path, grid: SlabGrid | None = None):
    """Read a CNSS1 file; returns (values, meta)."""
    (N1, N2), (L1, L2), values = _read(path, SURFACE_MAGIC, 2, 2)
    meta = {"N1": N1, "N2": N2, "L1": L1, "L2": L2}
    if grid is not None and ((N1, N2) != (grid.N1, grid.N2)
                             or (L1, L2) != (grid.L1, grid.L2)):
        raise FieldFormatError(f"{path}: header {meta} does not match the "
                               "run grid")
    return values, meta


def write_csv(path, rows, fieldnames=None) -> None:
    """Write dict rows as CSV with a header row (always present)."""
    rows = list(rows)
    if fieldnames is None:
        if not rows:
            raise ValueError("cannot infer CSV columns from zero rows")
        fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    """Read a CSV written by write_csv back into a list of dicts."""
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
