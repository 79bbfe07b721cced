"""Rectangles, lattice-indexed arrays and summed-area tables.

Lattice coordinates are 1-based on the observation window: the rectangle
``Rect(m1, m2)`` is the index set {1..m1} x {1..m2}. A ``FieldArray`` pairs a
2-D array with the lattice coordinates of its first entry, so shifting the
field is just re-indexing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BoundsError, DimensionError, DomainError


@dataclass(frozen=True)
class Rect:
    """The rectangle {1..m1} x {1..m2}."""

    m1: int
    m2: int

    def __post_init__(self):
        if int(self.m1) < 1 or int(self.m2) < 1:
            raise DimensionError(f"rectangle sides must be >= 1, got {self.m1}x{self.m2}")
        object.__setattr__(self, "m1", int(self.m1))
        object.__setattr__(self, "m2", int(self.m2))

    @property
    def cardinality(self) -> int:
        return self.m1 * self.m2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m1, self.m2)

    @classmethod
    def parse(cls, text: str) -> "Rect":
        m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
        if not m:
            raise DimensionError(f"expected '<rows>x<cols>', got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self) -> str:
        return f"{self.m1}x{self.m2}"


@dataclass(frozen=True)
class FieldArray:
    """Values of a field on a lattice block.

    ``values[a, b]`` is the value at lattice point ``(origin[0] + a, origin[1] + b)``.
    ``meta`` carries generation metadata such as the truncation radius.
    """

    values: np.ndarray
    origin: tuple[int, int] = (1, 1)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise DimensionError(f"field must be a nonempty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def lo(self) -> tuple[int, int]:
        return self.origin

    @property
    def hi(self) -> tuple[int, int]:
        return (self.origin[0] + self.shape[0] - 1, self.origin[1] + self.shape[1] - 1)

    def covers(self, lo, hi) -> bool:
        return (self.lo[0] <= lo[0] and self.lo[1] <= lo[1]
                and hi[0] <= self.hi[0] and hi[1] <= self.hi[1])

    def at(self, i: int, j: int) -> float:
        if not self.covers((i, j), (i, j)):
            raise BoundsError(f"lattice point {(i, j)} outside {self.lo}..{self.hi}")
        return float(self.values[i - self.origin[0], j - self.origin[1]])

    def window(self, lo, hi) -> "FieldArray":
        """Sub-field on the closed lattice block lo..hi."""
        if not self.covers(lo, hi):
            raise BoundsError(f"block {lo}..{hi} outside {self.lo}..{self.hi}")
        a0, b0 = lo[0] - self.origin[0], lo[1] - self.origin[1]
        a1, b1 = hi[0] - self.origin[0] + 1, hi[1] - self.origin[1] + 1
        return FieldArray(self.values[a0:a1, b0:b1], tuple(lo), dict(self.meta))

    def on_rect(self, rect: Rect) -> "FieldArray":
        return self.window((1, 1), (rect.m1, rect.m2))


def cumulative_table(values: np.ndarray) -> np.ndarray:
    """Double prefix sums over the last two axes with a zero border.

    Rows are accumulated first, then columns, always in the same order, so
    the result is bit-for-bit reproducible.
    """
    values = np.asarray(values, dtype=np.float64)
    shape = values.shape[:-2] + (values.shape[-2] + 1, values.shape[-1] + 1)
    cum = np.zeros(shape)
    np.cumsum(values, axis=-1, out=cum[..., 1:, 1:])
    np.cumsum(cum[..., 1:, 1:], axis=-2, out=cum[..., 1:, 1:])
    return cum


def _snap(x: np.ndarray) -> np.ndarray:
    # m * (k/m) can land one ulp off an integer; treat it as the integer
    r = np.rint(x)
    return np.where(np.abs(x - r) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)), r, x)


def interpolate_table(cum: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of prefix-sum tables at fractional positions.

    ``cum`` has shape (..., m1+1, m2+1); ``points`` has shape (P, 2) holding
    positions (x, y) with 0 <= x <= m1, 0 <= y <= m2. Returns (..., P).
    Bilinear interpolation of the prefix table is exactly the sum of cell
    values weighted by their overlap area with [0, x] x [0, y].
    """
    m1, m2 = cum.shape[-2] - 1, cum.shape[-1] - 1
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x, y = _snap(pts[:, 0]), _snap(pts[:, 1])
    i0 = np.minimum(np.floor(x).astype(np.int64), m1 - 1)
    j0 = np.minimum(np.floor(y).astype(np.int64), m2 - 1)
    fx, fy = x - i0, y - j0
    c00 = cum[..., i0, j0]
    c10 = cum[..., i0 + 1, j0]
    c01 = cum[..., i0, j0 + 1]
    c11 = cum[..., i0 + 1, j0 + 1]
    out = c00 + fx * (c10 - c00) + fy * (c01 - c00) + (fx * fy) * (c11 - c10 - c01 + c00)
    # exact lookups where the point sits on the integer grid
    on_grid = (fx == 0) & (fy == 0)
    if np.any(on_grid):
        out = np.where(on_grid, c00, out)
    exact_row = (fx == 1) & (fy == 0)
    if np.any(exact_row):
        out = np.where(exact_row, c10, out)
    exact_col = (fx == 0) & (fy == 1)
    if np.any(exact_col):
        out = np.where(exact_col, c01, out)
    corner = (fx == 1) & (fy == 1)
    if np.any(corner):
        out = np.where(corner, c11, out)
    return out


@dataclass(frozen=True)
class SummedAreaTable:
    """Prefix sums ``cum[i, j] = sum of values[1..i, 1..j]`` with zero border."""

    cum: np.ndarray

    @property
    def rows(self) -> int:
        return self.cum.shape[0] - 1

    @property
    def cols(self) -> int:
        return self.cum.shape[1] - 1


def build_summed_area(field: FieldArray | np.ndarray) -> SummedAreaTable:
    values = field.values if isinstance(field, FieldArray) else np.asarray(field, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise DimensionError(f"need a nonempty 2-D field, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise DomainError("field values must be finite")
    cum = cumulative_table(values)
    cum.setflags(write=False)
    return SummedAreaTable(cum)


def rect_sum(table: SummedAreaTable, lo: Sequence[int], hi: Sequence[int]) -> float:
    """Sum over the closed 1-based index rectangle lo..hi by inclusion-exclusion."""
    (a, b), (c, d) = lo, hi
    if not (1 <= a <= c <= table.rows and 1 <= b <= d <= table.cols):
        raise BoundsError(f"rectangle {tuple(lo)}..{tuple(hi)} outside 1..{(table.rows, table.cols)}")
    cum = table.cum
    return float(cum[c, d] - cum[a - 1, d] - cum[c, b - 1] + cum[a - 1, b - 1])


def sheet_value(table: SummedAreaTable, t: Sequence[float], dims: Rect | None = None) -> float:
    """Interpolated partial sum over [0, m1*t1] x [0, m2*t2].

    Each cell (k1-1, k1] x (k2-1, k2] contributes its value times the area of
    its overlap with the region; at t = (1, 1) this is the full-grid sum.
    """
    dims = dims or Rect(table.rows, table.cols)
    if (dims.m1, dims.m2) != (table.rows, table.cols):
        raise DimensionError(f"dims {dims} do not match table {table.rows}x{table.cols}")
    t1, t2 = float(t[0]), float(t[1])
    if not (0.0 <= t1 <= 1.0 and 0.0 <= t2 <= 1.0):
        raise DomainError(f"t must lie in [0,1]^2, got {(t1, t2)}")
    return float(interpolate_table(table.cum, [[dims.m1 * t1, dims.m2 * t2]])[0])


def sheet_values(values: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """B_{n,t} for a batch of fields (..., m1, m2) at points ts (P, 2)."""
    ts = np.atleast_2d(np.asarray(ts, dtype=np.float64))
    if np.any(ts < 0) or np.any(ts > 1):
        raise DomainError("t must lie in [0,1]^2")
    m1, m2 = values.shape[-2:]
    cum = cumulative_table(values)
    return interpolate_table(cum, ts * np.array([m1, m2], dtype=np.float64))
