"""Causal coefficient arrays a[i, j] and their squared tail sums.

Two parametric decay families are supported besides the identity kernel
(``delta``) and explicit tables:

* additive:  a[i, j] = (i + j + 1) ** -q
* product:   a[i, j] = (i + 1) ** -q * (j + 1) ** -q

Both are square-summable exactly when q > 1. Coefficients vanish outside
the quadrant i >= 0, j >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DivergenceError, ParameterError

KINDS = ("delta", "additive", "product", "explicit")

# omitted variance outside the truncation box, relative to the total
TAIL_BUDGET = 1e-4
MAX_TRUNCATION = 256


@dataclass(frozen=True)
class TailSum:
    """A tail sum with a guaranteed error bound."""

    value: float
    error_bound: float
    terms: int


def _convex_tail(f, F, a: int) -> tuple[float, float]:
    """Bounds on sum_{j >= a} f(j) for f convex and decreasing on [a - 1/2, inf).

    ``F(x)`` is the integral of f from x to infinity. The trapezoid rule
    overestimates and the midpoint rule underestimates the integral of a
    convex function, which gives F(a) + f(a)/2 <= sum <= F(a - 1/2).
    """
    return F(a) + 0.5 * f(a), F(a - 0.5)


def _bracketed(head_fn, f, F, start: int, ready, rel_tol: float) -> TailSum:
    n = 64
    while True:
        head = head_fn(n)
        a = start + n
        if ready(a):
            lower, upper = _convex_tail(f, F, a)
            est = head + 0.5 * (lower + upper)
            half = 0.5 * (upper - lower)
            if half <= rel_tol * est or n >= 1 << 24:
                return TailSum(est, half, n)
        n *= 4


def _power_tail(y0: float, s: float, rel_tol: float) -> TailSum:
    """sum_{y >= y0, y integer} y**-s for s > 1, y0 >= 1."""
    return _bracketed(
        lambda n: float(np.sum((y0 + np.arange(n, dtype=np.float64)) ** -s)),
        lambda y: y ** -s,
        lambda y: y ** (1 - s) / (s - 1),
        y0, lambda a: True, rel_tol)


def _diagonal_tail(c: int, s: float, rel_tol: float) -> TailSum:
    """sum_{j >= 1} j * (c + j)**-s for s > 2 (pairs grouped by diagonal)."""

    def F(x):  # int_x^inf t (c + t)**-s dt
        Y = c + x
        return Y ** (2 - s) / (s - 2) - c * Y ** (1 - s) / (s - 1)

    def head(n):
        j = np.arange(1, n + 1, dtype=np.float64)
        return float(np.sum(j * (c + j) ** -s))

    # t (c+t)^-s is convex and decreasing for t >= 2c / (s - 1)
    return _bracketed(head, lambda t: t * (c + t) ** -s, F, 1,
                      lambda a: a - 0.5 >= 2 * c / (s - 1), rel_tol)


@dataclass(frozen=True)
class CoefficientFamily:
    kind: str
    q: float | None = None
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown coefficient family {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("additive", "product"):
            if self.q is None:
                raise ParameterError(f"{self.kind} family needs a decay exponent q")
            object.__setattr__(self, "q", float(self.q))
        if self.kind == "explicit":
            arr = np.asarray(self.table, dtype=np.float64)
            if arr.ndim != 2 or arr.size == 0 or not np.all(np.isfinite(arr)):
                raise ParameterError("explicit table must be a finite nonempty 2-D array")
            object.__setattr__(self, "table", tuple(map(tuple, arr.tolist())))

    @classmethod
    def delta(cls):
        return cls("delta")

    @classmethod
    def additive(cls, q: float):
        return cls("additive", q)

    @classmethod
    def product(cls, q: float):
        return cls("product", q)

    @classmethod
    def explicit(cls, table):
        return cls("explicit", table=table)

    @property
    def summable(self) -> bool:
        return self.kind in ("delta", "explicit") or self.q > 1

    def __call__(self, i, j):
        return coefficient(self, i, j)

    @cached_property
    def _table_array(self):
        return np.asarray(self.table, dtype=np.float64)

    def box(self, B: int) -> np.ndarray:
        """The (B+1) x (B+1) array a[0..B, 0..B]."""
        idx = np.arange(B + 1)
        return coefficient(self, idx[:, None], idx[None, :])

    @property
    def support_radius(self) -> int | None:
        """Smallest B with all nonzero coefficients inside [0, B]^2, if finite."""
        if self.kind == "delta":
            return 0
        if self.kind == "explicit":
            return max(self._table_array.shape) - 1
        return None

    def tail_sum(self, k: int, l: int, rel_tol: float = 1e-10) -> TailSum:
        """sum_{i >= k, j >= l} a[i, j]**2 (negative indices clamp to 0)."""
        k, l = max(int(k), 0), max(int(l), 0)
        if self.kind == "delta":
            return TailSum(1.0 if (k, l) == (0, 0) else 0.0, 0.0, 1)
        if self.kind == "explicit":
            t = self._table_array
            return TailSum(float(np.sum(t[k:, l:] ** 2)), 0.0, t.size)
        if not self.q > 1:
            raise DivergenceError(f"{self.kind} family with q={self.q} is not square-summable (need q > 1)")
        s = 2.0 * self.q
        if self.kind == "product":
            # factorises into two one-dimensional tails sum_{y >= k+1} y^-2q
            tk = _power_tail(k + 1.0, s, rel_tol / 3)
            tl = tk if l == k else _power_tail(l + 1.0, s, rel_tol / 3)
            value = tk.value * tl.value
            err = tk.value * tl.error_bound + tl.value * tk.error_bound + tk.error_bound * tl.error_bound
            return TailSum(value, err, tk.terms + tl.terms)
        # additive: the diagonal i + j = k + l + j - 1 holds j admissible pairs
        return _diagonal_tail(k + l, s, rel_tol)

    def total_sum_sq(self, rel_tol: float = 1e-10) -> float:
        return self.tail_sum(0, 0, rel_tol).value

    def omitted_sum_sq(self, B: int) -> float:
        """Squared mass outside the box [0, B]^2."""
        if self.support_radius is not None and B >= self.support_radius:
            return 0.0
        return (self.tail_sum(B + 1, 0).value + self.tail_sum(0, B + 1).value
                - self.tail_sum(B + 1, B + 1).value)

    def default_truncation(self, budget: float = TAIL_BUDGET, max_radius: int = MAX_TRUNCATION) -> int:
        """Smallest B whose omitted squared mass is below ``budget`` of the total."""
        if self.support_radius is not None:
            return self.support_radius
        total = self.total_sum_sq()
        lo, hi = 0, 1
        while self.omitted_sum_sq(hi) >= budget * total:
            if hi >= max_radius:
                return max_radius
            lo, hi = hi, min(2 * hi, max_radius)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.omitted_sum_sq(mid) < budget * total:
                hi = mid
            else:
                lo = mid
        return hi if self.omitted_sum_sq(lo) >= budget * total else lo

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if self.q is not None:
            d["q"] = self.q
        if self.kind == "explicit":
            d["table"] = [list(r) for r in self.table]
        return d


def coefficient(family: CoefficientFamily, i, j):
    """a[i, j] for scalar or array indices; zero off the nonnegative quadrant."""
    i = np.asarray(i)
    j = np.asarray(j)
    causal = (i >= 0) & (j >= 0)
    ii = np.where(causal, i, 0).astype(np.float64)
    jj = np.where(causal, j, 0).astype(np.float64)
    if family.kind == "delta":
        val = ((ii == 0) & (jj == 0)).astype(np.float64)
    elif family.kind == "additive":
        val = (ii + jj + 1.0) ** -family.q
    elif family.kind == "product":
        val = (ii + 1.0) ** -family.q * (jj + 1.0) ** -family.q
    else:
        t = family._table_array
        inside = (ii < t.shape[0]) & (jj < t.shape[1])
        val = np.where(inside, t[np.minimum(ii, t.shape[0] - 1).astype(int),
                                 np.minimum(jj, t.shape[1] - 1).astype(int)], 0.0)
    out = np.where(causal, val, 0.0)
    return float(out) if out.ndim == 0 else out
