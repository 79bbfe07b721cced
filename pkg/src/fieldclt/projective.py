"""Summability diagnostics for the projective condition.

The projective term is

    sum_{k, l >= 1} || E(f o T_{k,l} | F_{1,1}) ||_p / sqrt(k l)

where F_{1,1} is generated by the innovations eps[r, s] with r <= 1 and
s <= 1. For functionals of linear fields the norms are bounded through the
tail sums A_{k,l} = sum_{i >= k, j >= l} a[i, j]^2, which gives the
deterministic condition series

    sum_{k, l >= 1} A_{k+1-h, l+1-h}^(alpha/2) / sqrt(k l).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._parallel import map_chunks
from .coefficients import CoefficientFamily
from .errors import ParameterError, UnsupportedModelError
from .models import FieldModel, InnovationSpec

DEFAULT_OUTER = 4096
DEFAULT_INNER = 64
# draws held in memory per chunk of outer replicates
_CHUNK_DRAWS = 1 << 22


def tail_sum_A(family: CoefficientFamily, k: int, l: int, rel_tol: float = 1e-10) -> float:
    """A_{k,l}; indices below zero are clamped to zero."""
    return family.tail_sum(k, l, rel_tol).value


@dataclass(frozen=True)
class TailSumTable:
    """A[k-1, l-1] = A_{k,l} for 1 <= k <= K, 1 <= l <= L."""

    A: np.ndarray
    family: CoefficientFamily
    rel_tol: float

    @classmethod
    def build(cls, family: CoefficientFamily, K: int, L: int, rel_tol: float = 1e-10):
        if K < 1 or L < 1:
            raise ParameterError("table dimensions must be >= 1")
        A = np.empty((K, L))
        for k in range(1, K + 1):
            for l in range(1, L + 1):
                A[k - 1, l - 1] = tail_sum_A(family, k, l, rel_tol)
        return cls(A, family, rel_tol)

    def __getitem__(self, kl):
        k, l = kl
        return float(self.A[k - 1, l - 1])


def fitted_exponent(family: CoefficientFamily, ks, axis: str = "diagonal") -> float:
    """Least-squares slope of log A against log k.

    ``axis`` selects A(k, k) (``diagonal``), A(k, 1) (``row``) or A(1, k) (``col``).
    """
    ks = np.asarray(ks, dtype=np.float64)
    pick = {"diagonal": lambda k: (k, k), "row": lambda k: (k, 1), "col": lambda k: (1, k)}[axis]
    logA = np.log([tail_sum_A(family, *pick(int(k))) for k in ks])
    slope, _ = np.polyfit(np.log(ks), logA, 1)
    return float(slope)


def condition_series_partial(family: CoefficientFamily, alpha: float, h: int, Kmax: int) -> np.ndarray:
    """P(K) = sum_{k, l <= K} A_{k+1-h, l+1-h}^(alpha/2) / sqrt(k l) for K = 1..Kmax."""
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must lie in (0, 1]")
    if h < 1 or Kmax < 1:
        raise ParameterError("h and Kmax must be >= 1")
    idx = np.arange(1, Kmax + 1)
    shift = idx + 1 - h
    if family.kind == "product":
        # A_{a,b} = T(a) T(b) with T(s) = sum_{i >= s} (i+1)^-2q and T(0)^2 = A_{0,0}
        T0 = math.sqrt(family.total_sum_sq())
        T = np.array([family.tail_sum(s, 0).value for s in shift]) / T0
        row = T ** (alpha / 2) / np.sqrt(idx)
        terms = np.outer(row, row)
    elif family.kind == "additive":
        # A_{a,b} depends on a + b only once both are clamped to >= 0
        clamped = np.maximum(shift, 0)
        diag = {c: tail_sum_A(family, c, 0) for c in np.unique(np.add.outer(clamped, clamped))}
        A = np.vectorize(diag.__getitem__)(np.add.outer(clamped, clamped))
        terms = A ** (alpha / 2) / np.sqrt(np.outer(idx, idx))
    else:
        A = np.array([[tail_sum_A(family, a, b) for b in shift] for a in shift])
        terms = A ** (alpha / 2) / np.sqrt(np.outer(idx, idx))
    # P(K) sums the K x K leading block
    cum = np.cumsum(np.cumsum(terms, axis=0), axis=1)
    return np.diagonal(cum).copy()


def cauchy_gaps(partials: np.ndarray, Ks) -> np.ndarray:
    """P(2K) - P(K) for each K (1-based) with 2K within the computed range."""
    return np.array([partials[2 * K - 1] - partials[K - 1] for K in Ks])


def classify(family: CoefficientFamily, alpha: float = 1.0) -> dict:
    """Analytic convergence classification of the condition series.

    The derived threshold is what the rate of A_{k,l} implies: the additive
    family converges iff alpha (q - 1) > 1, the product family iff
    alpha (2q - 1) > 1. The threshold the literature quotes for the product
    family at alpha = 1 (q > 3/2) is sufficient but not sharp; both are
    reported.
    """
    if family.kind == "additive":
        threshold = 1.0 + 1.0 / alpha
        stated = 2.0 if alpha == 1 else None
    elif family.kind == "product":
        threshold = 0.5 * (1.0 + 1.0 / alpha)
        stated = 1.5 if alpha == 1 else None
    else:
        return {"kind": family.kind, "converges": True, "reason": "finite support"}
    return {"kind": family.kind, "q": family.q, "alpha": alpha,
            "threshold": threshold, "stated_threshold": stated,
            "converges": bool(family.q > threshold)}


# --------------------------------------------------------------------------
# conditional norms


@dataclass(frozen=True)
class NormEstimate:
    """Estimate of ||E(f o T_{k,l} | F_{1,1})||_p.

    For p = 2 ``sq`` is an unbiased estimate of the squared norm with
    standard error ``sq_se``; ``value`` is sqrt(max(sq, 0)). ``se`` is the
    induced error on the norm scale, sqrt(sq + sq_se) - value.
    """

    k: int
    l: int
    p: float
    value: float
    se: float
    sq: float
    sq_se: float
    method: str
    meta: dict = field(default_factory=dict, compare=False)

    def consistent_with(self, truth: float, z: float = 3.0) -> bool:
        """Is ``truth`` within z standard errors (on the squared scale for p = 2)?"""
        if self.se == 0 and self.sq_se == 0:
            return math.isclose(self.value, truth, rel_tol=1e-9, abs_tol=1e-12)
        if self.p == 2:
            return abs(self.sq - truth**2) <= z * self.sq_se
        return abs(self.value - truth) <= z * self.se


def _exact(k, l, p, value, method, **meta):
    return NormEstimate(k, l, p, value, 0.0, value**2, 0.0, method, meta)


def linear_conditional_sd(model: FieldModel, k: int, l: int) -> float:
    """sd of E(Z_{k,l} | F_{1,1}) for the box-truncated linear field.

    The conditional expectation keeps the innovations eps[r, s] with r <= 1
    and s <= 1, i.e. coefficients a[i, j] with i >= k-1, j >= l-1 inside the box.
    """
    box = model.box
    return math.sqrt(model.innovations.variance * float(np.sum(box[max(k - 1, 0):, max(l - 1, 0):] ** 2)))


def estimate_conditional_norm(model: FieldModel, k: int, l: int, p: float = 2.0,
                              outer: int = DEFAULT_OUTER, inner: int = DEFAULT_INNER,
                              stream: _rng.RngStream | None = None, exact: bool | None = None,
                              workers: int = 1) -> NormEstimate:
    """||E(f o T_{k,l} | F_{1,1})||_p by nested Monte Carlo, or exactly when possible.

    Each outer draw fixes the innovations on the quadrant r <= 1, s <= 1
    within the model's footprint; inner draws resample the rest. For p = 2
    the squared norm is the outer mean of the product of two independent
    inner averages, which is unbiased. For p > 2 the inner averages of both
    halves are pooled and the plug-in p-norm is biased upward by the inner
    noise; this is recorded in ``meta``.

    ``exact=None`` uses closed forms where they hold: the iid model, and the
    linear field for p = 2 or Gaussian innovations.
    """
    if model.variant == "counterexample":
        raise UnsupportedModelError("the counterexample processes have no product-space filtration")
    if k < 1 or l < 1:
        raise ParameterError("k and l must be >= 1")
    if p < 2:
        raise ParameterError("p must be >= 2")
    if exact is None:
        exact = model.variant == "iid" or (
            model.variant == "linear" and (p == 2 or model.innovations.distribution == "gaussian"))
    if exact:
        if model.variant == "iid":
            v = model.innovations.pnorm(p) if (k, l) == (1, 1) else 0.0
            return _exact(k, l, p, v, "exact-iid")
        if model.variant == "linear":
            sd = linear_conditional_sd(model, k, l)
            if p == 2:
                return _exact(k, l, p, sd, "exact-linear")
            if model.innovations.distribution != "gaussian":
                raise ParameterError("exact p-norm of the linear field needs p = 2 or Gaussian innovations")
            gauss = InnovationSpec("gaussian", 1.0).pnorm(p)
            return _exact(k, l, p, sd * gauss, "exact-linear")
        raise ParameterError(f"no closed form for the {model.variant} variant")
    if outer < 2 or inner < 1:
        raise ParameterError("need outer >= 2 and inner >= 1")
    stream = stream or _rng.RngStream(0)
    return _nested_mc(model, k, l, p, outer, inner, stream.child("cond-norm", k, l), workers)


def _nested_mc(model, k, l, p, outer, inner, stream, workers):
    M = model.margin
    n = M + 1
    rows = np.arange(k - M, k + 1)
    cols = np.arange(l - M, l + 1)
    fixed = (rows[:, None] <= 1) & (cols[None, :] <= 1)
    counters = _rng.lattice_counters(k - M, l - M, n, n)
    spec = model.innovations
    outer_stream = stream.child("outer")
    inner_stream = stream.child("inner")
    chunk = max(1, _CHUNK_DRAWS // (2 * inner * n * n))

    def run(a, b):
        okeys = outer_stream.child_keys(np.arange(a, b))
        base = spec.block(okeys, k - M, l - M, n, n)  # (c, n, n)
        ikeys = _rng.fold_key(inner_stream.child_keys(np.arange(a, b))[:, None],
                              np.arange(2 * inner)[None, :])  # (c, 2 inner)
        fresh = spec.draw(ikeys[..., None, None], counters)
        eps = np.where(fixed, base[:, None], fresh)
        vals = model.evaluate(eps)[..., 0, 0]  # (c, 2 inner)
        return np.stack([vals[:, :inner].mean(axis=1), vals[:, inner:].mean(axis=1)], axis=1)

    means = np.concatenate(map_chunks(run, outer, workers, chunk), axis=0)
    meta = {"outer": outer, "inner": inner, "footprint": n, "fixed_cells": int(fixed.sum())}
    if p == 2:
        prod = means[:, 0] * means[:, 1]
        sq = float(prod.mean())
        sq_se = float(prod.std(ddof=1) / math.sqrt(outer))
        value = math.sqrt(max(sq, 0.0))
        return NormEstimate(k, l, p, value, math.sqrt(max(sq, 0.0) + sq_se) - value, sq, sq_se, "nested-mc", meta)
    pooled = np.abs(means.mean(axis=1)) ** p
    mp = float(pooled.mean())
    mp_se = float(pooled.std(ddof=1) / math.sqrt(outer))
    value = mp ** (1.0 / p)
    se = value / (p * mp) * mp_se if mp > 0 else 0.0
    meta["caveat"] = f"plug-in p-norm over {2 * inner} inner draws is biased upward for p > 2"
    return NormEstimate(k, l, p, value, se, value**2, 2 * value * se, "nested-mc", meta)


@dataclass(frozen=True)
class ProjectiveReport:
    """Terms ||E(f o T_{k,l} | F_{1,1})||_p and weighted partial sums.

    ``partial[K-1, L-1]`` is the sum over k <= K, l <= L of norm / sqrt(k l);
    ``partial_se`` propagates the per-term standard errors in quadrature.
    """

    norms: np.ndarray
    norm_se: np.ndarray
    partial: np.ndarray
    partial_se: np.ndarray
    p: float
    estimates: tuple = field(repr=False, default=())
    classification: dict | None = None

    @property
    def value(self) -> float:
        return float(self.partial[-1, -1])

    @property
    def se(self) -> float:
        return float(self.partial_se[-1, -1])


def delta_tilde_partial(model: FieldModel, Kmax: int, Lmax: int, p: float = 2.0,
                        outer: int = DEFAULT_OUTER, inner: int = DEFAULT_INNER,
                        stream: _rng.RngStream | None = None, exact: bool | None = None,
                        workers: int = 1, alpha: float = 1.0) -> ProjectiveReport:
    """Partial sums of the projective term up to (Kmax, Lmax)."""
    if Kmax < 1 or Lmax < 1:
        raise ParameterError("Kmax and Lmax must be >= 1")
    stream = stream or _rng.RngStream(0)
    norms = np.zeros((Kmax, Lmax))
    se = np.zeros((Kmax, Lmax))
    ests = []
    for k in range(1, Kmax + 1):
        for l in range(1, Lmax + 1):
            e = estimate_conditional_norm(model, k, l, p, outer, inner, stream, exact, workers)
            norms[k - 1, l - 1], se[k - 1, l - 1] = e.value, e.se
            ests.append(e)
    w = 1.0 / np.sqrt(np.outer(np.arange(1, Kmax + 1), np.arange(1, Lmax + 1)))
    partial = np.cumsum(np.cumsum(norms * w, axis=0), axis=1)
    partial_se = np.sqrt(np.cumsum(np.cumsum((se * w) ** 2, axis=0), axis=1))
    cls = None
    if model.coefficients is not None and model.coefficients.kind in ("additive", "product"):
        cls = classify(model.coefficients, alpha)
    return ProjectiveReport(norms, se, partial, partial_se, p, tuple(ests), cls)
