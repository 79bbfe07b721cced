"""Variance estimators and limit-theorem checks for rectangular partial sums.

Two estimators of sigma^2 = lim Var(S_n) / |V_n| are provided: the direct
scaling estimator over independent replicates, and the series estimator
that sums spatially averaged autocovariances of an m-dependent
approximation. The remaining functions test the normal limit of S_n, the
Brownian-sheet covariance of the interpolated process B_{n,t}, and the
product-normal limit of the counterexample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.signal import fftconvolve

from . import rng as _rng
from ._parallel import map_chunks
from .errors import DegeneracyError, ParameterError, PreconditionError, UnsupportedModelError
from .lattice import Rect, sheet_values
from .models import FieldModel, m_dependent_approx, simulate_batch, simulate_field, truncated_linear_batch

MIN_SAMPLE = 20


@dataclass(frozen=True)
class EstimatorReport:
    """A sigma^2 estimate with its standard error.

    ``sequence`` lists (scale, estimate, se) sorted by scale; ``estimate`` is
    the value at the largest scale.
    """

    estimate: float
    se: float
    sequence: tuple
    method: str
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def rel_se(self) -> float:
        return self.se / abs(self.estimate) if self.estimate else math.inf


@dataclass(frozen=True)
class TestResult:
    """Outcome of a test; ``reject`` is the decision at level ``alpha``."""

    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    n: int
    alpha: float
    reject: bool
    tag: str
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")


# --------------------------------------------------------------------------
# sigma^2 estimators


def _sum_last2(x):
    return x.sum(axis=(-2, -1))


def partial_sums(model: FieldModel, rect: Rect, reps: int, stream: _rng.RngStream,
                 workers: int = 1) -> np.ndarray:
    """S(V, f) for ``reps`` independent replicates on ``rect``."""
    if model.variant == "counterexample":
        raise UnsupportedModelError("partial sums are defined for product-space models")
    return simulate_batch(model, rect, stream, reps, workers, reduce=_sum_last2)


def _variance_with_se(x: np.ndarray) -> tuple[float, float]:
    n = x.size
    c = x - x.mean()
    m2 = float(np.mean(c**2))
    m4 = float(np.mean(c**4))
    var = float(x.var(ddof=1))
    return var, math.sqrt(max(m4 - m2**2, 0.0) / n)


def estimate_sigma2_scaling(model: FieldModel, schedule, reps: int, stream: _rng.RngStream,
                            workers: int = 1, return_sums: bool = False):
    """Var(S_n) / |V_n| at each rectangle of ``schedule`` from independent replicates.

    Each scale uses its own child stream. With ``return_sums`` the partial
    sums at every scale are returned as a list alongside the report.
    """
    if reps < 2:
        raise ParameterError("reps must be >= 2")
    schedule = [r if isinstance(r, Rect) else Rect(*r) for r in schedule]
    if not schedule:
        raise ParameterError("schedule must be nonempty")
    for a, b in zip(schedule, schedule[1:]):
        if not (b.m1 > a.m1 and b.m2 > a.m2):
            raise ParameterError("schedule must be strictly increasing in both dimensions")
    seq, sums = [], []
    for i, rect in enumerate(schedule):
        s = partial_sums(model, rect, reps, stream.child("scaling", i), workers)
        var, se = _variance_with_se(s)
        seq.append((str(rect), var / rect.cardinality, se / rect.cardinality))
        sums.append(s)
    est, se = seq[-1][1], seq[-1][2]
    report = EstimatorReport(est, se, tuple(seq), "scaling", {"reps": reps})
    return (report, sums) if return_sums else report


def autocovariance_sum(x: np.ndarray, lag_cutoff: int) -> float:
    """sum over |u|, |v| <= L of the pair-count normalised autocovariance of one grid.

    The field is mean zero by construction, so no centring is applied.
    """
    n1, n2 = x.shape
    L = lag_cutoff
    if L >= min(n1, n2):
        raise PreconditionError("lag cutoff must be smaller than the grid")
    full = fftconvolve(x, x[::-1, ::-1], mode="full")
    c = full[n1 - 1 - L:n1 + L, n2 - 1 - L:n2 + L]
    u = np.arange(-L, L + 1)
    counts = np.outer(n1 - np.abs(u), n2 - np.abs(u))
    return float(np.sum(c / counts))


def estimate_sigma2_series(model: FieldModel, m: int, lag_cutoff: int, stream: _rng.RngStream,
                           grids: int = 16, side: int | None = None, inner: int = 64,
                           workers: int = 1) -> EstimatorReport:
    """sigma_m^2 = sum_{|k| <= L} E[f_m (f_m o T_k)] by spatial averaging.

    f_m is the m-dependent approximation; for the orthomartingale model,
    which is m_g-dependent, f itself is used. Each of ``grids`` independent
    square grids of side >= 20 (m + L) gives one estimate; the report is
    their mean and standard error.
    """
    if m < 0 or lag_cutoff < 0:
        raise ParameterError("m and lag_cutoff must be >= 0")
    if grids < 2:
        raise ParameterError("need at least two grids for a standard error")
    side = side or 20 * max(m + lag_cutoff, 1)
    rect = Rect(side, side)
    meta = {"m": m, "lag_cutoff": lag_cutoff, "grids": grids, "side": side}
    if lag_cutoff < m:
        meta["warning"] = "lag_cutoff < m: the covariance series is truncated"
    if model.variant == "counterexample":
        raise UnsupportedModelError("series estimator needs a product-space model")
    if model.variant == "orthomartingale" and m < model.g.m_g:
        meta["warning"] = f"orthomartingale field is {model.g.m_g}-dependent; m = {m} is ignored"

    def one(g):
        s = stream.child("series", g)
        if model.variant == "linear":
            x = truncated_linear_batch(model, m, rect, np.asarray([s.key]))[0]
        elif model.variant in ("iid", "orthomartingale"):
            x = simulate_field(model, rect, s).values
        else:
            x = m_dependent_approx(model, m, rect, s, inner).values
        return autocovariance_sum(x, lag_cutoff)

    vals = np.array(map_chunks(lambda a, b: [one(g) for g in range(a, b)], grids, workers, 1)).ravel()
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(grids))
    return EstimatorReport(est, se, ((str(rect), est, se),), "series", meta)


# --------------------------------------------------------------------------
# moments and normality


def sample_moments(x: np.ndarray) -> dict:
    """Skewness and kurtosis with influence-function standard errors."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    sd = x.std()
    z = (x - x.mean()) / sd
    g = float(np.mean(z**3))
    k = float(np.mean(z**4))
    if_g = z**3 - g - 3 * z - 1.5 * g * (z**2 - 1)
    if_k = z**4 - k - 2 * k * (z**2 - 1) - 4 * g * z
    return {
        "skewness": g,
        "skewness_se": float(if_g.std() / math.sqrt(n)),
        "kurtosis": k,
        "excess_kurtosis": k - 3.0,
        "kurtosis_se": float(if_k.std() / math.sqrt(n)),
    }


def _check_sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLE:
        raise ParameterError(f"need at least {MIN_SAMPLE} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples must be finite")
    if not x.std() > 0:
        raise DegeneracyError("sample is constant (or its variance underflows)")
    return x


def ks_normality_test(samples, alpha: float = 0.05, variance: float | None = None) -> TestResult:
    """Kolmogorov-Smirnov test against N(0, variance), asymptotic p-value.

    Without ``variance`` the sample variance is plugged in, which makes the
    asymptotic p-value conservative.
    """
    x = _check_sample(samples)
    if variance is None:
        variance = float(x.var(ddof=1))
        source = "sample"
    else:
        if not variance > 0:
            raise ParameterError("variance must be positive")
        source = "provided"
    res = stats.kstest(x, "norm", args=(0.0, math.sqrt(variance)), method="asymp")
    p = float(min(max(res.pvalue, 0.0), 1.0))
    details = {"variance": float(variance), "variance_source": source, **sample_moments(x)}
    return TestResult(float(res.statistic), p, x.size, alpha, p < alpha, "ks", details)


def ks_two_sample(x, y, alpha: float = 0.05) -> TestResult:
    x, y = _check_sample(x), _check_sample(y)
    res = stats.ks_2samp(x, y, method="asymp")
    p = float(min(max(res.pvalue, 0.0), 1.0))
    return TestResult(float(res.statistic), p, x.size + y.size, alpha, p < alpha, "ks2",
                      {"n1": x.size, "n2": y.size})


def sup_cdf_distance(samples, values, probs) -> float:
    """sup_x |F_n(x) - F(x)| between an empirical sample and a discrete law."""
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values)
    v, cdf = values[order], np.cumsum(np.asarray(probs, dtype=np.float64)[order])
    # both are right-continuous steps; compare at every jump of either
    pts = np.union1d(v, x)
    Fn = np.searchsorted(x, pts, side="right") / x.size
    idx = np.searchsorted(v, pts, side="right") - 1
    F = np.where(idx >= 0, cdf[np.maximum(idx, 0)], 0.0)
    # left limits matter only where one side jumps and the other does not
    Fn_left = np.searchsorted(x, pts, side="left") / x.size
    idx_l = np.searchsorted(v, pts, side="left") - 1
    F_left = np.where(idx_l >= 0, cdf[np.maximum(idx_l, 0)], 0.0)
    return float(max(np.max(np.abs(Fn - F)), np.max(np.abs(Fn_left - F_left))))


# --------------------------------------------------------------------------
# finite-dimensional distributions of the sheet process


def sheet_covariance(t_grid) -> np.ndarray:
    """prod_i min(s_i, t_i) over all pairs of grid points."""
    t = np.atleast_2d(np.asarray(t_grid, dtype=np.float64))
    return np.minimum(t[:, None, 0], t[None, :, 0]) * np.minimum(t[:, None, 1], t[None, :, 1])


def exact_iid_sheet_covariance(t_grid, rect: Rect) -> np.ndarray:
    """E[B_s B_t] / |V| for a unit-variance iid field, from cell overlap areas."""
    t = np.atleast_2d(np.asarray(t_grid, dtype=np.float64))
    out = np.ones((len(t), len(t)))
    for axis, m in enumerate(rect.shape):
        cells = np.arange(m, dtype=np.float64)
        lam = np.clip(m * t[:, axis][:, None] - cells[None, :], 0.0, 1.0)  # (P, m)
        out *= lam @ lam.T / m
    return out


def sidak_pvalue(z: float, count: int) -> float:
    p1 = 2.0 * stats.norm.sf(abs(z))
    return float(-np.expm1(count * np.log1p(-min(p1, 1.0))) if p1 < 1 else 1.0)


def fdd_covariance_check(model: FieldModel, t_grid, rect: Rect, reps: int, stream: _rng.RngStream,
                         sigma2, workers: int = 1, target: str = "sheet",
                         z_crit: float = 3.0, alpha: float = 0.01) -> TestResult:
    """Empirical covariance of B_{n,t} / (sigma |V|^{1/2}) against the Brownian sheet.

    ``sigma2`` is an EstimatorReport (its standard error is propagated) or
    a known positive value. ``target`` is ``sheet`` for prod min(s_i, t_i)
    or ``iid`` for the exact finite-n overlap-area covariance. The statistic
    is the largest |z| over the distinct entries; ``reject`` means some
    entry lies more than ``z_crit`` standard errors from its target, and the
    p-value is the Sidak-adjusted two-sided normal tail.
    """
    if isinstance(sigma2, EstimatorReport):
        s2, s2_rel = sigma2.estimate, sigma2.rel_se
    else:
        s2, s2_rel = float(sigma2), 0.0
    if not s2 > 0:
        raise ParameterError("sigma^2 estimate must be positive")
    t = np.atleast_2d(np.asarray(t_grid, dtype=np.float64))
    if t.size == 0:
        raise ParameterError("t_grid must be nonempty")
    if reps < 2:
        raise ParameterError("reps must be >= 2")
    Y = simulate_batch(model, rect, stream, reps, workers,
                       reduce=lambda v: sheet_values(v, t)) / math.sqrt(rect.cardinality)
    prods = Y[:, :, None] * Y[:, None, :]
    C = prods.mean(axis=0) / s2
    se_mc = prods.std(axis=0, ddof=1) / math.sqrt(reps) / s2
    se = np.sqrt(se_mc**2 + (C * s2_rel) ** 2)
    if target == "sheet":
        T = sheet_covariance(t)
    elif target == "iid":
        T = exact_iid_sheet_covariance(t, rect) * (model.innovations.variance / s2)
    else:
        raise ParameterError(f"unknown target {target!r}")
    iu = np.triu_indices(len(t))
    z = (C - T)[iu] / se[iu]
    zmax = float(np.max(np.abs(z)))
    details = {"covariance": C.tolist(), "target": T.tolist(), "se": se.tolist(),
               "z": z.tolist(), "entries": int(z.size), "z_crit": z_crit,
               "sigma2": s2, "sigma2_rel_se": s2_rel}
    return TestResult(zmax, sidak_pvalue(zmax, z.size), reps, alpha, zmax > z_crit, "covariance", details)


# --------------------------------------------------------------------------
# product-normal reference


def product_normal_reference(reps: int, stream: _rng.RngStream, sigma_y: float = 1.0,
                             sigma_z: float = 1.0) -> np.ndarray:
    """i.i.d. draws of sigma_y N * sigma_z N' with independent standard normals."""
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    s = stream.child("product-normal")
    n = s.normal(np.arange(2 * reps)).reshape(reps, 2)
    return sigma_y * sigma_z * n[:, 0] * n[:, 1]
