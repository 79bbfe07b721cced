"""Stationary fields on a product probability space, and their generators.

A field value at lattice point (i, j) is ``f(eps shifted by (i, j))`` where
``eps`` is an i.i.d. innovation array. The supported forms of ``f`` are

``iid``              f = eps[0, 0]
``linear``           f = Z[0, 0],  Z[i, j] = sum_{r, s >= 0} a[r, s] eps[i - r, j - s]
``functional``       f = K(Z on the h x h block ending at (0, 0)) - E K
``orthomartingale``  f = eps[0, 0] * g(eps[-a, -b], 1 <= a, b <= m_g)

Innovations are indexed by absolute lattice coordinates through a
counter-based generator, so the value at a cell never depends on which
window was requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve
from scipy.special import gamma as gamma_fn

from . import rng as _rng
from ._parallel import DEFAULT_CHUNK, concat_chunks
from .coefficients import CoefficientFamily
from .errors import DimensionError, ParameterError, PreconditionError, UnsupportedModelError
from .lattice import FieldArray, Rect

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform")
VARIANTS = ("iid", "linear", "functional", "orthomartingale", "counterexample")
CENTERING_DRAWS = 1_000_000


# --------------------------------------------------------------------------
# innovations


@dataclass(frozen=True)
class InnovationSpec:
    """Mean-zero innovation law.

    ``scale`` is the variance for ``gaussian`` and the half-width for
    ``uniform``; it is ignored for ``rademacher``.
    """

    distribution: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ParameterError(f"unknown innovation law {self.distribution!r}")
        if not self.scale > 0:
            raise ParameterError("innovation scale must be positive")

    @property
    def variance(self) -> float:
        if self.distribution == "gaussian":
            return float(self.scale)
        if self.distribution == "uniform":
            return self.scale**2 / 3.0
        return 1.0

    def pnorm(self, p: float) -> float:
        """Exact (E|eps|^p)^(1/p)."""
        if self.distribution == "rademacher":
            return 1.0
        if self.distribution == "uniform":
            return self.scale / (p + 1.0) ** (1.0 / p)
        abs_moment = 2 ** (p / 2) * gamma_fn((p + 1) / 2) / math.sqrt(math.pi)
        return math.sqrt(self.scale) * abs_moment ** (1.0 / p)

    def from_bits(self, bits: np.ndarray) -> np.ndarray:
        if self.distribution == "rademacher":
            return _rng.bits_to_sign(bits)
        if self.distribution == "uniform":
            return self.scale * (2.0 * _rng.bits_to_uniform(bits) - 1.0)
        out = _rng.bits_to_normal(bits)
        if self.scale != 1.0:
            out *= math.sqrt(self.scale)
        return out

    def draw(self, keys, counters) -> np.ndarray:
        return self.from_bits(_rng.hash_bits(keys, counters))

    def block(self, keys, i0: int, j0: int, rows: int, cols: int) -> np.ndarray:
        """Innovations on the lattice block starting at (i0, j0) for each key.

        ``keys`` of shape S gives an array of shape S + (rows, cols).
        """
        keys = np.asarray(keys, dtype=np.uint64)
        counters = _rng.lattice_counters(i0, j0, rows, cols)
        return self.draw(keys[..., None, None], counters)

    def describe(self) -> dict:
        return {"distribution": self.distribution, "scale": self.scale}


def generate_innovations(spec: InnovationSpec, rect: Rect, margin: int,
                         stream: _rng.RngStream) -> FieldArray:
    """I.i.d. innovations on {1-margin..m1} x {1-margin..m2}."""
    if margin < 0:
        raise DimensionError("margin must be nonnegative")
    rows, cols = rect.m1 + margin, rect.m2 + margin
    values = spec.block(stream.key, 1 - margin, 1 - margin, rows, cols)
    return FieldArray(values, (1 - margin, 1 - margin), {"margin": margin})


# --------------------------------------------------------------------------
# linear fields


def convolve_valid(eps: np.ndarray, box: np.ndarray, method: str = "auto") -> np.ndarray:
    """out[..., a, b] = sum_{r, s} box[r, s] * eps[..., a + B - r, b + B - s].

    Only positions with the full history inside ``eps`` are returned, so the
    output loses B rows and B columns on the low side.
    """
    B1, B2 = box.shape
    H, W = eps.shape[-2:]
    if H < B1 or W < B2:
        raise PreconditionError(f"innovation block {H}x{W} smaller than kernel {B1}x{B2}")
    if method == "auto":
        method = "direct" if np.count_nonzero(box) <= 24 else "fft"
    if method == "fft":
        kernel = box.reshape((1,) * (eps.ndim - 2) + box.shape)
        return fftconvolve(eps, kernel, mode="valid", axes=(-2, -1))
    if method != "direct":
        raise ParameterError(f"unknown convolution method {method!r}")
    oh, ow = H - B1 + 1, W - B2 + 1
    out = np.zeros(eps.shape[:-2] + (oh, ow))
    for r in range(B1):
        for s in range(B2):
            a = box[r, s]
            if a != 0.0:
                out += a * eps[..., B1 - 1 - r:B1 - 1 - r + oh, B2 - 1 - s:B2 - 1 - s + ow]
    return out


def generate_linear_field(family: CoefficientFamily, innovations: FieldArray, B: int,
                          method: str = "auto") -> FieldArray:
    """Causal linear field truncated to coefficients in [0, B]^2.

    The result covers every lattice point whose B-step history lies inside
    the innovation block.
    """
    rows, cols = innovations.shape
    if rows <= B or cols <= B:
        raise PreconditionError(f"innovation margin too small for truncation radius {B}")
    z = convolve_valid(innovations.values, family.box(B), method)
    origin = (innovations.origin[0] + B, innovations.origin[1] + B)
    meta = {"truncation": B, "method": method}
    if family.summable:
        total = family.total_sum_sq()
        meta["omitted_fraction"] = family.omitted_sum_sq(B) / total if total > 0 else 0.0
    return FieldArray(z, origin, meta)


# --------------------------------------------------------------------------
# functionals of windows


def lexicographic_windows(x: np.ndarray, h: int) -> np.ndarray:
    """All h x h blocks of the last two axes, flattened row by row.

    Entry [..., a, b, :] lists x[..., a:a+h, b:b+h] in lexicographic order of
    lattice coordinates (row index first).
    """
    win = sliding_window_view(x, (h, h), axis=(-2, -1))
    return win.reshape(win.shape[:-2] + (h * h,))


@dataclass(frozen=True)
class Functional:
    """A functional K of an h x h window of the linear field.

    ``evaluator`` maps an array (..., h*h) of lexicographically ordered
    windows to (...). ``centering`` is a fixed constant to subtract; when it
    is None the model supplies one (analytic if ``analytic_mean`` returns a
    value, otherwise an empirical estimate). ``alpha`` and ``beta`` are the
    regularity exponents of K, kept as metadata.
    """

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    h: int = 1
    centering: float | None = None
    alpha: float | None = None
    beta: float | None = None
    analytic_mean: Callable[[float, InnovationSpec], float | None] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.h < 1:
            raise ParameterError("window size h must be >= 1")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ParameterError("alpha must lie in (0, 1]")
        if self.beta is not None and self.beta < 1:
            raise ParameterError("beta must be >= 1")

    def __call__(self, windows: np.ndarray) -> np.ndarray:
        return self.evaluator(windows)


def _abs_mean(v, spec):
    return math.sqrt(2.0 * v / math.pi) if spec.distribution == "gaussian" else None


def _weights(h):
    return np.arange(1, h * h + 1, dtype=np.float64)


BUILTIN_FUNCTIONALS = {
    # name: (evaluator factory, fixed centering, analytic mean, alpha, beta)
    "identity": (lambda h: (lambda w: w[..., -1]), 0.0, None, 1.0, 1.0),
    "sum": (lambda h: (lambda w: w.sum(axis=-1)), 0.0, None, 1.0, 1.0),
    "weighted": (lambda h: (lambda w: w @ _weights(h)), 0.0, None, 1.0, 1.0),
    "tanh": (lambda h: (lambda w: np.tanh(w.sum(axis=-1))), 0.0, None, 1.0, 1.0),
    "abs": (lambda h: (lambda w: np.abs(w[..., -1])), None, _abs_mean, 1.0, 1.0),
    "square": (lambda h: (lambda w: w[..., -1] ** 2), None, lambda v, spec: v, 1.0, 2.0),
    "max": (lambda h: (lambda w: w.max(axis=-1)), None, None, 1.0, 1.0),
}


def builtin_functional(name: str, h: int = 1) -> Functional:
    """Named functionals. Single-value ones act on the window's last entry, Z[k, l]."""
    try:
        factory, centering, mean, alpha, beta = BUILTIN_FUNCTIONALS[name]
    except KeyError:
        raise ParameterError(f"unknown functional {name!r}; choose from {sorted(BUILTIN_FUNCTIONALS)}") from None
    return Functional(name, factory(h), h, centering, alpha, beta, mean)


def apply_functional(K: Functional, z: FieldArray, centering: float | None = None) -> FieldArray:
    """Centered K of each h x h window {k-h+1..k} x {l-h+1..l} of ``z``."""
    h = K.h
    if z.shape[0] < h or z.shape[1] < h:
        raise PreconditionError(f"field {z.shape} has no room for {h}x{h} windows")
    c = K.centering if centering is None else centering
    if c is None:
        raise PreconditionError(f"functional {K.name!r} has no fixed centering; pass one explicitly")
    out = np.asarray(K(lexicographic_windows(z.values, h)), dtype=np.float64) - c
    return FieldArray(out, (z.origin[0] + h - 1, z.origin[1] + h - 1), dict(z.meta))


# --------------------------------------------------------------------------
# orthomartingale differences


@dataclass(frozen=True)
class WindowG:
    """g of the strict-past block eps[i-a, j-b], 1 <= a, b <= m_g, flattened lexicographically."""

    name: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    m_g: int = 1

    def __call__(self, windows):
        return self.evaluator(windows)


BUILTIN_G = {
    "one": lambda w: np.ones(w.shape[:-1]),
    "lag": lambda w: w[..., -1],  # eps[i-1, j-1]
    "product": lambda w: np.prod(w, axis=-1),
    "tanhsum": lambda w: np.tanh(w.sum(axis=-1)),
}


def builtin_g(name: str, m_g: int = 1) -> WindowG:
    if name not in BUILTIN_G:
        raise ParameterError(f"unknown g {name!r}; choose from {sorted(BUILTIN_G)}")
    if m_g < 1:
        raise ParameterError("m_g must be >= 1")
    return WindowG(name, BUILTIN_G[name], m_g)


def _ortho_valid(eps: np.ndarray, g: WindowG) -> np.ndarray:
    m = g.m_g
    past = lexicographic_windows(eps[..., :-1, :-1], m)  # blocks ending at (i-1, j-1)
    return eps[..., m:, m:] * np.asarray(g(past), dtype=np.float64)


def generate_orthomartingale_field(g: WindowG, m_g: int, innovations: FieldArray) -> FieldArray:
    """eps[i, j] * g(strict south-west past) on every point with full history."""
    if m_g != g.m_g:
        g = WindowG(g.name, g.evaluator, m_g)
    if innovations.shape[0] <= m_g or innovations.shape[1] <= m_g:
        raise PreconditionError(f"innovation margin too small for m_g={m_g}")
    out = _ortho_valid(innovations.values, g)
    return FieldArray(out, (innovations.origin[0] + m_g, innovations.origin[1] + m_g), dict(innovations.meta))


# --------------------------------------------------------------------------
# the composite model


@dataclass(frozen=True)
class FieldModel:
    variant: str
    innovations: InnovationSpec = InnovationSpec()
    coefficients: CoefficientFamily | None = None
    functional: Functional | None = None
    g: WindowG | None = None
    truncation: int | None = None
    counterexample_kind: str | None = None
    conv_method: str = "auto"
    centering_draws: int = CENTERING_DRAWS

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown model variant {self.variant!r}")
        if self.variant in ("linear", "functional") and self.coefficients is None:
            raise ParameterError(f"{self.variant} model needs coefficients")
        if self.variant == "functional" and self.functional is None:
            raise ParameterError("functional model needs a functional K")
        if self.variant == "orthomartingale" and self.g is None:
            raise ParameterError("orthomartingale model needs g")
        if self.variant == "counterexample" and self.counterexample_kind not in ("product", "sum"):
            raise ParameterError("counterexample kind must be 'product' or 'sum'")
        if self.truncation is not None and self.truncation < 0:
            raise ParameterError("truncation radius must be >= 0")
        if self.coefficients is not None and not self.coefficients.summable:
            raise ParameterError(f"coefficients with q={self.coefficients.q} are not square-summable (q > 1 required)")

    # constructors ---------------------------------------------------------
    @classmethod
    def iid(cls, innovations: InnovationSpec = InnovationSpec()):
        return cls("iid", innovations)

    @classmethod
    def linear(cls, coefficients, innovations: InnovationSpec = InnovationSpec(), truncation=None, **kw):
        return cls("linear", innovations, coefficients, truncation=truncation, **kw)

    @classmethod
    def with_functional(cls, coefficients, K: Functional, innovations: InnovationSpec = InnovationSpec(),
                        truncation=None, **kw):
        return cls("functional", innovations, coefficients, functional=K, truncation=truncation, **kw)

    @classmethod
    def orthomartingale(cls, g: WindowG, innovations: InnovationSpec = InnovationSpec()):
        return cls("orthomartingale", innovations, g=g)

    @classmethod
    def counterexample(cls, kind: str):
        return cls("counterexample", counterexample_kind=kind)

    # derived quantities ---------------------------------------------------
    @cached_property
    def B(self) -> int:
        """Truncation radius of the coefficient box (0 without coefficients)."""
        if self.coefficients is None:
            return 0
        if self.truncation is not None:
            return int(self.truncation)
        return self.coefficients.default_truncation()

    @property
    def h(self) -> int:
        return self.functional.h if self.functional is not None else 1

    @property
    def margin(self) -> int:
        """Rows/columns of history needed below the observation window."""
        if self.variant in ("linear", "functional"):
            return self.B + self.h - 1
        if self.variant == "orthomartingale":
            return self.g.m_g
        return 0

    @cached_property
    def box(self) -> np.ndarray:
        return self.coefficients.box(self.B)

    @property
    def z_variance(self) -> float:
        """Variance of the truncated linear field."""
        return self.innovations.variance * float(np.sum(self.box**2))

    @cached_property
    def centering(self) -> tuple[float, float, str]:
        """(constant, standard error, method) subtracted from K."""
        if self.variant != "functional":
            return (0.0, 0.0, "none")
        K = self.functional
        if K.centering is not None:
            return (float(K.centering), 0.0, "fixed")
        if K.analytic_mean is not None:
            val = K.analytic_mean(self.z_variance, self.innovations)
            if val is not None:
                return (float(val), 0.0, "analytic")
        return empirical_centering(self, self.centering_draws)

    def _require_product_space(self, op: str):
        if self.variant == "counterexample":
            raise UnsupportedModelError(f"{op} is not defined for the counterexample processes")

    # evaluation -------------------------------------------------------------
    def evaluate(self, eps: np.ndarray) -> np.ndarray:
        """Field values from an innovation block (..., H, W).

        The output covers the positions with full history, i.e. it drops
        ``margin`` rows and columns on the low side.
        """
        self._require_product_space("evaluate")
        if self.variant == "iid":
            return eps
        if self.variant == "orthomartingale":
            return _ortho_valid(eps, self.g)
        z = convolve_valid(eps, self.box, self.conv_method)
        if self.variant == "linear":
            return z
        K = self.functional
        return np.asarray(K(lexicographic_windows(z, K.h)), dtype=np.float64) - self.centering[0]

    def evaluate_keys(self, keys: np.ndarray, rect: Rect) -> np.ndarray:
        """Field on ``rect`` for every innovation key; shape keys.shape + rect.shape."""
        M = self.margin
        eps = self.innovations.block(keys, 1 - M, 1 - M, rect.m1 + M, rect.m2 + M)
        return self.evaluate(eps)

    def describe(self) -> dict:
        d = {"variant": self.variant, "innovations": self.innovations.describe()}
        if self.coefficients is not None:
            d["coefficients"] = self.coefficients.describe()
            d["truncation"] = self.B
            total = self.coefficients.total_sum_sq()
            d["omitted_fraction"] = self.coefficients.omitted_sum_sq(self.B) / total if total else 0.0
        if self.functional is not None:
            c, se, how = self.centering
            d["functional"] = {"name": self.functional.name, "h": self.functional.h,
                               "centering": c, "centering_se": se, "centering_method": how}
        if self.g is not None:
            d["g"] = {"name": self.g.name, "m_g": self.g.m_g}
        if self.counterexample_kind is not None:
            d["counterexample_kind"] = self.counterexample_kind
        return d


def empirical_centering(model: FieldModel, draws: int = CENTERING_DRAWS,
                        stream: _rng.RngStream | None = None) -> tuple[float, float, str]:
    """Mean of K over i.i.d. window draws, with its standard error."""
    stream = stream or _rng.RngStream(0).child("centering", model.functional.name)
    K, B = model.functional, model.B
    n = B + K.h
    chunk = max(1, 2_000_000 // (n * n))
    total, total_sq, done = 0.0, 0.0, 0
    while done < draws:
        m = min(chunk, draws - done)
        keys = stream.child_keys(np.arange(done, done + m))
        eps = model.innovations.block(keys, -n + 1, -n + 1, n, n)
        z = convolve_valid(eps, model.box, "direct" if n <= 8 else model.conv_method)
        vals = np.asarray(K(z.reshape(m, K.h * K.h)), dtype=np.float64)
        total += float(vals.sum())
        total_sq += float((vals**2).sum())
        done += m
    mean = total / draws
    var = max(total_sq / draws - mean**2, 0.0)
    return (mean, math.sqrt(var / draws), "empirical")


# --------------------------------------------------------------------------
# simulation entry points


def simulate_field(model: FieldModel, rect: Rect, stream: _rng.RngStream) -> FieldArray:
    """One realisation of the field on {1..m1} x {1..m2}."""
    values = model.evaluate_keys(np.asarray([stream.key]), rect)[0]
    return FieldArray(values, (1, 1), {"truncation": model.B, **stream.provenance()})


def simulate_batch(model: FieldModel, rect: Rect, stream: _rng.RngStream, reps: int,
                   workers: int = 1, chunk: int = DEFAULT_CHUNK, reduce=None) -> np.ndarray:
    """Replicates ``stream.child(r)`` for r < reps, optionally reduced per replicate.

    ``reduce`` maps a (chunk, m1, m2) array to per-replicate statistics; use
    it to avoid holding every field in memory.
    """
    if reps < 1:
        raise ParameterError("reps must be >= 1")

    def run(a, b):
        vals = model.evaluate_keys(stream.child_keys(np.arange(a, b)), rect)
        return vals if reduce is None else reduce(vals)

    return concat_chunks(run, reps, workers, chunk)


# --------------------------------------------------------------------------
# m-dependent approximation


def m_dependent_approx(model: FieldModel, m: int, grid: Rect, stream: _rng.RngStream,
                       inner: int = 64) -> FieldArray:
    """E(f o T_k | innovations in the (2m+1)^2 block centred at k) on ``grid``.

    Uses the same innovations as ``simulate_field(model, grid, stream)``.
    For linear fields this is exact truncation of the coefficients to
    [0, m]^2; for functionals the conditional expectation is a Monte Carlo
    average over ``inner`` redraws of the innovations outside the block.
    """
    if m < 0:
        raise ParameterError("m must be >= 0")
    if model.variant not in ("iid", "linear", "functional"):
        raise UnsupportedModelError(
            f"m-dependent approximation is not available for the {model.variant} variant")
    if model.variant == "iid":
        return simulate_field(model, grid, stream)
    if model.variant == "linear":
        vals = truncated_linear_batch(model, m, grid, np.asarray([stream.key]))[0]
        return FieldArray(vals, (1, 1), {"m": m, "truncation": model.B, "exact": True})
    return _mdep_functional(model, m, grid, stream, inner)


def truncated_linear_batch(model: FieldModel, m: int, rect: Rect, keys) -> np.ndarray:
    """Batch of linear fields truncated to [0, m]^2, same innovations as evaluate_keys."""
    box = model.box.copy()
    box[m + 1:, :] = 0.0
    box[:, m + 1:] = 0.0
    M = model.B
    eps = model.innovations.block(keys, 1 - M, 1 - M, rect.m1 + M, rect.m2 + M)
    return convolve_valid(eps, box, model.conv_method)


def _mdep_functional(model, m, grid, stream, inner):
    B, h = model.B, model.h
    if m >= B + h - 1:
        out = simulate_field(model, grid, stream)
        out.meta.update({"m": m, "exact": True})
        return out
    if inner < 1:
        raise ParameterError("inner must be >= 1")
    n = B + h  # footprint side: rows k-h+1-B .. k
    M = model.margin
    eps = model.innovations.block(stream.key, 1 - M, 1 - M, grid.m1 + M, grid.m2 + M)
    patches = sliding_window_view(eps, (n, n))  # (m1, m2, n, n), patch of cell (k, l)
    off = np.arange(-(n - 1), 1)
    outside = (off[:, None] < -m) | (off[None, :] < -m)
    flip = model.box[::-1, ::-1]
    K = model.functional
    kk = np.arange(1, grid.m1 + 1)[:, None]
    ll = np.arange(1, grid.m2 + 1)[None, :]
    cells = _rng.cell_counter(kk, ll)
    positions = np.arange(n * n, dtype=np.int64).reshape(n, n)
    acc = np.zeros(grid.shape)
    inner_stream = stream.child("mdep-inner", m)
    for t in range(inner):
        cell_keys = _rng.fold_key(inner_stream.child(t).key, cells)
        fresh = model.innovations.draw(cell_keys[..., None, None], positions)
        local = np.where(outside, fresh, patches)
        zwin = np.empty(grid.shape + (h * h,))
        for u in range(h):
            for v in range(h):
                sub = local[..., u:u + B + 1, v:v + B + 1]
                zwin[..., u * h + v] = np.tensordot(sub, flip, axes=([-2, -1], [0, 1]))
        acc += np.asarray(K(zwin), dtype=np.float64)
    vals = acc / inner - model.centering[0]
    return FieldArray(vals, (1, 1), {"m": m, "inner": inner, "exact": False})


# --------------------------------------------------------------------------
# counterexample: products and sums of independent random walks


def simulate_counterexample(kind: str, n: int, reps: int, stream: _rng.RngStream,
                            sigma_y: float = 1.0, sigma_z: float = 1.0) -> np.ndarray:
    """Normalised endpoints of two independent Gaussian random walks.

    ``product`` returns (Y_n / sqrt n) * (Z_n / sqrt n); ``sum`` returns
    Y_n / sqrt n + Z_n / sqrt n. Increments are drawn explicitly.
    """
    if kind not in ("product", "sum"):
        raise ParameterError(f"kind must be 'product' or 'sum', got {kind!r}")
    if n < 1 or reps < 1:
        raise ParameterError("n and reps must be >= 1")
    steps = np.arange(n, dtype=np.int64)
    keys = stream.child_keys(np.arange(reps))[:, None]
    d = sigma_y * _rng.bits_to_normal(_rng.hash_bits(_rng.fold_key(keys, 1), steps))
    e = sigma_z * _rng.bits_to_normal(_rng.hash_bits(_rng.fold_key(keys, 2), steps))
    y = d.sum(axis=1) / math.sqrt(n)
    z = e.sum(axis=1) / math.sqrt(n)
    return y * z if kind == "product" else y + z
