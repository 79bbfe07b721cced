"""Strict parser for experiment configuration files.

Grammar: one ``section.key = value`` assignment per line; ``#`` starts a
comment; blank lines are ignored. Every key must appear in ``SCHEMA``.
Parsing collects all problems before failing, each tagged with its line
number.

Value syntax:

* rectangles are ``<rows>x<cols>``; a schedule is a comma-separated list
* ``test.t_grid`` is a comma-separated list of levels in [0, 1]; the grid
  is their Cartesian square
* booleans are ``true`` or ``false``
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError, DimensionError, ParameterError
from .lattice import Rect
from .models import BUILTIN_FUNCTIONALS, BUILTIN_G, DISTRIBUTIONS, VARIANTS

KINDS = ("simulate", "sigma2", "clt", "fdd", "projective", "counterexample", "oracle")
ORACLE_CHECKS = ("commuting", "marginal", "distribution", "moment")
ORACLE_FUNCTIONS = ("eps00", "product_lag", "random")
U64 = 1 << 64

_LINE = re.compile(r"^\s*([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(.*?)\s*$")


def _int(lo=None, hi=None):
    def parse(text):
        v = int(text)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        if hi is not None and v >= hi:
            raise ValueError(f"must be < {hi}")
        return v
    return parse


def _float(lo=None, hi=None, lo_open=False, hi_open=False):
    def parse(text):
        v = float(text)
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("must be finite")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ValueError(f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ValueError(f"must be {'<' if hi_open else '<='} {hi}")
        return v
    return parse


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _bool(text):
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ValueError("must be true or false")


def _rect(text):
    try:
        return Rect.parse(text)
    except DimensionError as exc:
        raise ValueError(str(exc)) from None


def _schedule(text):
    return tuple(_rect(part) for part in text.split(","))


def _levels(text):
    vals = tuple(float(x) for x in text.split(","))
    if not vals or any(not 0.0 <= v <= 1.0 for v in vals):
        raise ValueError("levels must lie in [0, 1]")
    return vals


def _string(text):
    if not text:
        raise ValueError("must be nonempty")
    return text


# key: (parser, default); a default of None means optional with no value
SCHEMA = {
    "experiment.kind": (_choice(KINDS), None),
    "experiment.seed": (_int(0, U64), 0),
    "experiment.reps": (_int(1), 500),
    "experiment.rect": (_rect, Rect(64, 64)),
    "experiment.schedule": (_schedule, None),
    "experiment.workers": (_int(1), 1),
    "model.variant": (_choice(VARIANTS), "iid"),
    "model.innovation": (_choice(DISTRIBUTIONS), "gaussian"),
    "model.innovation_scale": (_float(0, lo_open=True), 1.0),
    "model.coefficients": (_choice(("delta", "additive", "product")), "product"),
    "model.q": (_float(), None),
    "model.truncation": (_int(0), None),
    "model.functional": (_choice(tuple(BUILTIN_FUNCTIONALS)), "identity"),
    "model.h": (_int(1), 1),
    "model.g": (_choice(tuple(BUILTIN_G)), "lag"),
    "model.m_g": (_int(1), 1),
    "mc.outer": (_int(2), 4096),
    "mc.inner": (_int(1), 64),
    "mc.m": (_int(0), 8),
    "mc.lag_cutoff": (_int(0), None),
    "mc.grids": (_int(2), 16),
    "mc.kmax": (_int(1), 4),
    "mc.lmax": (_int(1), 4),
    "mc.p": (_float(2), 2.0),
    "mc.sigma2_reps": (_int(2), 2000),
    "test.alpha": (_float(0, 1, lo_open=True, hi_open=True), 0.01),
    "test.t_grid": (_levels, (0.25, 0.5, 0.75, 1.0)),
    "counterexample.kind": (_choice(("product", "sum")), "product"),
    "counterexample.n": (_int(1), 64),
    "counterexample.sigma_y": (_float(0, lo_open=True), 1.0),
    "counterexample.sigma_z": (_float(0, lo_open=True), 1.0),
    "oracle.check": (_choice(ORACLE_CHECKS), "commuting"),
    "oracle.rows": (_int(1), 3),
    "oracle.cols": (_int(1), 3),
    "oracle.instances": (_int(1), 100),
    "oracle.function": (_choice(ORACLE_FUNCTIONS), "product_lag"),
    "oracle.p": (_float(2), 2.0),
    "output.dir": (_string, "out"),
    "output.raw": (_bool, False),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings; unset optional keys hold their defaults."""

    values: dict
    explicit: frozenset = field(default_factory=frozenset)
    text: str = ""

    def __getitem__(self, key):
        return self.values[key]

    @property
    def kind(self) -> str:
        return self.values["experiment.kind"]

    def replace(self, **updates) -> "ExperimentConfig":
        """Copy with keys overridden; use ``section__key`` for ``section.key``."""
        vals = dict(self.values)
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ParameterError(f"unknown key {key!r}")
            vals[key] = v
        return ExperimentConfig(vals, self.explicit | {k.replace("__", ".") for k in updates}, self.text)

    def echo(self) -> dict:
        """Nested, JSON-ready view of every setting."""
        out: dict = {}
        for key, v in sorted(self.values.items()):
            section, name = key.split(".")
            if isinstance(v, Rect):
                v = str(v)
            elif isinstance(v, tuple):
                v = [str(x) if isinstance(x, Rect) else x for x in v]
            out.setdefault(section, {})[name] = v
        return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; raise ConfigError listing every violation."""
    violations: list[str] = []
    seen: dict[str, int] = {}
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        m = _LINE.match(body)
        if not m:
            violations.append(f"line {lineno}: expected 'section.key = value', got {body!r}")
            continue
        key, value = m.group(1), m.group(2)
        if key not in SCHEMA:
            violations.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            violations.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        raw[key] = (value, lineno)

    values = {k: default for k, (_, default) in SCHEMA.items()}
    for key, (value, lineno) in raw.items():
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            violations.append(f"line {lineno}: {key} = {value!r}: {exc}")

    def where(key):
        return f"line {raw[key][1]}" if key in raw else "config"

    if values["experiment.kind"] is None:
        violations.append("config: experiment.kind is required")
    variant = values["model.variant"]
    if variant in ("linear", "functional") and values["model.coefficients"] != "delta":
        q = values["model.q"]
        if q is None and "model.q" not in raw:
            violations.append(f"config: model.q is required for {values['model.coefficients']} coefficients")
        elif q is not None and not q > 1:
            violations.append(f"{where('model.q')}: model.q = {q} must exceed 1 for square-summable coefficients")
    sched = values["experiment.schedule"]
    if sched:
        for a, b in zip(sched, sched[1:]):
            if not (b.m1 > a.m1 and b.m2 > a.m2):
                violations.append(f"{where('experiment.schedule')}: schedule must increase strictly in both dimensions")
                break
    if values["mc.lag_cutoff"] is None:
        values["mc.lag_cutoff"] = values["mc.m"]
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(values, frozenset(raw), text)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
