"""Run a configured experiment and write its outputs.

Every run writes ``summary.json`` (schema tag, config echo, results, wall
clock, RNG provenance) and one or more CSV tables into the output
directory. CSV floats use Python's shortest round-trip ``repr`` so that
reruns can be compared byte for byte.

CSV columns by experiment kind:

==============  ==========================================================
simulate        simulate.csv: rep,sum,mean,sum_sq
sigma2          sigma2.csv: method,scale,estimate,se
clt             clt.csv: scale,rep_count,sigma2_hat,ks_stat,ks_p
fdd             fdd.csv: s1,s2,t1,t2,cov,target,se,z
projective      projective.csv: k,l,norm,se,partial,partial_se
                condition_series.csv: K,partial,cauchy_gap (parametric families)
counterexample  counterexample.csv: test,statistic,p_value,reject
oracle          oracle.csv: depends on the check (see ``_oracle``)
==============  ==========================================================

With ``output.raw = true`` a ``<kind>_raw.csv`` holds per-replicate samples.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import limit, oracle, projective
from .coefficients import CoefficientFamily
from .config import ExperimentConfig
from .lattice import Rect
from .models import (FieldModel, InnovationSpec, builtin_functional, builtin_g,
                     simulate_batch, simulate_counterexample)
from .rng import RngStream

SCHEMA_TAG = "fieldclt.run/1"
CONDITION_SERIES_KMAX = 512


@dataclass
class RunReport:
    summary: dict
    files: list

    @property
    def results(self) -> dict:
        return self.summary["results"]


# --------------------------------------------------------------------------
# helpers


def build_model(cfg: ExperimentConfig) -> FieldModel:
    innov = InnovationSpec(cfg["model.innovation"], cfg["model.innovation_scale"])
    variant = cfg["model.variant"]
    if variant == "iid":
        return FieldModel.iid(innov)
    if variant == "orthomartingale":
        return FieldModel.orthomartingale(builtin_g(cfg["model.g"], cfg["model.m_g"]), innov)
    if variant == "counterexample":
        return FieldModel.counterexample(cfg["counterexample.kind"])
    kind = cfg["model.coefficients"]
    fam = CoefficientFamily.delta() if kind == "delta" else CoefficientFamily(kind, cfg["model.q"])
    if variant == "linear":
        return FieldModel.linear(fam, innov, cfg["model.truncation"])
    K = builtin_functional(cfg["model.functional"], cfg["model.h"])
    return FieldModel.with_functional(fam, K, innov, cfg["model.truncation"])


def closed_form_sigma2(model: FieldModel, m: int | None = None) -> float | None:
    """sigma^2 (or sigma_m^2) where it is known in closed form."""
    if model.variant == "iid":
        return model.innovations.variance
    if model.variant == "linear":
        box = model.box if m is None else model.box[:m + 1, :m + 1]
        return model.innovations.variance * float(box.sum()) ** 2
    if model.variant == "orthomartingale":
        # orthogonal increments: sigma^2 = E f^2 = Var(eps) E g^2
        v = model.innovations.variance
        return {"one": v, "lag": v * v}.get(model.g.name)
    return None


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, Rect):
        return str(x)
    return x


def _test_dict(t: limit.TestResult) -> dict:
    return {"tag": t.tag, "statistic": t.statistic, "p_value": t.p_value, "n": t.n,
            "alpha": t.alpha, "reject": t.reject, **{k: v for k, v in t.details.items()
                                                       if not isinstance(v, list)}}


def _report_dict(r: limit.EstimatorReport) -> dict:
    return {"method": r.method, "estimate": r.estimate, "se": r.se,
            "sequence": [list(s) for s in r.sequence], **r.meta}


# --------------------------------------------------------------------------
# experiment kinds


def _simulate(cfg, model, root, out, raw):
    rect, reps = cfg["experiment.rect"], cfg["experiment.reps"]
    stream = root.child("simulate")
    fields = simulate_batch(model, rect, stream, reps, cfg["experiment.workers"])
    sums = fields.sum(axis=(1, 2))
    means = fields.mean(axis=(1, 2))
    sumsq = (fields**2).sum(axis=(1, 2))
    files = [write_csv(out / "simulate.csv", ["rep", "sum", "mean", "sum_sq"],
                       zip(range(reps), sums, means, sumsq))]
    if raw:
        i, j = np.meshgrid(np.arange(1, rect.m1 + 1), np.arange(1, rect.m2 + 1), indexing="ij")
        rows = ((r, a, b, v) for r in range(reps)
                for a, b, v in zip(i.ravel(), j.ravel(), fields[r].ravel()))
        files.append(write_csv(out / "simulate_raw.csv", ["rep", "i", "j", "value"], rows))
    pooled_var = float(np.mean(fields**2))
    results = {"grid_mean": float(means.mean()),
               "grid_mean_se": float(means.std(ddof=1) / math.sqrt(reps)) if reps > 1 else None,
               "pointwise_second_moment": pooled_var}
    if model.coefficients is not None:
        results["model_variance"] = model.z_variance
    return results, files, {"simulate": stream.provenance()}


def _sigma2(cfg, model, root, out, raw):
    rect = cfg["experiment.rect"]
    schedule = cfg["experiment.schedule"] or (rect,)
    s_scaling, s_series = root.child("sigma2", "scaling"), root.child("sigma2", "series")
    scaling, sums = limit.estimate_sigma2_scaling(model, schedule, cfg["experiment.reps"], s_scaling,
                                                  cfg["experiment.workers"], return_sums=True)
    rows = [("scaling", sc, est, se) for sc, est, se in scaling.sequence]
    results = {"scaling": _report_dict(scaling), "closed_form_sigma2": closed_form_sigma2(model)}
    m, lag = cfg["mc.m"], cfg["mc.lag_cutoff"]
    series = limit.estimate_sigma2_series(model, m, lag, s_series, cfg["mc.grids"],
                                          inner=cfg["mc.inner"], workers=cfg["experiment.workers"])
    rows += [("series", sc, est, se) for sc, est, se in series.sequence]
    results["series"] = _report_dict(series)
    results["closed_form_sigma2_m"] = closed_form_sigma2(model, m)
    combined = math.hypot(scaling.se, series.se)
    results["agreement_z"] = (series.estimate - scaling.estimate) / combined if combined > 0 else 0.0
    files = [write_csv(out / "sigma2.csv", ["method", "scale", "estimate", "se"], rows)]
    if raw:
        files.append(write_csv(out / "sigma2_raw.csv", ["scale", "rep", "sum"],
                               ((str(sc), r, v) for sc, s in zip(schedule, sums) for r, v in enumerate(s))))
    return results, files, {"scaling": s_scaling.provenance(), "series": s_series.provenance()}


def _clt(cfg, model, root, out, raw):
    rect = cfg["experiment.rect"]
    schedule = cfg["experiment.schedule"] or (rect,)
    workers, alpha = cfg["experiment.workers"], cfg["test.alpha"]
    s_norm, s_test = root.child("clt", "sigma2"), root.child("clt", "samples")
    sigma2 = limit.estimate_sigma2_scaling(model, [schedule[-1]], cfg["mc.sigma2_reps"], s_norm, workers)
    rows, tests, samples = [], [], []
    for i, sc in enumerate(schedule):
        s = limit.partial_sums(model, sc, cfg["experiment.reps"], s_test.child(i), workers)
        t = limit.ks_normality_test(s / math.sqrt(sc.cardinality), alpha, sigma2.estimate)
        rows.append((str(sc), s.size, sigma2.estimate, t.statistic, t.p_value))
        tests.append({"scale": str(sc), **_test_dict(t)})
        samples.append(s)
    results = {"sigma2": _report_dict(sigma2), "tests": tests,
               "closed_form_sigma2": closed_form_sigma2(model)}
    cf = results["closed_form_sigma2"]
    if cf:
        results["sigma2_rel_error"] = abs(sigma2.estimate - cf) / cf
    files = [write_csv(out / "clt.csv", ["scale", "rep_count", "sigma2_hat", "ks_stat", "ks_p"], rows)]
    if raw:
        files.append(write_csv(out / "clt_raw.csv", ["scale", "rep", "sum"],
                               ((str(sc), r, v) for sc, s in zip(schedule, samples) for r, v in enumerate(s))))
    return results, files, {"sigma2": s_norm.provenance(), "samples": s_test.provenance()}


def _grid(levels):
    return np.array([(a, b) for a in levels for b in levels])


def _fdd(cfg, model, root, out, raw):
    rect, workers = cfg["experiment.rect"], cfg["experiment.workers"]
    t = _grid(cfg["test.t_grid"])
    s_norm, s_test = root.child("fdd", "sigma2"), root.child("fdd", "samples")
    sigma2 = limit.estimate_sigma2_scaling(model, [rect], cfg["mc.sigma2_reps"], s_norm, workers)
    res = limit.fdd_covariance_check(model, t, rect, cfg["experiment.reps"], s_test, sigma2,
                                     workers, alpha=cfg["test.alpha"])
    C, T, se = (np.asarray(res.details[k]) for k in ("covariance", "target", "se"))
    rows = [(tuple(t[a]), tuple(t[b])) for a in range(len(t)) for b in range(a, len(t))]
    iu = np.triu_indices(len(t))
    z = np.asarray(res.details["z"])
    table = [(s[0], s[1], u[0], u[1], C[a, b], T[a, b], se[a, b], zz)
             for (s, u), a, b, zz in zip(rows, iu[0], iu[1], z)]
    files = [write_csv(out / "fdd.csv", ["s1", "s2", "t1", "t2", "cov", "target", "se", "z"], table)]
    if raw:
        Y = simulate_batch(model, rect, s_test, cfg["experiment.reps"], workers,
                           reduce=lambda v: limit.sheet_values(v, t)) / math.sqrt(rect.cardinality)
        files.append(write_csv(out / "fdd_raw.csv", ["rep", "t1", "t2", "value"],
                               ((r, p[0], p[1], Y[r, k]) for r in range(Y.shape[0]) for k, p in enumerate(t))))
    return ({"sigma2": _report_dict(sigma2), "test": _test_dict(res)}, files,
            {"sigma2": s_norm.provenance(), "samples": s_test.provenance()})


def _projective(cfg, model, root, out, raw):
    stream = root.child("projective")
    rep = projective.delta_tilde_partial(model, cfg["mc.kmax"], cfg["mc.lmax"], cfg["mc.p"],
                                         cfg["mc.outer"], cfg["mc.inner"], stream,
                                         workers=cfg["experiment.workers"])
    rows = [(e.k, e.l, e.value, e.se, rep.partial[e.k - 1, e.l - 1], rep.partial_se[e.k - 1, e.l - 1])
            for e in rep.estimates]
    files = [write_csv(out / "projective.csv", ["k", "l", "norm", "se", "partial", "partial_se"], rows)]
    results = {"delta_tilde_partial": rep.value, "se": rep.se, "p": rep.p,
               "methods": sorted({e.method for e in rep.estimates}),
               "caveats": sorted({e.meta["caveat"] for e in rep.estimates if "caveat" in e.meta})}
    fam = model.coefficients
    if fam is not None and fam.kind in ("additive", "product"):
        h = model.h
        alpha = model.functional.alpha if model.functional is not None and model.functional.alpha else 1.0
        P = projective.condition_series_partial(fam, alpha, h, CONDITION_SERIES_KMAX)
        half = CONDITION_SERIES_KMAX // 2
        gaps = [P[2 * K - 1] - P[K - 1] if K <= half else "" for K in range(1, CONDITION_SERIES_KMAX + 1)]
        files.append(write_csv(out / "condition_series.csv", ["K", "partial", "cauchy_gap"],
                               zip(range(1, CONDITION_SERIES_KMAX + 1), P, gaps)))
        axis = "diagonal" if fam.kind == "additive" else "row"
        results["tail_exponent"] = projective.fitted_exponent(fam, range(8, 129), axis)
        results["classification"] = projective.classify(fam, alpha)
        results["cauchy_gaps"] = {str(K): P[2 * K - 1] - P[K - 1] for K in (16, 32, 64, 128, 256)}
    return results, files, {"projective": stream.provenance()}


def _counterexample(cfg, model, root, out, raw):
    kind, n, reps = cfg["counterexample.kind"], cfg["counterexample.n"], cfg["experiment.reps"]
    sy, sz, alpha = cfg["counterexample.sigma_y"], cfg["counterexample.sigma_z"], cfg["test.alpha"]
    s_sim, s_ref = root.child("counterexample", kind), root.child("counterexample", "reference")
    x = simulate_counterexample(kind, n, reps, s_sim, sy, sz)
    results = {"kind": kind, "n": n, "reps": reps, "variance": float(x.var(ddof=1))}
    if kind == "product":
        normal = limit.ks_normality_test(x, alpha)
        ref = limit.product_normal_reference(reps, s_ref, sy, sz)
        two = limit.ks_two_sample(x, ref, alpha)
        tests = [("normality", normal), ("ks_vs_product_normal", two)]
        results["reference_variance"] = (sy * sz) ** 2
    else:
        target = sy**2 + sz**2
        normal = limit.ks_normality_test(x, alpha, target)
        tests = [("normality", normal)]
        results["reference_variance"] = target
        results["variance_rel_error"] = abs(results["variance"] - target) / target
    results["tests"] = {name: _test_dict(t) for name, t in tests}
    files = [write_csv(out / "counterexample.csv", ["test", "statistic", "p_value", "reject"],
                       [(name, t.statistic, t.p_value, t.reject) for name, t in tests])]
    if raw:
        files.append(write_csv(out / "counterexample_raw.csv", ["rep", "value"], enumerate(x)))
    return results, files, {"simulation": s_sim.provenance(), "reference": s_ref.provenance()}


def _oracle_function(name, rng):
    if name == "eps00":
        return oracle.eps_00()
    if name == "product_lag":
        return oracle.eps_product_lag()
    return oracle.random_mean_zero_function(rng)


def _random_disjoint(rng, n):
    labels = rng.integers(0, 4, size=n)  # 3 means unused
    return [np.flatnonzero(labels == c).tolist() for c in range(3)]


def _oracle(cfg, model, root, out, raw):
    """Oracle checks.

    commuting / marginal: oracle.csv ``instance,deviation`` over random X
    distribution: oracle.csv ``value,probability`` for S over experiment.rect on a
    rows x cols space, plus a Monte Carlo comparison
    moment: oracle.csv ``instance,m,n,p,lhs,rhs0,ratio,adapted_ratio``
    """
    check = cfg["oracle.check"]
    seed_stream = root.child("oracle", check)
    rng = np.random.default_rng(int(seed_stream.key))
    space = oracle.FiniteSpace((1, cfg["oracle.rows"]), (1, cfg["oracle.cols"]))
    results = {"check": check}
    if check in ("commuting", "marginal"):
        devs = []
        for _ in range(cfg["oracle.instances"]):
            X = oracle.ExactRandomVariable(space, rng.standard_normal(space.outcome_shape))
            if check == "commuting":
                devs.append(oracle.verify_commuting(X, *_random_disjoint(rng, space.ncells)))
            else:
                devs.append(max(oracle.verify_marginal_commuting(X, i, j)
                                for i in range(1, space.rows[1] + 1) for j in range(1, space.cols[1] + 1)))
        results["cells"] = space.ncells
        results["max_deviation"] = max(devs)
        files = [write_csv(out / "oracle.csv", ["instance", "deviation"], enumerate(devs))]
    elif check == "distribution":
        f = _oracle_function(cfg["oracle.function"], rng)
        rect = cfg["experiment.rect"]
        # anchor the space so the earliest window cell of f o T_{1,1} is its corner
        r0 = 1 + min(o[0] for o in f.offsets)
        c0 = 1 + min(o[1] for o in f.offsets)
        space = oracle.FiniteSpace((r0, r0 + cfg["oracle.rows"] - 1), (c0, c0 + cfg["oracle.cols"] - 1))
        dist = oracle.exact_distribution_S(f, rect, space)
        results.update({"rect": str(rect), "cells": space.ncells, "mean": dist.mean, "variance": dist.variance,
                        "table": dist.as_dict()})
        files = [write_csv(out / "oracle.csv", ["value", "probability"], zip(dist.values, dist.probs))]
        mc_model = {"eps00": FieldModel.iid(InnovationSpec("rademacher")),
                    "product_lag": FieldModel.orthomartingale(builtin_g("lag"), InnovationSpec("rademacher"))
                    }.get(cfg["oracle.function"])
        if mc_model is not None:
            s_mc = seed_stream.child("mc")
            sums = limit.partial_sums(mc_model, rect, cfg["experiment.reps"], s_mc, cfg["experiment.workers"])
            results["mc_reps"] = int(sums.size)
            results["sup_cdf_distance"] = limit.sup_cdf_distance(sums, dist.values, dist.probs)
            if raw:
                files.append(write_csv(out / "oracle_raw.csv", ["rep", "sum"], enumerate(sums)))
    else:
        rows = []
        name = cfg["oracle.function"]
        m, n = cfg["experiment.rect"].shape
        for inst in range(cfg["oracle.instances"] if name == "random" else 1):
            f = _oracle_function(name, rng)
            r = oracle.moment_inequality_ratio(f, m, n, cfg["oracle.p"])
            rows.append((inst, m, n, r.p, r.lhs, r.rhs0, r.ratio, r.adapted_ratio))
        results["max_ratio"] = max(r[6] for r in rows)
        results["max_adapted_ratio"] = max(r[7] for r in rows)
        results["notes"] = list(r.notes)
        files = [write_csv(out / "oracle.csv",
                           ["instance", "m", "n", "p", "lhs", "rhs0", "ratio", "adapted_ratio"], rows)]
    return results, files, {"oracle": seed_stream.provenance()}


DISPATCH = {
    "simulate": _simulate,
    "sigma2": _sigma2,
    "clt": _clt,
    "fdd": _fdd,
    "projective": _projective,
    "counterexample": _counterexample,
    "oracle": _oracle,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Dispatch on ``experiment.kind`` and write the summary and CSV tables."""
    out = Path(out_dir or cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    root = RngStream(cfg["experiment.seed"])
    start = time.perf_counter()
    model = None
    if cfg.kind not in ("counterexample", "oracle"):
        model = build_model(cfg)
    results, files, streams = DISPATCH[cfg.kind](cfg, model, root, out, cfg["output.raw"])
    summary = {
        "schema": SCHEMA_TAG,
        "kind": cfg.kind,
        "config": cfg.echo(),
        "model": model.describe() if model is not None else None,
        "results": results,
        "replicates": cfg["experiment.reps"],
        "workers": cfg["experiment.workers"],
        "wall_clock_s": time.perf_counter() - start,
        "rng": {"seed": int(cfg["experiment.seed"]), "streams": streams},
        "files": [p.name for p in files],
    }
    summary = jsonable(summary)
    path = out / "summary.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunReport(summary, [path] + files)
