"""Experiment drivers behind the CLI subcommands.

Each driver takes a validated scenario dict and returns an
:class:`Outcome`: an exit code, a JSON-serialisable report and the
artifacts to write (file name to text).  Nothing touches the filesystem
here, so a failing run leaves no partial output behind.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid

from ..dynamics import (ManyState, guidance_velocity_nr, guidance_velocity_nr_array, integrate_many,
                        integrate_nr_ensemble, integrate_single, nonrel_limit_deviation)
from ..errors import ConfigurationError
from ..expr import Expression
from ..geometry import Minkowski, conformal_equivalence, integrate_curved, integrate_many_curved
from ..massfield import tachyon_scan
from ..wavefield.providers import Event, SpacetimeGrid
from . import scenario as S

EXIT_OK = 0
EXIT_SCIENTIFIC = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

NONREL_EXPONENT_RANGE = (1.8, 2.2)
KS_COEFFICIENT = 1.36
DEFAULT_CONFORMAL_TOL = 1e-6


@dataclass
class Outcome:
    exit_code: int
    report: dict
    artifacts: dict = field(default_factory=dict)


def dumps(obj) -> str:
    """Canonical JSON used for every report (sorted keys, fixed indentation)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _record_artifacts(records, fmt: str, stem: str = "trajectory") -> dict:
    out = {}
    for i, rec in enumerate(records):
        if fmt == "csv":
            out[f"{stem}_{i}.csv"] = rec.to_csv_string()
        else:
            out[f"{stem}_{i}.json"] = rec.to_json_string() + "\n"
    return out


def _format(scn: dict, fmt: str | None) -> str:
    return fmt or scn.get("outputs", {}).get("format", "csv")


# --------------------------------------------------------------------------- run


def run_scenario(scn: dict, fmt: str | None = None) -> Outcome:
    """Integrate every particle of the scenario with the matching equation of motion."""
    start = time.perf_counter()
    params = S.mass_params(scn)
    provider = S.build_provider(scn)
    metric = S.build_metric(scn)
    field_ = S.build_mass_field(provider, params)
    init = S.initial_states(scn, provider, params, metric)
    dtau, steps, renorm = S.integrator_settings(scn)
    flat = isinstance(metric, Minkowski)
    if renorm and not flat:
        raise ConfigurationError("renormalize is only available in flat spacetime")
    n = len(init.states)
    if n == 1 and flat:
        records = [integrate_single(init.states[0], field_, params, dtau, steps, renormalize=renorm)]
    elif n == 1:
        records = [integrate_curved(init.states[0], metric, field_, params, dtau, steps)]
    elif flat:
        records = integrate_many(ManyState(init.states), field_, params, dtau, steps, renormalize=renorm)
    else:
        records = integrate_many_curved(ManyState(init.states), metric, field_, params, dtau, steps)
    runtime = time.perf_counter() - start
    vv = [r.max_vv_residual for r in records]
    summary = {
        "max_vv_residual": _clean(float(np.nanmax(vv))) if np.any(np.isfinite(vv)) else None,
        "max_vv_residual_per_particle": [_clean(v) for v in vv],
        "min_mass": float(min(np.nanmin(r.mass) for r in records)),
        "clamped_steps": int(records[0].clamped_steps),
        "node_steps": int(sum("node" in f for f in records[0].flags)),
        "runtime": runtime,
        "units": S.units_of(scn),
        "n_particles": n,
        "steps_requested": steps,
        "steps_completed": len(records[0]) - 1,
        "dtau": dtau,
        "exit_reason": records[0].exit_reason,
        "metric": metric.to_dict(),
        "wavefunction": scn["wavefunction"]["kind"],
        "initial_v0_projection": init.projections,
        "format": _format(scn, fmt),
    }
    artifacts = _record_artifacts(records, _format(scn, fmt))
    artifacts["summary.json"] = dumps(summary)
    return Outcome(EXIT_OK, summary, artifacts)


# --------------------------------------------------------------------------- tachyon scan


def scan_tachyon(scn: dict, fmt: str | None = None) -> Outcome:
    """Evaluate both mass fields over the scan grid; exit 0 iff the exponential mass stays positive."""
    if "scan" not in scn:
        raise ConfigurationError("scan-tachyon needs a 'scan' block with a grid")
    params = S.mass_params(scn)
    provider = S.build_provider(scn)
    if provider.n_particles != 1:
        raise ConfigurationError("scan-tachyon needs a single-particle wavefunction")
    grid = SpacetimeGrid(**scn["scan"]["grid"])
    rep = tachyon_scan(provider, grid, params, scn["scan"].get("h"))
    report = rep.to_dict()
    report["units"] = S.units_of(scn)
    report["h"] = float(scn["scan"].get("h", grid.dx))
    code = EXIT_OK if rep.positive else EXIT_SCIENTIFIC
    return Outcome(code, report, {"tachyon_report.json": dumps(report)})


# --------------------------------------------------------------------------- conformal comparison


def compare_conformal(scn: dict, fmt: str | None = None, tol: float | None = None) -> Outcome:
    """Flat quantum-force path against the affine geodesic of ``(M/m) eta``."""
    if len(scn["particles"]) != 1:
        raise ConfigurationError("compare-conformal needs exactly one particle")
    metric = S.build_metric(scn)
    if not isinstance(metric, Minkowski):
        raise ConfigurationError("compare-conformal needs a flat base metric")
    params = S.mass_params(scn)
    provider = S.build_provider(scn)
    field_ = S.build_mass_field(provider, params)
    init = S.initial_states(scn, provider, params, metric)
    dtau, steps, _ = S.integrator_settings(scn)
    if tol is None:
        tol = float(scn.get("conformal", {}).get("tol", DEFAULT_CONFORMAL_TOL))
    res = conformal_equivalence(init.states[0], field_, params, dtau, steps)
    ok = res["deviation"] <= tol
    report = {
        "deviation": res["deviation"],
        "tol": tol,
        "pass": bool(ok),
        "dtau": dtau,
        "steps": steps,
        "geodesic_steps": len(res["geodesic"]) - 1,
        "affine_span": res["affine_span"],
        "omega2_initial": res["omega2_initial"],
        "flat_exit_reason": res["flat"].exit_reason,
        "geodesic_exit_reason": res["geodesic"].exit_reason,
        "max_vv_residual_flat": _clean(res["flat"].max_vv_residual),
        "max_vv_residual_geodesic": _clean(res["geodesic"].max_vv_residual),
        "units": S.units_of(scn),
    }
    f = _format(scn, fmt)
    artifacts = {}
    artifacts.update(_record_artifacts([res["flat"]], f, "flat"))
    artifacts.update(_record_artifacts([res["geodesic"]], f, "geodesic"))
    artifacts["conformal_report.json"] = dumps(report)
    return Outcome(EXIT_OK if ok else EXIT_SCIENTIFIC, report, artifacts)


# --------------------------------------------------------------------------- non-relativistic limit


def compare_nonrel(scn: dict, fmt: str | None = None) -> Outcome:
    """Fit ``D(c) ~ c^-p``; exit 0 iff ``p`` is in range or every deviation vanishes."""
    block = scn.get("nonrel")
    if block is None:
        raise ConfigurationError("compare-nonrel needs a 'nonrel' block with c_values and duration")
    if len(scn["particles"]) != 1:
        raise ConfigurationError("compare-nonrel needs exactly one particle")
    if not isinstance(S.build_metric(scn), Minkowski):
        raise ConfigurationError("compare-nonrel needs flat spacetime")
    c_values = [float(c) for c in block["c_values"]]
    if len(c_values) < 3:
        raise ConfigurationError("compare-nonrel needs at least three c values for the exponent fit")
    params = S.mass_params(scn)
    p0 = scn["particles"][0]
    x0, t0 = float(p0["x0"]), float(p0.get("t0", 0.0))
    v = p0.get("v0", "rest")
    if v == "rest":
        u0 = 0.0
    elif isinstance(v, dict):
        u0 = float(v["u"])
    elif v == "guidance":
        u0 = guidance_velocity_nr(S.build_provider(scn), Event(t0, x0), params)
    else:
        raise ConfigurationError("compare-nonrel needs a c-independent initial velocity ('rest', 'guidance' or u)")
    dtau = float(block.get("dtau", scn.get("integrator", {}).get("dtau", S.DEFAULT_DTAU)))
    res = nonrel_limit_deviation(lambda c: S.build_provider(scn, c), params, x0, u0, float(block["duration"]),
                                 c_values, dtau, t0)
    p = res["exponent"]
    lo, hi = NONREL_EXPONENT_RANGE
    ok = res["exact_match"] or (p is not None and lo <= p <= hi)
    report = dict(res, exponent_range=[lo, hi], ok=bool(ok), units=S.units_of(scn))
    return Outcome(EXIT_OK if ok else EXIT_SCIENTIFIC, report, {"nonrel_report.json": dumps(report)})


# --------------------------------------------------------------------------- ensemble


def density_cdf(provider, t: float, x: np.ndarray) -> np.ndarray:
    """Normalised CDF of ``|psi(t, x)|^2`` on the grid ``x`` (trapezoid rule)."""
    rho = np.abs(provider.psi(np.full(x.shape, t), x)).astype(float) ** 2
    cdf = cumulative_trapezoid(rho, x, initial=0.0)
    if not cdf[-1] > 0:
        raise ConfigurationError("density vanishes on the ensemble grid")
    return cdf / cdf[-1]


def sample_density(provider, t: float, x: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples of ``|psi(t)|^2`` on the grid."""
    cdf = density_cdf(provider, t, x)
    u = rng.random(n)
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return np.interp(u, cdf[keep], x[keep])


def ks_distance(samples: np.ndarray, cdf: np.ndarray, x: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between samples and a gridded CDF."""
    return float(stats.kstest(samples, lambda s: np.interp(s, x, cdf)).statistic)


def ensemble(scn: dict, fmt: str | None = None, seed: int | None = None) -> Outcome:
    """Sample ``|psi(t0)|^2``, integrate the Bohm-Newton flow and compare with ``|psi(t)|^2``."""
    spec = scn.get("ensemble")
    if spec is None:
        raise ConfigurationError("ensemble needs an 'ensemble' block")
    params = S.mass_params(scn)
    provider = S.build_provider(scn)
    if provider.n_particles != 1 or provider.family != "schrodinger":
        raise ConfigurationError("the ensemble experiment needs a single-particle Schrodinger wavefunction")
    seed = int(spec.get("seed", 0) if seed is None else seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    n = int(spec["n_samples"])
    g = spec["grid"]
    x = np.linspace(float(g["x_min"]), float(g["x_max"]), int(g["n_x"]))
    t0 = float(scn["particles"][0].get("t0", 0.0))
    dt = float(spec.get("dt", 1e-2))
    times = sorted(float(t) for t in spec["times"])
    idx = [int(round((t - t0) / dt)) for t in times]
    if any(i < 0 or abs(t0 + i * dt - t) > 1e-9 * max(1.0, abs(t)) for i, t in zip(idx, times)):
        raise ConfigurationError("comparison times must be t0 plus whole multiples of dt")
    potential = spec.get("potential", scn["wavefunction"].get("potential"))
    potential = Expression(potential) if potential else None

    rng = np.random.default_rng(seed)
    x0 = sample_density(provider, t0, x, n, rng)
    u0 = guidance_velocity_nr_array(provider, t0, x0, params)
    _, xs = integrate_nr_ensemble(x0, u0, provider, params, dt, max(idx), t0, potential=potential)
    crit = KS_COEFFICIENT / math.sqrt(n)
    rows = []
    for t, i in zip(times, idx):
        d = ks_distance(xs[i], density_cdf(provider, t, x), x)
        rows.append({"t": t, "ks": d, "within_band": bool(d <= crit)})
    ok = all(r["within_band"] for r in rows)
    report = {"seed": seed, "n_samples": n, "dt": dt, "t0": t0, "critical_value": crit, "rows": rows,
              "ok": bool(ok), "units": S.units_of(scn)}
    return Outcome(EXIT_OK if ok else EXIT_SCIENTIFIC, report, {"ensemble_report.json": dumps(report)})


COMMANDS = {
    "run": run_scenario,
    "scan-tachyon": scan_tachyon,
    "compare-conformal": compare_conformal,
    "compare-nonrel": compare_nonrel,
    "ensemble": ensemble,
}
