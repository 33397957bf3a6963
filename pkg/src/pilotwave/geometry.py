"""1+1D metrics, Christoffel symbols and motion in curved spacetime.

Coordinates are ``(x0, x) = (c t, x)`` with signature (+,-).  Three metric
kinds are supported: Minkowski, diagonal static metrics
``diag(f(x), -g(x))`` with closed-form ``f`` and ``g``, and conformal
rescalings ``Omega^2(t, x) * base`` whose factor is either a constant or a
live mass field ``M / m``.

The curved equation of motion is

    dv^mu/dtau = -Gamma^mu_{nu kappa} v^nu v^kappa
                 + (c^2 g^{mu nu} d_nu M - v^mu v^nu d_nu M) / 2M

which reduces to the flat law for Minkowski.  For a flat base and
``Omega^2 = M/m`` the affine geodesics of the rescaled metric trace the
same coordinate paths as the flat quantum-force law, with the affine
parameter related to proper time by ``ds = sqrt(M/m) dtau``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import (ManyState, ParticleState, TrajectoryRecord, _single_record, many_force, path_deviation,
                       quantum_force, rk4_run)
from .errors import ConfigurationError, InitializationError, MetricError
from .expr import Expression
from .massfield import MassParams

ETA = np.diag([1.0, -1.0])


class Metric:
    """Base class.  Subclasses implement :meth:`components` and :meth:`christoffels`."""

    kind = "abstract"

    def components(self, t: float, x: float) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, t: float, x: float) -> np.ndarray:
        return np.linalg.inv(self.components(t, x))

    def christoffels(self, t: float, x: float) -> np.ndarray:
        """``Gamma[mu, nu, kappa]`` at ``(t, x)``, symmetric in the last two indices."""
        raise NotImplementedError

    def check_signature(self, t: float, x: float) -> np.ndarray:
        g = self.components(t, x)
        if not np.all(np.isfinite(g)):
            raise MetricError(f"{self.kind}: non-finite metric at t={t}, x={x}")
        if not (g[0, 0] > 0 and np.linalg.det(g) < 0):
            raise MetricError(f"{self.kind}: metric is not Lorentzian (+,-) at t={t}, x={x}")
        return g

    def to_dict(self) -> dict:
        return {"type": self.kind}


class Minkowski(Metric):
    kind = "minkowski"

    def components(self, t, x):
        return ETA.copy()

    def inverse(self, t, x):
        return ETA.copy()

    def christoffels(self, t, x):
        return np.zeros((2, 2, 2))


class DiagonalStatic(Metric):
    """``g = diag(f(x), -g(x))`` with ``f, g > 0`` given as closed-form expressions.

    Christoffels use the exact symbolic derivatives ``f'`` and ``g'``::

        Gamma^0_{01} = f'/2f,  Gamma^1_{00} = f'/2g,  Gamma^1_{11} = g'/2g
    """

    kind = "diagonal_static"

    def __init__(self, f, g="1"):
        self.f = f if isinstance(f, Expression) else Expression(f)
        self.g = g if isinstance(g, Expression) else Expression(g)

    def _fg(self, x):
        f = float(self.f(x))
        g = float(self.g(x))
        if not (f > 0 and g > 0 and math.isfinite(f) and math.isfinite(g)):
            raise MetricError(f"diagonal_static: need f > 0 and g > 0, got f={f}, g={g} at x={x}")
        return f, g

    def components(self, t, x):
        f, g = self._fg(x)
        return np.diag([f, -g])

    def inverse(self, t, x):
        f, g = self._fg(x)
        return np.diag([1.0 / f, -1.0 / g])

    def christoffels(self, t, x):
        f, g = self._fg(x)
        fp = float(self.f.derivative(x))
        gp = float(self.g.derivative(x))
        gam = np.zeros((2, 2, 2))
        gam[0, 0, 1] = gam[0, 1, 0] = fp / (2.0 * f)
        gam[1, 0, 0] = fp / (2.0 * g)
        gam[1, 1, 1] = gp / (2.0 * g)
        return gam

    def to_dict(self):
        return {"type": self.kind, "f": self.f.text, "g": self.g.text}


class ConstantFactor:
    """Conformal factor ``Omega^2 = value`` with vanishing gradient."""

    def __init__(self, value: float):
        if not value > 0:
            raise ConfigurationError("conformal factor must be positive")
        self.value = float(value)

    def evaluate(self, t, x):
        return self.value, np.zeros(2)


class MassFactor:
    """Conformal factor ``Omega^2 = M / m`` from a mass-field accessor."""

    def __init__(self, mass_field, m: float):
        self.mass_field = mass_field
        self.m = float(m)

    def evaluate(self, t, x):
        """``(Omega^2, d_mu Omega^2)`` at ``(t, x)``."""
        gm = self.mass_field.gradient(t, x)
        return gm.value / self.m, gm.lower / self.m


class ConformalMetric(Metric):
    """``Omega^2(t, x) * base``.

    Christoffels follow from the base ones plus
    ``delta^mu_nu a_kappa + delta^mu_kappa a_nu - g_{nu kappa} g^{mu lam} a_lam``
    with ``a = d ln Omega = (1/2) d Omega^2 / Omega^2``.
    """

    kind = "conformal"

    def __init__(self, base: Metric, factor):
        self.base = base
        self.factor = ConstantFactor(factor) if isinstance(factor, (int, float)) else factor

    def components(self, t, x):
        w, _ = self.factor.evaluate(t, x)
        return w * self.base.components(t, x)

    def inverse(self, t, x):
        w, _ = self.factor.evaluate(t, x)
        return self.base.inverse(t, x) / w

    def christoffels(self, t, x):
        w, dw = self.factor.evaluate(t, x)
        return self._christoffels(t, x, w, dw)

    def _christoffels(self, t, x, w, dw):
        a = 0.5 * np.asarray(dw, dtype=float) / w
        g = self.base.components(t, x)
        ginv = self.base.inverse(t, x)
        eye = np.eye(2)
        gam = self.base.christoffels(t, x).copy()
        gam += np.einsum("mn,k->mnk", eye, a) + np.einsum("mk,n->mnk", eye, a)
        gam -= np.einsum("nk,m->mnk", g, ginv @ a)
        return gam

    def to_dict(self):
        d = {"type": self.kind, "base": self.base.to_dict()}
        if isinstance(self.factor, ConstantFactor):
            d["factor"] = self.factor.value
        else:
            d["factor"] = "mass"
        return d


def christoffels(metric: Metric, e) -> np.ndarray:
    """Christoffel symbols ``Gamma[mu, nu, kappa]`` of ``metric`` at event ``e``."""
    metric.check_signature(e.t, e.x)
    return metric.christoffels(e.t, e.x)


def conformal_metric(base: Metric, mass_field, params: MassParams) -> ConformalMetric:
    """``g~ = (M/m) g`` with the mass field as the live conformal factor."""
    return ConformalMetric(base, MassFactor(mass_field, params.m))


def metric_from_spec(spec: dict | None) -> Metric:
    """Build a metric from ``{"type": "minkowski"}`` or ``{"type": "diagonal_static", "f": .., "g": ..}``."""
    if spec is None:
        return Minkowski()
    kind = spec.get("type")
    if kind == "minkowski":
        return Minkowski()
    if kind == "diagonal_static":
        return DiagonalStatic(spec["f"], spec.get("g", "1"))
    raise ConfigurationError(f"unknown metric type {kind!r}")


# --------------------------------------------------------------------------- equations of motion


def geodesic_term(gam: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``Gamma^mu_{nu kappa} v^nu v^kappa``."""
    return np.einsum("mnk,n,k->m", gam, v, v)


def accel_curved(state: ParticleState, metric: Metric, mass_field, params: MassParams) -> np.ndarray:
    """4-acceleration of the curved quantum-force law at ``state``."""
    t, x = state.position.t, state.position.x
    ginv = metric.inverse(t, x)
    gm = mass_field.gradient(t, x, inverse=ginv)
    v = state.velocity
    return quantum_force(v, gm.lower, gm.upper, gm.value, params.c) - geodesic_term(metric.christoffels(t, x), v)


def _curved_deriv(metric, mass_field, c):
    flat = isinstance(metric, Minkowski)

    def deriv(y):
        t, x = y[0], y[1]
        v = y[2:4]
        ginv = None if flat else metric.inverse(t, x)
        gm = mass_field.gradient(t, x, inverse=ginv)
        a = quantum_force(v, gm.lower, gm.upper, gm.value, c)
        if not flat:
            a = a - geodesic_term(metric.christoffels(t, x), v)
        return np.array([v[0] / c, v[1], a[0], a[1]]), (gm.value, gm.clamped, gm.node_adjacent)
    return deriv


def integrate_curved(initial: ParticleState, metric: Metric, mass_field, params: MassParams, dtau: float,
                     n_steps: int) -> TrajectoryRecord:
    """RK4 in proper time for the curved quantum-force law."""
    c = params.c
    g0 = metric.check_signature(initial.position.t, initial.position.x)
    if abs(initial.vv(g0) - c**2) > 1e-9 * c**2:
        raise InitializationError("initial state is not normalised in the given metric")
    ys, infos, sflags, exit_reason = rk4_run(initial.as_vector(), _curved_deriv(metric, mass_field, c), dtau,
                                             n_steps)
    return _single_record(ys, infos, sflags, exit_reason, dtau, initial.tau, c, g_fn=metric.components,
                          meta={"kind": "curved", "metric": metric.to_dict(), "dtau": dtau})


def _geodesic_deriv(metric, c):
    def deriv(y):
        t, x = y[0], y[1]
        v = y[2:4]
        if isinstance(metric, ConformalMetric):
            w, dw = metric.factor.evaluate(t, x)
            gam = metric._christoffels(t, x, w, dw)
        else:
            w, gam = 1.0, metric.christoffels(t, x)
        a = -geodesic_term(gam, v)
        # the info slot carries the conformal factor so the record needs no re-evaluation
        return np.array([v[0] / c, v[1], a[0], a[1]]), (w, False, False)
    return deriv


def integrate_geodesic(metric: Metric, initial: ParticleState, dlambda: float, n_steps: int,
                       c: float = 1.0) -> TrajectoryRecord:
    """RK4 on the affinely parametrised geodesic equation.

    The ``tau`` column holds the affine parameter and ``vv_residual`` the
    drift of ``g(w, w) - c^2``; the mass column is NaN.
    """
    g0 = metric.check_signature(initial.position.t, initial.position.x)
    if abs(initial.vv(g0) - c**2) > 1e-9 * c**2:
        raise InitializationError("initial velocity must satisfy g(w, w) = c^2")
    ys, infos, sflags, exit_reason = rk4_run(initial.as_vector(), _geodesic_deriv(metric, c), dlambda, n_steps)
    if isinstance(metric, ConformalMetric):
        base = metric.base
        factors = iter([i[0] for i in infos])
        g_fn = lambda t, x: next(factors) * base.components(t, x)  # noqa: E731
    else:
        g_fn = metric.components
    rec = _single_record(ys, infos, sflags, exit_reason, dlambda, initial.tau, c, g_fn=g_fn,
                         meta={"kind": "geodesic", "metric": metric.to_dict(), "dlambda": dlambda})
    rec.mass = np.full(len(rec), np.nan)
    rec.energy_proxy = None
    return rec


def killing_energy(rec: TrajectoryRecord, metric: DiagonalStatic) -> np.ndarray:
    """``f(x) w^0`` along a record; conserved on geodesics of static metrics."""
    return np.asarray(metric.f(rec.x), dtype=float) * rec.v0


def accel_many_curved(states: ManyState, metric: Metric, mass_field, params: MassParams) -> np.ndarray:
    """Per-particle 4-accelerations of the N-particle law in curved spacetime, shape (N, 2)."""
    ts = np.array([s.position.t for s in states.states])
    xs = np.array([s.position.x for s in states.states])
    vs = np.array([s.velocity for s in states.states])
    n = states.n
    if isinstance(metric, Minkowski):
        gm = mass_field.gradient(ts, xs)
        return many_force(vs, gm.lower, gm.upper, gm.value, params.c)
    inverses = [metric.inverse(ts[i], xs[i]) for i in range(n)]
    gm = mass_field.gradient(ts, xs, inverses)
    acc = many_force(vs, gm.lower, gm.upper, gm.value, params.c)
    for i in range(n):
        acc[i] -= geodesic_term(metric.christoffels(ts[i], xs[i]), vs[i])
    return acc


def integrate_many_curved(initial: ManyState, metric: Metric, mass_field, params: MassParams, dtau: float,
                          n_steps: int) -> list:
    """Lockstep RK4 of the N-particle curved law; one record per particle."""
    from .dynamics import integrate_many

    if isinstance(metric, Minkowski):
        return integrate_many(initial, mass_field, params, dtau, n_steps)
    n, c = initial.n, params.c

    def deriv(y):
        y = y.reshape(n, 4)
        inverses = [metric.inverse(y[i, 0], y[i, 1]) for i in range(n)]
        gm = mass_field.gradient(y[:, 0], y[:, 1], inverses)
        vs = y[:, 2:4]
        acc = many_force(vs, gm.lower, gm.upper, gm.value, c)
        for i in range(n):
            acc[i] -= geodesic_term(metric.christoffels(y[i, 0], y[i, 1]), vs[i])
        dy = np.concatenate([vs[:, :1] / c, vs[:, 1:2], acc], axis=1)
        return dy.reshape(-1), (gm.value, gm.clamped, gm.node_adjacent)

    y0 = np.concatenate([s.as_vector() for s in initial.states])
    ys, infos, sflags, exit_reason = rk4_run(y0, deriv, dtau, n_steps)
    return [_single_record(ys[:, 4 * i: 4 * i + 4], infos, sflags, exit_reason, dtau, s.tau, c,
                           g_fn=metric.components,
                           meta={"kind": "many_curved", "particle": i, "n_particles": n, "dtau": dtau})
            for i, s in enumerate(initial.states)]


# --------------------------------------------------------------------------- conformal equivalence


def conformal_equivalence(initial: ParticleState, mass_field, params: MassParams, dtau: float,
                          n_steps: int) -> dict:
    """Flat quantum-force path versus the affine geodesic of ``(M/m) eta``.

    The geodesic starts from ``w = v / sqrt(M/m)``, which is normalised in
    the rescaled metric, and runs with affine step ``dtau`` until it covers
    the coordinate-time span of the flat run (``ds = sqrt(M/m) dtau``).
    Returns both records and their :func:`path_deviation`.
    """
    from .dynamics import integrate_single

    c = params.c
    flat = integrate_single(initial, mass_field, params, dtau, n_steps)
    metric = conformal_metric(Minkowski(), mass_field, params)
    omega2 = mass_field.value(initial.position.t, initial.position.x) / params.m
    w0 = initial.velocity / math.sqrt(omega2)
    geo_init = ParticleState(initial.position, w0, 0.0)
    span = float(trapezoid(np.sqrt(flat.mass / params.m), flat.tau))
    n_geo = int(math.ceil(span / dtau)) + 4
    geo = integrate_geodesic(metric, geo_init, dtau, n_geo, c)
    return {"flat": flat, "geodesic": geo, "deviation": path_deviation(flat, geo),
            "affine_span": span, "omega2_initial": omega2}


__all__ = [
    "ConformalMetric", "ConstantFactor", "DiagonalStatic", "MassFactor", "Metric", "Minkowski",
    "accel_curved", "accel_many_curved", "christoffels", "conformal_equivalence", "conformal_metric",
    "geodesic_term", "integrate_curved", "integrate_many_curved", "integrate_geodesic", "killing_energy", "metric_from_spec",
]
