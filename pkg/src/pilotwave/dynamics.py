"""Second-order particle dynamics in a quantum mass field.

Coordinates are ``(x0, x) = (c t, x)`` with Minkowski metric ``diag(1, -1)``;
a 4-velocity ``v = (v0, v1) = (c dt/dtau, dx/dtau)`` is on shell when
``v.v = v0^2 - v1^2 = c^2``.  The single-particle law is

    M dv^mu/dtau = 1/2 (c^2 d^mu M - v^mu (v.dM))

and the N-particle law replaces ``1/2 c^2`` by ``1/2 N^2 c^2`` and couples
the particles through ``v^j.d_j M``.  Integration is classical RK4 in
proper time without renormalisation of ``v``: the drift of ``v.v`` is the
main diagnostic.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (ComparisonError, ConfigurationError, DomainError, InitializationError,
                     NodeError, NumericalError)
from .massfield import MassParams, QuantumMassField
from .wavefield.derivatives import D2, box_and_amp, phase_gradient, work_dtype
from .wavefield.providers import Event, WavefieldProvider

CSV_COLUMNS = ("step", "tau", "t", "x", "v0", "v1", "vv_residual", "mass", "flags")
ETA = np.diag([1.0, -1.0])


# --------------------------------------------------------------------------- states


@dataclass
class ParticleState:
    """Position, 4-velocity ``(v0, v1)`` and accumulated proper time."""

    position: Event
    velocity: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)
        if not np.all(np.isfinite(self.velocity)):
            raise ValueError("non-finite velocity")

    def vv(self, g=ETA) -> float:
        return float(self.velocity @ g @ self.velocity)

    def as_vector(self) -> np.ndarray:
        return np.array([self.position.t, self.position.x, *self.velocity])

    @classmethod
    def on_shell(cls, t: float, x: float, v1: float, c: float = 1.0, g=None, tau: float = 0.0):
        """State with spatial component ``v1`` and ``v0`` solved from ``g(v, v) = c^2``."""
        g = ETA if g is None else np.asarray(g)
        g00, g11 = g[0, 0], g[1, 1]
        rad = (c**2 - g11 * v1**2) / g00
        if g[0, 1] != 0 or rad <= 0:
            raise InitializationError("cannot solve the mass-shell condition for v0")
        return cls(Event(t, x), np.array([math.sqrt(rad), v1]), tau)

    @classmethod
    def from_coordinate_velocity(cls, t: float, x: float, u: float, c: float = 1.0, tau: float = 0.0):
        """State moving with ``dx/dt = u`` (``|u| < c``) in flat spacetime."""
        if abs(u) >= c:
            raise InitializationError("coordinate speed must be below c")
        gamma = 1.0 / math.sqrt(1.0 - (u / c) ** 2)
        return cls(Event(t, x), np.array([gamma * c, gamma * u]), tau)

    @classmethod
    def at_rest(cls, t: float, x: float, c: float = 1.0, tau: float = 0.0):
        return cls(Event(t, x), np.array([c, 0.0]), tau)


@dataclass
class ManyState:
    states: list

    def __post_init__(self):
        if len(self.states) < 1:
            raise ConfigurationError("ManyState needs at least one particle")

    @property
    def n(self) -> int:
        return len(self.states)


# --------------------------------------------------------------------------- records


@dataclass
class TrajectoryRecord:
    """Per-step output of one particle; columns are numpy arrays."""

    step: np.ndarray
    tau: np.ndarray
    t: np.ndarray
    x: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    vv_residual: np.ndarray
    mass: np.ndarray
    flags: list
    energy_proxy: np.ndarray | None = None
    exit_reason: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.step)

    @property
    def max_vv_residual(self) -> float:
        r = np.abs(self.vv_residual)
        r = r[np.isfinite(r)]
        return float(r.max()) if r.size else float("nan")

    @property
    def clamped_steps(self) -> int:
        return sum("clamped" in f for f in self.flags)

    def rows(self):
        for i in range(len(self)):
            yield {"step": int(self.step[i]), "tau": float(self.tau[i]), "t": float(self.t[i]),
                   "x": float(self.x[i]), "v0": float(self.v0[i]), "v1": float(self.v1[i]),
                   "vv_residual": float(self.vv_residual[i]), "mass": float(self.mass[i]),
                   "flags": self.flags[i]}

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([row["step"]] + [repr(row[k]) for k in CSV_COLUMNS[1:-1]] + [row["flags"]])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv_string())

    def to_dict(self) -> dict:
        d = {k: [_json_float(v) for v in getattr(self, k)] for k in CSV_COLUMNS[1:-1]}
        d["step"] = [int(s) for s in self.step]
        d["flags"] = list(self.flags)
        if self.energy_proxy is not None:
            d["energy_proxy"] = [_json_float(v) for v in self.energy_proxy]
        d["exit_reason"] = self.exit_reason
        d["meta"] = self.meta
        return d

    def to_json_string(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json_string())

    @classmethod
    def from_csv(cls, path) -> "TrajectoryRecord":
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
        return cls(np.array([int(r["step"]) for r in rows]), col("tau"), col("t"), col("x"), col("v0"),
                   col("v1"), col("vv_residual"), col("mass"), [r["flags"] for r in rows])


def _json_float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _flags(clamped, node, extra=()):
    parts = []
    if clamped:
        parts.append("clamped")
    if node:
        parts.append("node")
    parts.extend(extra)
    return "|".join(parts)


# --------------------------------------------------------------------------- RK4 driver


def rk4_run(y0: np.ndarray, deriv: Callable, h: float, n_steps: int, project: Callable | None = None):
    """Fixed-step RK4 of ``dy/ds = f(y)``.

    ``deriv(y)`` returns ``(dy, info)`` where ``info = (mass, clamped, node)``
    at ``y``.  Returns ``(ys, infos, step_flags, exit_reason)``; the run is
    truncated (not raised) when ``deriv`` leaves the provider domain.  A
    non-finite state or one with ``v0 <= 0`` raises :class:`NumericalError`
    carrying the last good step.
    """
    if not h > 0:
        raise ConfigurationError("step must be positive")
    if n_steps < 0:
        raise ConfigurationError("n_steps must be >= 0")
    y = np.array(y0, dtype=float)
    try:
        k1, info = deriv(y)
    except (DomainError, NodeError) as exc:
        raise ConfigurationError(f"initial state outside the usable domain: {exc}") from exc
    ys, infos, stage_flags = [y], [info], [(False, False)]
    exit_reason = None

    def stage(z, n):
        # an overflowing stage is a numerical failure, not a trip outside the provider domain
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite RK4 stage in step {n + 1}",
                                 last_good={"step": n, "y": y.tolist()})
        return deriv(z)

    for n in range(n_steps):
        try:
            k2, i2 = stage(y + 0.5 * h * k1, n)
            k3, i3 = stage(y + 0.5 * h * k2, n)
            k4, i4 = stage(y + h * k3, n)
            y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if project is not None:
                y_new = project(y_new)
            if not np.all(np.isfinite(y_new)):
                raise NumericalError(f"non-finite state after step {n + 1}",
                                     last_good={"step": n, "y": y.tolist()})
            # states are blocks of (t, x, v0, v1); a worldline must stay future-directed
            if np.any(y_new.reshape(-1, 4)[:, 2] <= 0):
                raise NumericalError(f"worldline turned past-directed (v0 <= 0) at step {n + 1}",
                                     last_good={"step": n, "y": y.tolist()})
            k1, info = deriv(y_new)
        except (DomainError, NodeError) as exc:
            exit_reason = f"domain_exit at step {n + 1}: {exc}"
            break
        y = y_new
        ys.append(y)
        infos.append(info)
        stage_flags.append((any(i[1] for i in (i2, i3, i4)), any(i[2] for i in (i2, i3, i4))))
    return np.array(ys), infos, stage_flags, exit_reason


def _single_record(ys, infos, stage_flags, exit_reason, h, tau0, c, g_fn=None, meta=None):
    n = len(ys)
    step = np.arange(n)
    tau = tau0 + h * step
    v = ys[:, 2:4]
    if g_fn is None:
        vv = v[:, 0] ** 2 - v[:, 1] ** 2
    else:
        vv = np.array([vi @ g_fn(t, x) @ vi for vi, t, x in zip(v, ys[:, 0], ys[:, 1])])
    mass = np.array([i[0] for i in infos], dtype=float)
    flags = [_flags(i[1] or sf[0], i[2] or sf[1]) for i, sf in zip(infos, stage_flags)]
    energy = 0.5 * mass[0] * vv
    return TrajectoryRecord(step, tau, ys[:, 0].copy(), ys[:, 1].copy(), v[:, 0].copy(), v[:, 1].copy(),
                            vv - c**2, mass, flags, energy, exit_reason, dict(meta or {}))


# --------------------------------------------------------------------------- single particle


def quantum_force(v: np.ndarray, lower: np.ndarray, upper: np.ndarray, mass: float, c: float) -> np.ndarray:
    """``(c^2 d^mu M - v^mu (v^nu d_nu M)) / 2M``."""
    return (c**2 * upper - v * (v @ lower)) / (2.0 * mass)


def accel_single(state: ParticleState, mass_field, params: MassParams) -> np.ndarray:
    """4-acceleration ``dv^mu/dtau`` in flat spacetime."""
    gm = mass_field.gradient(state.position.t, state.position.x)
    return quantum_force(state.velocity, gm.lower, gm.upper, gm.value, params.c)


def _single_deriv(mass_field, c):
    def deriv(y):
        gm = mass_field.gradient(y[0], y[1])
        v = y[2:4]
        a = quantum_force(v, gm.lower, gm.upper, gm.value, c)
        return np.array([v[0] / c, v[1], a[0], a[1]]), (gm.value, gm.clamped, gm.node_adjacent)
    return deriv


def _flat_projection(c):
    def project(y):
        y = y.copy()
        y[2] = math.sqrt(c**2 + y[3] ** 2)
        return y
    return project


def integrate_single(initial: ParticleState, mass_field, params: MassParams, dtau: float, n_steps: int,
                     renormalize: bool = False) -> TrajectoryRecord:
    """RK4 in proper time for the single-particle equation of motion.

    ``renormalize=True`` re-projects ``v0`` onto the mass shell after each
    step; the default leaves drift visible in ``vv_residual``.
    """
    c = params.c
    if abs(initial.vv() - c**2) > 1e-9 * c**2:
        raise InitializationError("initial state is not on the mass shell")
    project = _flat_projection(c) if renormalize else None
    ys, infos, sflags, exit_reason = rk4_run(initial.as_vector(), _single_deriv(mass_field, c), dtau,
                                             n_steps, project)
    return _single_record(ys, infos, sflags, exit_reason, dtau, initial.tau, c,
                          meta={"kind": "single", "dtau": dtau})


# --------------------------------------------------------------------------- many particles


def many_force(vs: np.ndarray, lower: np.ndarray, upper: np.ndarray, mass: float, c: float) -> np.ndarray:
    """Right-hand side of the N-particle law divided by M; arrays of shape (N, 2)."""
    n = vs.shape[0]
    s = np.einsum("jn,jn->j", vs, lower)  # v^j . d_j M
    total = s.sum()
    coupling = total - 0.5 * s  # 1/2 s_i + sum_{j != i} s_j
    return (0.5 * n**2 * c**2 * upper - vs * coupling[:, None]) / mass


def accel_many(states: ManyState, mass_field, params: MassParams) -> np.ndarray:
    """Per-particle 4-accelerations ``dv^{i mu}/dtau_i``, shape (N, 2)."""
    ts = np.array([s.position.t for s in states.states])
    xs = np.array([s.position.x for s in states.states])
    vs = np.array([s.velocity for s in states.states])
    gm = mass_field.gradient(ts, xs)
    return many_force(vs, gm.lower, gm.upper, gm.value, params.c)


def _many_deriv(mass_field, c, n):
    def deriv(y):
        y = y.reshape(n, 4)
        gm = mass_field.gradient(y[:, 0], y[:, 1])
        vs = y[:, 2:4]
        a = many_force(vs, gm.lower, gm.upper, gm.value, c)
        dy = np.concatenate([vs[:, :1] / c, vs[:, 1:2], a], axis=1)
        return dy.reshape(-1), (gm.value, gm.clamped, gm.node_adjacent)
    return deriv


def integrate_many(initial: ManyState, mass_field, params: MassParams, dtau: float, n_steps: int,
                   renormalize: bool = False) -> list:
    """Advance all particles with a common proper-time step.

    Returns one :class:`TrajectoryRecord` per particle; the mass column holds
    the configuration mass evaluated at the joint event tuple.
    """
    n = initial.n
    c = params.c
    y0 = np.concatenate([s.as_vector() for s in initial.states])

    def project(y):
        y = y.reshape(n, 4).copy()
        y[:, 2] = np.sqrt(c**2 + y[:, 3] ** 2)
        return y.reshape(-1)

    ys, infos, sflags, exit_reason = rk4_run(y0, _many_deriv(mass_field, c, n), dtau, n_steps,
                                             project if renormalize else None)
    records = []
    for i, s in enumerate(initial.states):
        sub = ys[:, 4 * i: 4 * i + 4]
        records.append(_single_record(sub, infos, sflags, exit_reason, dtau, s.tau, c,
                                      meta={"kind": "many", "particle": i, "n_particles": n, "dtau": dtau}))
    return records


def newtonian_time_factors(masses: Sequence[float], mu: float) -> np.ndarray:
    """Rescaling ``dt/dt_i = sqrt(m_i / mu)`` between particle times and Newtonian time."""
    return np.sqrt(np.asarray(masses, dtype=float) / mu)


# --------------------------------------------------------------------------- guidance initialisation


def guidance_velocity(provider: WavefieldProvider, e: Event, params: MassParams, h: float = 1e-3) -> np.ndarray:
    """On-shell 4-velocity along the phase-gradient momentum ``p^mu = -d^mu S``.

    Future-directed by construction; for Schrodinger fields the rest energy
    ``m c^2`` is added to ``-dS/dt``.  A vanishing gradient gives the
    particle at rest; a spacelike one raises :class:`InitializationError`.
    """
    c = params.c
    s_t, s_x = phase_gradient(provider, e, h, params.amp_floor)
    energy = -s_t
    if provider.family == "schrodinger":
        energy += params.m * c**2
    p = np.array([energy / c, s_x])
    scale = params.m * c
    if np.all(np.abs(p) <= 1e-12 * scale):
        return np.array([c, 0.0])
    if p[0] < 0:
        p = -p
    pp = p[0] ** 2 - p[1] ** 2
    if pp <= 0:
        raise InitializationError(f"phase gradient is not timelike at {e}; supply an explicit velocity")
    return c * p / math.sqrt(pp)


def guidance_velocity_nr(provider: WavefieldProvider, e: Event, params: MassParams, h: float = 1e-3) -> float:
    """Non-relativistic guidance velocity ``(1/m) dS/dx``."""
    return phase_gradient(provider, e, h, params.amp_floor)[1] / params.m


def guidance_velocity_nr_array(provider, t: float, x: np.ndarray, params: MassParams, h: float = 1e-4):
    """Vectorised ``(hbar/m) Im(conj(psi) dpsi/dx) / |psi|^2`` at fixed time ``t``."""
    dt = work_dtype(provider)
    x = np.asarray(x, dtype=dt)
    hh = dt(h)
    off = np.array([-2, -1, 1, 2], dtype=dt).reshape(4, *(1,) * x.ndim)
    tt = np.full((4,) + x.shape, t, dtype=dt)
    psi_s = provider.psi(tt, x[None] + off * hh)
    w = np.array([1.0, -8.0, 8.0, -1.0], dtype=dt).reshape(4, *(1,) * x.ndim)
    dpsi = np.sum(w * psi_s, axis=0) / (12 * hh)
    psi0 = provider.psi(np.full(x.shape, t, dtype=dt), x)
    return (params.hbar / params.m * np.imag(np.conj(psi0) * dpsi) / np.abs(psi0) ** 2).astype(float)


# --------------------------------------------------------------------------- non-relativistic baseline


def _nr_accel_array(provider, t, x, params: MassParams):
    """``-(1/m) dQ/dx`` at arrays of events (4th-order difference of Q).

    Q is needed at ``x + j h`` for ``j = -2, -1, 1, 2``; its 5-point
    Laplacian stencils share the nine points ``x + k h``, ``k = -4..4``, so
    the amplitude is evaluated once per point.
    """
    dt = work_dtype(provider)
    x = np.asarray(x, dtype=dt)
    t = np.broadcast_to(np.asarray(t, dtype=dt), x.shape)
    h = dt(params.fd_step)
    shape = (9,) + (1,) * x.ndim
    xx = x[None] + np.arange(-4, 5, dtype=dt).reshape(shape) * h
    tt = np.broadcast_to(t[None], xx.shape)
    provider.check_domain(tt, xx)
    log_amp = getattr(provider, "log_amplitude", None)
    if log_amp is not None:
        la = log_amp(tt, xx)
        amp = np.exp(la)
    else:
        amp = provider.amplitude(tt, xx)
    if np.any(amp[2:7] < params.amp_floor):
        raise NodeError("amplitude below floor in quantum-potential stencil")
    w = D2.astype(dt).reshape((5,) + (1,) * x.ndim)
    q = []
    for centre in (2, 3, 5, 6):
        if log_amp is not None:
            ratio = np.sum(w * np.expm1(la[centre - 2:centre + 3] - la[centre]), axis=0)
        else:
            ratio = np.sum(w * amp[centre - 2:centre + 3], axis=0) / amp[centre]
        q.append(-(params.hbar**2) / (2.0 * params.m) * ratio / (12 * h**2))
    dq = (q[0] - 8 * q[1] + 8 * q[2] - q[3]) / (12 * h)
    return (-dq / params.m).astype(float)


def _nr_ln_mass_accel(provider, t, x, params: MassParams):
    """``-(c^2/2) d/dx ln(M/mu)`` with the non-relativistic mass ``mu exp(-(hbar/mc)^2 lap A/A)``."""
    dt = work_dtype(provider)
    h = dt(params.fd_step)
    xs = np.asarray(x, dtype=dt) + np.array([-2, -1, 1, 2], dtype=dt) * h
    _, amp, lap, _ = box_and_amp(provider, np.full(4, t, dtype=dt), xs, params.fd_step, params.amp_floor)
    mu = params.effective_mu
    kappa = (params.hbar / (params.m * params.c)) ** 2
    ln_ratio = np.log(mu * np.exp(-kappa * lap / amp) / mu)
    d = np.sum(np.array([1.0, -8.0, 8.0, -1.0], dtype=dt) * ln_ratio) / (12 * h)
    return float(-0.5 * params.c**2 * d)


def accel_nr(position: float, velocity: float, provider: WavefieldProvider, params: MassParams,
             t: float = 0.0, tol: float = 1e-6) -> float:
    """Bohm-Newton acceleration ``-(1/m) dQ/dx``.

    The equivalent form ``-(c^2/2) d/dx ln(M/mu)`` is evaluated as a
    cross-check; a mismatch larger than ``tol`` (absolute, scaled by
    ``max(1, |a|)``) raises :class:`NumericalError`.  ``velocity`` does not
    enter the force.
    """
    a_q = float(_nr_accel_array(provider, t, np.array([position]), params)[0])
    a_ln = _nr_ln_mass_accel(provider, t, position, params)
    if abs(a_q - a_ln) > tol * max(1.0, abs(a_q)):
        raise NumericalError(f"quantum-potential and log-mass forces disagree: {a_q} vs {a_ln}")
    return a_q


def nr_rk4(x0, u0, provider, params: MassParams, dt: float, n_steps: int, t0: float = 0.0,
           record_every: int = 1, potential=None):
    """Vectorised RK4 of ``x'' = -(1/m) d(Q + V)/dx`` for an array of particles.

    ``potential`` is an optional external ``V(x)`` with a ``derivative``
    attribute (an :class:`~pilotwave.expr.Expression`); it is only needed
    when the wavefield itself evolves in a potential.  Returns
    ``(times, xs, us)`` with one row per recorded step.  Raises
    :class:`NodeError`/:class:`DomainError` if any particle leaves the
    usable domain.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if potential is None:
        acc = lambda tt, xx: _nr_accel_array(provider, tt, xx, params)  # noqa: E731
    else:
        dv = potential.derivative
        acc = lambda tt, xx: _nr_accel_array(provider, tt, xx, params) - dv(xx) / params.m  # noqa: E731
    times, xs, us = [t0], [x.copy()], [u.copy()]
    t = t0
    for n in range(n_steps):
        k1x, k1u = u, acc(t, x)
        k2x, k2u = u + 0.5 * dt * k1u, acc(t + 0.5 * dt, x + 0.5 * dt * k1x)
        k3x, k3u = u + 0.5 * dt * k2u, acc(t + 0.5 * dt, x + 0.5 * dt * k2x)
        k4x, k4u = u + dt * k3u, acc(t + dt, x + dt * k3x)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        t = t0 + (n + 1) * dt
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise NumericalError(f"non-finite state after step {n + 1}",
                                 last_good={"step": n, "t": times[-1], "x": xs[-1].tolist()})
        if (n + 1) % record_every == 0 or n + 1 == n_steps:
            times.append(t)
            xs.append(x.copy())
            us.append(u.copy())
    return np.array(times), np.array(xs), np.array(us)


def integrate_nr(x0: float, u0: float, provider: WavefieldProvider, params: MassParams, dt: float,
                 n_steps: int, t0: float = 0.0) -> TrajectoryRecord:
    """Single Bohm-Newton trajectory in Newtonian time.

    The record stores ``tau = t``, ``v0 = c`` and ``v1 = dx/dt``; the
    relativistic monitors (``vv_residual``, ``mass``) are NaN.
    """
    c = params.c
    x = np.array([float(x0)])
    u = np.array([float(u0)])
    times, xs, us = [t0], [x0], [u0]
    exit_reason = None
    t = t0
    for n in range(n_steps):
        try:
            tt, xx, uu = nr_rk4(x, u, provider, params, dt, 1, t)
        except (DomainError, NodeError) as exc:
            exit_reason = f"domain_exit at step {n + 1}: {exc}"
            break
        x, u = xx[-1], uu[-1]
        t = t0 + (n + 1) * dt
        times.append(t)
        xs.append(float(x[0]))
        us.append(float(u[0]))
    k = len(times)
    nan = np.full(k, np.nan)
    return TrajectoryRecord(np.arange(k), np.array(times), np.array(times), np.array(xs), np.full(k, c),
                            np.array(us), nan.copy(), nan.copy(), [""] * k, None, exit_reason,
                            {"kind": "nonrelativistic", "dt": dt})


def _worker_count() -> int:
    env = os.environ.get("PILOTWAVE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"PILOTWAVE_THREADS must be an integer, got {env!r}")
    return max(1, min(8, os.cpu_count() or 1))


def integrate_nr_ensemble(x0: np.ndarray, u0: np.ndarray, provider, params: MassParams, dt: float,
                          n_steps: int, t0: float = 0.0, record_every: int = 1, chunk: int = 1024,
                          potential=None, double_precision: bool = True):
    """Integrate many independent Bohm-Newton trajectories.

    Particles are split into fixed-size chunks (independent of the worker
    count, so results do not depend on ``PILOTWAVE_THREADS``) and run on a
    thread pool.  With ``double_precision`` (the default) the stencils are
    evaluated in float64 even for extended-precision providers.  Returns ``(times, xs)`` with ``xs`` of shape
    ``(n_records, n_particles)``.
    """
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if double_precision and getattr(provider, "extended_precision", False):
        # float64 stencils are ample at ensemble accuracy and an order of magnitude faster
        provider = copy.copy(provider)
        provider.extended_precision = False
    pieces = [(x0[i:i + chunk], u0[i:i + chunk]) for i in range(0, x0.size, chunk)]

    def run(piece):
        return nr_rk4(piece[0], piece[1], provider, params, dt, n_steps, t0, record_every, potential)

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        results = list(pool.map(run, pieces))
    times = results[0][0]
    xs = np.concatenate([r[1] for r in results], axis=1)
    return times, xs


# --------------------------------------------------------------------------- comparisons


def path_deviation(rec_a: TrajectoryRecord, rec_b: TrajectoryRecord) -> float:
    """Max ``|x_A(t) - x_B(t)|`` over the common coordinate-time interval.

    Each record is turned into a cubic spline ``x(t)``; both sets of sample
    times inside the overlap are used for the comparison.
    """
    from scipy.interpolate import CubicSpline

    def spline(rec):
        t = np.asarray(rec.t, dtype=float)
        if len(t) < 2:
            raise ComparisonError("record needs at least two rows")
        if np.any(np.diff(t) <= 0):
            raise ComparisonError("coordinate time is not strictly increasing along the record")
        return t, CubicSpline(t, np.asarray(rec.x, dtype=float))

    ta, sa = spline(rec_a)
    tb, sb = spline(rec_b)
    lo, hi = max(ta[0], tb[0]), min(ta[-1], tb[-1])
    if hi <= lo:
        raise ComparisonError("records do not overlap in coordinate time")
    pts = np.concatenate([ta[(ta >= lo) & (ta <= hi)], tb[(tb >= lo) & (tb <= hi)]])
    return float(np.max(np.abs(sa(pts) - sb(pts))))


def nonrel_limit_deviation(provider_factory: Callable, params: MassParams, x0: float, u0: float,
                           duration: float, c_values: Sequence[float], dtau: float = 1e-3,
                           t0: float = 0.0) -> dict:
    """Deviation between relativistic and Bohm-Newton paths as ``c`` grows.

    ``provider_factory(c)`` builds the wavefield for a given speed of light.
    Both runs start at ``(t0, x0)`` with coordinate speed ``u0``; the
    relativistic one runs in proper time until it covers ``duration`` in
    coordinate time.  The exponent ``p`` of ``D ~ c^-p`` is a least-squares
    fit in log-log space.
    """
    c_values = [float(c) for c in c_values]
    if len(c_values) < 3:
        raise ConfigurationError("the exponent fit needs at least three values of c")
    n_nr = int(round(duration / dtau))
    rows = []
    for c in c_values:
        p = params.replace(c=c)
        provider = provider_factory(c)
        rel_init = ParticleState.from_coordinate_velocity(t0, x0, u0, c)
        n_rel = int(math.ceil(duration / dtau * rel_init.velocity[0] / c)) + 2
        rel = integrate_single(rel_init, QuantumMassField(provider, p), p, dtau, n_rel)
        nr = integrate_nr(x0, u0, provider, p, dtau, n_nr, t0)
        if rel.exit_reason or nr.exit_reason:
            raise ComparisonError(f"trajectory left the domain at c={c}: {rel.exit_reason or nr.exit_reason}")
        if rel.t[-1] < t0 + duration * (1 - 1e-9):
            raise ComparisonError("relativistic run does not cover the comparison interval")
        rows.append({"c": c, "deviation": path_deviation(rel, nr),
                     "max_speed_over_c": float(np.max(np.abs(nr.v1)) / c)})
    devs = np.array([r["deviation"] for r in rows])
    exact = bool(np.all(devs <= 1e-12))
    if exact:
        exponent = None
    else:
        if np.any(devs <= 0):
            raise ComparisonError("zero deviation for some but not all c values")
        slope = np.polyfit(np.log(c_values), np.log(devs), 1)[0]
        exponent = float(-slope)
    return {"c_values": c_values, "rows": rows, "exponent": exponent, "exact_match": exact,
            "x0": x0, "u0": u0, "duration": duration, "dtau": dtau}
