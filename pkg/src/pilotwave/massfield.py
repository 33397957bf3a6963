"""Quantum potential and quantum mass fields.

Three mass-like quantities are computed from ``A = |psi|``:

* the non-relativistic quantum potential ``Q = -(hbar^2/2m) lap A / A``;
* the exponential mass field ``M = m exp((hbar/mc)^2 box A / A)``, and its
  many-particle form with mass scale ``mu``;
* the decomposition mass squared ``M2_std = m^2 + (hbar/c)^2 box A / A``,
  which can be negative (tachyonic).

The exponential fields clamp their exponent to ``[-clamp, clamp]``, so they
stay finite and strictly positive at nodes of ``psi``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, NodeError, RegimeError
from .wavefield.derivatives import OFFSETS, box_and_amp, work_dtype
from .wavefield.providers import Event, SpacetimeGrid, WavefieldProvider


@dataclass(frozen=True)
class MassParams:
    """Physical constants and numerical guards.

    ``mu`` defaults to the arithmetic mean of ``masses`` (or ``m`` when no
    per-particle masses are given).  ``fd_step`` is the stencil step used
    for amplitude derivatives and mass gradients.
    """

    hbar: float = 1.0
    c: float = 1.0
    m: float = 1.0
    masses: tuple = ()
    mu: float | None = None
    clamp: float = 30.0
    amp_floor: float = 1e-12
    fd_step: float = 1e-2

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(v) for v in self.masses))
        positive = [self.hbar, self.c, self.m, self.amp_floor, self.clamp, self.fd_step, *self.masses]
        if self.mu is not None:
            positive.append(self.mu)
        if not all(v > 0 and math.isfinite(v) for v in positive):
            raise ConfigurationError("hbar, c, m, masses, mu, clamp, amp_floor and fd_step must be positive")

    @property
    def effective_mu(self) -> float:
        if self.mu is not None:
            return float(self.mu)
        if self.masses:
            return float(np.mean(self.masses))
        return self.m

    def replace(self, **kw) -> "MassParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class MassSample:
    value: float
    exponent_raw: float
    clamped: bool = False
    node_adjacent: bool = False


@dataclass(frozen=True)
class MassGradient:
    """Covariant (``lower``) and contravariant (``upper``) 4-gradient of M.

    Components are with respect to ``(x0, x) = (c t, x)``.  For many-particle
    fields both arrays have shape ``(N, 2)``.
    """

    lower: np.ndarray
    upper: np.ndarray
    value: float
    clamped: bool = False
    node_adjacent: bool = False


FLAT_INVERSE = np.diag([1.0, -1.0])


def _ratio(box, amp):
    # 0/0 only happens where the amplitude underflows in a decaying tail,
    # whose limit is a large negative exponent
    with np.errstate(divide="ignore", invalid="ignore"):
        r = box / amp
    return np.where(np.isnan(r), -np.inf, r)


def _clamp(raw, limit):
    clipped = np.clip(raw, -limit, limit)
    return clipped, np.abs(raw) > limit


# --------------------------------------------------------------------------- single particle


def single_exponent(provider: WavefieldProvider, t, x, params: MassParams, h=None):
    """Raw exponent ``(hbar/mc)^2 box A / A`` and node flags at events (vectorised)."""
    h = params.fd_step if h is None else h
    box, amp, _, node = box_and_amp(provider, t, x, h, params.amp_floor)
    kappa = (params.hbar / (params.m * params.c)) ** 2
    node = node | (amp < params.amp_floor)
    return kappa * _ratio(box, amp), node


def quantum_potential_nr(provider: WavefieldProvider, e: Event, params: MassParams) -> float:
    """``Q = -(hbar^2 / 2m) lap A / A``."""
    _, amp, lap, _ = box_and_amp(provider, e.t, e.x, params.fd_step, params.amp_floor)
    if amp < params.amp_floor:
        raise NodeError(f"amplitude {float(amp):.3g} below floor at {e}")
    return float(-(params.hbar**2) / (2.0 * params.m) * lap / amp)


def mass_single(provider: WavefieldProvider, e: Event, params: MassParams) -> MassSample:
    """Exponential quantum mass ``M = m exp(clamp((hbar/mc)^2 box A / A))``."""
    raw, node = single_exponent(provider, e.t, e.x, params)
    ex, clamped = _clamp(raw, params.clamp)
    return MassSample(float(params.m * np.exp(ex)), float(raw), bool(clamped), bool(node))


def mass_sq_standard(provider: WavefieldProvider, e: Event, params: MassParams) -> MassSample:
    """Decomposition-theory mass squared ``m^2 + (hbar/c)^2 box A / A`` (unclamped)."""
    box, amp, _, node = box_and_amp(provider, e.t, e.x, params.fd_step, params.amp_floor)
    if amp < params.amp_floor:
        raise NodeError(f"amplitude {float(amp):.3g} below floor at {e}")
    r = float(box / amp)
    value = params.m**2 + (params.hbar / params.c) ** 2 * r
    return MassSample(value, r, False, bool(node))


# --------------------------------------------------------------------------- many particles


def many_exponent(provider, ts, xs, params: MassParams, h=None):
    """Raw exponent ``(hbar^2/mu c^2) sum_j box_j A / (m_j A)``.

    ``ts``/``xs`` have leading axis N; trailing axes are vectorised.
    """
    h = params.fd_step if h is None else h
    n = provider.n_particles
    masses = params.masses or getattr(provider, "masses", (params.m,) * n)
    if len(masses) != n:
        raise ConfigurationError(f"{n} particles but {len(masses)} masses")
    dt = work_dtype(provider)
    ts = np.asarray(ts, dtype=dt)
    xs = np.asarray(xs, dtype=dt)
    ts, xs = np.broadcast_arrays(ts, xs)
    hh = dt(h)
    off = OFFSETS.reshape((5,) + (1,) * ts.ndim).astype(dt)
    amp0 = np.abs(provider.psi(ts, xs))
    total = 0
    node = amp0 < params.amp_floor
    w = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]).reshape((5,) + (1,) * (ts.ndim - 1)).astype(dt)
    for j in range(n):
        for shift_t in (True, False):
            tt = np.broadcast_to(ts[None], (5,) + ts.shape).copy()
            xx = np.broadcast_to(xs[None], (5,) + xs.shape).copy()
            if shift_t:
                tt[:, j] = ts[j][None] + off[:, 0] * (hh / provider.c)
            else:
                xx[:, j] = xs[j][None] + off[:, 0] * hh
            provider.check_domain(np.moveaxis(tt, 1, 0), np.moveaxis(xx, 1, 0))
            psi = provider.psi(np.moveaxis(tt, 1, 0), np.moveaxis(xx, 1, 0))
            a = np.abs(psi)
            d2 = np.sum(w * a, axis=0) / (12 * hh**2)
            node = node | (np.min(a, axis=0) < params.amp_floor)
            total = total + (d2 if shift_t else -d2) / masses[j]
    mu = params.effective_mu
    kappa = params.hbar**2 / (mu * params.c**2)
    return kappa * _ratio(total, amp0), node


def mass_many(provider, cfg: Sequence[Event], params: MassParams) -> MassSample:
    """Many-particle exponential mass at a configuration of N events."""
    if len(cfg) != provider.n_particles:
        raise ConfigurationError(f"configuration has {len(cfg)} events, amplitude has {provider.n_particles}")
    ts = np.array([e.t for e in cfg], dtype=float)
    xs = np.array([e.x for e in cfg], dtype=float)
    raw, node = many_exponent(provider, ts, xs, params)
    ex, clamped = _clamp(raw, params.clamp)
    return MassSample(float(params.effective_mu * np.exp(ex)), float(raw), bool(clamped), bool(node))


# --------------------------------------------------------------------------- mass-field accessors


class MassField:
    """Scalar mass field ``M(t, x)`` with a 4-gradient.

    Subclasses implement :meth:`_values` returning ``(M, clamped, node)``
    arrays in the working dtype; the default gradient is a 4th-order
    central difference of those values with step ``h`` in ``x0 = c t`` and x.
    """

    n_particles = 1
    dtype = np.float64

    def __init__(self, c: float = 1.0, h: float = 1e-2):
        self.c = float(c)
        self.h = float(h)

    def _values(self, t, x):
        raise NotImplementedError

    def sample(self, t: float, x: float) -> MassSample:
        raw_val, clamped, node = self._values(np.asarray(t, self.dtype), np.asarray(x, self.dtype))
        return MassSample(float(raw_val), float("nan"), bool(clamped), bool(node))

    def value(self, t: float, x: float) -> float:
        return self.sample(t, x).value

    def gradient(self, t: float, x: float, inverse=None) -> MassGradient:
        dt = self.dtype
        h = dt(self.h)
        t0, x0 = dt(t), dt(x)
        off = np.array([-2, -1, 1, 2], dtype=dt)
        tt = np.concatenate([t0 + off * (h / self.c), np.full(4, t0, dtype=dt), [t0]])
        xx = np.concatenate([np.full(4, x0, dtype=dt), x0 + off * h, [x0]])
        vals, clamped, node = self._values(tt, xx)
        w = np.array([1.0, -8.0, 8.0, -1.0], dtype=dt)
        lower = np.array([np.sum(w * vals[:4]), np.sum(w * vals[4:8])], dtype=dt) / (12 * h)
        lower = lower.astype(float)
        inv = FLAT_INVERSE if inverse is None else inverse
        return MassGradient(lower, inv @ lower, float(vals[8]), bool(np.any(clamped)), bool(np.any(node)))


class QuantumMassField(MassField):
    """``M = m exp((hbar/mc)^2 box A / A)`` of a single-particle provider."""

    def __init__(self, provider: WavefieldProvider, params: MassParams):
        super().__init__(params.c, params.fd_step)
        self.provider = provider
        self.params = params
        self.dtype = work_dtype(provider)

    def _values(self, t, x):
        raw, node = single_exponent(self.provider, t, x, self.params)
        ex, clamped = _clamp(raw, self.params.clamp)
        return self.params.m * np.exp(ex), clamped, node


class UniformMassField(MassField):
    """Constant mass; the gradient vanishes identically."""

    def __init__(self, value: float, c: float = 1.0):
        super().__init__(c)
        self.mass = float(value)

    def _values(self, t, x):
        t, x = np.broadcast_arrays(t, x)
        return np.full(t.shape, self.mass), np.zeros(t.shape, bool), np.zeros(t.shape, bool)

    def gradient(self, t, x, inverse=None):
        return MassGradient(np.zeros(2), np.zeros(2), self.mass)


class FunctionMassField(MassField):
    """Mass from a vectorised callable ``fn(t, x)``; gradient by finite differences."""

    def __init__(self, fn, c: float = 1.0, h: float = 1e-3, dtype=np.float64):
        super().__init__(c, h)
        self.fn = fn
        self.dtype = dtype

    def _values(self, t, x):
        t, x = np.broadcast_arrays(t, x)
        v = np.asarray(self.fn(t, x), dtype=self.dtype)
        return v, np.zeros(t.shape, bool), np.zeros(t.shape, bool)


class ManyQuantumMassField:
    """Many-particle mass field over configurations (ts, xs) of N events."""

    def __init__(self, provider, params: MassParams):
        self.provider = provider
        self.params = params
        self.n_particles = provider.n_particles
        self.c = params.c
        self.h = params.fd_step
        self.dtype = work_dtype(provider)

    def _values(self, ts, xs):
        raw, node = many_exponent(self.provider, ts, xs, self.params)
        ex, clamped = _clamp(raw, self.params.clamp)
        return self.params.effective_mu * np.exp(ex), clamped, node

    def sample(self, ts, xs) -> MassSample:
        v, cl, nd = self._values(np.asarray(ts, self.dtype), np.asarray(xs, self.dtype))
        return MassSample(float(v), float("nan"), bool(cl), bool(nd))

    def gradient(self, ts, xs, inverses=None) -> MassGradient:
        """Per-particle gradients ``d_{j nu} M``; returns arrays of shape (N, 2)."""
        dt = self.dtype
        n = self.n_particles
        h = dt(self.h)
        ts = np.asarray(ts, dtype=dt)
        xs = np.asarray(xs, dtype=dt)
        off = np.array([-2, -1, 1, 2], dtype=dt)
        # columns: for each particle j and direction d, four shifted configurations; then the centre
        cols_t, cols_x = [], []
        for j in range(n):
            for d in range(2):
                for o in off:
                    tj, xj = ts.copy(), xs.copy()
                    if d == 0:
                        tj[j] = tj[j] + o * h / self.c
                    else:
                        xj[j] = xj[j] + o * h
                    cols_t.append(tj)
                    cols_x.append(xj)
        cols_t.append(ts)
        cols_x.append(xs)
        vals, clamped, node = self._values(np.stack(cols_t, axis=1), np.stack(cols_x, axis=1))
        w = np.array([1.0, -8.0, 8.0, -1.0], dtype=dt)
        lower = (vals[:-1].reshape(n, 2, 4) @ w) / (12 * h)
        lower = lower.astype(float)
        if inverses is None:
            upper = lower @ FLAT_INVERSE.T
        else:
            upper = np.stack([inverses[j] @ lower[j] for j in range(n)])
        return MassGradient(lower, upper, float(vals[-1]), bool(np.any(clamped)), bool(np.any(node)))


def grad_mass(provider, e, params: MassParams, h: float | None = None, inverse=None) -> MassGradient:
    """4-gradient of the quantum mass at ``e`` (an Event, or a list of N Events).

    ``upper`` is raised with ``inverse`` (the inverse metric at ``e``),
    Minkowski ``diag(1, -1)`` by default.
    """
    if h is not None:
        params = params.replace(fd_step=h)
    if isinstance(e, Event):
        return QuantumMassField(provider, params).gradient(e.t, e.x, inverse)
    ts = np.array([ev.t for ev in e], dtype=float)
    xs = np.array([ev.x for ev in e], dtype=float)
    return ManyQuantumMassField(provider, params).gradient(ts, xs, inverse)


# --------------------------------------------------------------------------- scans and comparisons


@dataclass
class TachyonReport:
    grid: dict
    min_mass_new: float
    max_mass_new: float
    min_mass_sq_std: float
    max_mass_sq_std: float
    tachyon_count: int
    tachyon_points: list = field(default_factory=list)
    clamped_count: int = 0
    node_adjacent_count: int = 0
    n_points: int = 0

    @property
    def positive(self) -> bool:
        return self.min_mass_new > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["positive_mass_new"] = self.positive
        d["tachyonic"] = self.tachyon_count > 0
        return d


def tachyon_scan(provider: WavefieldProvider, grid: SpacetimeGrid, params: MassParams,
                 h: float | None = None) -> TachyonReport:
    """Evaluate both mass fields on every grid point whose stencil fits the domain.

    The stencil step defaults to the grid spacing ``dx``.  Points with
    ``A`` below the floor use ``A = floor`` in the ratio and are counted
    as node-adjacent.
    """
    h = grid.dx if h is None else h
    tg, xg = np.meshgrid(grid.t, grid.x, indexing="ij")
    span = 2 * h
    inside = (provider.in_domain(tg - span / provider.c, xg - span)
              & provider.in_domain(tg + span / provider.c, xg + span))
    t = tg[inside]
    x = xg[inside]
    if t.size == 0:
        raise ConfigurationError("no grid point has its stencil inside the provider domain")
    box, amp, _, node = box_and_amp(provider, t, x, h, params.amp_floor)
    node = node | (amp < params.amp_floor)
    ratio = box / np.maximum(amp, params.amp_floor)
    std = (params.m**2 + (params.hbar / params.c) ** 2 * ratio).astype(float)
    raw = (params.hbar / (params.m * params.c)) ** 2 * ratio
    ex, clamped = _clamp(raw, params.clamp)
    new = (params.m * np.exp(ex)).astype(float)
    tach = std < 0
    points = [{"t": float(a), "x": float(b), "value": float(v), "node_adjacent": bool(nd)}
              for a, b, v, nd in zip(t[tach], x[tach], std[tach], node[tach])]
    return TachyonReport(
        grid=grid.to_dict(),
        min_mass_new=float(new.min()),
        max_mass_new=float(new.max()),
        min_mass_sq_std=float(std.min()),
        max_mass_sq_std=float(std.max()),
        tachyon_count=int(tach.sum()),
        tachyon_points=points,
        clamped_count=int(clamped.sum()),
        node_adjacent_count=int(node.sum()),
        n_points=int(t.size),
    )


def first_order_comparison(provider: WavefieldProvider, e: Event, params: MassParams) -> dict:
    """Compare ``M``, its linearisation ``m(1+chi)`` and ``sqrt(M2_std)``.

    ``chi = (hbar/mc)^2 box A / A`` must satisfy ``|chi| <= 1``.  The Taylor
    remainder bound ``|M - m(1+chi)| <= m chi^2`` is checked; the ratio of
    the linear terms of ``sqrt(M2_std)`` and ``M`` is reported (it tends to
    1/2) without being asserted.
    """
    raw, node = single_exponent(provider, e.t, e.x, params)
    chi = float(raw)
    if abs(chi) > 1:
        raise RegimeError(f"|chi| = {abs(chi):.3g} > 1: outside the first-order regime")
    m = params.m
    mass = m * math.exp(chi)
    first = m * (1.0 + chi)
    std_sq = m**2 * (1.0 + chi)
    sqrt_std = math.sqrt(std_sq)
    remainder = abs(mass - first)
    bound = m * chi**2
    if remainder > bound * (1 + 1e-12) + 4 * np.finfo(float).eps * m:
        raise AssertionError(f"Taylor bound violated: {remainder} > {bound}")
    ratio = (sqrt_std - m) / (mass - m) if chi != 0 else None
    return {
        "event": {"t": e.t, "x": e.x},
        "chi": chi,
        "mass": mass,
        "first_order": first,
        "sqrt_mass_sq_std": sqrt_std,
        "diff_mass_first_order": mass - first,
        "diff_mass_sqrt_std": mass - sqrt_std,
        "diff_first_order_sqrt_std": first - sqrt_std,
        "taylor_bound": bound,
        "taylor_bound_ok": True,
        "linear_term_ratio_std_over_new": ratio,
        "node_adjacent": bool(node),
    }
