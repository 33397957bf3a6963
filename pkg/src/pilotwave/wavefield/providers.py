"""Wavefunction providers evaluated at 1+1D spacetime events.

All providers are immutable and vectorised: ``psi(t, x)`` accepts arrays of
any (broadcastable) shape.  Closed-form providers compute in the dtype of
their arguments, so stencils can be evaluated in ``np.longdouble``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, DomainError
from ..expr import Expression

FAMILIES = ("schrodinger", "klein_gordon")


@dataclass(frozen=True)
class Event:
    """A spacetime event: time ``t`` and position ``x``."""

    t: float
    x: float

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.x)):
            raise ValueError(f"non-finite event {self!r}")


def dispersion(k, family: str, m: float, hbar: float = 1.0, c: float = 1.0):
    """Angular frequency of a mode with wavenumber ``k``.

    Klein-Gordon: ``c*sqrt(k^2 + (m c / hbar)^2)``; Schrodinger: ``hbar k^2 / 2m``.
    """
    k = np.asarray(k, dtype=float)
    if family == "klein_gordon":
        return c * np.sqrt(k**2 + (m * c / hbar) ** 2)
    if family == "schrodinger":
        return hbar * k**2 / (2.0 * m)
    raise ConfigurationError(f"unknown equation family {family!r}")


class WavefieldProvider:
    """Base class.  Subclasses implement :meth:`psi`."""

    kind = "abstract"
    extended_precision = True
    n_particles = 1

    def __init__(self, family: str, m: float, hbar: float = 1.0, c: float = 1.0):
        if family not in FAMILIES:
            raise ConfigurationError(f"unknown equation family {family!r}")
        if not (m > 0 and hbar > 0 and c > 0):
            raise ConfigurationError("m, hbar and c must be strictly positive")
        self.family = family
        self.m = float(m)
        self.hbar = float(hbar)
        self.c = float(c)

    def psi(self, t, x):
        raise NotImplementedError

    # optional closed form of ln|psi(t, x)|, used by the stencils when present
    log_amplitude = None

    def amplitude(self, t, x):
        """``|psi(t, x)|``; subclasses may override with a cheaper closed form."""
        return np.abs(self.psi(t, x))

    def in_domain(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t), np.asarray(x))
        return np.isfinite(t) & np.isfinite(x)

    def check_domain(self, t, x) -> None:
        if not np.all(self.in_domain(t, x)):
            raise DomainError(f"{self.kind}: query outside provider domain")

    def __call__(self, t, x):
        return self.psi(t, x)


class PlaneWaveSuperposition(WavefieldProvider):
    """``sum_k a_k exp(i(k x - w_k t))`` with on-shell frequencies.

    ``modes`` is a sequence of ``(a, k)`` pairs; ``a`` may be complex.
    """

    kind = "plane_wave_superposition"

    def __init__(self, modes, family="klein_gordon", m=1.0, hbar=1.0, c=1.0):
        super().__init__(family, m, hbar, c)
        if len(modes) == 0:
            raise ConfigurationError("plane_wave_superposition needs at least one mode")
        self.amplitudes = tuple(complex(a) for a, _ in modes)
        self.wavenumbers = tuple(float(k) for _, k in modes)
        self.omegas = tuple(float(w) for w in dispersion(self.wavenumbers, family, m, hbar, c))

    def psi(self, t, x):
        t, x = np.asarray(t), np.asarray(x)
        out = 0
        for a, k, w in zip(self.amplitudes, self.wavenumbers, self.omegas):
            out = out + a * np.exp(1j * (k * x - w * t))
        return np.broadcast_to(out, np.broadcast(t, x).shape)


class GaussianPacket(WavefieldProvider):
    """Peak-normalised gaussian envelope with a carrier wave.

    With ``spreading=False`` the envelope ``exp(-(x-x0)^2/4 sigma^2)`` is
    time independent and carries the phase ``k x - w t``.  With
    ``spreading=True`` (Schrodinger only) the exact free-particle evolution
    of that initial profile is returned.
    """

    kind = "gaussian_packet"

    def __init__(self, center=0.0, width=1.0, k=0.0, family="klein_gordon", m=1.0, hbar=1.0, c=1.0,
                 spreading=False):
        super().__init__(family, m, hbar, c)
        if not width > 0:
            raise ConfigurationError("gaussian width must be positive")
        if spreading and family != "schrodinger":
            raise ConfigurationError("spreading packets are only available for the Schrodinger family")
        self.center = float(center)
        self.width = float(width)
        self.k = float(k)
        self.spreading = bool(spreading)
        self.omega = float(dispersion(self.k, family, m, hbar, c))

    def sigma_at(self, t):
        """Standard deviation of ``|psi|^2`` at time ``t``."""
        if not self.spreading:
            return np.full_like(np.asarray(t, dtype=float), self.width)
        tau = 2.0 * self.m * self.width**2 / self.hbar
        return self.width * np.sqrt(1.0 + (np.asarray(t) / tau) ** 2)

    def log_amplitude(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t), np.asarray(x))
        if self.spreading:
            # |s|^2 with s = 1 + i hbar t / (2 m sigma^2)
            s_abs2 = 1.0 + (self.hbar * t / (2.0 * self.m * self.width**2)) ** 2
            v = self.hbar * self.k / self.m
            return -((x - self.center - v * t) ** 2) / (4.0 * self.width**2 * s_abs2) - 0.25 * np.log(s_abs2)
        return -((x - self.center) ** 2) / (4.0 * self.width**2) + 0.0 * t

    def amplitude(self, t, x):
        return np.exp(self.log_amplitude(t, x))

    def psi(self, t, x):
        t, x = np.asarray(t), np.asarray(x)
        s2 = self.width**2
        if not self.spreading:
            env = np.exp(-((x - self.center) ** 2) / (4.0 * s2))
            return env * np.exp(1j * (self.k * x - self.omega * t))
        v = self.hbar * self.k / self.m
        s = 1.0 + 1j * self.hbar * t / (2.0 * self.m * s2)
        arg = -((x - self.center - v * t) ** 2) / (4.0 * s2 * s)
        arg = arg + 1j * (self.k * (x - self.center) - self.omega * t)
        return np.exp(arg) / np.sqrt(s)


class StaticMode(WavefieldProvider):
    """Real spatial profile times ``exp(-i omega t)``."""

    kind = "static_mode"

    def __init__(self, profile, omega=0.0, family="klein_gordon", m=1.0, hbar=1.0, c=1.0):
        super().__init__(family, m, hbar, c)
        if isinstance(profile, str):
            profile = Expression(profile)
        self.profile = profile
        self.omega = float(omega)

    def psi(self, t, x):
        t, x = np.asarray(t), np.asarray(x)
        return self.profile(x) * np.exp(-1j * self.omega * t)

    def amplitude(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t), np.asarray(x))
        return np.abs(self.profile(x))


class SpacetimeGrid:
    """Uniform lattice ``x_j = x_min + j dx`` (``j < n_x``), ``t_n = t_min + n dt`` (``n <= n_t``)."""

    def __init__(self, x_min, x_max, n_x, t_min=0.0, t_max=1.0, n_t=1, boundary="periodic"):
        if n_x < 8:
            raise ConfigurationError("grid needs n_x >= 8")
        if n_t < 1:
            raise ConfigurationError("grid needs n_t >= 1")
        if not (x_max > x_min and t_max > t_min):
            raise ConfigurationError("grid extents must be increasing")
        if boundary not in ("periodic", "absorbing"):
            raise ConfigurationError(f"unknown boundary {boundary!r}")
        self.x_min, self.x_max, self.n_x = float(x_min), float(x_max), int(n_x)
        self.t_min, self.t_max, self.n_t = float(t_min), float(t_max), int(n_t)
        self.boundary = boundary

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_x

    @property
    def dt(self):
        return (self.t_max - self.t_min) / self.n_t

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.n_x)

    @property
    def t(self):
        return self.t_min + self.dt * np.arange(self.n_t + 1)

    def to_dict(self):
        return {"x_min": self.x_min, "x_max": self.x_max, "n_x": self.n_x,
                "t_min": self.t_min, "t_max": self.t_max, "n_t": self.n_t,
                "boundary": self.boundary}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class GridField(WavefieldProvider):
    """Lattice of complex samples; cubic spline in x, linear in t."""

    kind = "grid_numeric"
    extended_precision = False

    def __init__(self, grid: SpacetimeGrid, samples, family="schrodinger", m=1.0, hbar=1.0, c=1.0,
                 diagnostics=None):
        super().__init__(family, m, hbar, c)
        samples = np.asarray(samples, dtype=complex)
        if samples.shape != (grid.n_t + 1, grid.n_x):
            raise ConfigurationError(f"samples shape {samples.shape} does not match grid "
                                     f"({grid.n_t + 1}, {grid.n_x})")
        self.grid = grid
        self.samples = samples
        self.samples.setflags(write=False)
        self.diagnostics = dict(diagnostics or {})
        self._splines = {}

    def _spline(self, n):
        from scipy.interpolate import CubicSpline

        sp = self._splines.get(n)
        if sp is None:
            g = self.grid
            row = self.samples[n]
            if g.boundary == "periodic":
                xs = np.append(g.x, g.x_max)
                sp = CubicSpline(xs, np.append(row, row[0]), bc_type="periodic")
            else:
                sp = CubicSpline(g.x, row, bc_type="not-a-knot")
            self._splines[n] = sp
        return sp

    def in_domain(self, t, x):
        g = self.grid
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        eps = 1e-12 * (g.t_max - g.t_min)
        ok = (t >= g.t_min - eps) & (t <= g.t_max + eps) & np.isfinite(x)
        if g.boundary != "periodic":
            ok &= (x >= g.x_min) & (x <= g.x_min + (g.n_x - 1) * g.dx)
        return ok

    def psi(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        t, x = np.broadcast_arrays(t, x)
        self.check_domain(t, x)
        g = self.grid
        if g.boundary == "periodic":
            x = g.x_min + np.mod(x - g.x_min, g.x_max - g.x_min)
        u = np.clip((t - g.t_min) / g.dt, 0.0, g.n_t)
        n0 = np.minimum(np.floor(u).astype(int), g.n_t - 1)
        w = u - n0
        out = np.empty(t.shape, dtype=complex)
        flat_n0, flat_w, flat_x = n0.ravel(), w.ravel(), x.ravel()
        res = out.reshape(-1)
        for n in np.unique(flat_n0):
            sel = flat_n0 == n
            lo = self._spline(n)(flat_x[sel])
            hi = self._spline(n + 1)(flat_x[sel])
            res[sel] = (1.0 - flat_w[sel]) * lo + flat_w[sel] * hi
        return out

    def to_dict(self):
        """JSON-friendly dump: row-major real/imag arrays per stored slice."""
        return {"kind": self.kind, "family": self.family, "m": self.m, "hbar": self.hbar, "c": self.c,
                "grid": self.grid.to_dict(),
                "real": self.samples.real.tolist(), "imag": self.samples.imag.tolist()}

    @classmethod
    def from_dict(cls, d):
        grid = SpacetimeGrid.from_dict(d["grid"])
        samples = np.asarray(d["real"], dtype=float) + 1j * np.asarray(d["imag"], dtype=float)
        return cls(grid, samples, family=d["family"], m=d["m"], hbar=d["hbar"], c=d["c"])


class ManyParticleProvider(WavefieldProvider):
    """Closed-form N-particle amplitude.

    ``psi(ts, xs)`` takes arrays whose leading axis has length ``N``; entry
    ``j`` holds particle ``j``'s event coordinates.
    """

    kind = "many_particle"

    def __init__(self, factors: Sequence[WavefieldProvider]):
        factors = tuple(factors)
        if not factors:
            raise ConfigurationError("a many-particle amplitude needs at least one factor")
        for f in factors:
            if f.n_particles != 1:
                raise ConfigurationError("factors must be single-particle providers")
        first = factors[0]
        super().__init__(first.family, first.m, first.hbar, first.c)
        self.factors = factors
        self.n_particles = len(factors)
        self.masses = tuple(f.m for f in factors)
        self.extended_precision = all(f.extended_precision for f in factors)

    def in_domain(self, ts, xs):
        ok = True
        for j, f in enumerate(self.factors):
            ok = ok & f.in_domain(ts[j], xs[j])
        return ok


class ProductProvider(ManyParticleProvider):
    """``prod_j phi_j(t_j, x_j)``."""

    kind = "product"

    def psi(self, ts, xs):
        out = 1
        for j, f in enumerate(self.factors):
            out = out * f.psi(ts[j], xs[j])
        return out


class SymmetrizedProvider(ManyParticleProvider):
    """Sum over all particle permutations of the product of factors.

    Factors are assigned to particles by every permutation; the result is
    symmetric under exchange of any two particles.
    """

    kind = "symmetrized"

    def psi(self, ts, xs):
        n = self.n_particles
        out = 0
        for perm in itertools.permutations(range(n)):
            term = 1
            for j, p in enumerate(perm):
                term = term * self.factors[p].psi(ts[j], xs[j])
            out = out + term
        return out


class CallableProvider(WavefieldProvider):
    """Wrap a vectorised callable ``fn(t, x) -> complex`` as a provider."""

    kind = "callable"

    def __init__(self, fn: Callable, family="klein_gordon", m=1.0, hbar=1.0, c=1.0):
        super().__init__(family, m, hbar, c)
        self._fn = fn

    def psi(self, t, x):
        return self._fn(np.asarray(t), np.asarray(x))
