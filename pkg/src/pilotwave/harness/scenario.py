"""Turn a validated scenario dict into library objects."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..dynamics import ManyState, ParticleState, guidance_velocity
from ..errors import ConfigurationError, InitializationError
from ..expr import Expression
from ..geometry import Metric, Minkowski, metric_from_spec
from ..massfield import ManyQuantumMassField, MassParams, QuantumMassField
from ..wavefield.providers import (Event, GaussianPacket, PlaneWaveSuperposition, ProductProvider,
                                   SpacetimeGrid, StaticMode, SymmetrizedProvider)
from ..wavefield.solvers import solve_klein_gordon, solve_schrodinger

DEFAULT_DTAU = 1e-3
DEFAULT_STEPS = 1000


def units_of(scn: dict, c: float | None = None) -> dict:
    u = scn.get("units", {})
    return {"hbar": float(u.get("hbar", 1.0)), "c": float(c if c is not None else u.get("c", 1.0))}


def particle_masses(scn: dict) -> list:
    return [float(p.get("m", 1.0)) for p in scn["particles"]]


def mass_params(scn: dict, c: float | None = None) -> MassParams:
    units = units_of(scn, c)
    masses = particle_masses(scn)
    mf = scn.get("massfield", {})
    kw = {k: float(mf[k]) for k in ("mu", "clamp", "amp_floor", "fd_step") if k in mf}
    return MassParams(hbar=units["hbar"], c=units["c"], m=masses[0],
                      masses=tuple(masses) if len(masses) > 1 else (), **kw)


def _complex(a):
    return complex(a[0], a[1]) if isinstance(a, list) else complex(a)


def _closed_form(spec: dict, m: float, hbar: float, c: float):
    family = spec.get("family", "klein_gordon")
    m = float(spec.get("m", m))
    kind = spec["kind"]
    if kind == "plane_wave_superposition":
        modes = [(_complex(md["a"]), float(md["k"])) for md in spec["modes"]]
        return PlaneWaveSuperposition(modes, family, m, hbar, c)
    if kind == "gaussian_packet":
        return GaussianPacket(spec.get("center", 0.0), spec["width"], spec.get("k", 0.0), family, m, hbar, c,
                              spreading=spec.get("spreading", False))
    if kind == "static_mode":
        return StaticMode(spec["profile"], spec.get("omega", 0.0), family, m, hbar, c)
    raise ConfigurationError(f"{kind!r} is not a closed-form wavefunction kind")


def _grid_numeric(spec: dict, m: float, hbar: float, c: float):
    family = spec.get("family", "schrodinger")
    m = float(spec.get("m", m))
    grid = SpacetimeGrid(**spec["grid"])
    init_spec = dict(spec["initial"])
    init_spec.setdefault("family", family)
    init_spec.setdefault("m", m)
    initial = _closed_form(init_spec, m, hbar, c)
    x = grid.x
    t0 = np.full_like(x, grid.t_min)
    psi0 = initial.psi(t0, x)
    substeps = int(spec.get("substeps", 1))
    if family == "schrodinger":
        potential = Expression(spec["potential"])(x) if "potential" in spec else None
        return solve_schrodinger(psi0, grid, potential, m, hbar, substeps=substeps)
    if "potential" in spec:
        raise ConfigurationError("the Klein-Gordon solver takes no potential")
    h = 1e-4
    w = np.array([1.0, -8.0, 8.0, -1.0])
    dpsi = sum(wk * initial.psi(t0 + o * h, x) for wk, o in zip(w, (-2, -1, 1, 2))) / (12 * h)
    return solve_klein_gordon(psi0, dpsi, grid, m, hbar, c, substeps=substeps)


def build_provider(scn: dict, c: float | None = None):
    """Wavefunction provider of a scenario (``c`` overrides the unit block)."""
    units = units_of(scn, c)
    hbar, c = units["hbar"], units["c"]
    masses = particle_masses(scn)
    spec = scn["wavefunction"]
    kind = spec["kind"]
    if kind in ("product", "symmetrized"):
        factors = spec["factors"]
        if len(factors) != len(masses):
            raise ConfigurationError(f"{len(factors)} wavefunction factors for {len(masses)} particles")
        built = [_closed_form(f, mi, hbar, c) for f, mi in zip(factors, masses)]
        return (ProductProvider if kind == "product" else SymmetrizedProvider)(built)
    if len(masses) != 1:
        raise ConfigurationError("several particles need a product or symmetrized wavefunction")
    if kind == "grid_numeric":
        return _grid_numeric(spec, masses[0], hbar, c)
    return _closed_form(spec, masses[0], hbar, c)


def build_mass_field(provider, params: MassParams):
    if provider.n_particles > 1:
        return ManyQuantumMassField(provider, params)
    return QuantumMassField(provider, params)


def build_metric(scn: dict) -> Metric:
    return metric_from_spec(scn.get("metric"))


def _shell_from_coordinate_velocity(t, x, u, c, g):
    # v1 = (u/c) v0 and g00 v0^2 + g11 v1^2 = c^2
    denom = g[0, 0] + g[1, 1] * (u / c) ** 2
    if denom <= 0:
        raise InitializationError(f"coordinate speed {u} is not timelike at x={x}")
    v0 = c / math.sqrt(denom)
    return ParticleState(Event(t, x), np.array([v0, v0 * u / c]))


@dataclass
class InitialData:
    states: list
    projections: list = field(default_factory=list)


def initial_states(scn: dict, provider, params: MassParams, metric: Metric) -> InitialData:
    """On-shell initial states for every particle.

    Explicit ``[v0, v1]`` pairs keep ``v1`` and re-solve ``v0`` from the
    mass shell; the size of that correction is reported.
    """
    c = params.c
    states, projections = [], []
    for i, p in enumerate(scn["particles"]):
        t0, x0 = float(p.get("t0", 0.0)), float(p["x0"])
        g = metric.check_signature(t0, x0)
        v = p.get("v0", "rest")
        proj = 0.0
        if v == "rest":
            st = ParticleState(Event(t0, x0), np.array([c / math.sqrt(g[0, 0]), 0.0]))
        elif v == "guidance":
            if not isinstance(metric, Minkowski):
                raise ConfigurationError("guidance initialisation is only defined in flat spacetime")
            if provider.n_particles > 1:
                raise ConfigurationError("guidance initialisation needs a single-particle wavefunction")
            st = ParticleState(Event(t0, x0), guidance_velocity(provider, Event(t0, x0), params))
        elif isinstance(v, dict):
            st = _shell_from_coordinate_velocity(t0, x0, float(v["u"]), c, g)
        else:
            st = ParticleState.on_shell(t0, x0, float(v[1]), c, g)
            proj = abs(st.velocity[0] - float(v[0]))
        states.append(st)
        projections.append(proj)
    return InitialData(states, projections)


def integrator_settings(scn: dict) -> tuple:
    it = scn.get("integrator", {})
    return (float(it.get("dtau", DEFAULT_DTAU)), int(it.get("steps", DEFAULT_STEPS)),
            bool(it.get("renormalize", False)))


def many_state(states) -> ManyState:
    return ManyState(list(states))
