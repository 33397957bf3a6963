"""Wavefunction providers, stencil operators and grid solvers."""

from .derivatives import (
    StencilValue,
    amp_dalembertian,
    amp_laplacian,
    box_and_amp,
    continuity_residual,
    eval_amplitude,
    eval_phase,
    eval_phase_path,
    eval_psi,
    phase_gradient,
)
from .providers import (
    CallableProvider,
    Event,
    GaussianPacket,
    GridField,
    ManyParticleProvider,
    PlaneWaveSuperposition,
    ProductProvider,
    SpacetimeGrid,
    StaticMode,
    SymmetrizedProvider,
    WavefieldProvider,
    dispersion,
)
from .solvers import solve_klein_gordon, solve_schrodinger

__all__ = [
    "CallableProvider", "Event", "GaussianPacket", "GridField", "ManyParticleProvider",
    "PlaneWaveSuperposition", "ProductProvider", "SpacetimeGrid", "StaticMode", "StencilValue",
    "SymmetrizedProvider", "WavefieldProvider", "amp_dalembertian", "amp_laplacian", "box_and_amp",
    "continuity_residual", "dispersion", "eval_amplitude", "eval_phase", "eval_phase_path", "eval_psi",
    "phase_gradient", "solve_klein_gordon", "solve_schrodinger",
]
