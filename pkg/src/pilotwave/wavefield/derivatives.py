"""Amplitude, phase and finite-difference operators on providers.

Signature (+,-): the time coordinate is ``x0 = c t`` and the wave operator is
``box = c^-2 d_t^2 - d_x^2``.  Stencils are 4th-order central differences
on ``|psi|`` with step ``h`` in both ``x0`` and ``x`` (so the time step is
``h / c``).  For closed-form providers the stencil is evaluated in
``np.longdouble`` to push the rounding floor below the truncation error.
"""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import UndefinedPhaseError
from .providers import Event, WavefieldProvider

# 4th-order central weights, offsets -2..2, applied as integers then divided by 12
D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])
OFFSETS = np.arange(-2, 3)

DEFAULT_FLOOR = 1e-12


class StencilValue(NamedTuple):
    value: float
    node_adjacent: bool


def work_dtype(provider) -> type:
    return np.longdouble if provider.extended_precision else np.float64


def _coords(provider, t, x):
    dt = work_dtype(provider)
    t = np.asarray(t, dtype=dt)
    x = np.asarray(x, dtype=dt)
    return np.broadcast_arrays(t, x)


def _psi_checked(provider, t, x):
    provider.check_domain(t, x)
    return provider.psi(t, x)


def _phase_jump(psi_line, axis=0):
    """True where consecutive stencil samples jump in phase by more than pi/2."""
    a = psi_line.take(range(1, psi_line.shape[axis]), axis=axis)
    b = psi_line.take(range(0, psi_line.shape[axis] - 1), axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        jump = np.abs(np.angle(a * np.conj(b)))
    return np.any(jump > np.pi / 2, axis=axis)


def box_and_amp(provider: WavefieldProvider, t, x, h: float, floor: float = DEFAULT_FLOOR):
    """Vectorised ``(box|psi|, |psi|, lap|psi|, node_adjacent)`` at events ``(t, x)``.

    All nine stencil points go through one provider call.  Providers with a
    closed-form ``log_amplitude`` are differenced in log space, which keeps
    the rounding floor far below the truncation error for small ``h``.  The
    phase-jump node test only runs where the stencil amplitude dips below
    half its maximum.  Works in the provider's working dtype; callers convert.
    """
    t, x = _coords(provider, t, x)
    dt = t.dtype
    h = dt.type(h)
    t_off, x_off, weights = _stencil9(dt)
    shape = (9,) + (1,) * t.ndim
    tt = t[None] + t_off.reshape(shape) * (h / dt.type(provider.c))
    xx = x[None] + x_off.reshape(shape) * h
    provider.check_domain(tt, xx)
    scale = 12 * h**2
    log_amp = getattr(provider, "log_amplitude", None)
    if log_amp is not None:
        # sum_k w_k A_k = A_0 sum_k w_k expm1(L_k - L_0) avoids cancelling nearly equal values
        la = log_amp(tt, xx)
        a = np.exp(la)
        amp = a[2]
        rel = np.expm1(la - la[2])
        box, dxx = amp * (weights @ rel.reshape(9, -1)).reshape((2,) + t.shape) / scale
    else:
        a = provider.amplitude(tt, xx)
        amp = a[2]
        box, dxx = (weights @ a.reshape(9, -1)).reshape((2,) + t.shape) / scale
    amin = a.min(axis=0)
    node = amin < floor
    # across a node |psi| is V-shaped, so the stencil minimum drops well below its maximum
    suspicious = amin < 0.5 * a.max(axis=0)
    if suspicious.any():
        psi = provider.psi(tt, xx)
        psi_t = psi[:5]
        psi_x = psi[_X_ROWS]
        node = node | (suspicious & (_phase_jump(psi_t) | _phase_jump(psi_x)))
    return box, amp, dxx, node


# stencil layout: five time offsets (centre at row 2), then x offsets -2, -1, 1, 2
_X_ROWS = np.array([5, 6, 2, 7, 8])


@lru_cache(maxsize=None)
def _stencil9(dtype):
    t_off = np.array([-2, -1, 0, 1, 2, 0, 0, 0, 0], dtype=dtype)
    x_off = np.array([0, 0, 0, 0, 0, -2, -1, 1, 2], dtype=dtype)
    w_tt = np.zeros(9, dtype=dtype)
    w_tt[:5] = D2
    w_xx = np.zeros(9, dtype=dtype)
    w_xx[_X_ROWS] = D2
    # rows: box weights, then xx weights
    return t_off, x_off, np.stack([w_tt - w_xx, w_xx])


def eval_amplitude(provider: WavefieldProvider, e: Event) -> float:
    """``|psi(e)|``."""
    t, x = np.asarray(e.t), np.asarray(e.x)
    return float(np.abs(_psi_checked(provider, t, x)))


def eval_psi(provider: WavefieldProvider, e: Event) -> complex:
    return complex(_psi_checked(provider, np.asarray(e.t), np.asarray(e.x)))


def eval_phase(provider: WavefieldProvider, e: Event, floor: float = DEFAULT_FLOOR) -> float:
    """``S(e) = hbar * arg psi(e)`` on the principal branch ``(-hbar pi, hbar pi]``.

    Use :func:`eval_phase_path` for a continuously unwrapped phase.
    """
    psi = eval_psi(provider, e)
    if abs(psi) < floor:
        raise UndefinedPhaseError(f"phase undefined at node (|psi|={abs(psi):.3g}) at {e}")
    return provider.hbar * float(np.angle(psi))


def eval_phase_path(provider: WavefieldProvider, events: Sequence[Event], floor: float = DEFAULT_FLOOR):
    """Phase along an ordered sequence of events, unwrapped from the first one.

    Consecutive events must be close enough that the true phase changes by
    less than ``hbar * pi`` between them.
    """
    t = np.array([e.t for e in events], dtype=float)
    x = np.array([e.x for e in events], dtype=float)
    psi = _psi_checked(provider, t, x)
    if np.any(np.abs(psi) < floor):
        raise UndefinedPhaseError("phase undefined: path passes through a node")
    return provider.hbar * np.unwrap(np.angle(psi))


def phase_gradient(provider: WavefieldProvider, e: Event, h: float = 1e-3, floor: float = DEFAULT_FLOOR):
    """``(dS/dt, dS/dx)`` at ``e`` from ``hbar Im(conj(psi) dpsi) / |psi|^2``."""
    t, x = _coords(provider, e.t, e.x)
    hh = work_dtype(provider)(h)
    psi0 = _psi_checked(provider, t, x)
    if abs(psi0) < floor:
        raise UndefinedPhaseError(f"phase undefined at node at {e}")
    ht = hh / provider.c
    psi_t = _psi_checked(provider, t + OFFSETS.astype(t.dtype) * ht, np.broadcast_to(x, (5,)))
    psi_x = _psi_checked(provider, np.broadcast_to(t, (5,)), x + OFFSETS.astype(t.dtype) * hh)
    dpsi_t = np.sum(D1 * psi_t) / (12 * ht)
    dpsi_x = np.sum(D1 * psi_x) / (12 * hh)
    norm = abs(psi0) ** 2
    s_t = provider.hbar * np.imag(np.conj(psi0) * dpsi_t) / norm
    s_x = provider.hbar * np.imag(np.conj(psi0) * dpsi_x) / norm
    return float(s_t), float(s_x)


def amp_laplacian(provider: WavefieldProvider, e: Event, h: float) -> float:
    """4th-order estimate of ``d^2|psi|/dx^2`` at ``e``."""
    if not h > 0:
        raise ValueError("h must be positive")
    _, _, lap, _ = box_and_amp(provider, e.t, e.x, h)
    return float(lap)


def amp_dalembertian(provider: WavefieldProvider, e: Event, h: float,
                     floor: float = DEFAULT_FLOOR) -> StencilValue:
    """4th-order estimate of ``box|psi| = c^-2 d_t^2|psi| - d_x^2|psi|``.

    The result carries a ``node_adjacent`` flag when the stencil straddles
    (or touches) a zero of ``psi``; the value is returned regardless.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    box, _, _, node = box_and_amp(provider, e.t, e.x, h, floor)
    return StencilValue(float(box), bool(node))


def continuity_residual(provider: WavefieldProvider, e: Event, h: float = 1e-2,
                        floor: float = DEFAULT_FLOOR) -> float:
    """``d_mu(|psi|^2 d^mu S)`` at ``e`` by nested central differences.

    The current ``|psi|^2 dS = hbar Im(conj(psi) dpsi)`` is formed without
    unwrapping the phase.  Zero for exact Klein-Gordon solutions up to the
    O(h^4) stencil error.
    """
    t, x = _coords(provider, e.t, e.x)
    hh = work_dtype(provider)(h)
    ht = hh / provider.c
    c = provider.c
    off = OFFSETS.astype(t.dtype)
    # outer stencil points, each with its own inner stencil
    tt = (t + off[:, None] * ht + off[None, :] * ht)  # [outer, inner] along t
    xx_t = np.broadcast_to(x, tt.shape)
    xx = (x + off[:, None] * hh + off[None, :] * hh)
    tt_x = np.broadcast_to(t, xx.shape)
    psi_t = _psi_checked(provider, tt, xx_t)
    psi_x = _psi_checked(provider, tt_x, xx)
    if min(np.min(np.abs(psi_t)), np.min(np.abs(psi_x))) < floor:
        raise UndefinedPhaseError(f"node inside continuity stencil at {e}")
    # j_t = |psi|^2 dS/dt at each outer t point, j_x likewise along x
    j_t = provider.hbar * np.imag(np.conj(psi_t[:, 2]) * (psi_t @ D1) / (12 * ht))
    j_x = provider.hbar * np.imag(np.conj(psi_x[:, 2]) * (psi_x @ D1) / (12 * hh))
    div = (D1 @ j_t) / (12 * ht) / c**2 - (D1 @ j_x) / (12 * hh)
    return float(div)
