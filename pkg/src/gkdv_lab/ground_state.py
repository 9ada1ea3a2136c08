"""
Ground states ``Q'' - Q + Q^(k+1) = 0`` and travelling solitons.

The positive even solution has the closed form

    Q(x) = [ (k+2)/2 * sech^2(k x / 2) ]^(1/k)

and the soliton of speed ``c`` is ``Q_c(x) = c^(1/k) Q(sqrt(c) x)``.
Multiplying the ODE by ``Q`` and by ``x Q'`` gives the identities used
below: ``||Q'||^2 = k/(k+4) M[Q]`` and ``E[Q] = (k-4)/(k+4) M[Q]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainOverflowError
from .functionals import energy, mass, sobolev_norm
from .spectral import Field, Grid1D, critical_exponent, derivative

#: Required decay of the profile at the box edge, relative to its peak.
EDGE_DECAY = 1e-12


def _check_k(k: int) -> None:
    if int(k) != k or k < 1:
        raise ContractError(f"k must be a positive integer, got {k!r}")


def _sech2(y: np.ndarray) -> np.ndarray:
    e = np.exp(-2.0 * np.abs(y))
    return 4.0 * e / (1.0 + e) ** 2


def ground_state_profile(x, k: int) -> np.ndarray:
    """Closed-form ``Q(x)`` evaluated pointwise."""
    _check_k(k)
    return (0.5 * (k + 2) * _sech2(0.5 * k * np.asarray(x, dtype=float))) ** (1.0 / k)


def ground_state_functionals(k: int) -> dict:
    """Exact mass, squared gradient norm and energy of ``Q``."""
    _check_k(k)
    a = 4.0 / k
    # int sech^a = sqrt(pi) Gamma(a/2) / Gamma((a+1)/2)
    sech_integral = math.sqrt(math.pi) * math.gamma(a / 2) / math.gamma((a + 1) / 2)
    m = (0.5 * (k + 2)) ** (2.0 / k) * (2.0 / k) * sech_integral
    return {
        "mass": m,
        "grad_sq": k / (k + 4) * m,
        "energy": (k - 4) / (k + 4) * m,
    }


def _periodic_offset(grid: Grid1D, x0: float) -> np.ndarray:
    L = grid.length
    return (grid.x - x0 + 0.5 * L) % L - 0.5 * L


@dataclass(frozen=True)
class GroundState:
    k: int
    profile: Field
    mass_q: float
    energy_q: float
    hsk_norm_q: float


def ground_state(k: int, grid: Grid1D) -> GroundState:
    """
    Sample ``Q`` on ``grid`` centred at ``x = 0``.

    Raises
    ------
    DomainOverflowError
        If ``Q`` has not decayed below ``1e-12`` of its peak at the box edge.
    """
    _check_k(k)
    q = ground_state_profile(grid.x, k)
    edge = ground_state_profile(0.5 * grid.length, k) / ground_state_profile(0.0, k)
    if edge > EDGE_DECAY:
        raise DomainOverflowError(
            f"box of length {grid.length} too short for Q (edge ratio {edge:.2e})"
        )
    f = Field(grid, q)
    return GroundState(
        k=k,
        profile=f,
        mass_q=mass(f),
        energy_q=energy(f, k),
        hsk_norm_q=sobolev_norm(f, critical_exponent(k)),
    )


def soliton(k: int, c: float, grid: Grid1D, x0: float = 0.0) -> Field:
    """Travelling wave ``c^(1/k) Q(sqrt(c) (x - x0))``; it moves right at speed ``c``."""
    if not c > 0:
        raise ContractError(f"soliton speed must be positive, got {c}")
    _check_k(k)
    rc = math.sqrt(c)
    edge = ground_state_profile(0.5 * grid.length * rc, k) / ground_state_profile(0.0, k)
    if edge > EDGE_DECAY:
        raise DomainOverflowError(
            f"box of length {grid.length} too short for Q_c, c={c} (edge ratio {edge:.2e})"
        )
    y = _periodic_offset(grid, x0)
    return Field(grid, c ** (1.0 / k) * ground_state_profile(rc * y, k))


def ode_residual(f: Field, k: int, c: float = 1.0) -> float:
    """Sup norm of ``f'' - c f + f^(k+1)`` with spectral derivatives."""
    r = derivative(f, 2).values - c * f.values + f.values ** (k + 1)
    return float(np.max(np.abs(r)))
