"""
Windowed critical-norm diagnostics.

For a snapshot ``u`` the critical density is ``|D^{s_k} u|^2``; the window
mass around ``x0`` of half-width ``lam`` is its rectangle-rule integral over
``|x - x0| <= lam`` (periodic distance).  Near an operational blow-up time
``T*`` the fraction of the critical norm inside a window that shrinks
slower than ``(T* - t)^(1/3)`` is the quantity to watch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .spectral import Field, critical_exponent, fractional_derivative


def critical_density(f: Field, k: int) -> np.ndarray:
    return fractional_derivative(f, critical_exponent(k)).values ** 2


def _half_width(f: Field, lam: float) -> int:
    if not 0 < lam <= 0.5 * f.grid.length * (1 + 1e-12):
        raise ContractError(f"window half-width must lie in (0, L/2], got {lam}")
    return int(math.floor(lam / f.grid.dx * (1 + 1e-12)))


def window_mass(f: Field, x0: float, lam: float, k: int) -> float:
    """Critical-norm mass ``int_{|x-x0|<=lam} |D^{s_k} f|^2 dx``."""
    _half_width(f, lam)
    g = f.grid
    rho = critical_density(f, k)
    d = np.abs((g.x - x0 + 0.5 * g.length) % g.length - 0.5 * g.length)
    inside = d <= lam * (1 + 1e-12) + 1e-12 * g.dx
    return float(np.sum(rho[inside]) * g.dx)


def _sliding(rho: np.ndarray, w: int) -> np.ndarray:
    """Periodic sums of ``rho[j-w : j+w+1]`` for every ``j``."""
    n = rho.size
    if 2 * w + 1 >= n:
        return np.full(n, rho.sum())
    ext = np.concatenate([rho[n - w:], rho, rho[:w]])
    csum = np.concatenate([[0.0], np.cumsum(ext)])
    return csum[2 * w + 1:] - csum[: n]


def window_profile(f: Field, lam: float, k: int) -> np.ndarray:
    """Window mass centred at every grid point, via prefix sums."""
    w = _half_width(f, lam)
    return _sliding(critical_density(f, k), w) * f.grid.dx


def track_center(f: Field, lam: float, k: int) -> float:
    """
    Grid point maximising :func:`window_mass`; ties (to 1e-12 relative) go to
    the leftmost point.
    """
    prof = window_profile(f, lam, k)
    top = prof.max()
    j = int(np.flatnonzero(prof >= top * (1 - 1e-12))[0]) if top > 0 else 0
    return float(f.grid.x[j])


@dataclass(frozen=True)
class WindowLaw:
    """
    Window half-width as a function of time before ``T*``.

    ``kind="power"``: ``lam(t) = c (T* - t)^exponent`` with ``exponent < 1/3``,
    so that ``lam(t)^-1 (T* - t)^(1/3) -> 0``.  ``kind="fixed"``: constant
    ``value``.
    """

    kind: str = "power"
    c: float = 1.0
    exponent: float = 0.2
    value: float = 1.0

    def __post_init__(self) -> None:
        if self.kind == "power":
            if not self.c > 0:
                raise ContractError("power law needs c > 0")
            if not self.exponent < 1.0 / 3.0:
                raise ContractError("power-law exponent must be < 1/3")
        elif self.kind == "fixed":
            if not self.value > 0:
                raise ContractError("fixed window needs value > 0")
        else:
            raise ContractError(f"unknown window law {self.kind!r}")

    def __call__(self, t: float, t_star: float) -> float:
        if self.kind == "fixed":
            return self.value
        return self.c * (t_star - t) ** self.exponent

    @classmethod
    def parse(cls, text: str) -> "WindowLaw":
        """``"power:c=1,exponent=0.2"`` or ``"fixed:10"``."""
        kind, _, rest = text.partition(":")
        if kind == "fixed":
            return cls(kind="fixed", value=float(rest))
        kw = {}
        for item in filter(None, rest.split(",")):
            name, _, val = item.partition("=")
            if name not in ("c", "exponent"):
                raise ContractError(f"unknown power-law parameter {name!r}")
            kw[name] = float(val)
        return cls(kind=kind, **kw)


@dataclass(frozen=True)
class ConcentrationEntry:
    t: float
    lam: float
    x0: float
    window_mass: float
    fraction: float
    resolution_flag: bool


def concentration_series(snapshots, law: WindowLaw, t_star: float, k: int) -> list[ConcentrationEntry]:
    """
    Trace of the windowed critical mass along ``snapshots`` (``(t, Field)``
    pairs).  Windows wider than half the box are clipped to ``L/2``; entries
    whose window is narrower than four grid cells carry ``resolution_flag``.
    """
    snaps = sorted(snapshots, key=lambda s: s[0])
    if snaps and not t_star > snaps[-1][0]:
        raise ContractError("t_star must exceed every snapshot time")
    sk = critical_exponent(k)
    out = []
    for t, f in snaps:
        lam = min(law(t, t_star), 0.5 * f.grid.length)
        x0 = track_center(f, lam, k)
        wm = window_mass(f, x0, lam, k)
        total = float(np.sum(fractional_derivative(f, sk).values ** 2) * f.grid.dx)
        frac = wm / total if total > 0 else 0.0
        out.append(ConcentrationEntry(t, lam, x0, wm, frac, lam < 4 * f.grid.dx))
    return out


def concentration_sensitivity(snapshots, law: WindowLaw, t_star: float, k: int,
                              factors=(0.9, 1.0, 1.1)) -> dict:
    """Series for ``T*`` scaled by each factor, using only earlier snapshots."""
    out = {}
    for fac in factors:
        ts = t_star * fac
        snaps = [(t, f) for t, f in snapshots if t < ts]
        out[fac] = concentration_series(snaps, law, ts, k)
    return out
