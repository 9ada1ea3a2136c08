"""
Scalar functionals: mass, energy, homogeneous Sobolev norms and the
space-time (Strichartz) norms ``|| D^s u ||_{L^p_x L^q_t}``.

Mixed norms are always taken with the time integral inside: for every grid
point the solver accumulates ``int |D^s u(x, t)|^q dt`` (trapezoid rule on
whatever, possibly non-uniform, time samples it visits) and the outer
``L^p_x`` norm is a rectangle-rule sum over the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ContractError
from .spectral import Field, Grid1D, abs_power_symbol, critical_exponent, derivative

CSV_HEADER = ("time", "mass", "energy", "hsk_norm", "dt", "window_mass")

#: Ratios this close to 1 are treated as lying on the ground-state threshold.
THRESHOLD_MARGIN = 1e-9


def fmt(x: float) -> str:
    """Round-trip-safe decimal formatting (17 significant digits)."""
    return format(float(x), ".17g")


def mass(f: Field) -> float:
    return float(np.sum(f.values**2) * f.grid.dx)


def energy(f: Field, k: int) -> float:
    ux = derivative(f).values
    u = f.values
    return float(np.sum(ux**2 - (2.0 / (k + 2)) * u ** (k + 2)) * f.grid.dx)


def _spectral_weights(n: int) -> np.ndarray:
    # rfft half-spectrum weights so that sum(w |c|^2) = sum over the full spectrum
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def sobolev_norm_from_rfft(grid: Grid1D, c: np.ndarray, s: float) -> float:
    sym = abs_power_symbol(grid.rxi, 2.0 * s)
    total = np.sum(_spectral_weights(grid.n_points) * sym * (c.real**2 + c.imag**2))
    return float(np.sqrt(total * grid.dx**2 / grid.length))


def sobolev_norm(f: Field, s: float) -> float:
    """``||f||_{H^s-dot}``; the mean mode never contributes."""
    return sobolev_norm_from_rfft(f.grid, np.fft.rfft(f.values), s)


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x)).limit_denominator(10**9)


def is_admissible(p, q, k: int) -> bool:
    """Exact check of ``2/p + 1/q == 2/k`` in rational arithmetic."""
    p, q = as_fraction(p), as_fraction(q)
    if p <= 0 or q <= 0:
        raise ContractError("exponents must be positive")
    return 2 / p + 1 / q == Fraction(2, k)


def canonical_pairs(k: int) -> list[tuple[Fraction, Fraction, Fraction]]:
    """
    The three space-time norms that control the local theory and blow-up:
    ``L^{5k/4}_x L^{5k/2}_t``, ``D^{s_k}`` in ``L^5_x L^10_t`` and the
    diagonal pair ``D^{2/3k}`` in ``L^{3k/2}_{x,t}``.
    """
    sk = Fraction(k - 4, 2 * k)
    return [
        (Fraction(5 * k, 4), Fraction(5 * k, 2), Fraction(0)),
        (Fraction(5), Fraction(10), sk),
        (Fraction(3 * k, 2), Fraction(3 * k, 2), Fraction(2, 3 * k)),
    ]


def _key(p, q, s) -> tuple[Fraction, Fraction, Fraction]:
    return as_fraction(p), as_fraction(q), as_fraction(s)


@dataclass
class NormReport:
    time: float
    mass: float
    energy: float
    hsk_norm: float
    dt: float
    window_mass: float = 0.0

    def __post_init__(self) -> None:
        if self.mass < 0 or self.hsk_norm < 0:
            raise ContractError("mass and norms are non-negative")

    def row(self) -> list[str]:
        return [fmt(getattr(self, name)) for name in CSV_HEADER]


@dataclass
class _PairState:
    integral: np.ndarray
    last: np.ndarray


@dataclass
class StrichartzAccumulator:
    """
    Running per-point time integrals ``int |D^s u(x,t)|^q dt`` for a set of
    tracked ``(p, q, s)`` triples.

    Memory is O(n) per pair; the full trajectory is never stored.  Call
    :meth:`record` to append the current norms to ``history``.
    """

    k: int
    grid: Grid1D
    tracked_pairs: list = field(default_factory=list)
    truncated: bool = False

    def __post_init__(self) -> None:
        if not self.tracked_pairs:
            self.tracked_pairs = canonical_pairs(self.k)
        self.tracked_pairs = [_key(*t) for t in self.tracked_pairs]
        self.times: list[float] = []
        self.history: list[tuple[float, dict]] = []
        self._state: dict[tuple, _PairState] = {}
        n = self.grid.n_points
        self._symbols = {
            key: abs_power_symbol(self.grid.rxi, float(key[2])) if key[2] != 0 else None
            for key in self.tracked_pairs
        }
        for key in self.tracked_pairs:
            self._state[key] = _PairState(np.zeros(n), np.zeros(n))

    def add(self, t: float, f: Field | np.ndarray) -> None:
        values = f.values if isinstance(f, Field) else np.asarray(f)
        self.add_spectrum(t, np.fft.rfft(values), values)

    def add_spectrum(self, t: float, c: np.ndarray, values: np.ndarray | None = None) -> None:
        """Add a sample given its rfft coefficients (physical values optional)."""
        if self.times and not t > self.times[-1]:
            raise ContractError("time samples must be strictly increasing")
        n = self.grid.n_points
        dt = t - self.times[-1] if self.times else 0.0
        for key, st in self._state.items():
            q = float(key[1])
            sym = self._symbols[key]
            if sym is None:
                u = values if values is not None else np.fft.irfft(c, n=n)
            else:
                u = np.fft.irfft(c * sym, n=n)
            g = np.abs(u) ** q
            if self.times:
                st.integral += 0.5 * dt * (st.last + g)
            st.last = g
        self.times.append(float(t))

    def norm(self, p, q, s) -> float:
        key = _key(p, q, s)
        if key not in self._state:
            raise ContractError(f"pair {tuple(map(str, key))} is not tracked")
        if len(self.times) < 2:
            raise ContractError("need at least two time samples")
        pf, qf = float(key[0]), float(key[1])
        inner = self._state[key].integral ** (pf / qf)
        return float((np.sum(inner) * self.grid.dx) ** (1.0 / pf))

    def norms(self) -> dict:
        return {key: self.norm(*key) for key in self.tracked_pairs}

    def record(self) -> None:
        if len(self.times) >= 2:
            self.history.append((self.times[-1], self.norms()))

    def summary(self) -> list[dict]:
        """JSON-ready list of ``{pair, value, truncation_flag}`` entries."""
        out = []
        for key in self.tracked_pairs:
            value = self.norm(*key) if len(self.times) >= 2 else 0.0
            out.append(
                {
                    "pair": [float(key[0]), float(key[1]), float(key[2])],
                    "value": value,
                    "truncation_flag": bool(self.truncated),
                }
            )
        return out


def mixed_norm_xt(acc: StrichartzAccumulator, p, q, s) -> float:
    """``(sum_x (int |D^s u(x,t)|^q dt)^{p/q} dx)^{1/p}`` over the recorded samples."""
    return acc.norm(p, q, s)


def interval_increments(acc: StrichartzAccumulator, pair, marks) -> list[float]:
    """
    Growth of the cumulative norm between consecutive ``marks`` (times at
    which :meth:`StrichartzAccumulator.record` was called).
    """
    key = _key(*pair)
    lookup = {round(t, 12): norms[key] for t, norms in acc.history}
    values = [0.0 if m == 0 else lookup[round(m, 12)] for m in marks]
    return [b - a for a, b in zip(values[:-1], values[1:])]


@dataclass(frozen=True)
class ThresholdReport:
    me_product_ratio: float
    grad_mass_ratio: float
    below_threshold: bool
    negative_energy: bool


def threshold_check(u0: Field, k: int) -> ThresholdReport:
    """
    Compare ``u0`` with the ground-state thresholds for global existence:
    ``E^s M^(1-s)`` and ``||u_x||^s ||u||^(1-s)`` against the same
    quantities for ``Q``.  Negative energy violates the hypothesis of the
    first criterion; it is flagged and the data is never reported below
    threshold.  Ratios within ``THRESHOLD_MARGIN`` of 1 count as on the
    threshold (``Q`` itself lands there up to round-off).
    """
    from .ground_state import ground_state_functionals

    s = critical_exponent(k)
    q = ground_state_functionals(k)
    m0 = mass(u0)
    e0 = energy(u0, k)
    g0 = float(np.sum(derivative(u0).values ** 2) * u0.grid.dx)
    grad_ratio = (g0 / q["grad_sq"]) ** (s / 2) * (m0 / q["mass"]) ** ((1 - s) / 2)
    if e0 < 0:
        return ThresholdReport(math.nan, grad_ratio, False, True)
    me_ratio = (e0 / q["energy"]) ** s * (m0 / q["mass"]) ** (1 - s) if k > 4 else (
        m0 / q["mass"]
    )
    below = me_ratio < 1 - THRESHOLD_MARGIN and grad_ratio < 1 - THRESHOLD_MARGIN
    return ThresholdReport(me_ratio, grad_ratio, bool(below), False)
