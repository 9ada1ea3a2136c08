"""
Bubble superpositions and a greedy profile extractor.

A bubble with parameters ``(h, x0, t0)`` and profile ``psi`` is

    h^(-2/k) [V((t - t0) / h^3) psi]((x - x0) / h)

where ``V`` is the Airy group.  :func:`synthesize` sums bubbles;
:func:`extract_profiles` runs the reverse direction on a single field:
it hunts for the dominant bubble on a dyadic scale ladder, cuts it out with
a smooth window, and repeats on the remainder.  Extracted bubbles always
carry ``t0 = 0``; time-shifted content stays in the remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, LabError
from .functionals import StrichartzAccumulator, sobolev_norm
from .spectral import (
    Field,
    Grid1D,
    abs_power_symbol,
    airy_propagate,
    airy_symbol,
    critical_exponent,
    rescale,
    translate,
)

#: Half-width of the flat part of the cut-out window, in units of ``h``.
WINDOW_PLATEAU = 8.0
#: Half-width where the window reaches zero, in units of ``h``.
WINDOW_EDGE = 10.0
#: Time samples used by the remainder Strichartz proxy.
PROXY_SAMPLES = 64


@dataclass(frozen=True)
class ProfileParams:
    """Scale ``h``, position ``x0``, time shift ``t0`` and profile ``psi``."""

    h: float
    x0: float
    t0: float
    psi: Field

    def __post_init__(self) -> None:
        if not (math.isfinite(self.h) and self.h > 0):
            raise ContractError(f"bubble scale must be positive, got {self.h}")


@dataclass(frozen=True)
class DecompositionReport:
    profiles: list
    remainder: Field
    pythagorean_defect: float
    pairwise_divergence: np.ndarray
    remainder_strichartz: float
    hsk_norms: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "profiles": [
                {"h": p.h, "x0": p.x0, "t0": p.t0, "hsk_norm": n}
                for p, n in zip(self.profiles, self.hsk_norms)
            ],
            "defect": self.pythagorean_defect,
            "gamma_matrix": [[float(g) for g in row] for row in self.pairwise_divergence],
            "remainder_strichartz": self.remainder_strichartz,
        }


def bubble(p: ProfileParams, t: float, grid: Grid1D, k: int) -> Field:
    """Single rescaled, translated and Airy-evolved profile at time ``t``."""
    if p.psi.grid != grid:
        raise ContractError("profile lives on a different grid")
    g = airy_propagate(p.psi, (t - p.t0) / p.h**3)
    g = rescale(g, 1.0 / p.h, k)
    return translate(g, p.x0) if p.x0 != 0 else g


def synthesize(profiles, t: float, grid: Grid1D, k: int) -> Field:
    """
    Sum of bubbles at time ``t``.

    Raises
    ------
    DomainOverflowError
        If any rescaled bubble does not fit in the box.
    """
    total = np.zeros(grid.n_points)
    for p in profiles:
        total += bubble(p, t, grid, k).values
    return Field(grid, total)


def pairwise_divergence(a: ProfileParams, b: ProfileParams) -> float:
    """``h_a/h_b + h_b/h_a + |t_a - t_b| / h_a^3 + |x_a - x_b| / h_a``."""
    return a.h / b.h + b.h / a.h + abs(a.t0 - b.t0) / a.h**3 + abs(a.x0 - b.x0) / a.h


def divergence_matrix(profiles) -> np.ndarray:
    """Symmetric matrix of ``min(Gamma(a, b), Gamma(b, a))``."""
    n = len(profiles)
    out = np.full((n, n), 2.0)
    for i in range(n):
        for j in range(i + 1, n):
            g = min(pairwise_divergence(profiles[i], profiles[j]),
                    pairwise_divergence(profiles[j], profiles[i]))
            out[i, j] = out[j, i] = g
    return out


def strichartz_proxy(f: Field, k: int, horizon: float = 1.0, samples: int = PROXY_SAMPLES) -> float:
    """``|| V(t) f ||_{L^{5k/4}_x L^{5k/2}_t}`` over ``t in [0, horizon]``."""
    grid = f.grid
    acc = StrichartzAccumulator(k, grid, tracked_pairs=[(5 * k / 4, 5 * k / 2, 0)])
    c = np.fft.rfft(f.values)
    for t in np.linspace(0.0, horizon, samples + 1):
        ct = c * airy_symbol(grid, float(t)) if t else c
        acc.add_spectrum(float(t), ct)
    return acc.norm(*acc.tracked_pairs[0])


def _window(grid: Grid1D, x0: float, h: float) -> np.ndarray:
    """Smooth bump: 1 on ``|x-x0| <= 8h``, cosine taper to 0 at ``10h``."""
    L = grid.length
    d = np.abs((grid.x - x0 + 0.5 * L) % L - 0.5 * L) / h
    w = np.zeros(grid.n_points)
    w[d <= WINDOW_PLATEAU] = 1.0
    taper = (d > WINDOW_PLATEAU) & (d < WINDOW_EDGE)
    y = (d[taper] - WINDOW_PLATEAU) / (WINDOW_EDGE - WINDOW_PLATEAU)
    w[taper] = 0.5 * (1.0 + np.cos(np.pi * y))
    return w


def scale_ladder(grid: Grid1D) -> list[float]:
    """Dyadic scales ``2^m`` from four grid cells up to a window of ~0.45 L."""
    lo = 4.0 * grid.dx
    hi = 0.45 * grid.length / WINDOW_EDGE
    m_lo, m_hi = math.ceil(math.log2(lo)), math.floor(math.log2(hi))
    return [2.0**m for m in range(m_lo, m_hi + 1)]


def _filter_symbol(rxi: np.ndarray, h: float) -> np.ndarray:
    # e * eta^2 exp(-eta^2): a band-pass peaking at |h xi| = 1 with value 1
    eta2 = (h * rxi) ** 2
    return math.e * eta2 * np.exp(-eta2)


def _sliding_sum(rho: np.ndarray, w: int) -> np.ndarray:
    n = rho.size
    if 2 * w + 1 >= n:
        return np.full(n, rho.sum())
    ext = np.concatenate([rho[n - w:], rho, rho[:w]])
    csum = np.concatenate([[0.0], np.cumsum(ext)])
    return csum[2 * w + 1:] - csum[:n]


def locate_bubble(f: Field, k: int, ladder=None) -> tuple[float, float, float]:
    """
    Best ``(h, x0, score)`` over the ladder: the largest band-passed critical
    mass captured by a window of half-width ``2h``.  Ties go to the smaller
    scale and the leftmost position.
    """
    grid = f.grid
    sk = critical_exponent(k)
    c = np.fft.rfft(f.values) * abs_power_symbol(grid.rxi, sk)
    best = (0.0, 0.0, -1.0)
    for h in ladder if ladder is not None else scale_ladder(grid):
        band = np.fft.irfft(c * _filter_symbol(grid.rxi, h), n=grid.n_points)
        w = max(1, int(round(2.0 * h / grid.dx)))
        mass = _sliding_sum(band**2, w) * grid.dx
        j = int(np.argmax(mass))
        if mass[j] > best[2] * (1 + 1e-12):
            best = (h, float(grid.x[j]), float(mass[j]))
    return best


def extract_profiles(v: Field, k: int, max_profiles: int = 4, strichartz_stop: float = 1e-3,
                     horizon: float = 1.0, ladder=None) -> DecompositionReport:
    """
    Greedy extraction of up to ``max_profiles`` bubbles from ``v``.

    Each round locates the dominant ``(h, x0)``, cuts the content of a
    ``10h`` window around ``x0``, stores it rescaled to unit scale as
    ``psi`` and subtracts it.  A cut that would increase the remainder's
    critical norm is refused and ends the loop; so does a remainder whose
    Strichartz proxy drops below ``strichartz_stop``.

    Raises
    ------
    ContractError
        If ``v`` does not have zero mean.
    """
    grid = v.grid
    sk = critical_exponent(k)
    scale = max(float(np.max(np.abs(v.values))), 1e-300)
    if abs(v.mean()) > 1e-10 * scale:
        raise ContractError("extraction needs mean-zero data")
    if max_profiles < 0:
        raise ContractError("max_profiles must be non-negative")

    remainder = v
    profiles: list[ProfileParams] = []
    norms: list[float] = []
    r_norm = sobolev_norm(v, sk)
    proxy = strichartz_proxy(remainder, k, horizon)
    while len(profiles) < max_profiles and proxy >= strichartz_stop and r_norm > 0:
        h, x0, _ = locate_bubble(remainder, k, ladder)
        content = Field(grid, remainder.values * _window(grid, x0, h))
        candidate = remainder - content
        new_norm = sobolev_norm(candidate, sk)
        if new_norm > r_norm:
            break
        try:
            psi = rescale(translate(content, -x0), h, k)
        except LabError:
            break
        profiles.append(ProfileParams(h=h, x0=x0, t0=0.0, psi=psi))
        norms.append(sobolev_norm(psi, sk))
        remainder, r_norm = candidate, new_norm
        proxy = strichartz_proxy(remainder, k, horizon)

    total = sobolev_norm(v, sk) ** 2
    defect = total - sum(n**2 for n in norms) - r_norm**2
    return DecompositionReport(
        profiles=profiles,
        remainder=remainder,
        pythagorean_defect=float(defect),
        pairwise_divergence=divergence_matrix(profiles),
        remainder_strichartz=float(proxy),
        hsk_norms=norms,
    )


@dataclass(frozen=True)
class NonlinearProfile:
    """Solution samples ``U(t_n)`` and discrepancies ``||U(t_n) - V(t_n) psi||``."""

    times: list
    fields: list
    discrepancies: list
    complete: bool


def _reflect(f: Field) -> Field:
    # x -> -x on the grid x_i = -L/2 + i dx maps index i to (n - i) mod n
    return Field(f.grid, np.roll(f.values[::-1], 1))


def nonlinear_profile(psi: Field, t_seq, k: int, cfg, t_bar: float = 0.0) -> NonlinearProfile:
    """
    Nonlinear profile with data ``V(t_bar) psi`` at time ``t_bar``.

    The solution is integrated from ``t_bar`` to every time in ``t_seq``
    (backwards in time through the symmetry ``u(x, t) -> u(-x, -t)``).
    ``cfg`` supplies the solver settings; its ``k``, ``t_end`` and report
    cadence are overridden.  If a run stops early, the trajectory is cut
    there and ``complete`` is false.
    """
    from .dynamics import SolverConfig, run

    sk = critical_exponent(k)
    base = {**cfg.to_mapping(), "k": k, "keep_snapshots": False}
    ts = sorted(float(t) for t in t_seq)
    results: dict[float, Field] = {}
    complete = True
    start = airy_propagate(psi, t_bar)

    for direction, targets in ((1, [t for t in ts if t >= t_bar]),
                               (-1, sorted((t for t in ts if t < t_bar), reverse=True))):
        u = start if direction > 0 else _reflect(start)
        s = 0.0
        for t in targets:
            dist = abs(t - t_bar)
            if dist == s:
                results[t] = u if direction > 0 else _reflect(u)
                continue
            seg = SolverConfig.from_mapping({**base, "t_end": dist, "report_every": dist - s})
            if not np.any(u.values):
                state_field, ok = u, True
            else:
                state, verdict, _ = run(u, seg, t0=s, resume=s > 0)
                state_field, ok = state.field, verdict.reason == "completed"
            if not ok:
                complete = False
                break
            u, s = state_field, dist
            results[t] = u if direction > 0 else _reflect(u)

    times = [t for t in ts if t in results]
    fields_ = [results[t] for t in times]
    disc = [sobolev_norm(f - airy_propagate(psi, t), sk) for f, t in zip(fields_, times)]
    # report in the caller's order
    pos = {t: i for i, t in enumerate(times)}
    out_times = [float(t) for t in t_seq if float(t) in pos]
    return NonlinearProfile(
        times=out_times,
        fields=[fields_[pos[t]] for t in out_times],
        discrepancies=[disc[pos[t]] for t in out_times],
        complete=complete and len(out_times) == len(list(t_seq)),
    )
