"""
Periodic pseudo-spectral foundation.

Everything in the lab lives on a uniform periodic grid covering
``[-L/2, L/2)``.  Transforms follow the numpy convention: the forward DFT is
unscaled and the inverse carries ``1/n``.  With that convention

    sum_i |u_i|^2 dx  ==  (dx^2 / L) * sum_m |u_hat_m|^2

and every norm formula in the package carries the ``dx`` and ``L`` factors
explicitly so that physical values do not depend on the resolution.

Multipliers with an odd symbol (``i xi``, the Airy phase ``exp(i xi^3 t)``)
zero the Nyquist mode.  ``|xi|^s`` multipliers annihilate the mean mode for
every ``s``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ContractError, CorruptedStateError, DomainOverflowError

#: Fraction of the box (split over both ends) watched by the decay monitor.
EDGE_FRACTION = 0.05
#: Relative amplitude allowed in the edge region.
EDGE_THRESHOLD = 1e-8

_EVAL_CHUNK_ENTRIES = 1 << 21


def critical_exponent(k: int) -> float:
    """Scale-invariant Sobolev exponent ``s_k = (k - 4) / (2k)``."""
    return (k - 4) / (2.0 * k)


@dataclass(frozen=True)
class Grid1D:
    """
    Uniform periodic grid on ``[-L/2, L/2)`` and its dual frequency lattice.

    Parameters
    ----------
    n_points : int
        Number of samples; a power of two, at least 8.
    length : float
        Box length ``L``.
    """

    n_points: int
    length: float

    def __post_init__(self) -> None:
        n = self.n_points
        if isinstance(n, bool) or int(n) != n or n < 8 or (int(n) & (int(n) - 1)):
            raise ContractError(f"n_points must be a power of two >= 8, got {n!r}")
        if not (np.isfinite(self.length) and self.length > 0):
            raise ContractError(f"length must be positive, got {self.length!r}")
        object.__setattr__(self, "n_points", int(n))
        object.__setattr__(self, "length", float(self.length))

    @property
    def dx(self) -> float:
        return self.length / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        x = -0.5 * self.length + self.dx * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        """Angular frequencies ``2 pi m / L`` in FFT order."""
        xi = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        xi.flags.writeable = False
        return xi

    @cached_property
    def rxi(self) -> np.ndarray:
        """Non-negative frequencies matching ``numpy.fft.rfft`` output."""
        rxi = 2.0 * np.pi * np.fft.rfftfreq(self.n_points, d=self.dx)
        rxi.flags.writeable = False
        return rxi

    @property
    def nyquist_index(self) -> int:
        return self.n_points // 2

    def refined(self, factor: int = 2) -> "Grid1D":
        """Same box with ``factor`` times as many points."""
        return Grid1D(self.n_points * factor, self.length)

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_points))


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples ``values[i] = u(x_i)`` on a grid.  Immutable."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_points,):
            raise ContractError(
                f"field has shape {v.shape}, grid expects ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(v)):
            raise CorruptedStateError("field contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid1D, fn) -> "Field":
        return cls(grid, fn(grid.x))

    def _check(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise ContractError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, np.floating, np.integer)):
            return Field(self.grid, self.values * float(scalar))
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.dx))

    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Unscaled DFT coefficients in FFT order (mode ``m`` at index ``m mod n``)."""

    grid: Grid1D
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != (self.grid.n_points,):
            raise ContractError("coefficient array does not match the grid")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)


def forward_transform(f: Field) -> SpectralField:
    if not np.all(np.isfinite(f.values)):
        raise CorruptedStateError("cannot transform a non-finite field")
    return SpectralField(f.grid, np.fft.fft(f.values))


def inverse_transform(fh: SpectralField) -> Field:
    return Field(fh.grid, np.fft.ifft(fh.coeffs).real)


def _apply_real_multiplier(f: Field, symbol: np.ndarray) -> Field:
    """Apply a multiplier given on the rfft half-spectrum."""
    n = f.grid.n_points
    return Field(f.grid, np.fft.irfft(np.fft.rfft(f.values) * symbol, n=n))


def abs_power_symbol(rxi: np.ndarray, s: float) -> np.ndarray:
    """``|xi|^s`` on a half-spectrum with the mean mode set to zero."""
    sym = np.zeros_like(rxi)
    sym[1:] = rxi[1:] ** s
    return sym


def fractional_derivative(f: Field, s: float) -> Field:
    """
    Apply ``D^s``, the Fourier multiplier with symbol ``|xi|^s``.

    The mean mode is removed for every ``s``, so ``D^0 f`` is ``f`` minus its
    mean.  Supported range is ``s >= -1``.
    """
    if not s >= -1:
        raise ContractError(f"fractional order must be >= -1, got {s}")
    return _apply_real_multiplier(f, abs_power_symbol(f.grid.rxi, s))


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral ``d^order/dx^order``; odd orders zero the Nyquist mode."""
    sym = (1j * f.grid.rxi) ** order
    if order % 2:
        sym[-1] = 0.0
    return _apply_real_multiplier(f, sym)


def airy_symbol(grid: Grid1D, t: float) -> np.ndarray:
    """Half-spectrum multiplier ``exp(i xi^3 t)`` with the Nyquist mode zeroed."""
    xi = grid.rxi
    sym = np.exp(1j * (xi**3) * t)
    sym[-1] = 0.0
    return sym


def airy_propagate(f: Field, t: float) -> Field:
    """
    Exact linear flow of ``u_t + u_xxx = 0`` for time ``t``.

    Mode ``xi`` picks up the phase ``exp(i xi^3 t)``; with this sign
    ``sin(x)`` is carried to ``sin(x + t)``.
    """
    if t == 0:
        return f
    return _apply_real_multiplier(f, airy_symbol(f.grid, t))


def translate(f: Field, shift: float) -> Field:
    """Return ``f(x - shift)`` by spectral phase shift."""
    xi = f.grid.rxi
    sym = np.exp(-1j * xi * shift)
    sym[-1] = np.cos(xi[-1] * shift)
    return _apply_real_multiplier(f, sym)


def evaluate(f: Field, points) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points."""
    grid = f.grid
    n = grid.n_points
    pts = np.asarray(points, dtype=np.float64).ravel()
    c = np.fft.rfft(f.values) / n
    c[1:-1] *= 2.0
    xi = grid.rxi
    y = pts - grid.x[0]
    out = np.empty_like(y)
    chunk = max(1, _EVAL_CHUNK_ENTRIES // xi.size)
    for start in range(0, y.size, chunk):
        yy = y[start:start + chunk]
        phase = np.exp(1j * np.outer(yy, xi[:-1]))
        out[start:start + chunk] = (phase @ c[:-1]).real + c[-1].real * np.cos(xi[-1] * yy)
    return out.reshape(np.shape(points))


def edge_ratio(values: np.ndarray) -> float:
    """``max |u|`` over the outer 5% of the box divided by ``max |u|``."""
    v = np.abs(np.asarray(values))
    peak = v.max()
    if peak == 0:
        return 0.0
    m = max(1, int(round(0.5 * EDGE_FRACTION * v.size)))
    return float(max(v[:m].max(), v[-m:].max()) / peak)


def decays_at_edges(f: Field, threshold: float = EDGE_THRESHOLD) -> bool:
    return edge_ratio(f.values) <= threshold


def rescale(f: Field, lam: float, k: int) -> Field:
    """
    Scaling map ``u -> lam^(2/k) u(lam x)`` of the gKdV equation.

    Values are taken from the trigonometric interpolant of ``f``; points
    ``lam x`` that fall outside the box are treated as zero, which presumes
    ``f`` has decayed there.

    Raises
    ------
    DomainOverflowError
        If the input (for ``lam > 1``) or the result fails the edge-decay test.
    """
    if not lam > 0:
        raise ContractError(f"scale must be positive, got {lam}")
    if lam == 1:
        return f
    grid = f.grid
    if lam > 1 and not decays_at_edges(f):
        raise DomainOverflowError("input does not decay at the box edge")
    y = lam * grid.x
    inside = np.abs(y) < 0.5 * grid.length
    vals = np.zeros(grid.n_points)
    vals[inside] = evaluate(f, y[inside])
    out = Field(grid, lam ** (2.0 / k) * vals)
    if not decays_at_edges(out):
        raise DomainOverflowError(
            f"rescaled field (lam={lam}) does not decay at the box edge; "
            f"edge ratio {edge_ratio(out.values):.3e}"
        )
    return out


def write_snapshot(stem, f: Field, time: float, k: int) -> tuple[Path, Path]:
    """
    Write ``<stem>.bin`` (little-endian float64 samples) and ``<stem>.json``.

    The sidecar carries ``n_points``, ``length``, ``time`` and ``k``.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    bin_path.write_bytes(f.values.astype("<f8").tobytes())
    meta = {
        "n_points": f.grid.n_points,
        "length": f.grid.length,
        "time": float(time),
        "k": int(k),
    }
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return bin_path, json_path


def read_snapshot(path) -> tuple[Field, dict]:
    """Read a snapshot given either its ``.bin``/``.json`` path or its stem."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    meta = json.loads(stem.with_suffix(".json").read_text())
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    grid = Grid1D(int(meta["n_points"]), float(meta["length"]))
    return Field(grid, raw.astype(np.float64)), meta
