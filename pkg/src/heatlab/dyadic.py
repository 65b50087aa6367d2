"""Dyadic frequency projectors built from a fixed smooth radial bump.

The bump is ``phi(xi) = theta(2 - |xi|)`` with the standard smooth step
``theta(r) = g(r) / (g(r) + g(1 - r))``, ``g(r) = exp(-1/r)`` for ``r > 0``
and ``0`` otherwise.  ``phi`` equals 1 on ``|xi| <= 1``, vanishes on
``|xi| >= 2``, and is monotone in between; the plateau values are exact
0/1 floats so complementary projectors add to the identity bit-exactly.

Projector modes (``N`` dyadic, anchored at unit frequency):

* ``leq``  -- symbol ``phi(|k|/N)``              (low pass at ``N``)
* ``gt``   -- symbol ``1 - phi(|k|/N)``          (complement of ``leq``)
* ``band`` -- symbol ``phi(|k|/N) - phi(|k|/(N/2))``
* ``geq``  -- symbol ``1 - phi(|k|/(N/2))``      (sum of bands at and above ``N``)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spectral import Field, Grid, array_norm, fractional_laplacian, lebesgue_norm, to_physical, to_spectral

_MODES = ("leq", "band", "gt", "geq")


def smooth_step(r: np.ndarray | float) -> np.ndarray:
    """C-infinity step: 0 for ``r <= 0``, 1 for ``r >= 1``, monotone between."""
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros(r.shape)
    out[r >= 1.0] = 1.0
    mid = (r > 0.0) & (r < 1.0)
    if np.any(mid):
        rm = r[mid]
        with np.errstate(over="ignore"):
            g = np.exp(-1.0 / rm)
            g1 = np.exp(-1.0 / (1.0 - rm))
        out[mid] = g / (g + g1)
    return out


def bump(rho: np.ndarray | float) -> np.ndarray:
    """Radial bump profile: 1 on ``rho <= 1``, 0 on ``rho >= 2``."""
    return smooth_step(2.0 - np.asarray(rho, dtype=np.float64))


@dataclass(frozen=True)
class DyadicProjector:
    """Frequency projector at dyadic scale ``N`` with one of the modes above."""

    N: float
    mode: str = "leq"

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ValueError(f"unknown projector mode {self.mode!r}, expected one of {_MODES}")
        if not self.N > 0:
            raise ValueError(f"projector scale N must be positive, got {self.N}")

    def symbol(self, grid: Grid) -> np.ndarray:
        if self.N > 2.0 * grid.k_max:
            raise ValueError(
                f"projector scale N={self.N} exceeds 2*k_max={2.0 * grid.k_max} of the grid"
            )
        if self.mode == "leq":
            return _leq_symbol(grid, self.N)
        if self.mode == "gt":
            return 1.0 - _leq_symbol(grid, self.N)
        if self.mode == "geq":
            return 1.0 - _leq_symbol(grid, self.N / 2.0)
        return _leq_symbol(grid, self.N) - _leq_symbol(grid, self.N / 2.0)


@lru_cache(maxsize=512)
def _leq_symbol(grid: Grid, n: float) -> np.ndarray:
    sym = bump(grid.k_mag / n)
    sym.flags.writeable = False
    return sym


def project(f: Field, proj: DyadicProjector) -> Field:
    """
    Apply the projector coefficient-wise.  The symbol is real and radial, so
    real-flagged fields stay real-flagged.  Complement and band modes are
    evaluated as literal differences of the same low-pass products, which
    makes the definitional identities bit-exact: ``gt == f - leq``,
    ``band == leq(N) - leq(N/2)``, and dyadic band sums telescope exactly.
    """
    if proj.N > 2.0 * f.grid.k_max:
        raise ValueError(
            f"projector scale N={proj.N} exceeds 2*k_max={2.0 * f.grid.k_max} of the grid"
        )
    c = f.coefficients
    if proj.mode == "leq":
        out = c * _leq_symbol(f.grid, proj.N)
    elif proj.mode == "gt":
        out = c - c * _leq_symbol(f.grid, proj.N)
    elif proj.mode == "geq":
        out = c - c * _leq_symbol(f.grid, proj.N / 2.0)
    else:
        out = c * _leq_symbol(f.grid, proj.N) - c * _leq_symbol(f.grid, proj.N / 2.0)
    return Field(f.grid, out, real=f.real)


def low_pass(f: Field, n: float) -> Field:
    return project(f, DyadicProjector(n, "leq"))


def band_project(f: Field, n: float) -> Field:
    return project(f, DyadicProjector(n, "band"))


def grid_dyadic_scales(grid: Grid, n_lo: float = 1.0, n_hi: float | None = None) -> list[float]:
    """Dyadic scales ``2^j`` (anchored at 1) between ``n_lo`` and
    ``n_hi`` (default ``k_max / 2``) inclusive."""
    if n_hi is None:
        n_hi = grid.k_max / 2.0
    scales = []
    n = 1.0
    while n > n_lo:
        n /= 2.0
    while n < n_lo:
        n *= 2.0
    while n <= n_hi * (1 + 1e-12):
        scales.append(n)
        n *= 2.0
    return scales


def bernstein_ratio(f: Field, n: float, p: float = 2.0, q: float = 2.0, s: float = 0.0) -> float:
    """
    Measured constant of the band-limited norm inequality
    ``|| |grad|^s P_N f ||_q <= C * N^(s + d/p - d/q) * || P_N f ||_p``
    for ``q >= p``; returns 0 if the band content vanishes.
    """
    if q < p:
        raise ValueError(f"need q >= p, got p={p}, q={q}")
    band = band_project(f, n)
    if float(np.max(np.abs(band.coefficients))) == 0.0:
        return 0.0
    num = lebesgue_norm(fractional_laplacian(band, s) if s else band, q)
    d = f.grid.d
    den = n ** (s + d / p - d / q) * lebesgue_norm(band, p)
    return num / den


def mismatch_ratio(
    f: Field,
    inner_cut,
    outer_cut,
    n: float,
    p: float = 2.0,
    q: float = 2.0,
    m: float = 1.0,
    mode: str = "geq",
) -> float:
    """
    Measured constant of the spatial-mismatch bound for a frequency projection
    sandwiched between cutoffs with separated supports:

    ``|| chi_in P (chi_out f) ||_q <= C * A^(-m + d/q - d/p) * N^(-m) * || chi_out f ||_p``

    where ``A`` is the distance between the cutoff supports.  Returns 0 when
    ``chi_out f`` vanishes; raises if the supports overlap.
    """
    gap = inner_cut.support_distance(outer_cut)
    if gap <= 0:
        raise ValueError("cutoff supports overlap; mismatch ratio needs separated supports")
    grid = f.grid
    outer_vals = outer_cut.values(grid)
    inner_vals = inner_cut.values(grid)
    localized = to_spectral(outer_vals * to_physical(f), grid)
    den_norm = array_norm(outer_vals * to_physical(f), grid, p)
    if den_norm == 0.0:
        return 0.0
    projected = project(localized, DyadicProjector(n, mode))
    left = array_norm(inner_vals * to_physical(projected), grid, q)
    d = grid.d
    right = gap ** (-m + d / q - d / p) * n ** (-m) * den_norm
    return left / right
