"""Periodic spectral fields: grids, transforms, quadrature, and norm functionals.

Conventions used throughout the package:

* the box is ``[-L/2, L/2)^d`` sampled on a uniform lattice of ``M`` points
  per axis, with physical arrays indexed left-to-right in each coordinate;
* a coefficient array lives on the dual lattice ``k in (2*pi/L)*Z^d`` in
  standard FFT ordering and is normalized so that ``coefficient(k)``
  approximates ``(1/L^d) * integral f(x) exp(-i k.x) dx``;
* quadrature is the rectangle rule with weight ``dx^d``, exact for
  band-limited integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as _fft


class SymmetryError(ValueError):
    """Raised when a real-flagged field carries non-Hermitian coefficients."""


@dataclass(frozen=True)
class Grid:
    """
    Periodic lattice descriptor.

    Parameters
    ----------
    d : int
        Spatial dimension, 2 or 3.
    L : float
        Box period (side length).
    M : int
        Points per axis; must be even so the dual lattice is
        ``(2*pi/L) * {-M/2, ..., M/2 - 1}^d``.
    """

    d: int
    L: float
    M: int

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise ValueError(f"dimension d must be 2 or 3, got {self.d}")
        if not self.L > 0:
            raise ValueError(f"period L must be positive, got {self.L}")
        if self.M <= 0 or self.M % 2 != 0:
            raise ValueError(f"points per axis M must be even and positive, got {self.M}")

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def k_min(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def k_max(self) -> float:
        """Nyquist magnitude per axis, ``pi * M / L``."""
        return math.pi * self.M / self.L

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @cached_property
    def k_axis(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.M, d=self.dx)

    @cached_property
    def k_square(self) -> np.ndarray:
        axes = np.meshgrid(*([self.k_axis] * self.d), indexing="ij")
        return sum(a**2 for a in axes)

    @cached_property
    def k_mag(self) -> np.ndarray:
        return np.sqrt(self.k_square)

    @cached_property
    def x_axis(self) -> np.ndarray:
        return (np.arange(self.M) - self.M // 2) * self.dx

    @cached_property
    def radius(self) -> np.ndarray:
        """Physical distance from the box center on the lattice."""
        axes = np.meshgrid(*([self.x_axis] * self.d), indexing="ij")
        return np.sqrt(sum(a**2 for a in axes))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every ``|k_i| <= (2/3) k_max``."""
        cut = (2.0 / 3.0) * self.k_max
        keep = np.ones(self.shape, dtype=bool)
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.M
            keep &= np.abs(self.k_axis).reshape(shape) <= cut * (1 + 1e-12)
        return keep


@dataclass(frozen=True)
class Field:
    """
    One scalar field stored as spectral coefficients on a :class:`Grid`.

    Coefficient arrays are copied and frozen at construction; all operations
    on fields are pure functions returning new fields, so instances are safe
    to share between concurrent workers.
    """

    grid: Grid
    coefficients: np.ndarray
    real: bool = True

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} != grid shape {self.grid.shape}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def mean_coefficient(self) -> complex:
        return complex(self.coefficients[(0,) * self.grid.d])

    def hermitian_defect(self) -> float:
        """Max deviation of ``coefficient(-k)`` from ``conj(coefficient(k))``."""
        c = self.coefficients
        rev = c
        for axis in range(c.ndim):
            rev = np.roll(np.flip(rev, axis=axis), 1, axis=axis)
        return float(np.max(np.abs(c - np.conj(rev))))


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.shape, dtype=np.complex128))


def from_coefficients(grid: Grid, coefficients: np.ndarray, real: bool = True) -> Field:
    return Field(grid, coefficients, real=real)


def to_spectral(values: np.ndarray, grid: Grid, real: bool = True) -> Field:
    """Forward transform of lattice samples over ``[-L/2, L/2)^d``."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ValueError(f"sample shape {values.shape} != grid shape {grid.shape}")
    coeffs = _fft.fftn(np.fft.ifftshift(values), norm="forward")
    return Field(grid, coeffs, real=real)


def to_physical(f: Field) -> np.ndarray:
    """
    Inverse transform to lattice samples.

    Raises
    ------
    SymmetryError
        If the field is real-flagged but its coefficients are not Hermitian
        symmetric (relative tolerance 1e-10).
    """
    if not f.real:
        raise ValueError("to_physical expects a real-flagged field")
    scale = float(np.max(np.abs(f.coefficients)))
    if scale > 0 and f.hermitian_defect() > 1e-10 * scale:
        raise SymmetryError("real-flagged field has non-Hermitian coefficients")
    values = _fft.ifftn(f.coefficients, norm="forward")
    return np.fft.fftshift(values.real)


def array_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    """Lebesgue norm of lattice samples with rectangle-rule quadrature."""
    if p != np.inf and p < 1:
        raise ValueError(f"Lebesgue exponent p must be >= 1, got {p}")
    a = np.abs(np.asarray(values, dtype=np.float64))
    if np.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a**p) * grid.cell_volume) ** (1.0 / p))


def lebesgue_norm(f: Field, p: float) -> float:
    """``L^p`` norm on the lattice; ``p = inf`` is the lattice max."""
    return array_norm(to_physical(f), f.grid, p)


def sobolev_norm(f: Field, s: float) -> float:
    """
    Homogeneous Sobolev norm ``( L^d * sum_{k != 0} |k|^(2s) |c(k)|^2 )^(1/2)``.

    The ``k = 0`` mode is excluded by convention so that negative orders are
    well defined; for mean-zero fields ``sobolev_norm(f, 0)`` equals the
    ``L^2`` norm by Parseval.
    """
    k2 = f.grid.k_square
    power = np.abs(f.coefficients) ** 2
    nonzero = k2 > 0
    with np.errstate(divide="ignore"):
        weighted = np.where(nonzero, k2**s, 0.0) * power
    return float(math.sqrt(f.grid.volume * weighted.sum()))


def inner_product(f: Field, g: Field) -> float:
    """``L^2`` pairing ``integral f g dx`` via Parseval."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    return float(f.grid.volume * np.real(np.sum(f.coefficients * np.conj(g.coefficients))))


def gradient_norm(f: Field) -> float:
    """``L^2`` norm of the gradient, ``sqrt(L^d * sum |k|^2 |c|^2)``."""
    return float(math.sqrt(f.grid.volume * np.sum(f.grid.k_square * np.abs(f.coefficients) ** 2)))


def fractional_laplacian(f: Field, s: float) -> Field:
    """
    Apply the multiplier ``|k|^s`` coefficient-wise.

    The ``k = 0`` coefficient is zeroed for ``s != 0`` (for negative ``s``
    this is the defining convention; for positive ``s`` it is the natural
    value of the symbol).
    """
    k2 = f.grid.k_square
    nonzero = k2 > 0
    with np.errstate(divide="ignore"):
        mult = np.where(nonzero, k2 ** (s / 2.0), 1.0 if s == 0 else 0.0)
    return Field(f.grid, f.coefficients * mult, real=f.real)


def dealias(f: Field) -> Field:
    """Zero every mode outside the 2/3-rule block of the grid."""
    return Field(f.grid, f.coefficients * f.grid.dealias_mask, real=f.real)


def nonlinearity(f: Field, mu: int, apply_dealias: bool = True) -> Field:
    """
    Pointwise power nonlinearity ``mu * |f|^(4/d) * f`` evaluated in physical
    space and transformed back, with 2/3-rule truncation by default.

    ``|f|^(4/d)`` is evaluated literally (continuous extension 0 at ``f = 0``);
    overflowing values propagate as ``inf`` for the caller's finiteness checks.
    """
    power = 4.0 / f.grid.d
    v = to_physical(f)
    with np.errstate(over="ignore", invalid="ignore"):
        w = mu * np.abs(v) ** power * v
    out = to_spectral(w, f.grid)
    return dealias(out) if apply_dealias else out


def mean_zero(f: Field) -> tuple[Field, float]:
    """Zero the ``k = 0`` coefficient; returns the new field and the removed magnitude."""
    origin = (0,) * f.grid.d
    leak = abs(f.coefficients[origin])
    if leak == 0:
        return f, 0.0
    c = f.coefficients.copy()
    c[origin] = 0.0
    return Field(f.grid, c, real=f.real), float(leak)


def rescale_field(f: Field, lam: int) -> Field:
    """
    Realize ``x -> lam^(d/2) f(lam x)`` on the grid with ``L -> L/lam`` and
    ``M -> M/lam`` (``lam`` a power of 2 dividing ``M``).

    Exact on band-limited fields: the new coefficients are the central block
    of the old ones scaled by ``lam^(d/2)``.
    """
    g = f.grid
    if lam < 1 or g.M % lam != 0 or lam & (lam - 1):
        raise ValueError(f"lam must be a power of 2 dividing M, got {lam}")
    if lam == 1:
        return f
    m_new = g.M // lam
    shifted = np.fft.fftshift(f.coefficients)
    lo = g.M // 2 - m_new // 2
    block = shifted[(slice(lo, lo + m_new),) * g.d]
    coeffs = np.fft.ifftshift(block) * lam ** (g.d / 2.0)
    return Field(Grid(g.d, g.L / lam, m_new), coeffs, real=f.real)


def random_field(grid: Grid, seed: int, k_cut: float | None = None, tag: int = 0) -> Field:
    """
    Reproducible mean-zero random real field: white noise in physical space,
    optionally truncated to ``|k| <= k_cut``.

    The stream is keyed by ``(seed, tag)`` through a counter-based generator,
    so ensembles are stable across platforms.
    """
    rng = np.random.Generator(np.random.Philox(key=[seed % 2**64, tag % 2**64]))
    f = to_spectral(rng.standard_normal(grid.shape), grid)
    c = f.coefficients.copy()
    if k_cut is not None:
        c[grid.k_mag > k_cut] = 0.0
    c[(0,) * grid.d] = 0.0
    return Field(grid, c)
