"""Space-time norms, inequality ratio suites, and decay-exponent regression.

Every "bounded up to a constant" claim is measured, never assumed: the ratio
functions here return the left/right quotient of an inequality with all
explicit powers in place, and the harnesses assert finiteness plus stability
of that quotient across scale, grid, or ensemble sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .flow import Trajectory, linear_propagate
from .spectral import (
    Field,
    array_norm,
    fractional_laplacian,
    lebesgue_norm,
    sobolev_norm,
    to_physical,
)


class DegenerateInputError(ValueError):
    """Raised when a measured quotient would be 0/0."""


@dataclass(frozen=True)
class FitResult:
    """Least-squares power-law fit ``value ~ exp(intercept) * t^slope``."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_points: int


def fit_power_law(x: np.ndarray, y: np.ndarray) -> FitResult:
    """Log-log least squares; inputs must be positive."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a power-law fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    a = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(np.sum(total**2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        window=(float(x.min()), float(x.max())),
        n_points=int(x.size),
    )


def decay_fit(traj: Trajectory, window: tuple[float, float]) -> FitResult:
    """Fit the decay exponent of ``||h(t)||_2`` over records inside the window."""
    t = traj.times()
    keep = (t >= window[0]) & (t <= window[1])
    if int(keep.sum()) < 8:
        raise ValueError(f"need at least 8 records in window {window}, have {int(keep.sum())}")
    return fit_power_law(t[keep], traj.column("l2")[keep])


@dataclass(frozen=True)
class SpaceTimeNorm:
    q: float
    window: tuple[float, float]
    value: float


def spacetime_norm(traj: Trajectory, q: float, window: tuple[float, float] | None = None) -> SpaceTimeNorm:
    """
    Mixed norm ``( integral ||h(t)||_q^q dt )^(1/q)`` by trapezoid rule over
    the recorded sample times.  Currently supports the critical exponent
    ``q = 2 + 4/d`` (recorded on every trajectory) and ``q = 2``.
    """
    t = traj.times()
    if window is None:
        window = (float(t[0]), float(t[-1]))
    keep = (t >= window[0]) & (t <= window[1])
    if int(keep.sum()) < 3:
        raise ValueError(f"need at least 3 records in window {window}")
    q_critical = 2.0 + 4.0 / traj.grid.d
    if abs(q - q_critical) < 1e-9:
        values = traj.column("l2p4d")[keep]
    elif abs(q - 2.0) < 1e-9:
        values = traj.column("l2")[keep]
    else:
        raise ValueError(f"unsupported exponent q={q}; trajectories record q=2 and q={q_critical}")
    integral = float(np.trapezoid(values**q, t[keep]))
    return SpaceTimeNorm(q=q, window=window, value=integral ** (1.0 / q))


@dataclass(frozen=True)
class WeightedSupNorm:
    beta: float
    window: tuple[float, float]
    value: float


def weighted_sup_norm(traj: Trajectory, beta: float, window: tuple[float, float] | None = None) -> WeightedSupNorm:
    """``max over records of t^(beta/2) ||h(t)||_2`` (records at ``t > 0``)."""
    t = traj.times()
    if window is None:
        window = (float(t[0]), float(t[-1]))
    keep = (t >= window[0]) & (t <= window[1]) & (t > 0)
    if not np.any(keep):
        raise ValueError(f"no positive-time records in window {window}")
    value = float(np.max(t[keep] ** (beta / 2.0) * traj.column("l2")[keep]))
    return WeightedSupNorm(beta=beta, window=window, value=value)


def _flow_time_samples(horizon: float, n_samples: int) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(horizon * 1e-5, horizon, n_samples)])


def linear_flow_spacetime_norm(
    f: Field, q: float, horizon: float, n_samples: int = 80, tail_budget: float = 0.01
) -> float:
    """
    ``|| e^{t Lap} f ||`` in ``L^q`` of time and space over ``[0, horizon]``,
    by exact propagation at geometric times and trapezoid quadrature.

    The infinite-horizon tail is estimated from the fitted decay of the
    integrand over the last decade; a tail fraction above ``tail_budget``
    means the horizon was too short and raises.
    """
    times = _flow_time_samples(horizon, n_samples)
    integrand = np.array([lebesgue_norm(linear_propagate(f, float(t)), q) ** q for t in times])
    integral = float(np.trapezoid(integrand, times))
    if integral <= 0:
        return 0.0
    last = times >= horizon / 10.0
    tail_fit = fit_power_law(times[last], np.maximum(integrand[last], 1e-300))
    rate = -tail_fit.slope
    tail = integrand[-1] * horizon / (rate - 1.0) if rate > 1.0 else math.inf
    fraction = tail / (integral + tail) if math.isfinite(tail) else 1.0
    if fraction > tail_budget:
        raise ValueError(
            f"horizon {horizon} too short: estimated tail fraction "
            f"{fraction:.3g} exceeds budget {tail_budget}"
        )
    return integral ** (1.0 / q)


def strichartz_ratio(
    h0: Field, gamma0: float, horizon: float | None, n_samples: int = 80
) -> float:
    """
    Measured constant of the rough-data space-time bound
    ``|| e^{t Lap} h0 ||_{L^{2+4/d} of (t,x)} <= C ||h0||_{-gamma0}``.

    With ``horizon=None`` the horizon is doubled from 10 until the estimated
    tail drops below budget.
    """
    den = sobolev_norm(h0, -gamma0)
    if den <= 0:
        raise DegenerateInputError("zero data has no Strichartz quotient")
    q = 2.0 + 4.0 / h0.grid.d
    if horizon is not None:
        return linear_flow_spacetime_norm(h0, q, horizon, n_samples) / den
    last: Exception | None = None
    t = 10.0
    while t <= 1280.0:
        try:
            return linear_flow_spacetime_norm(h0, q, t, n_samples) / den
        except ValueError as exc:
            last = exc
            t *= 2.0
    raise ValueError(f"no horizon up to 1280 met the tail budget: {last}")


def supercritical_flow_ratio(
    f: Field, q: float, delta: float, horizon: float, n_samples: int = 80
) -> float:
    """
    Measured constant of ``|| e^{t Lap} f ||_{L^q of (t,x)} <= C || |grad|^delta f ||_2``
    for radial data supported away from the origin (``delta`` may be negative).
    """
    den = sobolev_norm(f, delta)
    if den <= 0:
        raise DegenerateInputError("zero data has no flow quotient")
    return linear_flow_spacetime_norm(f, q, horizon, n_samples) / den


def heat_smoothing_ratio(f: Field, t: float, p: float, q: float) -> float:
    """
    Measured constant of the semigroup smoothing bound
    ``|| e^{t Lap} f ||_q <= C t^{-(d/2)(1/p - 1/q)} ||f||_p`` for ``q >= p``.
    """
    if q < p:
        raise ValueError(f"need q >= p, got p={p}, q={q}")
    if not t > 0:
        raise ValueError("smoothing ratio needs t > 0")
    den = lebesgue_norm(f, p)
    if den == 0:
        return 0.0
    d = f.grid.d
    decay = t ** (-(d / 2.0) * (1.0 / p - 1.0 / q))
    return lebesgue_norm(linear_propagate(f, t), q) / (decay * den)


def radial_embedding_ratio(f: Field, alpha: float, q: float, p: float, s: float) -> float:
    """
    Measured constant of the radial weighted embedding
    ``|| |x|^alpha f ||_q <= C || |grad|^s f ||_p`` under the exponent balance
    ``alpha + s = d (1/p - 1/q)``.
    """
    d = f.grid.d
    qi = 0.0 if math.isinf(q) else 1.0 / q
    pi = 0.0 if math.isinf(p) else 1.0 / p
    if abs(alpha + s - d * (pi - qi)) > 1e-12:
        raise ValueError(
            f"exponent balance violated: alpha + s = {alpha + s} != d(1/p - 1/q) = {d * (pi - qi)}"
        )
    grid = f.grid
    r = grid.radius
    with np.errstate(divide="ignore"):
        weight = np.where(r > 0, r**alpha, 0.0 if alpha > 0 else np.nan)
    if alpha < 0 and np.any(np.isnan(weight)):
        weight = np.where(np.isnan(weight), 0.0, weight)  # center point excluded
    num = array_norm(weight * to_physical(f), grid, q)
    den = lebesgue_norm(fractional_laplacian(f, s), p)
    if den == 0:
        raise DegenerateInputError("zero data has no embedding quotient")
    return num / den


@dataclass(frozen=True)
class LowFreqReport:
    """Quotients of the scheduled low-frequency bound along one trajectory."""

    alpha: float
    gamma0: float
    c_budget: float
    y_alpha: float
    y_gamma: float
    max_quotient: float
    implied_budget: float
    improved_max_quotient: float
    improved_implied_budget: float
    n_records: int


def lowfreq_diagnostic(
    traj: Trajectory,
    alpha: float,
    gamma0: float,
    c_budget: float = 1.0,
    t_min: float = 1.0,
) -> LowFreqReport:
    """
    Per-record quotient of ``||P_{<=N(t)} h||_2`` against the budgeted bound
    ``t^(-alpha/2) C (1 + N t^(alpha/2) + N t^(1/2) Y_alpha)`` under the
    schedule ``N(t)^2 = 2 alpha / t``, plus the improved variant with weight
    ``t^(-gamma0/2)`` and gain ``t^(-alpha/2)`` in the trailing term.

    ``implied_budget`` is the smallest constant that would bound every
    quotient by 1; the harness asserts it is finite and refinement-stable.
    """
    sched = traj.schedule
    if not (sched.active and abs(sched.alpha - alpha) < 1e-12):
        raise ValueError(
            f"trajectory was recorded with schedule {sched}, not the sqrt schedule at alpha={alpha}"
        )
    t = traj.times()
    pos = t > 0
    l2 = traj.column("l2")
    y_alpha = float(np.max(t[pos] ** (alpha / 2.0) * l2[pos]))
    y_gamma = float(np.max(t[pos] ** (gamma0 / 2.0) * l2[pos]))
    keep = t >= t_min
    if not np.any(keep):
        raise ValueError(f"no records at t >= {t_min}")
    tt = t[keep]
    low = traj.column("lowfreq_l2")[keep]
    n_t = traj.column("n_of_t")[keep]
    base_bound = tt ** (-alpha / 2.0) * (1.0 + n_t * tt ** (alpha / 2.0) + n_t * np.sqrt(tt) * y_alpha)
    impr_bound = tt ** (-gamma0 / 2.0) * (
        1.0 + n_t * tt ** (gamma0 / 2.0) + n_t * tt ** ((1.0 - alpha) / 2.0) * y_gamma
    )
    base_q = float(np.max(low / (c_budget * base_bound)))
    impr_q = float(np.max(low / (c_budget * impr_bound)))
    return LowFreqReport(
        alpha=alpha,
        gamma0=gamma0,
        c_budget=c_budget,
        y_alpha=y_alpha,
        y_gamma=y_gamma,
        max_quotient=base_q,
        implied_budget=base_q * c_budget,
        improved_max_quotient=impr_q,
        improved_implied_budget=impr_q * c_budget,
        n_records=int(keep.sum()),
    )


@dataclass(frozen=True)
class DuhamelCheck:
    """Left/right quotients of the forced-flow space-time bound."""

    sup_l2_quotient: float
    critical_quotient: float
    h1_quotient: float
    forcing_norm: float


def duhamel_norm_check(times: np.ndarray, forcing: list[Field]) -> DuhamelCheck:
    """
    Evolve ``D(t) = integral_0^t e^{(t-s) Lap} F(s) ds`` by exact per-interval
    propagation (piecewise-linear forcing in each interval) and compare the
    three output norms ``sup_t ||D||_2``, ``||D||_{L^{2+4/d} of (t,x)}`` and
    ``|| grad D ||_{L^2 of (t,x)}`` against ``||F||`` in the dual mixed norm
    with exponent ``2(2+d)/(d+4)``.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 40:
        raise ValueError(f"need at least 40 forcing samples, got {times.size}")
    if np.any(np.diff(times) <= 0):
        raise ValueError("forcing sample times must be strictly increasing")
    grid = forcing[0].grid
    d = grid.d
    q_out = 2.0 + 4.0 / d
    q_in = 2.0 * (2.0 + d) / (d + 4.0)

    from .flow import _phi1, _phi2  # shared removable-singularity kernels

    k2 = grid.k_square
    c = np.zeros(grid.shape, dtype=np.complex128)
    sup_l2 = 0.0
    crit_integrand = np.empty(times.size)
    h1_integrand = np.empty(times.size)
    fq_integrand = np.empty(times.size)

    def observe(i: int, coeffs: np.ndarray) -> None:
        nonlocal sup_l2
        l2 = math.sqrt(grid.volume * float(np.sum(np.abs(coeffs) ** 2)))
        sup_l2 = max(sup_l2, l2)
        field = Field(grid, coeffs)
        crit_integrand[i] = lebesgue_norm(field, q_out) ** q_out
        h1_integrand[i] = grid.volume * float(np.sum(k2 * np.abs(coeffs) ** 2))

    observe(0, c)
    fq_integrand[0] = lebesgue_norm(forcing[0], q_in) ** q_in
    for i in range(1, times.size):
        dt = times[i] - times[i - 1]
        z = -dt * k2
        p1, p2 = _phi1(z), _phi2(z)
        c = np.exp(z) * c + dt * (
            (p1 - p2) * forcing[i - 1].coefficients + p2 * forcing[i].coefficients
        )
        observe(i, c)
        fq_integrand[i] = lebesgue_norm(forcing[i], q_in) ** q_in

    den = float(np.trapezoid(fq_integrand, times)) ** (1.0 / q_in)
    if den == 0:
        return DuhamelCheck(0.0, 0.0, 0.0, 0.0)
    crit = float(np.trapezoid(crit_integrand, times)) ** (1.0 / q_out)
    h1 = math.sqrt(float(np.trapezoid(h1_integrand, times)))
    return DuhamelCheck(
        sup_l2_quotient=sup_l2 / den,
        critical_quotient=crit / den,
        h1_quotient=h1 / den,
        forcing_norm=den,
    )
