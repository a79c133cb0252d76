"""Consumption-deprivation dynamics.

The deprivation field obeys a viscous Burgers equation

    dCD/dt + CD dCD/dy = nu(t) d2CD/dy2.

When CD has the Engel shape ``V K/(K+y)`` the right-hand side collapses to
``V K (2 nu + V K)/(K+y)^3``, whose sign is that of ``Phi = 2 nu + V K``.
The steady viscosity ``nu0 = -V0 K0/2`` is negative, so the raw PDE is only
solved (by Cole-Hopf or finite differences) for ``nu > 0``; the production
path integrates the Engel-form rate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_increasing, check_positive
from .engel import TrendModel
from .exceptions import DomainError, IllPosedRegimeError, RangeError, StepSizeError
from .fpdist import GridFunction, write_grid_csv
from .numerics import Quadrature, quad_semi_infinite, rk4_step

WELL_POSED = "well-posed"
PAPER_REGIME = "paper"
INCREASING = "increasing"
DECREASING = "decreasing"
STEADY = "steady"
PHI_ZERO_BAND = 1e-9


class CDWarning(UserWarning):
    """Clamping or extrapolation during a deprivation trajectory."""


@dataclass(frozen=True)
class Viscosity:
    """``nu(t) = nu0 + delta_nu(t)``; ``delta_nu`` defaults to zero."""

    nu0: float
    delta_nu: object = None

    @classmethod
    def steady(cls, V0, K0, delta_nu=None):
        """The viscosity ``-V0 K0/2`` that makes Engel-form CD stationary."""
        return cls(-0.5 * V0 * K0, delta_nu)

    def __call__(self, t):
        d = 0.0 if self.delta_nu is None else self.delta_nu(t)
        return self.nu0 + d

    def sign_regime(self, t):
        return WELL_POSED if self(t) > 0 else PAPER_REGIME


def _value_at(x, t):
    if isinstance(x, TrendModel) or callable(x):
        return float(x(t))
    return float(x)


def _nu_at(nu, t):
    return nu(t) if callable(nu) else float(nu)


def engel_form(y, V, K):
    return V * K / (K + np.asarray(y, dtype=float))


def engel_form_rate(y, V, K, nu):
    """``V K (2 nu + V K)/(K+y)^3``: the Burgers rate on Engel-shaped CD."""
    y = np.asarray(y, dtype=float)
    if np.any(K + y <= 0):
        raise DomainError("engel_form_rate needs K + y > 0")
    vk = V * K
    out = vk * (2.0 * nu + vk) / (K + y) ** 3
    return float(out) if out.ndim == 0 else out


def phi(t, nu, V_t, K_t):
    """``Phi(t) = 2 nu(t) + V(t) K(t)`` and the poverty-trend class.

    ``V_t`` and ``K_t`` may be numbers or trend callables. Values with
    ``|Phi| < 1e-9 V K`` are classed as steady.
    """
    V = _value_at(V_t, t)
    K = _value_at(K_t, t)
    value = 2.0 * _nu_at(nu, t) + V * K
    if abs(value) < PHI_ZERO_BAND * V * K:
        return value, STEADY
    return value, INCREASING if value > 0 else DECREASING


@dataclass(frozen=True)
class CDState:
    """Deprivation values on a grid, optionally tagged as exact Engel form."""

    gf: GridFunction
    nu: Viscosity | None = None
    engel_form: tuple | None = None

    def __post_init__(self):
        if np.any(self.gf.values < 0):
            raise DomainError("CD values must be non-negative")
        if self.engel_form is not None:
            V, K = self.engel_form
            err = np.max(np.abs(self.gf.values - engel_form(self.gf.grid, V, K)))
            if err > 1e-9 * V:
                raise DomainError("CD tagged as Engel form deviates from V K/(K+y)")

    @classmethod
    def from_engel(cls, grid, V, K, nu=None, t=0.0):
        grid = check_increasing("grid", grid)
        return cls(GridFunction(grid, engel_form(grid, V, K), t), nu, (float(V), float(K)))

    @property
    def t(self):
        return self.gf.t

    def __call__(self, y):
        return np.interp(y, self.gf.grid, self.gf.values)


@dataclass
class CDTrajectory:
    """Deprivation snapshots ``values[k]`` on ``grid`` at ``times[k]``."""

    grid: np.ndarray
    times: np.ndarray
    values: np.ndarray
    nu: Viscosity | None = None
    sign_regimes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def state(self, k=-1) -> CDState:
        return CDState(GridFunction(self.grid, self.values[k], self.times[k]), self.nu)

    @property
    def final(self) -> CDState:
        return self.state(-1)

    def at(self, t):
        """CD field at time ``t``, linearly interpolated between snapshots."""
        if not self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12:
            raise RangeError(f"t={t} outside trajectory span")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            return self.values[0].copy()
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1 - w) * self.values[k] + w * self.values[k + 1]

    def to_csv(self, path, header=None):
        """Long format (t, y, CD) with ``#`` metadata lines."""
        n_t, n_y = self.values.shape
        write_grid_csv(path, [("t", np.repeat(self.times, n_y)),
                              ("y", np.tile(self.grid, n_t)),
                              ("CD", self.values.ravel())], header)


def evolve_cd_engel(V_trend, K_trend, nu, t0, t1, dt, grid, cd0=None,
                    record_every=None, extrapolate=True):
    """Integrate the Engel-form deprivation rate pointwise with RK4.

    Each grid point follows ``dCD/dt = engel_form_rate(y, V(t), K(t), nu(t))``
    starting from ``cd0`` (default: the Engel form at ``t0``). Negative
    values are clamped to zero. Trend clamping, trajectory clamping and
    trend extrapolation are recorded on ``trajectory.warnings`` and emitted
    as :class:`CDWarning`.

    Parameters
    ----------
    V_trend, K_trend : TrendModel, callable or float
    nu : Viscosity or float
    record_every : float, optional
        Snapshot spacing in rounds; default keeps every step.
    extrapolate : bool
        If False, a trend evaluated outside its valid range raises
        :class:`RangeError`.
    """
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if t1 < t0:
        raise StepSizeError("t1 must not precede t0")
    grid = check_increasing("grid", grid)
    notes = []

    def params(t):
        out = []
        for name, trend in (("V", V_trend), ("K", K_trend)):
            if isinstance(trend, TrendModel):
                if not trend.in_range(t):
                    if not extrapolate:
                        raise RangeError(f"{name} trend evaluated outside its range at t={t}")
                    _note(notes, f"{name} trend extrapolated beyond {trend.valid_range}")
                if trend.positivity_floor is not None and trend.raw(t) <= trend.positivity_floor:
                    _note(notes, f"{name} trend clamped to positivity floor")
            out.append(_value_at(trend, t))
        return out

    if cd0 is None:
        V, K = params(t0)
        cd = engel_form(grid, V, K)
    else:
        cd = np.array(cd0.gf.values if isinstance(cd0, CDState) else cd0, dtype=float)
        if cd.shape != grid.shape:
            raise DomainError("cd0 must match the grid")

    def rhs(t, _state):
        V, K = params(t)
        return engel_form_rate(grid, V, K, _nu_at(nu, t))

    n = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    h = (t1 - t0) / n if n else 0.0
    every = 1 if record_every is None else max(1, int(round(record_every / h))) if n else 1
    times, snaps, regimes = [float(t0)], [cd.copy()], []
    t = float(t0)
    for k in range(n):
        regimes.append(WELL_POSED if _nu_at(nu, t) > 0 else PAPER_REGIME)
        cd = rk4_step(rhs, cd, t, h)
        t = t0 + (k + 1) * h
        if np.any(cd < 0):
            _note(notes, "CD clamped at zero")
            cd = np.maximum(cd, 0.0)
        if (k + 1) % every == 0 or k == n - 1:
            times.append(t)
            snaps.append(cd.copy())
    for msg in notes:
        warnings.warn(msg, CDWarning, stacklevel=2)
    if isinstance(nu, Viscosity):
        nu_obj = nu
    else:
        nu_obj = Viscosity(0.0, nu) if callable(nu) else Viscosity(float(nu))
    return CDTrajectory(grid, np.array(times), np.array(snaps), nu_obj, regimes, notes)


def _note(notes, msg):
    if msg not in notes:
        notes.append(msg)


# --------------------------------------------------------------------------
# Burgers solvers for the well-posed regime


def _cumulative_linear(grid, values):
    """Exact antiderivative of the piecewise-linear interpolant, as a callable."""
    h = np.diff(grid)
    slope = np.diff(values) / h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (values[:-1] + values[1:]))])

    def F(x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        d = np.minimum(x, grid[-1]) - grid[i]
        inside = cum[i] + values[i] * d + 0.5 * slope[i] * d * d
        # constant continuation past the last node
        return inside + values[-1] * np.maximum(x - grid[-1], 0.0)

    return F


_CH_QUAD = Quadrature(abs_tol=1e-300, rel_tol=1e-12, max_subdivisions=2000)


def cole_hopf_evolve(cd0: GridFunction, nu, t, y0=None, y_eval=None, h=None):
    """Viscous Burgers solution at elapsed time ``t`` by the Cole-Hopf formula.

    The kernel integral is truncated at ``y0`` (default: the first grid
    node) and ``cd0`` is continued as a constant past the last node, so the
    result is exact only away from both ends (outside the domain of
    dependence of the truncation).

    Parameters
    ----------
    cd0 : GridFunction
        Initial deprivation, interpolated linearly.
    nu : float
        Positive viscosity.
    y_eval : array, optional
        Output points (default: the grid of ``cd0``).
    h : float, optional
        Step of the 5-point derivative of ``log`` of the kernel integral.
    """
    if not nu > 0:
        raise IllPosedRegimeError(
            f"Cole-Hopf needs nu > 0 (got {nu}); use evolve_cd_engel for the paper regime")
    check_positive("t", t)
    grid = cd0.grid
    y0 = float(grid[0]) if y0 is None else float(y0)
    check_positive("y0", y0)
    y_eval = grid if y_eval is None else np.asarray(y_eval, dtype=float)
    F = _cumulative_linear(grid, cd0.values)
    sigma = math.sqrt(2.0 * nu * t)
    h = 0.05 * sigma if h is None else float(h)
    s_offsets = np.arange(-10, 11) * sigma
    probe = np.linspace(-10.0, 10.0, 201) * sigma

    def log_kernel_integral(y):
        def exponent(y1):
            return -(y - y1) ** 2 / (4.0 * nu * t) - (F(y1) - F(y0)) / (2.0 * nu)

        cands = np.concatenate([np.maximum(y + probe, y0), [y0]])
        shift = float(np.max(exponent(cands)))
        pts = [p for p in y + s_offsets if p > y0]
        val = quad_semi_infinite(lambda y1: np.exp(exponent(y1) - shift), y0, _CH_QUAD,
                                 points=pts)
        return shift + math.log(val)

    stencil = np.array([-2.0, -1.0, 1.0, 2.0])
    weights = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    out = np.empty(y_eval.size)
    for j, y in enumerate(y_eval):
        logs = np.array([log_kernel_integral(y + s * h) for s in stencil])
        out[j] = -2.0 * nu * float(np.dot(weights, logs)) / h
    return GridFunction(y_eval, out, cd0.t + t, dict(cd0.meta))


def fd_evolve(cd0, nu, t0, t1, dt):
    """Explicit finite-difference Burgers solver (validation oracle).

    First-order upwind advection and centred diffusion on the (possibly
    non-uniform) grid of ``cd0``; both end values are held fixed.

    Raises
    ------
    IllPosedRegimeError
        ``nu(t) < 0`` at any step.
    StepSizeError
        ``dt`` violates ``dt <= min(dy/max|CD|, dy^2/(2 nu))``.
    """
    state = cd0 if isinstance(cd0, CDState) else CDState(cd0)
    grid = state.gf.grid
    u = np.array(state.gf.values, dtype=float)
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    hl = np.diff(grid)[:-1]
    hr = np.diff(grid)[1:]
    dy_min = float(np.min(np.diff(grid)))
    n = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    step = (t1 - t0) / n if n else 0.0
    t = float(t0)

    def check(nu_t, u):
        if nu_t < 0:
            raise IllPosedRegimeError(f"nu={nu_t} < 0: diffusion is ill-posed")
        amax = float(np.max(np.abs(u)))
        bound = min(dy_min / amax if amax > 0 else np.inf,
                    dy_min ** 2 / (2 * nu_t) if nu_t > 0 else np.inf)
        if step > bound:
            raise StepSizeError(f"dt={step} violates the CFL bound {bound}")

    check(_nu_at(nu, t0), u)
    constant_nu = not callable(nu)
    inv_hl, inv_hr, inv_w = 1.0 / hl, 1.0 / hr, 2.0 / (hl + hr)
    for k in range(n):
        nu_t = _nu_at(nu, t)
        if not constant_nu:
            check(nu_t, u)
        ui = u[1:-1]
        back = (ui - u[:-2]) * inv_hl
        fwd = (u[2:] - ui) * inv_hr
        rate = nu_t * (fwd - back) * inv_w
        rate -= np.maximum(ui, 0.0) * back + np.minimum(ui, 0.0) * fwd
        ui += step * rate
        t = t0 + (k + 1) * step
    # the bound depends on max|CD|; confirm it held to the end
    check(_nu_at(nu, t1), u)
    nu_obj = state.nu if state.nu is not None else (nu if isinstance(nu, Viscosity) else None)
    return CDState(GridFunction(grid, u, t1, dict(state.gf.meta)), nu_obj)
