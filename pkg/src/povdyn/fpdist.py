"""Income density: closed-form steady state, Fokker-Planck evolution, eigenmodes.

The density obeys

    df/dt = d/dy { [(alpha+2) y - C(t) - CD(y,t)] f + y^2 df/dy }

on ``[y0, inf)`` with zero flux at ``y0``. For constant ``C = C0`` and
Engel-form ``CD = V0 K0/(K0+y)`` the zero-flux solution is

    f(y) = N exp(-(C0+V0)/y) y^-(alpha+2) (1 + K0/y)^(V0/K0).
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from ._validation import check_increasing, check_positive
from .exceptions import (DomainError, NormalizationError, SchemeError,
                         StepSizeError)
from .numerics import Quadrature, kummer_1f1, quad_interval, quad_semi_infinite

_TIGHT = Quadrature(abs_tol=1e-300, rel_tol=1e-13, max_subdivisions=400)
MAX_KUMMER_ARGUMENT = 75.0


@dataclass(frozen=True)
class SteadyStateParams:
    alpha: float
    C0: float
    V0: float
    K0: float
    y0: float

    def __post_init__(self):
        for name in ("alpha", "C0", "V0", "K0", "y0"):
            object.__setattr__(self, name, check_positive(name, getattr(self, name)))


PAPER_STEADY_STATE = SteadyStateParams(alpha=1.6, C0=64.84, V0=73.19, K0=95.0, y0=30.0)


def _log_kernel(y, p: SteadyStateParams):
    return (-(p.C0 + p.V0) / y - (p.alpha + 2.0) * np.log(y)
            + (p.V0 / p.K0) * np.log1p(p.K0 / y))


@functools.lru_cache(maxsize=64)
def _log_normaliser(p: SteadyStateParams):
    # shift by the kernel maximum so the quadrature sees O(1) values
    probe = np.geomspace(p.y0, 1e3 * max(p.K0, p.C0, p.y0), 4001)
    shift = float(np.max(_log_kernel(probe, p)))
    mode = float(probe[np.argmax(_log_kernel(probe, p))])
    z = quad_semi_infinite(lambda y: np.exp(_log_kernel(y, p) - shift), p.y0, _TIGHT,
                           points=[mode, 10 * mode])
    return shift + math.log(z), mode


def _check_support(y, p):
    y = np.asarray(y, dtype=float)
    if np.any(np.isnan(y)) or np.any(y < p.y0):
        raise DomainError(f"steady density is supported on [y0={p.y0}, inf)")
    return y


def steady_pdf(y, p: SteadyStateParams):
    """Normalised steady-state income density at ``y >= y0``."""
    y = _check_support(y, p)
    log_n, _ = _log_normaliser(p)
    out = np.exp(_log_kernel(y, p) - log_n)
    return float(out) if out.ndim == 0 else out


def normalisation_constant(p: SteadyStateParams) -> float:
    """``N`` such that ``N * kernel`` integrates to one on ``[y0, inf)``."""
    return math.exp(-_log_normaliser(p)[0])


def steady_cdf(y, p: SteadyStateParams):
    """Cumulative probability of the steady density; monotone by construction."""
    y = _check_support(y, p)
    scalar = y.ndim == 0
    flat = np.atleast_1d(y).ravel()
    order = np.argsort(flat)
    knots = np.concatenate([[p.y0], flat[order]])
    pdf_u = lambda u: steady_pdf(1.0 / u, p) / (u * u)
    pieces = np.empty(knots.size - 1)
    for i in range(pieces.size):
        lo, hi = knots[i], knots[i + 1]
        if hi == lo:
            pieces[i] = 0.0
        elif np.isinf(hi):
            pieces[i] = 1.0 - float(np.sum(pieces[:i]))
        else:
            pieces[i] = quad_interval(pdf_u, 1.0 / hi, 1.0 / lo, _TIGHT)
    cdf = np.minimum(np.cumsum(pieces), 1.0)
    out = np.empty_like(flat)
    out[order] = cdf
    return float(out[0]) if scalar else out.reshape(np.shape(y))


def steady_quantile(q, p: SteadyStateParams) -> float:
    """Income below which a fraction ``q`` of the steady population lies."""
    if not 0 < q < 1:
        raise DomainError("quantile level must lie in (0, 1)")
    hi = p.y0 * 2
    while steady_cdf(hi, p) < q:
        hi *= 2
    return brentq(lambda y: steady_cdf(y, p) - q, p.y0, hi, xtol=1e-12, rtol=1e-14)


def mean_income(p: SteadyStateParams) -> float:
    """``int y f(y) dy`` over the steady density."""
    _, mode = _log_normaliser(p)
    return quad_semi_infinite(lambda y: y * steady_pdf(y, p), p.y0, _TIGHT,
                              points=[mode, 10 * mode])


def truncation_mass(p: SteadyStateParams, y_max: float) -> float:
    """Steady-state probability beyond ``y_max`` (lost by grid truncation)."""
    return quad_semi_infinite(lambda y: steady_pdf(y, p), y_max, _TIGHT)


def tail_slope(p: SteadyStateParams, y_lo=1e3, y_hi=1e5, n=201) -> float:
    """Least-squares slope of ``log f`` against ``log y`` on log-spaced points."""
    y = np.geomspace(y_lo, y_hi, n)
    return float(np.polyfit(np.log(y), np.log(steady_pdf(y, p)), 1)[0])


def local_log_slope(y, p: SteadyStateParams):
    """Exact logarithmic derivative ``d log f / d log y``."""
    y = np.asarray(y, dtype=float)
    return -(p.alpha + 2.0) + (p.C0 + p.V0) / y - p.V0 / (p.K0 + y)


def sample_steady(p: SteadyStateParams, n, rng, y_max=None, table_size=20001):
    """Draw ``n`` incomes from the steady density by inverse-CDF lookup."""
    y_max = 1e4 * max(p.K0, p.C0) if y_max is None else y_max
    knots = np.geomspace(p.y0, y_max, table_size)
    cdf = steady_cdf(knots, p)
    u = rng.random(n) * cdf[-1]
    return np.interp(u, cdf, knots)


# --------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True)
class GridFunction:
    """Values sampled on a strictly increasing income grid at round ``t``."""

    grid: np.ndarray
    values: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grid = check_increasing("grid", self.grid)
        values = np.asarray(self.values, dtype=float)
        if values.shape != grid.shape:
            raise DomainError("grid and values must have the same shape")
        if not np.all(np.isfinite(values)):
            raise DomainError("grid function values must be finite")
        grid.setflags(write=False)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "t", float(self.t))

    def integral(self, weight=None) -> float:
        v = self.values if weight is None else self.values * np.asarray(weight)
        return float(trapezoid(v, self.grid))

    def mass(self) -> float:
        return self.integral()

    def mean(self) -> float:
        return self.integral(self.grid) / self.mass()

    def normalized(self):
        m = self.mass()
        if not m > 0:
            raise NormalizationError("cannot normalise a function with non-positive mass", m)
        return GridFunction(self.grid, self.values / m, self.t, dict(self.meta))

    def with_values(self, values, t=None):
        return GridFunction(self.grid, values, self.t if t is None else t, dict(self.meta))

    def __call__(self, y):
        return np.interp(y, self.grid, self.values, left=0.0, right=0.0)

    def to_csv(self, path, header=None, value_name="value"):
        write_grid_csv(path, [("y", self.grid), (value_name, self.values)],
                       {"t": repr(self.t), **(header or {})})

    @classmethod
    def from_csv(cls, path):
        meta, cols = read_grid_csv(path)
        names = list(cols)
        t = float(meta.get("t", 0.0))
        return cls(cols[names[0]], cols[names[1]], t, meta)


def write_grid_csv(path, columns, meta=None):
    """Write named columns as CSV with ``# key: value`` metadata lines."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}: {value}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([name for name, _ in columns])
        for row in zip(*(col for _, col in columns)):
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_grid_csv(path):
    meta = {}
    rows = []
    with open(path, encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
            elif line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    rows = [[float(x) for x in r] for r in reader]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return meta, {name: data[:, i] for i, name in enumerate(header)}


def log_grid(y0, y_max, n=2048):
    """Logarithmically spaced nodes from ``y0`` to ``y_max`` (inclusive)."""
    check_positive("y0", y0)
    if not y_max > y0:
        raise DomainError("y_max must exceed y0")
    if n < 3:
        raise DomainError("grid needs at least 3 nodes")
    return np.geomspace(y0, y_max, int(n))


def default_grid(p: SteadyStateParams, n=2048):
    """Default solver grid: log spaced on ``[y0, 1000*K0]``."""
    return log_grid(p.y0, 1e3 * p.K0, n)


def steady_grid_function(p: SteadyStateParams, grid=None, t=0.0):
    """Steady density sampled on ``grid`` and renormalised to unit grid mass."""
    grid = default_grid(p) if grid is None else check_increasing("grid", grid)
    return GridFunction(grid, steady_pdf(grid, p), t).normalized()


# --------------------------------------------------------------------------
# Fokker-Planck evolution

_GL_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


def _bernoulli(x):
    # x / (exp(x) - 1), stable near 0
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-6
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    xl = x[~small]
    out[~small] = xl / np.expm1(xl)
    return out


class FokkerPlanckOperator:
    """Finite-volume discretisation of the income Fokker-Planck operator.

    Nodes carry point values; control volumes are bounded by the midpoints
    between nodes (half cells at both ends), so the conserved mass is the
    trapezoid integral. Face fluxes use exponential fitting
    (Scharfetter-Gummel): upwind in the drift direction when the cell Peclet
    number is large, centred when it is small, and exact for the zero-flux
    state ``exp(-phi)`` with ``phi' = drift / y^2``. Both boundaries carry
    zero flux.
    """

    def __init__(self, grid, alpha):
        self.grid = check_increasing("grid", grid)
        if self.grid[0] <= 0:
            raise DomainError("income grid must be strictly positive")
        self.alpha = check_positive("alpha", alpha)
        y = self.grid
        self.h = np.diff(y)
        self.widths = np.empty_like(y)
        self.widths[0] = self.h[0] / 2
        self.widths[-1] = self.h[-1] / 2
        self.widths[1:-1] = (self.h[:-1] + self.h[1:]) / 2
        self.face_diffusion = y[:-1] * y[1:]
        self._log_ratio = np.log(y[1:] / y[:-1])
        self._inv_diff = 1.0 / y[1:] - 1.0 / y[:-1]
        mid = 0.5 * (y[:-1] + y[1:])
        self._gl_points = mid[:, None] + 0.5 * self.h[:, None] * _GL_NODES[None, :]
        self._gl_weights = 0.5 * self.h[:, None] * _GL_WEIGHTS[None, :]

    @property
    def n(self):
        return self.grid.size

    def cd_over_y2_integrals(self, cd, t=0.0):
        """``int CD(y)/y^2 dy`` over each node interval.

        ``cd`` is a callable ``cd(y, t)`` (3-point Gauss-Legendre per
        interval), an array of node values (exact for piecewise-linear CD),
        an object whose ``at(t)`` returns node values (a CD trajectory), or
        ``None`` for zero deprivation.
        """
        if cd is None:
            return np.zeros(self.n - 1)
        if hasattr(cd, "at"):
            cd = cd.at(t)
        if callable(cd):
            vals = np.asarray(cd(self._gl_points, t), dtype=float)
            return np.sum(self._gl_weights * vals / self._gl_points ** 2, axis=1)
        c = np.asarray(cd, dtype=float)
        if c.shape != self.grid.shape:
            raise DomainError("CD node values must match the grid")
        y = self.grid
        slope = np.diff(c) / self.h
        intercept = c[:-1] - slope * y[:-1]
        return -intercept * self._inv_diff + slope * self._log_ratio

    def delta_phi(self, C, cd, t=0.0):
        return ((self.alpha + 2.0) * self._log_ratio + C * self._inv_diff
                - self.cd_over_y2_integrals(cd, t))

    def coefficients(self, C, cd, t=0.0):
        """Return (diag, upper, lower) of ``A`` in ``df/dt = A f``."""
        dphi = self.delta_phi(C, cd, t)
        base = self.face_diffusion / self.h
        plus = base * _bernoulli(-dphi)   # weight of f[i+1] in face flux i+1/2
        minus = base * _bernoulli(dphi)   # weight of f[i]
        diag = np.zeros(self.n)
        diag[:-1] -= minus
        diag[1:] -= plus
        diag /= self.widths
        upper = plus / self.widths[:-1]
        lower = minus / self.widths[1:]
        return diag, upper, lower

    def apply(self, f, C, cd, t=0.0):
        diag, upper, lower = self.coefficients(C, cd, t)
        out = diag * f
        out[:-1] += upper * f[1:]
        out[1:] += lower * f[:-1]
        return out

    def explicit_bound(self, C, cd, t=0.0):
        """Largest forward-Euler step keeping the update monotone."""
        diag, _, _ = self.coefficients(C, cd, t)
        return 1.0 / float(np.max(-diag))

    def step(self, f, C, cd, dt, t=0.0, method="implicit"):
        if method == "implicit":
            diag, upper, lower = self.coefficients(C, cd, t)
            ab = np.zeros((3, self.n))
            ab[0, 1:] = -dt * upper
            ab[1] = 1.0 - dt * diag
            ab[2, :-1] = -dt * lower
            return solve_banded((1, 1), ab, f)
        if method == "explicit":
            bound = self.explicit_bound(C, cd, t)
            if dt > bound:
                raise StepSizeError(f"explicit step dt={dt} exceeds stability bound {bound}")
            return f + dt * self.apply(f, C, cd, t)
        raise ValueError(f"unknown method {method!r}")

    def mass(self, f):
        return float(np.dot(self.widths, f))

    def first_moment(self, f):
        return float(np.dot(self.widths, self.grid * f))


SELF_CONSISTENT = "self-consistent"


def _coefficient_C(C, op, f, t):
    if isinstance(C, str):
        if C != SELF_CONSISTENT:
            raise ValueError(f"unknown C source {C!r}")
        return op.first_moment(f) / op.mass(f)
    if callable(C):
        return float(C(t))
    return float(C)


def evolve_pdf(f0: GridFunction, alpha, C, cd, t0, t1, dt, method="implicit",
               mass_tol_step=1e-10, callback=None):
    """Advance a density on its grid from ``t0`` to ``t1``.

    Parameters
    ----------
    f0 : GridFunction
        Initial density with unit (trapezoid) mass on its grid.
    alpha : float
        Drift exponent.
    C : float, callable or ``"self-consistent"``
        Mean-income coefficient; the string option recomputes
        ``C(t) = int y f dy`` from the current density each step.
    cd : callable, array, trajectory or None
        Deprivation ``cd(y, t)``, static node values, or an object with
        ``at(t)`` giving node values on the same grid.
    dt : float
        Step length; the last step is shortened to land on ``t1``.
    method : {"implicit", "explicit"}
        Backward Euler (unconditionally stable, positivity preserving) or
        forward Euler subject to :meth:`FokkerPlanckOperator.explicit_bound`.
    callback : callable, optional
        Called as ``callback(t, values)`` after every step.

    Raises
    ------
    StepSizeError
        Non-positive ``dt`` or, for the explicit scheme, a step above the
        stability bound (checked before the first step).
    SchemeError
        Values below ``-1e-12`` or a per-step mass change above
        ``mass_tol_step``.
    """
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if t1 < t0:
        raise StepSizeError("t1 must not precede t0")
    op = FokkerPlanckOperator(f0.grid, alpha)
    f = np.array(f0.values, dtype=float)
    m0 = op.mass(f)
    if abs(m0 - 1.0) > 1e-6:
        raise NormalizationError("initial density is not normalised on its grid", m0)
    if np.any(f < 0):
        raise DomainError("initial density has negative values")
    n_steps = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    h = (t1 - t0) / n_steps if n_steps else 0.0
    if method == "explicit" and n_steps:
        bound = op.explicit_bound(_coefficient_C(C, op, f, t0), cd, t0)
        if h > bound:
            raise StepSizeError(f"explicit step {h} exceeds stability bound {bound}")
    t = float(t0)
    mass = m0
    for k in range(n_steps):
        C_t = _coefficient_C(C, op, f, t)
        f = op.step(f, C_t, cd, h, t, method)
        t = t0 + (k + 1) * h
        if np.min(f) < -1e-12:
            raise SchemeError(f"density went negative ({np.min(f)}) at t={t}")
        new_mass = op.mass(f)
        if abs(new_mass - mass) > mass_tol_step:
            raise SchemeError(f"mass changed by {new_mass - mass} in one step at t={t}")
        mass = new_mass
        if callback is not None:
            callback(t, f)
    return GridFunction(f0.grid, np.maximum(f, 0.0), t1, dict(f0.meta))


# --------------------------------------------------------------------------
# eigenmodes


@dataclass(frozen=True)
class EigenMode:
    n: int
    omega_n: float
    gamma1_minus: float
    gamma1_plus: float
    gamma2_minus: float
    gamma2_plus: float
    B1: float = 1.0
    B2: float = 0.0

    def profile(self, y, C_t):
        """``g_n(y)`` for mean income ``C_t`` (``|C_t/y| <= 75`` enforced)."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("eigenmode profile needs y > 0")
        z = C_t / y
        if np.any(np.abs(z) > MAX_KUMMER_ARGUMENT):
            raise DomainError(f"|C/y| exceeds {MAX_KUMMER_ARGUMENT}; raise the grid floor")
        out = np.zeros_like(z)
        if self.B1:
            out = out + self.B1 * z ** self.gamma1_minus * kummer_1f1(
                self.gamma1_minus, self.gamma2_minus, -z)
        if self.B2:
            out = out + self.B2 * z ** self.gamma1_plus * kummer_1f1(
                self.gamma1_plus, self.gamma2_plus, -z)
        return out


def eigen_exponents(n, alpha):
    """``(omega_n, g1-, g1+, g2-, g2+)`` for mode ``n``."""
    if n < 0 or int(n) != n:
        raise DomainError("mode index must be a non-negative integer")
    check_positive("alpha", alpha)
    omega = 2.0 * math.pi * n
    root = math.sqrt((1.0 + alpha) ** 2 + 4.0 * omega)
    return (omega, (3.0 + alpha - root) / 2.0, (3.0 + alpha + root) / 2.0,
            1.0 - root, 1.0 + root)


def eigenmode(n, alpha, C_t=None, grid=None, B1=1.0, B2=0.0):
    """Build mode ``n``; with ``C_t`` and ``grid`` also return its profile.

    ``B1`` and ``B2`` depend on initial conditions and are caller supplied.
    """
    omega, g1m, g1p, g2m, g2p = eigen_exponents(n, alpha)
    mode = EigenMode(int(n), omega, g1m, g1p, g2m, g2p, float(B1), float(B2))
    if C_t is None or grid is None:
        return mode
    grid = check_increasing("grid", grid)
    return mode, GridFunction(grid, mode.profile(grid, C_t))


def mode_sum(modes, y, C_t, t):
    """``sum_n exp(-omega_n t) g_n(y)`` over the supplied modes."""
    y = np.asarray(y, dtype=float)
    return sum(math.exp(-m.omega_n * t) * m.profile(y, C_t) for m in modes)


def steady_mode_weight(f: GridFunction, p: SteadyStateParams) -> float:
    """Least-squares weight of the steady profile in ``f`` (the n=0 projection)."""
    s = steady_pdf(f.grid, p)
    return float(trapezoid(f.values * s, f.grid) / trapezoid(s * s, f.grid))


class SteadyCDF:
    """Tabulated steady CDF for fast evaluation at many points.

    Cumulative probabilities are integrated exactly (to quadrature
    tolerance) between ``n`` log-spaced knots and interpolated linearly.
    """

    def __init__(self, p: SteadyStateParams, n=20001, y_max=None):
        self.params = p
        y_max = 1e4 * max(p.K0, p.C0) if y_max is None else y_max
        self.knots = np.geomspace(p.y0, y_max, n)
        self.values = steady_cdf(self.knots, p)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.interp(y, self.knots, self.values, left=0.0)
        tail = y > self.knots[-1]
        if np.any(tail):
            out = np.where(tail, 1.0, out)
        return out
