"""Damped Gauss-Newton (Levenberg-Marquardt) least squares."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError, IllConditionedFitError

_LAMBDA_MAX = 1e16


@dataclass(frozen=True)
class FitReport:
    """Outcome of a least-squares fit."""

    params: tuple
    residual_sum_sq: float
    iterations: int
    converged: bool
    clamped: bool = False
    message: str = ""
    max_iter: int = field(default=200, repr=False)

    def __post_init__(self):
        if self.residual_sum_sq < 0:
            raise ValueError("residual_sum_sq must be non-negative")


def forward_difference_jacobian(model, x, p, f0=None):
    """Forward-difference Jacobian with step ``1e-6 * max(1, |p_j|)``."""
    p = np.asarray(p, dtype=float)
    f0 = model(x, p) if f0 is None else f0
    jac = np.empty((len(f0), len(p)))
    for j in range(len(p)):
        h = 1e-6 * max(1.0, abs(p[j]))
        pj = p.copy()
        pj[j] += h
        jac[:, j] = (model(x, pj) - f0) / h
    return jac


def _clamp(p, bounds):
    if bounds is None:
        return p, False
    lo, hi = bounds
    clipped = np.clip(p, lo, hi)
    return clipped, bool(np.any(clipped != p))


def _normalise_bounds(bounds, n):
    if bounds is None:
        return None
    lo = np.array([-np.inf if b is None or b[0] is None else b[0] for b in bounds], float)
    hi = np.array([np.inf if b is None or b[1] is None else b[1] for b in bounds], float)
    if lo.shape != (n,) or np.any(lo > hi):
        raise DomainError("bounds must give one (lower, upper) pair per parameter")
    return lo, hi


def nlls_fit(model, x, y, init, bounds=None, jac=None, weights=None, max_iter=200,
             damping_factor=10.0, xtol=1e-10, ftol=1e-12):
    """Minimise ``sum(w * (y - model(x, p))**2)`` by Levenberg-Marquardt.

    Parameters
    ----------
    model : callable
        ``model(x, p) -> ndarray`` with the same length as ``y``.
    x, y : array_like
        Observations.
    init : sequence of float
        Starting parameters, inside ``bounds`` when bounds are given.
    bounds : sequence of (lower, upper), optional
        Per-parameter box. Trial points leaving the box are clamped onto it
        and the report's ``clamped`` flag is raised.
    jac : callable, optional
        Analytic Jacobian ``jac(x, p) -> (m, n)``; forward differences are
        used otherwise.
    weights : array_like, optional
        Non-negative observation weights.

    Returns
    -------
    FitReport
        Converged when the relative step falls below ``xtol`` or the relative
        decrease of the residual sum falls below ``ftol``.

    Raises
    ------
    IllConditionedFitError
        Damping grew past ``1e16`` without a productive step while the
        Jacobian is rank deficient.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(init, dtype=float).copy()
    n = p.size
    if y.ndim != 1 or len(y) != len(x):
        raise DomainError("x and y must have matching length")
    if len(y) < max(3, n):
        raise DomainError(f"need at least {max(3, n)} data points, got {len(y)}")
    box = _normalise_bounds(bounds, n)
    if box is not None and (np.any(p < box[0]) or np.any(p > box[1])):
        raise DomainError("initial parameters lie outside the bounds")
    sw = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, float))

    def residual(params):
        return sw * (y - model(x, params))

    def jacobian(params):
        if jac is not None:
            return sw[:, None] * np.asarray(jac(x, params), dtype=float)
        return sw[:, None] * forward_difference_jacobian(model, x, params)

    r = residual(p)
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise DomainError("model is not finite at the initial parameters")
    lam = 1e-3
    clamped_any = False
    converged = False
    message = "iteration budget exhausted"
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged, message = True, "exact fit"
            it -= 1
            break
        J = jacobian(p)
        scale = np.sum(J * J, axis=0)
        floor = max(scale.max(), 1.0) * 1e-30
        scale = np.maximum(scale, floor)
        while True:
            aug = np.vstack([J, np.diag(np.sqrt(lam * scale))])
            rhs = np.concatenate([r, np.zeros(n)])
            step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
            trial, was_clamped = _clamp(p + step, box)
            r_trial = residual(trial)
            cost_trial = float(r_trial @ r_trial)
            if np.isfinite(cost_trial) and cost_trial < cost:
                break
            lam *= damping_factor
            if lam > _LAMBDA_MAX:
                if np.linalg.matrix_rank(J) < n:
                    raise IllConditionedFitError(
                        "singular Jacobian and no productive damped step")
                return FitReport(tuple(float(v) for v in p), cost, it, True, clamped_any,
                                 "no further decrease possible", max_iter)
        clamped_any |= was_clamped
        rel_step = np.max(np.abs(trial - p) / np.maximum(np.abs(p), 1e-300))
        rel_drop = (cost - cost_trial) / cost
        p, r, cost = trial, r_trial, cost_trial
        lam = max(lam / damping_factor, 1e-12)
        if rel_step < xtol:
            converged, message = True, "relative step below tolerance"
            break
        if rel_drop < ftol:
            converged, message = True, "relative residual decrease below tolerance"
            break
    return FitReport(tuple(float(v) for v in p), cost, it, converged, clamped_any,
                     message, max_iter)
