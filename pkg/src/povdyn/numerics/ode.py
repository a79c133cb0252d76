"""Classical fourth-order Runge-Kutta stepping."""
from __future__ import annotations

import numpy as np

from ..exceptions import NumericalBlowupError, StepSizeError

_STAGES = ("k1", "k2", "k3", "k4")


def rk4_step(rhs, state, t, dt):
    """Advance ``ds/dt = rhs(t, s)`` by one RK4 step of size ``dt``.

    Raises :class:`NumericalBlowupError` naming the first stage whose
    evaluation is not finite.
    """
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    s = np.asarray(state, dtype=float)

    def stage(name, tt, ss):
        k = np.asarray(rhs(tt, ss), dtype=float)
        if not np.all(np.isfinite(k)):
            raise NumericalBlowupError(f"non-finite RK4 stage {name} at t={tt}")
        return k

    k1 = stage(_STAGES[0], t, s)
    k2 = stage(_STAGES[1], t + 0.5 * dt, s + 0.5 * dt * k1)
    k3 = stage(_STAGES[2], t + 0.5 * dt, s + 0.5 * dt * k2)
    k4 = stage(_STAGES[3], t + dt, s + dt * k3)
    return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(rhs, state, t0, t1, dt):
    """Integrate from ``t0`` to ``t1`` with steps no longer than ``dt``.

    The final step is shortened so the end time is hit exactly.
    """
    if t1 < t0:
        raise StepSizeError("t1 must not precede t0")
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-12))) if t1 > t0 else 0
    s = np.asarray(state, dtype=float)
    if n == 0:
        return s
    h = (t1 - t0) / n
    for i in range(n):
        s = rk4_step(rhs, s, t0 + i * h, h)
    return s
