"""Agent-level Langevin income simulation.

Each agent follows the Ito equation

    dy = [beta*Ybar(t) - alpha*(y - CD(y))] dt + y sqrt(D0) dW

with Engel-form deprivation ``CD(y) = V K/(K+y)`` and a subsistence floor.
Its Fokker-Planck equation is the income density equation of
:mod:`povdyn.fpdist` after rescaling time by ``D0/2``; :func:`matched_langevin`
builds the parameters that reproduce a given steady state.

Random numbers come from counter-based Philox streams. Agents are split in
fixed blocks; block ``b`` at step ``s`` draws from a generator keyed by
``SeedSequence([master_seed, b])`` with counter ``s``, so results do not
depend on how blocks are scheduled across threads.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_positive
from .engel import EngelParams
from .exceptions import DomainError, SimulationError, StepSizeError
from .fpdist import SteadyStateParams, mean_income

REFLECT = "reflect"
RESPAWN = "absorb-and-respawn"
FLOOR_POLICIES = (REFLECT, RESPAWN)
BLOCK_SIZE = 65536
MIN_DISTRIBUTIONAL_N = 1000


@dataclass(frozen=True)
class LangevinParams:
    alpha: float
    beta: float
    ybar: object
    D0: float
    engel: EngelParams | None
    y_floor: float
    floor_policy: str = REFLECT

    def __post_init__(self):
        check_positive("alpha", self.alpha)
        check_positive("beta", self.beta)
        check_positive("y_floor", self.y_floor)
        if not (np.isfinite(self.D0) and self.D0 >= 0):
            raise DomainError("D0 must be finite and >= 0")
        if self.floor_policy not in FLOOR_POLICIES:
            raise ValueError(f"unknown floor policy {self.floor_policy!r}")

    def ybar_at(self, t):
        return float(self.ybar(t)) if callable(self.ybar) else float(self.ybar)

    def deprivation(self, y):
        if self.engel is None:
            return 0.0
        return self.engel.V * self.engel.K / (self.engel.K + y)


def matched_langevin(s: SteadyStateParams, D0=2.0, floor_policy=REFLECT) -> LangevinParams:
    """Langevin parameters whose stationary density is ``steady_pdf(., s)``.

    With time measured so that one density time unit equals ``2/D0``
    agent rounds: ``alpha = s.alpha D0/2``, ``beta Ybar = s.C0 D0/2`` (beta
    fixed at 1) and ``V = s.V0/s.alpha`` so that ``alpha*CD`` equals the
    density-equation deprivation.
    """
    check_positive("D0", D0)
    a = s.alpha * D0 / 2.0
    return LangevinParams(alpha=a, beta=1.0, ybar=s.C0 * D0 / 2.0, D0=D0,
                          engel=EngelParams(s.V0 / s.alpha, s.K0), y_floor=s.y0,
                          floor_policy=floor_policy)


def implied_steady_state(p: LangevinParams, t=0.0) -> SteadyStateParams:
    """Inverse of :func:`matched_langevin` (requires ``D0 > 0`` and Engel CD)."""
    if p.D0 <= 0 or p.engel is None:
        raise DomainError("implied steady state needs D0 > 0 and Engel deprivation")
    k = 2.0 / p.D0
    return SteadyStateParams(alpha=p.alpha * k, C0=p.beta * p.ybar_at(t) * k,
                             V0=p.alpha * p.engel.V * k, K0=p.engel.K, y0=p.y_floor)


@dataclass(frozen=True)
class Ensemble:
    """Agent incomes at round ``t`` after ``step_index`` steps."""

    incomes: np.ndarray
    t: float
    master_seed: int
    step_index: int = 0
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        y = np.asarray(self.incomes, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise DomainError("an ensemble needs at least one agent")
        y.setflags(write=False)
        object.__setattr__(self, "incomes", y)

    @property
    def N(self):
        return self.incomes.size

    @property
    def substream_map(self):
        return (f"agent i uses block i // {self.block_size}; block b at step s draws "
                f"from Philox(key=SeedSequence([{self.master_seed}, b]), counter=s)")


def _block_key(master_seed, block):
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(block)])
    return ss.generate_state(2, dtype=np.uint64)


def block_normals(master_seed, block, step, size):
    """Standard normals for one block at one step (pure function of its args)."""
    bitgen = np.random.Philox(key=_block_key(master_seed, block),
                              counter=np.array([0, step, 0, 0], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal(size)


def _update_block(y, p: LangevinParams, ybar, dt, xi, mean_y):
    drift = p.beta * ybar - p.alpha * (y - p.deprivation(y))
    out = y + drift * dt + y * math.sqrt(p.D0 * dt) * xi
    below = out < p.y_floor
    if np.any(below):
        if p.floor_policy == REFLECT:
            out[below] = np.maximum(2.0 * p.y_floor - out[below], p.y_floor)
        else:
            out[below] = max(mean_y, p.y_floor)
    return out


def step(e: Ensemble, p: LangevinParams, dt, workers=1) -> Ensemble:
    """One Euler-Maruyama (Ito) step followed by the floor policy."""
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if dt > 0.1 / p.alpha:
        raise StepSizeError(f"dt={dt} exceeds the accuracy guard 0.1/alpha={0.1 / p.alpha}")
    y = e.incomes
    ybar = p.ybar_at(e.t)
    mean_y = float(np.mean(y))
    bs = e.block_size
    n_blocks = -(-y.size // bs)

    def run(b):
        lo, hi = b * bs, min((b + 1) * bs, y.size)
        xi = block_normals(e.master_seed, b, e.step_index, hi - lo) if p.D0 > 0 else 0.0
        return _update_block(y[lo:hi], p, ybar, dt, xi, mean_y)

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    out = np.concatenate(parts)
    bad = ~np.isfinite(out)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SimulationError(f"non-finite income for agent {i} at step {e.step_index}")
    return Ensemble(out, e.t + dt, e.master_seed, e.step_index + 1, bs)


@dataclass
class SimulationResult:
    snapshots: list = field(default_factory=list)
    params: LangevinParams | None = None
    dt: float = 0.0

    @property
    def final(self) -> Ensemble:
        return self.snapshots[-1]

    def to_csv(self, path, header=None):
        """Long format (t, agent_id, income)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "agent_id", "income"])
            for snap in self.snapshots:
                for i, y in enumerate(snap.incomes):
                    w.writerow([repr(float(snap.t)), i, repr(float(y))])

    def quantiles_to_csv(self, path, levels=None, header=None):
        """Compact summary (t, q01 ... q99)."""
        levels = np.arange(1, 100) if levels is None else np.asarray(levels)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for k, v in (header or {}).items():
                fh.write(f"# {k}: {v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"q{int(q):02d}" for q in levels])
            for snap in self.snapshots:
                qs = np.percentile(snap.incomes, levels)
                w.writerow([repr(float(snap.t))] + [repr(float(q)) for q in qs])


def initial_incomes(p: LangevinParams, N, initial="mean", t0=0.0):
    """Starting incomes: ``"mean"`` of the matched steady state, a number, or an array."""
    if isinstance(initial, str):
        if initial != "mean":
            raise ValueError(f"unknown initial distribution {initial!r}")
        return np.full(N, mean_income(implied_steady_state(p, t0)))
    arr = np.asarray(initial, dtype=float)
    if arr.ndim == 0:
        return np.full(N, float(arr))
    if arr.shape != (N,):
        raise DomainError("initial incomes must have shape (N,)")
    return arr.copy()


def simulate(p: LangevinParams, N, t0, t1, dt, snapshot_every, master_seed,
             initial="mean", workers=1) -> SimulationResult:
    """Run ``N`` agents from ``t0`` to ``t1`` keeping snapshots.

    Snapshots are taken at ``t0`` and every ``snapshot_every`` rounds
    (rounded to whole steps) and at ``t1``. Distributional outputs below
    ``N = 1000`` are flagged with a warning.
    """
    N = int(N)
    if N < 1:
        raise DomainError("N must be >= 1")
    if N < MIN_DISTRIBUTIONAL_N:
        warnings.warn(f"N={N} is below the distributional accuracy floor "
                      f"{MIN_DISTRIBUTIONAL_N}", stacklevel=2)
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    n = int(math.ceil((t1 - t0) / dt - 1e-9)) if t1 > t0 else 0
    h = (t1 - t0) / n if n else dt
    every = max(1, int(round(snapshot_every / h)))
    y = np.maximum(initial_incomes(p, N, initial, t0), p.y_floor)
    e = Ensemble(y, t0, master_seed)
    out = SimulationResult([e], p, h)
    for k in range(n):
        e = step(e, p, h, workers)
        if k == n - 1:
            e = replace(e, t=float(t1))
        if (k + 1) % every == 0 or k == n - 1:
            out.snapshots.append(e)
    return out


class EmpiricalCDF:
    """Right-continuous empirical CDF of a sample."""

    def __init__(self, sample):
        x = np.sort(np.asarray(sample, dtype=float).ravel())
        if x.size < 1:
            raise DomainError("empirical CDF needs at least one point")
        self.x = x

    @property
    def n(self):
        return self.x.size

    def __call__(self, y):
        out = np.searchsorted(self.x, y, side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out


def empirical_cdf(e) -> EmpiricalCDF:
    return EmpiricalCDF(e.incomes if isinstance(e, Ensemble) else e)


def ks_distance(empirical, analytic_cdf) -> float:
    """Kolmogorov-Smirnov distance, checked on both sides of every jump."""
    ecdf = empirical if isinstance(empirical, EmpiricalCDF) else empirical_cdf(empirical)
    x = ecdf.x
    F = np.asarray(analytic_cdf(x), dtype=float)
    # left limits of the reference matter only where it jumps too
    F_left = np.asarray(analytic_cdf(np.nextafter(x, -np.inf)), dtype=float)
    n = x.size
    hi = np.searchsorted(x, x, side="right") / n
    lo = np.searchsorted(x, x, side="left") / n
    return float(max(np.max(np.abs(hi - F)), np.max(np.abs(lo - F_left))))
