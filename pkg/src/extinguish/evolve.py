"""Backward Euler time stepping for

    i u_t + Lap u + V u + a g_eps^m(u) = f,   u = 0 on the boundary,

written as u_t + A u = -i f with A u = -i (Lap u + V u + a g(u)).  Each step
is one resolvent solve with lam = tau and F = u - i tau f(t_{n+1}).
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import Grid, Potential, laplacian, lp_power, norm
from .errors import DomainError, NonConvergence
from .resolvent import StationaryProblem, attainable_tol, solve, solve_with_continuation
from .satkernel import SatParams

EXTINCTION_TOL = 1e-24
CSV_FIELDS = ("t", "mass", "dissipation_power", "forcing_work", "identity_residual", "h1_seminorm", "laplacian_l2")


class ForcingKind(enum.Enum):
    Zero = "Zero"
    CutoffAtT0 = "CutoffAtT0"
    BoundedTail = "BoundedTail"
    SynchronizedProfile = "SynchronizedProfile"


@dataclass
class ForcingSpec:
    """Source term f(t, x).

    Zero
        f = 0.
    CutoffAtT0
        f = amplitude * temporal(t) * profile for t <= T0, exactly 0 after.
    BoundedTail
        amplitude * temporal(t) * profile up to T0, then m_inf * profile / max|profile|.
    SynchronizedProfile
        sqrt(eps_star) (T0 - t)_+^((2 delta - 1) / (2 (1 - delta))) * profile / ||profile||,
        so that ||f(t)||^2 = eps_star (T0 - t)_+^((2 delta - 1) / (1 - delta)).
    """

    kind: ForcingKind = ForcingKind.Zero
    T0: float = 0.0
    profile: np.ndarray | None = None
    amplitude: complex = 1.0
    m_inf: float = 0.0
    delta: float | None = None
    eps_star: float | None = None
    temporal: Callable[[float], complex] | None = None
    # smallness conditions the caller must check on u0 (SynchronizedProfile)
    constraints: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = ForcingKind(self.kind)
        if self.T0 < 0.0:
            raise DomainError("T0 must be >= 0")
        if self.kind is not ForcingKind.Zero and self.profile is None:
            raise DomainError(f"{self.kind.value} forcing needs a spatial profile")
        if self.profile is not None:
            self.profile = np.asarray(self.profile, dtype=complex)
            if not np.all(np.isfinite(self.profile)):
                raise DomainError("forcing profile is not finite")
        if self.kind is ForcingKind.BoundedTail:
            if self.m_inf < 0.0:
                raise DomainError("m_inf must be >= 0")
            if not np.any(self.profile):
                raise DomainError("BoundedTail profile must not vanish identically")
        if self.kind is ForcingKind.SynchronizedProfile:
            if self.delta is None or self.eps_star is None:
                raise DomainError("SynchronizedProfile needs delta and eps_star")
            if not (0.5 < self.delta < 1.0):
                raise DomainError("delta must be in (1/2, 1)")
            if self.T0 <= 0.0:
                raise DomainError("SynchronizedProfile needs T0 > 0")

    @classmethod
    def zero(cls) -> "ForcingSpec":
        return cls()

    def envelope(self, t: float) -> float:
        """eps_star (T0 - t)_+^((2 delta - 1)/(1 - delta)) for the synchronized kind."""
        d = self.delta
        return self.eps_star * max(self.T0 - t, 0.0) ** ((2.0 * d - 1.0) / (1.0 - d))

    def at(self, t: float, grid: Grid) -> np.ndarray:
        k = self.kind
        if k is ForcingKind.Zero:
            return grid.zeros()
        if self.profile.shape != grid.shape:
            raise DomainError(f"profile shape {self.profile.shape} does not match grid {grid.shape}")
        if k is ForcingKind.SynchronizedProfile:
            if t >= self.T0:
                return grid.zeros()
            scale = math.sqrt(self.envelope(t)) / norm(self.profile, grid)
            return scale * self.profile
        if t > self.T0:
            if k is ForcingKind.CutoffAtT0:
                return grid.zeros()
            return (self.m_inf / float(np.abs(self.profile).max())) * self.profile
        amp = self.amplitude * (1.0 if self.temporal is None else self.temporal(t))
        return amp * self.profile

    def tail_sup(self) -> float:
        """sup over t > T0 and x of |f|."""
        if self.kind is ForcingKind.BoundedTail:
            return float(self.m_inf)
        return 0.0


@dataclass(frozen=True)
class OperatorData:
    grid: Grid
    a: complex
    m: float
    V: Potential = field(default_factory=Potential)


@dataclass
class Schedule:
    tau: float
    t_end: float
    eps: float | None = None
    eps_continuation: Sequence[float] | None = None
    stride: int = 1
    extinction_tol: float = EXTINCTION_TOL
    rtol: float = 1e-12

    def __post_init__(self):
        if not self.tau > 0.0:
            raise DomainError("tau must be positive")
        if self.t_end < 0.0:
            raise DomainError("t_end must be >= 0")
        if self.stride < 1:
            raise DomainError("stride must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.tau))

    def epsilon(self, m: float) -> float:
        if self.eps is not None:
            return float(self.eps)
        if self.eps_continuation:
            return float(self.eps_continuation[-1])
        if m == 1.0:
            return 0.0
        return min(1e-12, self.tau**2)


@dataclass
class MassTrace:
    t: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    dissipation_power: list = field(default_factory=list)
    forcing_work: list = field(default_factory=list)
    identity_residual: list = field(default_factory=list)
    h1_seminorm: list = field(default_factory=list)
    laplacian_l2: list = field(default_factory=list)
    extinction_time: float | None = None
    extinction_tol: float = EXTINCTION_TOL
    # bookkeeping over every step (rows may be strided)
    tau: float = math.nan
    a: complex = 0j
    m: float = 1.0
    max_identity_residual: float = 0.0
    max_l2plus_defect: float = -math.inf
    max_mass_increase: float = -math.inf

    def __len__(self):
        return len(self.t)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def append(self, t, mass, diss, work, ires, h1, lap):
        self.t.append(float(t))
        self.mass.append(float(mass))
        self.dissipation_power.append(float(diss))
        self.forcing_work.append(float(work))
        self.identity_residual.append(float(ires))
        self.h1_seminorm.append(float(h1))
        self.laplacian_l2.append(float(lap))

    def to_csv(self, path_or_buf=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        cols = [getattr(self, k) for k in CSV_FIELDS]
        for row in zip(*cols):
            w.writerow([format(x, ".17g") for x in row])
        text = buf.getvalue()
        if path_or_buf is not None:
            if hasattr(path_or_buf, "write"):
                path_or_buf.write(text)
            else:
                with open(path_or_buf, "w", newline="") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, extinction_tol: float = EXTINCTION_TOL) -> "MassTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_FIELDS:
            raise DomainError("unexpected trace header")
        tr = cls(extinction_tol=extinction_tol)
        for r in rows[1:]:
            tr.append(*map(float, r))
        tr.extinction_time = detect_extinction(tr.t, tr.mass, extinction_tol)
        return tr


def detect_extinction(t, mass, tol) -> float | None:
    """First time after which every recorded mass stays below ``tol``."""
    mass = np.asarray(mass, dtype=float)
    above = np.nonzero(mass >= tol)[0]
    if above.size == 0:
        return float(t[0]) if len(t) else None
    last = above[-1]
    if last == len(mass) - 1:
        return None
    return float(t[last + 1])


def _row_stats(u, f, grid, m):
    mass = norm(u, grid) ** 2
    diss = lp_power(u, grid, m + 1.0)
    work = float(np.imag(np.vdot(u, f))) * grid.cell_volume
    h1 = norm(u, grid, "H1_semi")
    lap = norm(laplacian(u, grid), grid)
    return mass, diss, work, h1, lap


def step(u, tau, f_next, op: OperatorData, sat: SatParams | None = None, rtol: float = 1e-12,
         cache: dict | None = None, eps_continuation=None):
    """One backward Euler step: solve (I + tau A) u+ = u - i tau f_next."""
    if not tau > 0.0:
        raise DomainError("tau must be positive")
    if sat is None:
        sat = SatParams(op.m, 0.0 if op.m == 1.0 else min(1e-12, tau**2))
    u = np.asarray(u, dtype=complex)
    F = u - 1j * tau * np.asarray(f_next, dtype=complex)
    if not np.any(F):
        return np.zeros_like(F)
    p = StationaryProblem(op.grid, op.V, op.a, sat, tau, F)
    tol = attainable_tol(p, rtol)
    if eps_continuation:
        out, _ = solve_with_continuation(p, eps_continuation, tol, cache=None)
        return out
    out, _ = solve(p, tol, cache=cache)
    return out


def run(u0, schedule: Schedule, forcing: ForcingSpec, op: OperatorData):
    """March from t = 0 to t_end; returns (MassTrace, final field)."""
    grid = op.grid
    u = np.array(u0, dtype=complex)
    if u.shape != grid.shape:
        raise DomainError("u0 does not match the grid")
    tau = schedule.tau
    sat = SatParams(op.m, schedule.epsilon(op.m))
    tr = MassTrace(extinction_tol=schedule.extinction_tol, tau=tau, a=complex(op.a), m=op.m)
    cache: dict = {}
    ima = complex(op.a).imag

    f = forcing.at(0.0, grid)
    mass, diss, work, h1, lap = _row_stats(u, f, grid, op.m)
    tr.append(0.0, mass, diss, work, 0.0, h1, lap)
    y0 = mass
    acc_diss = acc_work = 0.0
    last_above = None if mass < schedule.extinction_tol else 0.0
    times = [0.0]
    nsteps = schedule.steps
    for n in range(1, nsteps + 1):
        t = n * tau
        f = forcing.at(t, grid)
        try:
            u = step(u, tau, f, op, sat, schedule.rtol, cache, schedule.eps_continuation)
        except NonConvergence as exc:
            raise NonConvergence(exc.residual, exc.iterations, stage=exc.stage, time=t) from exc
        prev = mass
        mass, diss, work, h1, lap = _row_stats(u, f, grid, op.m)
        ires = abs((mass - prev) / (2.0 * tau) + ima * diss - work)
        acc_diss += tau * diss
        acc_work += tau * work
        tr.max_identity_residual = max(tr.max_identity_residual, ires)
        tr.max_l2plus_defect = max(tr.max_l2plus_defect, 0.5 * mass + ima * acc_diss - 0.5 * y0 - acc_work)
        tr.max_mass_increase = max(tr.max_mass_increase, mass - prev)
        if mass >= schedule.extinction_tol:
            last_above = t
        if n % schedule.stride == 0 or n == nsteps:
            tr.append(t, mass, diss, work, ires, h1, lap)
    if last_above is None:
        tr.extinction_time = 0.0
    elif nsteps == 0 or last_above >= nsteps * tau:
        tr.extinction_time = None
    else:
        tr.extinction_time = last_above + tau
    return tr, u


def contraction_check(u0, v0, forcing_f: ForcingSpec, forcing_g: ForcingSpec, schedule: Schedule,
                      op: OperatorData) -> float:
    """max_n ||u_n - v_n|| - ||u_{n-1} - v_{n-1}|| - tau ||f_n - g_n|| over both trajectories."""
    grid = op.grid
    tau = schedule.tau
    sat = SatParams(op.m, schedule.epsilon(op.m))
    u = np.array(u0, dtype=complex)
    v = np.array(v0, dtype=complex)
    cu: dict = {}
    cv: dict = {}
    d_prev = norm(u - v, grid)
    worst = -math.inf
    for n in range(1, schedule.steps + 1):
        t = n * tau
        f = forcing_f.at(t, grid)
        g = forcing_g.at(t, grid)
        u = step(u, tau, f, op, sat, schedule.rtol, cu)
        v = step(v, tau, g, op, sat, schedule.rtol, cv)
        d = norm(u - v, grid)
        worst = max(worst, d - d_prev - tau * norm(f - g, grid))
        d_prev = d
    return worst if math.isfinite(worst) else 0.0
