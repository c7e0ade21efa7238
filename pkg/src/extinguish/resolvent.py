"""Stationary monotone problem

    u + lam * (-i Lap u - i V u - i a g(u)) = F,   g = g_eps^m,

solved by Newton on the real (Re u, Im u) split with a backtracking line
search and a damped Picard fallback.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coeffset import Classification, classify_coefficient
from .domain import Grid, Potential, laplacian, norm
from .errors import DomainError, NonConvergence
from .satkernel import SatParams, saturate

JACOBIAN_FLOOR = 1e-30
MAX_NEWTON = 200
MAX_PICARD = 2000
# the inverse map |w|^(1/m - 1) w loses all precision for larger powers
INVERSE_MAX_POWER = 100.0


class Strategy(enum.Enum):
    Newton = "Newton"
    DampedPicard = "DampedPicard"


@dataclass
class StationaryProblem:
    grid: Grid
    V: Potential
    a: complex
    sat: SatParams
    lam: float
    F: np.ndarray

    def __post_init__(self):
        self.a = complex(self.a)
        self.F = np.asarray(self.F, dtype=complex)
        if self.F.shape != self.grid.shape:
            raise DomainError(f"F has shape {self.F.shape}, grid expects {self.grid.shape}")
        if classify_coefficient(self.a, self.sat.m) is Classification.OutsideC:
            raise DomainError(f"a={self.a} lies outside C({self.sat.m})")
        if self.sat.m == 0.0 and self.sat.eps <= 0.0:
            raise DomainError("m = 0 needs eps > 0 for a single-valued kernel")
        if not self.lam > 0.0:
            raise DomainError("lambda must be positive")

    def with_rhs(self, F) -> "StationaryProblem":
        return StationaryProblem(self.grid, self.V, self.a, self.sat, self.lam, F)

    def with_eps(self, eps: float) -> "StationaryProblem":
        return StationaryProblem(self.grid, self.V, self.a, SatParams(self.sat.m, eps), self.lam, self.F)


@dataclass
class SolveStats:
    iterations: int
    final_residual: float
    strategy: Strategy
    converged: bool
    newton_iterations: int = 0
    picard_iterations: int = 0


def operator(u: np.ndarray, p: StationaryProblem) -> np.ndarray:
    """A u = -i (Lap u + V u + a g(u))."""
    Lu = laplacian(u, p.grid) + p.V.values(p.grid) * u
    return -1j * (Lu + p.a * saturate(u, p.sat))


def residual_field(u: np.ndarray, p: StationaryProblem) -> np.ndarray:
    return u + p.lam * operator(u, p) - p.F


def residual(u: np.ndarray, p: StationaryProblem) -> float:
    """L2 norm of u + lam A u - F."""
    u = np.asarray(u, dtype=complex)
    if u.shape != p.F.shape:
        raise DomainError(f"u has shape {u.shape}, problem expects {p.F.shape}")
    return norm(residual_field(u, p), p.grid)


def _linear_block(p: StationaryProblem):
    grid = p.grid
    L = grid.laplacian_matrix + sp.diags(p.V.values(grid).ravel())
    n = grid.size
    eye = sp.identity(n, format="csr")
    return sp.bmat([[eye, p.lam * L], [-p.lam * L, eye]], format="csc")


def _kernel_jacobian(u: np.ndarray, p: StationaryProblem):
    """Per-node entries of lam * M_{-ia} * Dg as four flat arrays (11, 12, 21, 22)."""
    m, eps = p.sat.m, p.sat.eps
    x = u.real.ravel()
    y = u.imag.ravel()
    # nodes with |u|^2 + eps under the floor get the Jacobian of the floor value
    s = np.maximum(x * x + y * y + eps, JACOBIAN_FLOOR)
    if m == 1.0:
        w = np.ones_like(s)
        c = np.zeros_like(s)
    else:
        w = s ** (-(1.0 - m) / 2.0)
        c = -(1.0 - m) * s ** (-(3.0 - m) / 2.0)
    dxx = w + c * x * x
    dxy = c * x * y
    dyy = w + c * y * y
    # -i a = pa + i qa as the real 2x2 block [[pa, -qa], [qa, pa]]
    pa, qa = p.a.imag, -p.a.real
    lam = p.lam
    return (
        lam * (pa * dxx - qa * dxy),
        lam * (pa * dxy - qa * dyy),
        lam * (qa * dxx + pa * dxy),
        lam * (qa * dxy + pa * dyy),
    )


def jacobian(u: np.ndarray, p: StationaryProblem, base=None):
    """Sparse Jacobian of the residual map in the (Re u, Im u) split."""
    if base is None:
        base = _linear_block(p)
    j11, j12, j21, j22 = _kernel_jacobian(u, p)
    D = sp.bmat([[sp.diags(j11), sp.diags(j12)], [sp.diags(j21), sp.diags(j22)]], format="csc")
    return (base + D).tocsc()


def _split(z):
    z = z.ravel()
    return np.concatenate([z.real, z.imag])


def _join(x, shape):
    n = x.size // 2
    return (x[:n] + 1j * x[n:]).reshape(shape)


def _lipschitz(p: StationaryProblem) -> float:
    """Upper bound for the Lipschitz constant of the residual map."""
    h = p.grid.spacing
    lap = 4.0 * p.grid.dim / (h * h)
    v = float(np.abs(p.V.values(p.grid)).max())
    m, eps = p.sat.m, p.sat.eps
    if m == 1.0:
        lg = 1.0
    else:
        lg = max(eps, JACOBIAN_FLOOR) ** (-(1.0 - m) / 2.0)
    return 1.0 + p.lam * (lap + v + abs(p.a) * lg)


class _Pattern:
    """CSC pattern of base + (four diagonal blocks); refilled in place per solve."""

    def __init__(self, base):
        base = base.tocoo()
        n2 = base.shape[0]
        n = n2 // 2
        i = np.arange(n)
        dr = np.concatenate([i, i, i + n, i + n])
        dc = np.concatenate([i, i + n, i, i + n])
        bkey = base.col.astype(np.int64) * n2 + base.row
        dkey = dc.astype(np.int64) * n2 + dr
        keys = np.unique(np.concatenate([bkey, dkey]))
        self.shape = base.shape
        self.indices = (keys % n2).astype(np.int32)
        self.indptr = np.searchsorted(keys // n2, np.arange(n2 + 1)).astype(np.int32)
        self.base_data = np.zeros(keys.size)
        np.add.at(self.base_data, np.searchsorted(keys, bkey), base.data)
        self.slots = np.searchsorted(keys, dkey)

    def fill(self, blocks):
        data = self.base_data.copy()
        data[self.slots] += np.concatenate(blocks)
        return sp.csc_matrix((data, self.indices, self.indptr), shape=self.shape)


class _Linear:
    """Newton linear solves: sparse LU (default) or matrix-free GMRES.

    ``blocks`` are the four per-node arrays added to the linear block
    [[I, lam L], [-lam L, I]].
    """

    def __init__(self, p: StationaryProblem, method: str, cache: dict | None):
        if method not in ("direct", "gmres"):
            raise DomainError(f"unknown linear solver {method!r}")
        self.p = p
        self.method = method
        self.cache = cache if cache is not None else {}
        self.constant = p.sat.m == 1.0

    def solve(self, blocks, rhs, outer):
        p = self.p
        j11, j12, j21, j22 = blocks
        if self.method == "gmres":
            n = p.grid.size
            shape = p.grid.shape
            vals = p.V.values(p.grid).ravel()

            def mv(x):
                xr, xi = x[:n], x[n:]
                Lr = laplacian(xr.reshape(shape), p.grid).ravel() + vals * xr
                Li = laplacian(xi.reshape(shape), p.grid).ravel() + vals * xi
                return np.concatenate([
                    xr + p.lam * Li + j11 * xr + j12 * xi,
                    xi - p.lam * Lr + j21 * xr + j22 * xi,
                ])

            op = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=float)
            rtol = min(0.1, 0.1 * outer / max(float(np.linalg.norm(rhs)), 1e-300))
            x, _ = spla.gmres(op, rhs, rtol=rtol, atol=0.0, restart=50, maxiter=200)
            return x
        if self.constant and "lu" in self.cache:
            return self.cache["lu"].solve(rhs)
        if "pattern" not in self.cache:
            self.cache["pattern"] = _Pattern(self.cache.setdefault("base", _linear_block(p)))
        # minimum degree on A + A^T fills far less than COLAMD for 3D stencils
        order = "MMD_AT_PLUS_A" if p.grid.dim == 3 else "COLAMD"
        lu = spla.splu(self.cache["pattern"].fill(blocks), permc_spec=order)
        if self.constant:
            self.cache["lu"] = lu
        return lu.solve(rhs)


def _crawling(history, window=50, factor=0.1):
    """True when the last ``window`` iterations gained less than ``factor``."""
    return len(history) > window and history[-1] > factor * history[-1 - window]


def _newton(u, p, tol, lin, budget):
    """Plain Newton with backtracking on the residual norm.

    Returns (u, residual, iterations, stagnated).
    """
    shape, vol = p.grid.shape, p.grid.cell_volume
    R = residual_field(u, p)
    r = norm(R, p.grid)
    it = 0
    history = [r]
    while r > tol and it < budget:
        if _crawling(history):
            return u, r, it, True
        it += 1
        dx = lin.solve(_kernel_jacobian(u, p), -_split(R), r / math.sqrt(vol))
        du = _join(dx, shape)
        step = 1.0
        for _ in range(40):
            trial = u + step * du
            Rt = residual_field(trial, p)
            rt = norm(Rt, p.grid)
            if np.isfinite(rt) and rt < (1.0 - 1e-4 * step) * r:
                break
            step *= 0.5
        else:
            return u, r, it, True
        u, R, r = trial, Rt, rt
        history.append(r)
    return u, r, it, False


def _primal_dual(u, p, tol, lin, budget, patience=30):
    """Newton on the lifted pair (u, v) with v = g(u) written as s^q v = u.

    For m = 0 the dual variable is kept in the unit disc by a step-length
    rule.  The lifted linearization does not freeze the direction of g, which
    is what defeats plain Newton on the nearly sign-like kernel.
    Returns (best u, its residual, iterations, stagnated).
    """
    shape, vol = p.grid.shape, p.grid.cell_volume
    m, eps, lam = p.sat.m, p.sat.eps, p.lam
    q = (1.0 - m) / 2.0
    c = -1j * p.a
    pa, qa = c.real, c.imag
    u = u.ravel().copy()
    v = saturate(u, p.sat) if eps > 0.0 or m > 0.0 else u / np.maximum(np.abs(u), 1e-300)
    best_u, best_r = u.copy(), math.inf
    since_best = 0
    it = 0
    while it < budget:
        Ru = residual_field(u.reshape(shape), p).ravel()
        r = norm(Ru, p.grid)
        if not np.isfinite(r):
            return best_u.reshape(shape), best_r, it, True
        if r < best_r:
            best_u, best_r, since_best = u.copy(), r, 0
        else:
            since_best += 1
        if r <= tol:
            break
        if since_best >= patience:
            return best_u.reshape(shape), best_r, it, True
        it += 1
        x, y = u.real, u.imag
        s = np.maximum(x * x + y * y + eps, JACOBIAN_FLOOR)
        sq = s**q
        E1 = Ru - lam * c * (saturate(u, p.sat) - v)
        E2 = sq * v - u
        vr, vi = v.real, v.imag
        f = 2.0 * q * s ** (q - 1.0)
        k11 = (1.0 - f * vr * x) / sq
        k12 = -f * vr * y / sq
        k21 = -f * vi * x / sq
        k22 = (1.0 - f * vi * y) / sq
        blocks = (
            lam * (pa * k11 - qa * k21),
            lam * (pa * k12 - qa * k22),
            lam * (qa * k11 + pa * k21),
            lam * (qa * k12 + pa * k22),
        )
        rhs = -E1 + lam * c * E2 / sq
        d = lin.solve(blocks, _split(rhs), r / math.sqrt(vol))
        du = d[: u.size] + 1j * d[u.size :]
        proj = x * du.real + y * du.imag
        dv = ((du.real - f * vr * proj) + 1j * (du.imag - f * vi * proj) - E2) / sq
        rho = 1.0
        if m == 0.0:
            over = np.abs(v + dv) > 1.0
            if np.any(over):
                A = np.abs(dv[over]) ** 2
                B = 2.0 * np.real(np.conj(v[over]) * dv[over])
                C = np.abs(v[over]) ** 2 - 1.0
                root = (-B + np.sqrt(np.maximum(B * B - 4.0 * A * C, 0.0))) / (2.0 * A)
                rho = min(1.0, 0.99 * float(root.min()))
        u = u + du
        v = v + rho * dv
    Ru = residual_field(u.reshape(shape), p)
    r = norm(Ru, p.grid)
    if r < best_r:
        best_u, best_r = u, r
    return best_u.reshape(shape), best_r, it, False


def _inverse_newton(u, p, tol, lin, budget):
    """Newton in w = g(u) for eps = 0, 0 < m < 1, with u = |w|^(1/m - 1) w.

    The inverse map is C^1 with zero derivative at w = 0, and the -i a w term
    keeps the Jacobian invertible there, so nodes with a nearly vanishing
    solution no longer produce the unbounded slopes of g.
    Returns (u, residual, iterations, stagnated).
    """
    shape = p.grid.shape
    k = 1.0 / p.sat.m - 1.0
    lam = p.lam
    c = -1j * p.a
    pa, qa = c.real, c.imag
    if "base" not in lin.cache:
        lin.cache["base"] = _linear_block(p)
    base = lin.cache["base"]

    def phi(w):
        return np.abs(w) ** k * w

    w = saturate(u, p.sat).ravel()
    with np.errstate(over="ignore", invalid="ignore"):
        return _inverse_loop(w, p, tol, lin, budget, phi, k, base)


def _inverse_loop(w, p, tol, lin, budget, phi, k, base):
    shape = p.grid.shape
    lam = p.lam
    c = -1j * p.a
    pa, qa = c.real, c.imag
    R = residual_field(phi(w).reshape(shape), p)
    r = norm(R, p.grid)
    it = 0
    while r > tol and it < budget:
        it += 1
        x, y = w.real, w.imag
        rr = x * x + y * y
        mod = np.sqrt(rr)
        amp = mod**k
        with np.errstate(invalid="ignore", divide="ignore"):
            ex = np.where(mod > 0, x / mod, 0.0)
            ey = np.where(mod > 0, y / mod, 0.0)
        d11 = amp * (1.0 + k * ex * ex)
        d12 = amp * k * ex * ey
        d22 = amp * (1.0 + k * ey * ey)
        D = sp.bmat([[sp.diags(d11), sp.diags(d12)], [sp.diags(d12), sp.diags(d22)]], format="csc")
        n = w.size
        Mc = sp.bmat([[sp.identity(n) * (lam * pa), sp.identity(n) * (-lam * qa)],
                      [sp.identity(n) * (lam * qa), sp.identity(n) * (lam * pa)]], format="csc")
        J = (base @ D + Mc).tocsc()
        dx = spla.splu(J).solve(-_split(R))
        dw = dx[:n] + 1j * dx[n:]
        step = 1.0
        for _ in range(40):
            trial = w + step * dw
            Rt = residual_field(phi(trial).reshape(shape), p)
            rt = norm(Rt, p.grid)
            if np.isfinite(rt) and rt < (1.0 - 1e-4 * step) * r:
                break
            step *= 0.5
        else:
            return phi(w).reshape(shape), r, it, True
        w, R, r = trial, Rt, rt
    return phi(w).reshape(shape), r, it, False


def solve(
    p: StationaryProblem,
    tol: float,
    u_init=None,
    max_newton: int = MAX_NEWTON,
    max_picard: int = MAX_PICARD,
    linear: str = "direct",
    cache: dict | None = None,
):
    """Solve the stationary problem to ``residual(u, p) <= tol``.

    Newton iterations come in several flavours that share the ``max_newton``
    budget: plain Newton on (Re u, Im u) with backtracking, the lifted
    primal-dual form (tried first for m = 0) and, for eps = 0, Newton in the
    inverse variable w = g(u).  When both stagnate, damped
    Picard steps u <- u - omega R(u) run from the best iterate.

    For eps = 0 and m close to 0, nodes where the exact solution has
    |u| = c^(1/m) with c < 1 fall below the double range, so the residual
    stalls at a finite level and NonConvergence is raised; use eps > 0 there.

    ``cache`` may be shared between calls with identical operator data
    (it keeps the linear block and, for m = 1, the factorization).
    """
    if not tol > 0.0:
        raise DomainError("tol must be positive")
    u = np.array(p.F if u_init is None else u_init, dtype=complex)
    if u.shape != p.grid.shape:
        raise DomainError("u_init shape does not match the grid")
    lin = _Linear(p, linear, None if cache is None else cache.setdefault(("lin", linear, p.lam), {}))

    if p.sat.m == 0.0:
        order = [_primal_dual, _newton]
    elif p.sat.m < 1.0 and p.sat.eps == 0.0 and 1.0 / p.sat.m - 1.0 <= INVERSE_MAX_POWER:
        order = [_inverse_newton, _newton, _primal_dual]
    else:
        order = [_newton, _primal_dual]
    r = residual(u, p)
    n_newton = n_picard = 0
    strategy = Strategy.Newton
    for method in order:
        if r <= tol or n_newton >= max_newton:
            break
        cand, rc, it, _ = method(u, p, tol, lin, max_newton - n_newton)
        n_newton += it
        if rc < r:
            u, r = cand, rc

    if r > tol and max_picard > 0:
        strategy = Strategy.DampedPicard
        lip = _lipschitz(p)
        omega = 1.0 / (lip * lip)
        R = residual_field(u, p)
        while r > tol and n_picard < max_picard:
            n_picard += 1
            u = u - omega * R
            R = residual_field(u, p)
            r = norm(R, p.grid)

    converged = bool(r <= tol)
    stats = SolveStats(
        iterations=n_newton + n_picard,
        final_residual=float(r),
        strategy=strategy,
        converged=converged,
        newton_iterations=n_newton,
        picard_iterations=n_picard,
    )
    if not converged:
        raise NonConvergence(float(r), n_newton + n_picard)
    return u, stats


def attainable_tol(p: StationaryProblem, rtol: float = 1e-12, u=None) -> float:
    """max(rtol ||F||, roundoff floor of the residual evaluation at ``u`` (default F))."""
    u = p.F if u is None else u
    g = p.grid
    scale = norm(u, g) + p.lam * (norm(laplacian(u, g), g) + float(np.abs(p.V.values(g)).max()) * norm(u, g))
    scale += p.lam * abs(p.a) * norm(saturate(u, p.sat), g) if (p.sat.eps > 0 or p.sat.m > 0) else 0.0
    floor = 64.0 * np.finfo(float).eps * max(scale, norm(p.F, g))
    return max(rtol * norm(p.F, g), floor, np.finfo(float).tiny)


def solve_with_continuation(p: StationaryProblem, eps_schedule, tol: float, **kw):
    """Solve along a strictly decreasing eps schedule, warm-starting each stage.

    Returns the final-stage solution and the list of (eps, SolveStats, u) per stage.
    """
    sched = [float(e) for e in eps_schedule]
    if not sched:
        raise DomainError("empty eps schedule")
    if any(e < 0.0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise DomainError("eps schedule must be nonnegative and strictly decreasing")
    if sched[-1] == 0.0 and p.sat.m == 0.0:
        raise DomainError("m = 0 cannot continue to eps = 0")
    u = None
    stages = []
    for k, eps in enumerate(sched):
        pk = p.with_eps(eps)
        try:
            u, st = solve(pk, tol, u_init=u, **kw)
        except NonConvergence as exc:
            raise NonConvergence(exc.residual, exc.iterations, stage=k) from exc
        stages.append((eps, st, u))
    return u, stages


def a_priori_defect(u: np.ndarray, p: StationaryProblem) -> float:
    """lam Im(a) sum w(|u|^2)|u|^2 h^d + ||u||^2 - Re<F, u>; zero for an exact solution."""
    absq = np.abs(u) ** 2
    if p.sat.m == 1.0:
        w = np.ones_like(absq)
    else:
        w = (absq + p.sat.eps) ** (-(1.0 - p.sat.m) / 2.0)
        w = np.where(absq > 0.0, w, 0.0) if p.sat.eps == 0.0 else w
    vol = p.grid.cell_volume
    diss = p.lam * p.a.imag * float(np.sum(w * absq)) * vol
    return diss + float(np.sum(absq)) * vol - float(np.real(np.vdot(u, p.F))) * vol
