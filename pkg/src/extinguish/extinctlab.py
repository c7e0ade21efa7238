"""From mass traces to theorem verdicts.

Contents: an ODE integrator for the comparison inequalities, the eps_star
formula, a Gagliardo-Nirenberg constant estimator, decay fits, the
synchronized forcing profile, selection recovery and the verdict logic.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .coeffset import CoefficientContext, exponents, extinction_exponent
from .domain import Grid, laplacian, lp_power, norm
from .errors import DomainError, InsufficientData, NoExtinction
from .evolve import ForcingKind, ForcingSpec, MassTrace


# ---------------------------------------------------------------------------
# ODE comparison


@dataclass
class OdeProblem:
    """y' = -alpha y^delta + envelope(t) * y^(1/2)   (template "edo")
    y' = -alpha y^delta + envelope(t)               (template "additive")
    """

    y0: float
    alpha: float
    delta: float
    envelope: Callable[[float], float] | None = None
    T0: float = 0.0
    template: str = "edo"

    def __post_init__(self):
        if not (0.5 <= self.delta <= 1.0):
            raise DomainError(f"delta={self.delta} outside [1/2, 1]")
        if not (self.y0 >= 0.0 and math.isfinite(self.y0)):
            raise DomainError("y0 must be finite and >= 0")
        if not self.alpha > 0.0:
            raise DomainError("alpha must be positive")
        if self.template not in ("edo", "additive"):
            raise DomainError(f"unknown template {self.template!r}")

    def closed_form_extinction(self) -> float:
        """y0^(1-delta) / (alpha (1-delta)) for the zero envelope (inf if delta = 1)."""
        if self.delta == 1.0:
            return math.inf if self.y0 > 0.0 else 0.0
        return self.y0 ** (1.0 - self.delta) / (self.alpha * (1.0 - self.delta))

    def closed_form(self, t):
        """Zero-envelope solution."""
        t = np.asarray(t, dtype=float)
        if self.delta == 1.0:
            return self.y0 * np.exp(-self.alpha * t)
        d = self.delta
        w = np.maximum(self.y0 ** (1.0 - d) - self.alpha * (1.0 - d) * t, 0.0)
        return w ** (1.0 / (1.0 - d))


@dataclass
class OdeSolution:
    t: np.ndarray
    y: np.ndarray
    extinction_time: float | None

    def at(self, t: float) -> float:
        return float(np.interp(t, self.t, self.y))


def _implicit_w(c: float, k: float, r: float) -> float:
    """Positive root of w - k w^(-r) = c (k > 0), safeguarded Newton."""
    if r == 0.0:
        return max(c + k, 0.0)
    s = k ** (1.0 / (1.0 + r))
    hi = max(c, 0.0) + s
    lo = 0.0
    w = hi
    for _ in range(200):
        phi = w - k * w ** (-r) - c
        if phi > 0.0:
            hi = w
        else:
            lo = w
        dphi = 1.0 + r * k * w ** (-r - 1.0)
        nw = w - phi / dphi
        if not (lo < nw < hi):
            nw = 0.5 * (lo + hi)
        if abs(nw - w) <= 1e-15 * max(w, 1e-300):
            return nw
        w = nw
    return w


def ode_solve(p: OdeProblem, dt: float, t_end: float | None = None) -> OdeSolution:
    """Positivity-preserving implicit integration of the comparison ODE.

    For delta < 1 the update is backward Euler in w = y^(1-delta), where the
    zero-envelope equation is linear, so the closed form is reproduced up to
    roundoff and the extinction time is located inside the crossing step.  For
    delta = 1 an exponential integrator is used (exact without envelope).
    """
    if not dt > 0.0:
        raise DomainError("dt must be positive")
    d, alpha = p.delta, p.alpha
    if t_end is None:
        base = p.closed_form_extinction()
        if not math.isfinite(base):
            base = 10.0 / alpha
        t_end = 2.0 * max(base, p.T0, dt)
    n = max(int(math.ceil(t_end / dt - 1e-9)), 1)
    t = dt * np.arange(n + 1)
    y = np.empty(n + 1)
    y[0] = p.y0
    env = p.envelope
    ext = 0.0 if p.y0 == 0.0 and env is None else None
    if d == 1.0:
        if p.template == "additive":
            decay = math.exp(-alpha * dt)
            gain = (1.0 - decay) / alpha
            for i in range(n):
                e = env(t[i + 1]) if env is not None else 0.0
                y[i + 1] = y[i] * decay + e * gain
        else:
            decay = math.exp(-0.5 * alpha * dt)
            gain = (1.0 - decay) / alpha
            w = math.sqrt(p.y0)
            for i in range(n):
                e = env(t[i + 1]) if env is not None else 0.0
                w = w * decay + e * gain
                y[i + 1] = w * w
        return OdeSolution(t, y, ext)

    q = 1.0 - d
    r = d / q if p.template == "additive" else (d - 0.5) / q
    w = p.y0**q
    drop = alpha * q * dt
    last_zero_start = 0.0 if p.y0 == 0.0 else None
    for i in range(n):
        e = env(t[i + 1]) if env is not None else 0.0
        c = w - drop
        if e > 0.0:
            w_new = _implicit_w(c, q * dt * e, r)
        else:
            w_new = max(c, 0.0)
        if w > 0.0 and w_new == 0.0:
            # crossing inside this step: the update is linear there
            last_zero_start = t[i] + w / (alpha * q)
        elif w_new > 0.0:
            last_zero_start = None
        w = w_new
        y[i + 1] = w ** (1.0 / q)
    if last_zero_start is not None:
        ext = float(last_zero_start)
    return OdeSolution(t, y, ext)


def step4_problem(alpha: float, delta: float, T0: float, y0: float | None = None) -> OdeProblem:
    """y' + alpha y^delta <= y_star (T0 - t)_+^(delta/(1-delta)) with y0 = x_star by default."""
    x_star, y_star = step4_constants(alpha, delta, T0)
    expo = delta / (1.0 - delta)
    return OdeProblem(
        y0=x_star if y0 is None else y0,
        alpha=alpha,
        delta=delta,
        envelope=lambda t: y_star * max(T0 - t, 0.0) ** expo,
        T0=T0,
        template="additive",
    )


def step4_constants(alpha: float, delta: float, T0: float) -> tuple[float, float]:
    """(x_star, y_star)."""
    if not (0.5 < delta < 1.0):
        raise DomainError("delta must be in (1/2, 1)")
    q = 1.0 - delta
    x_star = (alpha * delta * q * T0) ** (1.0 / q)
    y_star = (alpha * delta**delta * q) ** (1.0 / q)
    return x_star, y_star


# ---------------------------------------------------------------------------
# eps_star


def epsilon_star_branches(alpha: float, delta: float) -> tuple[float, float]:
    if not (0.5 < delta < 1.0) or not alpha > 0.0:
        raise DomainError("epsilon_star needs alpha > 0 and 1/2 < delta < 1")
    q = 1.0 - delta
    b1 = (
        (2.0 * delta - 1.0) ** (-(2.0 * delta - 1.0) / delta)
        * (alpha * delta) ** (1.0 / q)
        * q ** ((2.0 * delta - 1.0) / (delta * q))
    )
    b2 = alpha * delta * q
    return b1, b2


def epsilon_star(alpha: float, delta: float) -> float:
    return min(epsilon_star_branches(alpha, delta))


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg constant


def _gn_exponents(N: int, m: float, form: str):
    if form == "gradient":
        return extinction_exponent(N, 1, m), N * (1.0 - m) / 4.0
    if form == "laplacian":
        return extinction_exponent(N, 2, m), N * (1.0 - m) / 8.0
    raise DomainError(f"unknown GN form {form!r}")


def gn_ratio(u, grid: Grid, m: float, form: str = "gradient") -> float:
    """||u||^(2 delta) / (||u||_{m+1}^{m+1} * S^k) with S = ||grad u|| or ||Lap u||."""
    delta, kappa = _gn_exponents(grid.dim, m, form)
    A = norm(u, grid) ** 2
    B = lp_power(u, grid, m + 1.0)
    G = norm(u, grid, "H1_semi") ** 2 if form == "gradient" else norm(laplacian(u, grid), grid) ** 2
    if B == 0.0:
        return 0.0
    return math.exp(delta * math.log(A) - math.log(B) - kappa * math.log(G))


def _log_ratio_and_grad(x, grid, m, form, delta, kappa):
    h = grid.cell_volume
    u = x.reshape(grid.shape)
    A = h * float(np.sum(u * u))
    B = h * float(np.sum(u ** (m + 1.0)))
    Lu = laplacian(u, grid)
    if form == "gradient":
        G = -h * float(np.sum(u * Lu))
        dG = -2.0 * h * Lu
    else:
        G = h * float(np.sum(Lu * Lu))
        dG = 2.0 * h * laplacian(Lu, grid)
    if A <= 0.0 or B <= 0.0 or G <= 0.0:
        return -np.inf, np.zeros_like(x)
    val = delta * math.log(A) - math.log(B) - kappa * math.log(G)
    grad = delta * 2.0 * h * u / A - (m + 1.0) * h * u**m / B - kappa * dG / G
    return val, grad.ravel()


def _random_field(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    coords = grid.coordinates()
    L = grid.extent
    kind = rng.integers(4)
    if kind == 0:
        # sine series with random spectral decay
        u = np.zeros(grid.shape)
        kmax = min(grid.nodes_per_axis, 16)
        p = rng.uniform(0.5, 3.0)
        for _ in range(8):
            ks = rng.integers(1, kmax + 1, grid.dim)
            amp = rng.normal() / float(np.prod(ks)) ** p
            term = np.ones(grid.shape)
            for x, k in zip(coords, ks):
                term = term * np.sin(math.pi * k * x / L)
            u += amp * term
        u = np.abs(u)
    elif kind == 1:
        u = np.zeros(grid.shape)
        for _ in range(rng.integers(1, 4)):
            c = rng.uniform(0.1, 0.9, grid.dim) * L
            w = L * 10.0 ** rng.uniform(-2, -0.5)
            r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
            u += rng.uniform(0.2, 1.0) * np.exp(-r2 / (2.0 * w * w))
    elif kind == 2:
        # compactly supported bump (1 - r^2)_+^q
        c = rng.uniform(0.25, 0.75, grid.dim) * L
        w = L * rng.uniform(0.05, 0.5)
        r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c)) / (w * w)
        u = np.maximum(1.0 - r2, 0.0) ** rng.uniform(1.0, 4.0)
    else:
        # a few hot nodes
        u = np.zeros(grid.size)
        idx = rng.choice(grid.size, size=min(grid.size, int(rng.integers(1, 4))), replace=False)
        u[idx] = rng.uniform(0.5, 1.0, idx.size)
        u = u.reshape(grid.shape)
    if not np.any(u):
        u = np.ones(grid.shape)
    return u / float(np.abs(u).max())


def _ascend(u, grid, m, form, maxiter):
    delta, kappa = _gn_exponents(grid.dim, m, form)

    def fun(x):
        v, g = _log_ratio_and_grad(np.maximum(x, 0.0), grid, m, form, delta, kappa)
        if not np.isfinite(v):
            return 1e300, np.zeros_like(x)
        return -v, -g

    x0 = u.ravel().astype(float)
    res = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                            bounds=[(0.0, None)] * x0.size, options={"maxiter": maxiter})
    x = np.maximum(res.x, 0.0)
    if not np.any(x):
        return u
    return (x / x.max()).reshape(grid.shape)


def estimate_gn_constant(grid: Grid, m: float, samples: int, seed: int, form: str = "gradient",
                         ascent_iters: int = 200, return_trace: bool = False):
    """Running maximum of the GN quotient over seeded fields, each refined by ascent.

    Sample k depends only on (seed, k), so the estimate is non-decreasing in
    ``samples``.  The result is a lower bound for the discrete constant.
    """
    if not (0.0 <= m <= 1.0):
        raise DomainError("m must be in [0, 1]")
    if samples < 1:
        raise DomainError("need at least one sample")
    _gn_exponents(grid.dim, m, form)
    if m == 1.0:
        return (1.0, [1.0] * samples) if return_trace else 1.0
    best = 0.0
    history = []
    for k in range(samples):
        rng = np.random.default_rng([seed, k])
        u = _random_field(grid, rng)
        r0 = gn_ratio(u, grid, m, form)
        if ascent_iters > 0:
            u = _ascend(u, grid, m, form, ascent_iters)
        best = max(best, r0, gn_ratio(u, grid, m, form))
        history.append(best)
    return (best, history) if return_trace else best


def single_node_gn(m: float) -> float:
    """GN quotient on a one-node grid (any spacing, amplitude, dimension 1)."""
    return 2.0 ** (-(1.0 - m) / 4.0)


# ---------------------------------------------------------------------------
# decay fits


@dataclass
class DecayFit:
    model: str
    slope: float
    intercept: float
    r2: float
    rms: float
    rows: int
    rate: float = math.nan
    exponent: float = math.nan


def _window_rows(trace: MassTrace, window, discard_last_decade=True):
    t = trace.array("t")
    y = trace.array("mass")
    lo, hi = (-math.inf, math.inf) if window is None else window
    floor = trace.extinction_tol * (10.0 if discard_last_decade else 1.0)
    sel = (t >= lo) & (t <= hi) & (y > floor)
    if sel.sum() < 10:
        raise InsufficientData(f"window has {int(sel.sum())} usable rows, need >= 10")
    return t[sel], y[sel]


def _linfit(x, z):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    pred = A @ coef
    ss = float(np.sum((z - z.mean()) ** 2))
    res = float(np.sum((z - pred) ** 2))
    r2 = 1.0 - res / ss if ss > 0.0 else 1.0
    return float(coef[0]), float(coef[1]), r2, math.sqrt(res / z.size)


def fit_decay(trace: MassTrace, window=None, model: str = "exponential", kappa: float | None = None,
              delta: float | None = None) -> DecayFit:
    """Least-squares decay fits on rows with mass above 10 * extinction_tol.

    exponential
        log ||u|| = c - rate t.
    polynomial
        ||u|| = (A + B t)^(-p); the exponent p is fitted (log-space least
        squares), and with ``kappa`` given the linearized fit of
        ||u||^(-kappa) against t supplies r2.
    extinction
        y^(1 - delta) linear in t (the zero-envelope comparison law).
    """
    t, y = _window_rows(trace, window)
    nrm = np.sqrt(y)
    if model == "exponential":
        s, c, r2, rms = _linfit(t, np.log(nrm))
        return DecayFit(model, s, c, r2, rms, t.size, rate=-s)
    if model == "extinction":
        if delta is None or not (0.5 <= delta < 1.0):
            raise DomainError("extinction fit needs delta in [1/2, 1)")
        s, c, r2, rms = _linfit(t, y ** (1.0 - delta))
        return DecayFit(model, s, c, r2, rms, t.size)
    if model == "polynomial":
        logn = np.log(nrm)

        def resid(logp):
            p = math.exp(logp)
            with np.errstate(over="ignore"):
                z = nrm ** (-1.0 / p)
            if not np.all(np.isfinite(z)):
                return math.inf
            # the line fit is scale covariant; normalizing keeps the squares finite
            k = float(z.max())
            s, c, _, _ = _linfit(t, z / k)
            base = np.maximum(s * t + c, 1e-300)
            return float(np.sum((logn + p * (np.log(base) + math.log(k))) ** 2))

        res = optimize.minimize_scalar(resid, bounds=(math.log(1e-3), math.log(1e3)), method="bounded",
                                       options={"xatol": 1e-12})
        p = math.exp(res.x)
        with np.errstate(over="ignore"):
            z = nrm ** (-1.0 / p)
        k = float(z.max())
        s, c, r2, rms = _linfit(t, z / k)
        s, c, rms = s * k, c * k, rms * k
        if kappa is not None:
            s, c, r2, rms = _linfit(t, nrm ** (-kappa))
        return DecayFit(model, s, c, r2, rms, t.size, exponent=p)
    raise DomainError(f"unknown decay model {model!r}")


# ---------------------------------------------------------------------------
# synchronized forcing and selection recovery


def synchronized_profile(T0: float, delta: float, eps_star: float, grid: Grid, mode=None,
                         ell: int = 1) -> ForcingSpec:
    """Forcing with ||f(t)||^2 = eps_star (T0 - t)_+^((2 delta - 1)/(1 - delta)).

    ``mode`` defaults to the lowest Dirichlet sine mode.  The returned spec's
    ``constraints`` lists the two conditions on the initial data (and the
    forcing's own regularity budget) that the caller has to verify.
    """
    if not (0.5 < delta < 1.0):
        raise DomainError("delta must be in (1/2, 1)")
    if not T0 > 0.0:
        raise DomainError("T0 must be positive")
    if not eps_star > 0.0:
        raise DomainError("eps_star must be positive")
    if mode is None:
        mode = np.ones(grid.shape)
        for x in grid.coordinates():
            mode = mode * np.sin(math.pi * x / grid.extent)
    mode = np.asarray(mode, dtype=complex)
    spec = ForcingSpec(ForcingKind.SynchronizedProfile, T0=T0, profile=mode, delta=delta, eps_star=eps_star)
    q = 1.0 - delta
    expo = (2.0 * delta - 1.0) / (2.0 * q)
    # integral over (0, T0) of sqrt(eps_star) (T0 - t)^expo
    l1_amp = math.sqrt(eps_star) * T0 ** (expo + 1.0) / (expo + 1.0)
    mode_n = norm(mode, grid)
    if ell == 1:
        budget = l1_amp * norm(mode, grid, "H1_semi") / mode_n
        second = "||grad u0|| + ||grad f||_{L1(L2)} <= eps_star"
    else:
        # W^{1,1}(L2): ||f||_{L1} + ||f'||_{L1}; the time derivative integrates to ||f(0)||
        budget = l1_amp + math.sqrt(eps_star) * T0**expo
        second = "||u0||_{m} + ||f||_{W11(L2)} <= eps_star"
    spec.constraints = {
        "ell": ell,
        "mass_bound": (eps_star * T0) ** (1.0 / q),
        "mass_condition": "||u0||^(2(1-delta)) <= eps_star T0",
        "regularity_condition": second,
        "forcing_budget": budget,
        "u0_budget": eps_star - budget,
    }
    return spec


def synchronized_hypotheses(u0, grid: Grid, spec: ForcingSpec, m: float) -> tuple[bool, str]:
    """Check the two smallness conditions on u0 recorded by synchronized_profile."""
    c = spec.constraints
    q = 1.0 - spec.delta
    mass = norm(u0, grid) ** 2
    ok1 = mass**q <= spec.eps_star * spec.T0
    if c.get("ell", 1) == 1:
        reg = norm(u0, grid, "H1_semi")
    else:
        if not (0.0 < m < 1.0):
            return False, "H2 synchronized extinction needs 0 < m < 1"
        reg = norm(u0, grid, "quasi_m", m=m)
    ok2 = reg + c["forcing_budget"] <= spec.eps_star
    notes = f"mass^(1-delta)={mass**q:.3e} vs {spec.eps_star * spec.T0:.3e}; regularity {reg + c['forcing_budget']:.3e} vs {spec.eps_star:.3e}"
    return bool(ok1 and ok2), notes


def recover_selection(trace: MassTrace, forcing: ForcingSpec, a: complex, grid: Grid, m: float = 0.0,
                      window=None) -> float:
    """sup |U| with U = f / (i Im a) over recorded times after extinction."""
    if m != 0.0:
        raise DomainError("selection recovery applies to m = 0")
    if trace.extinction_time is None:
        raise NoExtinction("trace never extinguishes")
    ima = complex(a).imag
    t = trace.array("t")
    lo = trace.extinction_time
    hi = math.inf
    if window is not None:
        lo, hi = max(lo, window[0]), window[1]
    sel = t[(t > lo) & (t <= hi)]
    best = 0.0
    for tk in sel:
        U = forcing.at(float(tk), grid) / (1j * ima)
        best = max(best, float(np.abs(U).max()))
    return best


# ---------------------------------------------------------------------------
# verdicts


class TheoremId(enum.Enum):
    T_star_H1 = "T_star_H1"
    T_star_H2 = "T_star_H2"
    decay_exp = "decay_exp"
    decay_poly = "decay_poly"
    synchronized = "synchronized"
    mass_to_zero = "mass_to_zero"


@dataclass
class TheoremVerdict:
    theorem_id: TheoremId
    hypotheses_ok: bool
    predicted: float
    observed: float
    passed: bool
    notes: str = ""

    def __post_init__(self):
        self.theorem_id = TheoremId(self.theorem_id)
        if self.passed and not self.hypotheses_ok:
            raise ValueError("a verdict cannot pass with unmet hypotheses")

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id.value,
            "hypotheses_ok": self.hypotheses_ok,
            "predicted": _json_num(self.predicted),
            "observed": _json_num(self.observed),
            "pass": self.passed,
            "notes": self.notes,
        }


def _json_num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class VerdictContext:
    coeff: CoefficientContext
    N: int
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    c_gn: dict = field(default_factory=dict)  # ell -> estimated constant
    V_constant: bool = True
    tau: float | None = None
    u0: np.ndarray | None = None
    grid: Grid | None = None
    rate_rtol: float = 0.01
    exponent_rtol: float = 0.2


def _unmet(tid, why, predicted=math.nan, observed=math.nan):
    return TheoremVerdict(tid, False, predicted, observed, False, "hypotheses unmet: " + why)


def _forcing_condition(ctx: VerdictContext) -> tuple[bool, str, float]:
    """The tail condition on f after T0; returns (ok, why, omega_f)."""
    m = ctx.coeff.m
    fs = ctx.forcing
    tail = fs.tail_sup()
    ima = ctx.coeff.a.imag
    if m == 0.0:
        omega = ima - tail
        if omega > 0.0:
            return True, "", omega
        return False, f"sup |f| after T0 = {tail:g} is not below Im(a) = {ima:g}", omega
    if tail > 0.0:
        return False, "f does not vanish after T0", math.nan
    return True, "", math.nan


def _row_at(trace: MassTrace, t0: float) -> int:
    t = trace.array("t")
    idx = int(np.searchsorted(t, t0 - 1e-12))
    return min(idx, len(t) - 1)


def _forcing_T0(fs: ForcingSpec) -> float:
    return 0.0 if fs.kind is ForcingKind.Zero else fs.T0


def verdict(trace: MassTrace, theorem: TheoremId | str, ctx: VerdictContext, window=None) -> TheoremVerdict:
    """Evaluate one theorem against a trace; unmet hypotheses give hypotheses_ok = False."""
    tid = TheoremId(theorem)
    co = ctx.coeff
    m, N = co.m, ctx.N
    if not co.admissible:
        return _unmet(tid, f"a = {co.a} not admissible for m = {m} ({co.classification.value})")
    if len(trace) < 2:
        return _unmet(tid, "trace has fewer than two rows")
    T0 = _forcing_T0(ctx.forcing)

    if tid in (TheoremId.T_star_H1, TheoremId.T_star_H2):
        ell = 1 if tid is TheoremId.T_star_H1 else 2
        if m >= 1.0:
            return _unmet(tid, "finite extinction needs m < 1")
        if ell == 1 and N != 1:
            return _unmet(tid, "the H1 extinction bound is stated for N = 1")
        if ell == 2 and N > 3:
            return _unmet(tid, "the H2 extinction bound is stated for N <= 3")
        if ell == 1 and not ctx.V_constant:
            return _unmet(tid, "the H1 case needs a constant potential")
        ok, why, omega = _forcing_condition(ctx)
        if not ok:
            return _unmet(tid, why)
        c_gn = ctx.c_gn.get(ell)
        if c_gn is None:
            return _unmet(tid, f"no GN constant supplied for ell = {ell}")
        sup = float(np.max(trace.array("h1_seminorm" if ell == 1 else "laplacian_l2")))
        ex = exponents(co, N, ell, c_gn=c_gn, sup_norm=sup, f_sup=ctx.forcing.tail_sup())
        i0 = _row_at(trace, T0)
        y_T0 = trace.mass[i0]
        t_T0 = trace.t[i0]
        q = 1.0 - ex.delta
        if m == 0.0:
            pred = t_T0 + y_T0**q / (ex.beta * q)
            coef = f"beta={ex.beta:.6g} (omega_f={omega:.6g})"
        else:
            pred = t_T0 + y_T0**q / (2.0 * ex.alpha * q)
            coef = f"alpha={ex.alpha:.6g}"
        obs = trace.extinction_time
        notes = (f"ell={ell} delta={ex.delta:.6g} C_GN={c_gn:.6g} (estimated lower bound; may understate the "
                 f"continuum constant) sup_norm={sup:.6g} {coef} y(T0)={y_T0:.6g}")
        if obs is None:
            return TheoremVerdict(tid, True, pred, math.nan, False, notes + "; no extinction observed")
        return TheoremVerdict(tid, True, pred, obs, bool(obs <= pred), notes)

    if tid is TheoremId.decay_exp:
        if m == 1.0:
            if ctx.forcing.tail_sup() > 0.0:
                return _unmet(tid, "the exact law needs f = 0 after T0")
            lo = T0 if window is None else max(window[0], T0)
            hi = math.inf if window is None else window[1]
            try:
                fit = fit_decay(trace, (lo, hi), "exponential")
            except InsufficientData as exc:
                return _unmet(tid, str(exc))
            pred = co.a.imag
            err = abs(fit.rate - pred) / pred
            return TheoremVerdict(tid, True, pred, fit.rate, bool(err <= ctx.rate_rtol),
                                  f"exact law; relative error {err:.3e}, r2={fit.r2:.6f}")
        if not ((N == 2 and ctx.V_constant) or N == 4):
            return _unmet(tid, "exponential decay is stated for N = 2 (H1) or N = 4 (H2)")
        ok, why, _ = _forcing_condition(ctx)
        if not ok:
            return _unmet(tid, why)
        t = trace.array("t")
        y = trace.array("mass")
        i0 = _row_at(trace, T0)
        sel = (t > t[i0]) & (y > trace.extinction_tol * 10.0)
        if sel.sum() < 2:
            return _unmet(tid, "not enough rows after T0")
        rates = 0.5 * (math.log(y[i0]) - np.log(y[sel])) / (t[sel] - t[i0])
        obs = float(rates.min())
        return TheoremVerdict(tid, True, math.nan, obs, bool(obs > 0.0),
                              "constant C unspecified; pass means some C > 0 bounds the decay")

    if tid is TheoremId.decay_poly:
        if m >= 1.0:
            return _unmet(tid, "polynomial decay needs m < 1")
        if N >= 5:
            ell = 2
        elif N >= 3 and ctx.V_constant:
            ell = 1
        else:
            return _unmet(tid, "polynomial decay is stated for N >= 3 (H1) or N >= 5 (H2)")
        ok, why, _ = _forcing_condition(ctx)
        if not ok:
            return _unmet(tid, why)
        kappa = (1.0 - m) * (N - 2 * ell) / (2 * ell)
        pred = 1.0 / kappa
        lo = T0 if window is None else max(window[0], T0)
        hi = math.inf if window is None else window[1]
        try:
            fit = fit_decay(trace, (lo, hi), "polynomial", kappa=kappa)
        except InsufficientData as exc:
            return _unmet(tid, str(exc))
        err = abs(fit.exponent - pred) / pred
        notes = f"ell={ell}; fitted exponent {fit.exponent:.6g}, relative error {err:.3e}"
        if trace.extinction_time is not None:
            notes += f"; trace extinguished at t={trace.extinction_time:.6g}"
        return TheoremVerdict(tid, True, pred, fit.exponent, bool(err <= ctx.exponent_rtol), notes)

    if tid is TheoremId.synchronized:
        fs = ctx.forcing
        if fs.kind is not ForcingKind.SynchronizedProfile:
            return _unmet(tid, "forcing is not a synchronized profile")
        ell = fs.constraints.get("ell", 1)
        if ell == 1 and N != 1:
            return _unmet(tid, "H1 synchronized extinction is stated for N = 1")
        if ell == 2 and (N > 3 or not (0.0 < m < 1.0)):
            return _unmet(tid, "H2 synchronized extinction needs N <= 3 and 0 < m < 1")
        if m >= 1.0:
            return _unmet(tid, "finite extinction needs m < 1")
        if ctx.u0 is None or ctx.grid is None:
            return _unmet(tid, "initial data not supplied")
        ok, why = synchronized_hypotheses(ctx.u0, ctx.grid, fs, m)
        if not ok:
            return _unmet(tid, why)
        slack = 2.0 * (ctx.tau or 0.0)
        pred = fs.T0
        obs = trace.extinction_time
        sup = float(np.max(trace.array("h1_seminorm" if ell == 1 else "laplacian_l2")))
        notes = f"{why}; sup {'||grad u||' if ell == 1 else '||Lap u||'} = {sup:.3e} (<= 1 expected)"
        if obs is None:
            return TheoremVerdict(tid, True, pred, math.nan, False, notes + "; no extinction observed")
        ok = obs <= pred + slack and sup <= 1.0
        return TheoremVerdict(tid, True, pred, obs, bool(ok), notes + f"; slack 2 tau = {slack:g}")

    if tid is TheoremId.mass_to_zero:
        fs = ctx.forcing
        if fs.kind is ForcingKind.BoundedTail and fs.m_inf > 0.0:
            return _unmet(tid, "a non-vanishing bounded tail is not integrable in time")
        y = trace.array("mass")
        t = trace.array("t")
        peak = float(y.max())
        final = float(y[-1])
        i0 = _row_at(trace, T0)
        tail = y[i0:]
        mono = bool(np.all(np.diff(tail) <= 1e-12 * max(peak, 1e-300)))
        # a finite trace cannot show the limit itself: require a non-increasing
        # mass after T0 that has strictly dropped (or already vanished)
        ok = final <= trace.extinction_tol or final < y[i0]
        notes = (f"final/peak mass = {final / peak if peak > 0 else 0.0:.3e}; non-increasing after T0: {mono}; "
                 f"finite-horizon evidence only")
        return TheoremVerdict(tid, True, 0.0, final, bool(ok and mono), notes)

    raise DomainError(f"unhandled theorem {tid}")


def report_json(verdicts, extra: dict | None = None) -> str:
    doc = dict(extra or {})
    doc["verdicts"] = [v.to_dict() for v in verdicts]
    return json.dumps(doc, indent=2, sort_keys=False)
