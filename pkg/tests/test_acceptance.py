"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the result lines are
written straight to the terminal.  Criterion 11 is advisory: it reports
its outcome but never fails the suite.
"""
import math
import time

import numpy as np
import pytest

from extinguish.coeffset import CoefficientContext, extinction_exponent
from extinguish.domain import Grid, Potential, norm
from extinguish.evolve import ForcingKind, ForcingSpec, OperatorData, Schedule, contraction_check, run
from extinguish.extinctlab import (
    OdeProblem,
    TheoremId,
    VerdictContext,
    estimate_gn_constant,
    fit_decay,
    ode_solve,
    recover_selection,
    step4_problem,
    synchronized_hypotheses,
    synchronized_profile,
    verdict,
)
from extinguish.resolvent import StationaryProblem, attainable_tol, residual, solve
from extinguish.satkernel import SatParams, certify_region, sector_ratio_bound

from test_resolvent import rand_field, random_problem

pytestmark = pytest.mark.slow


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail, advisory=False):
        tag = "PASS" if ok else "FAIL"
        extra = " (advisory)" if advisory else ""
        with capsys.disabled():
            print(f"\n{tag} criterion {num}{extra}: {detail}")
    return emit


def sine(grid, k=1):
    x = grid.coordinates()[0]
    return np.sin(k * math.pi * x / grid.extent).astype(complex)


def test_c01_monotonicity_certification(report):
    start = time.perf_counter()
    worst = {}
    for m in (0.0, 0.25, 0.5, 0.75, 1.0):
        for eps in (0.0, 1e-6, 0.1, 1.0):
            if m == 0.0 and eps == 0.0:
                continue
            r = certify_region(SatParams(m, eps), 1_000_000, seed=2024, workers=1)
            worst[(m, eps)] = max(r.worst_sector_scaled, r.worst_damping_scaled)
    elapsed = time.perf_counter() - start
    # scaled defects <= 1 mean defect >= -1e-12 (|Z| + 1)
    ok = max(worst.values()) <= 1.0 and elapsed < 60.0
    report(1, ok, f"19 regions x 1e6 pairs, worst scaled defect {max(worst.values()):.3g}, {elapsed:.1f} s")
    assert ok


def test_c02_sector_ratio_bound(report):
    axis = np.logspace(-3, 3, 200)
    theta = np.linspace(-math.pi, math.pi, 256)
    T, S = np.meshgrid(axis, axis, indexing="ij")
    sel = T > S
    t, s = T[sel][:, None], S[sel][:, None]
    worst = -math.inf
    for m in (0.1, 0.5, 0.9):
        for eps in (0.0, 0.5):
            r, b = sector_ratio_bound(t, s, theta[None, :], SatParams(m, eps))
            worst = max(worst, float(np.max(r - b)))
    ok = worst <= 1e-10
    report(2, ok, f"max(ratio_sq - bound) = {worst:.3g} on the 200x200x256 grid")
    assert ok


def test_c03_resolvent(report):
    g = Grid(1, 1, 1.0)
    p1 = StationaryProblem(g, Potential.zero(), 1j, SatParams(1.0, 0.0), 1.0, np.array([1.0 + 0j]))
    u1, _ = solve(p1, 1e-14)
    err1 = abs(u1[0] - 1 / (2 + 2j))

    worst_bound = -math.inf
    worst_ne = -math.inf
    for seed in range(500):
        p = random_problem(seed)
        tol = attainable_tol(p)
        u, _ = solve(p, tol)
        fn = norm(p.F, p.grid)
        worst_bound = max(worst_bound, norm(u, p.grid) / fn - 1.0 if fn > 0 else 0.0)
        if seed % 5 == 0:
            rng = np.random.default_rng(seed)
            q = p.with_rhs(p.F + rand_field(p.grid, rng, 0.3 * fn))
            v, _ = solve(q, attainable_tol(q))
            scale = fn + norm(q.F, q.grid)
            defect = norm(u - v, p.grid) - norm(p.F - q.F, p.grid)
            worst_ne = max(worst_ne, defect / scale)
    ok = err1 <= 1e-12 and worst_bound <= 1e-10 and worst_ne <= 1e-10
    report(3, ok, f"one-node error {err1:.2g}; max ||u||/||F|| - 1 = {worst_bound:.2g} over 500; "
                  f"non-expansiveness defect / scale = {worst_ne:.2g}")
    assert ok


def test_c04_exact_linear_law(report):
    start = time.perf_counter()
    g = Grid.box(1, 256, 10.0)
    tr, _ = run(sine(g), Schedule(1e-3, 2.0), ForcingSpec.zero(), OperatorData(g, 1j, 1.0))
    elapsed = time.perf_counter() - start
    rate = fit_decay(tr, model="exponential").rate
    ok = abs(rate - 1.0) <= 0.01 and elapsed < 10.0
    report(4, ok, f"fitted rate {rate:.6f} (target 1, 1%), {elapsed:.1f} s")
    assert ok


@pytest.mark.parametrize("m", [0.0, 0.25, 0.5])
def test_c05_extinction_occurrence(report, m):
    g = Grid.box(1, 256, 10.0)
    eps = 1e-28 if m == 0.0 else None
    tr, _ = run(0.3 * sine(g), Schedule(2e-3, 3.0, eps=eps), ForcingSpec.zero(), OperatorData(g, 1j, m))
    T = tr.extinction_time
    delta = extinction_exponent(1, 2, m)
    r2 = math.nan
    if T is not None:
        t, y = tr.array("t"), tr.array("mass")
        near = t[(y > 10.0 * tr.extinction_tol) & (y < 1e-2 * y[0])]
        fit = fit_decay(tr, (near.min(), near.max()), "extinction", delta=delta)
        r2 = fit.r2
    c_gn = estimate_gn_constant(Grid.box(1, 64, 10.0), m, 6, 0, ascent_iters=100)
    v = verdict(tr, TheoremId.T_star_H1, VerdictContext(CoefficientContext(1j, m), 1, c_gn={1: c_gn}))
    ok = T is not None and r2 >= 0.99 and v.passed
    report(5, ok, f"m={m}: T_num={T}, R2(y^(1-delta_2))={r2:.5f}, T_pred={v.predicted:.4g}, verdict pass={v.passed}")
    assert ok


def test_c06_bounded_tail_selection(report):
    g = Grid.box(1, 256, 10.0)
    a = 1j
    m_inf = 0.5 * a.imag
    fs = ForcingSpec(ForcingKind.BoundedTail, T0=0.1, profile=sine(g, 2), amplitude=0.2, m_inf=m_inf)
    tr, u = run(0.3 * sine(g), Schedule(1e-3, 0.8, eps=1e-28), fs, OperatorData(g, a, 0.0))
    sup_u = recover_selection(tr, fs, a, g) if tr.extinction_time is not None else math.inf
    ok = tr.extinction_time is not None and sup_u <= m_inf / a.imag + 1e-10
    report(6, ok, f"extinction at {tr.extinction_time}; sup|U| = {sup_u:.12g} (bound {m_inf / a.imag:g})")
    assert ok


def test_c07_ode_comparison(report):
    worst_y, worst_cf = 0.0, 0.0
    for alpha, delta, T0 in ((1.0, 0.75, 1.0), (0.5, 0.6, 2.0), (2.0, 0.9, 0.5)):
        sol = ode_solve(step4_problem(alpha, delta, T0), 1e-5, t_end=1.2 * T0)
        worst_y = max(worst_y, sol.at(T0))
        p = OdeProblem(1.3, alpha, delta)
        T = p.closed_form_extinction()
        z = ode_solve(p, 1e-5, t_end=1.5 * T)
        worst_cf = max(worst_cf, abs(z.extinction_time - T))
    ok = worst_y <= 1e-10 and worst_cf <= 1e-6
    report(7, ok, f"max y(T0) = {worst_y:.3g}; closed-form extinction time error {worst_cf:.3g}")
    assert ok


def test_c08_discrete_identity_order(report):
    g = Grid.box(1, 128, 10.0)
    u0 = 0.3 * sine(g) + 0.1j * sine(g, 3)
    factors = {}
    for m in (0.5, 1.0):
        op = OperatorData(g, 1j, m, Potential.constant(0.5))
        res = [run(u0, Schedule(tau, 0.4), ForcingSpec.zero(), op)[0].max_identity_residual
               for tau in (4e-3, 2e-3, 1e-3)]
        factors[m] = [a / b for a, b in zip(res, res[1:])]
    low = min(min(f) for f in factors.values())
    ok = low >= 1.8
    report(8, ok, "halving factors " + "; ".join(f"m={m}: {f[0]:.3f}, {f[1]:.3f}" for m, f in factors.items()))
    assert ok


def test_c09_contraction(report):
    worst = -math.inf
    for k in range(100):
        rng = np.random.default_rng(k)
        g = Grid.box(1, int(rng.integers(8, 33)), float(rng.uniform(1.0, 10.0)))
        m = float(rng.choice([0.25, 0.5, 0.75, 1.0]))
        op = OperatorData(g, 1j * float(rng.uniform(0.5, 2.0)), m, Potential.constant(float(rng.normal())))
        u0 = rand_field(g, rng, 0.5)
        v0 = u0 + rand_field(g, rng, 0.1)
        ff = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.05, profile=rand_field(g, rng), amplitude=0.3)
        gg = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.08, profile=rand_field(g, rng), amplitude=0.2j)
        d = contraction_check(u0, v0, ff, gg, Schedule(1e-2, 0.1), op)
        scale = norm(u0, g) + norm(v0, g)
        worst = max(worst, d / scale)
    ok = worst <= 1e-10
    report(9, ok, f"max per-step defect / scale = {worst:.3g} over 100 pairs")
    assert ok


@pytest.mark.parametrize("m", [0.0, 0.5])
def test_c10_synchronized_extinction(report, m):
    g = Grid.box(1, 256, 10.0)
    tau, T0, eps_star = 1e-3, 0.5, 0.02
    fs = synchronized_profile(T0, extinction_exponent(1, 1, m), eps_star, g)
    mode = sine(g)
    c = fs.constraints
    # half of each smallness budget
    amp = min(0.5 * c["u0_budget"] / norm(mode, g, "H1_semi"), math.sqrt(0.5 * c["mass_bound"]) / norm(mode, g))
    u0 = amp * mode
    hyp, _ = synchronized_hypotheses(u0, g, fs, m)
    eps = 1e-28 if m == 0.0 else None
    tr, _ = run(u0, Schedule(tau, 1.0, eps=eps), fs, OperatorData(g, 1j, m))
    v = verdict(tr, TheoremId.synchronized, VerdictContext(CoefficientContext(1j, m), 1, forcing=fs, tau=tau,
                                                           u0=u0, grid=g))
    ok = hyp and v.passed
    report(10, ok, f"m={m}: hypotheses {hyp}, extinction at {tr.extinction_time} vs T0 + 2 tau = {T0 + 2 * tau}")
    assert ok


def test_c11_polynomial_exponent_advisory(report):
    # 12^3 box; on a bounded Dirichlet domain Poincare forces faster-than-polynomial
    # decay, so the whole-space exponent is not expected to be reproduced
    m, n, L = 0.5, 12, 12.0
    g = Grid.box(3, n, L)
    r2 = sum((x - L / 2) ** 2 for x in g.coordinates())
    u0 = np.exp(-r2 / 2.0).astype(complex)
    tr, _ = run(u0, Schedule(5e-2, 2.0), ForcingSpec.zero(), OperatorData(g, 1j, m))
    v = verdict(tr, TheoremId.decay_poly, VerdictContext(CoefficientContext(1j, m), 3))
    report(11, v.passed, f"fitted exponent {v.observed:.4g} vs {v.predicted:.4g} (20%); {v.notes}", advisory=True)
    assert v.hypotheses_ok
