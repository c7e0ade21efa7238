import math

import numpy as np
import pytest

from extinguish import evolve
from extinguish.domain import Grid, Potential, norm
from extinguish.errors import DomainError, NonConvergence
from extinguish.evolve import (
    CSV_FIELDS,
    ForcingKind,
    ForcingSpec,
    MassTrace,
    OperatorData,
    Schedule,
    contraction_check,
    detect_extinction,
    run,
    step,
)


def sine(grid, k=1):
    x = grid.coordinates()[0]
    return np.sin(k * math.pi * x / grid.extent).astype(complex)


def test_step_zero():
    g = Grid.box(1, 16)
    op = OperatorData(g, 1j, 0.5)
    assert np.all(step(g.zeros(), 1e-2, g.zeros(), op) == 0)
    with pytest.raises(DomainError):
        step(g.zeros(), 0.0, g.zeros(), op)


def test_one_node_exact_law():
    g = Grid(1, 1, 1.0)
    op = OperatorData(g, 1j, 1.0)
    u0 = np.array([0.7 - 0.2j])
    gen = 1 + 2j  # A u = -i(-2u + i u)
    for tau in (1e-2, 5e-3, 2.5e-3):
        u1 = step(u0, tau, g.zeros(), op)
        assert u1[0] == pytest.approx(u0[0] / (1 + tau * gen), rel=1e-13)
        err = abs(u1[0] - u0[0] * np.exp(-gen * tau))
        assert err <= 3.0 * tau**2 * abs(u0[0])
    # modulus follows |u0| e^{-t} to first order
    u = u0
    tau = 1e-4
    for _ in range(1000):
        u = step(u, tau, g.zeros(), op)
    assert abs(u[0]) == pytest.approx(abs(u0[0]) * math.exp(-0.1), rel=1e-3)


@pytest.mark.parametrize("m", [0.0, 0.5, 1.0])
def test_unforced_step_is_non_expansive(m):
    g = Grid.box(2, 8)
    rng = np.random.default_rng(int(10 * m))
    op = OperatorData(g, 1j, m, Potential.constant(0.3))
    u = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    for _ in range(5):
        v = step(u, 1e-2, g.zeros(), op)
        assert norm(v, g) <= norm(u, g) * (1 + 1e-12)
        u = v


def test_zero_run():
    g = Grid.box(1, 32)
    tr, u = run(g.zeros(), Schedule(1e-2, 0.1), ForcingSpec.zero(), OperatorData(g, 1j, 0.5))
    assert len(tr) == 11
    for name in CSV_FIELDS[1:]:
        assert np.all(tr.array(name) == 0)
    assert tr.extinction_time == 0.0 and np.all(u == 0)


def test_linear_rate():
    g = Grid.box(1, 128, 10.0)
    tr, _ = run(sine(g), Schedule(1e-3, 1.0), ForcingSpec.zero(), OperatorData(g, 1j, 1.0))
    t, y = tr.array("t"), tr.array("mass")
    rate = -np.polyfit(t, 0.5 * np.log(y), 1)[0]
    # the oracle includes the first-order scheme bias log(1 + tau)/tau
    assert rate == pytest.approx(math.log1p(1e-3) / 1e-3, rel=1e-3)
    assert abs(rate - 1.0) <= 0.01


def test_sublinear_run_extinguishes_and_dissipates():
    g = Grid.box(1, 64, 10.0)
    op = OperatorData(g, 1j, 0.5, Potential.constant(0.7))
    tr, u = run(0.3 * sine(g), Schedule(1e-2, 2.0), ForcingSpec.zero(), op)
    assert tr.extinction_time is not None and 0 < tr.extinction_time < 2.0
    assert np.all(np.abs(u) ** 2 * g.cell_volume < tr.extinction_tol)
    y = tr.array("mass")
    assert tr.max_mass_increase <= 1e-14 * y[0]
    assert np.all(np.diff(y) <= 1e-14 * y[0])
    h1 = tr.array("h1_seminorm")
    assert np.all(np.diff(h1) <= 1e-8 * h1[0])
    assert tr.max_l2plus_defect <= 1e-3 * y[0]
    assert tr.extinction_time == detect_extinction(tr.t, tr.mass, tr.extinction_tol)


def test_identity_residual_definition():
    g = Grid.box(1, 16)
    op = OperatorData(g, 2j, 1.0)
    rng = np.random.default_rng(2)
    prof = rng.normal(size=g.shape) + 0j
    fs = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.05, profile=prof, amplitude=0.5j)
    tr, _ = run(sine(g), Schedule(1e-2, 0.1), fs, op)
    y, d, w, r = (tr.array(k) for k in ("mass", "dissipation_power", "forcing_work", "identity_residual"))
    want = np.abs((y[1:] - y[:-1]) / 0.02 + 2.0 * d[1:] - w[1:])
    assert np.allclose(r[1:], want, rtol=1e-12, atol=1e-15)
    assert r[0] == 0.0
    assert tr.max_identity_residual == pytest.approx(r.max())


def test_determinism_and_csv(tmp_path):
    g = Grid.box(1, 24)
    op = OperatorData(g, 1j, 0.25)
    sched = Schedule(5e-3, 0.05)
    a, _ = run(0.5 * sine(g), sched, ForcingSpec.zero(), op)
    b, _ = run(0.5 * sine(g), sched, ForcingSpec.zero(), op)
    assert a.to_csv() == b.to_csv()
    text = a.to_csv(tmp_path / "trace.csv")
    assert text.splitlines()[0] == "t,mass,dissipation_power,forcing_work,identity_residual,h1_seminorm,laplacian_l2"
    assert "\r" not in text
    back = MassTrace.from_csv((tmp_path / "trace.csv").read_text())
    assert back.mass == a.mass and back.t == a.t
    with pytest.raises(DomainError):
        MassTrace.from_csv("x,y\n1,2\n")


def test_stride():
    g = Grid.box(1, 16)
    tr, _ = run(sine(g), Schedule(1e-2, 0.1, stride=3), ForcingSpec.zero(), OperatorData(g, 1j, 1.0))
    # rows at steps 0, 3, 6, 9 and the final step 10
    assert tr.t == pytest.approx([0.0, 0.03, 0.06, 0.09, 0.1])
    with pytest.raises(DomainError):
        Schedule(1e-2, 1.0, stride=0)


def test_detect_extinction():
    tol = 1e-24
    t = [0, 1, 2, 3, 4]
    assert detect_extinction(t, [1, 1e-30, 1, 1e-30, 0], tol) == 3
    assert detect_extinction(t, [1, 1, 1, 1, 1], tol) is None
    assert detect_extinction(t, [0, 0, 0, 0, 0], tol) == 0
    assert detect_extinction(t, [1, 1, 1e-25, 0, 0], tol) == 2


def test_schedule_eps_policy():
    assert Schedule(1e-3, 1.0).epsilon(0.5) == pytest.approx(1e-12)
    assert Schedule(1e-7, 1.0).epsilon(0.5) == pytest.approx(1e-14)
    assert Schedule(1e-3, 1.0).epsilon(1.0) == 0.0
    assert Schedule(1e-3, 1.0, eps=1e-20).epsilon(0.0) == 1e-20
    with pytest.raises(DomainError):
        Schedule(0.0, 1.0)


def test_forcing_kinds():
    g = Grid.box(1, 20)
    prof = sine(g, 2)
    cut = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.5, profile=prof, amplitude=2.0, temporal=lambda t: 1 - t)
    assert np.allclose(cut.at(0.25, g), 1.5 * prof)
    assert np.all(cut.at(0.5 + 1e-12, g) == 0)
    tail = ForcingSpec(ForcingKind.BoundedTail, T0=0.5, profile=prof, m_inf=0.3)
    for t in (0.6, 1.0, 10.0):
        assert np.abs(tail.at(t, g)).max() == pytest.approx(0.3)
    assert tail.tail_sup() == 0.3 and cut.tail_sup() == 0.0
    syn = ForcingSpec(ForcingKind.SynchronizedProfile, T0=1.0, profile=prof, delta=0.75, eps_star=0.01)
    assert norm(syn.at(0.0, g), g) ** 2 == pytest.approx(0.01)
    assert norm(syn.at(0.5, g), g) ** 2 == pytest.approx(0.01 * 0.5**2)
    assert np.all(syn.at(1.0, g) == 0) and np.all(syn.at(3.0, g) == 0)
    with pytest.raises(DomainError):
        ForcingSpec(ForcingKind.CutoffAtT0, T0=1.0)
    with pytest.raises(DomainError):
        ForcingSpec(ForcingKind.BoundedTail, T0=1.0, profile=prof, m_inf=-1)
    with pytest.raises(DomainError):
        ForcingSpec(ForcingKind.SynchronizedProfile, T0=1.0, profile=prof, delta=1.0, eps_star=0.1)
    with pytest.raises(DomainError):
        ForcingSpec(ForcingKind.Zero, T0=-1.0)
    with pytest.raises(DomainError):
        cut.at(0.1, Grid.box(1, 5))


def test_contraction_examples():
    g = Grid.box(1, 32, 4.0)
    op = OperatorData(g, 1j, 0.5)
    sched = Schedule(1e-2, 0.2)
    u0 = sine(g)
    assert contraction_check(u0, u0, ForcingSpec.zero(), ForcingSpec.zero(), sched, op) <= 0.0
    rng = np.random.default_rng(0)
    v0 = u0 + 0.1 * rng.normal(size=g.shape)
    assert contraction_check(u0, v0, ForcingSpec.zero(), ForcingSpec.zero(), sched, op) <= 1e-12
    ff = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.1, profile=sine(g, 3), amplitude=0.2)
    gg = ForcingSpec(ForcingKind.CutoffAtT0, T0=0.15, profile=sine(g, 2), amplitude=-0.1j)
    assert contraction_check(u0, v0, ff, gg, sched, op) <= 1e-10 * norm(u0, g)


def test_nonconvergence_carries_time(monkeypatch):
    g = Grid.box(1, 8)

    def boom(*args, **kw):
        raise NonConvergence(1.0, 7)

    monkeypatch.setattr(evolve, "solve", boom)
    with pytest.raises(NonConvergence) as info:
        run(sine(g), Schedule(0.1, 1.0), ForcingSpec.zero(), OperatorData(g, 1j, 0.5))
    assert info.value.time == pytest.approx(0.1)


def test_eps_continuation_in_step():
    g = Grid.box(1, 16)
    op = OperatorData(g, 1j, 0.5)
    u = sine(g)
    a = step(u, 1e-2, g.zeros(), op, eps_continuation=[1e-2, 1e-6, 0.0])
    from extinguish.satkernel import SatParams

    b = step(u, 1e-2, g.zeros(), op, SatParams(0.5, 0.0))
    assert norm(a - b, g) <= 1e-10
