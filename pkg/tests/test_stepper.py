import json
import io

import numpy as np
import pytest
from scipy.special import gamma

from cqsubdiff.cq import generate_weights
from cqsubdiff.exceptions import NonAdmissibleError
from cqsubdiff.experiments import manufactured_problem, porous_problem
from cqsubdiff.fem1d import ProblemSpec, assemble_load, assemble_mass, assemble_stiffness, l2_error
from cqsubdiff.stepper import (
    HistoryMode,
    TimeGrid,
    run,
    step_direct,
    step_l1,
    step_velocity,
    velocity_weights,
    weights_for,
)

ONE = lambda x, t, u: np.ones_like(x)
ZERO = lambda x, t, u: np.zeros_like(x)


def test_time_grid():
    g = TimeGrid(2.0, 8)
    assert g.h == 0.25 and g.t(8) == 2.0 and g.times[-1] == 2.0
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)


def test_history_mode_validation():
    assert HistoryMode.naive().kind == "naive"
    with pytest.raises(ValueError):
        HistoryMode.fast(epsilon=1e-15)
    with pytest.raises(ValueError):
        HistoryMode.fast(epsilon=1e-3)
    with pytest.raises(ValueError):
        HistoryMode.fast(n0=1)
    with pytest.raises(ValueError):
        HistoryMode("oblivious")


@pytest.mark.parametrize("method", ["bdf1", "bdf2", "l1"])
def test_zero_source_gives_zero_trajectory(method):
    tr = run(ProblemSpec(0.5, ONE, ZERO), TimeGrid(1.0, 16), method, M=9)
    assert np.all(tr.states == 0) and np.all(tr.norms == 0)


def test_zero_source_fast_and_velocity():
    sp = ProblemSpec(0.5, ONE, ZERO)
    assert np.all(run(sp, TimeGrid(1.0, 16), history=HistoryMode.fast(), M=9).final == 0)
    assert np.all(run(sp, TimeGrid(1.0, 16), form="velocity", M=9).final == 0)


def test_first_step_closed_system():
    a, N, M = 0.5, 10, 9
    sp = ProblemSpec(a, ONE, ONE)
    tr = run(sp, TimeGrid(1.0, N), M=M)
    mesh = tr.mesh
    h = 1.0 / N
    lhs = h**-a * assemble_mass(mesh).to_dense() + assemble_stiffness(mesh, sp, h, np.zeros(M)).to_dense()
    y1 = np.linalg.solve(lhs, assemble_load(mesh, sp, h, np.zeros(M)))
    np.testing.assert_allclose(tr.state(1), y1, rtol=1e-12)


def test_step_functions_reproduce_run():
    sp = manufactured_problem(0.4)
    g = TimeGrid(1.0, 12)
    tr = run(sp, g, M=15)
    w = weights_for("bdf1", 0.4, g.h, g.N)
    iw = velocity_weights(0.4, g.h, g.N)
    for n in (1, 5, 12):
        hist = tr.states[:n]
        np.testing.assert_allclose(step_direct(g, tr.mesh, sp, w, hist, n), tr.state(n), rtol=1e-13)
        np.testing.assert_allclose(step_velocity(g, tr.mesh, sp, iw, hist, n), tr.state(n),
                                   rtol=1e-10)
    l1 = run(sp, g, "l1", M=15)
    np.testing.assert_allclose(step_l1(g, tr.mesh, sp, l1.states[:7], 7), l1.state(7), rtol=1e-13)


def test_step_checks():
    sp = manufactured_problem(0.4)
    g = TimeGrid(1.0, 4)
    mesh = sp.mesh(5)
    w = weights_for("bdf1", 0.4, g.h, g.N)
    with pytest.raises(IndexError):
        step_direct(g, mesh, sp, w, np.zeros((1, 5)), 0)
    with pytest.raises(ValueError):
        step_direct(g, mesh, sp, w, np.ones((2, 5)), 2)
    with pytest.raises(ValueError):
        step_velocity(g, mesh, sp, w, np.zeros((2, 5)), 1)
    bad = weights_for("bdf2", 0.8, g.h, g.N)
    with pytest.raises(NonAdmissibleError):
        step_direct(g, mesh, sp, bad, np.zeros((2, 5)), 1)


def test_l1_single_step_is_rescaled_bdf1_step():
    a, M = 0.35, 11
    sp = ProblemSpec(a, ONE, ONE)
    g = TimeGrid(1.0, 1)
    mesh = sp.mesh(M)
    y_l1 = run(sp, g, "l1", M=M).final
    # same one-step system with w0 scaled by 1/Gamma(2-a)
    lhs = assemble_mass(mesh).to_dense() / gamma(2 - a) + assemble_stiffness(mesh, sp, 1.0, np.zeros(M)).to_dense()
    np.testing.assert_allclose(y_l1, np.linalg.solve(lhs, assemble_load(mesh, sp, 1.0, np.zeros(M))),
                               rtol=1e-12)


def test_bdf2_needs_acknowledgement():
    sp = manufactured_problem(0.7)
    with pytest.raises(NonAdmissibleError, match="acknowledge"):
        run(sp, TimeGrid(1.0, 8), "bdf2", M=5)
    assert run(sp, TimeGrid(1.0, 8), "bdf2", M=5, acknowledge_inadmissible=True).final.any()


def test_form_restrictions():
    sp = manufactured_problem(0.5)
    with pytest.raises(ValueError):
        run(sp, TimeGrid(1.0, 8), "bdf2", HistoryMode.fast(), M=5)
    with pytest.raises(ValueError):
        run(sp, TimeGrid(1.0, 8), "bdf1", HistoryMode.fast(), M=5, form="direct")
    with pytest.raises(ValueError):
        run(sp, TimeGrid(1.0, 8), store="some")


def test_manufactured_self_convergence():
    sp = manufactured_problem(0.5)
    e = [l2_error(sp.mesh(99), run(sp, TimeGrid(1.0, N)).final, lambda x: sp.exact(x, 1.0))
         for N in (32, 64, 256, 512)]
    assert e[1] < e[0]
    assert np.log2(e[2] / e[3]) == pytest.approx(1.0, abs=0.15)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_velocity_direct_equivalence(alpha):
    sp = manufactured_problem(alpha)
    g = TimeGrid(1.0, 64)
    d = run(sp, g, M=30)
    v = run(sp, g, form="velocity", M=30)
    diff = np.linalg.norm(d.states - v.states, axis=1).max()
    assert diff <= 1e-10 * np.linalg.norm(d.states, axis=1).max()


def test_velocity_equivalence_random_smooth_source(rng):
    c = rng.standard_normal(4)
    f = lambda x, t, u: c[0] + c[1] * np.sin(3 * x) + c[2] * t + c[3] * np.cos(x * t) + 0 * u
    sp = ProblemSpec(0.6, lambda x, t, u: 1 + 0.5 * np.tanh(u), f)
    g = TimeGrid(1.0, 64)
    d, v = run(sp, g, M=20), run(sp, g, form="velocity", M=20)
    assert np.abs(d.states - v.states).max() <= 1e-10 * np.abs(d.states).max()


def test_fast_matches_naive():
    sp = porous_problem(0.5)
    g = TimeGrid(1.0, 512)
    naive = run(sp, g, M=40)
    fast = run(sp, g, history=HistoryMode.fast(1e-8), M=40, store="final")
    assert np.linalg.norm(fast.final - naive.final) <= 10 * 1e-8 * np.linalg.norm(naive.states, axis=1).max()
    np.testing.assert_allclose(fast.norms, naive.norms, rtol=1e-6, atol=1e-12)
    assert fast.states is None and fast.aux_state_count > 0


def test_fast_ops_subquadratic():
    sp = porous_problem(0.5)
    ops = [run(sp, TimeGrid(1.0, N), history=HistoryMode.fast(), M=4, store="final").history_ops
           for N in (2**10, 2**11, 2**12)]
    assert all(b / a <= 2.5 for a, b in zip(ops, ops[1:]))
    naive = [run(sp, TimeGrid(1.0, N), M=4).history_ops for N in (2**8, 2**9)]
    assert naive[1] / naive[0] == pytest.approx(4.0, rel=0.01)


def test_determinism_naive():
    sp = manufactured_problem(0.3)
    a = run(sp, TimeGrid(1.0, 50), M=20)
    b = run(sp, TimeGrid(1.0, 50), M=20)
    assert np.array_equal(a.states, b.states)


def test_stability_bounded_in_n():
    sp = porous_problem(0.5)
    peaks = [run(sp, TimeGrid(1.0, 2**L), M=40, store="final").norms.max() for L in range(5, 11)]
    assert max(peaks) / min(peaks) < 1.05


def test_trajectory_exports_and_diagnostics():
    sp = manufactured_problem(0.5)
    tr = run(sp, TimeGrid(1.0, 8), M=9)
    buf = io.StringIO()
    tr.to_jsonl(buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(recs) == 9 and set(recs[0]) == {"n", "t", "l2norm", "wall_ns"}
    assert recs[-1]["t"] == 1.0 and recs[0]["l2norm"] == 0.0
    assert tr.wall_ns.shape == (8,) and np.all(tr.step_ns >= tr.wall_ns)
    assert tr.timed_seconds() > 0
    assert tr.nodal_csv(8).splitlines()[0] == "x,value"
    # h/k = 1.25 > t^(1-a/2) at every step here
    assert tr.cfl_violations == 8 and not tr.cfl_ok
    with pytest.raises(ValueError):
        run(sp, TimeGrid(1.0, 8), history=HistoryMode.fast(), M=9, store="final").state(3)
