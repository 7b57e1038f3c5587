import io
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from cqsubdiff.exceptions import AssemblyError, SingularMatrixError
from cqsubdiff.fem1d import (
    Mesh1D,
    ProblemSpec,
    StepAssembler,
    TriDiag,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    l2_error,
    l2_norm,
    solve_tridiag,
    to_csv,
)


def spec(D=lambda x, t, u: np.ones_like(x), f=lambda x, t, u: np.zeros_like(x), alpha=0.5):
    return ProblemSpec(alpha, D, f)


def test_mesh_geometry():
    m = Mesh1D(0.0, 1.0, 3)
    assert m.k == 0.25
    np.testing.assert_allclose(m.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(m.interior, [0.25, 0.5, 0.75])
    with pytest.raises(ValueError):
        Mesh1D(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        Mesh1D(1.0, 1.0, 4)


def test_mass_matrix():
    B = assemble_mass(Mesh1D(0.0, 1.0, 3))
    np.testing.assert_allclose(B.diag, 1 / 6)
    np.testing.assert_allclose(B.lower, 1 / 24)
    np.testing.assert_allclose(B.upper, 1 / 24)
    m = Mesh1D(0.0, 1.0, 9)
    rows = assemble_mass(m).matvec(np.ones(9))
    np.testing.assert_allclose(rows[1:-1], m.k)


def test_mass_norm_of_sine():
    m = Mesh1D(0.0, 1.0, 99)
    y = np.sin(np.pi * m.interior)
    assert y @ assemble_mass(m).matvec(y) == pytest.approx(0.5, abs=1e-4)


def test_mass_and_stiffness_spd():
    m = Mesh1D(0.0, 2.0, 12)
    sp = spec(D=lambda x, t, u: 1.0 + x**2)
    for A in (assemble_mass(m), assemble_stiffness(m, sp, 0.0, np.zeros(12))):
        dense = A.to_dense()
        assert np.allclose(dense, dense.T)
        assert np.linalg.eigvalsh(dense).min() > 0


def test_stiffness_laplacian_and_linearity():
    m = Mesh1D(0.0, 1.0, 7)
    A = assemble_stiffness(m, spec(), 0.3, np.zeros(7))
    np.testing.assert_allclose(A.diag, 2 / m.k)
    np.testing.assert_allclose(A.lower, -1 / m.k)
    A3 = assemble_stiffness(m, spec(D=lambda x, t, u: 3.0 + 0 * x), 0.3, np.zeros(7))
    np.testing.assert_allclose(A3.to_dense(), 3 * A.to_dense())
    Ae = assemble_stiffness(m, spec(D=lambda x, t, u: np.exp(-u)), 0.3, np.zeros(7))
    np.testing.assert_allclose(Ae.to_dense(), A.to_dense())


def test_stiffness_lower_bound(rng):
    m = Mesh1D(0.0, 1.0, 15)
    sp = spec(D=lambda x, t, u: 0.5 + np.sin(5 * x) ** 2)
    A = assemble_stiffness(m, sp, 0.0, np.zeros(15))
    A1 = assemble_stiffness(m, spec(), 0.0, np.zeros(15))
    for _ in range(20):
        y = rng.standard_normal(15)
        assert y @ A.matvec(y) >= 0.5 * y @ A1.matvec(y) - 1e-12


def test_nonpositive_diffusivity_reported():
    m = Mesh1D(0.0, 1.0, 5)
    sp = spec(D=lambda x, t, u: x - 0.5)
    with pytest.raises(AssemblyError, match="not positive at x="):
        assemble_stiffness(m, sp, 0.0, np.zeros(5))
    with pytest.raises(AssemblyError):
        StepAssembler(m, sp)(0.0, np.zeros(5))


def test_load_simple_cases():
    m = Mesh1D(0.0, 1.0, 9)
    assert np.all(assemble_load(m, spec(), 0.0, np.zeros(9)) == 0)
    ones = assemble_load(m, spec(f=lambda x, t, u: np.ones_like(x)), 0.0, np.zeros(9))
    np.testing.assert_allclose(ones, m.k)


def test_load_against_adaptive_quadrature():
    m = Mesh1D(0.0, 1.0, 9)
    g = gamma(1.5)
    F = assemble_load(m, spec(f=lambda x, t, u: g * x * (1 - x)), 0.0, np.zeros(9))
    hat = lambda x, c: max(0.0, 1 - abs(x - c) / m.k)
    ref = [quad(lambda x: g * x * (1 - x) * hat(x, c), c - m.k, c + m.k, points=[c],
                epsabs=1e-14)[0] for c in m.interior]
    np.testing.assert_allclose(F, ref, rtol=1e-10)


def test_load_uses_previous_state():
    m = Mesh1D(0.0, 1.0, 4)
    U = np.array([1.0, 2.0, 3.0, 4.0])
    F = assemble_load(m, spec(f=lambda x, t, u: u), 0.0, U)
    # u linear per element, so 2-point Gauss gives the exact (u, phi) = B U
    np.testing.assert_allclose(F, assemble_mass(m).matvec(U), rtol=1e-14)


def test_step_assembler_matches_reference_assembly(rng):
    m = Mesh1D(0.0, 1.0, 20)
    sp = spec(D=lambda x, t, u: np.exp(-u) * (1 + x), f=lambda x, t, u: np.sin(x + t) * u + 1)
    U = rng.standard_normal(20)
    dmean, load = StepAssembler(m, sp)(0.7, U)
    A = assemble_stiffness(m, sp, 0.7, U)
    np.testing.assert_allclose((dmean[:-1] + dmean[1:]) / m.k, A.diag, rtol=1e-14)
    np.testing.assert_allclose(load, assemble_load(m, sp, 0.7, U), rtol=1e-13, atol=1e-15)


def test_step_assembler_accepts_scalar_coefficients():
    m = Mesh1D(0.0, 1.0, 6)
    dmean, load = StepAssembler(m, spec(D=lambda x, t, u: 2.0, f=lambda x, t, u: 1.0))(0.0, np.zeros(6))
    np.testing.assert_allclose(dmean, 2.0)
    np.testing.assert_allclose(load, m.k)


def test_solve_tridiag_cases(rng):
    I = TriDiag(np.zeros(4), np.ones(5), np.zeros(4))
    r = rng.standard_normal(5)
    np.testing.assert_array_equal(solve_tridiag(I, r), r)
    m = Mesh1D(0.0, 1.0, 50)
    A = assemble_stiffness(m, spec(), 0.0, np.zeros(50))
    x = rng.standard_normal(50)
    np.testing.assert_allclose(solve_tridiag(A, A.matvec(x)), x, rtol=1e-10)
    one = TriDiag(np.zeros(0), np.array([4.0]), np.zeros(0))
    assert solve_tridiag(one, np.array([2.0]))[0] == 0.5


def test_solve_tridiag_residual_random_spd(rng):
    for M in (2, 17, 1000, 10_000):
        off = rng.uniform(-1, 1, M - 1)
        diag = np.abs(rng.uniform(0.1, 1, M))
        diag[1:] += np.abs(off)
        diag[:-1] += np.abs(off)
        A = TriDiag(off, diag, off)
        rhs = rng.standard_normal(M)
        y = solve_tridiag(A, rhs)
        res = np.abs(A.matvec(y) - rhs).max()
        assert res <= 1e-12 * (A.norm_inf() * np.abs(y).max() + np.abs(rhs).max())


def test_solve_tridiag_singular():
    A = TriDiag(np.array([1.0]), np.array([1.0, 1.0]), np.array([1.0]))
    with pytest.raises(SingularMatrixError):
        solve_tridiag(A, np.ones(2))
    with pytest.raises(SingularMatrixError):
        solve_tridiag(TriDiag(np.zeros(0), np.zeros(1), np.zeros(0)), np.ones(1))


def test_l2_error_cases():
    m = Mesh1D(0.0, 1.0, 9)
    # piecewise linear on the mesh and zero at both ends
    hatg = lambda x: 0.5 - np.abs(x - 0.5)
    assert l2_error(m, m.nodal_interpolant(hatg), hatg) < 1e-15
    assert l2_error(m, np.zeros(9), lambda x: x * (1 - x)) == pytest.approx(1 / math.sqrt(30), rel=1e-14)


def test_l2_error_second_order():
    g = lambda x: np.sin(np.pi * x)
    errs = []
    for M in (9, 19, 39, 79):
        m = Mesh1D(0.0, 1.0, M)
        errs.append(l2_error(m, m.nodal_interpolant(g), g))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 2.0) < 0.05)


def test_l2_norm_matches_error_against_zero(rng):
    m = Mesh1D(0.0, 1.0, 13)
    U = rng.standard_normal(13)
    assert l2_norm(m, U) == pytest.approx(l2_error(m, U, lambda x: 0 * x), rel=1e-12)


def test_weak_form_consistency_second_order():
    errs = []
    for M in (19, 39, 79):
        m = Mesh1D(0.0, 1.0, M)
        A1 = assemble_stiffness(m, spec(), 0.0, np.zeros(M))
        lhs = A1.matvec(m.nodal_interpolant(lambda x: x * (1 - x)))
        rhs = assemble_load(m, spec(f=lambda x, t, u: 2.0 + 0 * x), 0.0, np.zeros(M))
        errs.append(np.abs(lhs - rhs).max() / m.k)  # scale out the hat integral
    assert errs[-1] < 1e-12 or np.all(np.diff(np.log2(errs)) <= -1.9)


def test_csv_output():
    m = Mesh1D(0.0, 1.0, 3)
    text = to_csv(m, np.array([1.0, 2.0, 3.0]))
    assert text.splitlines() == ["x,value", "0,0", "0.25,1", "0.5,2", "0.75,3", "1,0"]
    buf = io.StringIO()
    assert to_csv(m, np.zeros(3), buf) is None
    assert buf.getvalue().count("\n") == 6
