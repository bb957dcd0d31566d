import numpy as np
import pytest
from scipy import integrate

from mlqs.fem import (
    GridSpec,
    assemble_mass,
    assemble_stiffness,
    control_problem_data,
    desired_state,
    dirichlet_data_laplace,
    integral,
    interior_indices,
    load_vector,
    q1_element_assembly,
    stiffness_blocks,
)
from mlqs.saddle import laplace_reference


def test_grid_validation():
    assert GridSpec(3).h == 0.25
    assert GridSpec.from_unknowns(4096).n == 64
    with pytest.raises(ValueError):
        GridSpec(1)
    with pytest.raises(ValueError):
        GridSpec.from_unknowns(1000)


def test_stencil_blocks_n3():
    A, B = stiffness_blocks(3)
    np.testing.assert_allclose(A, np.array([[-8, 1, 0], [1, -8, 1], [0, 1, -8]]) / 3)
    np.testing.assert_allclose(B, np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]]) / 3)


def test_interior_row_sums_vanish():
    K = assemble_stiffness(GridSpec(6)).to_dense()
    rows = K.sum(axis=1).reshape(6, 6)
    np.testing.assert_allclose(rows[1:-1, 1:-1], 0.0, atol=1e-14)


def test_mass_small_case():
    M = assemble_mass(GridSpec(2)).to_dense()
    assert M.shape == (4, 4)
    assert M[0, 0] == pytest.approx(16 / 36)
    ones = assemble_mass(GridSpec(6)).to_dense() @ np.ones(36)
    np.testing.assert_allclose(ones.reshape(6, 6)[1:-1, 1:-1], 1.0)


@pytest.mark.parametrize("n", [2, 5, 8, 16])
def test_symmetry_and_definiteness(n):
    g = GridSpec(n)
    K, M = assemble_stiffness(g).to_dense(), assemble_mass(g).to_dense()
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0


@pytest.mark.parametrize("n", [3, 5, 8])
def test_against_element_assembly(n):
    """The stencil matrices equal -stiffness and mass / h^2 of the Q1 element assembly."""
    g = GridSpec(n)
    Kf, Mf = q1_element_assembly(n)
    I = interior_indices(n)
    np.testing.assert_allclose(assemble_stiffness(g).to_dense(), -Kf[np.ix_(I, I)], atol=1e-14)
    np.testing.assert_allclose(assemble_mass(g).to_dense() * g.h ** 2, Mf[np.ix_(I, I)], atol=1e-16)


def test_lift_equals_boundary_coupling():
    n = 6
    g = GridSpec(n)
    Kf, _ = q1_element_assembly(n)
    m = n + 2
    t = np.arange(m) / (n + 1)
    ub = np.zeros(m * m)
    for i in range(m):
        for j in range(m):
            if i == 0:
                ub[i * m + j] = np.sin(2 * np.pi * t[j])
            elif i == m - 1:
                ub[i * m + j] = -np.sin(2 * np.pi * t[j])
    I = interior_indices(n)
    Bn = np.setdiff1d(np.arange(m * m), I)
    np.testing.assert_allclose(dirichlet_data_laplace(g), Kf[np.ix_(I, Bn)] @ ub[Bn], atol=1e-14)


def test_lift_structure():
    n = 7
    d = dirichlet_data_laplace(GridSpec(n)).reshape(n, n)
    np.testing.assert_array_equal(d[1:-1, 1:-1], 0.0)
    np.testing.assert_allclose(d[::-1, :], -d, atol=1e-14)
    h = 1 / (n + 1)
    y = h * np.arange(1, n + 1)
    # middle rows see three left neighbours: sin at y-h, y, y+h
    expected = -(np.sin(2 * np.pi * (y - h)) + np.sin(2 * np.pi * y) + np.sin(2 * np.pi * (y + h))) / 3
    np.testing.assert_allclose(d[0, 1:-1], expected[1:-1], atol=1e-14)


def test_desired_state_values():
    assert desired_state(0.0, 0.0) == 1.0
    assert desired_state(0.5, 0.5) == 0.0
    assert desired_state(0.75, 0.75) == 0.0


def test_load_vector_support_and_integral():
    n = 15
    g = GridSpec(n)
    b = load_vector(g, desired_state).reshape(n, n)
    h = g.h
    x = h * np.arange(1, n + 1)
    far = (x[:, None] - h >= 0.5) | (x[None, :] - h >= 0.5)
    assert np.all(b[far] == 0.0)
    one = load_vector(g, lambda X, Y: np.ones_like(X))
    np.testing.assert_allclose(one.reshape(n, n)[2:-2, 2:-2], h * h)


def test_cost_constant_converges():
    exact = integrate.quad(lambda t: (2 * t - 1) ** 4, 0, 0.5)[0] ** 2 / 2
    assert exact == pytest.approx(1 / 200)
    errs = [abs(0.5 * integral(GridSpec(n), lambda x, y: desired_state(x, y) ** 2) - exact) for n in (7, 15, 31)]
    assert errs[-1] < 1e-6
    assert errs[0] >= errs[1] >= errs[2]


def test_control_data_fields():
    g = GridSpec(7)
    data = control_problem_data(g, 1e-2)
    assert data.c == pytest.approx(1 / 200, rel=1e-3)
    assert data.b.shape == (49,) and data.d.shape == (49,)
    assert np.any(data.d != 0)
    with pytest.raises(ValueError):
        control_problem_data(g, 0.0)


def test_laplace_solution_converges():
    ref_n = 127
    ref = laplace_reference(ref_n).reshape(ref_n, ref_n)
    errs = []
    for n in (7, 15, 31):
        u = laplace_reference(n).reshape(n, n)
        step = (ref_n + 1) // (n + 1)
        sub = ref[step - 1::step, step - 1::step]
        errs.append(np.linalg.norm(u - sub) / np.linalg.norm(sub))
    assert errs[0] > errs[1] > errs[2]
