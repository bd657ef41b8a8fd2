import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracopt import (AdjointProblem, FracOrder, ShapeError, SpaceGrid, StateProblem, TimeMesh, caputo_left,
                     caputo_right, eigensystem, inner_q, mittag_leffler, norm_q, solve_adjoint_reversal,
                     solve_adjoint_transpose, solve_shifted, state_operator, transpose_apply)
from fracopt.cost import time_weights


def setup(alpha=0.6, N=40, grid=None, classical=False):
    grid = grid or SpaceGrid.interval(1.0, 15)
    return FracOrder(alpha, N, classical=classical), TimeMesh(1.0, N), grid


@settings(max_examples=20, deadline=None)
@given(st.sampled_from([0.2, 0.5, 0.8, 1.0]), st.integers(2, 40), st.booleans(), st.booleans(),
       st.integers(0, 2**31))
def test_transpose_identity(a, N, two_d, corrected, seed):
    g = SpaceGrid.rectangle(1.0, 1.5, 4, 5) if two_d else SpaceGrid.interval(2.0, 7)
    fo, m, g = setup(a, N, g, classical=a == 1.0)
    rng = np.random.default_rng(seed)
    u, s = rng.standard_normal((2, N + 1, g.dof))
    p = StateProblem(fo, m, g, np.zeros(g.dof), corrected=corrected)
    lhs = inner_q(state_operator(p, u).values, s, m, g)
    rhs = inner_q(u, transpose_apply(fo, m, g, s, corrected=corrected), m, g)
    assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), 1e-300)


def test_zero_source():
    fo, m, g = setup()
    ap = AdjointProblem(fo, m, g, np.zeros((41, 15)))
    assert np.all(solve_adjoint_reversal(ap).values == 0)
    assert np.all(solve_adjoint_transpose(ap).values == 0)


def test_reversal_terminal_condition_exact():
    fo, m, g = setup()
    src = np.random.default_rng(0).standard_normal((41, 15))
    assert np.all(solve_adjoint_reversal(AdjointProblem(fo, m, g, src)).values[-1] == 0.0)


@pytest.mark.parametrize("a", [0.4, 0.8])
def test_reversal_constant_mode_source(a):
    # phi_k(t) = -(T - t)^a E_{a,a+1}(-lam (T - t)^a) for L_y = v_k, up to the L1 error;
    # compared at t = 0, away from the (T - t)^a layer at the terminal time
    g = SpaceGrid.interval(1.0, 15)
    eig = eigensystem(g)
    v, lam = eig.vectors[:, 0], eig.values[0]
    errs = []
    for N in (128, 512):
        fo, m, _ = setup(a, N, g)
        phi = solve_adjoint_reversal(AdjointProblem(fo, m, g, np.tile(v, (N + 1, 1)))).values
        r = 1.0 - m.nodes
        ref = -(r**a) * mittag_leffler(a, a + 1.0, -lam * r**a)
        errs.append(abs(eig.coefficients(phi)[0, 0] - ref[0]))
    assert errs[1] < errs[0] / 3
    assert errs[1] < 1e-4 * abs(ref[0])


def test_reversal_classical_backward_heat():
    fo, m, g = setup(1.0, 30, classical=True)
    src = np.random.default_rng(1).standard_normal((31, 15))
    tau = m.tau
    phi = np.zeros((31, 15))
    for n in range(29, -1, -1):
        # backward Euler for -phi' = Delta phi - L_y, stepping from t_{n+1} to t_n
        phi[n] = solve_shifted(g, 1 / tau, phi[n + 1] / tau - src[n])
    got = solve_adjoint_reversal(AdjointProblem(fo, m, g, src)).values
    assert np.allclose(got, phi, atol=1e-12)


def test_adjoint_duality_of_operators():
    # sum (d^a z) phi - sum z (d^a_right phi) vanishes for z(0) = 0, phi(T) = 0
    fo, m, g = setup(0.6, 64)
    x = g.coordinates()[0]
    v = np.outer(np.cos(m.nodes), x * (1 - x))
    z = state_operator(StateProblem(fo, m, g, np.zeros(15)), v).values
    phi = solve_adjoint_reversal(AdjointProblem(fo, m, g, np.outer(1 + m.nodes, np.sin(math.pi * x)))).values
    w = time_weights(m)[:, None] * g.cell_volume
    lhs = np.sum(w * np.nan_to_num(caputo_left(fo, z, m)) * phi)
    rhs = np.sum(w * z * np.nan_to_num(caputo_right(fo, phi, m)))
    assert abs(lhs - rhs) <= 1e-12 * np.sum(w * np.abs(z * phi)) * fo.sigma(m.tau)


def test_reversal_transpose_gap_shrinks():
    g = SpaceGrid.interval(1.0, 31)
    x = g.coordinates()[0]
    gaps = []
    for N in (32, 64, 128, 256):
        fo, m, _ = setup(0.7, N, g)
        src = np.outer(1 + m.nodes, np.sin(math.pi * x))
        ap = AdjointProblem(fo, m, g, src)
        gaps.append(norm_q(solve_adjoint_reversal(ap).values - solve_adjoint_transpose(ap).values, m, g))
    assert np.all(np.diff(gaps) < 0)


def test_shape_errors():
    fo, m, g = setup()
    with pytest.raises(ShapeError):
        AdjointProblem(fo, m, g, np.zeros((40, 15)))
    with pytest.raises(ShapeError):
        transpose_apply(fo, m, g, np.zeros((41, 14)))
