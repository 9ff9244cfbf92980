import numpy as np
import pytest
import scipy.linalg

from morphopt.splines import (SplineGrid, build_spline_space, eval_basis,
                              eval_field, gram_h1)

UNIT_BOX = ((0.0, 0.0), (1.0, 1.0))


def bspline_ref(p, u):
    """Independent Cox-de Boor evaluation for the oracle assemblies."""
    u = np.asarray(u, dtype=float)
    if p == 0:
        return ((u >= 0.0) & (u < 1.0)).astype(float)
    return (u * bspline_ref(p - 1, u)
            + (p + 1.0 - u) * bspline_ref(p - 1, u - 1.0)) / p


def bspline_ref_d(p, u):
    u = np.asarray(u, dtype=float)
    return bspline_ref(p - 1, u) - bspline_ref(p - 1, u - 1.0)


def gram_scalar_oracle(grid):
    """Dense scalar H1 Gram by brute-force per-cell Gauss quadrature.

    Assembles in 2D directly (no tensor factorization shortcut) from the
    reference recursion above, with enough points to be exact.
    """
    p, n, m = grid.degree, grid.n, grid.n - grid.degree
    gx, gw = np.polynomial.legendre.leggauss(12)
    K = np.zeros((m * m, m * m))
    for cx in range(n):
        for cy in range(n):
            tx = cx + 0.5 * (gx + 1.0)
            ty = cy + 0.5 * (gx + 1.0)
            wxy = 0.25 * grid.hx * grid.hy * np.outer(gw, gw).ravel()
            ix = np.arange(max(0, cx - p), min(m, cx + 1))
            iy = np.arange(max(0, cy - p), min(m, cy + 1))
            if not len(ix) or not len(iy):
                continue
            bx = bspline_ref(p, tx[None, :] - ix[:, None])
            by = bspline_ref(p, ty[None, :] - iy[:, None])
            dbx = bspline_ref_d(p, tx[None, :] - ix[:, None]) / grid.hx
            dby = bspline_ref_d(p, ty[None, :] - iy[:, None]) / grid.hy
            # all (i, j) pairs active on this cell, evaluated on the 12x12 grid
            val = (bx[:, None, :, None] * by[None, :, None, :])
            ddx = (dbx[:, None, :, None] * by[None, :, None, :])
            ddy = (bx[:, None, :, None] * dby[None, :, None, :])
            val = val.reshape(len(ix) * len(iy), -1)
            ddx = ddx.reshape(len(ix) * len(iy), -1)
            ddy = ddy.reshape(len(ix) * len(iy), -1)
            dofs = (ix[:, None] * m + iy[None, :]).ravel()
            local = ((ddx * wxy) @ ddx.T + (ddy * wxy) @ ddy.T
                     + (val * wxy) @ val.T)
            K[np.ix_(dofs, dofs)] += local
    return K


def test_active_counts():
    for p, scalar in ((1, 9), (2, 4), (3, 1)):
        space = build_spline_space(SplineGrid(UNIT_BOX, 4, p))
        assert space.num_scalar == scalar
        assert space.dim == 2 * scalar
        assert space.per_axis == 4 - p


def test_grid_validation():
    with pytest.raises(ValueError):
        SplineGrid(UNIT_BOX, 4, 0)
    with pytest.raises(ValueError):
        SplineGrid(UNIT_BOX, 4, 4)
    with pytest.raises(ValueError):
        SplineGrid(UNIT_BOX, 3, 3)
    with pytest.raises(ValueError):
        SplineGrid(((1.0, 0.0), (1.0, 1.0)), 4, 1)


def test_hat_peak_value():
    space = build_spline_space(SplineGrid(UNIT_BOX, 4, 1))
    for a in range(space.num_scalar):
        v, grad = eval_basis(space, a, space.anchor(a))
        assert abs(v - 1.0) < 1e-14
        np.testing.assert_allclose(grad, 0.0, atol=1e-14)


def test_quadratic_center_value():
    space = build_spline_space(SplineGrid(UNIT_BOX, 5, 2))
    v, _ = eval_basis(space, 0, space.anchor(0))
    assert abs(v - 9.0 / 16.0) < 1e-14


def test_outside_support_is_zero():
    space = build_spline_space(SplineGrid(UNIT_BOX, 5, 2))
    # anchor of basis 0 is at 3h/2; a point farther than (p+1)h/2 away in x
    x = space.anchor(0) + np.array([0.35, 0.0])
    v, grad = eval_basis(space, 0, x)
    assert v == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def test_boundary_vanishing():
    rng = np.random.default_rng(3)
    for p in (1, 2, 3):
        space = build_spline_space(SplineGrid(UNIT_BOX, 2 * p + 2, p))
        coeffs = rng.standard_normal(space.dim)
        t = np.linspace(0.0, 1.0, 17)
        edges = np.concatenate([
            np.column_stack((t, np.zeros_like(t))),
            np.column_stack((t, np.ones_like(t))),
            np.column_stack((np.zeros_like(t), t)),
            np.column_stack((np.ones_like(t), t))])
        np.testing.assert_allclose(eval_field(space, coeffs, edges), 0.0,
                                   atol=1e-13)


def test_partition_of_unity_away_from_boundary():
    rng = np.random.default_rng(4)
    for p in (1, 2, 3):
        grid = SplineGrid(UNIT_BOX, 2 * p + 3, p)
        space = build_spline_space(grid)
        # inset by p grid cells: only active functions are nonzero there
        lo, hi = p * grid.hx, 1.0 - p * grid.hx
        pts = rng.uniform(lo, hi, size=(40, 2))
        ones = np.ones(space.dim)
        np.testing.assert_allclose(eval_field(space, ones, pts), 1.0,
                                   rtol=1e-12)


def test_nonnegativity():
    rng = np.random.default_rng(5)
    for p in (1, 2, 3):
        space = build_spline_space(SplineGrid(UNIT_BOX, 2 * p + 2, p))
        pts = rng.uniform(0.0, 1.0, size=(25, 2))
        for a in range(space.num_scalar):
            for x in pts:
                v, _ = eval_basis(space, a, x)
                assert v >= 0.0


def test_gradient_continuity_across_knots():
    # degree >= 2 fields are C1: the derivative jump across a knot line
    # shrinks linearly with the probe distance
    for p in (2, 3):
        grid = SplineGrid(UNIT_BOX, 2 * p + 2, p)
        space = build_spline_space(grid)
        coeffs = np.arange(space.dim, dtype=float) / space.dim
        knot = np.array([3 * grid.hx, 0.5])
        jumps = []
        for eps in (1e-4, 1e-6):
            _, left = eval_field(space, coeffs,
                                 knot - [eps, 0.0], jacobian=True)
            _, right = eval_field(space, coeffs,
                                  knot + [eps, 0.0], jacobian=True)
            jumps.append(np.abs(right - left).max())
        assert jumps[1] < 1e-4
        assert jumps[1] < 0.05 * jumps[0] or jumps[0] < 1e-10


def test_eval_field_linearity():
    rng = np.random.default_rng(6)
    space = build_spline_space(SplineGrid(((-0.9, -0.9), (0.9, 0.9)), 6, 3))
    u = rng.standard_normal(space.dim)
    v = rng.standard_normal(space.dim)
    pts = rng.uniform(-0.9, 0.9, size=(100, 2))
    lhs = eval_field(space, 0.3 * u - 1.7 * v, pts)
    rhs = 0.3 * eval_field(space, u, pts) - 1.7 * eval_field(space, v, pts)
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_eval_field_unit_coefficient_matches_basis():
    space = build_spline_space(SplineGrid(UNIT_BOX, 5, 2))
    x = np.array([0.41, 0.57])
    for a in (0, 4, 8):
        for c in (0, 1):
            e = np.zeros(space.dim)
            e[2 * a + c] = 1.0
            v, _ = eval_basis(space, a, x)
            expect = np.zeros(2)
            expect[c] = v
            np.testing.assert_allclose(eval_field(space, e, x), expect,
                                       atol=1e-15)


def test_eval_field_jacobian_matches_fd():
    rng = np.random.default_rng(7)
    space = build_spline_space(SplineGrid(UNIT_BOX, 6, 3))
    coeffs = rng.standard_normal(space.dim)
    pts = rng.uniform(0.2, 0.8, size=(20, 2))
    _, jac = eval_field(space, coeffs, pts, jacobian=True)
    eps = 1e-5
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        fd = (eval_field(space, coeffs, pts + step)
              - eval_field(space, coeffs, pts - step)) / (2 * eps)
        np.testing.assert_allclose(jac[:, :, d], fd, atol=1e-6)


def test_eval_field_dimension_mismatch():
    space = build_spline_space(SplineGrid(UNIT_BOX, 5, 2))
    with pytest.raises(ValueError):
        eval_field(space, np.ones(space.dim + 1), np.array([0.5, 0.5]))


def test_gram_matches_bruteforce_oracle():
    for n, p in ((4, 1), (5, 2), (6, 3), (4, 2)):
        grid = SplineGrid(((-0.9, -0.9), (0.9, 0.9)), n, p)
        space = build_spline_space(grid)
        K = gram_h1(space).toarray()
        oracle = gram_scalar_oracle(grid)
        scale = np.abs(oracle).max()
        np.testing.assert_allclose(K[::2, ::2], oracle, atol=1e-6 * scale)
        np.testing.assert_allclose(K[1::2, 1::2], oracle, atol=1e-6 * scale)


def test_gram_interior_hat_against_midpoint_oracle():
    # hat centered at (2h, 2h) on a 4-cell unit grid; dense midpoint rule
    # with ~1e6 sample points over its 2h x 2h support box
    grid = SplineGrid(UNIT_BOX, 4, 1)
    space = build_spline_space(grid)
    h = grid.hx
    a = 1 * space.per_axis + 1
    k = 2 * a
    K = gram_h1(space)
    npt = 1024
    t = (np.arange(npt) + 0.5) / npt * 2 * h + h
    w = (2 * h / npt) ** 2
    hat = 1.0 - np.abs(t - 2 * h) / h
    dhat = -np.sign(t - 2 * h) / h
    vv = np.outer(hat, hat)
    gx = np.outer(dhat, hat)
    gy = np.outer(hat, dhat)
    oracle = w * (vv * vv + gx * gx + gy * gy).sum()
    assert abs(K[k, k] - oracle) <= 1e-6 * abs(oracle)
    # and the closed form: (int B'^2)(int B^2) twice plus (int B^2)^2
    exact = 2.0 * (2.0 / h) * (2.0 * h / 3.0) + (2.0 * h / 3.0) ** 2
    assert abs(K[k, k] - exact) < 1e-13


def test_gram_symmetric_positive_definite():
    for n, p in ((5, 1), (5, 2), (6, 3)):
        K = gram_h1(build_spline_space(
            SplineGrid(((-1.0, -0.5), (1.0, 0.5)), n, p))).toarray()
        np.testing.assert_allclose(K, K.T, atol=0.0)
        scipy.linalg.cholesky(K)


def test_gram_component_blocks_never_couple():
    K = gram_h1(build_spline_space(SplineGrid(UNIT_BOX, 6, 2)))
    coupling = K.toarray()[::2, 1::2]
    np.testing.assert_array_equal(coupling, 0.0)


def test_gram_disjoint_supports_give_zero():
    grid = SplineGrid(UNIT_BOX, 8, 2)
    space = build_spline_space(grid)
    K = gram_h1(space).toarray()
    m = space.per_axis
    # supports [i, i+p+1]h and [j, j+p+1]h are disjoint when |i-j| > p
    a, b = 0 * m + 0, 4 * m + 0
    assert K[2 * a, 2 * b] == 0.0
    a, b = 2 * m + 1, 2 * m + 5
    assert K[2 * a, 2 * b] == 0.0
