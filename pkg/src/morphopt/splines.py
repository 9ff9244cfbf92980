"""Tensor-product B-spline vector fields on a rectangular hold-all box.

Only basis functions whose support closure lies inside the box are kept, so
every member of the space vanishes on the boundary together with its
derivatives up to the smoothness order: the space is conforming for
zero-trace H^1 fields on the box without any constraint handling.
"""

import numpy as np
import scipy.sparse as sp


class SplineGrid:
    """Uniform knot grid on a box: n cells per axis, degree p in {1, 2, 3}.

    The per-axis knot spacing is (b - a) / n, so for a non-square box the
    spacings differ between axes.
    """

    def __init__(self, box, n, degree):
        (ax, ay), (bx, by) = box
        self.xmin, self.xmax = float(ax), float(bx)
        self.ymin, self.ymax = float(ay), float(by)
        self.n = int(n)
        self.degree = int(degree)
        if self.degree not in (1, 2, 3):
            raise ValueError("degree must be 1, 2 or 3")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("empty box")
        if self.n <= self.degree:
            raise ValueError("no interior basis function: need n > p cells "
                             "per axis, got n=%d p=%d" % (self.n, self.degree))
        self.hx = (self.xmax - self.xmin) / self.n
        self.hy = (self.ymax - self.ymin) / self.n


class SplineSpace:
    """Active tensor B-spline basis over a SplineGrid.

    Scalar basis q_a(x, y) = N_i(x) N_j(y) with a = i * m + j (row-major,
    m = n - p active functions per axis).  Vector fields interleave the two
    components: coefficient 2a + c scales q_a e_c, and dim = 2 m^2.
    """

    def __init__(self, grid):
        self.grid = grid
        m = grid.n - grid.degree
        self.per_axis = m
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        self.active = np.column_stack((ii.ravel(), jj.ravel()))
        self.num_scalar = m * m
        self.dim = 2 * self.num_scalar

    def anchor(self, a):
        """Support center of scalar basis a (its maximum for odd p + 1)."""
        g = self.grid
        i, j = self.active[a]
        half = 0.5 * (g.degree + 1)
        return np.array([g.xmin + (i + half) * g.hx,
                         g.ymin + (j + half) * g.hy])


def build_spline_space(grid):
    return SplineSpace(grid)


def _cardinal(p, u):
    """Cardinal B-spline of degree p on [0, p+1], evaluated elementwise.

    The degree-0 indicator takes the value 1/2 at its two knots; values of
    degrees >= 1 are unaffected, and derivatives at knots come out as the
    average of the one-sided limits (so a hat reports slope 0 at its peak).
    """
    u = np.asarray(u, dtype=float)
    if p == 0:
        out = ((u > 0.0) & (u < 1.0)).astype(float)
        out += 0.5 * ((u == 0.0) | (u == 1.0))
        return out
    lower = _cardinal(p - 1, u)
    upper = _cardinal(p - 1, u - 1.0)
    return (u * lower + (p + 1.0 - u) * upper) / p


def _cardinal_d(p, u):
    u = np.asarray(u, dtype=float)
    return _cardinal(p - 1, u) - _cardinal(p - 1, u - 1.0)


def _axis_values(grid, axis, x):
    """Univariate active-basis candidates at points x along one axis.

    Returns (idx, val, der) of shape (len(x), p+1): for each point the p+1
    consecutive basis indices whose support may contain it, their values and
    first derivatives.  Indices outside the active range [0, n-p) appear when
    x is near the box boundary; callers mask them.
    """
    p = grid.degree
    a = grid.xmin if axis == 0 else grid.ymin
    h = grid.hx if axis == 0 else grid.hy
    x = np.asarray(x, dtype=float)
    t = (x - a) / h
    cell = np.floor(t).astype(int)
    cell = np.clip(cell, 0, grid.n - 1)
    idx = cell[:, None] - p + np.arange(p + 1)[None, :]
    u = t[:, None] - idx
    val = _cardinal(p, u)
    der = _cardinal_d(p, u) / h
    return idx, val, der


def _tensor_triplets(space, points):
    """COO data of all active scalar basis functions at the given points.

    Returns (rows, cols, val, dx, dy): point index, scalar basis index, basis
    value and gradient components.  Points outside the box produce no
    entries, which is how exterior rows of interpolation matrices end up
    identically zero.
    """
    g = space.grid
    m = space.per_axis
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ix, vx, dvx = _axis_values(g, 0, pts[:, 0])
    iy, vy, dvy = _axis_values(g, 1, pts[:, 1])
    npt, k = ix.shape
    # outer product of the per-axis candidate lists
    I = np.repeat(ix[:, :, None], k, axis=2)
    J = np.repeat(iy[:, None, :], k, axis=1)
    val = vx[:, :, None] * vy[:, None, :]
    dx = dvx[:, :, None] * vy[:, None, :]
    dy = vx[:, :, None] * dvy[:, None, :]
    rows = np.repeat(np.arange(npt), k * k)
    I, J = I.ravel(), J.ravel()
    keep = (I >= 0) & (I < m) & (J >= 0) & (J < m)
    cols = I * m + J
    return (rows[keep], cols[keep], val.ravel()[keep],
            dx.ravel()[keep], dy.ravel()[keep])


def eval_basis(space, a, x):
    """Value and gradient of scalar basis a at a single point."""
    rows, cols, val, dx, dy = _tensor_triplets(space, np.asarray(x)[None, :])
    v = 0.0
    grad = np.zeros(2)
    for c, vv, gx, gy in zip(cols, val, dx, dy):
        if c == a:
            v = vv
            grad[:] = (gx, gy)
    return v, grad


def eval_field(space, coeffs, points, jacobian=False):
    """Evaluate the vector spline field at points.

    coeffs : (2 * num_scalar,) interleaved coefficients.
    Returns (npt, 2) values, and (npt, 2, 2) Jacobians d field_r / d x_s when
    requested.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rows, cols, val, dx, dy = _tensor_triplets(space, pts)
    cf = np.asarray(coeffs, dtype=float).reshape(space.num_scalar, 2)
    out = np.zeros((len(pts), 2))
    np.add.at(out, rows, val[:, None] * cf[cols])
    if not jacobian:
        return out if np.ndim(points) == 2 else out[0]
    jac = np.zeros((len(pts), 2, 2))
    np.add.at(jac[:, :, 0], rows, dx[:, None] * cf[cols])
    np.add.at(jac[:, :, 1], rows, dy[:, None] * cf[cols])
    if np.ndim(points) == 2:
        return out, jac
    return out[0], jac[0]


def _axis_matrices(grid, axis):
    """Univariate active-basis mass and stiffness by per-cell Gauss rules.

    A (p+1)-point rule per knot interval integrates the degree-2p products
    exactly, so the returned matrices are the exact integrals.
    """
    p = grid.degree
    m = grid.n - p
    h = grid.hx if axis == 0 else grid.hy
    gauss_x, gauss_w = np.polynomial.legendre.leggauss(p + 1)
    M = np.zeros((m, m))
    A = np.zeros((m, m))
    for cell in range(grid.n):
        # local coordinates of the quadrature points in this interval
        t = cell + 0.5 * (gauss_x + 1.0)
        w = 0.5 * h * gauss_w
        idx = np.arange(cell - p, cell + 1)
        keep = (idx >= 0) & (idx < m)
        idx = idx[keep]
        u = t[None, :] - idx[:, None]
        val = _cardinal(p, u)
        der = _cardinal_d(p, u) / h
        M[np.ix_(idx, idx)] += (val * w) @ val.T
        A[np.ix_(idx, idx)] += (der * w) @ der.T
    return M, A


def gram_h1(space):
    """H^1 Gram matrix of the vector basis, CSR, symmetric positive definite.

    K[k, l] = integral over the box of grad q_k : grad q_l + q_k . q_l.
    Components never couple, so K is the scalar Gram expanded blockwise onto
    the interleaved layout.
    """
    g = space.grid
    Mx, Ax = (sp.csr_matrix(m) for m in _axis_matrices(g, 0))
    My, Ay = (sp.csr_matrix(m) for m in _axis_matrices(g, 1))
    G = sp.kron(Ax, My) + sp.kron(Mx, Ay) + sp.kron(Mx, My)
    K = sp.kron(G, sp.eye(2), format="csr")
    return K
