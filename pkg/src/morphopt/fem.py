"""Lagrangian P1/P2 finite elements on deformed triangle meshes.

The geometry of every cell is itself a finite element field: a vector
Lagrangian space holds dof positions, and the map from the reference triangle
is the linear combination of reference basis functions with those positions.
All integrals are pulled back to the reference triangle and evaluated with a
fixed symmetric quadrature rule, so integrals of discrete fields depend
smoothly (polynomially per cell) on the geometry coefficients.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeshError


class SolveError(RuntimeError):
    pass


class InvertedElementError(MeshError):
    def __init__(self, cell, det):
        super().__init__("inverted element %d (det %g)" % (cell, det))
        self.cell = cell
        self.det = det


# ---------------------------------------------------------------------------
# quadrature

class QuadratureRule:
    """Symmetric rule on the reference triangle, barycentric points.

    Weights sum to the reference area 1/2.
    """

    def __init__(self, degree, bary, weights):
        self.degree = degree
        self.bary = np.asarray(bary, dtype=float)
        w = np.asarray(weights, dtype=float)
        self.weights = w * (0.5 / w.sum())

    @property
    def npoints(self):
        return len(self.weights)

    @property
    def points(self):
        """Reference coordinates (x, y) = (lambda_1, lambda_2)."""
        return self.bary[:, 1:].copy()


def _perm3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _perm6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _build_rules():
    rules = {}
    rules[1] = QuadratureRule(1, [(1 / 3, 1 / 3, 1 / 3)], [1.0])
    rules[2] = QuadratureRule(2, _perm3(2 / 3, 1 / 6), [1 / 3] * 3)
    pts = (_perm3(0.108103018168070, 0.445948490915965)
           + _perm3(0.816847572980459, 0.091576213509771))
    w = [0.223381589678011] * 3 + [0.109951743655322] * 3
    rules[4] = QuadratureRule(4, pts, w)
    pts = (_perm3(0.873821971016996, 0.063089014491502)
           + _perm3(0.501426509658179, 0.249286745170910)
           + _perm6(0.636502499121399, 0.310352451033785, 0.053145049844816))
    w = ([0.050844906370207] * 3 + [0.116786275726379] * 3
         + [0.082851075618374] * 6)
    rules[6] = QuadratureRule(6, pts, w)
    return rules


_RULES = _build_rules()


def quadrature_rule(exactness):
    """Smallest stored rule integrating polynomials of the given degree."""
    for d in sorted(_RULES):
        if d >= exactness:
            return _RULES[d]
    raise ValueError("no quadrature rule of exactness %d" % exactness)


# ---------------------------------------------------------------------------
# reference bases

def reference_basis(degree, bary):
    """Values and reference gradients of the local basis at one point.

    bary : barycentric coordinates (l0, l1, l2).
    Returns (values (nloc,), gradients (nloc, 2)) with gradients taken with
    respect to the reference coordinates (x, y) = (l1, l2).
    """
    l0, l1, l2 = bary
    if degree == 1:
        vals = np.array([l0, l1, l2])
        grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        return vals, grads
    if degree == 2:
        vals = np.array([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1),
                         l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2,
                         4 * l2 * l0])
        g0 = np.array([-1.0, -1.0])
        g1 = np.array([1.0, 0.0])
        g2 = np.array([0.0, 1.0])
        grads = np.array([(4 * l0 - 1) * g0, (4 * l1 - 1) * g1,
                          (4 * l2 - 1) * g2, 4 * (l1 * g0 + l0 * g1),
                          4 * (l2 * g1 + l1 * g2), 4 * (l0 * g2 + l2 * g0)])
        return vals, grads
    raise ValueError("unsupported element degree %d" % degree)


def _tabulate(degree, rule):
    """Basis values (nq, nloc) and gradients (nq, nloc, 2) at rule points."""
    vals = []
    grads = []
    for b in rule.bary:
        v, g = reference_basis(degree, b)
        vals.append(v)
        grads.append(g)
    return np.array(vals), np.array(grads)


_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))
_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


# ---------------------------------------------------------------------------
# spaces

class FeSpace:
    """Scalar or 2-vector Lagrangian space of degree 1 or 2 on a TriMesh.

    Scalar dofs are vertex values (P1) plus edge midpoint values (P2), in
    that order.  Vector spaces interleave components: global dof 2i + c is
    component c of scalar dof i.
    """

    def __init__(self, mesh, degree, components=1):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        self.components = components

        V = mesh.num_nodes
        if degree == 1:
            self.ndof_scalar = V
            self.dof_coords = mesh.nodes.copy()
            self.cell_dofs = mesh.cells.copy()
            self._edge_ids = None
        else:
            edge_ids = {}
            cell_dofs = np.empty((mesh.num_cells, 6), dtype=np.int64)
            cell_dofs[:, :3] = mesh.cells
            for k, tri in enumerate(mesh.cells):
                for e, (i, j) in enumerate(_LOCAL_EDGES):
                    a, b = tri[i], tri[j]
                    key = (a, b) if a < b else (b, a)
                    if key not in edge_ids:
                        edge_ids[key] = V + len(edge_ids)
                    cell_dofs[k, 3 + e] = edge_ids[key]
            self.ndof_scalar = V + len(edge_ids)
            coords = np.empty((self.ndof_scalar, 2))
            coords[:V] = mesh.nodes
            for (a, b), d in edge_ids.items():
                coords[d] = 0.5 * (mesh.nodes[a] + mesh.nodes[b])
            self.dof_coords = coords
            self.cell_dofs = cell_dofs
            self._edge_ids = edge_ids

        self.num_dofs = components * self.ndof_scalar
        self._boundary_cache = {}
        self._edge_location = None

    def boundary_scalar_dofs(self, tag):
        """Sorted scalar dof indices on the boundary edges carrying tag."""
        if tag not in self._boundary_cache:
            dofs = set()
            for (a, b), t in zip(self.mesh.boundary_edges,
                                 self.mesh.boundary_tags):
                if t != tag:
                    continue
                dofs.add(int(a))
                dofs.add(int(b))
                if self.degree == 2:
                    key = (a, b) if a < b else (b, a)
                    dofs.add(self._edge_ids[key])
            self._boundary_cache[tag] = np.array(sorted(dofs), dtype=np.int64)
        return self._boundary_cache[tag]

    def global_dofs(self, scalar_dofs):
        """Expand scalar dof ids to all their component dofs."""
        s = np.asarray(scalar_dofs, dtype=np.int64)
        if self.components == 1:
            return s
        return np.column_stack((2 * s, 2 * s + 1)).ravel()

    def cell_global_dofs(self):
        cd = self.cell_dofs
        if self.components == 1:
            return cd
        out = np.empty((cd.shape[0], 2 * cd.shape[1]), dtype=np.int64)
        out[:, 0::2] = 2 * cd
        out[:, 1::2] = 2 * cd + 1
        return out

    def boundary_edge_locations(self, tag):
        """(cell, local edge, reversed) for every boundary edge of a tag."""
        if self._edge_location is None:
            loc = {}
            for k, tri in enumerate(self.mesh.cells):
                for e, (i, j) in enumerate(_LOCAL_EDGES):
                    a, b = int(tri[i]), int(tri[j])
                    key = (a, b) if a < b else (b, a)
                    loc.setdefault(key, (k, e, a > b))
            self._edge_location = loc
        out = []
        for (a, b), t in zip(self.mesh.boundary_edges, self.mesh.boundary_tags):
            if t != tag:
                continue
            a, b = int(a), int(b)
            key = (a, b) if a < b else (b, a)
            cell, e, stored_rev = self._edge_location[key]
            out.append((cell, e))
        return out


def dof_transfer(geo_space, state_space):
    """Sparse map from geometry scalar dofs to state scalar dofs.

    Applying it to geometry coefficients gives the deformed positions of the
    state space's dof sites.  Degrees may differ; both spaces must share the
    mesh.
    """
    if geo_space.mesh is not state_space.mesh:
        raise ValueError("spaces live on different meshes")
    V = geo_space.mesh.num_nodes
    ns, ng = state_space.ndof_scalar, geo_space.ndof_scalar
    if geo_space.degree == state_space.degree:
        return sp.identity(ns, format="csr")
    rows, cols, vals = [], [], []
    for v in range(V):
        rows.append(v)
        cols.append(v)
        vals.append(1.0)
    if state_space.degree == 2 and geo_space.degree == 1:
        for (a, b), d in state_space._edge_ids.items():
            rows.extend((d, d))
            cols.extend((a, b))
            vals.extend((0.5, 0.5))
    # geometry P2 onto state P1 just restricts to the shared vertex dofs
    return sp.csr_matrix((vals, (rows, cols)), shape=(ns, ng))


def deformed_dof_coords(space, deformation):
    """Positions of a space's scalar dof sites under the deformation."""
    T = dof_transfer(deformation.space, space)
    f = deformation.f.reshape(-1, 2)
    return T @ f


# ---------------------------------------------------------------------------
# geometry batches

class CellBatch:
    """Geometry data of all cells at the points of one quadrature rule.

    Attributes: rule; pts (C, nq, 2) deformed positions; jac (C, nq, 2, 2);
    det (C, nq); invJT (C, nq, 2, 2) inverse-transpose Jacobians.
    """

    __slots__ = ("rule", "pts", "jac", "det", "invJT")


def cell_batch(deformation, rule, check=True):
    space = deformation.space
    vals, grads = _tabulate(space.degree, rule)
    coeff = deformation.f.reshape(-1, 2)[space.cell_dofs]  # (C, nloc, 2)
    batch = CellBatch()
    batch.rule = rule
    batch.pts = np.einsum("qi,cir->cqr", vals, coeff)
    jac = np.einsum("cir,qid->cqrd", coeff, grads)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if check and np.any(det <= 0.0):
        c = int(np.argwhere(np.min(det, axis=1) <= 0.0)[0, 0])
        raise InvertedElementError(c, float(np.min(det[c])))
    batch.jac = jac
    batch.det = det
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv[..., 0, 1] = -jac[..., 1, 0]
    inv[..., 1, 0] = -jac[..., 0, 1]
    batch.invJT = inv / det[..., None, None]
    return batch


def physical_gradients(space, batch):
    """Deformed-configuration basis gradients, (C, nq, nloc, 2)."""
    _, grads = _tabulate(space.degree, batch.rule)
    return np.einsum("cqdr,qir->cqid", batch.invJT, grads)


def basis_values(space, rule):
    vals, _ = _tabulate(space.degree, rule)
    return vals


def physical_geometry(space, deformation, cell, bary):
    """Deformed point, geometry Jacobian and its determinant at one point.

    space is the geometry space of the deformation; raises
    InvertedElementError carrying the cell index when the determinant is not
    positive.
    """
    vals, grads = reference_basis(deformation.space.degree, bary)
    coeff = deformation.f.reshape(-1, 2)[deformation.space.cell_dofs[cell]]
    pt = vals @ coeff
    jac = coeff.T @ grads
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0.0:
        raise InvertedElementError(cell, det)
    return pt, jac, det


def field_values(space, coeffs, batch, gradients=False):
    """Evaluate a discrete field at the batch points.

    Scalar spaces return (C, nq) values and (C, nq, 2) gradients; vector
    spaces return (C, nq, 2) and (C, nq, 2, 2) with grad[r, d] the derivative
    of component r in deformed direction d.
    """
    vals = basis_values(space, batch.rule)
    if space.components == 1:
        loc = np.asarray(coeffs)[space.cell_dofs]
        out = np.einsum("qi,ci->cq", vals, loc)
        if not gradients:
            return out
        pg = physical_gradients(space, batch)
        return out, np.einsum("cqid,ci->cqd", pg, loc)
    loc = np.asarray(coeffs).reshape(-1, 2)[space.cell_dofs]
    out = np.einsum("qi,cir->cqr", vals, loc)
    if not gradients:
        return out
    pg = physical_gradients(space, batch)
    return out, np.einsum("cqid,cir->cqrd", pg, loc)


# ---------------------------------------------------------------------------
# assembly

def _scatter_matrix(rows_dofs, cols_dofs, local, shape):
    nr, nc = local.shape[1], local.shape[2]
    rows = np.repeat(rows_dofs, nc, axis=1).ravel()
    cols = np.tile(cols_dofs, (1, nr)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape)
    return A.tocsr()


def _vector_expand(K):
    return sp.kron(K, sp.identity(2), format="csr")


def default_rule(space):
    return quadrature_rule(2 * space.degree + 2)


def assemble_laplace(space, deformation, rule=None, batch=None):
    rule = rule or default_rule(space)
    batch = batch or cell_batch(deformation, rule)
    pg = physical_gradients(space, batch)
    w = rule.weights
    local = np.einsum("q,cq,cqid,cqjd->cij", w, batch.det, pg, pg,
                      optimize=True)
    n = space.ndof_scalar
    K = _scatter_matrix(space.cell_dofs, space.cell_dofs, local, (n, n))
    return _vector_expand(K) if space.components == 2 else K


def assemble_mass(space, deformation, rule=None, batch=None):
    rule = rule or default_rule(space)
    batch = batch or cell_batch(deformation, rule)
    vals = basis_values(space, rule)
    local = np.einsum("q,cq,qi,qj->cij", rule.weights, batch.det, vals, vals,
                      optimize=True)
    n = space.ndof_scalar
    K = _scatter_matrix(space.cell_dofs, space.cell_dofs, local, (n, n))
    return _vector_expand(K) if space.components == 2 else K


def assemble_elasticity(space, deformation, lam, mu, rule=None, batch=None):
    """Linear elasticity bilinear form for a 2-vector space.

    Integrand (2 mu e(u) : e(v) + lam div u div v) on the deformed
    configuration.
    """
    if space.components != 2:
        raise ValueError("elasticity needs a vector space")
    rule = rule or default_rule(space)
    batch = batch or cell_batch(deformation, rule)
    pg = physical_gradients(space, batch)
    w = rule.weights
    dot = np.einsum("q,cq,cqid,cqjd->cij", w, batch.det, pg, pg,
                    optimize=True)
    G2 = np.einsum("q,cq,cqia,cqjb->ciajb", w, batch.det, pg, pg,
                   optimize=True)
    nloc = pg.shape[2]
    eye = np.eye(2)
    LB = (mu * (dot[:, :, None, :, None] * eye[None, None, :, None, :]
                + np.transpose(G2, (0, 1, 4, 3, 2)))
          + lam * G2)
    local = LB.reshape(LB.shape[0], 2 * nloc, 2 * nloc)
    vd = space.cell_global_dofs()
    n = space.num_dofs
    return _scatter_matrix(vd, vd, local, (n, n))


def assemble_divergence(vel_space, pre_space, deformation, rule=None,
                        batch=None):
    """Mixed form B[j, (i,c)] = integral of q_j d(u_i e_c)_c."""
    rule = rule or default_rule(vel_space)
    batch = batch or cell_batch(deformation, rule)
    pg = physical_gradients(vel_space, batch)
    pv = basis_values(pre_space, rule)
    local = np.einsum("q,cq,qj,cqid->cjid", rule.weights, batch.det, pv, pg,
                      optimize=True)
    C, nj, ni, _ = local.shape
    local = local.reshape(C, nj, 2 * ni)
    rows = pre_space.cell_dofs
    cols = vel_space.cell_global_dofs()
    return _scatter_matrix(rows, cols, local,
                           (pre_space.ndof_scalar, vel_space.num_dofs))


def assemble_load(space, deformation, f, rule=None, batch=None):
    """Right-hand side for a volume load f (constant or callable on points)."""
    rule = rule or default_rule(space)
    batch = batch or cell_batch(deformation, rule)
    vals = basis_values(space, rule)
    if callable(f):
        fv = f(batch.pts)
    else:
        f = np.asarray(f, dtype=float)
        shape = (batch.pts.shape[0], batch.pts.shape[1])
        fv = np.broadcast_to(f, shape + f.shape).reshape(
            shape + (() if f.ndim == 0 else (2,)))
    out = np.zeros(space.num_dofs)
    if space.components == 1:
        local = np.einsum("q,cq,cq,qi->ci", rule.weights, batch.det, fv, vals)
        np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    else:
        local = np.einsum("q,cq,cqr,qi->cir", rule.weights, batch.det, fv,
                          vals)
        np.add.at(out, space.cell_global_dofs().ravel(),
                  local.reshape(local.shape[0], -1).ravel())
    return out


_GAUSS3 = np.polynomial.legendre.leggauss(3)


def assemble_boundary_load(space, deformation, tag, g):
    """Right-hand side for a traction g on the deformed edges of a tag.

    Uses a 3-point Gauss rule along each edge; g is constant or a callable
    on deformed points returning (..., components).
    """
    gx, gw = _GAUSS3
    t = 0.5 * (gx + 1.0)
    wt = 0.5 * gw
    geo = deformation.space
    fcoef = deformation.f.reshape(-1, 2)
    out = np.zeros(space.num_dofs)
    for cell, e in space.boundary_edge_locations(tag):
        i, j = _LOCAL_EDGES[e]
        A, B = _REF_VERTS[i], _REF_VERTS[j]
        ref_pts = A[None, :] + t[:, None] * (B - A)[None, :]
        gl = fcoef[geo.cell_dofs[cell]]
        sl = space.cell_dofs[cell]
        for k in range(len(t)):
            bary = (1.0 - ref_pts[k, 0] - ref_pts[k, 1], ref_pts[k, 0],
                    ref_pts[k, 1])
            gv, gg = reference_basis(geo.degree, bary)
            sv, _ = reference_basis(space.degree, bary)
            pt = gv @ gl
            jac = gl.T @ gg
            tang = jac @ (B - A)
            ds = np.hypot(tang[0], tang[1])
            gval = np.asarray(g(pt) if callable(g) else g, dtype=float)
            if space.components == 1:
                out[sl] += wt[k] * ds * gval * sv
            else:
                out[2 * sl] += wt[k] * ds * gval[0] * sv
                out[2 * sl + 1] += wt[k] * ds * gval[1] * sv
    return out


def assemble(form, spaces, deformation, **params):
    """Dispatch by form name: laplace, mass, elasticity, stokes, load,
    boundary_load."""
    if form == "laplace":
        return assemble_laplace(spaces, deformation, **params)
    if form == "mass":
        return assemble_mass(spaces, deformation, **params)
    if form == "elasticity":
        return assemble_elasticity(spaces, deformation, **params)
    if form == "stokes":
        vel, pre = spaces
        return assemble_stokes(vel, pre, deformation, **params)
    if form == "load":
        return assemble_load(spaces, deformation, **params)
    if form == "boundary_load":
        return assemble_boundary_load(spaces, deformation, **params)
    raise ValueError("unknown form %r" % form)


def assemble_stokes(vel_space, pre_space, deformation, rule=None):
    """Symmetric saddle system for creeping flow with zero-mean pressure.

    Unknowns are (u, pneg, lam) where pneg is the negated pressure; the
    zero-mean constraint is appended as one dense row and column.  Returns a
    LinearSystem of size 2 Nv + Np + 1.
    """
    rule = rule or default_rule(vel_space)
    batch = cell_batch(deformation, rule)
    A = assemble_laplace(vel_space, deformation, rule=rule, batch=batch)
    B = assemble_divergence(vel_space, pre_space, deformation, rule=rule,
                            batch=batch)
    m = assemble_load(pre_space, deformation, 1.0, rule=rule, batch=batch)
    nu, npre = vel_space.num_dofs, pre_space.ndof_scalar
    mcol = sp.csr_matrix(m[:, None])
    Z = sp.csr_matrix((nu, 1))
    S = sp.bmat([[A, B.T, Z],
                 [B, None, mcol],
                 [Z.T, mcol.T, None]], format="csr")
    return LinearSystem(S, np.zeros(nu + npre + 1))


# ---------------------------------------------------------------------------
# constrained linear systems

class LinearSystem:
    """Sparse symmetric system with eliminated Dirichlet dofs.

    Elimination is symmetric: constrained rows and columns are removed, the
    known values are moved to the right-hand side, and the solution vector is
    reassembled at full length.
    """

    def __init__(self, A, b):
        self.A = A.tocsr()
        self.b = np.asarray(b, dtype=float)
        n = self.A.shape[0]
        self.fixed = np.zeros(n, dtype=bool)
        self.values = np.zeros(n)

    def set_dirichlet(self, dofs, values):
        dofs = np.asarray(dofs, dtype=np.int64)
        self.fixed[dofs] = True
        self.values[dofs] = values

    def solve(self):
        return solve(self)


def apply_dirichlet(system, space, deformation, tag, value, offset=0):
    """Constrain the dofs on a boundary tag to a value.

    value is a constant or a callable evaluated at the dof positions in the
    deformed configuration; vector spaces expect (..., 2) values.  offset
    shifts the space's dofs inside a larger block system.
    """
    sdofs = space.boundary_scalar_dofs(tag)
    if sdofs.size == 0:
        raise MeshError("no boundary edges tagged %r" % tag)
    if callable(value):
        pts = deformed_dof_coords(space, deformation)[sdofs]
        vals = np.asarray(value(pts), dtype=float)
    else:
        vals = np.broadcast_to(
            np.asarray(value, dtype=float),
            (len(sdofs),) if space.components == 1 else (len(sdofs), 2))
    if space.components == 1:
        system.set_dirichlet(sdofs + offset, vals)
    else:
        system.set_dirichlet(2 * sdofs + offset, vals[:, 0])
        system.set_dirichlet(2 * sdofs + 1 + offset, vals[:, 1])
    return system


def solve(system, rtol=1e-10):
    """Direct sparse solve of a LinearSystem with a residual guarantee.

    Raises SolveError when factorization fails (e.g. a pure Neumann operator
    without a constraint makes the matrix singular) or the relative residual
    of the reduced system exceeds rtol.
    """
    free = ~system.fixed
    x = np.zeros(system.A.shape[0])
    x[system.fixed] = system.values[system.fixed]
    Af = system.A[free][:, free].tocsc()
    rhs = system.b[free]
    if np.any(system.fixed):
        rhs = rhs - system.A[free][:, system.fixed] @ x[system.fixed]
    if Af.shape[0]:
        try:
            xf = spla.splu(Af).solve(rhs)
        except RuntimeError as err:
            raise SolveError(
                "sparse factorization failed (%s); the system may be "
                "singular, e.g. pure Neumann data without a zero-mean "
                "constraint" % err) from err
        if not np.all(np.isfinite(xf)):
            raise SolveError("solver produced non-finite values; the system "
                             "may be singular")
        nrm = np.linalg.norm(rhs)
        res = np.linalg.norm(Af @ xf - rhs)
        if res > rtol * max(nrm, 1e-300):
            raise SolveError("relative residual %.3e exceeds %.1e"
                             % (res / max(nrm, 1e-300), rtol))
        x[free] = xf
    return x


def solve_cg(system, rtol=1e-10, maxiter=20000):
    """Conjugate gradients with Jacobi scaling, same residual contract."""
    free = ~system.fixed
    x = np.zeros(system.A.shape[0])
    x[system.fixed] = system.values[system.fixed]
    Af = system.A[free][:, free].tocsr()
    rhs = system.b[free]
    if np.any(system.fixed):
        rhs = rhs - system.A[free][:, system.fixed] @ x[system.fixed]
    d = Af.diagonal()
    if np.any(d <= 0.0):
        raise SolveError("non-positive diagonal; matrix is not SPD")
    M = sp.diags(1.0 / d)
    xf, info = spla.cg(Af, rhs, rtol=rtol * 1e-2, atol=0.0, M=M,
                       maxiter=maxiter)
    if info != 0:
        raise SolveError("conjugate gradients did not converge (info=%d)"
                         % info)
    nrm = np.linalg.norm(rhs)
    if np.linalg.norm(Af @ xf - rhs) > rtol * max(nrm, 1e-300):
        raise SolveError("cg residual above %.1e" % rtol)
    x[free] = xf
    return x
