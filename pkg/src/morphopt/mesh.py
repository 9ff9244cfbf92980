"""Triangle meshes with tagged boundaries, generators, refinement and I/O.

Meshes are plain vertex/cell arrays.  A mesh never moves: deformed
configurations are represented elsewhere by coefficient vectors of a geometry
finite element space, so the arrays here always describe the reference
(initial, polygonal) configuration.
"""

import io

import numpy as np


class MeshError(ValueError):
    pass


class MshParseError(MeshError):
    """Raised on malformed mesh files; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class Circle:
    """Analytic circular boundary used for snapping and dof projection."""

    def __init__(self, center, radius):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0.0:
            raise MeshError("circle radius must be positive")

    def project(self, points):
        """Radially project points onto the circle.

        Raises MeshError if a point coincides with the center, where the
        projection direction is undefined.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - self.center
        r = np.hypot(d[:, 0], d[:, 1])
        if np.any(r < 1e-14 * max(1.0, self.radius)):
            raise MeshError("cannot project a point at the circle center")
        out = self.center + d * (self.radius / r)[:, None]
        return out.reshape(np.shape(points))


class AffineCellMap:
    """Affine reference-to-cell map x = B xhat + b with det = det(B)."""

    __slots__ = ("B", "b", "det")

    def __init__(self, B, b):
        self.B = B
        self.b = b
        self.det = B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]

    def apply(self, xhat):
        return np.asarray(xhat, dtype=float) @ self.B.T + self.b

    def apply_inverse(self, x):
        d = np.asarray(x, dtype=float) - self.b
        inv = np.array([[self.B[1, 1], -self.B[0, 1]],
                        [-self.B[1, 0], self.B[0, 0]]]) / self.det
        return d @ inv.T


class TriMesh:
    """Conforming triangle mesh with tagged boundary edges.

    Parameters
    ----------
    nodes : (V, 2) float array
    cells : (C, 3) int array
        Vertex indices; cells are reoriented counterclockwise on construction.
    boundary_edges : (B, 2) int array
        Vertex index pairs lying on the boundary.
    boundary_tags : sequence of str, length B

    Every boundary edge of the triangulation must appear exactly once in
    ``boundary_edges`` and carry exactly one tag, so the tags partition the
    whole boundary.
    """

    def __init__(self, nodes, cells, boundary_edges, boundary_tags,
                 validate=True):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be a (V, 2) array")
        if cells.ndim != 2 or cells.shape[1] != 3:
            raise MeshError("cells must be a (C, 3) array")
        # enforce counterclockwise orientation
        p = self.nodes
        e1 = p[cells[:, 1]] - p[cells[:, 0]]
        e2 = p[cells[:, 2]] - p[cells[:, 0]]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        flip = det < 0.0
        if np.any(flip):
            cells = cells.copy()
            cells[flip, 1], cells[flip, 2] = (cells[flip, 2].copy(),
                                              cells[flip, 1].copy())
            det = np.abs(det)
        self.cells = cells
        self.boundary_edges = np.ascontiguousarray(boundary_edges,
                                                   dtype=np.int64)
        if self.boundary_edges.size == 0:
            self.boundary_edges = self.boundary_edges.reshape(0, 2)
        self.boundary_tags = np.asarray([str(t) for t in boundary_tags])
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")
        if validate:
            self._validate(det)

    def _validate(self, signed_areas_x2):
        scale = np.max(np.abs(self.nodes)) if self.nodes.size else 1.0
        if np.any(signed_areas_x2 <= 1e-14 * scale * scale):
            k = int(np.argmin(signed_areas_x2))
            raise MeshError("degenerate cell %d (area %g)"
                            % (k, 0.5 * signed_areas_x2[k]))
        if np.any(self.cells >= len(self.nodes)) or np.any(self.cells < 0):
            raise MeshError("cell refers to a nonexistent node")
        # multiplicity of every undirected edge of the triangulation
        count = {}
        for tri in self.cells:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (a, b) if a < b else (b, a)
                count[key] = count.get(key, 0) + 1
        boundary = {k for k, c in count.items() if c == 1}
        if any(c > 2 for c in count.values()):
            raise MeshError("non-manifold edge")
        tagged = set()
        for a, b in self.boundary_edges:
            key = (a, b) if a < b else (b, a)
            if key not in boundary:
                raise MeshError("tagged edge (%d, %d) is not a boundary edge"
                                % (a, b))
            if key in tagged:
                raise MeshError("boundary edge (%d, %d) tagged twice" % (a, b))
            tagged.add(key)
        if tagged != boundary:
            raise MeshError("boundary edges missing a tag: %d untagged"
                            % (len(boundary) - len(tagged)))

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def tags(self):
        return set(self.boundary_tags)

    def cell_areas(self):
        p = self.nodes
        e1 = p[self.cells[:, 1]] - p[self.cells[:, 0]]
        e2 = p[self.cells[:, 2]] - p[self.cells[:, 0]]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self):
        return float(np.sum(self.cell_areas()))

    def edges_of_tag(self, tag):
        idx = [i for i, t in enumerate(self.boundary_tags) if t == tag]
        return self.boundary_edges[idx]

    def nodes_of_tag(self, tag):
        return np.unique(self.edges_of_tag(tag))


def affine_map(mesh, cell):
    """Affine map of one cell: columns of B are the edge vectors from vertex 0."""
    v = mesh.nodes[mesh.cells[cell]]
    B = np.column_stack((v[1] - v[0], v[2] - v[0]))
    m = AffineCellMap(B, v[0].copy())
    if m.det <= 0.0:
        raise MeshError("degenerate cell %d" % cell)
    return m


def _outer_ring(box, n_theta):
    """Points on the rectangle boundary, counterclockwise, corners included.

    Per-side counts are proportional to side length (largest remainder), so
    the returned polygon is exactly the rectangle for any n_theta >= 4.
    """
    (ax, ay), (bx, by) = box
    w, h = bx - ax, by - ay
    lengths = np.array([h, w, h, w], dtype=float)  # right, top, left, bottom
    quota = n_theta * lengths / lengths.sum()
    counts = np.floor(quota).astype(int)
    counts = np.maximum(counts, 1)
    while counts.sum() < n_theta:
        counts[int(np.argmax(quota - counts))] += 1
    while counts.sum() > n_theta:
        i = int(np.argmax(counts - quota))
        if counts[i] <= 1:
            raise MeshError("n_theta too small to cover all four sides")
        counts[i] -= 1
    corners = [(bx, ay), (bx, by), (ax, by), (ax, ay)]
    pts = []
    for side in range(4):
        p0 = np.asarray(corners[side], dtype=float)
        p1 = np.asarray(corners[(side + 1) % 4], dtype=float)
        t = np.arange(counts[side]) / counts[side]
        pts.append(p0 + t[:, None] * (p1 - p0))
    return np.vstack(pts)


def generate_annulus(center, radius, box, n_theta, n_r, inner_tag="inner",
                     outer_tag="outer", grading=1.0):
    """Transfinite mesh between a circular hole and a rectangle.

    Parameters
    ----------
    center, radius : circle strictly inside the rectangle
    box : ((ax, ay), (bx, by))
    n_theta : number of vertices on each ring, >= 8
    n_r : number of radial layers, >= 2
    outer_tag : str or callable(midpoint) -> str, tags for the outer edges
    grading : radial grading exponent (> 1 clusters layers near the circle)

    Hole vertices lie exactly on the circle, outer vertices exactly on the
    rectangle (corners always among them).  Each ring has n_theta vertices,
    giving 2 * n_theta * n_r cells.
    """
    if n_theta < 8:
        raise MeshError("n_theta must be at least 8")
    if n_r < 2:
        raise MeshError("n_r must be at least 2")
    center = np.asarray(center, dtype=float)
    (ax, ay), (bx, by) = box
    if not (ax + radius < center[0] < bx - radius
            and ay + radius < center[1] < by - radius):
        raise MeshError("circle must lie strictly inside the box")

    outer = _outer_ring(box, n_theta)
    d = outer - center
    phi = np.arctan2(d[:, 1], d[:, 0])
    inner = center + radius * np.column_stack((np.cos(phi), np.sin(phi)))

    t = (np.arange(n_r + 1) / n_r) ** float(grading)
    nodes = (inner[None, :, :]
             + t[:, None, None] * (outer - inner)[None, :, :])
    nodes = nodes.reshape(-1, 2)

    def vid(layer, j):
        return layer * n_theta + (j % n_theta)

    cells = []
    for layer in range(n_r):
        for j in range(n_theta):
            a = vid(layer, j)
            b = vid(layer, j + 1)
            c = vid(layer + 1, j + 1)
            dd = vid(layer + 1, j)
            cells.append((a, b, c))
            cells.append((a, c, dd))
    bedges = []
    btags = []
    for j in range(n_theta):
        bedges.append((vid(0, j), vid(0, j + 1)))
        btags.append(inner_tag)
    for j in range(n_theta):
        a, b = vid(n_r, j), vid(n_r, j + 1)
        if callable(outer_tag):
            mid = 0.5 * (nodes[a] + nodes[b])
            btags.append(outer_tag(mid))
        else:
            btags.append(outer_tag)
        bedges.append((a, b))
    return TriMesh(nodes, cells, bedges, btags)


def generate_rectangle(box, nx, ny, tagger=None):
    """Structured triangulation of a rectangle, nx * ny quads split in two.

    tagger : optional callable(midpoint) -> str naming each boundary edge;
    defaults to tagging everything "outer".
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be positive")
    (ax, ay), (bx, by) = box
    if not (bx > ax and by > ay):
        raise MeshError("empty box")
    x = np.linspace(ax, bx, nx + 1)
    y = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    nodes = np.column_stack((X.ravel(), Y.ravel()))

    def vid(i, j):
        return i * (ny + 1) + j

    cells = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    bedges = []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        bedges.append((vid(i + 1, ny), vid(i, ny)))
    for j in range(ny):
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        bedges.append((vid(0, j + 1), vid(0, j)))
    btags = []
    for a, b in bedges:
        mid = 0.5 * (nodes[a] + nodes[b])
        btags.append(tagger(mid) if tagger is not None else "outer")
    return TriMesh(nodes, cells, bedges, btags)


def uniform_refine(mesh, snap=None):
    """Split every cell into four congruent children.

    New vertices are edge midpoints appended after the original vertices, so
    the refined mesh has V + E vertices and 4C cells.  ``snap`` maps boundary
    tags to analytic curves (Circle or callable); midpoints created on a
    snapped tag are projected onto the curve.  Snapping is meant for the
    initial polygonal mesh, where boundary vertices already lie on the curve.
    """
    V = mesh.num_nodes
    edge_id = {}

    def mid_id(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in edge_id:
            edge_id[key] = V + len(edge_id)
        return edge_id[key]

    cells = []
    for v0, v1, v2 in mesh.cells:
        m01, m12, m20 = mid_id(v0, v1), mid_id(v1, v2), mid_id(v2, v0)
        cells.extend(((v0, m01, m20), (v1, m12, m01),
                      (v2, m20, m12), (m01, m12, m20)))

    new_nodes = np.empty((V + len(edge_id), 2))
    new_nodes[:V] = mesh.nodes
    for (a, b), k in edge_id.items():
        new_nodes[k] = 0.5 * (mesh.nodes[a] + mesh.nodes[b])

    bedges = []
    btags = []
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        m = mid_id(int(a), int(b))
        if snap is not None and tag in snap:
            curve = snap[tag]
            proj = curve.project if hasattr(curve, "project") else curve
            new_nodes[m] = proj(new_nodes[m])
        bedges.extend(((a, m), (m, b)))
        btags.extend((tag, tag))
    return TriMesh(new_nodes, cells, bedges, btags)


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII I/O

_EDGE = 1
_TRIANGLE = 2


def parse_msh(source, tag_map=None):
    """Read a v2.2 ASCII mesh.

    Parameters
    ----------
    source : str or file-like
        File content (or stream).  Sections $MeshFormat, $Nodes and $Elements
        are required; 2-node lines become tagged boundary edges and 3-node
        triangles become cells.
    tag_map : dict int -> str, optional
        Physical id to tag name.  When omitted, a $PhysicalNames section must
        supply the names.

    Raises MshParseError naming the offending 1-based line number.
    """
    if hasattr(source, "read"):
        source = source.read()
    lines = source.splitlines()

    def fail(msg, ln):
        raise MshParseError(msg, ln + 1)

    sections = {}
    i = 0
    while i < len(lines):
        tok = lines[i].strip()
        if tok.startswith("$") and not tok.startswith("$End"):
            name = tok[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != "$End" + name:
                j += 1
            if j == len(lines):
                fail("unterminated section $%s" % name, i)
            sections[name] = (i + 1, j)
            i = j + 1
        else:
            if tok:
                fail("content outside any section", i)
            i += 1

    if "MeshFormat" not in sections:
        fail("missing $MeshFormat section", 0)
    a, _ = sections["MeshFormat"]
    fmt = lines[a].split()
    if not fmt or not fmt[0].startswith("2.2"):
        fail("unsupported format version %r" % lines[a].strip(), a)

    names = {}
    if "PhysicalNames" in sections:
        a, b = sections["PhysicalNames"]
        for ln in range(a + 1, b):
            parts = lines[ln].split(None, 2)
            if len(parts) != 3:
                fail("malformed physical name", ln)
            names[int(parts[1])] = parts[2].strip().strip('"')
    if tag_map is None:
        tag_map = names

    if "Nodes" not in sections:
        fail("missing $Nodes section", 0)
    a, b = sections["Nodes"]
    try:
        n_nodes = int(lines[a])
    except ValueError:
        fail("bad node count", a)
    if b - a - 1 != n_nodes:
        fail("node count %d does not match section length" % n_nodes, a)
    ids = {}
    coords = np.empty((n_nodes, 2))
    for k, ln in enumerate(range(a + 1, b)):
        parts = lines[ln].split()
        if len(parts) < 3:
            fail("malformed node line", ln)
        try:
            ids[int(parts[0])] = k
            coords[k] = (float(parts[1]), float(parts[2]))
        except ValueError:
            fail("malformed node line", ln)

    if "Elements" not in sections:
        fail("missing $Elements section", 0)
    a, b = sections["Elements"]
    cells = []
    bedges = []
    btags = []
    for ln in range(a + 1, b):
        parts = lines[ln].split()
        if len(parts) < 3:
            fail("malformed element line", ln)
        try:
            etype = int(parts[1])
            ntags = int(parts[2])
            tags = [int(t) for t in parts[3:3 + ntags]]
            conn = [int(v) for v in parts[3 + ntags:]]
        except ValueError:
            fail("malformed element line", ln)
        try:
            conn = [ids[v] for v in conn]
        except KeyError:
            fail("dangling node reference", ln)
        if etype == _EDGE:
            if len(conn) != 2:
                fail("edge needs 2 nodes", ln)
            if not tags:
                fail("boundary edge without a physical tag", ln)
            if tags[0] not in tag_map:
                fail("unknown physical tag %d" % tags[0], ln)
            bedges.append(conn)
            btags.append(tag_map[tags[0]])
        elif etype == _TRIANGLE:
            if len(conn) != 3:
                fail("triangle needs 3 nodes", ln)
            cells.append(conn)
        else:
            fail("unsupported element type %d" % etype, ln)
    if not cells:
        fail("mesh contains no triangles", sections["Elements"][0])
    return TriMesh(coords, cells, bedges, btags)


def write_msh(mesh):
    """Serialize to v2.2 ASCII with embedded physical names.

    Coordinates are written with 17 significant digits, so
    parse_msh(write_msh(mesh)) reproduces them bit-exactly.
    """
    tags = sorted(mesh.tags)
    tag_id = {t: k + 1 for k, t in enumerate(tags)}
    out = io.StringIO()
    out.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
    out.write("$PhysicalNames\n%d\n" % len(tags))
    for t in tags:
        out.write('1 %d "%s"\n' % (tag_id[t], t))
    out.write("$EndPhysicalNames\n")
    out.write("$Nodes\n%d\n" % mesh.num_nodes)
    for k, (x, y) in enumerate(mesh.nodes):
        out.write("%d %.17g %.17g 0\n" % (k + 1, x, y))
    out.write("$EndNodes\n")
    n_elem = len(mesh.boundary_edges) + mesh.num_cells
    out.write("$Elements\n%d\n" % n_elem)
    eid = 1
    for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags):
        out.write("%d 1 2 %d %d %d %d\n"
                  % (eid, tag_id[t], tag_id[t], a + 1, b + 1))
        eid += 1
    for v0, v1, v2 in mesh.cells:
        out.write("%d 2 2 0 0 %d %d %d\n" % (eid, v0 + 1, v1 + 1, v2 + 1))
        eid += 1
    out.write("$EndElements\n")
    return out.getvalue()


def write_vtk(target, mesh, points=None, point_data=None):
    """Write a legacy ASCII VTK unstructured grid of triangles.

    points : optional (V, 2) override for deformed configurations.
    point_data : dict name -> (V,) scalar or (V, 2) vector arrays.
    """
    pts = mesh.nodes if points is None else np.asarray(points, dtype=float)
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\nmorphopt\nASCII\n")
    out.write("DATASET UNSTRUCTURED_GRID\n")
    out.write("POINTS %d double\n" % len(pts))
    for x, y in pts:
        out.write("%.17g %.17g 0\n" % (x, y))
    C = mesh.num_cells
    out.write("CELLS %d %d\n" % (C, 4 * C))
    for v0, v1, v2 in mesh.cells:
        out.write("3 %d %d %d\n" % (v0, v1, v2))
    out.write("CELL_TYPES %d\n" % C)
    out.write("".join("5\n" for _ in range(C)))
    if point_data:
        out.write("POINT_DATA %d\n" % len(pts))
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out.write("SCALARS %s double 1\nLOOKUP_TABLE default\n" % name)
                out.write("".join("%.17g\n" % v for v in arr))
            else:
                out.write("VECTORS %s double\n" % name)
                for vx, vy in arr:
                    out.write("%.17g %.17g 0\n" % (vx, vy))
    text = out.getvalue()
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w") as fh:
            fh.write(text)
    return text
