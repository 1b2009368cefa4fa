"""2D triangulations of the computational domains.

A :class:`TriMesh` is an immutable P1-ready triangulation: CCW triangles
with positive area, boundary edges organized into closed loops with
outward unit normals, and an interior-DOF map excluding Dirichlet
(boundary) vertices.

Disk, ellipse and Wulff-shape domains share one radial generator whose
boundary vertices lie exactly on the analytic curve {F° = scale};
squares use a structured template and general polygons a clipped
hexagonal lattice.  Connectivity comes from scipy's Delaunay on these
structured point sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .anisotropy import AnisotropyModel, EllipseNorm, EuclideanNorm, parse_model, wulff_polygon

__all__ = [
    "MeshError",
    "TriMesh",
    "Disk",
    "Square",
    "Ellipse",
    "Polygon",
    "Wulff",
    "generate",
    "refine",
    "transform",
    "scale_mesh",
    "read_fmesh",
    "write_fmesh",
    "parse_shape",
]


class MeshError(ValueError):
    """Invalid mesh, degenerate shape parameters, or inadmissible map."""


# ----------------------------------------------------------------------
# shape specifications
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise MeshError(f"disk radius must be > 0 (got {self.r})")

    def project(self, pts):
        return pts * (self.r / np.hypot(pts[:, 0], pts[:, 1]))[:, None]

    def scaled(self, t):
        return Disk(self.r * t)


@dataclass(frozen=True)
class Square:
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise MeshError(f"square side must be > 0 (got {self.side})")

    project = None

    def scaled(self, t):
        return Square(self.side * t)


class Ellipse:
    """Axis-aligned ellipse with semi-axes (a, b), centered at the origin."""

    def __init__(self, a, b):
        if not (a > 0 and b > 0):
            raise MeshError(f"ellipse semi-axes must be > 0 (got {a}, {b})")
        self.a = float(a)
        self.b = float(b)
        # the ellipse is the Wulff shape of the norm sqrt(a^2 x1^2 + b^2 x2^2)
        self._model = EllipseNorm(self.a ** 2, 0.0, self.b ** 2)

    def project(self, pts):
        return pts / self._model.polar(pts)[:, None]

    def scaled(self, t):
        return Ellipse(self.a * t, self.b * t)

    def __repr__(self):
        return f"Ellipse(a={self.a}, b={self.b})"


class Polygon:
    """Simple CCW polygon given by its vertices (k, 2)."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise MeshError("polygon needs at least 3 points of shape (k, 2)")
        if _polygon_area(pts) <= 0:
            raise MeshError("polygon must be CCW with positive area")
        if _polygon_self_intersects(pts):
            raise MeshError("polygon must be simple (non self-intersecting)")
        self.points = pts

    project = None

    def scaled(self, t):
        return Polygon(self.points * t)

    def __repr__(self):
        return f"Polygon({len(self.points)} vertices)"


class Wulff:
    """Wulff shape {F° < scale} of an anisotropy model."""

    def __init__(self, model: AnisotropyModel, scale: float = 1.0):
        if not scale > 0:
            raise MeshError(f"wulff scale must be > 0 (got {scale})")
        self.model = model
        self.scale = float(scale)

    def project(self, pts):
        return pts * (self.scale / self.model.polar(pts))[:, None]

    def scaled(self, t):
        return Wulff(self.model, self.scale * t)

    def __repr__(self):
        return f"Wulff({self.model.spec_string()}, scale={self.scale})"


def parse_shape(spec: str, model: AnisotropyModel | None = None):
    """Parse ``disk:r``, ``square:side``, ``ellipse:a,b``, ``wulff:scale``
    (uses the supplied model) or ``polygon:x1,y1,x2,y2,...``."""
    kind, _, rest = spec.strip().partition(":")
    try:
        if kind == "disk":
            return Disk(float(rest))
        if kind == "square":
            return Square(float(rest))
        if kind == "ellipse":
            a, b = (float(x) for x in rest.split(","))
            return Ellipse(a, b)
        if kind == "wulff":
            if model is None:
                raise MeshError("wulff shape requires an anisotropy model")
            return Wulff(model, float(rest) if rest else 1.0)
        if kind == "polygon":
            vals = [float(x) for x in rest.split(",")]
            if len(vals) % 2:
                raise MeshError("polygon spec needs an even number of coordinates")
            return Polygon(np.array(vals).reshape(-1, 2))
    except (ValueError, TypeError) as exc:
        raise MeshError(f"bad shape spec {spec!r}: {exc}") from exc
    raise MeshError(f"unknown shape spec {spec!r}")


def _polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _polygon_self_intersects(pts):
    n = len(pts)
    a, b = pts, np.roll(pts, -1, axis=0)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            if _segments_cross(a[i], b[i], a[j], b[j]):
                return True
    return False


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _points_in_polygon(pts, poly):
    """Ray-casting point-in-polygon test, vectorized over pts."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x1, y1 = poly[:, 0], poly[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for k in range(len(poly)):
        cond = (y1[k] > y) != (y2[k] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1[k] + (y - y1[k]) * (x2[k] - x1[k]) / (y2[k] - y1[k])
        inside ^= cond & (x < xint)
    return inside


# ----------------------------------------------------------------------
# TriMesh
# ----------------------------------------------------------------------


class TriMesh:
    """Immutable triangulation; all derived geometry is validated and
    cached at construction."""

    def __init__(self, vertices, triangles, shape=None):
        self.vertices = np.ascontiguousarray(np.asarray(vertices, dtype=float))
        self.triangles = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64))
        self.shape = shape
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        self._build_geometry()
        self._build_boundary()
        self._grad_ops = None

    # -- construction-time validation -----------------------------------

    def _build_geometry(self):
        v, t = self.vertices, self.triangles
        if t.min(initial=0) < 0 or t.max(initial=-1) >= len(v):
            raise MeshError("triangle indices out of range")
        used = np.zeros(len(v), dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} not used by any triangle")
        p = v[t]  # (nt, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0):
            bad = int(np.flatnonzero(det <= 0)[0])
            raise MeshError(f"triangle {bad} has non-positive area (not CCW or degenerate)")
        self.tri_areas = 0.5 * det
        self._edge_mats = np.stack([e1, e2], axis=2)  # columns e1, e2

    def _build_boundary(self):
        t = self.triangles
        nt = len(t)
        directed = t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        owner = np.repeat(np.arange(nt), 3)
        lo = np.minimum(directed[:, 0], directed[:, 1])
        hi = np.maximum(directed[:, 0], directed[:, 1])
        key = lo.astype(np.int64) * len(self.vertices) + hi
        _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        on_b = counts[inv] == 1
        self.b_vi = directed[on_b, 0]
        self.b_vj = directed[on_b, 1]
        self.b_tri = owner[on_b]

        vi, vj = self.vertices[self.b_vi], self.vertices[self.b_vj]
        d = vj - vi
        self.b_len = np.hypot(d[:, 0], d[:, 1])
        if np.any(self.b_len == 0):
            raise MeshError("zero-length boundary edge")
        self.b_normal = np.column_stack([d[:, 1], -d[:, 0]]) / self.b_len[:, None]
        self.b_mid = 0.5 * (vi + vj)
        # outwardness against the opposite vertex of the owning triangle
        opp = t[self.b_tri].sum(axis=1) - self.b_vi - self.b_vj
        out = np.einsum("ij,ij->i", self.b_normal, self.b_mid - self.vertices[opp])
        if np.any(out <= 0):
            raise MeshError("boundary normal does not point outward (orientation broken)")

        is_b = np.zeros(len(self.vertices), dtype=bool)
        is_b[self.b_vi] = True
        is_b[self.b_vj] = True
        self.is_boundary_vertex = is_b
        # closed loops: each boundary vertex is the tail of exactly one
        # directed boundary edge and the head of exactly one
        tails = np.bincount(self.b_vi, minlength=len(self.vertices))
        heads = np.bincount(self.b_vj, minlength=len(self.vertices))
        if np.any(tails[is_b] != 1) or np.any(heads[is_b] != 1):
            raise MeshError("boundary edges do not form closed simple loops")

        self.interior_idx = np.flatnonzero(~is_b)
        dofs = np.full(len(self.vertices), -1, dtype=np.int64)
        dofs[self.interior_idx] = np.arange(len(self.interior_idx))
        self.interior_dofs = dofs

    # -- derived quantities ----------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_interior(self):
        return len(self.interior_idx)

    @property
    def area(self):
        return float(self.tri_areas.sum())

    @property
    def perimeter(self):
        return float(self.b_len.sum())

    @property
    def centroid(self):
        c = self.vertices[self.triangles].mean(axis=1)
        return (self.tri_areas @ c) / self.area

    @property
    def h(self):
        """Longest edge over all triangles."""
        p = self.vertices[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)
        return float(lengths.max())

    @property
    def grad_ops(self):
        """Per-triangle P1 gradient operators, shape (nt, 2, 3):
        Du|_T = grad_ops[T] @ u[triangles[T]]."""
        if self._grad_ops is None:
            m = self._edge_mats  # columns e1, e2
            det = 2.0 * self.tri_areas
            minv_t = np.empty_like(m)  # M^{-T}
            minv_t[:, 0, 0] = m[:, 1, 1]
            minv_t[:, 0, 1] = -m[:, 1, 0]
            minv_t[:, 1, 0] = -m[:, 0, 1]
            minv_t[:, 1, 1] = m[:, 0, 0]
            minv_t /= det[:, None, None]
            diff = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
            self._grad_ops = minv_t @ diff
        return self._grad_ops

    def min_angle(self):
        """Smallest interior angle in degrees."""
        p = self.vertices[self.triangles]
        ang = np.empty((len(p), 3))
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosv = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            ang[:, k] = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(ang.min())

    def __repr__(self):
        return (
            f"<TriMesh {self.n_vertices} vertices, {self.n_triangles} triangles, "
            f"{len(self.b_vi)} boundary edges>"
        )


# ----------------------------------------------------------------------
# generators
# ----------------------------------------------------------------------


def generate(shape, h: float) -> TriMesh:
    """Mesh a shape with target edge length h.

    Boundary vertices lie exactly on the analytic boundary; the max edge
    stays below 1.5 h and the minimum angle above 20 degrees for the
    supported shapes.
    """
    if not h > 0:
        raise MeshError(f"target edge length must be > 0 (got {h})")
    if isinstance(shape, str):
        shape = parse_shape(shape)
    if isinstance(shape, Square):
        return _square_mesh(shape, h)
    if isinstance(shape, Disk):
        return _radial_mesh(EuclideanNorm(), shape.r, h, shape)
    if isinstance(shape, Ellipse):
        return _radial_mesh(shape._model, 1.0, h, shape)
    if isinstance(shape, Wulff):
        return _radial_mesh(shape.model, shape.scale, h, shape)
    if isinstance(shape, Polygon):
        return _polygon_mesh(shape, h)
    raise MeshError(f"unknown shape {shape!r}")


def _square_mesh(shape: Square, h: float) -> TriMesh:
    s = shape.side
    n = max(1, math.ceil(s / h))
    xs = np.linspace(-0.5 * s, 0.5 * s, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) * (n + 1)).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v01 = idx[:-1, 1:].ravel()
    v11 = idx[1:, 1:].ravel()
    tris = np.concatenate(
        [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
    )
    return TriMesh(verts, tris, shape=shape)


def _resample_closed(curve, cum, targets):
    """Interpolate points on a closed polyline at given arclengths."""
    x = np.interp(targets, cum, curve[:, 0])
    y = np.interp(targets, cum, curve[:, 1])
    return np.column_stack([x, y])


def _radial_mesh(model: AnisotropyModel, scale: float, h: float, shape) -> TriMesh:
    """Ring-based mesh of the convex region {F° < scale}.

    Rings are uniform in arclength (with alternating half-phase for a
    hexagonal packing) and projected exactly onto the scaled boundary
    curve, so quality stays isotropic even for anisotropic models.  One
    extra ring is graded in at 0.3 of the last radial step: the boundary
    gradient trace is one-sided, so thinning only the outermost layer
    buys a ~3x better boundary flux at negligible cost.
    """
    dense = wulff_polygon(model, 4096) * scale
    closed = np.vstack([dense, dense[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    perim = cum[-1]
    r_max = float(np.hypot(dense[:, 0], dense[:, 1]).max())

    n_h = max(8, math.ceil(perim / h))
    n_b = 2 * n_h
    m = max(2, math.ceil(r_max / h))
    # interior rings at uniform fractions, then a boundary band at twice
    # the azimuthal density with depth ~ h/4 (the chord sag of the
    # boundary polygon makes d ~ theta/2 the accuracy sweet spot for the
    # one-sided gradient trace)
    rings = [(i / m, max(6, round(n_h * i / m))) for i in range(1, m)]
    rings += [(1.0 - 0.25 * h / r_max, n_b), (1.0, n_b)]
    points = [np.zeros((1, 2))]
    for i, (t, n_i) in enumerate(rings, start=1):
        phase = 0.5 * (i % 2)
        targets = (np.arange(n_i) + phase) / n_i * perim
        ring = _resample_closed(closed, cum, targets) * t
        # exact projection onto the curve {F° = t * scale}
        ring *= (t * scale / model.polar(ring))[:, None]
        points.append(ring)
    pts = np.vstack(points)
    tri = Delaunay(pts)
    simplices = _ccw(pts, tri.simplices)
    return TriMesh(pts, simplices, shape=shape)


def _ccw(pts, simplices):
    p = pts[simplices]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    flip = det < 0
    out = simplices.copy()
    out[flip] = out[flip][:, [0, 2, 1]]
    return out


def _polygon_mesh(shape: Polygon, h: float) -> TriMesh:
    poly = shape.points
    # boundary chain at spacing <= h
    bpts = []
    nseg = []
    for k in range(len(poly)):
        a, b = poly[k], poly[(k + 1) % len(poly)]
        n = max(1, math.ceil(np.linalg.norm(b - a) / h))
        nseg.append(n)
        for j in range(n):
            bpts.append(a + (b - a) * (j / n))
    bpts = np.array(bpts)
    nb = len(bpts)

    # hexagonal interior lattice (slightly denser than the boundary so the
    # cleared strip along the boundary cannot produce over-long edges)
    s = 0.8 * h
    xmin, ymin = poly.min(axis=0)
    xmax, ymax = poly.max(axis=0)
    dy = s * math.sqrt(3) / 2
    rows = np.arange(ymin + dy, ymax, dy)
    lattice = []
    for j, y in enumerate(rows):
        x0 = xmin + (0.5 * s if j % 2 else s)
        xs = np.arange(x0, xmax, s)
        lattice.append(np.column_stack([xs, np.full(len(xs), y)]))
    lattice = np.vstack(lattice) if lattice else np.zeros((0, 2))
    if len(lattice):
        inside = _points_in_polygon(lattice, poly)
        lattice = lattice[inside]
    if len(lattice):
        clear = _dist_to_segments(lattice, bpts, np.roll(bpts, -1, axis=0)) >= 0.5 * s
        lattice = lattice[clear]

    pts = np.vstack([bpts, lattice])
    tri = Delaunay(pts)
    simplices = _ccw(pts, tri.simplices)
    cent = pts[simplices].mean(axis=1)
    keep = _points_in_polygon(cent, poly)
    simplices = simplices[keep]

    mesh = TriMesh(pts, simplices, shape=shape)
    # every boundary segment must have been recovered as a mesh edge
    expected = set()
    for k in range(nb):
        expected.add((min(k, (k + 1) % nb), max(k, (k + 1) % nb)))
    got = set(
        (min(int(i), int(j)), max(int(i), int(j))) for i, j in zip(mesh.b_vi, mesh.b_vj)
    )
    if not expected <= got:
        raise MeshError("polygon boundary not recovered by triangulation; reduce h")
    return mesh


def _dist_to_segments(pts, a, b):
    """Min distance from each point to any of the segments (a[k], b[k])."""
    ab = b - a  # (k, 2)
    ap = pts[:, None, :] - a[None, :, :]  # (m, k, 2)
    denom = np.einsum("kj,kj->k", ab, ab)
    t = np.clip(np.einsum("mkj,kj->mk", ap, ab) / denom, 0.0, 1.0)
    closest = a[None] + t[:, :, None] * ab[None]
    d = np.linalg.norm(pts[:, None, :] - closest, axis=2)
    return d.min(axis=1)


# ----------------------------------------------------------------------
# mesh transformations
# ----------------------------------------------------------------------


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement (each triangle into 4 via edge midpoints).

    Midpoints of boundary edges are projected back onto the analytic
    boundary when the generating shape is known.
    """
    t = mesh.triangles
    nv = mesh.n_vertices
    pairs = t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    key = lo.astype(np.int64) * nv + hi
    uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
    e_lo = (uniq // nv).astype(np.int64)
    e_hi = (uniq % nv).astype(np.int64)
    mids = 0.5 * (mesh.vertices[e_lo] + mesh.vertices[e_hi])

    on_boundary = counts == 1
    project = getattr(mesh.shape, "project", None) if mesh.shape is not None else None
    if project is not None and np.any(on_boundary):
        mids[on_boundary] = project(mids[on_boundary])

    verts = np.vstack([mesh.vertices, mids])
    mid_idx = nv + inv.reshape(-1, 3)  # midpoint ids per triangle edge (01, 12, 20)
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = mid_idx[:, 0], mid_idx[:, 1], mid_idx[:, 2]
    tris = np.concatenate(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([b, mbc, mab]),
            np.column_stack([c, mca, mbc]),
            np.column_stack([mab, mbc, mca]),
        ]
    )
    return TriMesh(verts, tris, shape=mesh.shape)


def transform(mesh: TriMesh, phi) -> TriMesh:
    """Image mesh under a map phi: (n, 2) -> (n, 2).

    Raises :class:`MeshError` naming the first flipped triangle if the
    map is not orientation-preserving on the triangulation.
    """
    new_v = np.asarray(phi(mesh.vertices), dtype=float)
    if new_v.shape != mesh.vertices.shape:
        raise MeshError("map must return one image point per vertex")
    p = new_v[mesh.triangles]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    if np.any(det <= 0):
        bad = int(np.flatnonzero(det <= 0)[0])
        raise MeshError(f"map flips or degenerates triangle {bad} (det Dphi <= 0)")
    return TriMesh(new_v, mesh.triangles, shape=None)


def scale_mesh(mesh: TriMesh, t: float) -> TriMesh:
    """Exact homothety x -> t x about the origin (t > 0)."""
    if not t > 0:
        raise MeshError(f"scale factor must be > 0 (got {t})")
    shape = mesh.shape.scaled(t) if mesh.shape is not None else None
    return TriMesh(mesh.vertices * t, mesh.triangles, shape=shape)


# ----------------------------------------------------------------------
# plain-text mesh format
# ----------------------------------------------------------------------


def write_fmesh(mesh: TriMesh, path):
    """Write the ``.fmesh`` plain-text format (17 significant digits)."""
    with open(path, "w") as f:
        f.write("fmesh 1\n")
        f.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.b_vi)}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            f.write(f"{i} {j} {k}\n")
        for i, j, t in zip(mesh.b_vi, mesh.b_vj, mesh.b_tri):
            f.write(f"{i} {j} {t}\n")


def read_fmesh(path) -> TriMesh:
    """Read a ``.fmesh`` file, validating all mesh invariants."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0].split() != ["fmesh", "1"]:
        raise MeshError(f"{path}: not an fmesh v1 file")
    try:
        nv, nt, nb = (int(x) for x in lines[1].split())
        verts = np.array([[float(x) for x in ln.split()] for ln in lines[2 : 2 + nv]])
        tris = np.array(
            [[int(x) for x in ln.split()] for ln in lines[2 + nv : 2 + nv + nt]]
        )
        bed = np.array(
            [[int(x) for x in ln.split()] for ln in lines[2 + nv + nt : 2 + nv + nt + nb]]
        )
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed fmesh file: {exc}") from exc
    if len(verts) != nv or len(tris) != nt or len(bed) != nb:
        raise MeshError(f"{path}: truncated fmesh file")
    mesh = TriMesh(verts, tris)
    stored = set((min(i, j), max(i, j), t) for i, j, t in bed)
    computed = set(
        (min(int(i), int(j)), max(int(i), int(j)), int(t))
        for i, j, t in zip(mesh.b_vi, mesh.b_vj, mesh.b_tri)
    )
    if stored != computed:
        raise MeshError(f"{path}: stored boundary edges disagree with the triangulation")
    return mesh
