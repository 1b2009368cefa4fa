"""Shape derivative of the first eigenvalue, three ways.

Given a solved eigenpair on an image mesh and a perturbation field chi
defined there, the derivative d(lambda) along the domain motion
x -> x + t chi(x) is evaluated as

* a volume integral (the Frechet form): for piecewise-linear fields this
  is the exact derivative of the discrete eigenvalue, by the envelope
  theorem applied to the transplanted Rayleigh quotient;
* a boundary integral (the Hadamard form), whose discretization error
  comes from the one-sided P1 gradient trace on boundary triangles;
* a central finite difference of two pullback eigensolves.

Dilation (chi = x) ties these to the Rellich-Pohozaev identity
lambda = (p-1)/p * bdry_int |du/dnu_F|^p x . nu.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .anisotropy import AnisotropyModel
from .eigensolver import EigenPair, SolverOpts, solve_pullback
from .mesh import MeshError, Polygon, Square, TriMesh

__all__ = [
    "VectorField",
    "NodalField",
    "identity_field",
    "translation_field",
    "radial_bump_field",
    "rotation_field",
    "normal_bump_field",
    "parse_field",
    "DerivativeReport",
    "d_lambda_volume",
    "d_lambda_hadamard",
    "d_lambda_fd",
    "derivative_report",
    "rellich_pohozaev_check",
]


class VectorField:
    """Analytic C^1 perturbation field with an exact Jacobian evaluator."""

    def __init__(self, fn, jac_fn, name="field"):
        self._fn = fn
        self._jac = jac_fn
        self.name = name

    def __call__(self, points):
        return self._fn(np.asarray(points, dtype=float))

    def jacobian(self, points):
        """Dchi at the given points, shape (n, 2, 2), rows = components."""
        return self._jac(np.asarray(points, dtype=float))

    def tri_jacobians(self, mesh: TriMesh):
        """Per-triangle Jacobians (evaluated at centroids)."""
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        return self.jacobian(cent)

    def edge_mid_values(self, mesh: TriMesh):
        return self(mesh.b_mid)

    def max_norm(self, mesh: TriMesh):
        v = self(mesh.vertices)
        return float(np.hypot(v[:, 0], v[:, 1]).max())


class NodalField(VectorField):
    """Per-vertex field on a fixed mesh, piecewise linear in between."""

    def __init__(self, mesh: TriMesh, values, name="nodal"):
        vals = np.asarray(values, dtype=float)
        if vals.shape != (mesh.n_vertices, 2):
            raise ValueError(
                f"nodal field needs one 2-vector per vertex (got shape {vals.shape})"
            )
        self.mesh = mesh
        self.values = vals
        self.name = name

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        if points.shape == self.mesh.vertices.shape and np.array_equal(
            points, self.mesh.vertices
        ):
            return self.values.copy()
        raise ValueError("nodal fields are only evaluable at their mesh vertices")

    def jacobian(self, points):
        raise ValueError("nodal fields have per-triangle Jacobians only")

    def tri_jacobians(self, mesh: TriMesh):
        if mesh is not self.mesh and mesh.n_vertices != self.mesh.n_vertices:
            raise ValueError("nodal field bound to a different mesh")
        # Dchi[j, k] = sum_i grad_ops[k, i] * chi_j(vertex i)
        return np.einsum("tki,tij->tjk", mesh.grad_ops, self.values[mesh.triangles])

    def edge_mid_values(self, mesh: TriMesh):
        return 0.5 * (self.values[mesh.b_vi] + self.values[mesh.b_vj])

    def max_norm(self, mesh: TriMesh):
        return float(np.hypot(self.values[:, 0], self.values[:, 1]).max())


def identity_field() -> VectorField:
    return VectorField(
        lambda x: x.copy(),
        lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy(),
        name="identity",
    )


def translation_field(d) -> VectorField:
    d = np.asarray(d, dtype=float)
    return VectorField(
        lambda x: np.broadcast_to(d, x.shape).copy(),
        lambda x: np.zeros((len(x), 2, 2)),
        name=f"translate:{d[0]:g},{d[1]:g}",
    )


def rotation_field() -> VectorField:
    """chi(x) = (-y, x); tangential on circles centered at the origin."""
    jac = np.array([[0.0, -1.0], [1.0, 0.0]])
    return VectorField(
        lambda x: np.column_stack([-x[:, 1], x[:, 0]]),
        lambda x: np.broadcast_to(jac, (len(x), 2, 2)).copy(),
        name="rotation",
    )


def radial_bump_field(center, radius, amplitude) -> VectorField:
    """chi(x) = A g(|x-c|/R) (x - c) with g(s) = (1 - s^2)^2 for s < 1.

    C^1 with Lipschitz derivative, supported in the disk of radius R
    around the center."""
    c = np.asarray(center, dtype=float)
    r = float(radius)
    a = float(amplitude)

    def fn(x):
        d = x - c
        s2 = (d[:, 0] ** 2 + d[:, 1] ** 2) / r ** 2
        g = np.where(s2 < 1.0, (1.0 - s2) ** 2, 0.0)
        return a * g[:, None] * d

    def jac(x):
        d = x - c
        s2 = (d[:, 0] ** 2 + d[:, 1] ** 2) / r ** 2
        inside = s2 < 1.0
        g = np.where(inside, (1.0 - s2) ** 2, 0.0)
        # g'(s)/s = -4 (1 - s^2), finite at s = 0
        gp_over_s = np.where(inside, -4.0 * (1.0 - s2), 0.0)
        out = np.zeros((len(x), 2, 2))
        out += g[:, None, None] * np.eye(2)
        out += (gp_over_s / r ** 2)[:, None, None] * (d[:, :, None] * d[:, None, :])
        return a * out

    return VectorField(fn, jac, name=f"bump:{c[0]:g},{c[1]:g},{r:g},{a:g}")


def normal_bump_field(mesh: TriMesh, theta0: float, theta1: float,
                      amplitude: float) -> NodalField:
    """Nodal field moving a boundary arc along the outward normal.

    The arc is selected by vertex angle (atan2 about the origin) in
    [theta0, theta1]; magnitudes follow a smooth hat over the arc and
    interior vertices stay fixed."""
    nv = mesh.n_vertices
    values = np.zeros((nv, 2))
    # length-weighted vertex normals
    acc = np.zeros((nv, 2))
    wts = np.zeros(nv)
    for idx in (mesh.b_vi, mesh.b_vj):
        np.add.at(acc, idx, 0.5 * mesh.b_len[:, None] * mesh.b_normal)
        np.add.at(wts, idx, 0.5 * mesh.b_len)
    bnd = np.flatnonzero(mesh.is_boundary_vertex)
    normals = acc[bnd] / np.linalg.norm(acc[bnd], axis=1, keepdims=True)
    ang = np.arctan2(mesh.vertices[bnd, 1], mesh.vertices[bnd, 0])
    span = theta1 - theta0
    t = (np.mod(ang - theta0, 2 * np.pi)) / span
    hat = np.where(t <= 1.0, np.sin(np.pi * np.clip(t, 0.0, 1.0)) ** 2, 0.0)
    values[bnd] = amplitude * hat[:, None] * normals
    return NodalField(mesh, values, name=f"normal_bump:{theta0:g},{theta1:g},{amplitude:g}")


def parse_field(spec: str, mesh: TriMesh | None = None) -> VectorField:
    """Parse ``identity``, ``translate:dx,dy``, ``bump:cx,cy,r,amp`` or
    ``nodal:file.csv`` (rows x,y,vx,vy matching the mesh vertices)."""
    spec = spec.strip()
    if spec == "identity":
        return identity_field()
    if spec.startswith("translate:"):
        dx, dy = (float(x) for x in spec[len("translate:"):].split(","))
        return translation_field((dx, dy))
    if spec.startswith("bump:"):
        cx, cy, r, amp = (float(x) for x in spec[len("bump:"):].split(","))
        return radial_bump_field((cx, cy), r, amp)
    if spec.startswith("nodal:"):
        if mesh is None:
            raise ValueError("nodal field requires a mesh")
        data = np.loadtxt(spec[len("nodal:"):], delimiter=",", skiprows=1)
        if data.shape != (mesh.n_vertices, 4):
            raise ValueError("nodal csv must have one x,y,vx,vy row per mesh vertex")
        if not np.allclose(data[:, :2], mesh.vertices, atol=1e-9):
            raise ValueError("nodal csv coordinates do not match the mesh vertices")
        return NodalField(mesh, data[:, 2:])
    raise ValueError(f"unknown field spec {spec!r}")


# ----------------------------------------------------------------------
# derivative forms
# ----------------------------------------------------------------------


def _boundary_fp(mesh: TriMesh, pair: EigenPair, model: AnisotropyModel, p: float):
    """F(Du)^p on each boundary edge, traced from the adjacent triangle."""
    du = np.einsum("taj,tj->ta", mesh.grad_ops, pair.u[mesh.triangles])
    f = model._value_impl(du[mesh.b_tri])
    return f ** p


def d_lambda_volume(mesh: TriMesh, pair: EigenPair, model: AnisotropyModel,
                    p: float, chi: VectorField) -> float:
    """Volume-integral (Frechet) form of d(lambda)(chi) on the image mesh."""
    du = np.einsum("taj,tj->ta", mesh.grad_ops, pair.u[mesh.triangles])
    f = model._value_impl(du)
    jac = chi.tri_jacobians(mesh)
    div = jac[:, 0, 0] + jac[:, 1, 1]
    um = pair.u[mesh.triangles]
    um = 0.5 * (um + np.roll(um, -1, axis=1))
    rho = (np.abs(um) ** p).mean(axis=1)  # |u|^p quadrature density
    term1 = mesh.tri_areas @ ((f ** p - pair.lam * rho) * div)
    # -p F^(p-1) <Du, Dchi F_xi>; triangles with Du = 0 contribute nothing here
    term2 = 0.0
    nz = f > 0.0
    if np.any(nz):
        gf = model._gradient_impl(du[nz])
        inner = np.einsum("tj,tjk,tk->t", du[nz], jac[nz], gf)
        term2 = -p * mesh.tri_areas[nz] @ (f[nz] ** (p - 1.0) * inner)
    return float(term1 + term2)


def d_lambda_hadamard(mesh: TriMesh, pair: EigenPair, model: AnisotropyModel,
                      p: float, chi: VectorField) -> float:
    """Boundary (Hadamard) form (1-p) bdry_int F(Du)^p chi . nu.

    By homogeneity F(Du)^p equals |du/dnu_F|^p on the boundary, so this
    single value covers both stated forms.  Valid for C^2 boundaries;
    polygonal domains are evaluated anyway with a warning.
    """
    if isinstance(mesh.shape, (Square, Polygon)):
        warnings.warn(
            "Hadamard boundary form assumes a C^2 boundary; this mesh has "
            "polygon corners", stacklevel=2)
    fp = _boundary_fp(mesh, pair, model, p)
    chiv = chi.edge_mid_values(mesh)
    flux = np.einsum("ij,ij->i", chiv, mesh.b_normal)
    return float((1.0 - p) * (mesh.b_len * fp) @ flux)


def d_lambda_fd(ref_mesh: TriMesh, phi, psi: VectorField, model: AnisotropyModel,
                p: float, t: float | None = None,
                opts: SolverOpts | None = None) -> tuple[float, float]:
    """Central finite difference of the pullback eigenvalue along
    phi_t = phi + t psi.  Returns (derivative, step used)."""
    if phi is None:
        phi = lambda x: x
    psi_v = psi(ref_mesh.vertices)
    psi_max = float(np.hypot(psi_v[:, 0], psi_v[:, 1]).max())
    if psi_max == 0.0:
        return 0.0, 0.0
    if t is None:
        lo = ref_mesh.vertices.min(axis=0)
        hi = ref_mesh.vertices.max(axis=0)
        t = 1e-4 * float(np.hypot(*(hi - lo))) / psi_max
    opts = opts or SolverOpts(tol=1e-13)

    def shifted(sign):
        return lambda x: phi(x) + sign * t * psi(x)

    try:
        lam_plus = solve_pullback(ref_mesh, shifted(+1.0), model, p, opts).lam
        lam_minus = solve_pullback(ref_mesh, shifted(-1.0), model, p, opts).lam
    except MeshError as exc:
        raise MeshError(
            f"perturbed map inadmissible at step t={t:g}; retry with a smaller "
            f"finite-difference step ({exc})"
        ) from exc
    return (lam_plus - lam_minus) / (2.0 * t), t


@dataclass
class DerivativeReport:
    """Three estimates of d(lambda)(chi) and their pairwise discrepancies."""

    d_volume: float | None
    d_hadamard: float | None
    d_fd: float | None
    fd_step: float | None
    h: float
    discrepancies: dict

    def to_dict(self):
        flat = {
            "d_volume": self.d_volume,
            "d_hadamard": self.d_hadamard,
            "d_fd": self.d_fd,
            "fd_step": self.fd_step,
            "h": self.h,
        }
        for k, v in self.discrepancies.items():
            flat[f"rel_diff_{k}"] = v
        return flat


def _rel_diff(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def derivative_report(mesh: TriMesh, pair: EigenPair, model: AnisotropyModel,
                      p: float, chi: VectorField, fd_step: float | None = None,
                      forms=("volume", "hadamard", "fd"),
                      opts: SolverOpts | None = None) -> DerivativeReport:
    """Evaluate the requested derivative forms for a field chi given on
    the image domain (the finite difference perturbs the mesh by chi)."""
    d_vol = d_lambda_volume(mesh, pair, model, p, chi) if "volume" in forms else None
    d_had = d_lambda_hadamard(mesh, pair, model, p, chi) if "hadamard" in forms else None
    d_fd = step = None
    if "fd" in forms:
        d_fd, step = d_lambda_fd(mesh, None, chi, model, p, t=fd_step, opts=opts)
    disc = {}
    if d_vol is not None and d_had is not None:
        disc["volume_hadamard"] = _rel_diff(d_vol, d_had)
    if d_had is not None and d_fd is not None:
        disc["hadamard_fd"] = _rel_diff(d_had, d_fd)
    if d_vol is not None and d_fd is not None:
        disc["volume_fd"] = _rel_diff(d_vol, d_fd)
    return DerivativeReport(d_vol, d_had, d_fd, step, mesh.h, disc)


@dataclass
class RellichResult:
    lhs: float
    rhs: float
    rel_err: float


def rellich_pohozaev_check(mesh: TriMesh, pair: EigenPair, model: AnisotropyModel,
                           p: float) -> RellichResult:
    """lambda versus (p-1)/p bdry_int |du/dnu_F|^p x . nu dsigma.

    Uses the mesh's native coordinates (the identity is origin-dependent
    through x; domains are expected to contain the origin)."""
    fp = _boundary_fp(mesh, pair, model, p)
    flux = np.einsum("ij,ij->i", mesh.b_mid, mesh.b_normal)
    rhs = (p - 1.0) / p * float((mesh.b_len * fp) @ flux)
    lhs = pair.lam
    return RellichResult(lhs, rhs, abs(lhs - rhs) / abs(lhs))
