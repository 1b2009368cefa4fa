"""Volume-constrained eigenvalue descent on the domain shape.

Boundary vertices move along the negative Hadamard gradient projected
onto volume-preserving directions; interior vertices follow by harmonic
extension and an exact homothety restores the volume each step.  At a
critical shape the projected gradient vanishes, which happens exactly
when the Finsler normal derivative is constant on the boundary, i.e. on
Wulff shapes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .anisotropy import AnisotropyModel, EuclideanNorm, wulff_area
from .eigensolver import DiscreteProblem, SolverOpts, solve_first
from .mesh import MeshError, TriMesh, Wulff, generate

__all__ = ["FlowOpts", "FlowRecord", "FlowState", "shape_gradient", "flow"]


@dataclass
class FlowOpts:
    step0: float = 0.05
    tol_geo: float = 1e-3
    max_iter: int = 100
    h: float = 0.06
    min_angle_deg: float = 5.0
    solver: SolverOpts = field(default_factory=SolverOpts)
    snapshot_every: int = 0
    snapshot_cb: object = None  # callable(iteration, mesh, pair)


@dataclass
class FlowRecord:
    iteration: int
    lam: float
    volume: float
    deficit: float
    step: float


@dataclass
class FlowState:
    mesh: TriMesh
    lam: float
    step: float
    volume: float
    iteration: int
    history: list
    converged: bool
    message: str


def shape_gradient(mesh: TriMesh, pair, model: AnisotropyModel, p: float):
    """Volume-projected descent velocity at the boundary vertices.

    Edge densities g_e = (1-p) F(Du)^p are averaged onto vertices with
    length weights; kappa is the length-weighted mean of g (the Lagrange
    multiplier of the volume constraint) and the returned velocities
    v_i = -(g_i - kappa_hat) n_i use the vertex-level multiplier
    kappa_hat that makes the discrete first-order volume change vanish
    identically.  Returns (velocity (nv, 2), kappa).
    """
    du = np.einsum("taj,tj->ta", mesh.grad_ops, pair.u[mesh.triangles])
    fp = model._value_impl(du[mesh.b_tri]) ** p
    g_e = (1.0 - p) * fp
    kappa = float((mesh.b_len @ g_e) / mesh.b_len.sum())

    nv = mesh.n_vertices
    g_acc = np.zeros(nv)
    l_acc = np.zeros(nv)
    s_acc = np.zeros((nv, 2))
    for idx in (mesh.b_vi, mesh.b_vj):
        np.add.at(g_acc, idx, 0.5 * mesh.b_len * g_e)
        np.add.at(l_acc, idx, 0.5 * mesh.b_len)
        np.add.at(s_acc, idx, 0.5 * mesh.b_len[:, None] * mesh.b_normal)
    bnd = np.flatnonzero(mesh.is_boundary_vertex)
    g_hat = g_acc[bnd] / l_acc[bnd]
    s = s_acc[bnd]
    n_hat = s / np.linalg.norm(s, axis=1, keepdims=True)
    ns = np.einsum("ij,ij->i", n_hat, s)
    kappa_hat = float((g_hat @ ns) / ns.sum())

    velocity = np.zeros((nv, 2))
    velocity[bnd] = -(g_hat - kappa_hat)[:, None] * n_hat
    return velocity, kappa


def _tangential_relaxation(mesh: TriMesh, beta: float = 0.4):
    """Tangential pull of each boundary vertex toward its neighbors'
    midpoint.  Normal component is projected out, so the domain is
    unchanged to first order; this only equidistributes boundary
    vertices, which keeps corners from collapsing mesh quality as they
    round out under the flow."""
    nv = mesh.n_vertices
    nxt = np.full(nv, -1, dtype=np.int64)
    prv = np.full(nv, -1, dtype=np.int64)
    nxt[mesh.b_vi] = mesh.b_vj
    prv[mesh.b_vj] = mesh.b_vi
    bnd = np.flatnonzero(mesh.is_boundary_vertex)
    x = mesh.vertices
    mid = 0.5 * (x[nxt[bnd]] + x[prv[bnd]]) - x[bnd]
    chord = x[nxt[bnd]] - x[prv[bnd]]
    t_hat = chord / np.linalg.norm(chord, axis=1, keepdims=True)
    disp = np.zeros((nv, 2))
    disp[bnd] = beta * np.einsum("ij,ij->i", mid, t_hat)[:, None] * t_hat
    return disp


def _harmonic_extension(mesh: TriMesh, boundary_disp):
    """Interior displacements solving a Laplace problem with the given
    boundary displacements as Dirichlet data."""
    K = DiscreteProblem(mesh, EuclideanNorm(), 2.0).stiffness_matrix()
    interior = mesh.interior_idx
    bnd = np.flatnonzero(mesh.is_boundary_vertex)
    if len(interior) == 0:
        return boundary_disp
    K_ii = K[interior][:, interior].tocsc()
    K_ib = K[interior][:, bnd]
    lu = spla.splu(K_ii)
    disp = boundary_disp.copy()
    for c in range(2):
        disp[interior, c] = lu.solve(-K_ib @ boundary_disp[bnd, c])
    return disp


def _rescaled_to_volume(verts, tris, target_volume):
    """Homothety about the area centroid restoring the target volume."""
    p = verts[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 1, 1] - p[:, 0, 1]
    ) * (p[:, 2, 0] - p[:, 0, 0])
    areas = 0.5 * det
    vol = float(areas.sum())
    cent = (areas @ p.mean(axis=1)) / vol
    s = math.sqrt(target_volume / vol)
    return cent + s * (verts - cent)


def _wulff_reference(model: AnisotropyModel, p: float, volume: float, h: float,
                     opts: SolverOpts):
    """Scale-invariant product lambda |Omega|^(p/2) of the Wulff shape,
    computed at a resolution comparable to the flow mesh."""
    kappa = wulff_area(model, 4096)
    h_w = h * math.sqrt(kappa / volume)
    mesh_w = generate(Wulff(model, 1.0), h_w)
    lam_w = solve_first(mesh_w, model, p, opts).lam
    return lam_w * mesh_w.area ** (0.5 * p)


def flow(initial, model: AnisotropyModel, p: float,
         opts: FlowOpts | None = None) -> FlowState:
    """Run the volume-constrained shape descent from an initial shape or
    mesh; the eigenvalue history is non-increasing by backtracking line
    search and the volume is conserved exactly by rescaling."""
    opts = opts or FlowOpts()
    mesh = initial if isinstance(initial, TriMesh) else generate(initial, opts.h)
    volume0 = mesh.area
    ref = _wulff_reference(model, p, volume0, opts.h, opts.solver)

    pair = solve_first(mesh, model, p, opts.solver)
    lam = pair.lam
    step = opts.step0
    history = []
    converged = False
    message = "max_iter reached"
    quality_stop = False
    it = 0
    for it in range(opts.max_iter):
        velocity, _ = shape_gradient(mesh, pair, model, p)
        deficit = lam * mesh.area ** (0.5 * p) / ref - 1.0
        history.append(FlowRecord(it, lam, mesh.area, deficit, step))
        if opts.snapshot_cb is not None and opts.snapshot_every and it % opts.snapshot_every == 0:
            opts.snapshot_cb(it, mesh, pair)
        vmax = float(np.hypot(velocity[:, 0], velocity[:, 1]).max())
        if vmax * step < opts.tol_geo:
            converged = True
            message = "boundary velocity below tolerance"
            break

        accepted = False
        quality_fail = False
        relax = _tangential_relaxation(mesh)
        step = min(step, 0.5 * opts.h / vmax)
        step_entry = step
        while True:
            if vmax * step < opts.tol_geo:
                break
            try:
                # tangential redistribution shrinks with the step so the
                # zero-step limit is the unperturbed mesh
                bdisp = step * velocity + (step / step_entry) * relax
                disp = _harmonic_extension(mesh, bdisp)
                verts = _rescaled_to_volume(mesh.vertices + disp, mesh.triangles, volume0)
                trial = TriMesh(verts, mesh.triangles, shape=None)
                quality_fail = trial.min_angle() < opts.min_angle_deg
            except MeshError:
                quality_fail = True
            if quality_fail:
                step *= 0.5
                continue
            trial_pair = solve_first(trial, model, p, opts.solver)
            if trial_pair.lam < lam:
                mesh, pair, lam = trial, trial_pair, trial_pair.lam
                accepted = True
                step *= 1.5
                break
            step *= 0.5
        if not accepted:
            converged = not quality_fail
            quality_stop = quality_fail
            message = (
                "mesh quality floor prevents further descent; remesh advised"
                if quality_fail
                else "line search exhausted (stationary within resolution)"
            )
            break
    deficit = lam * mesh.area ** (0.5 * p) / ref - 1.0
    history.append(FlowRecord(it + 1, lam, mesh.area, deficit, step))
    return FlowState(mesh, lam, step, mesh.area, it + 1, history,
                     converged and not quality_stop, message)
