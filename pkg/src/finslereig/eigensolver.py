"""First Dirichlet eigenpair of the anisotropic p-Laplacian.

Discretization: P1 elements with per-triangle constant gradients, so the
anisotropic energy integral is exact per triangle; the p-mass uses the
3-point edge-midpoint rule (exact for p = 2).  The transplanted problem
on phi(Omega) is assembled on the reference mesh through per-triangle
affine Jacobians, which makes it algebraically identical to assembling
on the mapped mesh.

The solver minimizes the Rayleigh quotient by an inverse-power outer
loop: given the current normalized iterate u, minimize the (smoothed)
energy over the affine slice where the linearized mass pairing with u
equals one, then renormalize.  Both steps only ever decrease the
quotient, so the eigenvalue iterates are non-increasing.  The gradient
singularity at Du = 0 is removed by a continuation over the smoothing
parameter of (F^2 + eps)^(p/2), finishing at eps = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import AnisotropyModel, EuclideanNorm
from .mesh import MeshError, TriMesh

__all__ = [
    "SolverOpts",
    "EigenPair",
    "SolverError",
    "DiscreteProblem",
    "energy",
    "mass",
    "solve_first",
    "solve_pullback",
]

DEFAULT_EPS_SCHEDULE = (1e-2, 1e-4, 1e-8, 0.0)

# midpoint quadrature: basis-product matrix of the 3-edge-midpoint rule
_MASS_LOCAL = np.array(
    [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]]
) / 3.0
_MID_PAIRS = ((0, 1), (1, 2), (2, 0))


@dataclass
class SolverOpts:
    """Solver options, mirrored by the CLI flags."""

    tol: float = 1e-10
    max_iter: int = 10000
    eps_schedule: tuple = DEFAULT_EPS_SCHEDULE
    method: str = "inverse-power"  # or "rayleigh-descent"
    inner: str = "newton"  # or "lbfgs"
    inner_max_iter: int = 60
    seed: int | None = None
    verbose: bool = False


@dataclass
class EigenPair:
    """First eigenvalue and its positive, p-mass-normalized eigenfunction.

    ``u`` holds per-vertex coefficients (zero on the boundary) on the
    mesh the solve was run on (the reference mesh for pullback solves).
    """

    lam: float
    u: np.ndarray
    p: float
    residual: float
    history: list = field(default_factory=list, repr=False)


class SolverError(RuntimeError):
    """Non-convergence or an invalid converged state; carries the last
    iterate and its residual."""

    def __init__(self, message, pair=None, residual=None):
        super().__init__(message)
        self.pair = pair
        self.residual = residual


class DiscreteProblem:
    """Assembled energy/mass of the (possibly transplanted) eigenproblem.

    ``jac`` (nt, 2, 2) composes per-triangle gradients into image-domain
    gradients and ``det`` (nt,) carries the volume element; both default
    to the identity problem on the mesh itself.
    """

    def __init__(self, mesh: TriMesh, model: AnisotropyModel, p: float,
                 jac=None, det=None):
        if not p > 1:
            raise ValueError(f"exponent p must be > 1 (got {p})")
        self.mesh = mesh
        self.model = model
        self.p = float(p)
        self.tris = mesh.triangles
        if jac is None:
            self.geff = mesh.grad_ops
            self.w = mesh.tri_areas.copy()
        else:
            self.geff = np.einsum("tab,tbj->taj", jac, mesh.grad_ops)
            self.w = mesh.tri_areas * det
        self.interior = mesh.interior_idx
        self.n_int = len(self.interior)
        self.nv = mesh.n_vertices
        self._lu_metric = None

    # -- element evaluations ---------------------------------------------

    def du(self, u):
        """Per-triangle constant gradients (nt, 2) of a full coefficient
        vector, in image-domain coordinates."""
        return np.einsum("taj,tj->ta", self.geff, u[self.tris])

    def energy_value(self, u, eps=0.0):
        f = self.model._value_impl(self.du(u))
        return float(self.w @ (f * f + eps) ** (0.5 * self.p))

    def energy_value_grad(self, u, eps=0.0):
        """Energy and its gradient with respect to all vertex values."""
        du = self.du(u)
        f = self.model._value_impl(du)
        s = f * f + eps
        val = float(self.w @ s ** (0.5 * self.p))
        dens = np.zeros_like(du)
        nz = f > 0.0
        if np.any(nz):
            gf = self.model._gradient_impl(du[nz])
            coef = self.p * s[nz] ** (0.5 * self.p - 1.0) * f[nz]
            dens[nz] = coef[:, None] * gf
        contrib = np.einsum("ta,taj->tj", dens * self.w[:, None], self.geff)
        grad = np.bincount(self.tris.ravel(), weights=contrib.ravel(), minlength=self.nv)
        return val, grad

    def _midvals(self, u):
        ut = u[self.tris]
        return 0.5 * (ut + np.roll(ut, -1, axis=1))  # midpoints of edges 01, 12, 20

    def mass_value(self, u):
        um = self._midvals(u)
        return float((self.w / 3.0) @ (np.abs(um) ** self.p).sum(axis=1))

    def mass_value_grad(self, u):
        um = self._midvals(u)
        val = float((self.w / 3.0) @ (np.abs(um) ** self.p).sum(axis=1))
        dmid = np.abs(um) ** (self.p - 1.0) * np.sign(um)
        dmid *= (self.p / 6.0) * self.w[:, None]  # 1/3 weight times 1/2 per endpoint
        grad = np.zeros(self.nv)
        contrib = dmid + np.roll(dmid, 1, axis=1)  # each vertex touches two midpoints
        np.add.at(grad, self.tris, contrib)
        return val, grad

    # -- matrix assembly ---------------------------------------------------

    def _assemble(self, blocks):
        rows = np.broadcast_to(self.tris[:, :, None], blocks.shape).ravel()
        cols = np.broadcast_to(self.tris[:, None, :], blocks.shape).ravel()
        return sp.coo_matrix(
            (blocks.ravel(), (rows, cols)), shape=(self.nv, self.nv)
        ).tocsr()

    def stiffness_matrix(self, metric=None):
        """Full stiffness for the quadratic energy Du' metric Du."""
        if metric is None:
            blocks = np.einsum("tai,taj->tij", self.geff, self.geff)
        else:
            blocks = np.einsum("tai,ab,tbj->tij", self.geff, metric, self.geff)
        return self._assemble(blocks * self.w[:, None, None])

    def mass_matrix(self):
        blocks = _MASS_LOCAL[None, :, :] * self.w[:, None, None]
        return self._assemble(blocks)

    def hessian_matrix(self, u, eps):
        """Interior Hessian of the smoothed energy at u (sparse CSR)."""
        du = self.du(u)
        f = self.model._value_impl(du)
        s = f * f + eps
        p = self.p
        d = np.zeros((len(du), 2, 2))
        nz = f > 0.0
        if np.any(nz):
            gf = self.model._gradient_impl(du[nz])
            hf = self.model._hessian_impl(du[nz])
            outer = gf[:, :, None] * gf[:, None, :]
            snz = s[nz]
            d[nz] = p * (
                (snz ** (0.5 * p - 1.0))[:, None, None]
                * (f[nz][:, None, None] * hf + outer)
                + ((p - 2.0) * snz ** (0.5 * p - 2.0) * f[nz] ** 2)[:, None, None]
                * outer
            )
        blocks = np.einsum("tai,tab,tbj->tij", self.geff, d, self.geff)
        H = self._assemble(blocks * self.w[:, None, None])
        Hi = H[self.interior][:, self.interior].tocsc()
        # tiny ridge keeps the factorization robust where Du vanishes
        ridge = 1e-14 * (Hi.diagonal().mean() if Hi.nnz else 1.0)
        return Hi + ridge * sp.identity(self.n_int, format="csc")

    # -- helpers -----------------------------------------------------------

    def embed(self, x):
        u = np.zeros(self.nv)
        u[self.interior] = x
        return u

    def normalize(self, u):
        val = self.mass_value(u)
        if not val > 0:
            raise SolverError("iterate has vanishing p-mass")
        u = u / val ** (1.0 / self.p)
        if u[self.interior].sum() < 0:
            u = -u
        return u

    def linear_init(self):
        """First eigenvector of the p = 2 Euclidean problem (linear solve);
        cheap, positive, and in the basin of the first eigenpair."""
        K = self.stiffness_matrix()[self.interior][:, self.interior]
        M = self.mass_matrix()[self.interior][:, self.interior]
        n = self.n_int
        if n < 40:
            w, v = scipy.linalg.eigh(K.toarray(), M.toarray())
            x = v[:, 0]
        else:
            v0 = np.ones(n) / math.sqrt(n)
            _, v = spla.eigsh(K.tocsc(), k=1, M=M.tocsc(), sigma=0.0, which="LM", v0=v0)
            x = v[:, 0]
        return self.normalize(self.embed(x))

    # -- inner minimizations -------------------------------------------

    def _prepare_quadratic(self):
        A = self.model.quadratic_form()
        K = self.stiffness_matrix(metric=A)[self.interior][:, self.interior]
        self._lu_metric = spla.splu(K.tocsc())

    def _inner_quadratic(self, u, eps, m_int):
        w = self._lu_metric.solve(m_int)
        return self.embed(w / (m_int @ w))

    def _inner_newton(self, u, eps, m_int, opts):
        x = u[self.interior].copy()
        e_val, g_full = self.energy_value_grad(self.embed(x), eps)
        g = g_full[self.interior]
        for _ in range(opts.inner_max_iter):
            H = self.hessian_matrix(self.embed(x), eps)
            try:
                lu = spla.splu(H)
                a = lu.solve(g)
                b = lu.solve(m_int)
            except RuntimeError:
                return self._inner_lbfgs(self.embed(x), eps, m_int, opts)
            mb = m_int @ b
            if mb == 0.0:
                break
            delta = -(a - ((m_int @ a) / mb) * b)
            dec = -(g @ delta)
            if not dec > 1e-14 * max(abs(e_val), 1e-300):
                break
            t = 1.0
            accepted = False
            while t > 2.0 ** -40:
                e_new, g_new_full = self.energy_value_grad(self.embed(x + t * delta), eps)
                if e_new <= e_val - 1e-4 * t * dec:
                    x = x + t * delta
                    e_val, g = e_new, g_new_full[self.interior]
                    accepted = True
                    break
                t *= 0.5
            if not accepted:
                break
        return self.embed(x)

    def _inner_lbfgs(self, u, eps, m_int, opts):
        from scipy.optimize import minimize

        x0 = u[self.interior]
        c = m_int / (m_int @ m_int)

        def fun(y):
            x = x0 + y - c * (m_int @ y)
            val, g_full = self.energy_value_grad(self.embed(x), eps)
            g = g_full[self.interior]
            return val, g - m_int * (c @ g)

        res = minimize(
            fun,
            np.zeros_like(x0),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 800, "gtol": 1e-14, "ftol": 1e-16},
        )
        y = res.x
        return self.embed(x0 + y - c * (m_int @ y))

    # -- drivers -----------------------------------------------------------

    def solve(self, opts: SolverOpts | None = None) -> EigenPair:
        opts = opts or SolverOpts()
        if self.n_int == 0:
            raise SolverError("mesh has no interior degrees of freedom")
        if opts.method == "rayleigh-descent":
            return self._solve_descent(opts)
        if opts.method != "inverse-power":
            raise ValueError(f"unknown method {opts.method!r}")

        quadratic = self.model.quadratic_form() is not None and self.p == 2.0
        if quadratic:
            self._prepare_quadratic()
        u = self.linear_init()
        history = []
        residual = math.inf
        for eps in opts.eps_schedule:
            lam = self.energy_value(u, eps)
            stage = [lam]
            converged = False
            for _ in range(opts.max_iter):
                _, mgrad = self.mass_value_grad(u)
                m_int = mgrad[self.interior] / self.p  # <m, u> = 1 by homogeneity
                if quadratic:
                    w = self._inner_quadratic(u, eps, m_int)
                elif opts.inner == "newton":
                    w = self._inner_newton(u, eps, m_int, opts)
                else:
                    w = self._inner_lbfgs(u, eps, m_int, opts)
                u_new = self.normalize(w)
                lam_new = self.energy_value(u_new, eps)
                rel = abs(lam_new - lam) / abs(lam)
                u, lam = u_new, lam_new
                stage.append(lam)
                if rel < opts.tol:
                    converged = True
                    residual = rel
                    break
            history.append((eps, stage))
            if not converged:
                pair = EigenPair(self.energy_value(u, 0.0), u, self.p, rel, history)
                raise SolverError(
                    f"stage eps={eps:g} did not converge within {opts.max_iter} "
                    f"iterations (last relative change {rel:.3e})",
                    pair=pair,
                    residual=rel,
                )
        return self._finalize(u, residual, history)

    def _solve_descent(self, opts):
        """Fallback: direct normalized gradient descent on the quotient."""
        u = self.linear_init()
        history = []
        residual = math.inf
        for eps in opts.eps_schedule:
            e_val, e_grad = self.energy_value_grad(u, eps)
            lam = e_val  # mass is 1 after normalization
            stage = [lam]
            step = 1.0 / max(lam, 1.0)
            converged = False
            for _ in range(opts.max_iter):
                _, m_grad = self.mass_value_grad(u)
                g = (e_grad - lam * m_grad)[self.interior]
                gnorm2 = float(g @ g)
                if gnorm2 == 0.0:
                    converged = True
                    residual = 0.0
                    break
                d = np.zeros(self.nv)
                d[self.interior] = -g
                accepted = False
                for _ in range(60):
                    trial = self.normalize(u + step * d)
                    e_new, e_grad_new = self.energy_value_grad(trial, eps)
                    if e_new < lam:
                        accepted = True
                        break
                    step *= 0.5
                if not accepted:
                    converged = True  # stagnated at line-search resolution
                    residual = 0.0
                    break
                rel = abs(e_new - lam) / abs(lam)
                u, lam, e_grad = trial, e_new, e_grad_new
                stage.append(lam)
                step *= 2.0
                if rel < opts.tol:
                    converged = True
                    residual = rel
                    break
            history.append((eps, stage))
            if not converged:
                pair = EigenPair(self.energy_value(u, 0.0), u, self.p, rel, history)
                raise SolverError(
                    f"rayleigh descent stalled at eps={eps:g}", pair=pair, residual=rel
                )
        return self._finalize(u, residual, history)

    def _finalize(self, u, residual, history):
        u = self.normalize(u)
        lam = self.energy_value(u, 0.0)
        pair = EigenPair(lam, u, self.p, residual, history)
        interior_min = u[self.interior].min()
        if not interior_min > 0:
            raise SolverError(
                f"converged eigenfunction is not positive at every interior vertex "
                f"(min {interior_min:.3e}); suspect solve",
                pair=pair,
                residual=residual,
            )
        return pair


# ----------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------


def energy(mesh: TriMesh, model: AnisotropyModel, p: float, eps: float, u):
    """Discrete anisotropic Dirichlet energy sum_T |T| (F(Du)^2 + eps)^(p/2)
    and its gradient over interior DOFs."""
    prob = DiscreteProblem(mesh, model, p)
    val, grad = prob.energy_value_grad(np.asarray(u, dtype=float), eps)
    return val, grad[mesh.interior_idx]


def mass(mesh: TriMesh, p: float, u):
    """Discrete p-mass by the 3-point edge-midpoint rule (exact for p = 2)
    and its gradient over interior DOFs."""
    prob = DiscreteProblem(mesh, EuclideanNorm(), p)
    val, grad = prob.mass_value_grad(np.asarray(u, dtype=float))
    return val, grad[mesh.interior_idx]


def solve_first(mesh: TriMesh, model: AnisotropyModel, p: float,
                opts: SolverOpts | None = None) -> EigenPair:
    """First eigenpair on the mesh itself."""
    return DiscreteProblem(mesh, model, p).solve(opts)


def pullback_problem(ref_mesh: TriMesh, phi, model: AnisotropyModel, p: float) -> DiscreteProblem:
    """Assemble the eigenproblem of phi(Omega) on the reference mesh.

    phi maps vertex arrays (n, 2) -> (n, 2); its per-triangle affine
    Jacobian B gives gradients B^{-T} Dv and volume weights det B.
    """
    img = np.asarray(phi(ref_mesh.vertices), dtype=float)
    if img.shape != ref_mesh.vertices.shape:
        raise MeshError("map must return one image point per vertex")
    p_img = img[ref_mesh.triangles]
    e1 = p_img[:, 1] - p_img[:, 0]
    e2 = p_img[:, 2] - p_img[:, 0]
    det_img = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det_img <= 0):
        bad = int(np.flatnonzero(det_img <= 0)[0])
        raise MeshError(f"map flips or degenerates triangle {bad} (det Dphi <= 0)")
    # B = M_img M_ref^{-1}, so B^{-T} = (M_ref M_img^{-1})^T
    m_ref = ref_mesh._edge_mats  # columns (e1, e2) of the reference triangle
    m_img_inv = np.empty((len(e1), 2, 2))
    m_img_inv[:, 0, 0] = e2[:, 1]
    m_img_inv[:, 0, 1] = -e2[:, 0]
    m_img_inv[:, 1, 0] = -e1[:, 1]
    m_img_inv[:, 1, 1] = e1[:, 0]
    m_img_inv /= det_img[:, None, None]
    jac = np.einsum("tcb,tba->tac", m_ref, m_img_inv)  # (M_ref M_img^{-1})^T
    det = det_img / (2.0 * ref_mesh.tri_areas)
    return DiscreteProblem(ref_mesh, model, p, jac=jac, det=det)


def solve_pullback(ref_mesh: TriMesh, phi, model: AnisotropyModel, p: float,
                   opts: SolverOpts | None = None) -> EigenPair:
    """Eigenvalue of phi(Omega) computed on the reference mesh; the
    returned coefficients are the pullback v = u ∘ phi."""
    return pullback_problem(ref_mesh, phi, model, p).solve(opts)
