"""Named verification checks for the eigenvalue identities.

Each check solves on one or more meshes, records a convergence table of
(h, observed, expected, rel_err) rows, and issues a pass/fail verdict:
identities that hold discretely-exactly (scaling, the algebraic
Rellich-Pohozaev / Hadamard relation) are held to 1e-10, identities that
only hold in the continuum limit (boundary integrals, Faber-Krahn) to a
few percent at the finest level, usually together with a monotone-decay
requirement across levels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .anisotropy import AnisotropyModel, wulff_area
from .eigensolver import SolverOpts, solve_first
from .mesh import Disk, Square, TriMesh, Wulff, generate, parse_shape, refine, scale_mesh
from .shapecalc import (
    d_lambda_fd,
    d_lambda_hadamard,
    d_lambda_volume,
    identity_field,
    radial_bump_field,
    rellich_pohozaev_check,
)

__all__ = [
    "CheckLevel",
    "CheckResult",
    "check_scaling",
    "check_monotonicity",
    "check_ps_inequality",
    "check_faber_krahn",
    "check_overdetermined",
    "check_rellich",
    "check_hadamard",
    "run_suite",
    "SUITES",
]


@dataclass
class CheckLevel:
    h: float
    observed: float
    expected: float
    rel_err: float


@dataclass
class CheckResult:
    name: str
    levels: list
    verdict: bool
    tolerance: float
    runtime: float
    note: str = ""

    def table(self) -> str:
        lines = [f"[{'PASS' if self.verdict else 'FAIL'}] {self.name}  "
                 f"(tol {self.tolerance:g}, {self.runtime:.1f}s)"]
        for lv in self.levels:
            lines.append(
                f"    h={lv.h:<9.4g} observed={lv.observed:< 15.8g} "
                f"expected={lv.expected:< 15.8g} rel_err={lv.rel_err:.3e}"
            )
        if self.note:
            lines.append(f"    {self.note}")
        return "\n".join(lines)

    def to_dict(self):
        return {
            "name": self.name,
            "verdict": bool(self.verdict),
            "tolerance": self.tolerance,
            "runtime_s": self.runtime,
            "note": self.note,
            "levels": [
                {"h": lv.h, "observed": lv.observed, "expected": lv.expected,
                 "rel_err": lv.rel_err}
                for lv in self.levels
            ],
        }


def _shape(shape, model):
    return parse_shape(shape, model) if isinstance(shape, str) else shape


def _ladder(shape, h0, n_levels):
    meshes = [generate(shape, h0)]
    for _ in range(n_levels - 1):
        meshes.append(refine(meshes[-1]))
    return meshes


def check_scaling(shape, model: AnisotropyModel, p: float, t: float,
                  h: float = 0.1, opts: SolverOpts | None = None) -> CheckResult:
    """lambda(t Omega) = t^-p lambda(Omega), discretely exact."""
    t0 = time.perf_counter()
    opts = opts or SolverOpts(tol=1e-13)
    mesh = generate(_shape(shape, model), h)
    lam = solve_first(mesh, model, p, opts).lam
    lam_t = solve_first(scale_mesh(mesh, t), model, p, opts).lam
    expected = lam * t ** (-p)
    rel = abs(lam_t - expected) / abs(expected)
    lv = CheckLevel(mesh.h, lam_t, expected, rel)
    return CheckResult(
        f"scaling[{shape} t={t:g} p={p:g}]", [lv], rel <= 1e-10, 1e-10,
        time.perf_counter() - t0,
    )


def check_monotonicity(outer_shape, inner_shape, model: AnisotropyModel, p: float,
                       h: float = 0.05, opts: SolverOpts | None = None) -> CheckResult:
    """Domain monotonicity: inner subset of outer implies a larger eigenvalue."""
    t0 = time.perf_counter()
    opts = opts or SolverOpts()
    mesh_out = generate(_shape(outer_shape, model), h)
    mesh_in = generate(_shape(inner_shape, model), h)
    lam_out = solve_first(mesh_out, model, p, opts).lam
    lam_in = solve_first(mesh_in, model, p, opts).lam
    ratio = lam_in / lam_out
    lv = CheckLevel(mesh_out.h, lam_in, lam_out, max(0.0, 1.0 - ratio))
    return CheckResult(
        f"monotonicity[{inner_shape} in {outer_shape} p={p:g}]",
        [lv], lam_in > lam_out, 0.0, time.perf_counter() - t0,
        note=f"ratio inner/outer = {ratio:.6f}",
    )


def check_ps_inequality(shape, model: AnisotropyModel, p: float, s: float,
                        h: float = 0.04, opts: SolverOpts | None = None) -> CheckResult:
    """p lambda_p^(1/p) <= s lambda_s^(1/s) for p < s (1% discrete slack)."""
    if not 1 < p <= s:
        raise ValueError(f"need 1 < p <= s (got p={p}, s={s})")
    t0 = time.perf_counter()
    opts = opts or SolverOpts()
    mesh = generate(_shape(shape, model), h)
    lam_p = solve_first(mesh, model, p, opts).lam
    lam_s = lam_p if s == p else solve_first(mesh, model, s, opts).lam
    lhs = p * lam_p ** (1.0 / p)
    rhs = s * lam_s ** (1.0 / s)
    lv = CheckLevel(mesh.h, lhs, rhs, max(0.0, (lhs - rhs) / rhs))
    return CheckResult(
        f"ps-inequality[{shape} p={p:g} s={s:g}]", [lv],
        lhs <= rhs * 1.01, 0.01, time.perf_counter() - t0,
    )


def check_faber_krahn(shape, model: AnisotropyModel, p: float,
                      h: float = 0.04, opts: SolverOpts | None = None) -> CheckResult:
    """lambda of the equal-area Wulff shape never exceeds lambda(shape)."""
    t0 = time.perf_counter()
    opts = opts or SolverOpts()
    mesh = generate(_shape(shape, model), h)
    kappa = wulff_area(model, 4096)
    sigma = (mesh.area / kappa) ** 0.5
    mesh_w = generate(Wulff(model, sigma), h)
    # match the discrete areas exactly
    mesh_w = scale_mesh(mesh_w, (mesh.area / mesh_w.area) ** 0.5)
    lam = solve_first(mesh, model, p, opts).lam
    lam_w = solve_first(mesh_w, model, p, opts).lam
    tol_h = 0.5 * h
    margin = (lam - lam_w) / lam
    lv = CheckLevel(mesh.h, lam_w, lam, -margin)
    return CheckResult(
        f"faber-krahn[{shape} {model.spec_string()} p={p:g}]", [lv],
        lam_w <= lam * (1.0 + tol_h), tol_h, time.perf_counter() - t0,
        note=f"relative margin lambda(shape) vs lambda(Wulff): {margin:+.4f}",
    )


def boundary_flux_cv(mesh: TriMesh, pair, model: AnisotropyModel) -> float:
    """Length-weighted coefficient of variation of F(Du) over the boundary."""
    du = np.einsum("taj,tj->ta", mesh.grad_ops, pair.u[mesh.triangles])
    c = model._value_impl(du[mesh.b_tri])
    w = mesh.b_len / mesh.b_len.sum()
    mean = float(w @ c)
    var = float(w @ (c - mean) ** 2)
    return var ** 0.5 / mean


def check_overdetermined(model: AnisotropyModel, p: float, refinements: int = 3,
                         h0: float = 0.1, opts: SolverOpts | None = None) -> CheckResult:
    """Constancy of the Finsler normal derivative on Wulff shapes.

    The CV of F(Du) over the boundary must decrease under refinement and
    reach <= 5%; the same statistic on the unit square (which is not a
    critical shape) must stay >= 20% as a negative control.
    """
    t0 = time.perf_counter()
    opts = opts or SolverOpts()
    levels = []
    cvs = []
    for mesh in _ladder(Wulff(model, 1.0), h0, refinements):
        pair = solve_first(mesh, model, p, opts)
        cv = boundary_flux_cv(mesh, pair, model)
        cvs.append(cv)
        levels.append(CheckLevel(mesh.h, cv, 0.0, cv))
    sq = generate(Square(1.0), levels[-1].h)
    cv_sq = boundary_flux_cv(sq, solve_first(sq, model, p, opts), model)
    decreasing = all(a > b for a, b in zip(cvs, cvs[1:]))
    verdict = decreasing and cvs[-1] <= 0.05 and cv_sq >= 0.20
    return CheckResult(
        f"overdetermined[{model.spec_string()} p={p:g}]", levels, verdict, 0.05,
        time.perf_counter() - t0,
        note=f"square negative control CV = {cv_sq:.3f} (needs >= 0.20)",
    )


def check_rellich(shape, model: AnisotropyModel, p: float, refinements: int = 3,
                  h0: float = 0.08, opts: SolverOpts | None = None) -> CheckResult:
    """Rellich-Pohozaev identity across a refinement ladder."""
    t0 = time.perf_counter()
    opts = opts or SolverOpts()
    levels = []
    errs = []
    for mesh in _ladder(_shape(shape, model), h0, refinements):
        pair = solve_first(mesh, model, p, opts)
        res = rellich_pohozaev_check(mesh, pair, model, p)
        errs.append(res.rel_err)
        levels.append(CheckLevel(mesh.h, res.rhs, res.lhs, res.rel_err))
    decreasing = all(a > b for a, b in zip(errs, errs[1:]))
    verdict = decreasing and errs[-1] <= 0.02
    return CheckResult(
        f"rellich[{shape} {model.spec_string()} p={p:g}]", levels, verdict, 0.02,
        time.perf_counter() - t0,
    )


def check_hadamard(shape, model: AnisotropyModel, p: float, field=None,
                   refinements: int = 2, h0: float = 0.06,
                   opts: SolverOpts | None = None, with_fd: bool = True) -> CheckResult:
    """Agreement of the volume, boundary, and finite-difference forms.

    For the dilation field the boundary form must also match -p lambda
    within 2% at the finest level.
    """
    t0 = time.perf_counter()
    opts = opts or SolverOpts(tol=1e-13)
    is_dilation = field is None or getattr(field, "name", "") == "identity"
    if field is None:
        field = identity_field()
    levels = []
    errs = []
    note = ""
    final_ok = True
    meshes = _ladder(_shape(shape, model), h0, refinements)
    for mesh in meshes:
        pair = solve_first(mesh, model, p, opts)
        d_vol = d_lambda_volume(mesh, pair, model, p, field)
        d_had = d_lambda_hadamard(mesh, pair, model, p, field)
        rel = abs(d_had - d_vol) / max(abs(d_vol), 1e-300)
        errs.append(rel)
        levels.append(CheckLevel(mesh.h, d_had, d_vol, rel))
        if is_dilation:
            dil_err = abs(d_had + p * pair.lam) / (p * pair.lam)
            note = f"dilation: |d_hadamard + p*lambda|/(p*lambda) = {dil_err:.4f}"
            final_ok = dil_err <= 0.02
    if with_fd:
        d_fd, step = d_lambda_fd(meshes[-1], None, field, model, p, opts=opts)
        d_had = levels[-1].observed
        fd_rel = abs(d_fd - d_had) / max(abs(d_had), 1e-300)
        final_ok = final_ok and fd_rel <= 0.05
        note = (note + "; " if note else "") + f"fd={d_fd:.6g} (t={step:.2g}), vs hadamard {fd_rel:.4f}"
    decreasing = len(errs) < 2 or all(a >= b for a, b in zip(errs, errs[1:]))
    verdict = final_ok and errs[-1] <= 0.05 and decreasing
    return CheckResult(
        f"hadamard[{shape} {model.spec_string()} p={p:g} field={field.name}]",
        levels, verdict, 0.05, time.perf_counter() - t0, note=note,
    )


# ----------------------------------------------------------------------
# suite plumbing
# ----------------------------------------------------------------------


def _suite_scaling(model, p, levels, opts):
    out = []
    for shape in ("disk:1", "square:1"):
        for t in (2.0, 0.5):
            out.append(check_scaling(shape, model, p, t, opts=opts))
    return out

def _suite_monotonicity(model, p, levels, opts):
    return [
        check_monotonicity("square:1", "square:0.5", model, p, opts=opts),
        check_monotonicity("disk:1", "disk:0.9", model, p, opts=opts),
    ]

def _suite_ps(model, p, levels, opts):
    out = []
    for shape in ("disk:1", "square:1"):
        for pp, ss in ((1.5, 2.0), (2.0, 3.0)):
            out.append(check_ps_inequality(shape, model, pp, ss, opts=opts))
    return out

def _suite_faber_krahn(model, p, levels, opts):
    return [check_faber_krahn("square:1", model, p, opts=opts)]

def _suite_overdetermined(model, p, levels, opts):
    return [check_overdetermined(model, p, refinements=levels, opts=opts)]

def _suite_rellich(model, p, levels, opts):
    return [check_rellich(Wulff(model, 1.0), model, p, refinements=levels, opts=opts)]

def _suite_hadamard(model, p, levels, opts):
    bump = radial_bump_field((0.6, 0.0), 0.8, 1.0)
    return [
        check_hadamard("disk:1", model, p, refinements=levels, opts=opts),
        check_hadamard("disk:1", model, p, field=bump, refinements=levels, opts=opts),
    ]


SUITES = {
    "scaling": _suite_scaling,
    "monotonicity": _suite_monotonicity,
    "ps": _suite_ps,
    "faber-krahn": _suite_faber_krahn,
    "overdetermined": _suite_overdetermined,
    "rellich": _suite_rellich,
    "hadamard": _suite_hadamard,
}


def run_suite(suite: str, model: AnisotropyModel, p: float, levels: int = 3,
              opts: SolverOpts | None = None) -> list[CheckResult]:
    """Run one named suite (or 'all'); returns its CheckResults."""
    names = list(SUITES) if suite == "all" else [suite]
    results = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; choose from {['all'] + list(SUITES)}")
        results.extend(SUITES[name](model, p, levels, opts))
    return results
