import numpy as np
import pytest

import finslereig as fe
from finslereig.eigensolver import DiscreteProblem, SolverError, SolverOpts

from oracles import DISK_LAMBDA_P2, SQUARE_LAMBDA_P2

RNG = np.random.default_rng(7)
TIGHT = SolverOpts(tol=1e-13)


def hand_stiffness(mesh):
    """Independent per-triangle stiffness assembly from coordinates."""
    nv = mesh.n_vertices
    K = np.zeros((nv, nv))
    for tri in mesh.triangles:
        p = mesh.vertices[tri]
        e1, e2 = p[1] - p[0], p[2] - p[0]
        area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
        grads = []
        for k in range(3):
            a, b = p[(k + 1) % 3], p[(k + 2) % 3]
            edge = b - a
            g = np.array([-edge[1], edge[0]]) / (2.0 * area)
            mid = (a + b) / 2.0
            if np.dot(g, p[k] - mid) < 0:
                g = -g
            grads.append(g)
        for i in range(3):
            for j in range(3):
                K[tri[i], tri[j]] += area * np.dot(grads[i], grads[j])
    return K


def random_coefficients(mesh, interior_only=True):
    u = RNG.standard_normal(mesh.n_vertices)
    if interior_only:
        u[mesh.is_boundary_vertex] = 0.0
    return u


# -- energy -------------------------------------------------------------


def test_energy_zero_function(square_mesh, euclid):
    val, grad = fe.energy(square_mesh, euclid, 2.0, 0.0, np.zeros(square_mesh.n_vertices))
    assert val == 0.0
    np.testing.assert_array_equal(grad, 0.0)


def test_energy_matches_hand_assembled_stiffness(euclid):
    mesh = fe.generate(fe.Square(1.0), 0.5)  # the 8-triangle grid
    K = hand_stiffness(mesh)
    # center hat function: classical 5-point stiffness diagonal
    center = int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))
    hat = np.zeros(mesh.n_vertices)
    hat[center] = 1.0
    assert K[center, center] == pytest.approx(4.0, rel=1e-14)
    val, _ = fe.energy(mesh, euclid, 2.0, 0.0, hat)
    assert val == pytest.approx(4.0, rel=1e-13)
    for _ in range(20):
        u = RNG.standard_normal(mesh.n_vertices)
        val, _ = fe.energy(mesh, euclid, 2.0, 0.0, u)
        assert val == pytest.approx(float(u @ K @ u), rel=1e-12)


@pytest.mark.parametrize("spec,p,eps", [
    ("euclidean", 2.0, 0.0),
    ("euclidean", 2.7, 0.01),
    ("lq:4", 3.0, 0.0),
    ("lq:4", 1.6, 0.01),
    ("ellipse:2,0.6,1.5", 2.3, 0.0),
    ("reg:lq:4:0.05", 1.8, 0.0),
])
def test_energy_gradient_finite_differences(spec, p, eps):
    mesh = fe.generate(fe.Disk(1.0), 0.35)
    model = fe.parse_model(spec)
    u = random_coefficients(mesh, interior_only=False)
    val, grad = fe.energy(mesh, model, p, eps, u)
    h = 1e-6
    for dof, vid in enumerate(mesh.interior_idx):
        up, um = u.copy(), u.copy()
        up[vid] += h
        um[vid] -= h
        fd = (fe.energy(mesh, model, p, eps, up)[0]
              - fe.energy(mesh, model, p, eps, um)[0]) / (2 * h)
        assert fd == pytest.approx(grad[dof], rel=1e-5, abs=1e-7)


# -- mass ---------------------------------------------------------------


def test_mass_constant_function(square_mesh):
    val, _ = fe.mass(square_mesh, 2.0, np.ones(square_mesh.n_vertices))
    assert val == pytest.approx(1.0, rel=1e-14)


def test_mass_exact_quadratic_single_triangle():
    mesh = fe.TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    u = mesh.vertices[:, 0]  # u = x; integral of x^2 over the triangle = 1/12
    val, _ = fe.mass(mesh, 2.0, u)
    assert val == pytest.approx(1.0 / 12.0, rel=1e-15)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.2])
def test_mass_gradient_finite_differences(p):
    mesh = fe.generate(fe.Disk(1.0), 0.4)
    u = random_coefficients(mesh, interior_only=False)
    val, grad = fe.mass(mesh, p, u)
    h = 1e-6
    for dof, vid in enumerate(mesh.interior_idx):
        up, um = u.copy(), u.copy()
        up[vid] += h
        um[vid] -= h
        fd = (fe.mass(mesh, p, up)[0] - fe.mass(mesh, p, um)[0]) / (2 * h)
        assert fd == pytest.approx(grad[dof], rel=1e-5, abs=1e-8)


# -- solve_first --------------------------------------------------------


def test_disk_p2_bessel(disk_pair):
    assert disk_pair.lam == pytest.approx(DISK_LAMBDA_P2, rel=0.01)


def test_square_p2_separable(square_pair):
    assert square_pair.lam == pytest.approx(SQUARE_LAMBDA_P2, rel=0.01)


def test_eigenpair_invariants(disk_mesh, disk_pair):
    mass_val, _ = fe.mass(disk_mesh, 2.0, disk_pair.u)
    assert mass_val == pytest.approx(1.0, abs=1e-12)
    assert np.all(disk_pair.u[disk_mesh.interior_idx] > 0)
    assert np.all(disk_pair.u[disk_mesh.is_boundary_vertex] == 0)
    energy_val, _ = fe.energy(disk_mesh, fe.EuclideanNorm(), 2.0, 0.0, disk_pair.u)
    assert disk_pair.lam == pytest.approx(energy_val, rel=1e-12)


def test_lambda_iterates_non_increasing():
    mesh = fe.generate(fe.Disk(1.0), 0.15)
    pair = fe.solve_first(mesh, fe.LqNorm(4.0), 2.6, TIGHT)
    for eps, seq in pair.history:
        diffs = np.diff(seq)
        assert np.all(diffs <= 1e-14 * np.abs(seq[:-1]))


@pytest.mark.parametrize("t,p", [(2.0, 2.0), (0.5, 3.0), (3.0, 1.5)])
def test_scaling_law_exact(t, p):
    mesh = fe.generate(fe.Disk(1.0), 0.18)
    model = fe.LqNorm(4.0)
    lam = fe.solve_first(mesh, model, p, TIGHT).lam
    lam_t = fe.solve_first(fe.scale_mesh(mesh, t), model, p, TIGHT).lam
    assert lam_t == pytest.approx(lam * t ** (-p), rel=1e-10)


def test_refinement_errors_shrink(euclid):
    meshes = [fe.generate(fe.Disk(1.0), 0.2)]
    for _ in range(2):
        meshes.append(fe.refine(meshes[-1]))
    lams = [fe.solve_first(m, euclid, 2.0, TIGHT).lam for m in meshes]
    assert abs(lams[1] - lams[2]) < abs(lams[0] - lams[1])
    assert all(lam > DISK_LAMBDA_P2 for lam in lams)  # conforming upper bounds


def test_domain_monotonicity(euclid):
    lam_big = fe.solve_first(fe.generate(fe.Square(1.0), 0.1), euclid, 2.0).lam
    lam_small = fe.solve_first(fe.generate(fe.Square(0.5), 0.05), euclid, 2.0).lam
    assert lam_small > lam_big
    assert lam_small == pytest.approx(4.0 * lam_big, rel=1e-10)  # exact scaling


@pytest.mark.parametrize("p,s", [(1.5, 2.0), (2.0, 3.0)])
def test_ps_inequality_discrete(p, s, euclid):
    mesh = fe.generate(fe.Disk(1.0), 0.1)
    lam_p = fe.solve_first(mesh, euclid, p, TIGHT).lam
    lam_s = fe.solve_first(mesh, euclid, s, TIGHT).lam
    assert p * lam_p ** (1 / p) <= s * lam_s ** (1 / s) * 1.01


def test_positive_eigenfunction_all_models(all_models):
    mesh = fe.generate(fe.Disk(1.0), 0.2)
    for m in all_models[:5]:
        pair = fe.solve_first(mesh, m, 2.4)
        assert np.all(pair.u[mesh.interior_idx] > 0)


def test_single_interior_vertex():
    # coarsest structured square has exactly one interior vertex
    mesh = fe.generate(fe.Square(1.0), 0.5)
    assert mesh.n_interior == 1
    pair = fe.solve_first(mesh, fe.EuclideanNorm(), 2.0)
    # K_cc = 4 and M_cc = 6 * (h^2/2)/6 = 1/8 on the 8-triangle grid
    assert pair.lam == pytest.approx(32.0, rel=1e-10)


def test_no_interior_dofs_rejected():
    mesh = fe.TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    with pytest.raises(SolverError):
        fe.solve_first(mesh, fe.EuclideanNorm(), 2.0)


def test_nonconvergence_carries_iterate():
    mesh = fe.generate(fe.Disk(1.0), 0.3)
    with pytest.raises(SolverError) as err:
        fe.solve_first(mesh, fe.LqNorm(4.0), 3.0, SolverOpts(tol=0.0, max_iter=2))
    assert err.value.pair is not None
    assert err.value.residual is not None
    assert err.value.pair.lam > 0


def test_p_must_exceed_one():
    mesh = fe.generate(fe.Disk(1.0), 0.3)
    with pytest.raises(ValueError):
        fe.solve_first(mesh, fe.EuclideanNorm(), 1.0)


def test_rayleigh_descent_fallback(euclid):
    mesh = fe.generate(fe.Disk(1.0), 0.25)
    lam_ip = fe.solve_first(mesh, euclid, 2.0, TIGHT).lam
    lam_rd = fe.solve_first(mesh, euclid, 2.0,
                            SolverOpts(method="rayleigh-descent", tol=1e-12)).lam
    assert lam_rd == pytest.approx(lam_ip, rel=1e-6)


def test_lbfgs_inner_agrees_with_newton():
    mesh = fe.generate(fe.Disk(1.0), 0.25)
    model = fe.LqNorm(4.0)
    lam_n = fe.solve_first(mesh, model, 2.5, SolverOpts(tol=1e-12, inner="newton")).lam
    lam_l = fe.solve_first(mesh, model, 2.5, SolverOpts(tol=1e-12, inner="lbfgs")).lam
    assert lam_l == pytest.approx(lam_n, rel=1e-8)


def test_eps_schedule_override(euclid):
    mesh = fe.generate(fe.Disk(1.0), 0.25)
    lam_a = fe.solve_first(mesh, euclid, 2.0, SolverOpts(tol=1e-12)).lam
    lam_b = fe.solve_first(mesh, euclid, 2.0,
                           SolverOpts(tol=1e-12, eps_schedule=(1e-3, 0.0))).lam
    assert lam_b == pytest.approx(lam_a, rel=1e-11)


# -- solve_pullback ------------------------------------------------------


def test_pullback_identity_matches_direct(disk_mesh, disk_pair, euclid):
    pair = fe.solve_pullback(disk_mesh, lambda x: x.copy(), euclid, 2.0, TIGHT)
    assert pair.lam == pytest.approx(disk_pair.lam, rel=1e-12)


def test_pullback_dilation_scaling(disk_mesh, disk_pair, euclid):
    pair = fe.solve_pullback(disk_mesh, lambda x: 2.0 * x, euclid, 2.0, TIGHT)
    assert pair.lam == pytest.approx(disk_pair.lam / 4.0, rel=1e-12)


def _random_map(seed, amp=0.12):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-amp, amp, 4)
    b = rng.uniform(-amp, amp, 2)

    def phi(x):
        return x + np.column_stack([
            a[0] * np.sin(x[:, 1]) + a[1] * x[:, 0] * x[:, 1] + b[0],
            a[2] * np.cos(x[:, 0]) + a[3] * x[:, 1] ** 2 + b[1],
        ])

    return phi


@pytest.mark.parametrize("seed,spec,p", [
    (0, "euclidean", 2.0),
    (1, "euclidean", 2.0),
    (2, "lq:4", 2.5),
])
def test_pullback_equals_mapped_solve(seed, spec, p):
    mesh = fe.generate(fe.Disk(1.0), 0.12)
    model = fe.parse_model(spec)
    phi = _random_map(seed)
    lam_pull = fe.solve_pullback(mesh, phi, model, p, TIGHT).lam
    lam_map = fe.solve_first(fe.transform(mesh, phi), model, p, TIGHT).lam
    assert lam_pull == pytest.approx(lam_map, rel=1e-12)


def test_pullback_rejects_folding(disk_mesh, euclid):
    from finslereig.mesh import MeshError
    with pytest.raises(MeshError, match=r"triangle \d+"):
        # (x - 0.3)^2 reverses orientation left of x = 0.3
        fe.solve_pullback(disk_mesh,
                          lambda x: np.column_stack([(x[:, 0] - 0.3) ** 2, x[:, 1]]),
                          euclid, 2.0)


def test_pullback_coefficients_are_transplanted(disk_mesh, euclid):
    phi = _random_map(5, amp=0.08)
    pair_pull = fe.solve_pullback(disk_mesh, phi, euclid, 2.0, TIGHT)
    mapped = fe.transform(disk_mesh, phi)
    pair_map = fe.solve_first(mapped, euclid, 2.0, TIGHT)
    # v = u o phi: same vertex indexing, same values
    scale = pair_pull.u[disk_mesh.interior_idx] @ pair_map.u[disk_mesh.interior_idx]
    assert scale > 0  # same sign convention
    np.testing.assert_allclose(pair_pull.u, pair_map.u, rtol=0, atol=1e-7)
