from dataclasses import replace

import numpy as np
import pytest

from conftest import fd_errors, run_fd
from uel import (Grid, assemble_fd, classify, fd_gradient, ghost_row,
                 interior_row, lagrange_weights, make_bc_spec, make_case,
                 make_domain, mitigate_ill_conditioning, project_to_boundary,
                 relative_error, solve_direct)
from uel.analysis import fitted_order
from uel.errors import AssemblyError, ConfigurationError
from uel.fd_scheme import _stencil_nodes
from uel.geometry import (NODE_GHOST, NODE_INTERIOR, BoundaryProjection,
                          LevelSetDomain)


# ----------------------------------------------------------------------
# Lagrange weights
# ----------------------------------------------------------------------

def test_weights_p2_theta0():
    w = lagrange_weights(0.0, 2, 0.1)
    assert w.l == pytest.approx((1.0, 0.0, 0.0))
    assert tuple(0.1 * v for v in w.l_prime) == pytest.approx((-1.5, 2.0, -0.5))


def test_weights_p1_midpoint():
    w = lagrange_weights(0.5, 1, 0.2)
    assert w.l == pytest.approx((0.5, 0.5))


def test_weights_p2_midpoint():
    w = lagrange_weights(0.5, 2, 1.0)
    assert w.l == pytest.approx((0.375, 0.75, -0.125))


def test_weights_reject_out_of_range_theta():
    with pytest.raises(ConfigurationError):
        lagrange_weights(1.0, 2, 0.1)
    with pytest.raises(ConfigurationError):
        lagrange_weights(-0.1, 1, 0.1)
    with pytest.raises(ConfigurationError):
        lagrange_weights(0.5, 3, 0.1)


@pytest.mark.parametrize("p", (1, 2))
@pytest.mark.parametrize("spacing", (1, 2))
def test_weights_partition_of_unity(p, spacing):
    rng = np.random.default_rng(11)
    for theta in rng.uniform(0.0, 1.0 - 1e-12, 200):
        w = lagrange_weights(theta, p, 0.05, spacing)
        assert sum(w.l) == pytest.approx(1.0, abs=1e-13)
        assert sum(w.l_prime) == pytest.approx(0.0, abs=1e-10)


# ----------------------------------------------------------------------
# interior rows
# ----------------------------------------------------------------------

def apply_row(nodes, coeffs, grid, func):
    return sum(c * func(*grid.node(i, j)) for (i, j), c in zip(nodes, coeffs))


def test_interior_row_annihilates_constants_and_linears():
    grid = Grid(10)
    nodes, coeffs, _ = interior_row((5, 5), grid)
    assert apply_row(nodes, coeffs, grid, lambda x, y: 3.0) == pytest.approx(0.0, abs=1e-10)
    assert apply_row(nodes, coeffs, grid, lambda x, y: x) == pytest.approx(0.0, abs=1e-10)


def test_interior_row_on_quadratic():
    # row encodes -lap_h, exact on quadratics: -lap(x^2 + y^2) = -4
    grid = Grid(10)
    nodes, coeffs, _ = interior_row((4, 6), grid)
    val = apply_row(nodes, coeffs, grid, lambda x, y: x * x + y * y)
    assert val == pytest.approx(-4.0, abs=1e-9)


def test_interior_row_rhs_and_bounds():
    grid = Grid(10)
    _, _, rhs = interior_row((5, 5), grid, f=lambda x, y: x + 2 * y)
    x, y = grid.node(5, 5)
    assert rhs == pytest.approx(x + 2 * y)
    with pytest.raises(AssemblyError):
        interior_row((0, 5), grid)


# ----------------------------------------------------------------------
# ghost rows
# ----------------------------------------------------------------------

def half_plane(c):
    """Omega = {x < c} with unit slope."""
    return LevelSetDomain("hp", lambda x, y: c - x + 0.0 * y,
                          lambda x, y: (-np.ones_like(np.asarray(x, dtype=float)),
                                        np.zeros_like(np.asarray(x, dtype=float))),
                          interior_seed=(c - 0.5, 0.0))


def phi_node_of(grid, domain):
    return classify(grid, domain, "four").phi_node


def test_ghost_row_dirichlet_collapses_to_nodal_value():
    proj = BoundaryProjection((5, 5), np.array([0.0, 0.0]), 0.0,
                              np.array([1.0, 0.0]), (0.0, 0.0), (1, 1),
                              bc_kind="dirichlet")
    grid = Grid(10)
    nodes, coeffs, rhs = ghost_row(proj, 2, grid, half_plane(0.3),
                                   phi_node_of(grid, half_plane(0.3)),
                                   lambda p: 7.0, None)
    assert nodes == [(5, 5)]
    assert coeffs == pytest.approx([1.0])
    assert rhs == 7.0


def test_ghost_row_dirichlet_p1_two_point_stencil():
    proj = BoundaryProjection((5, 5), np.array([0.0, 0.0]), 0.0,
                              np.array([1.0, 0.0]), (0.5, 0.0), (1, 0),
                              bc_kind="dirichlet")
    grid = Grid(10)
    nodes, coeffs, _ = ghost_row(proj, 1, grid, half_plane(0.3),
                                 phi_node_of(grid, half_plane(0.3)),
                                 lambda p: 0.0, None)
    assert nodes == [(5, 5), (6, 5)]
    assert coeffs == pytest.approx([0.5, 0.5])


def test_ghost_row_neumann_reproduces_unit_slope():
    # u = x sampled on the stencil: the derivative row returns exactly 1
    # (the interpolated level-set normal of the half plane is (1, 0))
    domain = half_plane(0.37)
    grid = Grid(20)  # h = 0.1; node (14, 10) = (0.4, 0.0) is exterior
    proj = project_to_boundary((14, 10), domain, grid, tol_factor=1e-12)
    proj = replace(proj, bc_kind="neumann")
    captured = {}

    def g_n(point, normal):
        captured["normal"] = normal
        return float(normal[0])  # grad(x) . n

    nodes, coeffs, rhs = ghost_row(proj, 2, grid, domain,
                                   phi_node_of(grid, domain), None, g_n)
    val = apply_row(nodes, coeffs, grid, lambda x, y: x)
    assert val == pytest.approx(1.0, abs=1e-11)
    assert captured["normal"] == pytest.approx([1.0, 0.0], abs=1e-12)
    assert rhs == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", (1, 2))
def test_ghost_row_polynomial_reproduction(p):
    # p=1 rows reproduce bilinear functions at B, p=2 rows biquadratics;
    # the p=2 derivative rows reproduce their normal derivative.
    domain = make_domain("circle")
    grid = Grid(20)
    phi_node = phi_node_of(grid, domain)

    if p == 1:
        def u(x, y):
            return 2.0 - 3.0 * x + y + 0.5 * x * y

        def grad_u(x, y):
            return -3.0 + 0.5 * y, 1.0 + 0.5 * x
    else:
        def u(x, y):
            return (1.0 + x + 0.5 * x * x) * (2.0 - y + 0.25 * y * y)

        def grad_u(x, y):
            return (1.0 + x) * (2.0 - y + 0.25 * y * y), \
                   (1.0 + x + 0.5 * x * x) * (-1.0 + 0.5 * y)

    cls = classify(grid, domain, "four")
    gi, gj = np.nonzero(cls.node_role == NODE_GHOST)
    for i, j in zip(gi, gj):
        proj = project_to_boundary((int(i), int(j)), domain, grid, 1e-12)
        bx, by = proj.point
        # value row
        pd = replace(proj, bc_kind="dirichlet")
        nodes, coeffs, _ = ghost_row(pd, p, grid, domain, phi_node,
                                     lambda pt: 0.0, None)
        val = apply_row(nodes, coeffs, grid, u)
        assert val == pytest.approx(u(bx, by), rel=1e-10, abs=1e-11)
        if p == 2:
            # derivative row with the exact circle normal
            pn = replace(proj, bc_kind="neumann")
            nodes, coeffs, _ = ghost_row(pn, 2, grid, domain, phi_node,
                                         None, lambda pt, nb: 0.0)
            val = apply_row(nodes, coeffs, grid, u)
            nb = proj.point / np.hypot(*proj.point)
            gx, gy = grad_u(bx, by)
            assert val == pytest.approx(gx * nb[0] + gy * nb[1], rel=1e-9, abs=1e-10)


def test_ghost_row_sums():
    # Dirichlet rows sum to one, Neumann rows to zero
    domain = make_domain("circle")
    case = make_case("paper_sin")
    bc = make_bc_spec("circle", "mixed")
    grid = Grid(20)
    system = assemble_fd(grid, domain, case, bc, p=2)
    for node, proj in system.projections.items():
        row = system.matrix.getrow(system.index[node])
        total = row.sum()
        if proj.bc_kind == "dirichlet":
            assert total == pytest.approx(1.0, abs=1e-12)
        else:
            assert abs(total) <= 1e-12 * max(1.0, abs(row).max())


# ----------------------------------------------------------------------
# mitigation
# ----------------------------------------------------------------------

def make_proj(theta, kind="dirichlet", signs=(1, 1)):
    return BoundaryProjection((5, 5), np.array([0.0, 0.0]), 0.01,
                              np.array([1.0, 0.0]), theta, signs, bc_kind=kind)


def test_mitigation_halves_theta():
    out = mitigate_ill_conditioning(make_proj((0.99, 0.2)), 0.05)
    assert out.theta[0] == pytest.approx(0.495)
    assert out.theta[1] == 0.2
    assert out.spacing == (2, 1)
    assert out.enlarged


def test_mitigation_not_triggered():
    out = mitigate_ill_conditioning(make_proj((0.5, 0.5)), 0.05)
    assert out is make_proj((0.5, 0.5)) or not out.enlarged
    assert out.theta == (0.5, 0.5)


def test_mitigation_skips_neumann():
    out = mitigate_ill_conditioning(make_proj((0.99, 0.99), kind="neumann"), 0.05)
    assert not out.enlarged
    assert out.theta == (0.99, 0.99)


def test_mitigated_diagonal_bounded():
    # after mitigation the diagonal of the constructed near-1 example is
    # l0(0.495) per direction, far above the unmitigated l0(0.99)
    grid = Grid(20)
    domain = half_plane(0.37)
    proj = mitigate_ill_conditioning(make_proj((0.99, 0.0), signs=(1, 0)), grid.h)
    nodes, coeffs, _ = ghost_row(proj, 1, grid, domain,
                                 phi_node_of(grid, domain), lambda p: 0.0, None)
    diag = coeffs[nodes.index((5, 5))]
    assert diag == pytest.approx(1.0 - 0.495)
    assert diag >= 0.05


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def test_assemble_circle_n4_size():
    grid, system, _, _, _ = run_fd("circle", "paper_sin", "dirichlet", 4)
    assert system.n_rows == 21
    assert system.classification.n_interior == 9
    assert len(system.projections) == 12


def test_full_square_recovers_classical_five_point():
    # phi == 1 on all of R: frame nodes carry the boundary data and the
    # interior is the textbook 5-point scheme; second-order over N=20..80
    domain = LevelSetDomain(
        "full", lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        lambda x, y: (np.zeros_like(np.asarray(x, dtype=float)),) * 2,
        interior_seed=(0.0, 0.0))
    case = make_case("paper_sin")
    bc = make_bc_spec("circle", "dirichlet")
    hs, errs = [], []
    for n in (20, 40, 80):
        grid = Grid(n)
        system = assemble_fd(grid, domain, case, bc, p=2)
        u, _ = solve_direct(system.matrix, system.rhs)
        ii, jj = np.nonzero(system.classification.node_role == NODE_INTERIOR)
        errs.append(relative_error(u[system.index[ii, jj]],
                                   case.u(grid.xs[ii], grid.xs[jj]), "inf"))
        hs.append(grid.h)
    assert 1.8 <= fitted_order(hs, errs) <= 2.2


def test_quadratic_case_is_exact():
    for n in (40, 80):
        grid, system, u, _, case = run_fd("circle", "quadratic", "dirichlet", n,
                                          p=2, tol_factor=1e-12)
        eu, _ = fd_errors(grid, system, u, case)
        assert eu[2] <= 1e-8


def test_interior_rows_sum_to_zero():
    for bc_kind in ("dirichlet", "mixed"):
        grid, system, _, _, _ = run_fd("circle", "paper_sin", bc_kind, 20)
        role = system.classification.node_role
        ghost_nodes = set(map(tuple, np.argwhere(role == NODE_GHOST)))
        sums = np.asarray(system.matrix.sum(axis=1)).ravel()
        scale = 4.0 / grid.h ** 2
        for k, (i, j) in enumerate(system.nodes):
            if (i, j) not in ghost_nodes and role[i, j] == NODE_INTERIOR:
                assert abs(sums[k]) <= 1e-12 * scale


def test_matrix_is_nonsymmetric():
    _, system, _, _, _ = run_fd("circle", "paper_sin", "dirichlet", 20)
    asym = abs(system.matrix - system.matrix.T).max()
    assert asym > 0.0


def test_equilibrate_scales_rows_only():
    grid = Grid(20)
    domain = make_domain("circle")
    case = make_case("paper_sin")
    bc = make_bc_spec("circle", "dirichlet")
    plain = assemble_fd(grid, domain, case, bc, p=2)
    scaled = assemble_fd(grid, domain, case, bc, p=2, equilibrate=True)
    u1, _ = solve_direct(plain.matrix, plain.rhs)
    u2, _ = solve_direct(scaled.matrix, scaled.rhs)
    assert np.allclose(u1, u2, atol=1e-9)
    row_max = np.asarray(abs(scaled.matrix).max(axis=1).todense()).ravel()
    assert np.allclose(row_max, 1.0)


def test_assemble_rejects_bad_p():
    grid = Grid(8)
    with pytest.raises(ConfigurationError):
        assemble_fd(grid, make_domain("circle"), make_case("constant"),
                    make_bc_spec("circle", "dirichlet"), p=3)


@pytest.mark.parametrize("name,n", [("leaf", 80), ("flower", 40), ("flower", 80)])
def test_extended_ghosts_assemble_and_solve(name, n):
    # concave geometries force stencil nodes beyond the ghost layer
    grid, system, u, report, case = run_fd(name, "paper_sin", "dirichlet", n)
    extended = len(system.projections) - system.classification.n_ghost
    assert extended >= 0
    assert report.final_residual <= 1e-10
    eu, _ = fd_errors(grid, system, u, case)
    assert eu[2] < 5e-3


def test_stencil_nodes_respect_collapsed_directions():
    proj = make_proj((0.3, 0.0), signs=(1, 0))
    nodes = _stencil_nodes(proj, 2)
    assert all(my == 0 for _, my, _, _ in nodes)
    assert len(nodes) == 3


# ----------------------------------------------------------------------
# gradient
# ----------------------------------------------------------------------

def test_fd_gradient_exactness():
    grid, system, _, _, _ = run_fd("circle", "paper_sin", "dirichlet", 20)

    def fill(func):
        vals = func(grid.xs[system.nodes[:, 0]], grid.xs[system.nodes[:, 1]])
        return np.asarray(vals, dtype=float)

    nodes, grads = fd_gradient(system, fill(lambda x, y: x + 0.0 * y))
    assert np.allclose(grads[:, 0], 1.0, atol=1e-11)
    assert np.allclose(grads[:, 1], 0.0, atol=1e-11)

    nodes, grads = fd_gradient(system, fill(lambda x, y: x * x + 0.0 * y))
    xs = grid.xs[nodes[:, 0]]
    assert np.allclose(grads[:, 0], 2.0 * xs, atol=1e-10)

    nodes, grads = fd_gradient(system, fill(lambda x, y: 0.0 * x + 1.0))
    assert np.allclose(grads, 0.0, atol=1e-12)
