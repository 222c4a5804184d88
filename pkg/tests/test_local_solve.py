import numpy as np
import pytest
import scipy.linalg as sla

from ddhelm.errors import InvalidGamma, NearResonance, ShapeMismatch
from ddhelm.grid import GridSpec, build_grid
from ddhelm.local_solve import (
    Decomposition,
    algebraic_flux,
    assemble,
    assemble_global,
    dirichlet_eigenvalues,
    global_operators,
    harmonic_extension,
    neumann_eigenvalues,
    solve_dirichlet,
    solve_neumann,
    solve_robin,
    split_operators,
)


def dense_laplacian(g):
    """Textbook 5-point -Delta_h with zero Dirichlet data."""
    nx, ny = g.spec.nx, g.spec.ny
    Tx = (2 * np.eye(nx - 1) - np.eye(nx - 1, k=1) - np.eye(nx - 1, k=-1)) / g.hx**2
    Ty = (2 * np.eye(ny - 1) - np.eye(ny - 1, k=1) - np.eye(ny - 1, k=-1)) / g.hy**2
    return np.kron(Tx, np.eye(ny - 1)) + np.kron(np.eye(nx - 1), Ty)


def test_global_stencil_matches_textbook(grid_small):
    g = grid_small
    K, M = global_operators(g)
    assert np.allclose(M, g.hx * g.hy)
    assert np.allclose(K.toarray(), g.hx * g.hy * dense_laplacian(g))


def test_stencil_values_at_interior_node():
    # diagonal 4/h^2, neighbours -1/h^2 after dividing by the cell area
    g = build_grid(GridSpec.square(8))
    K, M = global_operators(g)
    i = g.index(3, 3)
    row = K.toarray()[i] / M[i]
    assert row[i] == pytest.approx(4 * 64)
    assert row[g.index(4, 3)] == pytest.approx(-64)


def test_interface_share_is_half():
    g = build_grid(GridSpec.square(8))
    k = 2.0
    sys1 = assemble(g, 1, k)
    j = sys1.n_int + 3  # interface node iy = 4
    area = g.hx * g.hy
    A = sys1.A.toarray()
    assert A[j, j] / area == pytest.approx(2 * 64 - k**2 / 2)
    # vertical interface neighbour carries half the weight, horizontal one the full weight
    assert A[j, j + 1] / area == pytest.approx(-64 / 2)
    horiz = np.flatnonzero(sys1.nodes == g.index(3, 4))[0]
    assert A[j, horiz] / area == pytest.approx(-64)


def test_split_sums_to_global(grid_small):
    K1, M1 = split_operators(grid_small, 1)
    K2, M2 = split_operators(grid_small, 2)
    K, M = global_operators(grid_small)
    assert abs(K1 + K2 - K).max() < 1e-13
    assert np.allclose(M1 + M2, M)


def test_dirichlet_matches_dense_lu(grid_small, rng):
    sys = assemble(grid_small, 2, 1.7)
    f = rng.standard_normal(grid_small.n_interior)
    lam = rng.standard_normal(sys.n_gamma)
    sol = solve_dirichlet(sys, f, lam)
    A = sys.A.toarray()
    b = -sys.M * f[sys.nodes]
    I, G = sys.I, sys.G
    ref = sla.solve(A[I, I], b[I] - A[I, G] @ lam)
    assert np.allclose(sol.u_interior, ref, atol=1e-12)
    assert np.array_equal(sol.u_gamma, lam)


def test_neumann_robin_against_dense(grid_small, rng):
    sys = assemble(grid_small, 1, 0.8)
    f = rng.standard_normal(sys.n_local)
    nu = rng.standard_normal(sys.n_gamma) + 1j * rng.standard_normal(sys.n_gamma)
    A = sys.A.toarray().astype(complex)
    rhs = (-sys.M * f).astype(complex)
    rhs[sys.G] += sys.W * nu
    assert np.allclose(solve_neumann(sys, f, nu).u, sla.solve(A, rhs))
    for sign in (1, -1):
        Ar = A.copy()
        gi = np.arange(sys.n_int, sys.n_local)
        Ar[gi, gi] -= sign * 1j * 0.7 * sys.W
        sol = solve_robin(sys, f, nu, sign=sign, gamma=0.7)
        assert np.allclose(sol.u, sla.solve(Ar, rhs))
        # returned flux equals the algebraic residual flux
        assert np.allclose(sol.flux, algebraic_flux(sys, sol.u, f))


def test_robin_multiple_rhs(grid_small, rng):
    sys = assemble(grid_small, 1, 0.8)
    N = rng.standard_normal((sys.n_gamma, 3))
    multi = solve_robin(sys, None, N)
    for j in range(3):
        assert np.allclose(multi.u[:, j], solve_robin(sys, None, N[:, j]).u)


def test_green_identity(grid_small, rng):
    sys = assemble(grid_small, 1, 1.1)
    f = rng.standard_normal(sys.n_local)
    u = solve_dirichlet(sys, f, rng.standard_normal(sys.n_gamma)).u
    lhs = u[sys.G] @ algebraic_flux(sys, u, f)
    rhs = u @ (sys.A @ u) - u @ sys.load(f)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_monolithic_flux_balance(grid33, rng):
    dec = Decomposition(grid33, 1.0)
    f = rng.standard_normal(grid33.n_interior)
    u = dec.monolithic(f)
    u1, u2 = dec.split(u)
    s = algebraic_flux(dec[1], u1, f) + algebraic_flux(dec[2], u2, f)
    assert np.abs(s).max() < 1e-12 * np.abs(dec[1].load(f)).max()


def test_laplace_converges_to_manufactured_solution():
    errs = []
    for n in (16, 32):
        g = build_grid(GridSpec.square(n))
        exact = g.sample(lambda x, y: np.sin(np.pi * x) * np.sin(2 * np.pi * y))
        f = -5 * np.pi**2 * exact  # Delta u = f
        u = assemble_global(g, 0.0).solve(f)
        errs.append(np.abs(u - exact).max())
    assert errs[1] < errs[0] / 3.5  # second order


def test_harmonic_extension_of_constant_is_linear():
    # for a trace constant in y the harmonic extension is not linear (zero walls), but
    # the extension of the interface trace of a discrete harmonic global field is that field
    g = build_grid(GridSpec.square(12))
    dec = Decomposition(g, 0.0)
    f = np.zeros(g.n_interior)
    f[g.index(2, 5)] = 1.0
    u = dec.monolithic(f)
    _, u2 = dec.split(u)
    ext = harmonic_extension(dec[2], u[g.gamma])
    assert np.allclose(ext.u, u2, atol=1e-14)


def test_harmonic_extension_requires_laplace(grid_small):
    with pytest.raises(ValueError):
        harmonic_extension(assemble(grid_small, 1, 1.0), np.zeros(grid_small.n_gamma))


def test_resonance_guards():
    g = build_grid(GridSpec.square(8))
    kd = np.sqrt(dirichlet_eigenvalues(g, 1)[0])
    with pytest.raises(NearResonance) as err:
        solve_dirichlet(assemble(g, 1, kd), None, None)
    assert err.value.distance < 1e-8
    kn = np.sqrt(neumann_eigenvalues(g, 2)[3])
    with pytest.raises(NearResonance):
        solve_neumann(assemble(g, 2, kn), None, None)
    with pytest.raises(NearResonance):
        assemble_global(g, np.sqrt(dirichlet_eigenvalues(g)[2]))


def test_separable_eigenvalues_match_dense(grid_small):
    for m in (1, 2):
        sys = assemble(grid_small, m)
        K = sys.K.toarray()
        M = sys.M
        I = sys.I
        dense = sla.eigvalsh(K[I, I], np.diag(M[I]))
        assert np.allclose(dirichlet_eigenvalues(grid_small, m), dense)
        assert np.allclose(neumann_eigenvalues(grid_small, m), sla.eigvalsh(K, np.diag(M)))


def test_robin_requires_nonzero_gamma(grid_small):
    with pytest.raises(InvalidGamma):
        solve_robin(assemble(grid_small, 1, 1.0), None, None, gamma=0.0)


def test_load_shape_checked(grid_small):
    with pytest.raises(ShapeMismatch):
        solve_dirichlet(assemble(grid_small, 1), np.zeros(5), None)


def test_zero_data_gives_zero(grid_small):
    sys = assemble(grid_small, 1, 1.0)
    for sol in (solve_dirichlet(sys), solve_neumann(sys), solve_robin(sys)):
        assert np.all(sol.u == 0) and np.all(sol.flux == 0)
    assert np.all(algebraic_flux(sys, np.zeros(sys.n_local)) == 0)


def test_neumann_energy_is_dual_norm(grid_small, rng):
    from ddhelm.interface_ops import steklov_matrix

    sys = assemble(grid_small, 1)
    nu = rng.standard_normal(sys.n_gamma)
    u = solve_neumann(sys, None, nu).u
    S = steklov_matrix(grid_small, 1).entries
    nw = sys.W * nu
    assert sys.energy(u) == pytest.approx(nw @ np.linalg.solve(S, nw), rel=1e-11)


def test_neumann_zero_flux(grid_small, rng):
    sys = assemble(grid_small, 2, 1.3)
    sol = solve_neumann(sys, rng.standard_normal(grid_small.n_interior), None)
    assert np.abs(sol.flux).max() < 1e-12


def test_homogeneous_flux_pairing_is_real(grid_small, rng):
    sys = assemble(grid_small, 1, 1.0)
    nu = rng.standard_normal(sys.n_gamma) + 1j * rng.standard_normal(sys.n_gamma)
    u = solve_robin(sys, None, nu).u
    pairing = np.vdot(u[sys.G], algebraic_flux(sys, u))
    assert abs(pairing.imag) < 1e-13 * max(np.vdot(u, u).real, 1.0)


def test_robin_flux_bound_is_finite(grid_small, rng):
    from ddhelm.local_solve import robin_flux_bound

    sys = assemble(grid_small, 1, 1.0)
    c = robin_flux_bound(sys, rng.standard_normal(sys.n_local), rng.standard_normal(sys.n_gamma), 1.0)
    assert 0 < c < np.inf


def test_robin_matrix_nonsingular_at_resonance():
    from ddhelm.local_solve import robin_matrix

    g = build_grid(GridSpec.square(8))
    for kk in (np.sqrt(dirichlet_eigenvalues(g, 1)[0]), np.sqrt(neumann_eigenvalues(g, 1)[1]), 0.0, 3.0):
        sys = assemble(g, 1, kk)
        smin = sla.svdvals(robin_matrix(sys, 1, 1.0).toarray()).min()
        assert smin > 1e-6


def test_factorization_reused_bitwise(grid_small, rng):
    sys = assemble(grid_small, 1, 1.0)
    nu = rng.standard_normal(sys.n_gamma)
    a = solve_robin(sys, None, nu).u
    lu = sys._factors[("robin", 1, 1.0)]
    b = solve_robin(sys, None, nu).u
    assert sys._factors[("robin", 1, 1.0)] is lu
    assert np.array_equal(a, b)


def test_interior_residual(grid_small, rng):
    sys = assemble(grid_small, 1, 2.0)
    f = rng.standard_normal(sys.n_local)
    u = solve_robin(sys, f, rng.standard_normal(sys.n_gamma)).u
    res = (sys.A @ u - sys.load(f))[sys.I]
    assert np.sqrt(np.sum(np.abs(res) ** 2 / sys.M[sys.I])) <= 1e-12 * np.sqrt(np.sum(sys.M * f**2))
