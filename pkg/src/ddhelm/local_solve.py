"""Subdomain assembly and Dirichlet / Neumann / Robin solves.

The discrete operator is the edge form of the 5-point stencil::

    u* K u = sum over grid edges of  w_e |u_i - u_j|^2,
    w_e = hy/hx (horizontal edges), hx/hy (vertical edges)

so ``K = hx*hy * (-Delta_h)`` approximates the Dirichlet energy, and the lumped
mass carries ``hx*hy`` per node. Each subdomain owns the horizontal edges on
its side of the interface and *half* of the vertical edges lying on the
interface (likewise half the interface mass), so ``K1 + K2`` is the global
matrix exactly.

With equation ``Delta u + k^2 u = f`` the discrete system is
``(K - k^2 M) u = -M f``. Interface fluxes are algebraic residuals in
integrated (weighted) form: ``flux ~ hy * du/dn_m`` per interface node.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidGamma, NearResonance, ShapeMismatch, SingularSystem
from .grid import Grid2D, interface_weights

RESONANCE_TOL = 1e-8


# -- 1-D building blocks ------------------------------------------------------

def _stiffness_1d(n_nodes: int, edges, weight: float) -> sp.csr_matrix:
    """1-D edge stiffness over nodes ``1..n_nodes``; node 0 and n_nodes+1 are Dirichlet."""
    rows, cols, vals = [], [], []
    for a, b in edges:
        for i, j, v in ((a, a, weight), (b, b, weight), (a, b, -weight), (b, a, -weight)):
            if 1 <= i <= n_nodes and 1 <= j <= n_nodes:
                rows.append(i - 1)
                cols.append(j - 1)
                vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))


def _x_factors(grid: Grid2D, m: int):
    """Side-``m`` share of the x-direction stiffness and lumped mass over ix = 1..nx-1."""
    nx, s, hx = grid.spec.nx, grid.spec.split_ix, grid.hx
    n = nx - 1
    mass = np.zeros(n)
    if m == 1:
        edges = [(i, i + 1) for i in range(0, s)]
        mass[: s - 1] = hx
    elif m == 2:
        edges = [(i, i + 1) for i in range(s, nx)]
        mass[s:] = hx
    else:
        raise ValueError(f"subdomain tag must be 1 or 2, got {m}")
    mass[s - 1] = hx / 2
    return _stiffness_1d(n, edges, 1.0 / grid.hx), mass


def _y_factors(grid: Grid2D):
    ny, hy = grid.spec.ny, grid.hy
    n = ny - 1
    stiff = _stiffness_1d(n, [(i, i + 1) for i in range(0, ny)], 1.0 / hy)
    return stiff, np.full(n, hy)


def split_operators(grid: Grid2D, m: int):
    """Global-size stiffness and lumped-mass diagonal owned by subdomain ``m``."""
    tx, mx = _x_factors(grid, m)
    ty, my = _y_factors(grid)
    K = sp.kron(tx, sp.diags(my)) + sp.kron(sp.diags(mx), ty)
    return K.tocsr(), np.kron(mx, my)


def global_operators(grid: Grid2D):
    K1, M1 = split_operators(grid, 1)
    K2, M2 = split_operators(grid, 2)
    return (K1 + K2).tocsr(), M1 + M2


# -- eigenvalue guards ------------------------------------------------------------

def _generalized_eigs_1d(stiff: sp.spmatrix, mass: np.ndarray) -> np.ndarray:
    keep = mass > 0
    T = stiff.toarray()[np.ix_(keep, keep)]
    s = 1.0 / np.sqrt(mass[keep])
    return sla.eigvalsh(s[:, None] * T * s[None, :])


def _sum_spectra(ex, ey):
    return np.sort((ex[:, None] + ey[None, :]).ravel())


def dirichlet_eigenvalues(grid: Grid2D, m: int | None = None) -> np.ndarray:
    """Eigenvalues of the zero-Dirichlet discrete ``-Delta`` on subdomain ``m``
    (``m=None``: the whole rectangle), i.e. of the pencil ``(K_II, M_II)``.

    The operator is separable, so the spectrum is all sums of 1-D spectra.
    """
    nx, s = grid.spec.nx, grid.spec.split_ix
    hx = grid.hx
    if m is None:
        n = nx - 1
    elif m == 1:
        n = s - 1
    else:
        n = nx - s - 1
    if n == 0:
        return np.zeros(0)
    tx = _stiffness_1d(n, [(i, i + 1) for i in range(0, n + 1)], 1.0 / hx)
    ty, my = _y_factors(grid)
    return _sum_spectra(_generalized_eigs_1d(tx, np.full(n, hx)), _generalized_eigs_1d(ty, my))


def neumann_eigenvalues(grid: Grid2D, m: int) -> np.ndarray:
    """Spectrum of ``(K_m, M_m)``: subdomain ``m`` with a free interface."""
    tx, mx = _x_factors(grid, m)
    ty, my = _y_factors(grid)
    return _sum_spectra(_generalized_eigs_1d(tx, mx), _generalized_eigs_1d(ty, my))


def check_resonance(eigs: np.ndarray, k: float, what: str, tol: float = RESONANCE_TOL) -> None:
    if k == 0 or eigs.size == 0:
        return
    d = np.abs(eigs - k * k)
    i = int(np.argmin(d))
    if d[i] < tol:
        raise NearResonance(
            f"k^2={k * k!r} is within {d[i]:.3e} of the {what} eigenvalue {float(eigs[i])!r}",
            eigenvalue=float(eigs[i]),
            distance=float(d[i]),
        )


# -- subdomain system ----------------------------------------------------------------

@dataclass(eq=False)
class SubdomainSystem:
    grid: Grid2D
    m: int
    k: float
    nodes: np.ndarray  # global indices: interior first, then interface
    n_int: int
    K: sp.csc_matrix  # local stiffness (positive definite)
    M: np.ndarray  # local lumped mass diagonal
    W: np.ndarray  # interface weights
    _factors: dict = field(default_factory=dict, repr=False)
    _eigs: dict = field(default_factory=dict, repr=False)

    @property
    def n_local(self) -> int:
        return self.nodes.size

    @property
    def n_gamma(self) -> int:
        return self.W.size

    @property
    def is_laplace(self) -> bool:
        return self.k == 0

    @cached_property
    def A(self) -> sp.csc_matrix:
        """``K - k^2 M``."""
        return (self.K - self.k**2 * sp.diags(self.M)).tocsc()

    @property
    def I(self) -> slice:
        return slice(0, self.n_int)

    @property
    def G(self) -> slice:
        return slice(self.n_int, self.n_local)

    # blocks of K (stiffness only)
    @property
    def K_II(self):
        return self.K[self.I, self.I]

    @property
    def K_IG(self):
        return self.K[self.I, self.G]

    @property
    def K_GI(self):
        return self.K[self.G, self.I]

    @property
    def K_GG(self):
        return self.K[self.G, self.G]

    def local(self, f) -> np.ndarray:
        """Accept a load given globally or on this subdomain's nodes; return it locally."""
        if f is None:
            return np.zeros(self.n_local)
        f = np.asarray(f)
        if f.shape == (self.n_local,):
            return f
        if f.shape == (self.grid.n_interior,):
            return f[self.nodes]
        raise ShapeMismatch(
            f"load must have length {self.n_local} (local) or {self.grid.n_interior} (global), got {f.shape}"
        )

    def load(self, f) -> np.ndarray:
        return -self.M * self.local(f)

    def embed(self, u_local: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_interior, dtype=np.result_type(u_local, float))
        out[self.nodes] = u_local
        return out

    def factor(self, key, build):
        """Factorization cache: ``build`` runs once per key."""
        lu = self._factors.get(key)
        if lu is None:
            mat = build().tocsc()
            try:
                lu = spla.splu(mat)
            except RuntimeError as exc:  # exactly singular
                raise SingularSystem(f"factorization of {key} failed: {exc}") from exc
            self._factors[key] = lu
        return lu

    def eigs(self, kind: str) -> np.ndarray:
        if kind not in self._eigs:
            if kind == "dirichlet":
                self._eigs[kind] = dirichlet_eigenvalues(self.grid, self.m)
            else:
                self._eigs[kind] = neumann_eigenvalues(self.grid, self.m)
        return self._eigs[kind]

    def energy(self, u) -> float:
        """``u* K u``: Dirichlet energy of a local nodal vector."""
        u = np.asarray(u)
        return float(np.real(np.vdot(u, self.K @ u)))


@dataclass
class SubdomainSolution:
    u: np.ndarray
    flux: np.ndarray  # weighted: ~ hy * du/dn_m at each interface node
    n_int: int

    @property
    def u_interior(self) -> np.ndarray:
        return self.u[: self.n_int]

    @property
    def u_gamma(self) -> np.ndarray:
        return self.u[self.n_int:]


def _lu_solve(lu, rhs: np.ndarray) -> np.ndarray:
    # SuperLU keeps the factor's dtype; a real factor solves real and imaginary parts apart
    if np.iscomplexobj(rhs) and lu.L.dtype.kind != "c":
        return lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return lu.solve(np.ascontiguousarray(rhs))


def assemble(grid: Grid2D, m: int, k: float = 0.0) -> SubdomainSystem:
    K_glob, M_glob = split_operators(grid, m)
    nodes = grid.local_nodes(m)
    K = K_glob[nodes][:, nodes].tocsc()
    return SubdomainSystem(
        grid=grid,
        m=m,
        k=float(k),
        nodes=nodes,
        n_int=grid.interior(m).size,
        K=K,
        M=M_glob[nodes],
        W=interface_weights(grid),
    )


def _gamma_vector(sys: SubdomainSystem, v, name: str) -> np.ndarray:
    if v is None:
        return np.zeros(sys.n_gamma)
    v = np.asarray(v)
    if v.shape[0] != sys.n_gamma:
        raise ShapeMismatch(f"{name} must have leading length {sys.n_gamma}, got {v.shape}")
    return v


def algebraic_flux(sys: SubdomainSystem, u, f=None) -> np.ndarray:
    """Interface residual ``((K - k^2 M) u)_G - b_G`` with this side's share of the load.

    When ``u`` satisfies the interior equations, ``u_G* flux = u* (K - k^2 M) u - u* b``
    exactly: the discrete Green formula for subdomain ``m``.
    """
    u = np.asarray(u)
    Au = sys.A @ u
    return Au[sys.G] - sys.load(f)[sys.G]


def solve_dirichlet(sys: SubdomainSystem, f=None, lam=None, *, check: bool = True) -> SubdomainSolution:
    lam = _gamma_vector(sys, lam, "lambda")
    if check and not sys.is_laplace:
        check_resonance(sys.eigs("dirichlet"), sys.k, f"subdomain {sys.m} Dirichlet")
    A = sys.A
    lu = sys.factor(("dirichlet",), lambda: A[sys.I, sys.I])
    b = sys.load(f)
    rhs = b[sys.I] - A[sys.I, sys.G] @ lam
    u_int = _lu_solve(lu, rhs) if sys.n_int else np.zeros(0, dtype=rhs.dtype)
    u = np.concatenate([u_int, lam.astype(np.result_type(u_int, lam))])
    return SubdomainSolution(u, algebraic_flux(sys, u, f), sys.n_int)


def harmonic_extension(sys: SubdomainSystem, lam) -> SubdomainSolution:
    if not sys.is_laplace:
        raise ValueError("harmonic extension is defined for the Laplace system (k = 0)")
    return solve_dirichlet(sys, None, lam)


def solve_neumann(sys: SubdomainSystem, f=None, nu=None, *, check: bool = True) -> SubdomainSolution:
    """Solve with prescribed interface flux ``W nu``."""
    nu = _gamma_vector(sys, nu, "nu")
    if check and not sys.is_laplace:
        check_resonance(sys.eigs("neumann"), sys.k, f"subdomain {sys.m} Neumann")
    lu = sys.factor(("neumann",), lambda: sys.A)
    rhs = sys.load(f).astype(np.result_type(nu, float))
    rhs[sys.G] += sys.W * nu
    u = _lu_solve(lu, rhs)
    return SubdomainSolution(u, algebraic_flux(sys, u, f), sys.n_int)


def robin_matrix(sys: SubdomainSystem, sign: int, gamma: float) -> sp.csc_matrix:
    """``K - k^2 M - sign * i*gamma * E W E^T`` (E: interface injection)."""
    d = np.zeros(sys.n_local, dtype=complex)
    d[sys.G] = -sign * 1j * gamma * sys.W
    return (sys.A + sp.diags(d)).tocsc()


def solve_robin(sys: SubdomainSystem, f=None, nu=None, sign: int = 1, gamma: float = 1.0) -> SubdomainSolution:
    """Solve ``flux - sign * i*gamma * W u_G = W nu`` on the interface.

    ``sign=+1`` is the incoming condition ``du/dn - i*gamma*u = nu``; ``sign=-1``
    the outgoing one ``du/dn + i*gamma*u = nu``. ``nu`` may be a matrix of
    right-hand sides (one per column).
    """
    if gamma == 0:
        raise InvalidGamma("Robin parameter gamma must be nonzero")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    nu = _gamma_vector(sys, nu, "nu")
    lu = sys.factor(("robin", sign, float(gamma)), lambda: robin_matrix(sys, sign, gamma))
    b = sys.load(f)
    if nu.ndim == 2:
        rhs = np.repeat(b[:, None], nu.shape[1], axis=1).astype(complex)
        rhs[sys.G] += sys.W[:, None] * nu
    else:
        rhs = b.astype(complex)
        rhs[sys.G] += sys.W * nu
    u = _lu_solve(lu, rhs)
    u_g = u[sys.G]
    W = sys.W[:, None] if nu.ndim == 2 else sys.W
    # the Robin row reads flux = W nu + sign * i*gamma * W u_G
    flux = W * nu + sign * 1j * gamma * W * u_g
    return SubdomainSolution(u, flux, sys.n_int)


def robin_flux_bound(sys: SubdomainSystem, f, nu, gamma: float, sign: int = 1) -> float:
    """Measured ratio ``|flux/W|_W / (|f|_M + |nu|_W)`` for one Robin solve."""
    sol = solve_robin(sys, f, nu, sign=sign, gamma=gamma)
    fl = np.sqrt(np.sum(np.abs(sol.flux) ** 2 / sys.W))
    fl_norm = np.sqrt(np.sum(sys.M * np.abs(sys.local(f)) ** 2))
    nu_norm = np.sqrt(np.sum(sys.W * np.abs(_gamma_vector(sys, nu, "nu")) ** 2))
    denom = fl_norm + nu_norm
    return float(fl / denom) if denom > 0 else 0.0


# -- monolithic oracle -----------------------------------------------------------------

@dataclass(eq=False)
class GlobalSystem:
    grid: Grid2D
    k: float
    K: sp.csc_matrix
    M: np.ndarray
    _lu: object = field(default=None, repr=False)

    @cached_property
    def A(self):
        return (self.K - self.k**2 * sp.diags(self.M)).tocsc()

    def solve(self, f) -> np.ndarray:
        if self._lu is None:
            self._lu = spla.splu(self.A)
        return _lu_solve(self._lu, -self.M * np.asarray(f))


def assemble_global(grid: Grid2D, k: float = 0.0, *, check: bool = True) -> GlobalSystem:
    if check and k != 0:
        check_resonance(dirichlet_eigenvalues(grid, None), k, "global Dirichlet")
    K, M = global_operators(grid)
    return GlobalSystem(grid, float(k), K.tocsc(), M)


def monolithic_solve(grid: Grid2D, k: float, f) -> np.ndarray:
    return assemble_global(grid, k).solve(f)


class Decomposition:
    """Both subdomain systems of one grid and wavenumber, assembled once."""

    def __init__(self, grid: Grid2D, k: float = 0.0):
        self.grid = grid
        self.k = float(k)
        self.sub = {1: assemble(grid, 1, k), 2: assemble(grid, 2, k)}
        self.W = interface_weights(grid)

    def __getitem__(self, m: int) -> SubdomainSystem:
        return self.sub[m]

    @cached_property
    def global_system(self) -> GlobalSystem:
        return assemble_global(self.grid, self.k)

    def monolithic(self, f) -> np.ndarray:
        return self.global_system.solve(f)

    def split(self, u_global) -> tuple[np.ndarray, np.ndarray]:
        u_global = np.asarray(u_global)
        return u_global[self.sub[1].nodes], u_global[self.sub[2].nodes]
