"""Dense interface operators: Steklov, Despres, the intertwining block
operator, the Laplace-Robin solution operator, and the data vector of the
Helmholtz interface equation.

Interface fields are plain nodal values on the interface; the interface
pairing is ``(a, b) = b* W a`` with ``W`` the diagonal quadrature weights.
Steklov matrices map values to *weighted* fluxes (``Lambda -> Lambda'``),
Despres matrices map values to values.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGamma, ShapeMismatch
from .grid import Grid2D
from .local_solve import (
    Decomposition,
    SubdomainSolution,
    SubdomainSystem,
    _lu_solve,
    algebraic_flux,
    assemble,
    robin_matrix,
    solve_dirichlet,
    solve_robin,
)


@dataclass
class InterfaceMatrix:
    entries: np.ndarray
    label: str
    metadata: dict = field(default_factory=dict)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        return self.entries @ np.asarray(other)

    def __rmatmul__(self, other):
        return np.asarray(other) @ self.entries

    @property
    def shape(self):
        return self.entries.shape

    @property
    def gamma_dim(self) -> int:
        return self.entries.shape[0]


def _check_gamma(gamma: float) -> None:
    if gamma == 0:
        raise InvalidGamma("gamma must be a nonzero real number")


def _system(grid: Grid2D, m: int, k: float, system: SubdomainSystem | None) -> SubdomainSystem:
    if system is not None:
        if system.m != m or system.k != k:
            raise ValueError(f"system is (m={system.m}, k={system.k}), requested (m={m}, k={k})")
        return system
    return assemble(grid, m, k)


def w_adjoint(M, w: np.ndarray) -> np.ndarray:
    """Adjoint for the weighted pairing: ``W^-1 M* W``."""
    M = np.asarray(M)
    return (M.conj().T * w[None, :]) / w[:, None]


# -- Steklov ----------------------------------------------------------------------

def steklov_matrix(grid: Grid2D, m: int, *, system: SubdomainSystem | None = None) -> InterfaceMatrix:
    """Schur complement ``K_GG - K_GI K_II^-1 K_IG`` of the Laplace stiffness."""
    sys = _system(grid, m, 0.0, system)
    K_IG = sys.K_IG.toarray()
    S = sys.K_GG.toarray()
    if sys.n_int:
        lu = sys.factor(("dirichlet",), lambda: sys.A[sys.I, sys.I])
        S = S - sys.K_GI @ lu.solve(K_IG)
    S = 0.5 * (S + S.T)
    return InterfaceMatrix(S, f"S_{m}", {"m": m})


def lambda_inner(S_like, lam, mu) -> complex:
    """``(lam, mu) = mu* S lam`` for the energy pairing induced by ``S_like``."""
    S = np.asarray(S_like)
    lam, mu = np.asarray(lam), np.asarray(mu)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or lam.shape != (S.shape[0],) or mu.shape != lam.shape:
        raise ShapeMismatch(f"operator {S.shape} incompatible with vectors {lam.shape}, {mu.shape}")
    return complex(np.vdot(mu, S @ lam))


# -- Despres ------------------------------------------------------------------------

def despres_apply(system: SubdomainSystem, nu, gamma: float) -> np.ndarray:
    """Matrix-free ``P_m^gamma nu``: one homogeneous Robin solve."""
    _check_gamma(gamma)
    sol = solve_robin(system, None, nu, sign=1, gamma=gamma)
    return sol.flux / (system.W if np.ndim(nu) == 1 else system.W[:, None]) + 1j * gamma * sol.u_gamma


def despres_matrix(grid: Grid2D, m: int, k: float, gamma: float, *,
                   system: SubdomainSystem | None = None) -> InterfaceMatrix:
    """``P_m^gamma``: incoming Robin data ``du/dn - i gamma u`` to outgoing ``du/dn + i gamma u``."""
    _check_gamma(gamma)
    sys = _system(grid, m, k, system)
    P = despres_apply(sys, np.eye(sys.n_gamma), gamma)
    return InterfaceMatrix(P, f"P_{m}", {"m": m, "k": k, "gamma": gamma})


def despres_compact_part(P: InterfaceMatrix | np.ndarray, gamma: float) -> np.ndarray:
    """``C = (P - I) / (2 i gamma)``, the interface trace of the Robin solution."""
    P = np.asarray(P)
    return (P - np.eye(P.shape[0])) / (2j * gamma)


# -- intertwining operator ------------------------------------------------------------

def intertwining(P1, P2, label: str = "A", **meta) -> InterfaceMatrix:
    P1, P2 = np.asarray(P1), np.asarray(P2)
    n = P1.shape[0]
    Z = np.zeros((n, n), dtype=complex)
    return InterfaceMatrix(np.block([[Z, -P1], [-P2, Z]]), label, meta)


@dataclass
class DespresPair:
    """``P_1, P_2`` and the block operator built from them."""

    P1: InterfaceMatrix
    P2: InterfaceMatrix
    A: InterfaceMatrix
    w: np.ndarray
    k: float
    gamma: float

    def P(self, m: int) -> np.ndarray:
        return self.P1.entries if m == 1 else self.P2.entries

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def ww(self) -> np.ndarray:
        return np.concatenate([self.w, self.w])


def despres_pair(dec: Decomposition, gamma: float) -> DespresPair:
    _check_gamma(gamma)
    P1 = despres_matrix(dec.grid, 1, dec.k, gamma, system=dec[1])
    P2 = despres_matrix(dec.grid, 2, dec.k, gamma, system=dec[2])
    A = intertwining(P1, P2, k=dec.k, gamma=gamma)
    return DespresPair(P1, P2, A, dec.W, dec.k, gamma)


def assemble_A(grid: Grid2D, k: float, gamma: float, *, dec: Decomposition | None = None) -> InterfaceMatrix:
    """``A = [[0, -P_1], [-P_2, 0]]``."""
    _check_gamma(gamma)
    dec = dec if dec is not None else Decomposition(grid, k)
    return despres_pair(dec, gamma).A


def intertwining_inverse(grid: Grid2D, k: float, gamma: float, *, dec: Decomposition | None = None) -> InterfaceMatrix:
    """``[[0, -P_2^-gamma], [-P_1^-gamma, 0]]``, the inverse of ``A`` built from the ``-gamma`` operators."""
    dec = dec if dec is not None else Decomposition(grid, k)
    Q1 = despres_matrix(grid, 1, k, -gamma, system=dec[1])
    Q2 = despres_matrix(grid, 2, k, -gamma, system=dec[2])
    n = Q1.gamma_dim
    Z = np.zeros((n, n), dtype=complex)
    return InterfaceMatrix(np.block([[Z, -Q2.entries], [-Q1.entries, Z]]), "A_inv", {"k": k, "gamma": gamma})


# -- Laplace-Robin solution operator --------------------------------------------------

def dm_matrix(grid: Grid2D, m: int, gamma: float, *, system: SubdomainSystem | None = None) -> InterfaceMatrix:
    """Dense ``D_m^gamma``: load ``f`` to the solution of ``Delta u = f``,
    ``du/dn_m + i gamma u = 0`` on the interface, over interior_m and the interface.

    Returned together with the lumped mass (``metadata['M']``) that defines the
    volume inner product.
    """
    _check_gamma(gamma)
    sys = _system(grid, m, 0.0, system)
    lu = sys.factor(("robin", -1, float(gamma)), lambda: robin_matrix(sys, -1, gamma))
    D = _lu_solve(lu, -np.diag(sys.M).astype(complex))
    return InterfaceMatrix(D, f"D_{m}", {"m": m, "gamma": gamma, "M": sys.M.copy(), "n_int": sys.n_int})


# -- data of the Helmholtz interface equation -----------------------------------------

@dataclass
class ThetaProblemData:
    eta: tuple[np.ndarray, np.ndarray]
    nu: tuple[np.ndarray, np.ndarray]
    v: tuple[SubdomainSolution, SubdomainSolution]
    gamma: float
    robin_sign: int = 1

    @property
    def eta_vector(self) -> np.ndarray:
        return np.concatenate(self.eta)

    @property
    def nu_vector(self) -> np.ndarray:
        return np.concatenate(self.nu)


def build_eta(grid: Grid2D, k: float, gamma: float, f, *, dec: Decomposition | None = None,
              pair: DespresPair | None = None, robin_sign: int = 1) -> ThetaProblemData:
    """Local solves ``v_m`` with zero incoming Robin data, ``nu_m = 2 i gamma v_m|G``,
    and ``eta = (P_1 nu_2, P_2 nu_1)``.

    ``robin_sign=-1`` swaps the Robin sign of the ``v_m`` solves; it exists only
    to show that the wrong convention breaks consistency.
    """
    _check_gamma(gamma)
    dec = dec if dec is not None else Decomposition(grid, k)
    v = tuple(solve_robin(dec[m], f, None, sign=robin_sign, gamma=gamma) for m in (1, 2))
    nu = tuple(2j * gamma * vm.u_gamma for vm in v)
    if pair is not None:
        eta = (pair.P1 @ nu[1], pair.P2 @ nu[0])
    else:
        eta = (despres_apply(dec[1], nu[1], gamma), despres_apply(dec[2], nu[0], gamma))
    return ThetaProblemData(eta=eta, nu=nu, v=v, gamma=gamma, robin_sign=robin_sign)


def outgoing_trace(system: SubdomainSystem, u_local, f, gamma: float) -> np.ndarray:
    """``du/dn_m + i gamma u`` on the interface, from the algebraic flux."""
    u_local = np.asarray(u_local)
    return algebraic_flux(system, u_local, f) / system.W + 1j * gamma * u_local[system.G]


def incoming_trace(system: SubdomainSystem, u_local, f, gamma: float) -> np.ndarray:
    u_local = np.asarray(u_local)
    return algebraic_flux(system, u_local, f) / system.W - 1j * gamma * u_local[system.G]


def pi_from_solution(dec: Decomposition, u_global, f, data: ThetaProblemData) -> np.ndarray:
    """Interface unknown attached to a global solution:
    ``pi_m = du/dn_m + i gamma u - nu_m`` (outgoing trace of ``u - v_m``).
    """
    parts = []
    for m, um in zip((1, 2), dec.split(u_global)):
        parts.append(outgoing_trace(dec[m], um, f, data.gamma) - data.nu[m - 1])
    return np.concatenate(parts)


# -- Laplace Dirichlet-lift data ---------------------------------------------------------

@dataclass
class LaplaceLiftData:
    """Zero-Dirichlet local solves ``g_m`` and ``eta_m = S_m^-1 flux_m(g_m)``."""

    g: tuple[SubdomainSolution, SubdomainSolution]
    eta: tuple[np.ndarray, np.ndarray]
    S: tuple[np.ndarray, np.ndarray]

    @property
    def rhs(self) -> np.ndarray:
        """``S_1 eta_1 + S_2 eta_2`` (sum of the lift fluxes)."""
        return self.S[0] @ self.eta[0] + self.S[1] @ self.eta[1]


def laplace_lift(dec: Decomposition, f, S=None) -> LaplaceLiftData:
    if dec.k != 0:
        raise ValueError("Laplace lift data needs a k = 0 decomposition")
    if S is None:
        S = tuple(steklov_matrix(dec.grid, m, system=dec[m]).entries for m in (1, 2))
    g = tuple(solve_dirichlet(dec[m], f, None) for m in (1, 2))
    eta = tuple(np.linalg.solve(S[m - 1], g[m - 1].flux) for m in (1, 2))
    return LaplaceLiftData(g=g, eta=eta, S=tuple(S))
