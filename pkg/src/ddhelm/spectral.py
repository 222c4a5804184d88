"""Dense eigen-analysis of the interface operators.

Every eigenpair is residual-certified. Eigenvalues on the unit circle are
grouped into clusters by argument; a cluster stands in for one eigenspace.
Spectral projectors come from the eigenvector matrix, ``V[:, c] @ inv(V)[c, :]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import ClusterAmbiguity, ConvergenceFailure, TooCloseToSpectrum
from .grid import Grid2D
from .interface_ops import (
    DespresPair,
    despres_matrix,
    despres_pair,
    dm_matrix,
    intertwining_inverse,
    steklov_matrix,
    w_adjoint,
)
from .local_solve import Decomposition, check_resonance, dirichlet_eigenvalues

EIG_CAP = 2000
RESIDUAL_TOL = 1e-9
CLUSTER_TOL = 1e-6


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    label: str = ""
    pairing_defect: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def max_unit_circle_deviation(self) -> float:
        return float(np.max(np.abs(np.abs(self.eigenvalues) - 1.0)))

    @property
    def gap_from_one(self) -> float:
        return float(np.min(np.abs(self.eigenvalues - 1.0)))

    @property
    def arguments(self) -> np.ndarray:
        return np.angle(self.eigenvalues)

    def near_one_fraction(self, arc: float = 0.1) -> float:
        """Share of eigenvalues with ``|arg| < arc``; grows under refinement as they accumulate at 1."""
        return float(np.mean(np.abs(self.arguments) < arc)) if self.eigenvalues.size else 0.0

    def inverse_vectors(self) -> np.ndarray:
        return np.linalg.inv(self.eigenvectors)

    def projector(self, idx) -> np.ndarray:
        V = self.eigenvectors
        return V[:, idx] @ self.inverse_vectors()[idx, :]


@dataclass
class Projector:
    matrix: np.ndarray
    rank: int
    eigenvalue: complex

    def idempotency_defect(self) -> float:
        P = self.matrix
        return float(np.linalg.norm(P @ P - P, 2) / max(np.linalg.norm(P, 2), 1e-300))


def eig_dense(M, *, cap: int = EIG_CAP, residual_tol: float = RESIDUAL_TOL, label: str = "") -> SpectralReport:
    """All eigenpairs of a dense matrix, sorted by argument, with residual certification."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix expected, got shape {M.shape}")
    if M.shape[0] > cap:
        raise ValueError(f"matrix size {M.shape[0]} exceeds the dense eigensolver cap {cap}")
    try:
        lam, V = sla.eig(M)
    except sla.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    V = V / np.linalg.norm(V, axis=0)[None, :]
    order = np.lexsort((np.abs(lam), np.angle(lam)))
    lam, V = lam[order], V[:, order]
    scale = max(np.linalg.norm(M, 1), np.finfo(float).tiny)
    residuals = np.linalg.norm(M @ V - V * lam[None, :], axis=0) / scale
    if residuals.size and residuals.max() > residual_tol:
        raise ConvergenceFailure(
            f"eigenpair residual {residuals.max():.3e} exceeds {residual_tol:.1e} * |M|"
        )
    return SpectralReport(lam, V, residuals, label=label)


def cluster_by_argument(eigenvalues, tol: float = CLUSTER_TOL) -> list[np.ndarray]:
    """Group unit-circle eigenvalues whose arguments lie within ``tol`` of a neighbour."""
    ang = np.angle(np.asarray(eigenvalues))
    order = np.argsort(ang)
    clusters, current = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if ang[b] - ang[a] < tol:
            current.append(b)
        else:
            clusters.append(np.array(current))
            current = [b]
    clusters.append(np.array(current))
    # wrap-around at +-pi
    if len(clusters) > 1 and (ang[order[0]] + 2 * np.pi) - ang[order[-1]] < tol:
        clusters[0] = np.concatenate([clusters.pop(), clusters[0]])
    return clusters


def multiset_distance(a, b) -> float:
    """Largest distance under the optimal one-to-one matching of two equal-size multisets."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"multisets of different sizes: {a.shape} vs {b.shape}")
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max()) if a.size else 0.0


def hausdorff_distance(a, b) -> float:
    d = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# -- Despres operators ---------------------------------------------------------

def despres_spectrum(grid: Grid2D, m: int, k: float, gamma: float, *, dec: Decomposition | None = None) -> SpectralReport:
    """Spectrum of ``P_m^gamma``. ``extra['resonant']`` tells whether ``k^2`` sits on a
    subdomain Dirichlet eigenvalue, in which case 1 is expected in the spectrum."""
    system = dec[m] if dec is not None else None
    P = despres_matrix(grid, m, k, gamma, system=system)
    rep = eig_dense(P, label=f"P_{m}")
    eigs = dirichlet_eigenvalues(grid, m)
    dist = float(np.min(np.abs(eigs - k * k))) if eigs.size else np.inf
    rep.extra.update(resonant=dist < 1e-8, dirichlet_distance=dist)
    return rep


@dataclass
class ProductSpectrum:
    r12: SpectralReport
    r21: SpectralReport
    multiset_defect: float
    conjugate_vector_defect: float

    @property
    def gap_from_one(self) -> float:
        return min(self.r12.gap_from_one, self.r21.gap_from_one)

    @property
    def max_unit_circle_deviation(self) -> float:
        return max(self.r12.max_unit_circle_deviation, self.r21.max_unit_circle_deviation)


def product_spectrum(grid: Grid2D, k: float, gamma: float, *, pair: DespresPair | None = None,
                     check: bool = True) -> ProductSpectrum:
    """Spectra of ``P_1 P_2`` and ``P_2 P_1``; they must coincide, and a ``P_1 P_2``
    eigenvector conjugated is a ``P_2 P_1`` eigenvector for the same eigenvalue."""
    if check and k != 0:
        check_resonance(dirichlet_eigenvalues(grid, None), k, "global Dirichlet")
    if pair is None:
        pair = despres_pair(Decomposition(grid, k), gamma)
    P1, P2 = pair.P1.entries, pair.P2.entries
    r12 = eig_dense(P1 @ P2, label="P1P2")
    r21 = eig_dense(P2 @ P1, label="P2P1")
    conj_v = r12.eigenvectors.conj()
    defect = np.linalg.norm(P2 @ P1 @ conj_v - conj_v * r12.eigenvalues[None, :], axis=0).max()
    return ProductSpectrum(r12, r21, multiset_distance(r12.eigenvalues, r21.eigenvalues), float(defect))


# -- intertwining operator -----------------------------------------------------------

@dataclass
class ModeCluster:
    """One eigenspace ``E_12^n`` of ``P_1 P_2`` and the matching data of ``A``."""

    tau: float
    idx12: np.ndarray
    idx21: np.ndarray
    idxA: dict  # sign -> indices into the A report
    spread: float

    @property
    def rank(self) -> int:
        return self.idx12.size

    @property
    def merged(self) -> bool:
        return self.spread > 1e-10


@dataclass
class ASpectrum:
    pair: DespresPair
    report: SpectralReport
    products: ProductSpectrum
    clusters: list[ModeCluster]  # ordered by |tau| descending
    proj12: list[np.ndarray]
    proj21: list[np.ndarray]

    @property
    def merged_clusters(self) -> int:
        return sum(c.merged for c in self.clusters)

    def eigen_projector(self, n: int, sign: int) -> Projector:
        c = self.clusters[n]
        return Projector(self.report.projector(c.idxA[sign]), c.rank, sign * np.exp(0.5j * c.tau))

    def formula_projector(self, n: int, sign: int) -> np.ndarray:
        """Block projector assembled from ``Pi_12^n``, ``Pi_21^n``, ``P_1``, ``P_2``."""
        c = self.clusters[n]
        P1, P2 = self.pair.P1.entries, self.pair.P2.entries
        Pi12, Pi21 = self.proj12[n], self.proj21[n]
        ph = -sign * 0.5 * np.exp(-0.5j * c.tau)
        return np.block([[0.5 * Pi12, ph * (P1 @ Pi21)], [ph * (P2 @ Pi12), 0.5 * Pi21]])

    def mode_vector(self, n: int, sign: int, seed: int = 0) -> np.ndarray:
        """A vector of ``F_n^sign``: ``(mu, -sign e^{-i tau/2} P_2 mu)`` with ``mu`` in ``E_12^n``."""
        c = self.clusters[n]
        V = self.products.r12.eigenvectors[:, c.idx12]
        coef = np.random.default_rng(seed).standard_normal(c.rank) if c.rank > 1 else np.ones(1)
        mu = V @ coef
        return np.concatenate([mu, -sign * np.exp(-0.5j * c.tau) * (self.pair.P2.entries @ mu)])

    # -- checks ---------------------------------------------------------------
    def projector_mismatch(self) -> np.ndarray:
        out = []
        for n in range(len(self.clusters)):
            for s in (1, -1):
                Pe = self.eigen_projector(n, s).matrix
                out.append(np.linalg.norm(Pe - self.formula_projector(n, s), 2))
        return np.array(out)

    def completeness_defect(self) -> float:
        total = sum(self.eigen_projector(n, s).matrix for n in range(len(self.clusters)) for s in (1, -1))
        return float(np.linalg.norm(total - np.eye(total.shape[0]), 2))

    def reconstruction_defect(self) -> float:
        total = sum(
            s * np.exp(0.5j * c.tau) * self.eigen_projector(n, s).matrix
            for n, c in enumerate(self.clusters)
            for s in (1, -1)
        )
        return float(np.linalg.norm(total - self.pair.A.entries, 2))

    def formula_completeness_defect(self) -> float:
        total = sum(self.formula_projector(n, s) for n in range(len(self.clusters)) for s in (1, -1))
        return float(np.linalg.norm(total - np.eye(total.shape[0]), 2))

    def cross_products(self) -> float:
        """Largest ``|P_a P_b|`` over distinct (cluster, sign) pairs."""
        Ps = [self.eigen_projector(n, s).matrix for n in range(len(self.clusters)) for s in (1, -1)]
        worst = 0.0
        for i, Pa in enumerate(Ps):
            for j, Pb in enumerate(Ps):
                if i != j:
                    worst = max(worst, float(np.abs(Pa @ Pb).max()))
        return worst

    def self_adjointness_defect(self) -> float:
        """Projectors of a normal operator are self-adjoint in the weighted pairing."""
        ww = self.pair.ww
        return max(
            float(np.abs(P - w_adjoint(P, ww)).max())
            for P in (self.eigen_projector(n, s).matrix for n in range(len(self.clusters)) for s in (1, -1))
        )

    def membership_defect(self) -> float:
        """Each ``A`` eigenvector ``(xi, eta)`` of cluster ``n`` and sign ``s`` has
        ``xi`` in ``E_12^n`` and ``eta = -s e^{-i tau_n/2} P_2 xi``."""
        V = self.report.eigenvectors
        P2 = self.pair.P2.entries
        n_g = self.pair.n
        worst = 0.0
        for n, c in enumerate(self.clusters):
            for s in (1, -1):
                for j in c.idxA[s]:
                    xi, eta = V[:n_g, j], V[n_g:, j]
                    d1 = np.linalg.norm(eta + s * np.exp(-0.5j * c.tau) * (P2 @ xi))
                    d2 = np.linalg.norm(self.proj12[n] @ xi - xi)
                    worst = max(worst, d1, d2)
        return float(worst)

    def mapping_defect(self) -> float:
        """``{mu^2 : mu in sig(A)}`` against ``sig(P_1 P_2)`` counted twice."""
        sq = self.report.eigenvalues ** 2
        doubled = np.concatenate([self.products.r12.eigenvalues] * 2)
        return multiset_distance(sq, doubled)


def a_spectrum(grid: Grid2D, k: float, gamma: float, *, pair: DespresPair | None = None,
               check: bool = True, cluster_tol: float = CLUSTER_TOL) -> ASpectrum:
    if pair is None:
        pair = despres_pair(Decomposition(grid, k), gamma)
    products = product_spectrum(grid, k, gamma, pair=pair, check=check)
    rep = eig_dense(pair.A, label="A")
    rep.pairing_defect = hausdorff_distance(rep.eigenvalues, -rep.eigenvalues)

    r12, r21 = products.r12, products.r21
    groups12 = cluster_by_argument(r12.eigenvalues, cluster_tol)
    taus = np.array([np.angle(np.mean(r12.eigenvalues[g])) for g in groups12])
    spreads = np.array([np.ptp(np.angle(r12.eigenvalues[g])) if g.size > 1 else 0.0 for g in groups12])

    # match P2P1 and A eigenvalues to the nearest individual P1P2 eigenvalue, then to its cluster
    nclu = len(groups12)
    label = np.empty(r12.eigenvalues.size, dtype=int)
    for n, g in enumerate(groups12):
        label[g] = n
    ang12 = np.angle(r12.eigenvalues)
    near21 = np.argmin(np.abs(r21.eigenvalues[:, None] - r12.eigenvalues[None, :]), axis=1)
    owner21 = label[near21]
    roots = np.exp(0.5j * ang12)
    targets = np.concatenate([roots, -roots])
    near_a = np.argmin(np.abs(rep.eigenvalues[:, None] - targets[None, :]), axis=1)
    ownerA = np.where(near_a < roots.size, label[near_a % roots.size], label[near_a % roots.size] + nclu)

    clusters = []
    for n, g in enumerate(groups12):
        idx21 = np.flatnonzero(owner21 == n)
        idxA = {1: np.flatnonzero(ownerA == n), -1: np.flatnonzero(ownerA == n + nclu)}
        if idx21.size != g.size or idxA[1].size != g.size or idxA[-1].size != g.size:
            raise ClusterAmbiguity(
                f"cluster at tau={taus[n]:.6g} has ranks P1P2={g.size}, P2P1={idx21.size}, "
                f"A(+)={idxA[1].size}, A(-)={idxA[-1].size}"
            )
        clusters.append(ModeCluster(float(taus[n]), g, idx21, idxA, float(spreads[n])))

    order = np.argsort(-np.abs(taus), kind="stable")
    clusters = [clusters[i] for i in order]
    proj12 = [r12.projector(c.idx12) for c in clusters]
    proj21 = [r21.projector(c.idx21) for c in clusters]
    return ASpectrum(pair, rep, products, clusters, proj12, proj21)


def resolvent_check(pair: DespresPair, lam: complex, *, eigenvalues=None, min_distance: float = 1e-4) -> float:
    """Relative gap between ``(A - lam I)^-1`` and its 2x2 block formula in ``P_1 P_2``, ``P_2 P_1``."""
    A = pair.A.entries
    if eigenvalues is None:
        eigenvalues = sla.eigvals(A)
    dist = float(np.min(np.abs(np.asarray(eigenvalues) - lam)))
    if dist < min_distance:
        raise TooCloseToSpectrum(f"lambda={lam} is {dist:.3e} from the spectrum of A (need >= {min_distance})")
    P1, P2 = pair.P1.entries, pair.P2.entries
    n = pair.n
    I = np.eye(n)
    R12 = np.linalg.inv(P1 @ P2 - lam**2 * I)
    R21 = np.linalg.inv(P2 @ P1 - lam**2 * I)
    formula = np.block([[lam * R12, -R12 @ P1], [-R21 @ P2, lam * R21]])
    direct = np.linalg.inv(A - lam * np.eye(2 * n))
    return float(np.linalg.norm(direct - formula, 2) / np.linalg.norm(direct, 2))


def negative_gamma_inverse_defect(grid: Grid2D, pair: DespresPair, dec: Decomposition) -> float:
    """``A`` times the inverse assembled from the ``-gamma`` Despres operators, minus ``I``."""
    inv = intertwining_inverse(grid, pair.k, pair.gamma, dec=dec)
    return float(np.abs(pair.A.entries @ inv.entries - np.eye(2 * pair.n)).max())


def ill_conditioning(pair: DespresPair) -> float:
    """2-norm condition number of ``A - I``."""
    return float(np.linalg.cond(pair.A.entries - np.eye(2 * pair.n)))


# -- Laplace-Robin solution operator --------------------------------------------------

@dataclass
class DmReport:
    report: SpectralReport
    gamma: float
    adjoint_defect: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.report.eigenvalues

    @property
    def max_real(self) -> float:
        return float(self.eigenvalues.real.max())

    @property
    def min_gamma_imag(self) -> float:
        return float((self.gamma * self.eigenvalues.imag).min())

    def nonzero(self, floor: float = 1e-8) -> np.ndarray:
        return self.eigenvalues[np.abs(self.eigenvalues) > floor]

    @property
    def min_abs_imag(self) -> float:
        """Smallest ``|Im mu|`` over eigenvalues with ``|mu| > 1e-8``."""
        return float(np.abs(self.nonzero().imag).min())

    @property
    def c_measured(self) -> float:
        mu = self.nonzero()
        return float(np.max(np.abs(mu.imag) / (abs(self.gamma) * np.abs(mu.real))))


def dm_spectrum_check(grid: Grid2D, m: int, gamma: float, *, dec: Decomposition | None = None) -> DmReport:
    system = dec[m] if dec is not None and dec.k == 0 else None
    D = dm_matrix(grid, m, gamma, system=system)
    Dneg = dm_matrix(grid, m, -gamma, system=system)
    M = D.metadata["M"]
    lhs = M[:, None] * D.entries
    rhs = Dneg.entries.conj().T * M[None, :]
    adj = float(np.abs(lhs - rhs).max() / np.abs(lhs).max())
    rep = eig_dense(D, label=f"D_{m}")
    return DmReport(rep, gamma, adj)


# -- Steklov coercivity ---------------------------------------------------------------

@dataclass
class CoercivityReport:
    min_eig: float
    max_eig: float
    hermitian_defect: float
    eigenvalues: np.ndarray

    @property
    def c_measured(self) -> float:
        return self.min_eig - 1.0

    @property
    def b_norm(self) -> float:
        """Norm of ``S_1^-1 S_2 + S_2^-1 S_1`` in the energy pairing of ``S = S_1 + S_2``."""
        return self.max_eig


def coercivity_check(grid: Grid2D, *, S=None, dec: Decomposition | None = None) -> CoercivityReport:
    """Generalized eigenvalues of ``(S B, S)`` with ``B = S_1^-1 S_2 + S_2^-1 S_1``."""
    if S is None:
        systems = (dec[1], dec[2]) if dec is not None and dec.k == 0 else (None, None)
        S = tuple(steklov_matrix(grid, m, system=systems[m - 1]).entries for m in (1, 2))
    S1, S2 = S
    B = np.linalg.solve(S1, S2) + np.linalg.solve(S2, S1)
    S_tot = S1 + S2
    SB = S_tot @ B
    herm = float(np.abs(SB - SB.conj().T).max() / np.abs(SB).max())
    ev = sla.eigvalsh(0.5 * (SB + SB.conj().T), S_tot)
    return CoercivityReport(float(ev.min()), float(ev.max()), herm, ev)
