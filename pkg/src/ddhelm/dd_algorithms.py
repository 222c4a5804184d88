"""Interface iterations: two-sided Dirichlet-Neumann relaxation for Laplace and
the relaxed Robin (theta) iteration for Helmholtz, with modal-rate probes.

All errors are measured against the monolithic discrete solution.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClusterAmbiguity,
    InvalidGamma,
    MaxItersExceeded,
    ShapeMismatch,
    ThetaConditionViolated,
)
from .grid import Grid2D, GridSpec, build_grid, weighted_norm
from .interface_ops import (
    DespresPair,
    ThetaProblemData,
    build_eta,
    despres_pair,
    laplace_lift,
    pi_from_solution,
    steklov_matrix,
)
from .local_solve import Decomposition, harmonic_extension, solve_neumann, solve_robin
from .spectral import ASpectrum, a_spectrum, coercivity_check, ill_conditioning

log = logging.getLogger(__name__)

STAGNATION_TOL = 1e-12
STAGNATION_STEPS = 50


@dataclass
class ThetaConfig:
    theta: float = 0.5
    gamma: float = 1.0
    k: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-8
    initial: object = "zero"  # "zero" | "random" | ("eigenmode", n, sign) | array of length 2*n_gamma
    seed: int = 0
    stop_on_stagnation: bool = True
    strict: bool = False  # raise MaxItersExceeded instead of returning the unconverged result

    def validate(self) -> None:
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.gamma == 0:
            raise InvalidGamma("gamma must be nonzero")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass
class IterationTrace:
    err_pi: list = field(default_factory=list)
    err_u1: list = field(default_factory=list)
    err_u2: list = field(default_factory=list)
    rate: list = field(default_factory=list)
    converged: bool = False
    stagnated: bool = False

    def record(self, e_pi: float, e_u1: float = np.nan, e_u2: float = np.nan) -> float:
        prev = self.err_pi[-1] if self.err_pi else None
        r = e_pi / prev if prev else np.nan
        self.err_pi.append(float(e_pi))
        self.err_u1.append(float(e_u1))
        self.err_u2.append(float(e_u2))
        self.rate.append(float(r))
        return r

    @property
    def iters_used(self) -> int:
        return max(len(self.err_pi) - 1, 0)

    def asymptotic_rate(self, window: int = 5) -> float:
        """Geometric mean of the last ``window`` rates taken above roundoff."""
        e = np.asarray(self.err_pi)
        floor = 1e3 * np.finfo(float).eps * (e[0] if e.size and e[0] > 0 else 1.0)
        good = np.flatnonzero(e > floor)
        if good.size < 2:
            return 0.0
        last = good[-1]
        first = max(good[0], last - window)
        if last == first:
            return 0.0
        return float((e[last] / e[first]) ** (1.0 / (last - first)))

    def max_rate(self) -> float:
        r = np.asarray(self.rate[1:])
        r = r[np.isfinite(r)]
        return float(r.max()) if r.size else np.nan

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "err_pi", "err_u1", "err_u2", "rate"])
            for i, row in enumerate(zip(self.err_pi, self.err_u1, self.err_u2, self.rate)):
                w.writerow([i] + ["%.17g" % v for v in row])


# -- Laplace -------------------------------------------------------------------------

@dataclass
class LaplaceResult:
    lam: np.ndarray
    lam_glob: np.ndarray
    trace: IterationTrace
    b_norm: float
    u: tuple[np.ndarray, np.ndarray]


def laplace_dn_iterate(grid: Grid2D, theta: float, f, lam0=None, *, max_iters: int = 500,
                       tol: float = 1e-10, dec: Decomposition | None = None,
                       strict: bool = False) -> LaplaceResult:
    """Two-sided relaxation
    ``lam <- ((1-theta) I - theta/2 B) lam - theta/2 (S_1^-1 + S_2^-1)(S_1 eta_1 + S_2 eta_2)``
    with ``B = S_1^-1 S_2 + S_2^-1 S_1``, applied through local Dirichlet and
    Neumann solves. Errors are in the energy norm of ``S_1 + S_2``.
    ``tol=0`` disables the stopping test and runs all ``max_iters`` steps.
    """
    if not 0.0 < theta < 1.0:
        raise ThetaConditionViolated(f"theta must lie in (0, 1), got {theta}")
    dec = dec if dec is not None else Decomposition(grid, 0.0)
    if dec.k != 0:
        raise ValueError("laplace_dn_iterate needs a k = 0 decomposition")
    S = tuple(steklov_matrix(grid, m, system=dec[m]).entries for m in (1, 2))
    b_norm = coercivity_check(grid, S=S).b_norm
    if theta * b_norm >= 2.0 * (1.0 - theta):
        raise ThetaConditionViolated(
            f"theta*|B| = {theta * b_norm:.6g} must be below 2(1-theta) = {2 * (1 - theta):.6g}"
        )
    S_tot = S[0] + S[1]
    n = dec.W.size
    f = np.zeros(grid.n_interior) if f is None else np.asarray(f, dtype=float)
    lift = laplace_lift(dec, f, S=S)
    u_mono = dec.monolithic(f)
    lam_glob = u_mono[grid.gamma]
    U = dec.split(u_mono)

    def s_apply(m, lam):  # S_m lam via a Dirichlet solve; also returns the harmonic extension
        sol = harmonic_extension(dec[m], lam)
        return sol.flux, sol.u

    def s_solve(m, flux):  # S_m^-1 flux via a Neumann solve
        return solve_neumann(dec[m], None, flux / dec.W).u_gamma

    rhs = lift.g[0].flux + lift.g[1].flux
    const = -0.5 * theta * (s_solve(1, rhs) + s_solve(2, rhs))

    def energy_err(lam):
        d = lam - lam_glob
        return float(np.sqrt(max(np.real(d @ S_tot @ d), 0.0)))

    lam = np.zeros(n) if lam0 is None else np.asarray(lam0, dtype=float).copy()
    if lam.shape != (n,):
        raise ShapeMismatch(f"lam0 must have length {n}, got {lam.shape}")
    ref = energy_err(np.zeros(n)) or 1.0
    trace = IterationTrace()

    def record(lam, ext):
        e = [np.sqrt(max(dec[m].energy(ext[m - 1] + lift.g[m - 1].u - U[m - 1]), 0.0)) for m in (1, 2)]
        return trace.record(energy_err(lam), *e)

    f1, w1 = s_apply(1, lam)
    f2, w2 = s_apply(2, lam)
    record(lam, (w1, w2))
    for _ in range(max_iters):
        if tol > 0 and trace.err_pi[-1] <= tol * ref:
            trace.converged = True
            break
        b_lam = s_solve(1, f2) + s_solve(2, f1)
        lam = (1.0 - theta) * lam - 0.5 * theta * b_lam + const
        f1, w1 = s_apply(1, lam)
        f2, w2 = s_apply(2, lam)
        record(lam, (w1, w2))
    else:
        trace.converged = trace.err_pi[-1] <= tol * ref
    result = LaplaceResult(lam, lam_glob, trace, b_norm, (w1 + lift.g[0].u, w2 + lift.g[1].u))
    if strict and not trace.converged:
        raise MaxItersExceeded(f"no convergence in {max_iters} iterations", result)
    return result


# -- Helmholtz -------------------------------------------------------------------------

@dataclass
class ThetaResult:
    pi: np.ndarray
    pi_u: np.ndarray
    u: tuple[np.ndarray, np.ndarray]
    u_mono: tuple[np.ndarray, np.ndarray]
    trace: IterationTrace
    data: ThetaProblemData

    def energy_relative_error(self, dec: Decomposition) -> tuple[float, float]:
        out = []
        for m in (1, 2):
            den = np.sqrt(dec[m].energy(self.u_mono[m - 1])) or 1.0
            out.append(float(np.sqrt(dec[m].energy(self.u[m - 1] - self.u_mono[m - 1])) / den))
        return tuple(out)


def modal_rate(theta: float, tau: float, sign: int) -> float:
    """Per-step contraction ``|theta + sign (1-theta) e^{i tau/2}|`` of one mode of ``A``."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    return float(abs(theta + sign * (1.0 - theta) * np.exp(0.5j * tau)))


def reconstruct_global(grid: Grid2D, k: float, gamma: float, pi, data: ThetaProblemData, f=None, *,
                       dec: Decomposition | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Local solutions with outgoing data ``du/dn_m + i gamma u = pi_m + nu_m``."""
    dec = dec if dec is not None else Decomposition(grid, k)
    pi = np.asarray(pi)
    n = dec.W.size
    if pi.shape != (2 * n,) or data.nu[0].shape != (n,):
        raise ShapeMismatch(f"pi must have length {2 * n}, got {pi.shape}")
    return tuple(
        solve_robin(dec[m], f, pi[(m - 1) * n: m * n] + data.nu[m - 1], sign=-1, gamma=gamma).u
        for m in (1, 2)
    )


def _initial_pi(cfg: ThetaConfig, pi_u: np.ndarray, ww: np.ndarray, aspec_fn) -> np.ndarray:
    init = cfg.initial
    scale = weighted_norm(ww, pi_u) or 1.0
    if isinstance(init, str):
        if init == "zero":
            return np.zeros_like(pi_u)
        if init == "random":
            rng = np.random.default_rng(cfg.seed)
            d = rng.standard_normal(pi_u.size) + 1j * rng.standard_normal(pi_u.size)
            return pi_u + scale * d / weighted_norm(ww, d)
        raise ValueError(f"unknown initial preset {init!r}")
    if isinstance(init, tuple) and init and init[0] == "eigenmode":
        _, n, sign = init
        d = aspec_fn().mode_vector(n, sign, seed=cfg.seed)
        return pi_u + scale * d / weighted_norm(ww, d)
    arr = np.asarray(init, dtype=complex)
    if arr.shape != pi_u.shape:
        raise ShapeMismatch(f"initial pi must have length {pi_u.size}, got {arr.shape}")
    return arr


def helmholtz_theta_iterate(grid: Grid2D, cfg: ThetaConfig, f, *, dec: Decomposition | None = None,
                            pair: DespresPair | None = None, aspec: ASpectrum | None = None,
                            form: str = "u", track_u: bool = True) -> ThetaResult:
    """``pi <- theta pi + (1 - theta)(A pi - eta)``.

    ``form="u"`` runs the iteration on the subdomain solutions, one incoming
    Robin solve per subdomain per step; ``form="pi"`` applies the dense ``A``.
    The two are the same map written in different variables.
    """
    cfg.validate()
    if form not in ("u", "pi"):
        raise ValueError(f"form must be 'u' or 'pi', got {form!r}")
    dec = dec if dec is not None else Decomposition(grid, cfg.k)
    gamma, theta = cfg.gamma, cfg.theta
    f = np.zeros(grid.n_interior) if f is None else np.asarray(f)
    u_glob = dec.monolithic(f)  # runs the global resonance guard
    U = dec.split(u_glob)
    if form == "pi" and pair is None:
        pair = despres_pair(dec, gamma)
    data = build_eta(grid, cfg.k, gamma, f, dec=dec, pair=pair)
    pi_u = pi_from_solution(dec, u_glob, f, data)
    n = dec.W.size
    ww = np.concatenate([dec.W, dec.W])

    cache = {}

    def get_aspec():
        if aspec is not None:
            return aspec
        if "a" not in cache:
            cache["a"] = a_spectrum(grid, cfg.k, gamma, pair=pair or despres_pair(dec, gamma))
        return cache["a"]

    pi = _initial_pi(cfg, pi_u, ww, get_aspec)
    ref = weighted_norm(ww, pi_u) or weighted_norm(ww, pi - pi_u) or 1.0
    trace = IterationTrace()

    def u_err(u):
        return [np.sqrt(max(dec[m].energy(u[m - 1] - U[m - 1]), 0.0)) for m in (1, 2)]

    def out_data(pi):  # outgoing Robin data of each subdomain
        return pi[:n] + data.nu[0], pi[n:] + data.nu[1]

    u = None
    if form == "u" or track_u:
        g_out = out_data(pi)
        u = tuple(solve_robin(dec[m], f, g_out[m - 1], sign=-1, gamma=gamma).u for m in (1, 2))
    trace.record(weighted_norm(ww, pi - pi_u), *(u_err(u) if u is not None else (np.nan, np.nan)))

    stagnant = 0
    for _ in range(cfg.max_iters):
        if trace.err_pi[-1] <= cfg.tol * ref:
            trace.converged = True
            break
        if form == "u":
            g_out = out_data(pi)
            # new incoming data: own incoming trace relaxed against the neighbour's outgoing trace
            g_in = [None, None]
            for m, o in ((1, 2), (2, 1)):
                own_in = g_out[m - 1] - 2j * gamma * u[m - 1][dec[m].G]
                g_in[m - 1] = theta * own_in - (1.0 - theta) * g_out[o - 1]
            sols = [solve_robin(dec[m], f, g_in[m - 1], sign=1, gamma=gamma) for m in (1, 2)]
            u = tuple(s.u for s in sols)
            pi = np.concatenate([g_in[m - 1] + 2j * gamma * sols[m - 1].u_gamma - data.nu[m - 1] for m in (1, 2)])
        else:
            pi = theta * pi + (1.0 - theta) * (pair.A @ pi - data.eta_vector)
            if track_u:
                g_out = out_data(pi)
                u = tuple(solve_robin(dec[m], f, g_out[m - 1], sign=-1, gamma=gamma).u for m in (1, 2))
        r = trace.record(weighted_norm(ww, pi - pi_u), *(u_err(u) if u is not None else (np.nan, np.nan)))
        stagnant = stagnant + 1 if np.isfinite(r) and abs(r - 1.0) < STAGNATION_TOL else 0
        if cfg.stop_on_stagnation and stagnant >= STAGNATION_STEPS:
            trace.stagnated = True
            log.info("stagnation after %d iterations", trace.iters_used)
            break
    else:
        trace.converged = trace.err_pi[-1] <= cfg.tol * ref

    if u is None:
        u = reconstruct_global(grid, cfg.k, gamma, pi, data, f, dec=dec)
    result = ThetaResult(pi, pi_u, u, U, trace, data)
    if cfg.strict and not trace.converged:
        raise MaxItersExceeded(f"theta iteration did not reach tol={cfg.tol} in {trace.iters_used} steps", result)
    return result


@dataclass
class ProbeResult:
    measured: np.ndarray
    predicted: float
    tau: float

    @property
    def max_relative_deviation(self) -> float:
        return float(np.max(np.abs(self.measured / self.predicted - 1.0)))


def modal_rate_probe(grid: Grid2D, cfg: ThetaConfig, n: int, sign: int, *, steps: int = 20,
                     aspec: ASpectrum | None = None, dec: Decomposition | None = None,
                     reproject: bool = True) -> ProbeResult:
    """Start from an error inside ``F_n^sign`` and measure the per-step contraction
    ``|T d|_W / |d|_W`` of the error map ``T = theta I + (1 - theta) A``.

    With ``reproject`` the error is projected back onto ``F_n^sign`` after each
    step. This removes only rounding leakage into other modes, which otherwise
    swamps fast-decaying modes within a few steps.
    """
    if not 0.0 <= cfg.theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {cfg.theta}")
    dec = dec if dec is not None else Decomposition(grid, cfg.k)
    if aspec is None:
        aspec = a_spectrum(grid, cfg.k, cfg.gamma, pair=despres_pair(dec, cfg.gamma))
    cl = aspec.clusters[n]
    if cl.merged:
        raise ClusterAmbiguity(f"cluster {n} merges distinct eigenvalues (spread {cl.spread:.3e})")
    ww = aspec.pair.ww
    A = aspec.pair.A.entries
    Pn = aspec.eigen_projector(n, sign).matrix if reproject else None
    d = aspec.mode_vector(n, sign, seed=cfg.seed)
    rates = []
    for _ in range(steps):
        d_norm = weighted_norm(ww, d)
        nxt = cfg.theta * d + (1.0 - cfg.theta) * (A @ d)
        rates.append(weighted_norm(ww, nxt) / d_norm)
        d = Pn @ nxt if reproject else nxt
        d = d / weighted_norm(ww, d)
    return ProbeResult(np.asarray(rates), modal_rate(cfg.theta, cl.tau, sign), cl.tau)


# -- refinement -----------------------------------------------------------------------

def iterations_to_tol(T: np.ndarray, e0: np.ndarray, w: np.ndarray, tol: float, max_iters: int = 10**7) -> int:
    """Smallest ``p`` with ``|T^p e0|_w <= tol |e0|_w``, by repeated squaring.

    Valid when ``|T^p e0|_w`` is non-increasing in ``p``, which holds for the
    theta iteration (a normal contraction in the weighted norm).
    Returns ``-1`` if more than ``max_iters`` steps would be needed.
    """
    target = tol * weighted_norm(w, e0)
    if weighted_norm(w, e0) <= target:
        return 0
    powers = [np.asarray(T)]
    while weighted_norm(w, powers[-1] @ e0) > target:
        if 2 ** len(powers) > 2 * max_iters:
            return -1
        powers.append(powers[-1] @ powers[-1])
    p, cur = 0, e0
    for j in range(len(powers) - 1, -1, -1):
        cand = powers[j] @ cur
        if weighted_norm(w, cand) > target:
            cur, p = cand, p + 2**j
    p += 1
    return p if p <= max_iters else -1


def step_interface_profile(grid: Grid2D) -> np.ndarray:
    """Fixed discontinuous interface profile used as the initial error in refinement studies."""
    y = (np.arange(grid.n_gamma) + 1) * grid.hy
    prof = np.where(y < 0.5 * grid.spec.Ly, 1.0, -0.5).astype(complex)
    return np.concatenate([prof, np.zeros_like(prof)])


@dataclass
class RefinementRow:
    n: int
    gap_from_one: float
    cond: float
    iterations: int


def refinement_sweep(levels=(16, 32, 64), k: float = 1.0, gamma: float = 1.0, theta: float = 0.5,
                     tol: float = 1e-3, L: float = 1.0) -> list[RefinementRow]:
    """Gap of ``sig(P_1 P_2)`` from 1, ``cond(A - I)`` and the theta-iteration count
    for a fixed initial error, on successively refined square grids."""
    from .spectral import product_spectrum

    rows = []
    for n in levels:
        grid = build_grid(GridSpec.square(n, L))
        dec = Decomposition(grid, k)
        pair = despres_pair(dec, gamma)
        prod = product_spectrum(grid, k, gamma, pair=pair)
        T = theta * np.eye(2 * pair.n) + (1.0 - theta) * pair.A.entries
        its = iterations_to_tol(T, step_interface_profile(grid), pair.ww, tol)
        rows.append(RefinementRow(n, prod.gap_from_one, ill_conditioning(pair), its))
    return rows
