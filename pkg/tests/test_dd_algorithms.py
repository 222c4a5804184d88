import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ddhelm.dd_algorithms import (
    IterationTrace,
    ThetaConfig,
    helmholtz_theta_iterate,
    iterations_to_tol,
    laplace_dn_iterate,
    modal_rate,
    modal_rate_probe,
    reconstruct_global,
    refinement_sweep,
)
from ddhelm.errors import InvalidGamma, MaxItersExceeded, NearResonance, ShapeMismatch, ThetaConditionViolated
from ddhelm.grid import GridSpec, build_grid, weighted_norm
from ddhelm.interface_ops import build_eta, despres_pair, pi_from_solution, steklov_matrix
from ddhelm.local_solve import Decomposition, algebraic_flux, dirichlet_eigenvalues


def s_norm(S, v):
    return np.sqrt(v @ S @ v)


# -- Laplace ---------------------------------------------------------------------------

def test_laplace_fixed_point(grid33, lap33, rng):
    f = rng.standard_normal(grid33.n_interior)
    lam_glob = lap33.monolithic(f)[grid33.gamma]
    res = laplace_dn_iterate(grid33, 0.4, f, lam_glob, max_iters=10, tol=0.0, dec=lap33)
    assert res.trace.iters_used == 10
    S = sum(steklov_matrix(grid33, m).entries for m in (1, 2))
    assert max(res.trace.err_pi) <= 1e-12 * s_norm(S, lam_glob)


def test_laplace_homogeneous_contracts(grid_small, rng):
    res = laplace_dn_iterate(grid_small, 0.3, None, rng.standard_normal(grid_small.n_gamma), tol=1e-12)
    assert res.trace.converged
    assert np.allclose(res.lam_glob, 0)
    rates = np.asarray(res.trace.rate[1:6])
    assert np.all(rates < 1)


def test_laplace_rate_theta_04(grid33, lap33, rng):
    f = rng.standard_normal(grid33.n_interior)
    res = laplace_dn_iterate(grid33, 0.4, f, dec=lap33)
    assert res.trace.converged
    assert res.trace.err_pi[-1] <= 1e-10 * res.trace.err_pi[0]
    assert res.trace.asymptotic_rate() <= 1 - 1.5 * 0.4 + 1e-8
    # symmetric split: B = 2 I, so the rate is exactly 1 - 2 theta
    assert res.trace.asymptotic_rate() == pytest.approx(0.2, abs=1e-4)
    for m in (1, 2):
        U = lap33.split(lap33.monolithic(f))[m - 1]
        assert np.sqrt(lap33[m].energy(res.u[m - 1] - U)) <= 1e-9 * np.sqrt(lap33[m].energy(U))


def test_laplace_asymmetric_split(grid_small, rng):
    f = rng.standard_normal(grid_small.n_interior)
    res = laplace_dn_iterate(grid_small, 0.3, f, max_iters=2000)
    assert res.trace.converged
    assert np.allclose(res.lam, res.lam_glob, atol=1e-8 * np.abs(res.lam_glob).max())


@pytest.mark.parametrize("theta", [0.0, 1.0, 0.6])
def test_laplace_theta_condition(grid33, lap33, theta):
    with pytest.raises(ThetaConditionViolated):
        laplace_dn_iterate(grid33, theta, None, dec=lap33)


def test_laplace_strict_budget(grid33, lap33, rng):
    f = rng.standard_normal(grid33.n_interior)
    with pytest.raises(MaxItersExceeded) as err:
        laplace_dn_iterate(grid33, 0.1, f, max_iters=3, dec=lap33, strict=True)
    assert err.value.result.trace.iters_used == 3


# -- Helmholtz ---------------------------------------------------------------------------

def test_theta_one_is_stationary(grid33, dec33, sine33):
    res = helmholtz_theta_iterate(grid33, ThetaConfig(theta=1.0, initial="random", max_iters=10), sine33, dec=dec33)
    assert np.ptp(res.trace.err_pi) == 0 or np.ptp(res.trace.err_pi) < 1e-15


def test_theta_zero_isometry(grid33, dec33, sine33):
    cfg = ThetaConfig(theta=0.0, initial="random", max_iters=100, stop_on_stagnation=False)
    res = helmholtz_theta_iterate(grid33, cfg, sine33, dec=dec33)
    e = np.asarray(res.trace.err_pi)
    assert e.size == 101 and e[0] > 0
    assert np.ptp(e) <= 1e-10 * e[0]
    assert not res.trace.converged


def test_theta_zero_stagnation_stop(grid33, dec33, sine33):
    res = helmholtz_theta_iterate(grid33, ThetaConfig(theta=0.0, initial="random"), sine33, dec=dec33)
    assert res.trace.stagnated and not res.trace.converged
    assert res.trace.iters_used == 50


def test_theta_half_converges(grid33, dec33, sine33):
    res = helmholtz_theta_iterate(grid33, ThetaConfig(theta=0.5), sine33, dec=dec33)
    assert res.trace.converged
    assert res.trace.err_pi[-1] <= 1e-8 * weighted_norm(np.full(62, grid33.hy), res.pi_u)
    assert max(res.energy_relative_error(dec33)) <= 1e-8


@pytest.mark.parametrize("theta", [0.2, 0.5, 0.9])
def test_nonexpansive(grid33, dec33, rng, theta):
    f = rng.standard_normal(grid33.n_interior)
    cfg = ThetaConfig(theta=theta, initial="random", max_iters=200, seed=3)
    res = helmholtz_theta_iterate(grid33, cfg, f, dec=dec33)
    assert res.trace.max_rate() <= 1 + 1e-12


def test_u_and_pi_forms_agree(grid_small, rng):
    dec = Decomposition(grid_small, 1.4)
    f = rng.standard_normal(grid_small.n_interior)
    cfg = ThetaConfig(theta=0.35, gamma=0.8, k=1.4, initial="random", max_iters=25, tol=1e-300, seed=11)
    a = helmholtz_theta_iterate(grid_small, cfg, f, dec=dec, form="u")
    b = helmholtz_theta_iterate(grid_small, cfg, f, dec=dec, form="pi")
    for m in (0, 1):
        assert np.abs(a.u[m] - b.u[m]).max() <= 1e-10 * max(np.abs(a.u[m]).max(), 1.0)
    assert np.allclose(a.trace.err_pi, b.trace.err_pi, rtol=1e-8, atol=1e-14)


def test_asymmetric_split_converges(grid_small, rng):
    f = rng.standard_normal(grid_small.n_interior)
    cfg = ThetaConfig(theta=0.5, gamma=2.0, k=2.0, max_iters=20000)
    dec = Decomposition(grid_small, 2.0)
    res = helmholtz_theta_iterate(grid_small, cfg, f, dec=dec)
    assert res.trace.converged
    assert max(res.energy_relative_error(dec)) <= 1e-7


def test_initial_presets(grid33, dec33, sine33, aspec33):
    w = np.full(62, grid33.hy)
    for init in ("zero", "random", ("eigenmode", 0, 1)):
        cfg = ThetaConfig(theta=0.5, initial=init, max_iters=1, tol=1e-300)
        res = helmholtz_theta_iterate(grid33, cfg, sine33, dec=dec33, pair=aspec33.pair, aspec=aspec33)
        assert len(res.trace.err_pi) == 2
    with pytest.raises(ShapeMismatch):
        helmholtz_theta_iterate(grid33, ThetaConfig(initial=np.zeros(5)), sine33, dec=dec33)
    with pytest.raises(ValueError):
        helmholtz_theta_iterate(grid33, ThetaConfig(initial="bogus"), sine33, dec=dec33)
    assert w.size == 62


def test_strict_mode_raises(grid33, dec33, sine33):
    cfg = ThetaConfig(theta=0.5, max_iters=2, strict=True)
    with pytest.raises(MaxItersExceeded) as err:
        helmholtz_theta_iterate(grid33, cfg, sine33, dec=dec33)
    assert err.value.result.trace.iters_used == 2


def test_theta_errors(grid_small):
    with pytest.raises(InvalidGamma):
        helmholtz_theta_iterate(grid_small, ThetaConfig(gamma=0.0), None)
    with pytest.raises(ValueError):
        helmholtz_theta_iterate(grid_small, ThetaConfig(theta=1.5), None)
    k = float(np.sqrt(dirichlet_eigenvalues(grid_small)[0]))
    with pytest.raises(NearResonance):
        helmholtz_theta_iterate(grid_small, ThetaConfig(k=k), None)


# -- modal rates -------------------------------------------------------------------------

def test_modal_rate_examples():
    assert modal_rate(0.5, np.pi, 1) == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert modal_rate(0.0, 1.234, 1) == pytest.approx(1.0)
    assert modal_rate(0.0, 1.234, -1) == pytest.approx(1.0)
    assert modal_rate(0.5, 1e-9, 1) == pytest.approx(1.0, abs=1e-15)


@given(theta=st.floats(0, 1), tau=st.floats(-np.pi, np.pi), sign=st.sampled_from([1, -1]))
def test_modal_rate_closed_form(theta, tau, sign):
    r = modal_rate(theta, tau, sign)
    closed = np.sqrt(max(1 - 2 * theta * (1 - theta) * (1 - sign * np.cos(tau / 2)), 0.0))
    assert 0 <= r <= 1 + 1e-15
    assert r == pytest.approx(closed, abs=1e-12)


@pytest.mark.parametrize("sign", [1, -1])
def test_modal_probe_largest_tau(grid33, dec33, aspec33, sign):
    p = modal_rate_probe(grid33, ThetaConfig(theta=0.5), 0, sign, aspec=aspec33, dec=dec33)
    assert p.measured.size == 20
    assert p.max_relative_deviation <= 1e-6
    # the per-step factor is the modulus, not its square
    assert abs(p.measured[0] - p.predicted**2) > 1e-3


def test_modal_probe_without_reprojection(grid33, dec33, aspec33):
    p = modal_rate_probe(grid33, ThetaConfig(theta=0.5), 0, 1, aspec=aspec33, dec=dec33, reproject=False)
    assert p.max_relative_deviation <= 1e-6


def test_modal_probe_theta_zero(grid33, dec33, aspec33):
    p = modal_rate_probe(grid33, ThetaConfig(theta=0.0), 2, -1, aspec=aspec33, dec=dec33)
    assert np.abs(p.measured - 1).max() <= 1e-10


# -- reconstruction ---------------------------------------------------------------------

def test_reconstruct_zero(grid_small):
    data = build_eta(grid_small, 1.0, 1.0, None)
    u1, u2 = reconstruct_global(grid_small, 1.0, 1.0, np.zeros(2 * grid_small.n_gamma), data)
    assert np.all(u1 == 0) and np.all(u2 == 0)


def test_reconstruct_from_oracle(grid33, dec33, rng):
    f = rng.standard_normal(grid33.n_interior)
    data = build_eta(grid33, 1.0, 1.0, f, dec=dec33)
    U = dec33.monolithic(f)
    pi_u = pi_from_solution(dec33, U, f, data)
    u1, u2 = reconstruct_global(grid33, 1.0, 1.0, pi_u, data, f, dec=dec33)
    for m, (u, Um) in enumerate(zip((u1, u2), dec33.split(U)), 1):
        assert np.sqrt(dec33[m].energy(u - Um)) <= 1e-10 * np.sqrt(dec33[m].energy(Um))
    w = dec33.W
    assert weighted_norm(w, u1[dec33[1].G] - u2[dec33[2].G]) <= 1e-9
    fl = algebraic_flux(dec33[1], u1, f) + algebraic_flux(dec33[2], u2, f)
    assert weighted_norm(w, fl / w) <= 1e-9


def test_reconstruct_linear_in_perturbation(grid33, dec33, rng):
    f = rng.standard_normal(grid33.n_interior)
    data = build_eta(grid33, 1.0, 1.0, f, dec=dec33)
    U = dec33.split(dec33.monolithic(f))
    pi_u = pi_from_solution(dec33, dec33.monolithic(f), f, data)
    d = rng.standard_normal(pi_u.size) + 1j * rng.standard_normal(pi_u.size)
    errs = []
    for eps in (1e-3, 2e-3):
        u = reconstruct_global(grid33, 1.0, 1.0, pi_u + eps * d, data, f, dec=dec33)
        errs.append(np.sqrt(dec33[1].energy(u[0] - U[0])))
    assert errs[1] / errs[0] == pytest.approx(2.0, rel=1e-6)


def test_reconstruct_shape(grid_small):
    data = build_eta(grid_small, 1.0, 1.0, None)
    with pytest.raises(ShapeMismatch):
        reconstruct_global(grid_small, 1.0, 1.0, np.zeros(3), data)


# -- iteration counts -------------------------------------------------------------------

def test_iterations_to_tol_matches_loop():
    g = build_grid(GridSpec.square(8))
    pair = despres_pair(Decomposition(g, 1.0), 1.0)
    T = 0.5 * np.eye(2 * pair.n) + 0.5 * pair.A.entries
    e0 = np.random.default_rng(5).standard_normal(2 * pair.n) + 0j
    target = 1e-3 * weighted_norm(pair.ww, e0)
    e, p = e0, 0
    while weighted_norm(pair.ww, e) > target:
        e, p = T @ e, p + 1
    assert iterations_to_tol(T, e0, pair.ww, 1e-3) == p
    assert iterations_to_tol(T, e0, pair.ww, 1e-3, max_iters=p - 1) == -1
    assert iterations_to_tol(T, e0, pair.ww, 2.0) == 0


def test_refinement_sweep_small():
    rows = refinement_sweep((8, 16), tol=1e-2)
    assert rows[0].gap_from_one > rows[1].gap_from_one
    assert rows[0].cond < rows[1].cond
    assert rows[0].iterations < rows[1].iterations


def test_trace_csv(tmp_path):
    tr = IterationTrace()
    tr.record(1.0, 0.5, 0.5)
    tr.record(0.25, 0.1, 0.2)
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iteration", "err_pi", "err_u1", "err_u2", "rate"]
    assert float(rows[2][4]) == 0.25 and tr.iters_used == 1
