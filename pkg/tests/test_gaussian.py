import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from optoconvert import fock as fk
from optoconvert.core import HBAR_OVER_KB, Pulse, SteadyState, resonant_drive, solve_steady_state
from optoconvert.errors import InvalidModel, StepTooLarge, UnphysicalState
from optoconvert.gaussian import (OMEGA, DriftDiffusion, GaussianState, build_drift_diffusion,
                                  choose_step, effective_temperature, evolve_gaussian,
                                  frame_rotation, gaussian_fidelity, mean_quadrature_sum,
                                  rotation, thermal_cov)
from optoconvert.protocol import pulse_config
from optoconvert.states import coherent, squeezed, thermal

from conftest import EPS, OMEGA_M, nominal_config, toy_config


def swap_setup(cfg, eps, mode=1, phase=0.0, model="rwa"):
    drv = resonant_drive(cfg, mode, eps)
    ss = solve_steady_state(drv)
    pulse = Pulse("p", mode, "swap", drv.Delta[mode - 1], drv.E[mode - 1],
                  math.pi / (2 * eps), model, phase)
    return ss, pulse


def to_interaction(state, omega, t):
    return state.transformed(frame_rotation(omega * t))


def test_free_rotation_without_pulses():
    cfg = toy_config(omega_m=2.0)
    ss = SteadyState(b_s=(0j, 0j), q_s=0.0, effective_detuning=(0.0, 0.0))
    dd = build_drift_diffusion(cfg, ss, [], "full")
    assert np.allclose(dd.D, 0)
    assert np.allclose(dd.A, np.kron(np.eye(3), [[0, 2.0], [-2.0, 0]]))
    assert np.allclose(dd.A[:2, 2:], 0) and np.allclose(dd.A[2:4, 4:], 0)


def test_unknown_model():
    ss = SteadyState(b_s=(0j, 0j), q_s=0.0)
    with pytest.raises(InvalidModel):
        build_drift_diffusion(toy_config(), ss, [], "ideal")


def test_cavity_variance_relaxes_to_vacuum():
    k = 0.5
    cfg = toy_config(kappa=k)
    ss = SteadyState(b_s=(0j, 0j), q_s=0.0)
    start = GaussianState(np.zeros(6), np.diag([1, 1, 5, 5, 1, 1.0]))
    dd = build_drift_diffusion(cfg, ss, [], "full")
    t = 3.0
    out = evolve_gaussian(start, dd, t, choose_step(dd, t))
    assert out.cov[2, 2] == pytest.approx(1 + 4 * math.exp(-k * t), rel=1e-8)


def test_trivial_evolution_and_step_guard():
    dd = DriftDiffusion(np.zeros((6, 6)), np.zeros((6, 6)))
    s = GaussianState(np.arange(6.0), np.eye(6) * 2)
    out = evolve_gaussian(s, dd, 1.0, 0.1)
    assert np.allclose(out.mean, s.mean) and np.allclose(out.cov, s.cov)
    fast = DriftDiffusion(np.kron(np.eye(3), [[0, 10.0], [-10.0, 0]]), np.zeros((6, 6)))
    with pytest.raises(StepTooLarge):
        evolve_gaussian(s, fast, 1.0, 0.1)


def test_rwa_swap_exchanges_blocks():
    cfg = toy_config()
    ss, pulse = swap_setup(cfg, 0.05)
    dd = build_drift_diffusion(cfg, ss, [pulse], "rwa")
    mech = (np.array([0.3, -0.2]), thermal_cov(2.0))
    opt = squeezed(0.7, 0.3).moments()
    s0 = GaussianState.vacuum().with_mode(0, *mech).with_mode(1, *opt)
    # the default step leaves ~4e-8 of RK4 phase error here; halve it
    out = evolve_gaussian(s0, dd, pulse.duration, choose_step(dd, pulse.duration) / 2)
    out = to_interaction(out, cfg.omega_m, pulse.duration)
    m0, c0 = out.mode(0)
    m1, c1 = out.mode(1)
    assert np.allclose(m0, opt[0], atol=1e-8) and np.allclose(c0, opt[1], atol=1e-8)
    assert np.allclose(m1, -mech[0], atol=1e-8) and np.allclose(c1, mech[1], atol=1e-8)


def test_full_versus_rwa_is_small_for_weak_coupling():
    cfg = toy_config()
    eps = 0.01
    ss, pulse = swap_setup(cfg, eps)
    s0 = GaussianState.vacuum().with_mode(1, *coherent(1).moments())
    outs = []
    for model in ("rwa", "full"):
        dd = build_drift_diffusion(cfg, ss, [pulse], model)
        outs.append(evolve_gaussian(s0, dd, pulse.duration, choose_step(dd, pulse.duration)))
    diff = np.abs(outs[0].cov - outs[1].cov).max()
    assert 0 < diff < 5 * eps / cfg.omega_m


def test_symplectic_positivity_and_purity_along_trajectory():
    cfg = nominal_config()
    ss, pulse = swap_setup(cfg, EPS[0], model="full")
    dd = build_drift_diffusion(cfg, ss, [pulse], "full")
    s = GaussianState.thermal_mechanics(cfg.n_thermal)
    diag = {}
    out = evolve_gaussian(s, dd, pulse.duration, choose_step(dd, pulse.duration),
                          check_every=100, diagnostics=diag)
    assert diag["min_symplectic_margin"] >= -1e-9
    for m in range(3):
        assert np.linalg.det(out.mode(m)[1]) >= 1 - 1e-9


def test_step_halving_convergence():
    cfg = nominal_config()
    ss, pulse = swap_setup(cfg, EPS[0], model="full")
    dd = build_drift_diffusion(cfg, ss, [pulse], "full")
    s = GaussianState.thermal_mechanics(cfg.n_thermal).with_mode(1, *coherent(1).moments())
    dt = choose_step(dd, pulse.duration)
    a = evolve_gaussian(s, dd, pulse.duration, dt)
    b = evolve_gaussian(s, dd, pulse.duration, dt / 2)
    scale = np.abs(a.cov).max()
    assert np.abs(a.cov - b.cov).max() / scale <= 1e-6
    assert np.abs(a.mean - b.mean).max() / max(1, np.abs(a.mean).max()) <= 1e-6


def test_unphysical_state_rejected():
    with pytest.raises(UnphysicalState):
        GaussianState(np.zeros(6), 0.5 * np.eye(6)).check_physical()
    with pytest.raises(UnphysicalState):
        gaussian_fidelity((np.zeros(2), 0.5 * np.eye(2)), (np.zeros(2), np.eye(2)))


def test_fidelity_examples():
    vac = (np.zeros(2), np.eye(2))
    assert gaussian_fidelity(vac, vac) == pytest.approx(1)
    assert gaussian_fidelity(vac, coherent(1).moments()) == pytest.approx(math.exp(-1), abs=1e-12)
    assert gaussian_fidelity(vac, thermal(1).moments()) == pytest.approx(0.5, abs=1e-12)
    mu_a, mu_b = np.array([0.3, -1.0]), np.array([1.1, 0.4])
    F = gaussian_fidelity((mu_a, np.eye(2)), (mu_b, np.eye(2)))
    assert F == pytest.approx(math.exp(-np.sum((mu_a - mu_b) ** 2) / 4))


def _gauss_pair():
    mean = st.tuples(st.floats(-2, 2), st.floats(-2, 2))
    return st.tuples(mean, st.floats(0, 0.6), st.floats(0, math.pi), st.floats(0, 1.5))


def _single(m, r, th, n):
    R = rotation(th)
    cov = (2 * n + 1) * R @ np.diag([math.exp(-2 * r), math.exp(2 * r)]) @ R.T
    return np.array(m), cov


def _density(mean, cov, dim=60):
    pure, noise = fk.williamson_single(cov)
    rho = fk.ket_density(fk.pure_gaussian_ket(mean, pure, dim), 1)
    return fk.noise_channel(rho, noise, dim=dim) if np.abs(noise).max() > 0 else rho


@given(a=_gauss_pair(), b=_gauss_pair())
def test_fidelity_symmetric_and_bounded(a, b):
    sa, sb = _single(*a), _single(*b)
    f1, f2 = gaussian_fidelity(sa, sb), gaussian_fidelity(sb, sa)
    assert f1 == pytest.approx(f2, abs=1e-12)
    assert 0 <= f1 <= 1
    assert gaussian_fidelity(sa, sa) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("a,b", [
    (((0.0, 0.0), 0.0, 0.0, 0.0), ((1.0, 0.5), 0.3, 0.4, 0.0)),
    (((0.5, -0.5), 0.2, 1.0, 0.5), ((0.0, 0.3), 0.0, 0.0, 1.0)),
    (((1.0, 1.0), 0.4, 0.2, 0.3), ((0.8, 1.2), 0.3, 0.5, 0.2)),
    (((0.0, 0.0), 0.0, 0.0, 2.0), ((0.0, 0.0), 0.0, 0.0, 3.0)),
])
def test_fidelity_matches_uhlmann(a, b):
    sa, sb = _single(*a), _single(*b)
    ra, rb = _density(*sa), _density(*sb)
    d = max(ra.dim, rb.dim)
    F = fk.uhlmann_fidelity(fk.resize(ra, d), fk.resize(rb, d))
    assert gaussian_fidelity(sa, sb) == pytest.approx(F, abs=1e-3)


def test_effective_temperature_examples():
    assert effective_temperature(np.eye(2), OMEGA_M) == 0.0
    assert effective_temperature(0.5 * np.eye(2), OMEGA_M) == 0.0
    assert mean_quadrature_sum(3 * np.eye(2)) == 3
    assert effective_temperature(3 * np.eye(2), OMEGA_M) == pytest.approx(
        HBAR_OVER_KB * OMEGA_M / math.log(2), rel=1e-12)
    n = 7.3
    T = effective_temperature(thermal_cov(n), OMEGA_M)
    assert 1 / math.expm1(HBAR_OVER_KB * OMEGA_M / T) == pytest.approx(n, rel=1e-12)


def test_mechanical_damping_knob_thermalizes():
    cfg = toy_config(T=0.0, mechanical_damping=True, gamma_m=0.2)
    ss = SteadyState(b_s=(0j, 0j), q_s=0.0)
    dd = build_drift_diffusion(cfg, ss, [], "full")
    s = GaussianState.thermal_mechanics(3.0)
    out = evolve_gaussian(s, dd, 10.0, choose_step(dd, 10.0))
    assert out.cov[0, 0] == pytest.approx(1 + 6 * math.exp(-2.0), rel=1e-6)


def test_idle_mode_toggle():
    cfg = nominal_config()
    ss, pulse = swap_setup(cfg, EPS[0], model="full")
    frozen = build_drift_diffusion(cfg, ss, [pulse], "full", evolve_idle=False)
    live = build_drift_diffusion(cfg, ss, [pulse], "full")
    assert np.allclose(frozen.A[4:, 4:], 0) and np.allclose(frozen.D[4:, 4:], 0)
    assert not np.allclose(live.A[4:, 4:], 0)


def test_symplectic_form():
    S = frame_rotation(0.7)
    assert np.allclose(S @ OMEGA @ S.T, OMEGA)
