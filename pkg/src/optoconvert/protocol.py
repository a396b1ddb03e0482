"""Three-step conversion: cool (1', 1), write (2', 2), convert (3', 3).

All fidelities are evaluated in the resonant interaction frame, where every
mode rotates at omega_m.  The write pulse maps the cavity-1 state onto the
mechanics with a + sign (a -> b_1); the convert pulse is driven with phase
pi so that b_2 -> +a and the output on cavity 2 reproduces the input
without a residual sign flip.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import fock as fk
from .core import (Pulse, SystemConfig, resonant_drive, solve_steady_state,
                   swap_pulse_duration)
from .errors import InvalidSpec, OptoConvertError, ReportsPartial
from .gaussian import (GaussianState, build_drift_diffusion, choose_step, effective_temperature,
                       evolve_gaussian, frame_rotation, gaussian_fidelity, rotation)
from .states import InitialStateSpec

log = logging.getLogger(__name__)

ENGINES = ("gaussian", "fock", "hybrid")
CONVERT_PHASE = math.pi


@dataclass(frozen=True)
class ProtocolPlan:
    pulses: tuple
    engine: str
    initial_state: InitialStateSpec
    skip_cooling: bool = False
    evolve_idle: bool = True
    fock_dims: tuple | None = None
    step_scale: float = 1.0  # divides the default integrator step

    def __post_init__(self):
        if not self.step_scale >= 1:
            raise InvalidSpec("step_scale must be >= 1")
        if self.engine not in ENGINES:
            raise InvalidSpec(f"unknown engine {self.engine!r}")
        if self.engine == "gaussian" and not self.initial_state.is_gaussian:
            raise InvalidSpec(f"{self.initial_state.kind} input needs the fock or hybrid engine")
        labels = [p.label for p in self.pulses]
        expected = ["2'", "2", "3'", "3"] if self.skip_cooling else ["1'", "1", "2'", "2", "3'", "3"]
        if labels != expected:
            raise InvalidSpec(f"pulse labels {labels} do not match {expected}")
        object.__setattr__(self, "pulses", tuple(self.pulses))

    @property
    def swaps(self):
        return [p for p in self.pulses if p.role == "swap"]

    @property
    def model(self) -> str:
        return self.swaps[0].model


@dataclass(frozen=True)
class ProtocolReport:
    F: float
    F1: float
    T_eff: float
    diagnostics: tuple
    executed_plan: ProtocolPlan
    engine: str

    def __post_init__(self):
        for name in ("F", "F1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} = {v} outside [0, 1]")


@dataclass(frozen=True)
class OrderingRecord:
    ordering: str  # "F>F1", "F<F1" or "equal"
    F: float
    F1: float
    point: dict = field(default_factory=dict)


def build_plan(config: SystemConfig, eps, initial_state: InitialStateSpec, model: str = "full",
               engine: str | None = None, skip_cooling: bool = False,
               detuning_offset: float = 0.0, evolve_idle: bool = True,
               fock_dims: tuple | None = None, durations: tuple | None = None,
               step_scale: float = 1.0) -> ProtocolPlan:
    """Pulse schedule for target couplings ``eps = (eps_1, eps_2)``.

    Swap drives are tuned so that -Delta_i - G_i q_s = omega_m + detuning_offset
    with |G_i b_is| = eps_i, and each swap lasts pi / (2 eps_i) unless
    ``durations`` overrides the (cavity-1, cavity-2) pulse lengths.
    """
    if engine is None:
        engine = "gaussian" if initial_state.is_gaussian else "hybrid"
    swaps = {}
    for mode in (1, 2):
        drv = resonant_drive(config, mode, eps[mode - 1], detuning_offset)
        steady = solve_steady_state(drv)
        tau = swap_pulse_duration(steady, mode)
        if durations is not None:
            tau = durations[mode - 1]
        swaps[mode] = (drv.Delta[mode - 1], drv.E[mode - 1], tau)

    def swap(label, mode, phase):
        delta, E, tau = swaps[mode]
        return Pulse(label, mode, "swap", detuning=delta, drive_amplitude=E,
                     duration=tau, model=model, phase=phase)

    pulses = []
    if not skip_cooling:
        pulses += [Pulse("1'", 1, "prep", model=model), swap("1", 1, 0.0)]
    pulses += [Pulse("2'", 1, "prep", model=model), swap("2", 1, 0.0),
               Pulse("3'", 2, "prep", model=model), swap("3", 2, CONVERT_PHASE)]
    return ProtocolPlan(tuple(pulses), engine, initial_state, skip_cooling,
                        evolve_idle, fock_dims, step_scale)


def pulse_config(config: SystemConfig, pulse: Pulse) -> SystemConfig:
    """Config with only the pulse's cavity driven, at the pulse's drive and detuning."""
    other = 2 if pulse.target_mode == 1 else 1
    return (config.with_mode(pulse.target_mode, E=pulse.drive_amplitude, Delta=pulse.detuning)
            .with_mode(other, E=0j))


def swap_matrix(theta: float, phase: float = 0.0) -> np.ndarray:
    """Quadrature form of a -> cos a + e^{i phase} sin b, b -> cos b - e^{-i phase} sin a."""
    c, s = math.cos(theta), math.sin(theta)
    return np.block([[c * np.eye(2), s * rotation(phase)],
                     [-s * rotation(-phase), c * np.eye(2)]])


def _embed_swap(theta, phase, mode):
    S = np.eye(6)
    idx = [0, 1, 2 * mode, 2 * mode + 1]
    S[np.ix_(idx, idx)] = swap_matrix(theta, phase)
    return S


def ideal_swap_reference(state_pair, theta: float, phase: float = 0.0):
    """Closed-form beam-splitter rotation of two modes (a, b).

    Accepts a Gaussian pair ``(mean4, cov4)`` ordered (x_a, p_a, x_b, p_b)
    or a two-mode FockDensityMatrix, whose lower-numbered mode plays a.
    """
    if isinstance(state_pair, fk.FockDensityMatrix):
        spec = state_pair.spec
        if len(spec.active_modes) != 2:
            raise InvalidSpec("ideal swap needs a two-mode state")
        ma, mb = spec.active_modes
        a = fk.annihilator(spec, ma)
        b = fk.annihilator(spec, mb)
        gen = theta * (np.exp(1j * phase) * (a.conj().T @ b) - np.exp(-1j * phase) * (b.conj().T @ a))
        U = scipy.linalg.expm(gen.toarray())
        return fk.FockDensityMatrix(U @ state_pair.rho @ U.conj().T, spec)
    mean, cov = state_pair
    S = swap_matrix(theta, phase)
    return S @ np.asarray(mean, float), S @ np.asarray(cov, float) @ S.T


def compare_F_vs_F1(report: ProtocolReport, tol: float = 1e-9, point: dict | None = None) -> OrderingRecord:
    if abs(report.F - report.F1) <= tol:
        order = "equal"
    elif report.F > report.F1:
        order = "F>F1"
    else:
        order = "F<F1"
    return OrderingRecord(order, report.F, report.F1, dict(point or {}))


def run_protocol(config: SystemConfig, plan: ProtocolPlan) -> ProtocolReport:
    """Execute the plan and report F, F1 and the post-cooling temperature."""
    runner = _GaussianRun if plan.engine == "gaussian" else _FockRun
    run = runner(config, plan)
    try:
        run.execute()
    except OptoConvertError as exc:
        raise ReportsPartial(f"protocol failed during pulse {run.current}: {exc}",
                             diagnostics=list(run.diagnostics), cause=exc) from exc
    return ProtocolReport(F=run.F, F1=run.F1, T_eff=run.T_eff,
                          diagnostics=tuple(run.diagnostics), executed_plan=plan,
                          engine=plan.engine)


def _scaled(dt, duration, scale):
    if scale == 1:
        return dt
    n = round(duration / dt * scale)
    return duration / n


class _Run:
    def __init__(self, config, plan):
        self.config = config
        self.plan = plan
        self.t = 0.0
        self.diagnostics = []
        self.current = None
        self.F = self.F1 = self.T_eff = None
        self.target_mean, self.target_cov = (None, None)

    def steady_for(self, pulse):
        return solve_steady_state(pulse_config(self.config, pulse))


class _GaussianRun(_Run):
    """Moment propagation; the state is stored in the interaction frame."""

    def __init__(self, config, plan):
        super().__init__(config, plan)
        self.state = GaussianState.thermal_mechanics(config.n_thermal)
        if plan.skip_cooling:
            self.T_eff = effective_temperature(self.state.mode(0)[1], config.omega_m)

    def execute(self):
        psi = self.plan.initial_state
        for pulse in self.plan.pulses:
            self.current = pulse.label
            if pulse.role == "prep":
                if pulse.label == "2'":
                    mean, cov = psi.moments()
                    self.state = self.state.with_mode(1, mean, cov)
                else:
                    self.state = self.state.with_mode(pulse.target_mode, np.zeros(2), np.eye(2))
                continue
            self.swap(pulse)
            self.after_swap(pulse)

    def swap(self, pulse):
        diag = {"pulse": pulse.label, "engine": "gaussian", "t0": self.t, "duration": pulse.duration}
        if pulse.model == "ideal":
            steady = self.steady_for(pulse)
            theta = steady.eps[pulse.target_mode - 1] * pulse.duration
            self.state = self.state.transformed(_embed_swap(theta, pulse.phase, pulse.target_mode))
            diag["min_symplectic_margin"] = self.state.check_physical()
        else:
            steady = self.steady_for(pulse)
            dd = build_drift_diffusion(self.config, steady, [pulse], pulse.model,
                                       evolve_idle=self.plan.evolve_idle)
            dt = _scaled(choose_step(dd, pulse.duration), pulse.duration, self.plan.step_scale)
            wm = self.config.omega_m
            lab = self.state.transformed(frame_rotation(-wm * self.t))
            lab = evolve_gaussian(lab, dd, pulse.duration, dt, check_every=200, diagnostics=diag)
            self.state = lab.transformed(frame_rotation(wm * (self.t + pulse.duration)))
            diag["dt"] = dt
        self.t += pulse.duration
        self.diagnostics.append(diag)

    def after_swap(self, pulse):
        psi = self.plan.initial_state.moments()
        if pulse.label == "1":
            self.T_eff = effective_temperature(self.state.mode(0)[1], self.config.omega_m)
        elif pulse.label == "2":
            self.F1 = gaussian_fidelity(self.state.mode(0), psi)
        elif pulse.label == "3":
            self.F = gaussian_fidelity(self.state.mode(2), psi)


class _FockRun(_Run):
    """Master-equation run of the pure branch plus propagated classical noise.

    The mechanics starts as a Gaussian mixture of displaced copies of a pure
    state (Williamson split of its covariance).  Only the pure branch is
    evolved in Fock space; the mixture is restored on each reduced output by
    an additive-noise channel whose covariance is the initial mixing noise
    pushed through the mean map.  The hybrid engine takes the mechanical
    covariance from a Gaussian cooling step; the fock engine starts from the
    bath state.
    """

    def __init__(self, config, plan):
        super().__init__(config, plan)
        self.psi = plan.initial_state
        self.d_psi = auto_input_dim(self.psi) if plan.fock_dims is None else plan.fock_dims[1]
        self.mean_map = np.eye(6)
        self.noise0 = np.zeros((6, 6))
        self.branch = None

    # -- setup --
    def _mechanics_from(self, mean, cov, dim=None):
        pure, P = fk.williamson_single(cov)
        self.noise0 = np.zeros((6, 6))
        self.noise0[:2, :2] = P
        self.mean_map = np.eye(6)
        if dim is None:
            dim = 6
            while True:
                ket = fk.pure_gaussian_ket(mean, pure, dim)
                if np.sum(np.abs(ket[-2:]) ** 2) < 1e-9 and np.linalg.norm(ket) ** 2 > 1 - 1e-9:
                    break
                dim += 2
        ket = fk.pure_gaussian_ket(mean, pure, dim)
        return fk.ket_density(ket, 0)

    def execute(self):
        pulses = list(self.plan.pulses)
        if self.plan.engine == "hybrid" and not self.plan.skip_cooling:
            gauss_plan = ProtocolPlan(self.plan.pulses, "gaussian", InitialStateSpec("vacuum"),
                                      False, self.plan.evolve_idle,
                                      step_scale=self.plan.step_scale)
            g = _GaussianRun(self.config, gauss_plan)
            for pulse in pulses[:2]:
                self.current = pulse.label
                if pulse.role == "swap":
                    g.swap(pulse)
            g.diagnostics[-1]["engine"] = "gaussian"
            self.diagnostics.extend(g.diagnostics)
            self.t = g.t
            self.T_eff = effective_temperature(g.state.mode(0)[1], self.config.omega_m)
            mech = self._mechanics_from(*g.state.mode(0), dim=self._mech_dim())
            pulses = pulses[2:]
        else:
            n = self.config.n_thermal
            mean, cov = np.zeros(2), (2 * n + 1) * np.eye(2)
            if self.plan.skip_cooling:
                self.T_eff = effective_temperature(cov, self.config.omega_m)
            mech = self._mechanics_from(mean, cov, dim=self._mech_dim())
        d1 = self.plan.fock_dims[1] if self.plan.fock_dims else 6
        self.branch = fk.tensor(mech, fk.prepare_state(InitialStateSpec("vacuum"), d1, mode=1))

        for pulse in pulses:
            self.current = pulse.label
            if pulse.role == "prep":
                self.prep(pulse)
            else:
                self.swap(pulse)
                self.after_swap(pulse)

    def _mech_dim(self):
        if self.plan.fock_dims is not None:
            return self.plan.fock_dims[0]
        return None

    # -- steps --
    def prep(self, pulse):
        mode = pulse.target_mode
        if pulse.label == "2'":
            new = fk.prepare_state(self.psi, self.d_psi, mode=1)
        else:
            d = self.plan.fock_dims[mode] if self.plan.fock_dims else self.d_psi
            new = fk.prepare_state(InitialStateSpec("vacuum"), d, mode=mode)
        mech = fk.partial_trace(self.branch, 0)
        if pulse.label != "1'":
            want = self.plan.fock_dims[0] if self.plan.fock_dims else max(mech.dim, self.d_psi)
            mech = fk.resize(mech, want)
        self.branch = fk.tensor(mech, new)
        s = slice(2 * mode, 2 * mode + 2)
        self.mean_map[s, :] = 0.0

    def swap(self, pulse):
        diag = {"pulse": pulse.label, "engine": "fock", "t0": self.t, "duration": pulse.duration}
        steady = self.steady_for(pulse)
        if pulse.model == "ideal":
            theta = steady.eps[pulse.target_mode - 1] * pulse.duration
            self.branch = ideal_swap_reference(self.branch, theta, pulse.phase)
            M = _embed_swap(theta, pulse.phase, pulse.target_mode)
        else:
            gen = fk.build_lindblad_generator(self.config, steady, [pulse], self.branch.spec,
                                              pulse.model, frame="interaction",
                                              evolve_idle=self.plan.evolve_idle)
            dt = _scaled(fk.default_step(gen, pulse.duration), pulse.duration,
                         self.plan.step_scale)
            self.branch = fk.evolve_density(self.branch, gen, pulse.duration, dt,
                                            t0=self.t, diagnostics=diag)
            M = fk.mean_propagator(gen, pulse.duration, dt, t0=self.t)
            diag["dt"] = dt
        self.mean_map = M @ self.mean_map
        diag["min_eigenvalue"] = self.branch.check()
        diag["tail"] = self.branch.check_tail(where=f"after pulse {pulse.label}")
        self.t += pulse.duration
        self.diagnostics.append(diag)

    def noise_on(self, mode):
        s = slice(2 * mode, 2 * mode + 2)
        full = self.mean_map @ self.noise0 @ self.mean_map.T
        return full[s, s]

    def reduced_with_noise(self, mode):
        red = fk.partial_trace(self.branch, mode)
        return fk.noise_channel(red, self.noise_on(mode))

    def fidelity_to_input(self, mode):
        if self.psi.kind == "thermal":
            out = self.reduced_with_noise(mode)
            ref = fk.prepare_state(self.psi, out.dim, mode=mode)
            return fk.uhlmann_fidelity(ref, out)
        # pure reference: average the overlap over the noise instead of
        # representing the noisy state in a wide truncation
        red = fk.partial_trace(self.branch, mode)
        ket = fk.state_ket(self.psi, self.d_psi)
        return fk.noisy_pure_overlap(red, self.noise_on(mode), ket / np.linalg.norm(ket))

    def after_swap(self, pulse):
        if pulse.label == "1":
            _, cov = fk.quadrature_moments(fk.partial_trace(self.branch, 0))
            self.T_eff = effective_temperature(cov + self.noise_on(0), self.config.omega_m)
        elif pulse.label == "2":
            self.F1 = self.fidelity_to_input(0)
        elif pulse.label == "3":
            self.F = self.fidelity_to_input(2)


def auto_input_dim(psi: InitialStateSpec) -> int:
    return fk.auto_dim(psi)
