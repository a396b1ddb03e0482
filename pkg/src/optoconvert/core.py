"""System configuration, pulses and the classical steady state.

Units: every rate is an angular frequency (rad/s) with hbar = 1, and the
mechanical displacement q = (a + a^dag)/sqrt(2) is dimensionless.  Optical
modes are numbered 1 and 2; index 0 is reserved for the mechanical mode in
the engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants
from scipy.optimize import brentq

from .errors import InvalidSpec, NonConvergence, Unreachable, ZeroCoupling

HBAR_OVER_KB = constants.hbar / constants.k  # kelvin * second

SS_TOL = 1e-12
SS_MAX_ITER = 10_000
SS_CONTINUATION = 16

MODELS = ("full", "rwa", "ideal")


def _pair(x, dtype=float):
    if np.isscalar(x):
        return (dtype(x), dtype(x))
    x = tuple(dtype(v) for v in x)
    if len(x) != 2:
        raise InvalidSpec(f"expected two optical-mode entries, got {len(x)}")
    return x


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters of the mechanical mode and the two cavity modes.

    ``gamma_m`` defaults to ``omega_m / Q_m``.  Mechanical Brownian motion
    only enters the dynamics when ``mechanical_damping`` is set.
    """

    omega_m: float
    kappa: tuple = (0.0, 0.0)
    G: tuple = (0.0, 0.0)
    E: tuple = (0j, 0j)
    Delta: tuple = (0.0, 0.0)
    T: float = 0.0
    Q_m: float = math.inf
    gamma_m: float | None = None
    mechanical_damping: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kappa", _pair(self.kappa))
        object.__setattr__(self, "G", _pair(self.G))
        object.__setattr__(self, "E", _pair(self.E, complex))
        object.__setattr__(self, "Delta", _pair(self.Delta))
        if self.gamma_m is None:
            gamma = 0.0 if math.isinf(self.Q_m) else self.omega_m / self.Q_m
            object.__setattr__(self, "gamma_m", gamma)
        if not self.omega_m > 0:
            raise InvalidSpec("omega_m must be positive")
        if min(self.kappa) < 0 or self.gamma_m < 0 or self.T < 0:
            raise InvalidSpec("kappa, gamma_m and T must be non-negative")

    @property
    def hbar_omega_over_kB(self) -> float:
        """hbar * omega_m / k_B in kelvin."""
        return HBAR_OVER_KB * self.omega_m

    @property
    def n_thermal(self) -> float:
        return thermal_occupation(self.omega_m, self.T)

    def with_mode(self, mode: int, **values) -> "SystemConfig":
        """Return a copy with per-mode entries of optical ``mode`` replaced."""
        k = _mode_index(mode)
        changes = {}
        for name, v in values.items():
            entries = list(getattr(self, name))
            entries[k] = v
            changes[name] = tuple(entries)
        return replace(self, **changes)


def thermal_occupation(omega: float, T: float) -> float:
    """Bose-Einstein occupation 1/(exp(hbar w / kB T) - 1), exact."""
    if T <= 0:
        return 0.0
    x = HBAR_OVER_KB * omega / T
    if x > 700:  # exp overflows; occupation is below 1e-304
        return 0.0
    return 1.0 / math.expm1(x)


def _mode_index(mode: int) -> int:
    if mode not in (1, 2):
        raise InvalidSpec(f"optical mode must be 1 or 2, got {mode!r}")
    return mode - 1


@dataclass(frozen=True)
class Pulse:
    """One element of the pulse schedule.

    Swap pulses couple ``target_mode`` to the mechanics for ``duration``
    seconds.  Prep pulses are instantaneous state injections.  ``phase`` is
    the drive phase that sets the sign of the beam-splitter coupling; a
    phase of pi reverses the direction of the swap rotation.
    """

    label: str
    target_mode: int
    role: str
    detuning: float = 0.0
    drive_amplitude: complex = 0j
    duration: float = 0.0
    model: str = "full"
    phase: float = 0.0

    def __post_init__(self):
        _mode_index(self.target_mode)
        if self.role not in ("swap", "prep"):
            raise InvalidSpec(f"unknown pulse role {self.role!r}")
        if self.role == "swap" and not self.duration > 0:
            raise InvalidSpec(f"swap pulse {self.label} needs a positive duration")
        if self.role == "prep" and self.duration != 0:
            raise InvalidSpec(f"prep pulse {self.label} must be instantaneous")
        if self.model not in MODELS:
            raise InvalidSpec(f"unknown model {self.model!r}")


@dataclass(frozen=True)
class SteadyState:
    b_s: tuple
    q_s: float
    p_s: float = 0.0
    eps: tuple = (0.0, 0.0)
    effective_detuning: tuple = (0.0, 0.0)
    residual: float = 0.0
    iterations: int = field(default=0, compare=False)


def cavity_amplitudes(config: SystemConfig, q: float) -> np.ndarray:
    """b_is for a given mechanical displacement q (mean-field cavity response)."""
    E = np.asarray(config.E)
    kappa = np.asarray(config.kappa)
    x = np.asarray(config.Delta) + np.asarray(config.G) * q
    denom = kappa / 2 - 1j * x
    out = np.zeros(2, dtype=complex)
    for i in range(2):
        if E[i] == 0:
            continue
        if denom[i] == 0:
            raise NonConvergence("undamped cavity driven exactly on resonance")
        out[i] = -1j * E[i] / denom[i]
    return out


def displacement_from(config: SystemConfig, b: np.ndarray) -> float:
    """q_s = sum_i G_i |b_is|^2 / omega_m."""
    return float(np.sum(np.asarray(config.G) * np.abs(b) ** 2) / config.omega_m)


def steady_state_residual(config: SystemConfig, b_s, q_s) -> float:
    """Scaled residual of the self-consistency equations at (b_s, q_s)."""
    b_s = np.asarray(b_s, dtype=complex)
    rb = np.abs(cavity_amplitudes(config, q_s) - b_s).max() / max(1.0, np.abs(b_s).max())
    rq = abs(displacement_from(config, b_s) - q_s) / max(1.0, abs(q_s))
    return float(max(rb, rq))


def solve_steady_state(config: SystemConfig, tol: float = SS_TOL,
                       max_iter: int = SS_MAX_ITER,
                       continuation_steps: int = SS_CONTINUATION) -> SteadyState:
    """Self-consistent operating point, continued from zero drive.

    The drive amplitudes are ramped from 0 to their configured values in
    ``continuation_steps`` stages; at each stage a damped fixed-point
    iteration on q is warm-started from the previous stage, which keeps the
    solution on the branch connected to the undriven cavity.
    """
    if all(e == 0 for e in config.E):
        return SteadyState(b_s=(0j, 0j), q_s=0.0, eps=(0.0, 0.0),
                           effective_detuning=tuple(-d for d in config.Delta))
    q = 0.0
    total = 0
    for k in range(1, continuation_steps + 1):
        scale = k / continuation_steps
        stage = replace(config, E=tuple(scale * e for e in config.E))
        q, its = _fixed_point(stage, q, tol, max_iter)
        total += its
    b = cavity_amplitudes(config, q)
    q = displacement_from(config, b)
    b = cavity_amplitudes(config, q)
    G = np.asarray(config.G)
    return SteadyState(
        b_s=tuple(complex(v) for v in b),
        q_s=float(q),
        p_s=0.0,
        eps=tuple(float(v) for v in np.abs(G * b)),
        effective_detuning=tuple(float(v) for v in -np.asarray(config.Delta) - G * q),
        residual=steady_state_residual(config, b, q),
        iterations=total,
    )


def _fixed_point(config, q, tol, max_iter):
    damping = 0.5
    prev = math.inf
    for it in range(1, max_iter + 1):
        target = displacement_from(config, cavity_amplitudes(config, q))
        step = target - q
        err = abs(step) / max(1.0, abs(q))
        if not math.isfinite(err):
            break
        if err <= tol:
            return target, it
        if err > prev:
            damping = max(damping / 2, 1e-4)
        prev = err
        q = q + damping * step
    raise NonConvergence(
        f"steady state did not converge in {max_iter} iterations "
        "(bistable or runaway regime?)")


def calibrate_drive(config: SystemConfig, mode: int, target_eps: float) -> SystemConfig:
    """Find |E_mode| so that |G_mode b_mode,s| = target_eps at fixed detuning."""
    k = _mode_index(mode)
    if target_eps < 0:
        raise InvalidSpec("target_eps must be non-negative")
    if target_eps == 0:
        return config.with_mode(mode, E=0j)
    if config.G[k] == 0:
        raise Unreachable(f"G[{mode}] = 0: no drive produces a coupling")
    phase = config.E[k] / abs(config.E[k]) if config.E[k] != 0 else 1.0

    def mismatch(mag):
        trial = config.with_mode(mode, E=mag * phase)
        return solve_steady_state(trial).eps[k] - target_eps

    guess = target_eps / abs(config.G[k]) * abs(config.kappa[k] / 2 - 1j * config.Delta[k])
    hi = max(guess, 1e-300)
    for _ in range(200):
        if mismatch(hi) > 0:
            break
        hi *= 2
    else:
        raise NonConvergence("could not bracket the drive amplitude")
    mag = brentq(mismatch, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    out = config.with_mode(mode, E=mag * phase)
    got = solve_steady_state(out).eps[k]
    if abs(got - target_eps) > 1e-9 * target_eps:
        raise NonConvergence(f"calibration reached eps={got!r}, wanted {target_eps!r}")
    return out


def resonant_drive(config: SystemConfig, mode: int, eps: float,
                   offset: float = 0.0) -> SystemConfig:
    """Drive only optical ``mode`` so that |G b_s| = eps and the shifted
    cavity sits at -Delta - G q_s = omega_m + offset (red sideband when
    offset = 0).  The other optical drive is switched off.
    """
    k = _mode_index(mode)
    if eps < 0:
        raise InvalidSpec("eps must be non-negative")
    if eps > 0 and config.G[k] == 0:
        raise Unreachable(f"G[{mode}] = 0: no drive produces a coupling")
    other = 2 if mode == 1 else 1
    cfg = config.with_mode(other, E=0j)
    x = -(config.omega_m + offset)  # Delta + G q_s
    if eps == 0:
        return cfg.with_mode(mode, E=0j, Delta=x)
    b = eps / abs(config.G[k])
    q = config.G[k] * b**2 / config.omega_m
    E = 1j * b * (config.kappa[k] / 2 - 1j * x)
    return cfg.with_mode(mode, E=E, Delta=x - config.G[k] * q)


def swap_pulse_duration(steady: SteadyState, mode: int) -> float:
    """pi / (2 eps): the time for a complete state exchange."""
    eps = steady.eps[_mode_index(mode)]
    if eps <= 0:
        raise ZeroCoupling(f"mode {mode} has no effective coupling")
    return math.pi / (2 * eps)
