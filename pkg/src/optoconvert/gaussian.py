"""First and second moments of the three-mode linearized system.

Phase-space ordering is (x_m, p_m, x_1, p_1, x_2, p_2) with x = a + a^dag
and p = -i (a - a^dag) for every mode, so [x, p] = 2i and the vacuum
covariance is the identity.  The mechanical pair (x_m, p_m) is sqrt(2)
times the shifted displacement and momentum (dq, dp).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import SystemConfig, SteadyState, HBAR_OVER_KB, thermal_occupation
from .errors import InvalidModel, StepTooLarge, UnphysicalState

log = logging.getLogger(__name__)

N_MODES = 3
SYMPLECTIC_TOL = 1e-9
MAX_STEP_RADIUS = 0.1

OMEGA = np.kron(np.eye(N_MODES), np.array([[0.0, 1.0], [-1.0, 0.0]]))
_LADDER_TO_QUAD = np.kron(np.eye(N_MODES), np.array([[1, 1], [-1j, 1j]]))
_QUAD_TO_LADDER = np.linalg.inv(_LADDER_TO_QUAD)


def _block(mode):
    return slice(2 * mode, 2 * mode + 2)


@dataclass(frozen=True, eq=False)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (6,) or cov.shape != (6, 6):
            raise ValueError("GaussianState expects a 6-vector and a 6x6 matrix")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2)

    @classmethod
    def vacuum(cls):
        return cls(np.zeros(6), np.eye(6))

    @classmethod
    def thermal_mechanics(cls, n_bar: float):
        """Mechanics at occupation n_bar, both cavities in vacuum."""
        cov = np.eye(6)
        cov[:2, :2] *= 2 * n_bar + 1
        return cls(np.zeros(6), cov)

    def mode(self, mode: int):
        """Reduced (mean, cov) of mode 0 (mechanics), 1 or 2."""
        s = _block(mode)
        return self.mean[s].copy(), self.cov[s, s].copy()

    def with_mode(self, mode: int, mean, cov) -> "GaussianState":
        """Replace one mode by an uncorrelated state (ideal state injection)."""
        s = _block(mode)
        m = self.mean.copy()
        c = self.cov.copy()
        m[s] = mean
        c[s, :] = 0.0
        c[:, s] = 0.0
        c[s, s] = cov
        return GaussianState(m, c)

    def symplectic_margin(self) -> float:
        """Smallest eigenvalue of cov + i Omega (>= 0 for physical states)."""
        return float(np.linalg.eigvalsh(self.cov + 1j * OMEGA).min())

    def check_physical(self, tol: float = SYMPLECTIC_TOL):
        margin = self.symplectic_margin()
        if margin < -tol:
            raise UnphysicalState(f"cov + i Omega has eigenvalue {margin:.3e}")
        return margin

    def transformed(self, S: np.ndarray) -> "GaussianState":
        return GaussianState(S @ self.mean, S @ self.cov @ S.T)


@dataclass(frozen=True, eq=False)
class DriftDiffusion:
    A: np.ndarray
    D: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return float(np.abs(np.linalg.eigvals(self.A)).max())


def rotation(theta: float) -> np.ndarray:
    """Quadrature map for a -> a e^{i theta}."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def frame_rotation(theta: float) -> np.ndarray:
    """All three modes rotated by the same phase (6x6)."""
    return np.kron(np.eye(N_MODES), rotation(theta))


def build_drift_diffusion(config: SystemConfig, steady: SteadyState, active_pulses,
                          model: str = "full", evolve_idle: bool = True) -> DriftDiffusion:
    """Drift and diffusion of the linearized Langevin equations.

    Frame: rotating with each cavity drive, so a driven cavity turns at
    -Delta_i - G_i q_s.  Undriven cavities turn at omega_m, which keeps them
    static in the resonant interaction frame; with ``evolve_idle=False`` they
    are frozen entirely (no rotation, no loss).  The linearized coupling of
    a driven mode is i eps (e^{i phi} db - e^{-i phi} db^dag)(a + a^dag), whose
    co-rotating part is the beam splitter i eps (e^{i phi} a^dag db - h.c.);
    the rwa model keeps only that part.
    """
    if model not in ("full", "rwa"):
        raise InvalidModel(f"Gaussian drift has no model {model!r}")
    M = np.zeros((6, 6), dtype=complex)  # d/dt (a, a+, b1, b1+, b2, b2+)
    D = np.zeros(6)
    wm = config.omega_m
    M[0, 0] = -1j * wm
    if config.mechanical_damping and config.gamma_m > 0:
        M[0, 0] -= config.gamma_m / 2
        D[0:2] = config.gamma_m * (2 * thermal_occupation(wm, config.T) + 1)

    driven = {}
    for p in active_pulses:
        driven[p.target_mode] = p
    for mode in (1, 2):
        k = 2 * mode
        kappa = config.kappa[mode - 1]
        if mode in driven:
            M[k, k] = -1j * steady.effective_detuning[mode - 1] - kappa / 2
            D[k:k + 2] = kappa
        elif evolve_idle:
            M[k, k] = -1j * wm - kappa / 2
            D[k:k + 2] = kappa
    for mode, p in driven.items():
        k = 2 * mode
        eps = steady.eps[mode - 1]
        e = np.exp(1j * p.phase)
        M[0, k] += eps * e
        M[k, 0] += -eps * np.conj(e)
        if model == "full":
            M[0, k + 1] += -eps * np.conj(e)
            M[k, 1] += -eps * np.conj(e)
    swap = [1, 0, 3, 2, 5, 4]
    for r in (0, 2, 4):
        M[r + 1] = np.conj(M[r][swap])
    A = _LADDER_TO_QUAD @ M @ _QUAD_TO_LADDER
    if np.abs(A.imag).max() > 1e-9 * max(1.0, np.abs(A).max()):
        raise AssertionError("drift matrix is not real")
    return DriftDiffusion(A.real.copy(), np.diag(D))


def choose_step(dd: DriftDiffusion, duration: float) -> float:
    """min(0.01 / rho(A), duration / 1000), shrunk to divide duration evenly."""
    rho = dd.spectral_radius
    h = duration / 1000
    if rho > 0:
        h = min(h, 0.01 / rho)
    n = max(1, math.ceil(duration / h - 1e-9))
    return duration / n


def _rk4_poly(X, order=4):
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for k in range(1, order + 1):
        term = term @ X / k
        out = out + term
    return out


def evolve_gaussian(state: GaussianState, dd: DriftDiffusion, t: float, dt: float,
                    check_every: int = 0, diagnostics: dict | None = None) -> GaussianState:
    """Fixed-step RK4 for d(mean)/dt = A mean and dC/dt = A C + C A^T + D.

    The RK4 update of a linear time-invariant system is an affine map, so it
    is assembled once and iterated.  ``check_every`` > 0 adds a symplectic
    positivity check every that many steps (the final state is always checked).
    """
    if t == 0:
        return state
    if not (dt > 0 and t > 0 and dt <= t * (1 + 1e-12)):
        raise ValueError("need 0 < dt <= t")
    radius = dd.spectral_radius
    if dt * radius > MAX_STEP_RADIUS:
        raise StepTooLarge(f"dt * rho(A) = {dt * radius:.3g} > {MAX_STEP_RADIUS}")
    n = max(1, round(t / dt))
    if abs(n * dt - t) > 1e-9 * t:
        n = math.ceil(t / dt)
    h = t / n

    A = dd.A
    eye = np.eye(6)
    step_mean = _rk4_poly(h * A)
    L = np.kron(A, eye) + np.kron(eye, A)
    hL = h * L
    step_cov = _rk4_poly(hL)
    # h * (I + hL/2 + (hL)^2/6 + (hL)^3/24) applied to vec(D)
    inc = np.eye(36)
    acc = np.eye(36)
    for k in range(2, 5):
        inc = inc @ hL / k
        acc = acc + inc
    forcing = h * acc @ dd.D.reshape(-1)

    m = state.mean.copy()
    v = state.cov.reshape(-1).copy()
    worst = math.inf
    for i in range(1, n + 1):
        m = step_mean @ m
        v = step_cov @ v + forcing
        if check_every and i % check_every == 0 and i != n:
            worst = min(worst, GaussianState(m, v.reshape(6, 6)).check_physical())
    out = GaussianState(m, v.reshape(6, 6))
    worst = min(worst, out.check_physical())
    if diagnostics is not None:
        diagnostics["steps"] = diagnostics.get("steps", 0) + n
        diagnostics["min_symplectic_margin"] = min(
            diagnostics.get("min_symplectic_margin", math.inf), worst)
    return out


def check_single_mode(mean, cov, tol: float = SYMPLECTIC_TOL):
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or np.asarray(mean).shape != (2,):
        raise ValueError("single-mode state needs a 2-vector and a 2x2 matrix")
    if cov[0, 0] <= 0 or np.linalg.det(cov) < 1 - tol:
        raise UnphysicalState(f"det(cov) = {np.linalg.det(cov):.6g} < 1")


def gaussian_fidelity(a, b) -> float:
    """Uhlmann fidelity of two single-mode Gaussian states given as (mean, cov).

    F = 2 / (sqrt(Delta + delta) - sqrt(delta)) * exp(-dmu^T (A+B)^-1 dmu / 2),
    Delta = det(A+B), delta = (det A - 1)(det B - 1), vacuum covariance = 1.
    """
    mu_a, A = np.asarray(a[0], float), np.asarray(a[1], float)
    mu_b, B = np.asarray(b[0], float), np.asarray(b[1], float)
    check_single_mode(mu_a, A)
    check_single_mode(mu_b, B)
    S = A + B
    big = np.linalg.det(S)
    small = max((np.linalg.det(A) - 1) * (np.linalg.det(B) - 1), 0.0)
    d = mu_a - mu_b
    expo = -0.5 * d @ np.linalg.solve(S, d)
    F = 2.0 / (math.sqrt(big + small) - math.sqrt(small)) * math.exp(expo)
    return float(min(max(F, 0.0), 1.0))


def mean_quadrature_sum(mech_cov) -> float:
    """<dq^2 + dp^2> with q = (a + a^dag)/sqrt(2): half the trace in this convention."""
    return float(np.trace(np.asarray(mech_cov))) / 2


def effective_temperature(mech_cov, omega_m: float) -> float:
    """Temperature whose thermal occupation reproduces the mechanical variance."""
    s = mean_quadrature_sum(mech_cov)
    if s <= 1:
        return 0.0
    n = (s - 1) / 2
    return HBAR_OVER_KB * omega_m / math.log1p(1 / n)


def thermal_cov(n_bar: float) -> np.ndarray:
    return (2 * n_bar + 1) * np.eye(2)
