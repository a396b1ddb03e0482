"""Truncated Fock-space master-equation engine.

Density matrices live on the tensor product of the modes listed in
``HilbertSpec.active_modes`` (0 = mechanics, 1 and 2 = cavities), in that
order.  The generator is never materialized as a dim^4 superoperator: it is
applied matrix-wise from sparse mode operators.

Linear dynamics are covariant under displacements, so a mechanical state
that is a Gaussian mixture of displaced pure states can be evolved as its
pure part plus a classical noise covariance carried by the mean map.  The
protocol uses this to keep the hot mechanical bath out of the Hilbert space.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply
from scipy.special import eval_genlaguerre, gammaln

from .core import SystemConfig, SteadyState, thermal_occupation
from .errors import (DimensionMismatch, InvalidModel, InvalidSpec, PositivityLoss,
                     StepTooLarge, TruncationTooSmall)
from .states import InitialStateSpec, coherent_ket, squeezed_vacuum_ket

log = logging.getLogger(__name__)

DEFAULT_DIMS = (30, 20, 20)
TAIL_TOL = 1e-6
MAX_GENERATOR_STEP = 0.1
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
EIG_TOL = 1e-8
POSITIVITY_ABORT = 1e-6


@dataclass(frozen=True)
class HilbertSpec:
    dims: tuple = DEFAULT_DIMS
    active_modes: tuple = (0, 1)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise InvalidSpec("dims must list three truncations >= 2")
        modes = tuple(self.active_modes)
        if not modes or len(set(modes)) != len(modes) or not set(modes) <= {0, 1, 2}:
            raise InvalidSpec(f"bad active_modes {modes!r}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "active_modes", tuple(sorted(modes)))

    @property
    def factor_dims(self) -> tuple:
        return tuple(self.dims[m] for m in self.active_modes)

    @property
    def size(self) -> int:
        return int(np.prod(self.factor_dims))

    def position(self, mode: int) -> int:
        if mode not in self.active_modes:
            raise InvalidSpec(f"mode {mode} is not active in {self.active_modes}")
        return self.active_modes.index(mode)

    def resized(self, mode: int, dim: int) -> "HilbertSpec":
        dims = list(self.dims)
        dims[mode] = dim
        return HilbertSpec(tuple(dims), self.active_modes)


def same_space(a: HilbertSpec, b: HilbertSpec) -> bool:
    return a.active_modes == b.active_modes and a.factor_dims == b.factor_dims


def single_mode_spec(dim: int, mode: int = 1) -> HilbertSpec:
    dims = [dim, dim, dim]
    return HilbertSpec(tuple(dims), (mode,))


@dataclass(frozen=True, eq=False)
class FockDensityMatrix:
    rho: np.ndarray
    spec: HilbertSpec

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        n = self.spec.size
        if rho.shape != (n, n):
            raise DimensionMismatch(f"rho has shape {rho.shape}, spec needs {(n, n)}")
        object.__setattr__(self, "rho", rho)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.rho + self.rho.conj().T) / 2).min())

    def check(self, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL, eig_tol=EIG_TOL) -> float:
        """Raise if the matrix is not a valid state; returns the min eigenvalue."""
        herm = np.abs(self.rho - self.rho.conj().T).max()
        if herm > hermitian_tol:
            raise PositivityLoss(f"rho not Hermitian (deviation {herm:.2e})")
        tr = self.trace()
        if abs(tr - 1) > trace_tol:
            raise PositivityLoss(f"trace {tr:.12f} != 1")
        lo = self.min_eigenvalue()
        if lo < -eig_tol:
            raise PositivityLoss(f"negative eigenvalue {lo:.3e}")
        return lo

    def populations(self, mode: int) -> np.ndarray:
        return np.real(np.diag(partial_trace(self, mode).rho))

    def tail(self) -> float:
        """Largest top-two-level population over all factors."""
        return max(float(self.populations(m)[-2:].sum()) for m in self.spec.active_modes)

    def check_tail(self, tol=TAIL_TOL, where=""):
        t = self.tail()
        if t >= tol:
            raise TruncationTooSmall(
                f"top-two Fock populations {t:.2e} >= {tol:g}{' at ' + where if where else ''}")
        return t


# --- operators -------------------------------------------------------------

@lru_cache(maxsize=64)
def ladder(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim)), 1, shape=(dim, dim), format="csr", dtype=complex)


@lru_cache(maxsize=256)
def _mode_op(factor_dims: tuple, pos: int) -> sp.csr_matrix:
    out = None
    for k, d in enumerate(factor_dims):
        f = ladder(d) if k == pos else sp.identity(d, dtype=complex, format="csr")
        out = f if out is None else sp.kron(out, f, format="csr")
    return out


def annihilator(spec: HilbertSpec, mode: int) -> sp.csr_matrix:
    return _mode_op(spec.factor_dims, spec.position(mode))


# --- generator -------------------------------------------------------------

@dataclass(frozen=True)
class QuadTerm:
    """One quadratic Hamiltonian term with coefficient w e^{-i nu t}.

    kind 'n':    w c_i^dag c_i                (w real, nu = 0)
    kind 'hop':  w c_i^dag c_j + h.c.
    kind 'pair': w c_i c_j + h.c.
    """

    kind: str
    i: int
    j: int
    w: complex
    nu: float = 0.0

    def coefficient(self, t: float) -> complex:
        return self.w if self.nu == 0 else self.w * np.exp(-1j * self.nu * t)


@dataclass(frozen=True)
class Dissipator:
    rate: float
    mode: int
    raising: bool = False


class LindbladGenerator:
    """d rho/dt = -i[H(t), rho] + sum_k r_k (L rho L^dag - {L^dag L, rho}/2)."""

    def __init__(self, spec: HilbertSpec, terms, dissipators):
        self.spec = spec
        self.terms = tuple(terms)
        self.dissipators = tuple(d for d in dissipators if d.rate > 0)
        size = spec.size
        static = sp.csr_matrix((size, size), dtype=complex)
        self._dynamic = []
        h_bound = 0.0
        d_bound = 0.0
        self.max_frequency = 0.0
        for term in self.terms:
            ci = annihilator(spec, term.i)
            cj = annihilator(spec, term.j)
            if term.kind == "n":
                op = (ci.conj().T @ ci) * float(np.real(term.w))
                static = static + op
                h_bound += _inf_norm(op)
                continue
            if term.kind == "hop":
                X = ci.conj().T @ cj
            elif term.kind == "pair":
                X = ci @ cj
            else:
                raise InvalidModel(f"unknown term kind {term.kind!r}")
            X = X.tocsr()
            Xd = X.conj().T.tocsr()
            h_bound += abs(term.w) * _inf_norm(X + Xd)
            if term.nu == 0:
                static = static + term.w * X + np.conj(term.w) * Xd
            else:
                self._dynamic.append((term, X, Xd))
                self.max_frequency = max(self.max_frequency, abs(term.nu))
        self._static = static.tocsr()
        self._diss = []
        damping = sp.csr_matrix((size, size), dtype=complex)
        for d in self.dissipators:
            L = annihilator(spec, d.mode)
            if d.raising:
                L = L.conj().T
            L = L.tocsr()
            LdL = (L.conj().T @ L).tocsr()
            damping = damping + 0.5 * d.rate * LdL
            self._diss.append(math.sqrt(d.rate) * L)
            d_bound += 2 * d.rate * _inf_norm(LdL)
        # ||L|| <= 2 ||H|| + sum_k r_k (||L_k||^2 + ||L_k^dag L_k||)
        self.norm_bound = 2 * h_bound + d_bound

        # K(t) = -i H(t) - sum_k (r_k / 2) L_k^dag L_k on one fixed sparsity
        # pattern, so each call only rescales the data array.
        parts = [-1j * self._static - damping]
        for _, X, Xd in self._dynamic:
            parts += [X, Xd]
        union = sum((abs(p) for p in parts), sp.csr_matrix((size, size))).tocsr()
        union.sort_indices()
        rows = np.repeat(np.arange(size), np.diff(union.indptr))
        cols = union.indices
        keys = rows.astype(np.int64) * size + cols

        def aligned(M):
            M = M.tocoo()
            out = np.zeros(len(keys), dtype=complex)
            np.add.at(out, np.searchsorted(keys, M.row.astype(np.int64) * size + M.col), M.data)
            return out

        self._K = sp.csr_matrix((aligned(parts[0]), cols.copy(), union.indptr.copy()),
                                shape=(size, size))
        self._K_static = self._K.data.copy()
        self._K_dynamic = [(term, -1j * aligned(X), -1j * aligned(Xd))
                           for term, X, Xd in self._dynamic]

    def hamiltonian(self, t: float) -> sp.csr_matrix:
        H = self._static
        for term, X, Xd in self._dynamic:
            c = term.coefficient(t)
            H = H + c * X + np.conj(c) * Xd
        return H

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        """Apply the generator to a Hermitian rho.

        Written as C + C^dag + sum_k L_k rho L_k^dag with C = K(t) rho,
        where the rates are folded into K and into the stored L_k.
        """
        data = self._K.data
        data[:] = self._K_static
        for term, x, xd in self._K_dynamic:
            c = term.coefficient(t)
            data += c * x + np.conj(c) * xd
        C = self._K @ rho
        buf = np.empty_like(C)
        np.conjugate(C.T, out=buf)
        C += buf
        for L in self._diss:
            np.conjugate((L @ rho).T, out=buf)
            C += L @ buf
        return C

    def mean_matrices(self, t: float):
        """(K, Kc) with d alpha/dt = K alpha + Kc conj(alpha) for the active modes."""
        modes = self.spec.active_modes
        idx = {m: k for k, m in enumerate(modes)}
        n = len(modes)
        K = np.zeros((n, n), dtype=complex)
        Kc = np.zeros((n, n), dtype=complex)
        for term in self.terms:
            i, j = idx[term.i], idx[term.j]
            w = term.coefficient(t)
            if term.kind == "n":
                K[i, i] += -1j * np.real(w)
            elif term.kind == "hop":
                K[i, j] += -1j * w
                K[j, i] += -1j * np.conj(w)
            else:
                Kc[i, j] += -1j * np.conj(w)
                Kc[j, i] += -1j * np.conj(w)
        for d in self.dissipators:
            k = idx[d.mode]
            K[k, k] += (d.rate if d.raising else -d.rate) / 2
        return K, Kc


def _inf_norm(M) -> float:
    if M.nnz == 0:
        return 0.0
    return float(np.abs(M).sum(axis=1).max())


def build_lindblad_generator(config: SystemConfig, steady: SteadyState, active_pulses,
                             spec: HilbertSpec, model: str = "full",
                             frame: str = "interaction",
                             evolve_idle: bool = True) -> LindbladGenerator:
    """Shifted-frame generator for the driven cavity (or cavities) in spec.

    ``frame='lab'`` is the frame rotating with the drives (mechanics at
    omega_m, driven cavity at -Delta - G q_s).  ``frame='interaction'``
    additionally removes omega_m from every mode; the counter-rotating
    coupling then oscillates at 2 omega_m.  Undriven cavities are static in
    the interaction frame and only decay.
    """
    if model not in ("full", "rwa"):
        raise InvalidModel(f"Lindblad generator has no model {model!r}")
    if frame not in ("interaction", "lab"):
        raise InvalidSpec(f"unknown frame {frame!r}")
    wm = config.omega_m
    inter = frame == "interaction"
    terms = []
    diss = []
    driven = {p.target_mode: p for p in active_pulses}
    for mode in driven:
        if mode not in spec.active_modes or 0 not in spec.active_modes:
            raise InvalidSpec(f"pulse on mode {mode} needs modes 0 and {mode} active")
    if 0 in spec.active_modes:
        if not inter:
            terms.append(QuadTerm("n", 0, 0, wm))
        if config.mechanical_damping and config.gamma_m > 0:
            nth = thermal_occupation(wm, config.T)
            diss.append(Dissipator(config.gamma_m * (nth + 1), 0))
            diss.append(Dissipator(config.gamma_m * nth, 0, raising=True))
    for mode in (1, 2):
        if mode not in spec.active_modes:
            continue
        if mode in driven:
            w = steady.effective_detuning[mode - 1] - (wm if inter else 0.0)
            if w != 0:
                terms.append(QuadTerm("n", mode, mode, w))
        elif evolve_idle and not inter:
            terms.append(QuadTerm("n", mode, mode, wm))
        if mode in driven or evolve_idle:
            diss.append(Dissipator(config.kappa[mode - 1], mode))
    for mode, p in driven.items():
        w = 1j * steady.eps[mode - 1] * np.exp(1j * p.phase)
        terms.append(QuadTerm("hop", 0, mode, w))
        if model == "full":
            terms.append(QuadTerm("pair", 0, mode, w, 2 * wm if inter else 0.0))
    return LindbladGenerator(spec, terms, diss)


def default_step(gen: LindbladGenerator, duration: float) -> float:
    """Largest step dividing ``duration`` with dt*||L|| <= 0.1 and dt*nu <= 0.1."""
    rate = max(gen.norm_bound, gen.max_frequency, 1e-300)
    n = max(1, math.ceil(duration * rate / MAX_GENERATOR_STEP - 1e-9))
    return duration / n


_MALLOC_TUNED = False


def _retain_freed_memory():
    """Stop glibc from returning each freed density-sized buffer to the OS.

    Every RK4 stage allocates a few arrays of rho's size; with the default
    mmap threshold each of them is a fresh mapping and page-faults on first
    touch, which roughly doubles the cost of a step.  No-op off glibc.
    """
    global _MALLOC_TUNED
    if _MALLOC_TUNED:
        return
    _MALLOC_TUNED = True
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        m_trim_threshold, m_mmap_threshold = -1, -3
        libc.mallopt(m_mmap_threshold, 1 << 30)
        libc.mallopt(m_trim_threshold, 1 << 30)
    except (OSError, AttributeError):
        pass


def evolve_density(rho: FockDensityMatrix, gen: LindbladGenerator, t: float, dt: float,
                   t0: float = 0.0, diagnostics: dict | None = None) -> FockDensityMatrix:
    """Fixed-step RK4 from absolute time t0 to t0 + t.

    The state is re-Hermitized every step and trace-renormalized at the end;
    the size of that correction is logged and recorded in ``diagnostics``.
    """
    if not same_space(rho.spec, gen.spec):
        raise DimensionMismatch("state and generator live on different spaces")
    if t == 0:
        return rho
    if not (dt > 0 and t > 0 and dt <= t * (1 + 1e-12)):
        raise ValueError("need 0 < dt <= t")
    if dt * gen.norm_bound > MAX_GENERATOR_STEP * (1 + 1e-9):
        raise StepTooLarge(f"dt * ||L|| = {dt * gen.norm_bound:.3g} > {MAX_GENERATOR_STEP}")
    n = max(1, round(t / dt))
    if abs(n * dt - t) > 1e-9 * t:
        n = math.ceil(t / dt)
    h = t / n
    _retain_freed_memory()
    r = rho.rho.copy()
    tr0 = np.trace(r).real
    acc = np.empty_like(r)
    stage = np.empty_like(r)
    # stage offsets and weights of the classical RK4 tableau
    tableau = ((0.5, 1 / 6), (0.5, 1 / 3), (1.0, 1 / 3), (None, 1 / 6))
    for k in range(n):
        s = t0 + k * h
        np.copyto(acc, r)
        x = r
        c_prev = 0.0
        for c_next, weight in tableau:
            kk = gen(s + c_prev * h, x)
            if c_next is not None:
                np.multiply(kk, c_next * h, out=stage)
                stage += r
                x = stage
                c_prev = c_next
            kk *= weight * h
            acc += kk
        np.conjugate(acc.T, out=stage)
        acc += stage
        acc *= 0.5
        r, acc = acc, r
    tr = np.trace(r).real
    drift = abs(tr - tr0)
    if drift > 0:
        log.debug("trace renormalized by %.3e over %d steps", drift, n)
    r = r / tr
    out = FockDensityMatrix(r, rho.spec)
    lo = out.min_eigenvalue()
    if lo < -POSITIVITY_ABORT:
        raise PositivityLoss(f"min eigenvalue {lo:.3e} after evolution")
    if diagnostics is not None:
        diagnostics["steps"] = diagnostics.get("steps", 0) + n
        diagnostics["trace_drift"] = max(diagnostics.get("trace_drift", 0.0), drift)
        diagnostics["min_eigenvalue"] = min(diagnostics.get("min_eigenvalue", math.inf), lo)
    return out


def mean_propagator(gen: LindbladGenerator, t: float, dt: float, t0: float = 0.0) -> np.ndarray:
    """Quadrature map of first moments over the same RK4 grid, as a 6x6 matrix.

    Rows and columns follow (x_m, p_m, x_1, p_1, x_2, p_2); modes outside
    the generator's space are passed through unchanged.
    """
    modes = gen.spec.active_modes
    n_act = len(modes)
    if t == 0:
        return np.eye(6)
    n = max(1, round(t / dt))
    if abs(n * dt - t) > 1e-9 * t:
        n = math.ceil(t / dt)
    h = t / n

    def rhs(s, Z):
        # Z holds alpha (rows 0..n_act-1) and conj(alpha) below, per column.
        K, Kc = gen.mean_matrices(s)
        big = np.block([[K, Kc], [np.conj(Kc), np.conj(K)]])
        return big @ Z

    Z = np.eye(2 * n_act, dtype=complex)
    for k in range(n):
        s = t0 + k * h
        k1 = rhs(s, Z)
        k2 = rhs(s + h / 2, Z + (h / 2) * k1)
        k3 = rhs(s + h / 2, Z + (h / 2) * k2)
        k4 = rhs(s + h, Z + h * k3)
        Z = Z + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    # (x, p) = T (alpha, conj alpha) with x = alpha + alpha*, p = -i(alpha - alpha*)
    T = np.zeros((2 * n_act, 2 * n_act), dtype=complex)
    for k in range(n_act):
        T[2 * k, k] = 1
        T[2 * k, n_act + k] = 1
        T[2 * k + 1, k] = -1j
        T[2 * k + 1, n_act + k] = 1j
    Mq = (T @ Z @ np.linalg.inv(T)).real
    out = np.eye(6)
    rows = np.concatenate([[2 * m, 2 * m + 1] for m in modes])
    out[np.ix_(rows, rows)] = Mq
    return out


# --- states ----------------------------------------------------------------

def _tail_of(p: np.ndarray) -> float:
    return float(np.sum(p[-2:]))


def state_ket(spec: InitialStateSpec, dim: int) -> np.ndarray:
    """Ket of a pure input state, normalized before truncation."""
    if spec.kind == "vacuum":
        return coherent_ket(0, dim)
    if spec.kind == "coherent":
        return coherent_ket(spec.alpha, dim)
    if spec.kind == "cat":
        a = spec.alpha
        norm = 1 / math.sqrt(2 * (1 + math.exp(-2 * abs(a) ** 2)))
        return norm * (coherent_ket(a, dim) + coherent_ket(-a, dim))
    if spec.kind == "fock_superposition":
        if len(spec.amplitudes) > dim:
            raise TruncationTooSmall("superposition does not fit the truncation")
        out = np.zeros(dim, dtype=complex)
        out[:len(spec.amplitudes)] = spec.amplitudes
        return out
    if spec.kind == "squeezed_coherent":
        return displaced_squeezed_ket(spec.alpha, spec.r0, 0.0, dim)
    raise InvalidSpec(f"{spec.kind} is not a pure state")


def displaced_squeezed_ket(alpha: complex, r: float, theta: float, dim: int,
                           pad: int = 60) -> np.ndarray:
    """D(alpha) S(r e^{i theta}) |0>, built in a padded space and truncated."""
    big = dim + pad + int(4 * abs(alpha) ** 2)
    ket = squeezed_vacuum_ket(r, theta, big)
    if alpha != 0:
        a = ladder(big).toarray()
        gen = alpha * a.conj().T - np.conj(alpha) * a
        ket = scipy.linalg.expm(gen) @ ket
    return ket[:dim]


def prepare_state(spec: InitialStateSpec, dim: int, mode: int = 1,
                  tail_tol: float = TAIL_TOL) -> FockDensityMatrix:
    """Single-mode density matrix of ``spec`` on |0>..|dim-1>."""
    if spec.kind == "thermal":
        n = spec.n_bar
        k = np.arange(dim)
        p = (n / (n + 1)) ** k / (n + 1) if n > 0 else (k == 0).astype(float)
        if _tail_of(p) >= tail_tol:
            raise TruncationTooSmall(f"thermal n={n} needs more than {dim} levels")
        rho = np.diag(p / p.sum()).astype(complex)
    else:
        ket = state_ket(spec, dim)
        p = np.abs(ket) ** 2
        if _tail_of(p) >= tail_tol or p.sum() < 1 - 1e-6:
            raise TruncationTooSmall(f"{spec.kind} state needs more than {dim} levels")
        ket = ket / np.linalg.norm(ket)
        rho = np.outer(ket, ket.conj())
    return FockDensityMatrix(rho, single_mode_spec(dim, mode))


def auto_dim(spec: InitialStateSpec, tail_tol: float = 1e-8, minimum: int = 6,
             margin: int = 3) -> int:
    """Smallest truncation whose top-two populations sit below ``tail_tol``, plus margin."""
    dim = minimum
    while dim < 400:
        try:
            prepare_state(spec, dim, tail_tol=tail_tol)
            return dim + margin
        except TruncationTooSmall:
            dim += 1
    raise TruncationTooSmall(f"no truncation below 400 levels fits {spec}")


def ket_density(ket: np.ndarray, mode: int) -> FockDensityMatrix:
    ket = ket / np.linalg.norm(ket)
    return FockDensityMatrix(np.outer(ket, ket.conj()), single_mode_spec(len(ket), mode))


def tensor(*parts: FockDensityMatrix) -> FockDensityMatrix:
    """Product state of factors on disjoint modes, listed in increasing mode order."""
    dims = [2, 2, 2]
    modes = []
    for p in parts:
        for m in p.spec.active_modes:
            dims[m] = p.spec.dims[m]
        modes.extend(p.spec.active_modes)
    if modes != sorted(set(modes)):
        raise InvalidSpec(f"factors must cover distinct modes in increasing order, got {modes}")
    rho = parts[0].rho
    for p in parts[1:]:
        rho = np.kron(rho, p.rho)
    return FockDensityMatrix(rho, HilbertSpec(tuple(dims), tuple(modes)))


def partial_trace(rho: FockDensityMatrix, keep: int) -> FockDensityMatrix:
    """Reduced state of mode ``keep``."""
    spec = rho.spec
    pos = spec.position(keep)
    dims = spec.factor_dims
    n = len(dims)
    if n == 1:
        return rho
    t = rho.rho.reshape(dims + dims)
    letters = "abcdefgh"
    row = list(letters[:n])
    col = list(letters[:n])
    col[pos] = "z"
    expr = "".join(row) + "".join(col) + "->" + row[pos] + "z"
    red = np.einsum(expr, t)
    red = red / np.trace(red)
    sub = list(spec.dims)
    return FockDensityMatrix(red, HilbertSpec(tuple(sub), (keep,)))


def resize(rho: FockDensityMatrix, dim: int) -> FockDensityMatrix:
    """Embed (or cut) a single-mode state into ``dim`` levels."""
    if len(rho.spec.active_modes) != 1:
        raise InvalidSpec("resize expects a single-mode state")
    mode = rho.spec.active_modes[0]
    out = np.zeros((dim, dim), dtype=complex)
    k = min(dim, rho.dim)
    out[:k, :k] = rho.rho[:k, :k]
    return FockDensityMatrix(out / np.trace(out), rho.spec.resized(mode, dim))


def _psd_sqrt(R: np.ndarray):
    w, V = np.linalg.eigh((R + R.conj().T) / 2)
    clamp = float(-w[w < 0].sum())
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T, clamp


def uhlmann_fidelity(rho_a, rho_b) -> float:
    """[Tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a))]^2.

    The trace equals the sum of singular values of sqrt(rho_a) sqrt(rho_b);
    both square roots come from Hermitian eigendecompositions with negative
    eigenvalues clamped to zero.  Summing singular values instead of square
    roots of eigenvalues keeps round-off at the 1e-16 level rather than its
    square root.
    """
    A = rho_a.rho if isinstance(rho_a, FockDensityMatrix) else np.asarray(rho_a)
    B = rho_b.rho if isinstance(rho_b, FockDensityMatrix) else np.asarray(rho_b)
    if A.shape != B.shape:
        raise DimensionMismatch(f"{A.shape} vs {B.shape}")
    sqrtA, ca = _psd_sqrt(A)
    sqrtB, cb = _psd_sqrt(B)
    if ca + cb > 0:
        log.debug("uhlmann_fidelity clamped negative eigenvalues of total %.2e", ca + cb)
    sv = np.linalg.svd(sqrtA @ sqrtB, compute_uv=False)
    F = float(np.sum(sv) ** 2)
    return min(max(F, 0.0), 1.0)


def quadrature_moments(rho: FockDensityMatrix):
    """(mean, cov) of a single-mode state in the x = a + a^dag convention."""
    d = rho.dim
    a = ladder(d).toarray()
    r = rho.rho
    ea = np.trace(r @ a)
    ea2 = np.trace(r @ a @ a)
    n = np.real(np.trace(r @ a.conj().T @ a))
    mean = np.array([2 * ea.real, 2 * ea.imag])
    # Var of x and p, Cov via symmetrized products
    vxx = 2 * n + 1 + 2 * np.real(ea2) - mean[0] ** 2
    vpp = 2 * n + 1 - 2 * np.real(ea2) - mean[1] ** 2
    vxp = 2 * np.imag(ea2) - mean[0] * mean[1]
    return mean, np.array([[vxx, vxp], [vxp, vpp]])


# --- additive Gaussian noise -------------------------------------------------

def noise_channel(rho: FockDensityMatrix, noise_cov, dim: int | None = None,
                  tail_tol: float = TAIL_TOL) -> FockDensityMatrix:
    """Average rho over random displacements with quadrature covariance noise_cov.

    Displacements for different kicks commute up to a phase, so the channel
    is exactly exp(-1/2 sum_jk S_jk ad_{W_j} ad_{W_k}) with W = (-p/2, x/2).
    The state is first embedded into ``dim`` levels (chosen automatically
    when omitted) and the truncation tail is checked afterwards.
    """
    S = np.asarray(noise_cov, dtype=float)
    S = (S + S.T) / 2
    if np.abs(S).max() < 1e-15:
        return rho
    if np.linalg.eigvalsh(S).min() < -1e-12:
        raise InvalidSpec("noise covariance must be positive semidefinite")
    if dim is None:
        n_est = float(np.real(np.diag(rho.rho)) @ np.arange(rho.dim)) + np.trace(S) / 4
        dim = max(rho.dim + 4, int(math.ceil(16 * (n_est + 1))) + 10)
    while True:
        big = resize(rho, dim)
        out = _apply_noise(big, S)
        try:
            out.check_tail(tail_tol, "noise channel")
            return out
        except TruncationTooSmall:
            if dim > 600:
                raise
            dim = int(dim * 1.5)


def _apply_noise(rho: FockDensityMatrix, S: np.ndarray) -> FockDensityMatrix:
    d = rho.dim
    a = ladder(d)
    ad = a.conj().T
    x = a + ad
    p = -1j * (a - ad)
    W = [(-0.5) * p, 0.5 * x]
    eye = sp.identity(d, dtype=complex, format="csr")
    # row-major vec: vec(W rho) = (W kron I) vec, vec(rho W) = (I kron W^T) vec
    ads = [sp.kron(w, eye, format="csr") - sp.kron(eye, w.T, format="csr") for w in W]
    gen = sp.csr_matrix((d * d, d * d), dtype=complex)
    for j in range(2):
        for k in range(2):
            if S[j, k] != 0:
                gen = gen - 0.5 * S[j, k] * (ads[j] @ ads[k])
    v = expm_multiply(gen, rho.rho.reshape(-1))
    r = v.reshape(d, d)
    r = (r + r.conj().T) / 2
    return FockDensityMatrix(r / np.trace(r).real, rho.spec)


def displacement_elements(beta, rows: int, cols: int) -> np.ndarray:
    """<k|D(beta)|m> for k < rows, m < cols, one block per entry of ``beta``.

    Closed form via associated Laguerre polynomials, so no truncated space
    is involved and the blocks are exact for any |beta|.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=complex))[:, None, None]
    k = np.arange(rows)[None, :, None]
    m = np.arange(cols)[None, None, :]
    lo = np.minimum(k, m)
    delta = np.abs(k - m)
    r2 = np.abs(beta) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(np.sqrt(r2))
    log_mag = 0.5 * (gammaln(lo + 1) - gammaln(lo + delta + 1)) - r2 / 2
    with np.errstate(invalid="ignore"):
        power = np.where(delta > 0, delta * logr, 0.0)
    mag = np.exp(log_mag + power) * eval_genlaguerre(lo, delta, r2)
    theta = np.angle(beta)
    phase = np.where(k >= m, np.exp(1j * delta * theta), (-1.0) ** delta * np.exp(-1j * delta * theta))
    return mag * phase


def noisy_pure_overlap(rho: FockDensityMatrix, noise_cov, ket: np.ndarray,
                       beta_step: float = 0.1, chunk: int = 4096) -> float:
    """<psi| N(rho) |psi> for the additive-noise channel N of ``noise_channel``.

    N mixes displacements D(beta) with (2 Re beta, 2 Im beta) ~ Normal(0, S)
    and is self-dual, so the overlap is the Gaussian average of
    <psi|D(beta) rho D(beta)^dag|psi>.  The average is a trapezoid sum on the
    principal axes of S, cut where the integrand has left the supports of
    rho and psi.  This is the Uhlmann fidelity against the pure state psi.
    """
    S = np.asarray(noise_cov, dtype=float)
    S = (S + S.T) / 2
    ket = np.asarray(ket, dtype=complex)
    R = rho.rho
    if np.abs(S).max() < 1e-15:
        d = min(len(ket), rho.dim)
        return min(max(float(np.real(ket[:d].conj() @ R[:d, :d] @ ket[:d])), 0.0), 1.0)
    s, U = np.linalg.eigh(S)
    if s.min() < -1e-12:
        raise InvalidSpec("noise covariance must be positive semidefinite")
    reach = math.sqrt(rho.dim) + math.sqrt(len(ket)) + 6.0
    axes = []
    for sv in np.clip(s, 0.0, None):
        sd = math.sqrt(sv)
        if sd < 1e-12:
            axes.append((np.zeros(1), np.ones(1)))
            continue
        zmax = min(8.0, 2 * reach / sd)
        h = min(0.25, 2 * beta_step / sd)
        n = int(math.ceil(zmax / h))
        z = np.arange(-n, n + 1) * h
        axes.append((z * sd, h * np.exp(-z ** 2 / 2) / math.sqrt(2 * math.pi)))
    (d1, w1), (d2, w2) = axes
    D1, D2 = np.meshgrid(d1, d2, indexing="ij")
    W = np.outer(w1, w2).ravel()
    quad = U[:, 0][:, None] * D1.ravel() + U[:, 1][:, None] * D2.ravel()
    betas = (quad[0] + 1j * quad[1]) / 2
    total = 0.0
    for i in range(0, len(betas), chunk):
        # phi = <k| D(beta)^dag |psi> = <k| D(-beta) |psi>
        blk = displacement_elements(-betas[i:i + chunk], rho.dim, len(ket))
        phi = blk @ ket
        val = np.einsum("nk,kl,nl->n", phi.conj(), R, phi).real
        total += float(W[i:i + chunk] @ val)
    return min(max(total, 0.0), 1.0)


def williamson_single(cov):
    """Split a one-mode covariance as pure part + positive noise: V = V/nu + (1 - 1/nu) V."""
    V = np.asarray(cov, dtype=float)
    nu = math.sqrt(max(np.linalg.det(V), 1.0))
    pure = V / nu
    return pure, V - pure


def pure_gaussian_ket(mean, pure_cov, dim: int) -> np.ndarray:
    """Ket with the given mean and pure (det = 1) covariance."""
    w, U = np.linalg.eigh(pure_cov)
    r = -0.5 * math.log(max(w[0], 1e-300))  # squeezed variance e^{-2r}
    axis = U[:, 0]
    phi = math.atan2(axis[1], axis[0])
    alpha = complex(mean[0], mean[1]) / 2
    if r < 1e-14:
        r = 0.0
    return displaced_squeezed_ket(alpha, r, 2 * phi, dim)
