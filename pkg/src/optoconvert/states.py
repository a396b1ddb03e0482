"""Initial states of the optical input: Gaussian moments and Fock kets.

Quadratures follow x = a + a^dag, p = -i (a - a^dag), so the vacuum
covariance is the identity and a coherent state |alpha> has mean
(2 Re alpha, 2 Im alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import InvalidSpec

KINDS = ("vacuum", "coherent", "squeezed_coherent", "fock_superposition", "cat", "thermal")
GAUSSIAN_KINDS = ("vacuum", "coherent", "squeezed_coherent", "thermal")


@dataclass(frozen=True)
class InitialStateSpec:
    kind: str
    alpha: complex = 0j
    r0: float = 0.0
    amplitudes: tuple = field(default=())
    n_bar: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown state kind {self.kind!r}")
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "amplitudes", tuple(complex(c) for c in self.amplitudes))
        if self.kind == "fock_superposition":
            norm = sum(abs(c) ** 2 for c in self.amplitudes)
            if not self.amplitudes or abs(norm - 1) > 1e-9:
                raise InvalidSpec("fock_superposition amplitudes must be normalized")
        if self.n_bar < 0:
            raise InvalidSpec("n_bar must be non-negative")

    @property
    def is_gaussian(self) -> bool:
        return self.kind in GAUSSIAN_KINDS

    @property
    def label(self) -> str:
        return format_state(self)

    def moments(self):
        """(mean, cov) of a Gaussian input; raises for non-Gaussian kinds."""
        if not self.is_gaussian:
            raise InvalidSpec(f"{self.kind} state has no Gaussian description")
        mean = np.array([2 * self.alpha.real, 2 * self.alpha.imag])
        if self.kind == "thermal":
            return np.zeros(2), (2 * self.n_bar + 1) * np.eye(2)
        if self.kind == "vacuum":
            return np.zeros(2), np.eye(2)
        cov = np.diag([math.exp(-2 * self.r0), math.exp(2 * self.r0)])
        return mean, cov

    def mean_photons(self) -> float:
        if self.kind == "thermal":
            return self.n_bar
        if self.kind == "fock_superposition":
            return sum(n * abs(c) ** 2 for n, c in enumerate(self.amplitudes))
        if self.kind == "cat":
            x = abs(self.alpha) ** 2
            return x * math.tanh(x) if x > 0 else 0.0
        return abs(self.alpha) ** 2 + math.sinh(self.r0) ** 2


def vacuum():
    return InitialStateSpec("vacuum")


def coherent(alpha):
    return InitialStateSpec("coherent", alpha=alpha)


def squeezed(alpha, r0):
    return InitialStateSpec("squeezed_coherent", alpha=alpha, r0=r0)


def cat(alpha):
    return InitialStateSpec("cat", alpha=alpha)


def superposition(*amplitudes):
    return InitialStateSpec("fock_superposition", amplitudes=amplitudes)


def thermal(n_bar):
    return InitialStateSpec("thermal", n_bar=n_bar)


def parse_state(text: str) -> InitialStateSpec:
    """Parse labels such as ``coherent:1``, ``squeezed:2:0.4``, ``cat:1``,
    ``fock:0.7071,0.7071``, ``thermal:2`` or ``vacuum``."""
    parts = text.strip().split(":")
    kind = parts[0].lower()
    args = parts[1:]
    try:
        if kind == "vacuum" and not args:
            return vacuum()
        if kind == "coherent" and len(args) == 1:
            return coherent(complex(args[0]))
        if kind in ("squeezed", "squeezed_coherent") and len(args) == 2:
            return squeezed(complex(args[0]), float(args[1]))
        if kind == "cat" and len(args) == 1:
            return cat(complex(args[0]))
        if kind in ("fock", "fock_superposition") and len(args) == 1:
            amps = [complex(a) for a in args[0].split(",")]
            norm = math.sqrt(sum(abs(a) ** 2 for a in amps))
            return superposition(*[a / norm for a in amps])
        if kind == "thermal" and len(args) == 1:
            return thermal(float(args[0]))
    except ValueError as exc:
        raise InvalidSpec(f"cannot parse state {text!r}: {exc}") from None
    raise InvalidSpec(f"cannot parse state {text!r}")


def _num(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return f"{z.real:g}"
    return f"{z.real:g}{z.imag:+g}j"


def format_state(spec: InitialStateSpec) -> str:
    if spec.kind == "vacuum":
        return "vacuum"
    if spec.kind == "coherent":
        return f"coherent:{_num(spec.alpha)}"
    if spec.kind == "squeezed_coherent":
        return f"squeezed:{_num(spec.alpha)}:{spec.r0:g}"
    if spec.kind == "cat":
        return f"cat:{_num(spec.alpha)}"
    if spec.kind == "thermal":
        return f"thermal:{spec.n_bar:g}"
    return "fock:" + ",".join(f"{c.real:.6g}" if c.imag == 0 else _num(c) for c in spec.amplitudes)


# --- Fock-space kets -------------------------------------------------------

def coherent_ket(alpha: complex, dim: int) -> np.ndarray:
    """Untruncated-normalized coherent amplitudes on |0>..|dim-1>."""
    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def squeezed_vacuum_ket(r: float, theta: float, dim: int) -> np.ndarray:
    """S(r e^{i theta})|0> with S(z) = exp((z^* a^2 - z a^dag^2)/2)."""
    out = np.zeros(dim, dtype=complex)
    t = math.tanh(r)
    for m in range(0, dim, 2):
        k = m // 2
        logc = 0.5 * gammaln(m + 1) - gammaln(k + 1) - k * math.log(2)
        out[m] = (-np.exp(1j * theta) * t) ** k * math.exp(logc)
    return out / math.sqrt(math.cosh(r))
