"""Flat ``key = value`` run configuration.

Keys ending in ``_over_2pi_hz`` are cyclic frequencies and are multiplied by
2 pi on ingestion.  ``g1_eps_hz`` and ``g2_eps_hz`` are read as angular
rates (rad/s); the cyclic alternatives ``g1_eps_over_2pi_hz`` and
``g2_eps_over_2pi_hz`` are accepted as well.  Lines starting with ``#`` and
blank lines are ignored.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .core import MODELS, SystemConfig
from .errors import InvalidSpec

TWO_PI = 2 * math.pi

# Single-photon coupling only fixes the size of the steady-state amplitude;
# every observable depends on eps = |G b_s| alone.
DEFAULT_G_SINGLE = TWO_PI * 1e3

DEFAULTS = {
    "omega_m_over_2pi_hz": 100e6,
    "kappa1_over_2pi_hz": 1e6,
    "kappa2_over_2pi_hz": 1e6,
    "q_m": 1e4,
    "g1_eps_hz": 10e6,
    "g2_eps_hz": 7e6,
    "bath_temperature_k": 2.0,
    "model": "full",
    "detuning_mode": "resonant",
    "g1_single_over_2pi_hz": DEFAULT_G_SINGLE / TWO_PI,
    "g2_single_over_2pi_hz": DEFAULT_G_SINGLE / TWO_PI,
}

KNOWN_KEYS = set(DEFAULTS) | {"g1_eps_over_2pi_hz", "g2_eps_over_2pi_hz"}


@dataclass(frozen=True)
class RunConfig:
    """Everything a protocol run needs besides the input state."""

    system: SystemConfig
    eps: tuple = (10e6, 7e6)
    model: str = "full"
    detuning_offset: float = 0.0
    raw: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidSpec(f"unknown model {self.model!r}")
        if len(self.eps) != 2 or min(self.eps) < 0:
            raise InvalidSpec("eps needs two non-negative entries")
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))

    def resolved(self) -> dict:
        """Plain-dict view of all resolved values (angular units)."""
        sysd = asdict(self.system)
        sysd["E"] = [[e.real, e.imag] for e in self.system.E]
        sysd["Q_m"] = None if math.isinf(self.system.Q_m) else self.system.Q_m
        return {
            "system": sysd,
            "eps": list(self.eps),
            "model": self.model,
            "detuning_offset": self.detuning_offset,
        }

    def with_kappa(self, kappa: float) -> "RunConfig":
        return replace(self, system=replace(self.system, kappa=(kappa, kappa)))

    def with_temperature(self, T: float) -> "RunConfig":
        return replace(self, system=replace(self.system, T=T))


def parse_detuning(text: str) -> float:
    """'resonant' -> 0; 'offset:<hz>' -> 2 pi <hz> rad/s."""
    text = text.strip()
    if text == "resonant":
        return 0.0
    if text.startswith("offset:"):
        try:
            return TWO_PI * float(text[len("offset:"):])
        except ValueError:
            pass
    raise InvalidSpec(f"detuning_mode must be 'resonant' or 'offset:<hz>', got {text!r}")


def parse_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise InvalidSpec(f"line {lineno}: unknown key {key!r}")
        values[key] = value
    return values


def from_mapping(values: dict) -> RunConfig:
    merged = dict(DEFAULTS)
    merged.update(values)
    for k in ("g1", "g2"):
        if f"{k}_eps_over_2pi_hz" in values and f"{k}_eps_hz" in values:
            raise InvalidSpec(f"give either {k}_eps_hz or {k}_eps_over_2pi_hz, not both")

    def num(key):
        try:
            return float(merged[key])
        except (TypeError, ValueError):
            raise InvalidSpec(f"{key} must be a number, got {merged[key]!r}") from None

    def eps(k):
        cyc = f"{k}_eps_over_2pi_hz"
        if cyc in merged:
            return TWO_PI * num(cyc)
        return num(f"{k}_eps_hz")

    system = SystemConfig(
        omega_m=TWO_PI * num("omega_m_over_2pi_hz"),
        kappa=(TWO_PI * num("kappa1_over_2pi_hz"), TWO_PI * num("kappa2_over_2pi_hz")),
        G=(TWO_PI * num("g1_single_over_2pi_hz"), TWO_PI * num("g2_single_over_2pi_hz")),
        T=num("bath_temperature_k"),
        Q_m=num("q_m"),
    )
    return RunConfig(system=system, eps=(eps("g1"), eps("g2")),
                     model=str(merged["model"]).strip(),
                     detuning_offset=parse_detuning(str(merged["detuning_mode"])),
                     raw={k: str(v) for k, v in merged.items()})


def load_config(path: str | Path | None) -> RunConfig:
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return from_mapping({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidSpec(f"cannot read config {path}: {exc}") from exc
    return from_mapping(parse_text(text))
