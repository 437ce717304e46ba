"""PHY timing, frame geometry and degree distributions."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PhyParams",
    "DegreeDistribution",
    "packet_duration",
    "slot_duration",
    "slot_count",
    "sample_degree",
    "sample_degrees",
    "mean_degree",
    "to_ns",
]

NORM_TOL = 1e-12


def to_ns(seconds: float) -> int:
    """Round a duration in seconds to integer nanoseconds."""
    return int(round(seconds * 1e9))


@dataclass(frozen=True)
class PhyParams:
    """802.11p-style PHY timing. Defaults describe the 400 byte payload profile."""

    data_rate: float = 6e6
    preamble_duration: float = 40e-6
    csma_slot: float = 13e-6
    aifs: float = 58e-6
    frame_duration: float = 100e-3
    guard: float = 5e-6
    payload_size: int = 400
    ofdm_symbol_duration: float = 8e-6
    data_bits_per_symbol: int = 48

    def __post_init__(self):
        for name in ("data_rate", "preamble_duration", "csma_slot", "aifs",
                     "frame_duration", "guard", "ofdm_symbol_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.payload_size < 1:
            raise ValueError("payload_size must be >= 1")
        if self.data_bits_per_symbol < 1:
            raise ValueError("data_bits_per_symbol must be >= 1")

    @classmethod
    def table1(cls, payload_size: int = 400) -> "PhyParams":
        return cls(payload_size=payload_size)


def packet_duration_ns(phy: PhyParams) -> int:
    symbols = -(-8 * phy.payload_size // phy.data_bits_per_symbol)
    return to_ns(phy.preamble_duration) + symbols * to_ns(phy.ofdm_symbol_duration)


def slot_duration_ns(phy: PhyParams) -> int:
    return packet_duration_ns(phy) + to_ns(phy.guard)


def packet_duration(phy: PhyParams) -> float:
    """Preamble plus the payload rounded up to whole OFDM symbols, in seconds."""
    return packet_duration_ns(phy) / 1e9


def slot_duration(phy: PhyParams) -> float:
    return slot_duration_ns(phy) / 1e9


def slot_count(phy: PhyParams) -> int:
    """Number of whole slots that fit in one frame.

    Raises:
        ValueError: if the frame is shorter than a single slot.
    """
    n = to_ns(phy.frame_duration) // slot_duration_ns(phy)
    if n < 1:
        raise ValueError("frame shorter than one slot")
    return int(n)


_TERM = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*(?:x(?:\^?(\d+))?)?\s*$")


@dataclass(frozen=True)
class DegreeDistribution:
    """Probabilities ``coefficients[l]`` of a user repeating its packet ``l`` times."""

    coefficients: tuple[float, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if not coeffs:
            raise ValueError("empty degree distribution")
        if any(not (0.0 <= c <= 1.0) for c in coeffs):
            raise ValueError("coefficients must lie in [0, 1]")
        if abs(math.fsum(coeffs) - 1.0) > NORM_TOL:
            raise ValueError(f"coefficients sum to {math.fsum(coeffs)!r}, not 1")
        # trailing zeros carry no information and would inflate q
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        object.__setattr__(self, "coefficients", coeffs)
        object.__setattr__(self, "_cdf", np.cumsum(coeffs))

    @classmethod
    def from_mapping(cls, probs: dict[int, float]) -> "DegreeDistribution":
        q = max(probs)
        coeffs = [0.0] * (q + 1)
        for degree, p in probs.items():
            coeffs[degree] += p
        return cls(tuple(coeffs))

    @classmethod
    def parse(cls, text: str) -> "DegreeDistribution":
        """Parse polynomial notation such as ``"0.86x^3+0.14x^8"``."""
        probs: dict[int, float] = {}
        for term in re.split(r"(?<![eE])\+", text.replace(" ", "")):
            if not term:
                continue
            m = _TERM.match(term)
            if m is None or (not m.group(1) and "x" not in term):
                raise ValueError(f"cannot parse degree term {term!r}")
            coeff = float(m.group(1)) if m.group(1) else 1.0
            if "x" not in term:
                degree = 0
            else:
                degree = int(m.group(2)) if m.group(2) else 1
            probs[degree] = probs.get(degree, 0.0) + coeff
        if not probs:
            raise ValueError("empty degree distribution")
        return cls.from_mapping(probs)

    @property
    def max_degree(self) -> int:
        return len(self.coefficients) - 1

    def support(self) -> list[int]:
        return [l for l, p in enumerate(self.coefficients) if p > 0]

    def __getitem__(self, degree: int) -> float:
        if 0 <= degree < len(self.coefficients):
            return self.coefficients[degree]
        return 0.0

    def __str__(self) -> str:
        terms = []
        for l, p in enumerate(self.coefficients):
            if p == 0:
                continue
            if l == 0:
                terms.append(repr(p))
                continue
            c = "" if p == 1 else repr(p)
            terms.append(f"{c}x" if l == 1 else f"{c}x^{l}")
        return "+".join(terms)


def mean_degree(dist: DegreeDistribution) -> float:
    return math.fsum(l * p for l, p in enumerate(dist.coefficients))


def sample_degrees(dist: DegreeDistribution, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0, 1) to degrees by inverting the cumulative distribution."""
    idx = np.searchsorted(dist._cdf, u, side="right")
    # float round-off can leave cdf[-1] a hair below 1
    return np.minimum(idx, dist.support()[-1])


def sample_degree(dist: DegreeDistribution, rng: np.random.Generator) -> int:
    return int(sample_degrees(dist, np.asarray(rng.random())))
