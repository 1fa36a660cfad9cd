"""Ideal instantaneous pi-pulse sequences.

A sequence is the ordered list of pulse times as fractions of the total
evolution time; Ramsey is the empty sequence, Hahn a single pulse at
1/2, and CPMG-N places pulses at odd multiples of 1/(2N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class PulseSequence:
    """Pi-pulse times as strictly increasing fractions in (0, 1)."""

    fractions: tuple
    name: str = "custom"

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        for f in fr:
            if not 0.0 < f < 1.0:
                raise ConfigError(f"pulse fraction {f} outside the open interval (0, 1)")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ConfigError("pulse fractions must be strictly increasing")
        object.__setattr__(self, "fractions", fr)

    @classmethod
    def ramsey(cls) -> "PulseSequence":
        return cls(fractions=(), name="ramsey")

    @classmethod
    def hahn(cls) -> "PulseSequence":
        return cls(fractions=(0.5,), name="hahn")

    @classmethod
    def cpmg(cls, n: int) -> "PulseSequence":
        if n < 1:
            raise ConfigError("CPMG needs at least one pulse")
        return cls(fractions=tuple((2 * k - 1) / (2 * n) for k in range(1, n + 1)),
                   name=f"cpmg-{n}")

    @classmethod
    def custom(cls, fractions) -> "PulseSequence":
        return cls(fractions=tuple(fractions), name="custom")

    @property
    def n_pulses(self) -> int:
        return len(self.fractions)

    @property
    def bounds(self) -> np.ndarray:
        """Segment boundaries (0, f_1, ..., f_k, 1)."""
        return np.concatenate(([0.0], self.fractions, [1.0]))

    @property
    def durations(self) -> np.ndarray:
        """Segment lengths as fractions of the total time."""
        return np.diff(self.bounds)

    def sign_at(self, tau, total_time: float):
        """Toggling sign y(tau): +1 initially, flipped by each pulse."""
        tau = np.asarray(tau, dtype=float)
        counts = np.zeros_like(tau, dtype=int)
        for f in self.fractions:
            counts += tau >= f * total_time
        return (-1.0) ** counts
