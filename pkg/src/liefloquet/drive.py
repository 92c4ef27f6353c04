"""Periodic coefficient functions a_k(t) built from constant, cosine and sine terms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["DriveTerm", "DriveSpec"]

_KINDS = ("const", "cos", "sin")


@dataclass(frozen=True)
class DriveTerm:
    kind: str
    amplitude: float
    harmonic: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"drive term kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "const":
            object.__setattr__(self, "harmonic", 0)
        elif int(self.harmonic) < 1:
            raise ValueError(f"harmonic index must be >= 1 for {self.kind} terms")
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "harmonic", int(self.harmonic))


@dataclass(frozen=True)
class DriveSpec:
    """``a_k(t) = sum const + sum amp cos(n w t) + sum amp sin(n w t)`` for each generator."""

    terms: tuple[tuple[DriveTerm, ...], ...]
    omega: float

    def __post_init__(self):
        if not self.omega > 0 or not math.isfinite(self.omega):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        terms = tuple(tuple(t if isinstance(t, DriveTerm) else DriveTerm(*t) for t in gen)
                      for gen in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "omega", float(self.omega))

    @property
    def n(self) -> int:
        return len(self.terms)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def __call__(self, t):
        """Coefficient vector at ``t``; an array of times gives shape ``(len(t), n)``."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((ts.size, self.n))
        for k, gen in enumerate(self.terms):
            for term in gen:
                if term.kind == "const":
                    out[:, k] += term.amplitude
                elif term.kind == "cos":
                    out[:, k] += term.amplitude * np.cos(term.harmonic * self.omega * ts)
                else:
                    out[:, k] += term.amplitude * np.sin(term.harmonic * self.omega * ts)
        return out[0] if scalar else out

    def max_abs(self) -> float:
        """Upper bound on ``max_t |a(t)|_inf`` from the term amplitudes."""
        return max((sum(abs(t.amplitude) for t in gen) for gen in self.terms), default=0.0)

    @classmethod
    def constant(cls, values, omega: float) -> "DriveSpec":
        return cls(tuple((DriveTerm("const", v),) if v else () for v in values), omega)
