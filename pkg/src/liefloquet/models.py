"""Presets for the three driven systems, their observables, and a Mathieu reference.

Bases (hbar = 1):

* Paul trap: ``h = (x^2, xp + px, p^2)``
* optical lattice: ``h = (V, K, H0)`` with V the lattice potential, H0 the
  hopping term and ``K = i[V, H0]`` the current-like closure element
* Kapitza: ``h = (1, x, p, m^2 w0^2 x^2 + p^2)``
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .drive import DriveSpec, DriveTerm
from .lie_core import LieAlgebraSpec, adjoint_rep
from .ode import IvpProblem, integrate

__all__ = [
    "ReductionStep",
    "ModelPreset",
    "PaulTrapObservables",
    "MathieuReference",
    "paul_trap",
    "optical_lattice",
    "kapitza",
    "paul_trap_observables",
    "mathieu_reference",
    "phase_space_rep",
    "PRESETS",
    "build_preset",
]

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class ReductionStep:
    """Conjugate by ``U_generator(factor * c[numerator] / c[denominator])``.

    Indices are 1-based into the current coefficient vector.
    """

    generator: int
    numerator: int
    denominator: int
    factor: float


@dataclass(frozen=True)
class ModelPreset:
    name: str
    algebra: LieAlgebraSpec
    drive: DriveSpec
    params: dict
    reps: dict = field(default_factory=dict)  # name -> tuple of matrices
    designated_rep: str = "adjoint"
    reduction: tuple[ReductionStep, ...] = ()
    references: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.drive.period

    def rep(self, name: str | None = None) -> tuple[np.ndarray, ...]:
        return self.reps[name or self.designated_rep]


def phase_space_rep(polys, affine: bool = True) -> tuple[np.ndarray, ...]:
    """Matrices ``i X_f`` for quadratic phase-space polynomials.

    Each polynomial is ``(c, v, S)`` meaning ``c + v.z + z.S.z/2`` with
    ``z = (x, p)``.  ``X_f`` is the 4x4 matrix ``[[0, v/2, c], [0, JS, Jv],
    [0, 0, 0]]`` acting on ``(*, x, p, 1)``; it maps Poisson brackets to
    commutators and keeps the constant, so the center is represented
    faithfully.  With ``affine=False`` only the 2x2 block ``JS`` is returned.
    """
    mats = []
    for c, v, S in polys:
        v = np.asarray(v, dtype=float)
        S = np.asarray(S, dtype=float)
        if affine:
            X = np.zeros((4, 4))
            X[0, 1:3] = 0.5 * v
            X[0, 3] = c
            X[1:3, 1:3] = _J @ S
            X[1:3, 3] = _J @ v
        else:
            X = _J @ S
        mats.append(1j * X)
    return tuple(mats)


# -- Paul trap ---------------------------------------------------------------

def paul_trap(m: float = 1.0, omega0: float = 1.0, omega1: float = 0.0,
              omega: float = 10.0) -> ModelPreset:
    """``H = p^2/2m + (m/2)(w1^2 + w0^2 cos wt) x^2`` on the basis (x^2, xp+px, p^2)."""
    if not (m > 0 and omega > 0 and omega0 >= 0 and omega1 >= 0):
        raise ValueError("paul trap needs m, omega > 0 and omega0, omega1 >= 0")
    algebra = LieAlgebraSpec(
        3,
        ((1, 2, 1, 4.0), (1, 3, 2, 2.0), (2, 3, 3, 4.0)),
        ("x^2", "xp+px", "p^2"),
    )
    zero = np.zeros(2)
    two_by_two = phase_space_rep([
        (0.0, zero, np.diag([2.0, 0.0])),
        (0.0, zero, np.array([[0.0, 2.0], [2.0, 0.0]])),
        (0.0, zero, np.diag([0.0, 2.0])),
    ], affine=False)
    x2_terms = [DriveTerm("const", 0.5 * m * omega1**2)] if omega1 else []
    if omega0:
        x2_terms.append(DriveTerm("cos", 0.5 * m * omega0**2, 1))
    drive = DriveSpec((tuple(x2_terms), (), (DriveTerm("const", 0.5 / m),)), omega)
    mathieu_a = 4 * omega1**2 / omega**2
    mathieu_q = -2 * omega0**2 / omega**2
    return ModelPreset(
        "paul-trap", algebra, drive,
        {"m": m, "omega0": omega0, "omega1": omega1, "omega": omega},
        reps={"phase-space": two_by_two, "adjoint": adjoint_rep(algebra).matrices},
        designated_rep="phase-space",
        reduction=(ReductionStep(1, 2, 3, 0.5),),
        references={
            "mathieu_a": mathieu_a,
            "mathieu_q": mathieu_q,
            "approx_Omega_over_omega": omega0**2 / (math.sqrt(2) * omega**2),
            "approx_M_over_m": 1.0,
        },
    )


@dataclass(frozen=True)
class MathieuReference:
    a: float
    q: float
    v: np.ndarray
    even: np.ndarray  # C(v), C(0) = 1, C'(0) = 0
    odd: np.ndarray  # S(v), S(0) = 0, S'(0) = 1
    monodromy: np.ndarray  # 2x2 over v in [0, pi]
    trace: float
    exponent: complex  # mu with cos(pi mu) = trace / 2, Re(mu) in [0, 1]
    stable: bool
    even_solution: Callable = field(repr=False, default=None)
    even_derivative: Callable = field(repr=False, default=None)  # dC/dv


def mathieu_reference(a: float, q: float, v_end: float = math.pi, points: int = 201,
                      rel_tol: float = 1e-12, abs_tol: float = 1e-13) -> MathieuReference:
    """Fundamental solutions of ``y'' + (a - 2q cos 2v) y = 0`` and the Floquet data.

    Stable iff ``|trace| < 2`` of the monodromy over one period ``pi``.
    """
    a, q = float(a), float(q)
    v_stop = max(float(v_end), math.pi)

    def rhs(v, y):
        w = a - 2 * q * math.cos(2 * v)
        return np.array([y[1], -w * y[0], y[3], -w * y[2]])

    sol = integrate(IvpProblem(rhs, (0.0, v_stop), [1.0, 0.0, 0.0, 1.0], rel_tol, abs_tol))
    Y = sol(math.pi)
    monodromy = np.array([[Y[0], Y[2]], [Y[1], Y[3]]])
    tr = float(np.trace(monodromy))
    mu = np.arccos(complex(tr / 2)) / math.pi
    if mu.real < 0:
        mu = -mu
    grid = np.linspace(0.0, float(v_end), points)
    vals = sol(grid)

    def even(v):
        return sol(v)[..., 0]

    def even_derivative(v):
        return sol(v)[..., 1]

    return MathieuReference(a, q, grid, vals[:, 0], vals[:, 2], monodromy, tr,
                            complex(mu), abs(tr) < 2, even, even_derivative)


@dataclass(frozen=True)
class PaulTrapObservables:
    Omega_over_omega: float  # nan when unstable
    M_over_m: float
    stability: str
    approx_Omega_over_omega: float
    approx_M_over_m: float
    discriminant: float  # beta1 beta3 - beta2^2


def paul_trap_observables(beta: np.ndarray, preset: ModelPreset) -> PaulTrapObservables:
    """Effective frequency and mass: ``sqrt(b1 b3 - b2^2)/pi`` and ``pi/(m w b3)``.

    ``beta`` is the raw single-exponential vector on (x^2, xp+px, p^2).
    """
    b1, b2, b3 = (float(x) for x in beta)
    m, omega = preset.params["m"], preset.params["omega"]
    disc = b1 * b3 - b2 * b2
    stable = disc >= 0
    return PaulTrapObservables(
        math.sqrt(disc) / math.pi if stable else math.nan,
        math.pi / (m * omega * b3),
        "stable" if stable else "unstable",
        preset.references["approx_Omega_over_omega"],
        preset.references["approx_M_over_m"],
        disc,
    )


# -- optical lattice ----------------------------------------------------------

def optical_lattice(J: float = 1.0, kappa: float = 1.0, omega: float = 20.0) -> ModelPreset:
    """``H = H0 + w kappa cos(wt) V`` with the hopping amplitude J absorbed in ``H0``."""
    if not (J > 0 and omega > 0):
        raise ValueError("optical lattice needs J, omega > 0")
    algebra = LieAlgebraSpec(3, ((1, 2, 3, 1.0), (1, 3, 2, -1.0)), ("V", "K", "H0"))
    terms = (DriveTerm("cos", omega * kappa, 1),) if kappa else ()
    drive = DriveSpec((terms, (), (DriveTerm("const", 1.0),)), omega)
    return ModelPreset(
        "optical-lattice", algebra, drive, {"J": J, "kappa": kappa, "omega": omega},
        reps={"adjoint": adjoint_rep(algebra).matrices}, designated_rep="adjoint",
    )


# -- Kapitza ----------------------------------------------------------------

def kapitza(m: float = 1.0, omega0: float = 1.0, omega: float = 10.0,
            F: float = 1.0) -> ModelPreset:
    """``H = p^2/2m + m w0^2 x^2/2 + F x cos(wt)`` on (1, x, p, m^2 w0^2 x^2 + p^2)."""
    if not (m > 0 and omega > 0 and omega0 > 0):
        raise ValueError("kapitza needs m, omega0, omega > 0")
    if math.isclose(omega, omega0):
        warnings.warn("kapitza drive is resonant (omega == omega0); closed forms do not apply",
                      RuntimeWarning, stacklevel=2)
    k2 = (m * omega0) ** 2
    algebra = LieAlgebraSpec(
        4, ((2, 3, 1, 1.0), (4, 2, 3, -2.0), (4, 3, 2, 2 * k2)),
        ("1", "x", "p", "m^2w0^2x^2+p^2"),
    )
    zero = np.zeros(2)
    affine = phase_space_rep([
        (1.0, zero, np.zeros((2, 2))),
        (0.0, np.array([1.0, 0.0]), np.zeros((2, 2))),
        (0.0, np.array([0.0, 1.0]), np.zeros((2, 2))),
        (0.0, zero, np.diag([2 * k2, 2.0])),
    ])
    x_terms = (DriveTerm("cos", F, 1),) if F else ()
    drive = DriveSpec(((), x_terms, (), (DriveTerm("const", 0.5 / m),)), omega)
    shift = F**2 / (4 * m * (omega**2 - omega0**2)) if omega != omega0 else math.nan
    return ModelPreset(
        "kapitza", algebra, drive, {"m": m, "omega0": omega0, "omega": omega, "F": F},
        reps={"adjoint": adjoint_rep(algebra).matrices, "affine": affine},
        designated_rep="adjoint",
        reduction=(ReductionStep(2, 3, 4, 0.5), ReductionStep(3, 2, 4, -0.5 / k2)),
        references={
            "constant_shift": shift,
            "reduced_he": np.array([shift, 0.0, 0.0, 0.5 / m]),
        },
    )


PRESETS = {
    "paul-trap": (paul_trap, ("m", "omega0", "omega1", "omega")),
    "optical-lattice": (optical_lattice, ("J", "kappa", "omega")),
    "kapitza": (kapitza, ("m", "omega0", "omega", "F")),
}


def build_preset(name: str, params: dict | None = None) -> ModelPreset:
    try:
        factory, keys = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None
    params = dict(params or {})
    unknown = set(params) - set(keys)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}; allowed {list(keys)}")
    return factory(**{k: float(v) for k, v in params.items()})
