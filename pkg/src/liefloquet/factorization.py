"""Product-form (Wei-Norman) parameters alpha(t) of the evolution operator.

``U(t) = U_A(alpha(t))^dagger`` with ``U_A = U_n ... U_1``.  Requiring the
transformed Floquet operator to vanish gives ``alpha_dot^T nu = a^T M_a``,
which is integrated from ``alpha(0) = 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .drive import DriveSpec
from .lie_core import LieAlgebraSpec, ma_and_nu
from .ode import DenseSolution, IntegrationError, IvpProblem, integrate

__all__ = [
    "FactorizationError",
    "AlphaTrajectory",
    "alpha_flow",
    "alpha_rhs",
    "u_residual",
]

NU_COND_WARNING = 1e10
ALPHA_BOUND = 1e3  # in units of 1 + T max|a|, the natural scale of alpha
RESIDUAL_GRID = 256


class FactorizationError(RuntimeError):
    def __init__(self, message: str, t: float | None = None, cond: float | None = None):
        super().__init__(message)
        self.t = t
        self.cond = cond


def alpha_rhs(spec: LieAlgebraSpec, alpha: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``(nu^T)^-1 M_a^T a``; broadcasts over leading axes of ``alpha`` and ``a``."""
    Ma, nu = ma_and_nu(spec, alpha)
    rhs = np.einsum("...ji,...j->...i", Ma, a)
    return np.linalg.solve(np.swapaxes(nu, -1, -2), rhs[..., None])[..., 0]


@dataclass(frozen=True)
class AlphaTrajectory:
    spec: LieAlgebraSpec
    drive: DriveSpec
    T: float
    solution: DenseSolution
    u_max: float
    nu_cond_max: float
    rel_tol: float
    abs_tol: float
    warnings: tuple[str, ...] = field(default=())

    def __call__(self, t) -> np.ndarray:
        return self.solution(t)

    def derivative(self, t) -> np.ndarray:
        return self.solution.derivative(t)

    @property
    def alpha_T(self) -> np.ndarray:
        return np.array(self.solution.y_final)


def alpha_flow(spec: LieAlgebraSpec, drive: DriveSpec, T: float | None = None,
               rel_tol: float = 1e-12, abs_tol: float = 1e-12,
               alpha_bound: float = ALPHA_BOUND) -> AlphaTrajectory:
    """Integrate the alpha-flow on ``[0, T]`` (one drive period by default).

    Raises :class:`FactorizationError` when ``nu`` becomes singular, when
    ``|alpha|`` exceeds ``alpha_bound * (1 + T max|a|)`` (finite-time blow-up
    of the product-form chart), or when the integrator fails.
    """
    if drive.n != spec.n:
        raise ValueError(f"drive has {drive.n} coefficients, algebra has dimension {spec.n}")
    T = drive.period if T is None else float(T)
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")

    limit = alpha_bound * (1.0 + T * drive.max_abs())

    def rhs(t, alpha):
        if np.max(np.abs(alpha)) > limit:
            raise FactorizationError(
                f"product-form chart blows up: |alpha| exceeded {limit:.3e} at t = {t:.17g}", t)
        try:
            return alpha_rhs(spec, alpha, drive(t))
        except np.linalg.LinAlgError:
            cond = float(np.linalg.cond(ma_and_nu(spec, alpha)[1]))
            raise FactorizationError(f"nu is singular at t = {t:.17g} (cond {cond:.3e})",
                                     t, cond) from None
        except OverflowError as exc:
            raise FactorizationError(f"alpha-flow overflow at t = {t:.17g}: {exc}", t) from None

    problem = IvpProblem(rhs, (0.0, T), np.zeros(spec.n), rel_tol, abs_tol)
    try:
        sol = integrate(problem)
    except IntegrationError as exc:
        raise FactorizationError(f"alpha-flow integration failed: {exc}", exc.t) from exc

    grid = np.linspace(0.0, T, RESIDUAL_GRID)
    alphas = sol(grid)
    _, nus = ma_and_nu(spec, alphas)
    conds = np.linalg.cond(nus)
    notes = []
    cond_max = float(np.max(conds))
    if cond_max > NU_COND_WARNING:
        t_bad = float(grid[int(np.argmax(conds))])
        msg = f"nu is ill-conditioned (cond {cond_max:.3e} at t = {t_bad:.6g})"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    u = _residuals(spec, drive, alphas, sol.derivative(grid), grid)
    return AlphaTrajectory(spec, drive, T, sol, float(np.max(np.abs(u))), cond_max,
                           rel_tol, abs_tol, tuple(notes))


def _residuals(spec, drive, alphas, alpha_dots, ts):
    Ma, nu = ma_and_nu(spec, alphas)
    a = drive(ts)
    return (np.einsum("...ji,...j->...i", Ma, a)
            - np.einsum("...ji,...j->...i", nu, alpha_dots))


def u_residual(spec: LieAlgebraSpec, drive: DriveSpec, traj: AlphaTrajectory, t) -> np.ndarray:
    """``u(t) = M_a^T a(t) - nu^T alpha_dot(t)`` with alpha_dot from the interpolant.

    ``u = 0`` is the condition for ``U_A^dagger`` to be the evolution operator.
    """
    ts = np.asarray(t, dtype=float)
    return _residuals(spec, drive, traj(ts), traj.derivative(ts), ts)
