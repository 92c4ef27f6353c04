"""Adaptive Dormand-Prince 5(4) integrator with dense output.

Only what the flows in this package need: explicit, non-stiff, deterministic.
The dense output is the usual quartic continuous extension of the pair; it
interpolates states and right-hand sides at both ends of every step, and its
time derivative is available in closed form (used by the u-residual check).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "IntegrationError",
    "IvpProblem",
    "DenseSolution",
    "SolverStats",
    "integrate",
    "step_doubling_verify",
]

# Dormand & Prince (1980) coefficients; dense output from Hairer, Norsett & Wanner.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
    701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423,
])

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Step-size underflow, non-finite right-hand side, or step budget exhausted."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t = {t:.17g}")
        self.t = t


@dataclass(frozen=True)
class IvpProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t_span: tuple[float, float]
    y0: np.ndarray
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_steps: int = 200_000

    def __post_init__(self):
        t0, t1 = (float(x) for x in self.t_span)
        if not t1 > t0:
            raise ValueError(f"t_span must be increasing, got {self.t_span}")
        for name in ("rel_tol", "abs_tol"):
            tol = getattr(self, name)
            if not 1e-14 <= tol <= 1e-2:
                raise ValueError(f"{name} must lie in [1e-14, 1e-2], got {tol}")
        object.__setattr__(self, "t_span", (t0, t1))
        object.__setattr__(self, "y0", np.array(self.y0, dtype=float).ravel())

    @property
    def dimension(self) -> int:
        return self.y0.size

    def tightened(self, factor: float) -> "IvpProblem":
        return IvpProblem(self.rhs, self.t_span, self.y0,
                          max(self.rel_tol / factor, 1e-14), max(self.abs_tol / factor, 1e-14),
                          self.max_steps)


@dataclass(frozen=True)
class SolverStats:
    steps: int
    rejected: int
    rhs_evals: int


class DenseSolution:
    """Accepted mesh, stored states and per-step interpolation coefficients."""

    def __init__(self, t: np.ndarray, y: np.ndarray, coeffs: np.ndarray, stats: SolverStats):
        self.t = t
        self.y = y
        self._coeffs = coeffs  # (steps, 5, dim): r1..r5 of the quartic extension
        self.stats = stats
        for arr in (self.t, self.y, self._coeffs):
            arr.setflags(write=False)

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def _locate(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t0, t1 = self.t_span
        if np.any(t < t0) or np.any(t > t1):
            raise ValueError(f"evaluation outside the integration interval [{t0}, {t1}]")
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        h = self.t[idx + 1] - self.t[idx]
        theta = (t - self.t[idx]) / h
        return idx, h, theta

    def __call__(self, t):
        """State at ``t`` (scalar or array of times -> ``(dim,)`` or ``(len(t), dim)``)."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        idx, _, th = self._locate(ts)
        r = self._coeffs[idx]
        th = th[:, None]
        th1 = 1.0 - th
        out = r[:, 0] + th * (r[:, 1] + th1 * (r[:, 2] + th * (r[:, 3] + th1 * r[:, 4])))
        # mesh nodes return the stored state verbatim
        node = np.searchsorted(self.t, ts)
        node = np.clip(node, 0, len(self.t) - 1)
        hit = self.t[node] == ts
        if np.any(hit):
            out[hit] = self.y[node[hit]]
        return out[0] if scalar else out

    def derivative(self, t):
        """Time derivative of the interpolant (not a fresh right-hand-side evaluation)."""
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        idx, h, th = self._locate(ts)
        r = self._coeffs[idx]
        th = th[:, None]
        dp = (r[:, 1] + (1 - 2 * th) * r[:, 2] + (2 * th - 3 * th**2) * r[:, 3]
              + (2 * th - 6 * th**2 + 4 * th**3) * r[:, 4])
        out = dp / h[:, None]
        return out[0] if scalar else out

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err / scale)))


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def integrate(problem: IvpProblem) -> DenseSolution:
    """Integrate ``problem`` over its whole ``t_span``.

    Local error control uses the embedded fourth-order solution with the mixed
    tolerance ``abs_tol + rel_tol * |y|`` in an RMS norm.
    """
    f = problem.rhs
    rtol, atol = problem.rel_tol, problem.abs_tol
    t0, t_end = problem.t_span
    y = problem.y0.copy()
    dim = y.size

    def evaluate(t, state):
        out = np.asarray(f(t, state), dtype=float).ravel()
        if out.shape != (dim,):
            raise ValueError(f"rhs returned shape {out.shape}, expected ({dim},)")
        if not np.all(np.isfinite(out)):
            raise IntegrationError("non-finite right-hand side", t)
        return out

    nfev = 0
    k = np.empty((7, dim))
    k[0] = evaluate(t0, y)
    nfev += 1
    span = t_end - t0
    h = _initial_step(evaluate, t0, y, k[0], rtol, atol, span)
    nfev += 1

    ts = [t0]
    ys = [y.copy()]
    coeffs = []
    t = t0
    rejected = 0
    steps = 0
    prev_rejected = False
    while t < t_end:
        if steps + rejected >= problem.max_steps:
            raise IntegrationError(f"step budget of {problem.max_steps} exhausted", t)
        h_min = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < h_min:
            raise IntegrationError(f"step size underflow (h = {h:.3e})", t)
        last = t + h >= t_end or (t_end - (t + h)) < h_min
        if last:
            h = t_end - t
        for s in range(1, 7):
            ys_stage = y + h * (np.dot(_A[s], k[:s]))
            k[s] = evaluate(t + _C[s] * h, ys_stage)
        nfev += 6
        y_new = y + h * (_B @ k)
        err = _error_norm(h * (_E @ k), y, y_new, rtol, atol)
        if err <= 1.0:
            r1 = y
            r2 = y_new - y
            r3 = h * k[0] - r2
            r4 = r2 - h * k[6] - r3
            r5 = h * (_D @ k)
            coeffs.append(np.stack([r1, r2, r3, r4, r5]))
            t = t_end if last else t + h
            y = y_new
            ts.append(t)
            ys.append(y.copy())
            k[0] = k[6]
            steps += 1
            factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** -0.2)
            if prev_rejected:
                factor = min(factor, 1.0)
            h *= max(factor, _MIN_FACTOR)
            prev_rejected = False
        else:
            rejected += 1
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)
            prev_rejected = True

    stats = SolverStats(steps=steps, rejected=rejected, rhs_evals=nfev)
    return DenseSolution(np.array(ts), np.array(ys), np.array(coeffs), stats)


def step_doubling_verify(problem: IvpProblem, factor: float = 100.0,
                         points: int = 1000) -> float:
    """Max deviation between the solution and one at ``factor``-times tighter tolerances."""
    coarse = integrate(problem)
    fine = integrate(problem.tightened(factor))
    grid = np.linspace(*problem.t_span, points)
    return float(np.max(np.abs(coarse(grid) - fine(grid))))
