"""Brute-force checks in matrix representations.

The time-ordered propagator is approximated by a midpoint product formula and
compared with the product form ``U_A^dagger`` and the single exponential
``U_B^dagger`` rebuilt from alpha(T) and beta(T).  Representations need not be
unitary, so "dagger" is taken as the group inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .drive import DriveSpec
from .lie_core import expm

__all__ = [
    "OracleError",
    "OracleReport",
    "trotter_propagate",
    "product_form",
    "single_exponential",
    "richardson_propagator",
    "compare_forms",
    "effective_generator_log",
    "LogProjection",
]

RICHARDSON_TARGET = 1e-9
MAX_STEPS = 2**20
START_STEPS = 2**6


class OracleError(RuntimeError):
    pass


def _hamiltonians(rep, drive: DriveSpec, times: np.ndarray) -> np.ndarray:
    R = np.asarray(rep, dtype=complex)
    return np.einsum("tk,kab->tab", drive(times), R)


def _ordered_product(factors: np.ndarray) -> np.ndarray:
    """``F[-1] @ ... @ F[1] @ F[0]`` by pairwise reduction."""
    F = factors
    while F.shape[0] > 1:
        if F.shape[0] % 2:
            F = np.concatenate([F[:-2], (F[-1] @ F[-2])[None]], axis=0)
            continue
        F = F[1::2] @ F[0::2]
    return F[0]


def trotter_propagate(rep, drive: DriveSpec, T: float, steps: int) -> np.ndarray:
    """``prod_{j=steps..1} exp(-i H(t_j) dt)`` with midpoints ``t_j = (j - 1/2) dt``."""
    if steps < 2:
        raise ValueError("steps must be at least 2")
    dt = T / steps
    times = (np.arange(steps) + 0.5) * dt
    chunk = 2**14
    partial = []
    for start in range(0, steps, chunk):
        H = _hamiltonians(rep, drive, times[start:start + chunk])
        partial.append(_ordered_product(expm(-1j * dt * H)))
    return _ordered_product(np.array(partial))


def product_form(rep, alpha) -> np.ndarray:
    """``rho(U_A)^-1 = exp(-i a_1 R_1) exp(-i a_2 R_2) ... exp(-i a_n R_n)``."""
    R = np.asarray(rep, dtype=complex)
    out = np.eye(R.shape[-1], dtype=complex)
    for a_k, R_k in zip(alpha, R):
        out = out @ expm(-1j * a_k * R_k)
    return out


def single_exponential(rep, beta) -> np.ndarray:
    """``rho(U_B)^-1 = exp(-i sum_k b_k R_k)``."""
    R = np.asarray(rep, dtype=complex)
    return expm(-1j * np.einsum("k,kab->ab", np.asarray(beta, dtype=float), R))


@dataclass(frozen=True)
class RichardsonResult:
    propagator: np.ndarray
    steps: int
    estimate: float  # |R_N - R_{N/2}|_2 of the extrapolated values
    raw_differences: tuple[float, ...]  # |U_N - U_{N/2}|_2 per doubling
    order: float | None  # observed convergence order from the last three levels


def richardson_propagator(rep, drive: DriveSpec, T: float, target: float = RICHARDSON_TARGET,
                          max_steps: int = MAX_STEPS, start: int = START_STEPS) -> RichardsonResult:
    """Double the step count until successive extrapolations agree to ``target``.

    The midpoint product is symmetric, so its error expands in even powers of
    the step and ``(4 U_2N - U_N) / 3`` is fourth order.
    """
    steps = start
    U_prev = trotter_propagate(rep, drive, T, steps)
    R_prev = None
    raw = []
    estimate = np.inf
    while steps < max_steps:
        steps *= 2
        U = trotter_propagate(rep, drive, T, steps)
        raw.append(float(np.linalg.norm(U - U_prev, 2)))
        R = (4 * U - U_prev) / 3
        if R_prev is not None:
            estimate = float(np.linalg.norm(R - R_prev, 2))
            if estimate < target:
                break
        U_prev, R_prev = U, R
    order = None
    if len(raw) >= 2 and raw[-1] > 0 and raw[-2] > 0:
        order = float(np.log2(raw[-2] / raw[-1]))
    return RichardsonResult(R, steps, estimate, tuple(raw), order)


@dataclass(frozen=True)
class OracleReport:
    rep_dim: int
    trotter_vs_ua: float
    trotter_vs_ub: float
    ua_vs_ub: float
    steps: int
    richardson_estimate: float
    trotter_order: float | None
    central_component_note: str | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compare_forms(rep, alpha_T, beta_T, drive: DriveSpec, T: float,
                  central_note: str | None = None, target: float = RICHARDSON_TARGET,
                  max_steps: int = MAX_STEPS) -> OracleReport:
    """Spectral-norm distances between the three propagators in ``rep``."""
    ua = product_form(rep, alpha_T)
    ub = single_exponential(rep, beta_T)
    rich = richardson_propagator(rep, drive, T, target, max_steps)
    norm = lambda A: float(np.linalg.norm(A, 2))  # noqa: E731
    return OracleReport(
        rep_dim=ua.shape[0],
        trotter_vs_ua=norm(rich.propagator - ua),
        trotter_vs_ub=norm(rich.propagator - ub),
        ua_vs_ub=norm(ua - ub),
        steps=rich.steps,
        richardson_estimate=rich.estimate,
        trotter_order=rich.order,
        central_component_note=central_note,
    )


@dataclass(frozen=True)
class LogProjection:
    coefficients: np.ndarray  # estimate of beta(T); central parts invisible to rep read 0
    residual: float  # relative distance of log(U) from span{-i R_k}
    rank: int


def effective_generator_log(U: np.ndarray, rep, residual_tol: float = 1e-6) -> LogProjection:
    """Principal logarithm of ``U`` projected onto ``span{-i R_k}``.

    ``U = exp(-i beta . R)`` gives back ``beta`` up to components in the kernel
    of the representation.
    """
    U = np.asarray(U, dtype=complex)
    ev = np.linalg.eigvals(U)
    on_cut = (ev.real <= 0) & (np.abs(ev.imag) <= 1e-9 * np.maximum(1.0, np.abs(ev)))
    if np.any(on_cut):
        raise OracleError(f"principal logarithm undefined: eigenvalue(s) {ev[on_cut]} "
                          "on the negative real axis")
    L = scipy.linalg.logm(U)
    R = np.asarray(rep, dtype=complex)
    basis = (-1j * R).reshape(R.shape[0], -1).T
    A = np.concatenate([basis.real, basis.imag])
    b = np.concatenate([L.ravel().real, L.ravel().imag])
    coeffs, _, rank, _ = np.linalg.lstsq(A, b, rcond=1e-12)
    resid = float(np.linalg.norm(A @ coeffs - b) / max(np.linalg.norm(b), 1e-300))
    if np.linalg.norm(b) == 0:
        resid = 0.0
    if resid > residual_tol:
        raise OracleError(f"logarithm is not in the algebra span (relative residual {resid:.3e})")
    return LogProjection(coeffs, resid, int(rank))
