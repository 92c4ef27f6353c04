"""From product-form parameters alpha(T) to the single exponent beta(T).

``U_A(alpha(lambda)) = U_B(lambda beta)`` gives the lambda-flow
``d alpha / d lambda = (nu^T)^-1 beta`` from ``alpha(0) = 0``; beta is the root
of ``alpha(1; beta) = alpha(T)``.  Every root is a fixed point of ``M_a^T``, so
beta can be searched in the eigenvalue-1 eigenspace of ``M_a^T(alpha(T))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .factorization import AlphaTrajectory
from .lie_core import LieAlgebraSpec, m_a, ma_and_nu, transform_coefficients
from .ode import IntegrationError, IvpProblem, integrate

__all__ = [
    "RecombinationError",
    "BetaResult",
    "lambda_flow",
    "beta_by_shooting",
    "beta_by_eigenbasis",
    "unit_eigenvectors",
    "EigenspaceResult",
    "recombine",
    "effective_hamiltonian",
    "reduce_quadratic_form",
]

LAMBDA_TOL = 1e-12
EIGEN_TOL = 1e-8
FD_STEP = 1e-6
MAX_ITER = 50
JUMP_FRACTION = 0.25  # corrector moves larger than this (relative) count as branch jumps
JUMP_TARGET = 0.05


class RecombinationError(RuntimeError):
    def __init__(self, message: str, best_residual: float | None = None):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True)
class BetaResult:
    beta: np.ndarray
    he_coeffs: np.ndarray
    method: str  # "shooting" | "eigenbasis"
    lambda_residual: float  # |alpha(1; beta) - alpha_target|_inf
    eigen_residual: float  # |M_a^T beta - beta|_inf
    alpha_target: np.ndarray
    labels: tuple[str, ...]
    gamma: np.ndarray | None = None
    eigenvectors: np.ndarray | None = None  # (n, m)
    iterations: int = 0
    diagnostics: tuple[str, ...] = field(default=())

    @property
    def eigenspace_dim(self) -> int | None:
        return None if self.eigenvectors is None else self.eigenvectors.shape[1]


# -- lambda flow ----------------------------------------------------------------

class _BlowUp(Exception):
    pass


def _lambda_flow_batch(spec: LieAlgebraSpec, betas: np.ndarray, tol: float,
                       bound: float | None = None) -> np.ndarray:
    """Batched lambda-flow; ``bound`` aborts early once ``|alpha|`` exceeds it."""
    betas = np.atleast_2d(np.asarray(betas, dtype=float))
    B, n = betas.shape
    if not np.any(spec.structure_tensor):
        return betas.copy()  # nu is the identity

    def rhs(lam, y):
        if bound is not None and np.max(np.abs(y)) > bound:
            raise _BlowUp(f"|alpha| exceeded {bound:.3e} at lambda = {lam:.6g}")
        alpha = y.reshape(B, n)
        _, nu = ma_and_nu(spec, alpha)
        return np.linalg.solve(np.swapaxes(nu, -1, -2), betas[..., None])[..., 0].ravel()

    try:
        sol = integrate(IvpProblem(rhs, (0.0, 1.0), np.zeros(B * n), tol, tol,
                                   max_steps=20_000))
    except (IntegrationError, np.linalg.LinAlgError, OverflowError, _BlowUp) as exc:
        raise RecombinationError(f"lambda-flow failed: {exc}") from exc
    return sol.y_final.reshape(B, n)


def lambda_flow(spec: LieAlgebraSpec, beta, tol: float = LAMBDA_TOL) -> np.ndarray:
    """``alpha(1)`` for ``d alpha/d lambda = (nu^T)^-1 beta``, ``alpha(0) = 0``."""
    beta = np.asarray(beta, dtype=float)
    out = _lambda_flow_batch(spec, beta.reshape(-1, spec.n), tol)
    return out.reshape(beta.shape)


def _fd_jacobian(spec, x, basis, target, tol):
    """Residual at ``basis @ x`` and its central-difference Jacobian w.r.t. ``x``."""
    m = x.size
    steps = FD_STEP * np.maximum(1.0, np.abs(x))
    probes = np.repeat(x[None, :], 2 * m + 1, axis=0)
    for i in range(m):
        probes[1 + 2 * i, i] += steps[i]
        probes[2 + 2 * i, i] -= steps[i]
    betas = probes @ basis.T
    bound = 1e2 * (1.0 + np.max(np.abs(target)) + np.max(np.abs(betas)))
    alphas = _lambda_flow_batch(spec, betas, tol, bound)
    F = alphas[0] - target
    J = np.empty((spec.n, m))
    for i in range(m):
        J[:, i] = (alphas[1 + 2 * i] - alphas[2 + 2 * i]) / (2 * steps[i])
    return F, J


def _newton(spec, x0, basis, target, ftol, tol, method, corrector_only=False):
    """Damped Gauss-Newton on ``alpha(1; basis @ x) = target``.

    Each trial point is evaluated together with its finite-difference probes,
    so an accepted step costs one batched lambda-flow.  With
    ``corrector_only`` the iteration stops as soon as a full step is small
    (predictor-corrector continuation), without re-evaluating the residual.
    """
    x = np.array(x0, dtype=float)
    scale = 1.0 + np.max(np.abs(target))
    F, J = _fd_jacobian(spec, x, basis, target, tol)
    res = float(np.max(np.abs(F)))
    best = res
    for it in range(MAX_ITER):
        if res <= ftol * scale:
            return x, res, it
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
            raise RecombinationError(
                f"{method}: singular lambda-flow Jacobian (sigma_min/sigma_max = "
                f"{sv[-1] / max(sv[0], 1e-300):.2e}); try the eigenbasis method or continuation",
                best,
            )
        dx = np.linalg.lstsq(J, -F, rcond=None)[0]
        step = float(np.max(np.abs(dx)))
        reduced = basis.shape[1] < spec.n
        if reduced and step <= 1e-10 * (1 + np.max(np.abs(x))):
            return x, res, it  # least-squares stationary point; the caller judges res
        if corrector_only and step <= 1e-7 * (1 + np.max(np.abs(x))):
            return x + dx, res, it + 1
        t = 1.0
        for _ in range(12):
            trial = x + t * dx
            try:
                Ft, Jt = _fd_jacobian(spec, trial, basis, target, tol)
                res_t = float(np.max(np.abs(Ft)))
            except RecombinationError:
                res_t = np.inf  # trial left the chart; shorten the step
                t *= 0.5
                continue
            if res_t < res or t * step <= 1e-14 * (1 + np.max(np.abs(x))):
                break
            t *= 0.5
        if not np.isfinite(res_t):
            raise RecombinationError(f"{method}: every damped step left the chart "
                                     f"(best residual {best:.3e})", best)
        if res_t >= res and t * step <= 1e-14 * (1 + np.max(np.abs(x))):
            # stagnated at the noise floor of the lambda-flow
            if res <= 1e3 * ftol * scale or reduced:
                return x, res, it + 1
            break
        x, F, J, res = trial, Ft, Jt, res_t
        best = min(best, res)
    raise RecombinationError(f"{method}: no convergence after {MAX_ITER} iterations "
                             f"(best residual {best:.3e})", best)


def _result(spec, beta, target, method, it, tol, gamma=None, vecs=None, notes=()):
    alpha1 = lambda_flow(spec, beta, tol)
    Ma = m_a(spec, target)
    return BetaResult(
        beta=beta, he_coeffs=beta.copy(), method=method,
        lambda_residual=float(np.max(np.abs(alpha1 - target))),
        eigen_residual=float(np.max(np.abs(Ma.T @ beta - beta))),
        alpha_target=np.array(target), labels=spec.labels, gamma=gamma, eigenvectors=vecs,
        iterations=it, diagnostics=tuple(notes),
    )


def _partial(spec, beta, target, method, it, res, gamma=None, vecs=None):
    # intermediate continuation point: residuals are not re-evaluated
    return BetaResult(beta=beta, he_coeffs=beta.copy(), method=method, lambda_residual=res,
                      eigen_residual=float("nan"), alpha_target=np.array(target),
                      labels=spec.labels, gamma=gamma, eigenvectors=vecs, iterations=it)


def beta_by_shooting(spec: LieAlgebraSpec, alpha_target, beta0=None, ftol: float = 1e-12,
                     tol: float = LAMBDA_TOL, _corrector: bool = False) -> BetaResult:
    """Solve ``alpha(1; beta) = alpha_target`` by damped Newton (seed ``alpha_target``).

    ``he_coeffs`` of the result is ``beta`` itself; divide by the period with
    :func:`effective_hamiltonian`.
    """
    target = np.asarray(alpha_target, dtype=float)
    if not np.all(np.isfinite(target)):
        raise ValueError("alpha_target must be finite")
    x0 = target if beta0 is None else np.asarray(beta0, dtype=float)
    beta, res, it = _newton(spec, x0, np.eye(spec.n), target, ftol, tol, "shooting", _corrector)
    if _corrector:
        return _partial(spec, beta, target, "shooting", it, res)
    return _result(spec, beta, target, "shooting", it, tol)


@dataclass(frozen=True)
class EigenspaceResult:
    vectors: np.ndarray  # (n, m)
    nearest: complex  # eigenvalue of M_a^T closest to 1

    def __len__(self):
        return self.vectors.shape[1]


def _bottom_echelon(N: np.ndarray) -> np.ndarray:
    """Basis of span(N) whose vectors end in 1 at distinct trailing positions."""
    V = N.T.copy()  # rows are basis vectors
    m, n = V.shape
    used = []
    for r in range(m):
        sub = np.abs(V[r:, :])
        # pick the last column with a sizeable entry among the remaining rows
        col = None
        for c in range(n - 1, -1, -1):
            if c in used:
                continue
            if sub[:, c].max(initial=0) > 1e-10 * max(np.abs(V).max(), 1e-300):
                col = c
                break
        if col is None:
            break
        piv = r + int(np.argmax(np.abs(V[r:, col])))
        V[[r, piv]] = V[[piv, r]]
        V[r] /= V[r, col]
        for s in range(m):
            if s != r:
                V[s] -= V[s, col] * V[r]
        used.append(col)
    V[np.abs(V) < 1e-15] = 0.0
    order = np.argsort(used)
    return V[: len(used)][order].T


def unit_eigenvectors(spec: LieAlgebraSpec, alpha, tol: float = EIGEN_TOL) -> EigenspaceResult:
    """Eigenvalue-1 eigenspace of ``M_a(alpha)^T``.

    Extracted by singular-value thresholding of ``M_a^T - I`` (threshold
    ``tol * max(1, |M_a|)``); each vector is scaled so that its last
    nonvanishing component is 1.
    """
    Ma = m_a(spec, np.asarray(alpha, dtype=float))
    A = Ma.T - np.eye(spec.n)
    _, sv, vt = np.linalg.svd(A)
    thresh = tol * max(1.0, float(np.linalg.norm(Ma, 2)))
    null = vt[sv <= thresh].T
    eig = np.linalg.eigvals(Ma.T)
    nearest = complex(eig[int(np.argmin(np.abs(eig - 1)))])
    if null.shape[1] == 0:
        return EigenspaceResult(np.zeros((spec.n, 0)), nearest)
    return EigenspaceResult(_bottom_echelon(null), nearest)


def beta_by_eigenbasis(spec: LieAlgebraSpec, alpha_target, beta0=None, ftol: float = 1e-12,
                       tol: float = LAMBDA_TOL, accept_tol: float = 1e-8,
                       _corrector: bool = False) -> BetaResult:
    """Search ``beta = sum_k gamma_k rho_k`` in the eigenvalue-1 eigenspace.

    Gauss-Newton on the m coefficients; the full n-dimensional lambda-flow
    residual must meet ``accept_tol * (1 + |alpha_target|)`` or the result is
    rejected as "eigenspace insufficient".
    """
    target = np.asarray(alpha_target, dtype=float)
    eig = unit_eigenvectors(spec, target)
    R = eig.vectors
    if R.shape[1] == 0:
        raise RecombinationError(f"eigenbasis: M_a^T has no eigenvalue 1 "
                                 f"(nearest {eig.nearest:.6g})")
    seed = target if beta0 is None else np.asarray(beta0, dtype=float)
    g0 = np.linalg.lstsq(R, seed, rcond=None)[0]
    gamma, res, it = _newton(spec, g0, R, target, ftol, tol, "eigenbasis", _corrector)
    beta = R @ gamma
    if _corrector:
        return _partial(spec, beta, target, "eigenbasis", it, res, gamma, R)
    scale = 1 + np.max(np.abs(target))
    if res > accept_tol * scale:
        raise RecombinationError(
            f"eigenspace insufficient: reduced problem converged with full residual {res:.3e}", res)
    notes = []
    if res > ftol * scale:
        # the computed eigenvectors carry rounding error, which leaves a residual floor
        # in their span; finish with full-space Newton steps from the reduced root
        try:
            full, res_full, it_full = _newton(spec, beta, np.eye(spec.n), target, ftol, tol,
                                              "eigenbasis")
        except RecombinationError:
            res_full = np.inf
        if res_full < res:
            notes.append(f"eigenbasis root refined in the full space ({res:.1e} -> {res_full:.1e})")
            beta, it = full, it + it_full
            gamma = np.linalg.lstsq(R, beta, rcond=None)[0]
    return _result(spec, beta, target, "eigenbasis", it, tol, gamma=gamma, vecs=R, notes=notes)


def recombine(traj: AlphaTrajectory, method: str = "eigenbasis", checkpoints: int = 4,
              tol: float = LAMBDA_TOL, min_fraction: float = 2.0**-12) -> BetaResult:
    """beta(T) by adaptive continuation along the alpha trajectory.

    The interval ``(0, T]`` starts out split into ``checkpoints`` steps.  Each
    checkpoint is seeded along the tangent ``d beta/dt = J^-1 alpha_dot``
    (J the lambda-flow Jacobian at the previous root), so the result follows
    the continuous branch of the logarithm.  A failed solve, or
    one that lands far from its predictor, halves the step (down to
    ``min_fraction * T``); after a success the step is rescaled so the
    corrector move stays near ``JUMP_TARGET``.  With
    ``method="eigenbasis"`` a failing reduced solve falls back to shooting.
    """
    if method not in ("eigenbasis", "shooting"):
        raise ValueError(f"unknown recombination method {method!r}")
    if checkpoints < 1:
        raise ValueError("checkpoints must be >= 1")
    spec, T = traj.spec, traj.T
    notes: list[str] = []
    ts: list[float] = [0.0]
    history: list[np.ndarray] = [np.zeros(spec.n)]
    # d beta/dt at beta = 0: the lambda-flow Jacobian is the identity there
    slopes: list[np.ndarray | None] = [traj.derivative(0.0)]
    last_dim = None
    h = T / checkpoints
    h_min = min_fraction * T
    while True:
        t_prev = ts[-1]
        t = min(t_prev + h, T)
        final = t >= T * (1 - 1e-14)
        if final:
            t = T
        target = traj.alpha_T if final else traj(t)
        if slopes[-1] is not None:
            seed = history[-1] + (t - t_prev) * slopes[-1]
        else:
            seed = target
        local: list[str] = []
        try:
            result = _solve_checkpoint(spec, target, seed, method, tol, local, t, False)
            jump = float(np.max(np.abs(result.beta - seed))) / (1.0 + float(np.max(np.abs(seed))))
            if t_prev > 0 and jump > JUMP_FRACTION:
                raise RecombinationError(f"branch jump of size {jump:.3e}")
            if final:
                # polish the tracked root at full accuracy
                result = _solve_checkpoint(spec, target, result.beta, method, tol, local, t, True)
        except RecombinationError as exc:
            if h / 2 < h_min:
                raise RecombinationError(
                    f"continuation stalled at t = {t:.6g} (step {h:.3e}): {exc}",
                    exc.best_residual) from exc
            h /= 2
            continue
        notes.extend(local)
        if result.eigenspace_dim is not None and result.eigenspace_dim != last_dim:
            if last_dim is not None:
                notes.append(f"eigenspace dimension {last_dim} -> {result.eigenspace_dim} "
                             f"at t = {t:.6g}")
            last_dim = result.eigenspace_dim
        ts.append(t)
        history.append(result.beta)
        slopes.append(None if final else _tangent(spec, traj, t, result.beta))
        if final:
            notes.extend(result.diagnostics)
            notes.append(f"continuation used {len(ts) - 1} checkpoints")
            return BetaResult(**{**result.__dict__, "diagnostics": tuple(notes)})
        # aim for corrector moves of about JUMP_TARGET on the next step
        grow = 2.0 if jump == 0 else float(np.clip(np.sqrt(JUMP_TARGET / jump), 0.5, 2.0))
        h = min(max(grow * h, h_min), T)


def _tangent(spec, traj, t, beta):
    """``d beta/dt`` from ``J(beta) beta_dot = alpha_dot(t)``; None if J is singular."""
    try:
        _, J = _fd_jacobian(spec, np.asarray(beta, dtype=float), np.eye(spec.n),
                            np.zeros(spec.n), 1e-9)
        return np.linalg.solve(J, traj.derivative(t))
    except (RecombinationError, np.linalg.LinAlgError):
        return None


def _solve_checkpoint(spec, target, seed, method, tol, notes, t, final):
    # intermediate checkpoints only track the branch
    kwargs = dict(ftol=1e-12, tol=tol) if final else dict(ftol=1e-9, tol=max(tol, 1e-8),
                                                           _corrector=True)
    if method == "eigenbasis":
        try:
            return beta_by_eigenbasis(spec, target, seed, **kwargs)
        except RecombinationError as exc:
            notes.append(f"eigenbasis failed at t = {t:.6g} ({exc}); used shooting")
    return beta_by_shooting(spec, target, seed, **kwargs)


def effective_hamiltonian(result: BetaResult, T: float) -> dict[str, float]:
    """H_e = beta(T) . h / T as ``{basis label: coefficient}``."""
    return {label: float(b) / T for label, b in zip(result.labels, result.beta)}


def reduce_quadratic_form(spec: LieAlgebraSpec, he_coeffs, recipe):
    """Apply the conjugations of ``recipe`` (``ReductionStep`` sequence) in order.

    Returns the transformed coefficients and the list of ``(generator,
    parameter)`` pairs used.  Each parameter is computed from the current
    coefficients.
    """
    coeffs = np.asarray(he_coeffs, dtype=float).copy()
    applied = []
    for step in recipe:
        den = coeffs[step.denominator - 1]
        if den == 0.0:
            raise ZeroDivisionError(
                f"reduction needs a nonzero coefficient of {spec.labels[step.denominator - 1]}"
                f" (index {step.denominator})")
        theta = step.factor * coeffs[step.numerator - 1] / den
        coeffs = transform_coefficients(spec, coeffs, step.generator, theta)
        applied.append((step.generator, float(theta)))
    return coeffs, applied
