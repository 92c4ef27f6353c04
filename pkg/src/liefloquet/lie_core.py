"""Finite Lie algebras given by structure constants, and their adjoint action.

Conventions (hbar = 1)::

    [h_i, h_j] = i * sum_k c[i, j, k] h_k
    U_k = exp(i alpha_k h_k),   U_k h U_k^dagger = M_k h,   M_k = exp(-alpha_k Q_k)

with ``(Q_k)[i, j] = c[k, i, j]``.  Indices are 1-based in the public API and in
stored entries, 0-based for numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AlgebraError",
    "LieAlgebraSpec",
    "ValidationReport",
    "Violation",
    "validate_algebra",
    "expm",
    "q_matrix",
    "q_stack",
    "m_matrix",
    "m_stack",
    "m_a",
    "nu_matrix",
    "adjoint_rep",
    "AdjointRep",
    "transform_coefficients",
    "commutator_residual",
]


class AlgebraError(ValueError):
    """Malformed structure-constant input (conflicting or non-finite entries)."""


@dataclass(frozen=True)
class LieAlgebraSpec:
    """Lie algebra of dimension ``n`` declared by sparse structure constants.

    ``constants`` holds ``(i, j, k, c)`` tuples with 1-based indices.  An entry
    implies its antisymmetric partner ``(j, i, k, -c)`` unless the partner is
    given explicitly; explicit partners are kept verbatim so that
    :func:`validate_algebra` can report inconsistencies.
    """

    n: int
    constants: tuple[tuple[int, int, int, float], ...] = ()
    labels: tuple[str, ...] = ()
    rep: tuple[np.ndarray, ...] | None = None
    _tensor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise AlgebraError(f"algebra dimension must be a positive integer, got {self.n!r}")
        entries = tuple((int(i), int(j), int(k), float(c)) for i, j, k, c in self.constants)
        object.__setattr__(self, "constants", entries)
        labels = tuple(self.labels) if self.labels else tuple(f"h{k + 1}" for k in range(self.n))
        if len(labels) != self.n:
            raise AlgebraError(f"expected {self.n} labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)
        if self.rep is not None:
            rep = tuple(np.asarray(r, dtype=complex) for r in self.rep)
            if len(rep) != self.n:
                raise AlgebraError(f"representation needs {self.n} matrices, got {len(rep)}")
            d = rep[0].shape
            if len(d) != 2 or d[0] != d[1] or any(r.shape != d for r in rep):
                raise AlgebraError("representation matrices must be square and of equal size")
            object.__setattr__(self, "rep", rep)
        object.__setattr__(self, "_tensor", _build_tensor(self.n, entries))

    @property
    def structure_tensor(self) -> np.ndarray:
        """Dense ``(n, n, n)`` array ``c[i, j, k]`` (0-based), read-only."""
        return self._tensor

    @property
    def c_max(self) -> float:
        return float(np.max(np.abs(self._tensor), initial=0.0))

    def with_rep(self, rep: Sequence[np.ndarray] | None) -> "LieAlgebraSpec":
        return LieAlgebraSpec(self.n, self.constants, self.labels, None if rep is None else tuple(rep))


def _build_tensor(n: int, entries: Iterable[tuple[int, int, int, float]]) -> np.ndarray:
    explicit: dict[tuple[int, int, int], float] = {}
    for i, j, k, c in entries:
        for idx in (i, j, k):
            if not 1 <= idx <= n:
                raise AlgebraError(f"index {idx} out of range 1..{n} in entry {(i, j, k, c)}")
        if not math.isfinite(c):
            raise AlgebraError(f"non-finite structure constant at {(i, j, k)}: {c}")
        key = (i, j, k)
        if key in explicit and explicit[key] != c:
            raise AlgebraError(
                f"conflicting duplicate entries for c{key}: {explicit[key]} and {c}"
            )
        explicit[key] = c
    tensor = np.zeros((n, n, n))
    for (i, j, k), c in explicit.items():
        tensor[i - 1, j - 1, k - 1] = c
        if (j, i, k) not in explicit:
            tensor[j - 1, i - 1, k - 1] = -c
    tensor.setflags(write=False)
    return tensor


@dataclass(frozen=True)
class Violation:
    kind: str  # "antisymmetry" | "jacobi" | "representation"
    indices: tuple[int, ...]  # 1-based
    residual: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    jacobi_max: float
    rep_max: float | None

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "pass"
        lines = [f"fail ({len(self.violations)} violations)"]
        for v in self.violations[:20]:
            lines.append(f"  {v.kind} at {v.indices}: residual {v.residual:.3e}")
        if len(self.violations) > 20:
            lines.append(f"  ... {len(self.violations) - 20} more")
        return "\n".join(lines)


def commutator_residual(c: np.ndarray, rep: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise max of ``[R_i, R_j] - i sum_k c_ijk R_k`` for every pair, shape (n, n)."""
    R = np.asarray(rep, dtype=complex)
    comm = np.einsum("iab,jbc->ijac", R, R) - np.einsum("jab,ibc->ijac", R, R)
    target = 1j * np.einsum("ijk,kab->ijab", c, R)
    return np.max(np.abs(comm - target), axis=(2, 3))


def validate_algebra(spec: LieAlgebraSpec, jacobi_tol: float = 1e-12,
                     rep_tol: float = 1e-10) -> ValidationReport:
    """Check antisymmetry, the Jacobi identity and (if present) the representation.

    The Jacobi tolerance is relative to the square of the largest constant, the
    representation tolerance to the square of the largest matrix entry.
    """
    c = spec.structure_tensor
    violations: list[Violation] = []

    asym = np.abs(c + c.transpose(1, 0, 2))
    for i, j, k in zip(*np.nonzero(asym > 0.0)):
        if i <= j:
            violations.append(Violation("antisymmetry", (i + 1, j + 1, k + 1), float(asym[i, j, k])))

    # J[i,j,k,l] = sum_m c_ijm c_mkl + c_jkm c_mil + c_kim c_mjl
    cc = np.einsum("ijm,mkl->ijkl", c, c)
    jac = cc + cc.transpose(1, 2, 0, 3) + cc.transpose(2, 0, 1, 3)
    jac_abs = np.abs(jac)
    jacobi_max = float(jac_abs.max(initial=0.0))
    tol = jacobi_tol * max(spec.c_max, 1.0) ** 2
    seen = set()
    for i, j, k, l in zip(*np.nonzero(jac_abs > tol)):
        key = (tuple(sorted((i, j, k))), l)
        if key in seen:
            continue
        seen.add(key)
        violations.append(Violation("jacobi", (i + 1, j + 1, k + 1, l + 1), float(jac_abs[i, j, k, l])))

    rep_max = None
    if spec.rep is not None:
        res = commutator_residual(c, spec.rep)
        rep_max = float(res.max())
        scale = max(1.0, max(float(np.max(np.abs(r))) for r in spec.rep)) ** 2
        for i, j in zip(*np.nonzero(res > rep_tol * scale)):
            if i < j:
                violations.append(Violation("representation", (i + 1, j + 1), float(res[i, j])))
    return ValidationReport(tuple(violations), jacobi_max, rep_max)


# -- matrix exponential -------------------------------------------------------

_SQUARING_THRESHOLD = 0.5
_SERIES_TOL = 1e-16
_MAX_TERMS = 30


def expm(A: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square matrix or a stack ``(..., d, d)``.

    Scaling and squaring: each matrix is scaled by ``2**-s`` until its
    infinity norm is at most 0.5, the Taylor series is summed until the next
    term drops below 1e-16 relative, and the result is squared ``s`` times.
    Raises :class:`OverflowError` if the result is not finite.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expm needs square matrices, got shape {A.shape}")
    batch = A.shape[:-2]
    d = A.shape[-1]
    X = A.reshape((-1, d, d))
    norms = np.max(np.sum(np.abs(X), axis=-1), axis=-1)
    if not np.all(np.isfinite(norms)):
        raise OverflowError("matrix exponential of a non-finite matrix")
    with np.errstate(divide="ignore"):
        s = np.where(norms > _SQUARING_THRESHOLD,
                     np.ceil(np.log2(np.maximum(norms, 1e-300) / _SQUARING_THRESHOLD)), 0.0)
    s = s.astype(int)
    Xs = X / np.ldexp(1.0, s)[:, None, None]

    eye = np.broadcast_to(np.eye(d, dtype=X.dtype), Xs.shape)
    result = eye + Xs
    term = Xs
    for k in range(2, _MAX_TERMS):
        term = term @ Xs / k
        result = result + term
        if np.max(np.abs(term)) <= _SERIES_TOL * np.max(np.abs(result)):
            break

    smax = int(s.max(initial=0))
    if smax:
        with np.errstate(over="ignore", invalid="ignore"):
            for level in range(smax):
                sq = result @ result
                result = np.where((s > level)[:, None, None], sq, result)
    if not np.all(np.isfinite(result)):
        raise OverflowError(
            f"matrix exponential overflowed (largest scaled norm {float(norms.max()):.3e})"
        )
    return result.reshape(batch + (d, d))


# -- adjoint machinery --------------------------------------------------------

def q_stack(spec: LieAlgebraSpec) -> np.ndarray:
    """All ``Q_k`` at once, shape ``(n, n, n)`` with ``[k, i, j] = c[k, i, j]``."""
    return spec.structure_tensor


def q_matrix(spec: LieAlgebraSpec, k: int) -> np.ndarray:
    """``Q_k`` for a 1-based generator index ``k``: ``(Q_k)[i, j] = c[k, i, j]``.

    Row ``i`` of ``-Q_k`` is the infinitesimal change of ``h_i`` under
    conjugation by ``exp(i alpha h_k)``.
    """
    if not 1 <= k <= spec.n:
        raise IndexError(f"generator index {k} out of range 1..{spec.n}")
    return np.array(spec.structure_tensor[k - 1])


def m_matrix(spec: LieAlgebraSpec, k: int, alpha_k: float) -> np.ndarray:
    """``M_k = exp(-alpha_k Q_k)``, the action of ``U_k`` on the basis vector ``h``."""
    return expm(-float(alpha_k) * q_matrix(spec, k))


def _series_tables(spec: LieAlgebraSpec):
    cached = spec.__dict__.get("_series_cache")
    if cached is None:
        Q = spec.structure_tensor
        n = spec.n
        powers = np.empty((_MAX_TERMS, n, n, n))
        powers[0] = np.eye(n)
        for j in range(1, _MAX_TERMS):
            powers[j] = powers[j - 1] @ Q
        norms = np.max(np.sum(np.abs(Q), axis=-1), axis=-1)
        # nilpotent Q_k: the series terminates, so no scaling is needed
        level = 1e-14 * np.maximum(norms, 1e-300)[:, None] ** np.arange(_MAX_TERMS)
        vanished = np.max(np.abs(powers), axis=(-2, -1)).T <= level  # (k, j)
        nilpotent = vanished[:, n] if n < _MAX_TERMS else np.zeros(n, bool)
        for k in np.flatnonzero(nilpotent):
            first = int(np.argmax(vanished[k]))
            powers[first:, k] = 0.0
        norms = np.where(nilpotent, 0.0, norms)
        factorial = np.cumprod(np.r_[1.0, np.arange(1, _MAX_TERMS)])
        # (k, j, a*b) for a single matmul against the series coefficients
        cached = (powers.transpose(1, 0, 2, 3).reshape(n, _MAX_TERMS, n * n)[:, :20].copy(),
                  norms, factorial[:20])
        object.__setattr__(spec, "_series_cache", cached)
    return cached


def m_stack(spec: LieAlgebraSpec, alpha: np.ndarray) -> np.ndarray:
    """``M_k(alpha_k)`` for every k; ``alpha`` shape ``(..., n)`` -> ``(..., n, n, n)``.

    Same scaling-and-squaring scheme as :func:`expm`, with the powers of each
    ``Q_k`` tabulated once per algebra.
    """
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(alpha)):
        raise OverflowError("non-finite transformation parameters")
    powers, qnorms, factorial = _series_tables(spec)
    scaled_norm = np.abs(alpha) * qnorms
    with np.errstate(divide="ignore"):
        s = np.where(scaled_norm > _SQUARING_THRESHOLD,
                     np.ceil(np.log2(np.maximum(scaled_norm, 1e-300) / _SQUARING_THRESHOLD)), 0.0)
    s = s.astype(int)
    x = -alpha / np.ldexp(1.0, s)
    # |x| |Q| <= 0.5, so 0.5**j / j! bounds term j; 20 terms reach 1e-16
    n = spec.n
    xs = np.empty(x.shape + (20,))
    xs[..., 0] = 1.0
    xs[..., 1:] = x[..., None]
    coeff = np.cumprod(xs, axis=-1) / factorial  # x**j, much cheaper than a power ufunc
    out = (coeff[..., None, :] @ powers)[..., 0, :].reshape(alpha.shape + (n, n))
    smax = int(s.max(initial=0))
    for level in range(smax):
        sq = out @ out
        out = np.where((s > level)[..., None, None], sq, out)
    if not np.all(np.isfinite(out)):
        raise OverflowError("transformation matrix overflowed")
    return out


def _products(Ms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``M_1 M_2 ... M_n`` and the suffix products ``M_{k+1} ... M_n``."""
    n = Ms.shape[-3]
    eye = np.broadcast_to(np.eye(Ms.shape[-1]), Ms.shape[:-3] + Ms.shape[-2:])
    suffix = [None] * n
    acc = eye
    for k in range(n - 1, -1, -1):
        suffix[k] = acc
        acc = Ms[..., k, :, :] @ acc
    return acc, np.stack(suffix, axis=-3)


def m_a(spec: LieAlgebraSpec, alpha: np.ndarray) -> np.ndarray:
    """Ordered product ``M_a = M_1 M_2 ... M_n``, so that ``U_A h U_A^dagger = M_a h``."""
    Ma, _ = _products(m_stack(spec, alpha))
    return Ma


def _nu_from_suffix(suffix: np.ndarray) -> np.ndarray:
    # row k of nu is row k of M_{k+1}...M_n, i.e. I_k M_{k+1}...M_n summed over k
    n = suffix.shape[-3]
    idx = np.arange(n)
    return suffix[..., idx, idx, :]


def nu_matrix(spec: LieAlgebraSpec, alpha: np.ndarray) -> np.ndarray:
    """``nu = I_1 M_2...M_n + I_2 M_3...M_n + ... + I_n``.

    With this ``nu`` the product form obeys ``alpha_dot^T nu = a^T M_a``; the
    factorization and lambda-flow therefore solve against ``nu^T``.
    """
    _, suffix = _products(m_stack(spec, alpha))
    return _nu_from_suffix(suffix)


def ma_and_nu(spec: LieAlgebraSpec, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(M_a, nu)`` from a single batch of matrix exponentials."""
    Ma, suffix = _products(m_stack(spec, alpha))
    return Ma, _nu_from_suffix(suffix)


def transform_coefficients(spec: LieAlgebraSpec, beta: np.ndarray, k: int,
                           alpha_k: float) -> np.ndarray:
    """Coefficients of ``U_k (beta . h) U_k^dagger``, i.e. ``M_k(alpha_k)^T beta``."""
    return m_matrix(spec, k, alpha_k).T @ np.asarray(beta, dtype=float)


@dataclass(frozen=True)
class AdjointRep:
    matrices: tuple[np.ndarray, ...]
    faithful: bool
    center: np.ndarray  # (n, r) orthonormal basis of the center, coefficient space

    @property
    def central_directions(self) -> list[np.ndarray]:
        return [self.center[:, r] for r in range(self.center.shape[1])]


def adjoint_rep(spec: LieAlgebraSpec, tol: float = 1e-12) -> AdjointRep:
    """Adjoint representation ``R_i = i X_i`` with ``(X_i)[k, j] = c[i, j, k]``.

    Faithful exactly when the center is trivial; the center is the common
    nullspace ``{z : sum_i z_i c[i, j, k] = 0 for all j, k}``.
    """
    c = spec.structure_tensor
    n = spec.n
    mats = tuple(1j * c[i].T.copy() for i in range(n))
    stacked = c.reshape(n, n * n).T  # rows (j,k), columns i
    if not np.any(stacked):
        center = np.eye(n)
    else:
        _, sv, vt = np.linalg.svd(stacked)
        rank = int(np.sum(sv > tol * sv[0]))
        center = vt[rank:].T
    return AdjointRep(mats, center.shape[1] == 0, center)
