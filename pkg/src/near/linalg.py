"""Dense singular values, Shannon entropy and effective rank.

Matrices are plain 2-D ``numpy`` float arrays.  Singular values come from
LAPACK (``gesdd``: Golub-Kahan bidiagonalisation) by default, or from a
one-sided (Hestenes) Jacobi iteration on request: columns are orthogonalised
pairwise by plane rotations until every pair is numerically orthogonal, after
which the column norms are the singular values.  Jacobi computes small
singular values to high relative accuracy, which matters for strongly graded
spectra; LAPACK is accurate relative to the largest value, which is enough
once values below :data:`RANK_FLOOR` are clamped, and is far faster.

Each Jacobi sweep visits all column pairs in round-robin tournament order, so
a round consists of ``n // 2`` disjoint pairs which are rotated together with
vectorised numpy operations.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidDistribution, NonFiniteInput, ZeroMatrix

#: Singular values below ``RANK_FLOOR * sigma_max`` are treated as exact zeros.
RANK_FLOOR = 1e-12

SVD_METHODS = ("lapack", "jacobi")

_MAX_SWEEPS = 80


def as_matrix(m) -> np.ndarray:
    """Validate ``m`` as a non-empty finite 2-D array and return it as float64."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"matrix must have at least one row and column, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput("matrix contains NaN or Inf entries")
    return a


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pair schedule covering every unordered pair of ``range(n)`` once.

    Circle method: with ``n`` padded to even, ``n - 1`` rounds of ``n / 2``
    disjoint pairs.  The padding index (if any) is dropped.
    """
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p, q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                p.append(min(a, b))
                q.append(max(a, b))
        if p:
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _jacobi_column_norms(a: np.ndarray) -> np.ndarray:
    """Orthogonalise the columns of ``a`` (m >= n) in place; return column norms."""
    m, n = a.shape
    if n == 1:
        return np.array([np.linalg.norm(a[:, 0])])
    tol = m * np.finfo(np.float64).eps
    rounds = _round_robin(n)
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p, q in rounds:
            ap = a[:, p]
            aq = a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            active = np.abs(gamma) > tol * np.sqrt(alpha * beta)
            if not active.any():
                continue
            rotated = True
            p, q = p[active], q[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            # |zeta| may overflow to inf for nearly orthogonal pairs; t -> 0 then.
            with np.errstate(over="ignore", divide="ignore"):
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap = a[:, p]
            aq = a[:, q]
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
        if not rotated:
            break
    return np.sqrt(np.einsum("ij,ij->j", a, a))


def singular_values(m, method: str = "lapack") -> np.ndarray:
    """All ``min(rows, cols)`` singular values of ``m`` in non-increasing order.

    ``method`` is ``"lapack"`` or ``"jacobi"``.

    Raises:
        NonFiniteInput: if ``m`` contains NaN or Inf.
    """
    if method not in SVD_METHODS:
        raise ValueError(f"unknown SVD method {method!r}; expected one of {SVD_METHODS}")
    a = as_matrix(m)
    if a.shape[0] < a.shape[1]:
        a = a.T
    if method == "lapack":
        return np.linalg.svd(a, compute_uv=False)
    work = np.array(a, dtype=np.float64, order="F", copy=True)
    # A norm-preserving rescale keeps squared column norms away from overflow.
    scale = np.max(np.abs(work))
    if scale == 0.0:
        return np.zeros(work.shape[1])
    work /= scale
    sv = _jacobi_column_norms(work) * scale
    return np.sort(sv)[::-1]


def shannon_entropy(p) -> float:
    """Shannon entropy in nats, with ``0 * log 0 = 0``.

    Raises:
        InvalidDistribution: on negative entries or a sum off 1 by more than 1e-12.
    """
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise InvalidDistribution("empty distribution")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidDistribution("probabilities must be finite and non-negative")
    total = math.fsum(p)
    if abs(total - 1.0) > 1e-12:
        raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
    nz = p[p > 0]
    h = -math.fsum(nz * np.log(nz))
    # Round-off can push a point mass slightly negative.
    return max(h, 0.0)


def spectrum_distribution(sv) -> np.ndarray:
    """Normalise a singular spectrum to a probability vector, flooring the tail."""
    sv = np.asarray(sv, dtype=np.float64)
    top = sv.max() if sv.size else 0.0
    if top <= 0.0:
        raise ZeroMatrix("all singular values are zero")
    sv = np.where(sv < RANK_FLOOR * top, 0.0, sv)
    p = sv / math.fsum(sv)
    # Renormalise once more so the sum is within an ulp or two of 1.
    return p / math.fsum(p)


def effective_rank_from_singular_values(sv) -> float:
    p = spectrum_distribution(sv)
    r = math.exp(shannon_entropy(p))
    return min(max(r, 1.0), float(len(p)))


def effective_rank(m, method: str = "lapack") -> float:
    """``exp`` of the entropy of the normalised singular values of ``m``.

    The result lies in ``[1, min(rows, cols)]``.

    Raises:
        ZeroMatrix: if every singular value is zero.
    """
    return effective_rank_from_singular_values(singular_values(m, method))
