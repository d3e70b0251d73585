"""Rank statistics for judging proxy scores against accuracies."""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateSample, InconsistentMethods


def _paired(scores, accuracies) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(accuracies, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} scores vs {y.size} accuracies")
    if x.size < 2:
        raise ValueError("need at least two paired observations")
    if np.isnan(x).any() or np.isnan(y).any():
        raise ValueError("NaN in paired sample")
    return x, y


def _require_varying(x, y):
    if np.all(x == x[0]):
        raise DegenerateSample("scores are constant")
    if np.all(y == y[0]):
        raise DegenerateSample("accuracies are constant")


def average_ranks(values) -> np.ndarray:
    """1-based ascending ranks; tied values share the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size, dtype=np.float64)
    start = 0
    for end in range(1, v.size + 1):
        if end == v.size or sv[end] != sv[start]:
            ranks[order[start:end]] = (start + end + 1) / 2.0
            start = end
    return ranks


def spearman_rho(scores, accuracies) -> float:
    """Pearson correlation of the average ranks of both lists.

    Raises:
        DegenerateSample: if either list is constant.
    """
    x, y = _paired(scores, accuracies)
    _require_varying(x, y)
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    return min(1.0, max(-1.0, rho))


def _merge_count(values: list) -> int:
    """Number of inversions (pairs ``i < j`` with ``values[j] < values[i]``) via bottom-up merge sort."""
    a = list(values)
    n = len(a)
    buf = a[:]
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    swaps += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] if i < mid else a[j:hi]
        a, buf = buf, a
        width *= 2
    return swaps


def _tied_pairs(sorted_values) -> int:
    total = 0
    run = 1
    for prev, cur in zip(sorted_values, sorted_values[1:]):
        if cur == prev:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    return total + run * (run - 1) // 2


def kendall_tau(scores, accuracies) -> float:
    """Kendall's tau-b in O(n log n).

    Pairs are sorted by ``(score, accuracy)``; discordant pairs are the
    inversions of the accuracy sequence, counted during a merge sort.  Tie
    corrections use the pair counts tied in score, in accuracy, and in both.

    Raises:
        DegenerateSample: if either list is constant.
    """
    x, y = _paired(scores, accuracies)
    _require_varying(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs = x[order].tolist()
    ys = y[order].tolist()
    n0 = n * (n - 1) // 2
    n1 = _tied_pairs(xs)
    # pairs tied in both: runs of equal (x, y) in the lexsorted order
    both = 0
    run = 1
    for i in range(1, n):
        if xs[i] == xs[i - 1] and ys[i] == ys[i - 1]:
            run += 1
        else:
            both += run * (run - 1) // 2
            run = 1
    both += run * (run - 1) // 2
    discordant = _merge_count(ys)
    n2 = _tied_pairs(sorted(ys))
    concordant_minus_discordant = n0 - n1 - n2 + both - 2 * discordant
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    tau = concordant_minus_discordant / denom
    return min(1.0, max(-1.0, tau))


def pairwise_win_probability(scores, accuracies, pairs: int = 1_000_000, seed: int = 0,
                             batch: int = 1 << 18) -> float:
    """Monte-Carlo estimate of P(score_a > score_b | accuracy_a > accuracy_b).

    Ordered pairs of distinct networks are drawn uniformly; pairs with equal
    accuracies are discarded and redrawn.  Equal scores count as a loss.

    Raises:
        DegenerateSample: if all accuracies are equal.
    """
    x, y = _paired(scores, accuracies)
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    if np.all(y == y[0]):
        raise DegenerateSample("accuracies are constant")
    n = x.size
    gen = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))
    wins = 0
    got = 0
    while got < pairs:
        i = gen.integers(n, size=batch)
        j = gen.integers(n - 1, size=batch)
        j += j >= i  # uniform over j != i
        keep = y[i] != y[j]
        i, j = i[keep], j[keep]
        take = min(pairs - got, i.size)
        i, j = i[:take], j[:take]
        better_i = y[i] > y[j]
        hi = np.where(better_i, i, j)
        lo = np.where(better_i, j, i)
        wins += int(np.count_nonzero(x[hi] > x[lo]))
        got += take
    return wins / pairs


def average_rank(tables: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Mean rank of each method across tables; rank 1 is the highest correlation.

    Ties within a table share the mean of their rank positions.

    Raises:
        InconsistentMethods: if the tables do not all list the same methods.
    """
    if not tables:
        raise ValueError("no tables")
    methods = sorted(tables[0])
    for t in tables[1:]:
        if sorted(t) != methods:
            raise InconsistentMethods(f"method sets differ: {methods} vs {sorted(t)}")
    totals = dict.fromkeys(methods, 0.0)
    for t in tables:
        ranks = average_ranks([-t[m] for m in methods])
        for m, r in zip(methods, ranks):
            totals[m] += r
    return {m: totals[m] / len(tables) for m in methods}
