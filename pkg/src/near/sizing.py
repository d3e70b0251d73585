"""Layer-size estimation for multi-layer perceptrons.

The swept layer is scored alone for a range of widths ``n``; the relative
score ``score(n) / n`` is fitted by ``f(n) = alpha + beta * n**gamma``, and the
chosen width is the first ``n`` at which ``|f'(n)|`` has dropped to a given
fraction of ``|f'(1)|``.  Hidden layers are sized one after another, each
sweep running on top of the layers already fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FitDegenerate, InsufficientSamples, NearError, NoThreshold, SweepError
from .netdef import Dense, ModelSpec
from .scoring import DEFAULT_REPETITIONS, score_repetitions

DEFAULT_FRACTION = 0.005

#: gamma grid for :func:`fit_power`: -3.000, -2.995, ..., 0.990
GAMMA_GRID = np.round(np.arange(-600, 199) * 0.005, 3)


@dataclass
class SweepPoint:
    size: int
    mean_score: float
    relative_score: float


@dataclass
class SizeSweep:
    layer_index: int
    points: list[SweepPoint]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([p.size for p in self.points], dtype=np.float64)

    @property
    def relative(self) -> np.ndarray:
        return np.array([p.relative_score for p in self.points], dtype=np.float64)


@dataclass
class PowerFit:
    alpha: float
    beta: float
    gamma: float
    sse: float

    def __call__(self, n):
        return self.alpha + self.beta * np.asarray(n, dtype=np.float64) ** self.gamma

    def slope(self, n):
        return self.beta * self.gamma * np.asarray(n, dtype=np.float64) ** (self.gamma - 1.0)


@dataclass
class LayerSizing:
    layer_index: int
    sweep: SizeSweep
    fit: PowerFit
    size: int
    extrapolated: bool


@dataclass
class SizingReport:
    fraction: float
    layers: list[LayerSizing] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [layer.size for layer in self.layers]

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "sizes": self.sizes,
            "layers": [
                {
                    "index": ls.layer_index,
                    "size": ls.size,
                    "extrapolated": ls.extrapolated,
                    "fit": {"alpha": ls.fit.alpha, "beta": ls.fit.beta,
                            "gamma": ls.fit.gamma, "sse": ls.fit.sse},
                    "points": [
                        {"size": p.size, "mean_score": p.mean_score, "relative_score": p.relative_score}
                        for p in ls.sweep.points
                    ],
                }
                for ls in self.layers
            ],
        }


def default_candidates(input_dim: int, count: int = 16) -> list[int]:
    """``count`` log-spaced integer sizes from 4 to ``4 * input_dim`` (duplicates dropped)."""
    hi = max(4 * input_dim, 5)
    sizes = np.unique(np.round(np.geomspace(4, hi, count)).astype(int))
    return [int(s) for s in sizes]


def _check_candidates(candidate_sizes: Sequence[int]) -> list[int]:
    sizes = [int(s) for s in candidate_sizes]
    if not sizes:
        raise ValueError("candidate_sizes is empty")
    if any(s < 2 for s in sizes):
        raise ValueError("candidate sizes must be >= 2")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"candidate sizes must be strictly increasing, got {sizes}")
    return sizes


def sweep_layer(template: ModelSpec, layer_index: int, candidate_sizes: Sequence[int], data,
                repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                svd_method: str = "lapack") -> SizeSweep:
    """Score Dense layer ``layer_index`` alone at each candidate width.

    Layers after ``layer_index`` are dropped; the swept layer keeps the hidden
    activation.  Only the swept layer's ``erank(Z) + erank(H)`` enters the
    score.

    Raises:
        SweepError: wrapping any scoring failure, with the offending size.
    """
    sizes = _check_candidates(candidate_sizes)
    if not isinstance(template.layers[layer_index], Dense):
        raise ValueError(f"layer {layer_index} is not Dense")
    points = []
    for n in sizes:
        spec = template.with_width(layer_index, n).truncated(layer_index)
        try:
            er = score_repetitions(spec, data, repetitions, seed, svd_method)
        except NearError as err:
            raise SweepError(layer_index, n, err) from err
        layer_score = float(er[:, -1, :].sum(axis=1).mean())
        points.append(SweepPoint(n, layer_score, layer_score / n))
    return SizeSweep(layer_index, points)


def fit_power(sweep: SizeSweep | tuple) -> PowerFit:
    """Least-squares fit of ``alpha + beta * n**gamma`` to the relative scores.

    ``gamma`` is searched on :data:`GAMMA_GRID`; for each ``gamma`` the
    linear parameters come from the 2x2 normal equations.  ``gamma = 0`` is
    skipped since ``n**0`` is collinear with the intercept.  ``sweep`` may
    also be a ``(sizes, relative_scores)`` pair.

    Raises:
        FitDegenerate: with fewer than 4 points or constant relative scores.
    """
    if isinstance(sweep, SizeSweep):
        n, y = sweep.sizes, sweep.relative
    else:
        n, y = (np.asarray(v, dtype=np.float64) for v in sweep)
    if n.size < 4:
        raise FitDegenerate(f"need at least 4 sweep points, got {n.size}")
    if np.ptp(y) <= 1e-10:
        raise FitDegenerate("relative scores are constant; the exponent is unidentifiable")
    best = None
    ybar = y.mean()
    logn = np.log(n)
    for gamma in GAMMA_GRID:
        if gamma == 0.0:
            continue
        x = np.exp(gamma * logn)
        xbar = x.mean()
        dx = x - xbar
        sxx = dx @ dx
        if sxx <= 0.0:
            continue
        beta = (dx @ (y - ybar)) / sxx
        alpha = ybar - beta * xbar
        r = y - alpha - beta * x
        sse = float(r @ r)
        if best is None or sse < best[3]:
            best = (float(alpha), float(beta), float(gamma), sse)
    if best is None:
        raise FitDegenerate("no grid exponent gave a well-posed fit")
    return PowerFit(*best)


def threshold_size(fit: PowerFit, fraction: float = DEFAULT_FRACTION) -> int:
    """Smallest integer ``n >= 1`` with ``|f'(n)| <= fraction * |f'(1)|``.

    With ``f'(n) = beta * gamma * n**(gamma - 1)`` this is
    ``ceil(fraction ** (1 / (gamma - 1)))``, independent of alpha and beta.

    Raises:
        NoThreshold: if ``gamma >= 1`` (the slope never decays).
    """
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if fit.gamma >= 1:
        raise NoThreshold(f"gamma = {fit.gamma} >= 1: slope does not decay")
    if fit.beta == 0 or fit.gamma == 0:
        raise NoThreshold("fit is flat (beta * gamma = 0)")
    exponent = fit.gamma - 1.0
    # the relative slack absorbs pow round-off at exact integers, e.g. 0.25 ** -0.5
    return max(1, math.ceil(fraction ** (1.0 / exponent) * (1 - 1e-12)))


def hidden_layers(spec: ModelSpec) -> list[int]:
    """Indices of Dense layers followed by another Dense layer."""
    layers = spec.layers
    return [i for i in range(len(layers) - 1)
            if isinstance(layers[i], Dense) and isinstance(layers[i + 1], Dense)]


def estimate_layer_sizes(template: ModelSpec, data, candidate_sizes: Sequence[int] | None = None,
                         repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
                         fraction: float = DEFAULT_FRACTION, svd_method: str = "lapack") -> SizingReport:
    """Size every hidden layer of ``template`` in order: sweep, fit, threshold, freeze.

    ``candidate_sizes`` defaults to :func:`default_candidates` of the input
    dimension.  Widths above the largest candidate are returned as computed
    and flagged ``extrapolated``.

    Raises:
        InsufficientSamples: if a frozen layer is wider than the dataset, so
            the following layer cannot be scored.
    """
    hidden = hidden_layers(template)
    if not hidden:
        raise ValueError("template has no hidden Dense layers")
    if candidate_sizes is None:
        candidate_sizes = default_candidates(template.input_dim)
    candidates = _check_candidates(candidate_sizes)
    report = SizingReport(fraction)
    spec = template
    n_samples = np.shape(data)[0]
    for k, idx in enumerate(hidden):
        if k and report.layers[-1].size > n_samples:
            prev = report.layers[-1]
            raise InsufficientSamples(
                f"layer {prev.layer_index} was sized at {prev.size:.4g} units (gamma = {prev.fit.gamma}), "
                f"more than the {n_samples} samples needed to sweep layer {idx}")
        sweep = sweep_layer(spec, idx, candidates, data, repetitions, seed, svd_method)
        try:
            fit = fit_power(sweep)
            size = threshold_size(fit, fraction)
        except NearError as err:
            raise type(err)(f"layer {idx}: {err}") from err
        report.layers.append(LayerSizing(idx, sweep, fit, size, size > candidates[-1]))
        spec = spec.with_width(idx, size)
    return report
