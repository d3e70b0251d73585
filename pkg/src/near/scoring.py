"""NEAR score of an untrained network.

For every Dense or Conv2D layer a square pre-activation matrix ``Z`` and its
elementwise activation ``H`` are built from sample inputs, and the score is
the sum of their effective ranks over all layers.

Dense layer of width ``n``: one shared batch of ``max_width`` samples runs
through the network and the first ``n`` rows of the layer's pre-activations
form ``Z``.

Conv2D layer with ``C'`` filters: the ``C'`` feature maps of one input image
are flattened row-major into the columns of a ``(H'*W') x C'`` matrix and a
random block of ``C'`` contiguous rows starting inside the top row of the
maps is kept.  The first sample of the batch is used.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLayer, InsufficientSamples, TooManyChannels, ZeroMatrix
from .linalg import effective_rank
from .netdef import (
    STREAM_SAMPLES,
    Conv2D,
    Dense,
    Flatten,
    ModelSpec,
    NetworkInstance,
    apply_activation,
    forward_conv2d,
    forward_dense,
    initialize,
    philox,
)

DEFAULT_REPETITIONS = 32


@dataclass
class LayerCapture:
    index: int
    kind: str
    z: np.ndarray
    h: np.ndarray


@dataclass
class NearReport:
    mean_score: float
    std_score: float
    repetitions: int
    seed: int
    #: per scored layer: (layer index, mean erank(Z), mean erank(H), width)
    per_layer: list[tuple[int, float, float, int]] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)
    spec_digest: str = ""

    def to_dict(self) -> dict:
        return {
            "mean": self.mean_score,
            "std": self.std_score,
            "repetitions": self.repetitions,
            "seed": self.seed,
            "spec_digest": self.spec_digest,
            "layers": [
                {"index": i, "width": n, "erank_z": ez, "erank_h": eh}
                for i, ez, eh, n in self.per_layer
            ],
            "scores": list(self.scores),
        }


def spec_digest(spec: ModelSpec) -> str:
    return hashlib.sha256(spec.to_json().encode()).hexdigest()


def conv_full_matrix(feature_maps) -> np.ndarray:
    """Flatten ``(H', W', C')`` feature maps into a ``(H'*W') x C'`` matrix.

    Column ``c`` is feature map ``c`` read row by row.
    """
    fm = np.asarray(feature_maps, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"expected feature maps of shape (H', W', C'), got {fm.shape}")
    h, w, c = fm.shape
    return fm.reshape(h * w, c)


def conv_block_start(feature_maps_shape, rng: np.random.Generator) -> int:
    """Draw the first row of the contiguous block used by :func:`conv_submatrix`."""
    h, w, c = feature_maps_shape
    rows = h * w
    if rows < c:
        raise TooManyChannels(f"{c} channels but only {rows} feature-map positions")
    # the block's first row must lie in the top row of the feature maps
    n_starts = min(w, rows - c + 1)
    return int(rng.integers(n_starts))


def conv_submatrix(feature_maps, rng: np.random.Generator) -> np.ndarray:
    """Square ``C' x C'`` activation matrix sampled from ``(H', W', C')`` feature maps.

    Raises:
        TooManyChannels: if ``H' * W' < C'``.
    """
    fm = np.asarray(feature_maps, dtype=np.float64)
    c = fm.shape[2]
    start = conv_block_start(fm.shape, rng)
    return conv_full_matrix(fm)[start : start + c]


def _as_batch(spec: ModelSpec, samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    first = spec.layers[0]
    if isinstance(first, Dense):
        if x.ndim != 2:
            x = x.reshape(x.shape[0], -1)
        return x
    if spec.input_shape is None:
        raise ValueError("input_shape is required for convolutional models")
    return x.reshape((x.shape[0],) + tuple(spec.input_shape))


def capture_activations(net: NetworkInstance, samples, rng: np.random.Generator) -> list[LayerCapture]:
    """Square pre/post-activation matrices for every Dense/Conv2D layer.

    ``samples`` holds one input per row (or image-shaped inputs along axis 0)
    and must contain at least ``max_width`` samples.  ``rng`` chooses the
    contiguous block for convolutional layers.

    Raises:
        InsufficientSamples: if there are fewer samples than the widest layer.
    """
    spec = net.spec
    x = _as_batch(spec, samples)
    need = spec.max_width
    if x.shape[0] < need:
        raise InsufficientSamples(f"{x.shape[0]} samples, but the widest layer has {need} units")
    out = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Flatten):
            x = x.reshape(x.shape[0], -1)
            continue
        w, b = net.weights[i], net.biases[i]
        act = spec.activation_for(i)
        if isinstance(layer, Dense):
            z = forward_dense(w, b, x)
            h = apply_activation(act, z)
            out.append(LayerCapture(i, "Dense", z[: layer.out_features], h[: layer.out_features]))
        else:
            z = forward_conv2d(w, b, x, layer.stride, layer.padding)
            h = apply_activation(act, z)
            start = conv_block_start(z.shape[1:], rng)
            c = layer.out_channels
            zs = conv_full_matrix(z[0])[start : start + c]
            out.append(LayerCapture(i, "Conv2D", zs, apply_activation(act, zs)))
        x = h
    return out


def layer_eranks(captures: list[LayerCapture], svd_method: str = "lapack") -> list[tuple[float, float]]:
    """``(erank Z, erank H)`` for every captured layer.

    Raises:
        DegenerateLayer: if a matrix is all zeros.
    """
    out = []
    for cap in captures:
        pair = []
        for which, m in (("Z", cap.z), ("H", cap.h)):
            try:
                pair.append(effective_rank(m, svd_method))
            except ZeroMatrix as err:
                raise DegenerateLayer(cap.index, which, str(err)) from None
        out.append((pair[0], pair[1]))
    return out


def draw_samples(data: np.ndarray, count: int, seed: int, repetition: int) -> np.ndarray:
    """``count`` rows of ``data`` without replacement from the repetition's substream."""
    n = data.shape[0]
    if n < count:
        raise InsufficientSamples(f"dataset has {n} samples, need {count}")
    gen = philox(seed, repetition, STREAM_SAMPLES)
    idx = gen.choice(n, size=count, replace=False)
    return data[idx]


def score_repetitions(spec: ModelSpec, data, repetitions: int, seed: int,
                      svd_method: str = "lapack", net: NetworkInstance | None = None):
    """Per-repetition per-layer eranks, shape ``(repetitions, layers, 2)``."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    data = np.asarray(data, dtype=np.float64)
    need = spec.max_width
    if data.shape[0] < need:
        raise InsufficientSamples(f"dataset has {data.shape[0]} samples, the widest layer has {need} units")
    net = net if net is not None else initialize(spec)
    out = []
    for r in range(repetitions):
        batch = draw_samples(data, need, seed, r)
        # conv block offsets use a stream disjoint from the sample draw
        rng = philox(seed, r, STREAM_SAMPLES + 1)
        out.append(layer_eranks(capture_activations(net, batch, rng), svd_method))
    return np.asarray(out, dtype=np.float64)


def near_score(spec: ModelSpec, data, repetitions: int = DEFAULT_REPETITIONS, seed: int = 0,
               svd_method: str = "lapack") -> NearReport:
    """Mean and sample standard deviation of the NEAR score over repetitions.

    ``data`` holds one sample per row (image datasets may be flat rows;
    they are reshaped with ``spec.input_shape``).  Each repetition draws
    ``spec.max_width`` distinct samples with the Philox key ``(seed XOR r, 1)``.

    Raises:
        InsufficientSamples: if ``data`` has fewer rows than the widest layer.
        DegenerateLayer: if some pre- or post-activation matrix is all zeros.
    """
    er = score_repetitions(spec, data, repetitions, seed, svd_method)
    totals = er.sum(axis=(1, 2))
    mean = math.fsum(totals) / repetitions
    std = float(np.std(totals, ddof=1)) if repetitions > 1 else 0.0
    per_layer_mean = er.mean(axis=0)
    per_layer = [
        (i, float(ez), float(eh), spec.layers[i].width)
        for i, (ez, eh) in zip(spec.weighted, per_layer_mean)
    ]
    return NearReport(
        mean_score=mean,
        std_score=std,
        repetitions=repetitions,
        seed=int(seed),
        per_layer=per_layer,
        scores=[float(t) for t in totals],
        spec_digest=spec_digest(spec),
    )
