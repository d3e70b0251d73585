"""Training-free scoring of neural networks by the effective rank of their activations.

The NEAR score of an untrained network sums, over its layers, the effective
ranks of the pre-activation and post-activation matrices obtained from
sample inputs.  The package also estimates MLP layer widths from relative
scores and provides the rank statistics used to judge a proxy.
"""

__version__ = "0.1.0"

from .errors import NearError
from .evalstats import average_rank, kendall_tau, pairwise_win_probability, spearman_rho
from .linalg import effective_rank, shannon_entropy, singular_values
from .netdef import (
    Conv2D,
    Dense,
    Flatten,
    InitScheme,
    ModelSpec,
    NetworkInstance,
    apply_activation,
    count_flops,
    count_params,
    forward_conv2d,
    forward_dense,
    initialize,
    mlp,
)
from .scoring import (
    NearReport,
    capture_activations,
    conv_full_matrix,
    conv_submatrix,
    near_score,
)
from .sizing import (
    PowerFit,
    SizeSweep,
    estimate_layer_sizes,
    fit_power,
    sweep_layer,
    threshold_size,
)

__all__ = [
    "Conv2D", "Dense", "Flatten", "InitScheme", "ModelSpec", "NearError", "NearReport",
    "NetworkInstance", "PowerFit", "SizeSweep", "apply_activation", "average_rank",
    "capture_activations", "conv_full_matrix", "conv_submatrix", "count_flops", "count_params",
    "effective_rank", "estimate_layer_sizes", "fit_power", "forward_conv2d", "forward_dense",
    "initialize", "kendall_tau", "mlp", "near_score", "pairwise_win_probability",
    "shannon_entropy", "singular_values", "spearman_rho", "sweep_layer", "threshold_size",
]
