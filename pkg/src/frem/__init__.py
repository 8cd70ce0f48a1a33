"""Fair representation learning for continuous sensitive attributes.

The fairness functional is the expected MMD between the conditional
distribution of the representation given the sensitive attribute and its
marginal, estimated by leave-one-out kernel smoothing over the attribute.
"""

from .data import SampleBatch, load_csv, minmax_scale, split
from .eipm import (
    EipmEstimate,
    eipm_binning,
    eipm_eo,
    eipm_gradient,
    eipm_nw_plugin,
    eipm_proposed,
    mmd_between_weighted_empiricals,
)
from .kernels import MmdKernelSpec, SmoothingKernelSpec
from .trainer import TrainConfig, evaluate, train_frem

__version__ = "0.1.0"

__all__ = [
    "SampleBatch",
    "load_csv",
    "minmax_scale",
    "split",
    "EipmEstimate",
    "eipm_binning",
    "eipm_eo",
    "eipm_gradient",
    "eipm_nw_plugin",
    "eipm_proposed",
    "mmd_between_weighted_empiricals",
    "MmdKernelSpec",
    "SmoothingKernelSpec",
    "TrainConfig",
    "evaluate",
    "train_frem",
]
