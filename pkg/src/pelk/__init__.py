"""Peripheral large-kernel convolution: sharing grids, depthwise conv ops,
parameter accounting and effective-receptive-field metrics."""

from .grid import (
    GridError,
    RegionPartition,
    SharingGrid,
    build_custom_grid,
    build_grid,
    central_ratio,
    param_ratio,
    partition,
)
from .kernel import (
    CompactKernel,
    PositionalEmbedding,
    expand,
    init_trunc_normal,
    merge_reparam,
    posembed_bias,
    scatter_grad,
)
from .conv import (
    ConvSpec,
    dw_backward,
    dw_forward,
    dw_forward_posembed,
    partial_forward,
    peripheral_backward,
    peripheral_forward,
    stripe_backward,
    stripe_forward,
)
from .arch import ArchConfig, ParamReport, conv_param_count, flops_report, preset, scaling_curve
from .erf import ContributionMap, area_ratio, contribution_map

__version__ = "0.1.0"
