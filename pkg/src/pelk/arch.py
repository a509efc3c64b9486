"""Architecture presets and parameter / FLOPs accounting.

Block convention (ConvNeXt-style, fixed here so counts are reproducible):

* stem: 4x4 conv, stride 4, 3 -> dims[0], bias, then LayerNorm
* block: depthwise large-kernel conv on ``g`` channels (+ bias), LayerNorm,
  pointwise d -> 4d, GELU, pointwise 4d -> d, layer scale
* between stages: LayerNorm + 2x2 conv stride 2 (+ bias)
* head: LayerNorm + linear to ``num_classes``

FLOPs are counted as multiply-accumulates. The positional embedding costs
``g * K^2`` adds per layer because it folds into a per-channel bias.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .grid import SharingGrid, build_grid

FORMS = ("dense", "stripe", "peripheral")


@dataclass(frozen=True)
class ArchConfig:
    name: str
    dims: Tuple[int, ...]
    depths: Tuple[int, ...]
    kernels: Tuple[int, ...]
    central: int = 5
    form: str = "peripheral"
    stripe_n: int = 5
    partial_fraction: Fraction = Fraction(1)
    posembed_per_stage: bool = True
    dynamic_sparsity: bool = False  # label only, never counted
    num_classes: int = 1000

    def __post_init__(self):
        for f in ("dims", "depths", "kernels"):
            v = tuple(int(x) for x in getattr(self, f))
            object.__setattr__(self, f, v)
            if len(v) != 4:
                raise ValueError(f"{f} must have 4 stages, got {len(v)}")
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}, expected one of {FORMS}")
        if any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise ValueError(f"kernel sizes must be odd, got {self.kernels}")
        if self.central < 1 or self.central % 2 == 0:
            raise ValueError(f"central size must be odd, got {self.central}")
        if self.form == "peripheral" and any(self.central > k for k in self.kernels):
            raise ValueError(f"central region {self.central} exceeds a stage kernel {self.kernels}")
        if self.form == "stripe" and (self.stripe_n < 1 or self.stripe_n % 2 == 0):
            raise ValueError(f"stripe width must be odd, got {self.stripe_n}")
        frac = Fraction(self.partial_fraction)
        if not 0 < frac <= 1:
            raise ValueError(f"partial fraction must be in (0, 1], got {frac}")
        object.__setattr__(self, "partial_fraction", frac)
        if any(self.conv_channels(s) < 1 for s in range(4)):
            raise ValueError("partial fraction leaves a stage with no conv channels")

    @property
    def r_c(self) -> int:
        return (self.central - 1) // 2

    def conv_channels(self, stage: int) -> int:
        return int(self.partial_fraction * self.dims[stage])

    def grid(self, stage: int) -> SharingGrid:
        return build_grid(self.kernels[stage], self.r_c, 2)

    def with_kernels(self, kernels: Sequence[int]) -> "ArchConfig":
        return replace(self, kernels=tuple(kernels))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dims"], d["depths"], d["kernels"] = list(self.dims), list(self.depths), list(self.kernels)
        d["partial_fraction"] = str(self.partial_fraction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "partial_fraction" in d:
            d["partial_fraction"] = Fraction(str(d["partial_fraction"]))
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ArchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


_T = dict(dims=(96, 192, 384, 768), depths=(3, 3, 9, 3))
_S = dict(dims=(96, 192, 384, 768), depths=(3, 3, 27, 3))
_B = dict(dims=(128, 256, 512, 1024), depths=(3, 3, 27, 3))
_PELK = dict(form="peripheral", partial_fraction=Fraction(3, 8), dynamic_sparsity=True)
_SLAK = dict(form="stripe", stripe_n=5, dynamic_sparsity=True)

PRESETS: Dict[str, ArchConfig] = {
    "pelk-t": ArchConfig("pelk-t", kernels=(51, 49, 47, 13), central=5, **_T, **_PELK),
    "pelk-s": ArchConfig("pelk-s", kernels=(51, 49, 47, 13), central=5, **_S, **_PELK),
    "pelk-b": ArchConfig("pelk-b", kernels=(51, 49, 47, 13), central=5, **_B, **_PELK),
    "pelk-t-101": ArchConfig("pelk-t-101", kernels=(101, 69, 67, 13), central=7, **_T, **_PELK),
    "pelk-b-101": ArchConfig("pelk-b-101", kernels=(101, 69, 67, 13), central=7, **_B, **_PELK),
    "convnext-t": ArchConfig("convnext-t", kernels=(7, 7, 7, 7), form="dense", **_T),
    "convnext-s": ArchConfig("convnext-s", kernels=(7, 7, 7, 7), form="dense", **_S),
    "convnext-b": ArchConfig("convnext-b", kernels=(7, 7, 7, 7), form="dense", **_B),
    "slak-t": ArchConfig("slak-t", kernels=(51, 49, 47, 13), **_T, **_SLAK),
    "slak-s": ArchConfig("slak-s", kernels=(51, 49, 47, 13), **_S, **_SLAK),
    "slak-b": ArchConfig("slak-b", kernels=(51, 49, 47, 13), **_B, **_SLAK),
    "replk-t": ArchConfig("replk-t", kernels=(31, 29, 27, 13), form="dense", **_T),
}


def preset(name: str) -> ArchConfig:
    """Named configuration; ``convnext-t-dense-51`` style names set a uniform dense kernel."""
    key = name.lower()
    if key in PRESETS:
        return PRESETS[key]
    base, sep, k = key.rpartition("-dense-")
    if sep and base in PRESETS and k.isdigit():
        return replace(PRESETS[base], name=key, form="dense", kernels=(int(k),) * 4)
    raise KeyError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")


def with_form(cfg: ArchConfig, form: str) -> ArchConfig:
    """Same layout with a different conv form; partial channels only apply to peripheral."""
    if form == cfg.form:
        return cfg
    frac = cfg.partial_fraction if form == "peripheral" else Fraction(1)
    return replace(cfg, form=form, partial_fraction=frac,
                   name=f"{cfg.name}-{form}" if not cfg.name.endswith(form) else cfg.name)


@dataclass
class StageReport:
    stage: int
    dim: int
    depth: int
    kernel: int
    k_prime: int
    conv_channels: int
    conv_params: int
    posembed_params: int
    other_params: int
    flops: Dict[str, int] = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return self.conv_params + self.posembed_params + self.other_params


@dataclass
class ParamReport:
    config: ArchConfig
    stages: List[StageReport]
    stem_params: int
    head_params: int
    input_hw: Optional[Tuple[int, int]] = None
    stem_flops: int = 0
    head_flops: int = 0

    @property
    def conv_params(self) -> int:
        return sum(s.conv_params for s in self.stages)

    @property
    def posembed_params(self) -> int:
        return sum(s.posembed_params for s in self.stages)

    @property
    def other_params(self) -> int:
        return self.stem_params + self.head_params + sum(s.other_params for s in self.stages)

    @property
    def total_params(self) -> int:
        return self.conv_params + self.posembed_params + self.other_params

    def flops_by_component(self) -> Dict[str, int]:
        out = {"stem": self.stem_flops, "conv": 0, "posembed": 0, "pointwise": 0,
               "downsample": 0, "norm_act": 0, "head": self.head_flops}
        for s in self.stages:
            for key, v in s.flops.items():
                out[key] += v
        return out

    @property
    def total_flops(self) -> int:
        return sum(self.flops_by_component().values())

    def share(self, component: str) -> Fraction:
        return Fraction(self.flops_by_component()[component], self.total_flops)


def _stage_conv_params(cfg: ArchConfig, s: int) -> Tuple[int, int, int]:
    """(conv params per layer, posembed params per stage, k')."""
    K, g = cfg.kernels[s], cfg.conv_channels(s)
    if cfg.form == "dense":
        return g * K * K, 0, K
    if cfg.form == "stripe":
        return g * 2 * K * cfg.stripe_n, 0, K
    kp = cfg.grid(s).k_prime
    pe = g * K * K if cfg.posembed_per_stage else 0
    return g * kp * kp, pe, kp


def conv_param_count(cfg: ArchConfig) -> ParamReport:
    """Exact integer parameter counts per stage."""
    stages = []
    for s in range(4):
        d, n = cfg.dims[s], cfg.depths[s]
        per_layer, pe, kp = _stage_conv_params(cfg, s)
        g = cfg.conv_channels(s)
        # dw bias + LN + pw1 + pw2 + layer scale
        block_other = g + 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d) + d
        down = 0
        if s > 0:
            prev = cfg.dims[s - 1]
            down = 2 * prev + 4 * prev * d + d
        stages.append(StageReport(
            stage=s, dim=d, depth=n, kernel=cfg.kernels[s], k_prime=kp, conv_channels=g,
            conv_params=n * per_layer, posembed_params=pe,
            other_params=n * block_other + down,
        ))
    c0, c3 = cfg.dims[0], cfg.dims[3]
    stem = 3 * 16 * c0 + c0 + 2 * c0
    head = 2 * c3 + c3 * cfg.num_classes + cfg.num_classes
    return ParamReport(cfg, stages, stem_params=stem, head_params=head)


def flops_report(cfg: ArchConfig, input_hw: Tuple[int, int]) -> ParamReport:
    """Parameter report plus per-component multiply-accumulate counts."""
    H, W = (int(v) for v in input_hw)
    if H < 4 or W < 4 or H % 4 or W % 4:
        raise ValueError(f"input size must be a positive multiple of the stem stride 4, got {H}x{W}")
    rep = conv_param_count(cfg)
    rep.input_hw = (H, W)
    c0 = cfg.dims[0]
    h, w = H // 4, W // 4
    rep.stem_flops = h * w * 3 * 16 * c0
    for st in rep.stages:
        s, d, n = st.stage, st.dim, st.depth
        if s > 0:
            h, w = h // 2, w // 2
        hw = h * w
        K, g = cfg.kernels[s], st.conv_channels
        if cfg.form == "stripe":
            taps = 2 * K * cfg.stripe_n
        else:
            taps = K * K
        st.flops = {
            "conv": n * g * taps * hw,
            "posembed": n * g * K * K if cfg.form == "peripheral" and cfg.posembed_per_stage else 0,
            "pointwise": n * 8 * d * d * hw,
            "downsample": 4 * cfg.dims[s - 1] * d * hw if s > 0 else 0,
            # LN, GELU, layer scale, residual: a handful of ops per element
            "norm_act": n * (2 * d + 4 * d + d + d) * hw,
        }
    rep.head_flops = cfg.dims[3] * cfg.num_classes
    return rep


def scaling_curve(base: ArchConfig, kernels: Iterable[int], forms: Sequence[str] = FORMS,
                  r_c: int = 2) -> List[dict]:
    """Whole-network parameters when every stage uses kernel K, for each form."""
    kernels = list(kernels)
    if not kernels:
        raise ValueError("kernel list is empty")
    rows = []
    for form in forms:
        if form not in FORMS:
            raise ValueError(f"unknown form {form!r}")
        for K in kernels:
            if K < 1 or K % 2 == 0:
                raise ValueError(f"kernel sizes must be odd, got {K}")
            cfg = replace(with_form(base, form), kernels=(K,) * 4,
                          central=min(2 * r_c + 1, K))
            rep = conv_param_count(cfg)
            rows.append({
                "form": form,
                "K": K,
                "k_prime": rep.stages[0].k_prime,
                "conv_params": rep.conv_params,
                "posembed_params": rep.posembed_params,
                "total_params": rep.total_params,
            })
    return rows
