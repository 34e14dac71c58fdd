"""Analytic FLOPs and parameter accounting.

Two accounting modes are reported side by side:

* ``native``: the project's closed-form decomposition,
    F_conv = Kw*Kh*Hin*Win*Cin*Cout / (s^2 * g)
    F_pool = Cin*Hout*Wout*Kw*Kh
    F_fc   = Cin*Hin*Win*Hout*Wout
    F_bn   = 4*Cin*Hout*Wout
    F_act  = Cin*Hin*Win
  F_conv counts via input dims divided by the squared stride (equal to
  output-dim counting whenever the stride divides exactly; inexact cases
  are flagged), and F_fc deliberately involves spatial extents only.
* ``standard``: conventional MAC counting for convolutions via output
  dims (Kw*Kh*Hout*Wout*Cin*Cout/g) and Cin*Cout features for fc layers;
  the other kinds match the native mode.

Bilinear upsampling has no term of its own and is accounted as a pool
with a 2x2 window (the four-tap interpolation read).
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

import torch
import torch.nn as nn

from .errors import AnalysisError, InvalidSpecError
from .ops import REU, ChannelPool, TanhExp

KINDS = ("conv", "pool", "fc", "bn", "act")


@dataclass(frozen=True)
class LayerSpec:
    """Geometric description of one accounted layer."""

    kind: str
    k_w: int = 1
    k_h: int = 1
    h_in: int = 1
    w_in: int = 1
    h_out: int = 1
    w_out: int = 1
    c_in: int = 1
    c_out: int = 1
    stride: int = 1
    groups: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpecError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("k_w", "k_h", "h_in", "w_in", "h_out", "w_out", "c_in", "c_out", "stride", "groups"):
            if getattr(self, name) < 1:
                raise InvalidSpecError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kind == "conv" and (self.c_in % self.groups or self.c_out % self.groups):
            raise InvalidSpecError(
                f"groups={self.groups} must divide c_in={self.c_in} and c_out={self.c_out}"
            )


def conv_flops_exact(spec: LayerSpec) -> Fraction:
    """F_conv as an exact rational, before any rounding."""
    num = spec.k_w * spec.k_h * spec.h_in * spec.w_in * spec.c_in * spec.c_out
    return Fraction(num, spec.stride ** 2 * spec.groups)


def layer_flops(spec: LayerSpec, mode: str = "native") -> int:
    """FLOPs of one layer. Native-mode conv counts that do not divide evenly
    are rounded down; callers can detect this via conv_flops_exact.
    """
    if mode not in ("native", "standard"):
        raise InvalidSpecError(f"mode must be 'native' or 'standard', got {mode!r}")
    if spec.kind == "conv":
        if mode == "native":
            return int(conv_flops_exact(spec))
        return spec.k_w * spec.k_h * spec.h_out * spec.w_out * spec.c_in * spec.c_out // spec.groups
    if spec.kind == "pool":
        return spec.c_in * spec.h_out * spec.w_out * spec.k_w * spec.k_h
    if spec.kind == "fc":
        if mode == "native":
            return spec.c_in * spec.h_in * spec.w_in * spec.h_out * spec.w_out
        return spec.c_in * spec.h_in * spec.w_in * spec.c_out
    if spec.kind == "bn":
        return 4 * spec.c_in * spec.h_out * spec.w_out
    return spec.c_in * spec.h_in * spec.w_in  # act


@dataclass
class LayerReport:
    name: str
    kind: str
    flops: int
    flops_standard: int
    params: int
    rounded: bool
    spec: LayerSpec


@dataclass
class ComplexityReport:
    """Per-layer rows plus component and grand totals for both modes.

    Parameters of a module executed more than once (shared gating layers)
    are attributed to its first row only, so the parameter total matches
    plain weight enumeration.
    """

    layers: List[LayerReport]
    input_size: Tuple[int, int]
    notes: List[str] = field(default_factory=list)

    def component_totals(self, mode: str = "native") -> dict:
        totals = {kind: 0 for kind in KINDS}
        for row in self.layers:
            totals[row.kind] += row.flops if mode == "native" else row.flops_standard
        return totals

    def total_flops(self, mode: str = "native") -> int:
        return sum(self.component_totals(mode).values())

    @property
    def total_params(self) -> int:
        return sum(row.params for row in self.layers)

    def to_dict(self) -> dict:
        return {
            "input_size": list(self.input_size),
            "total_flops": self.total_flops("native"),
            "total_flops_standard": self.total_flops("standard"),
            "total_params": self.total_params,
            "component_totals": self.component_totals("native"),
            "component_totals_standard": self.component_totals("standard"),
            "notes": list(self.notes),
            "layers": [
                {
                    "name": r.name, "kind": r.kind, "flops": r.flops,
                    "flops_standard": r.flops_standard, "params": r.params,
                    "rounded": r.rounded,
                }
                for r in self.layers
            ],
        }

    def table(self, max_rows: Optional[int] = None) -> str:
        lines = [f"{'layer':<52} {'kind':<5} {'flops':>14} {'flops(std)':>14} {'params':>10}"]
        lines.append("-" * len(lines[0]))
        rows = self.layers if max_rows is None else self.layers[:max_rows]
        for r in rows:
            flag = "*" if r.rounded else ""
            lines.append(f"{r.name[:52]:<52} {r.kind:<5} {r.flops:>14,}{flag} "
                         f"{r.flops_standard:>13,} {r.params:>10,}")
        if max_rows is not None and len(self.layers) > max_rows:
            lines.append(f"... {len(self.layers) - max_rows} more layers")
        lines.append("-" * len(lines[0]))
        for kind, total in self.component_totals("native").items():
            lines.append(f"F_{kind:<4} {total:>20,}")
        lines.append(f"total FLOPs          {self.total_flops('native'):>14,}  "
                     f"({self.total_flops('native') / 1e9:.4f} G)")
        lines.append(f"total FLOPs (std)    {self.total_flops('standard'):>14,}  "
                     f"({self.total_flops('standard') / 1e9:.4f} G)")
        lines.append(f"total params         {self.total_params:>14,}  "
                     f"({self.total_params / 1e6:.6f} M)")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _shape4(t: torch.Tensor):
    return t.shape[2], t.shape[3], t.shape[1]


def _specs_for(module, x: torch.Tensor, y: torch.Tensor) -> List[LayerSpec]:
    if isinstance(module, nn.Conv2d):
        h_in, w_in, _ = _shape4(x)
        h_out, w_out, _ = _shape4(y)
        sh, sw = module.stride
        if sh != sw:
            raise AnalysisError(f"non-square stride {module.stride} has no s^2 accounting")
        kh, kw = module.kernel_size
        return [LayerSpec("conv", k_w=kw, k_h=kh, h_in=h_in, w_in=w_in,
                          h_out=h_out, w_out=w_out, c_in=module.in_channels,
                          c_out=module.out_channels, stride=sh, groups=module.groups)]
    if isinstance(module, nn.Conv1d):
        return [LayerSpec("conv", k_w=module.kernel_size[0], k_h=1,
                          h_in=1, w_in=x.shape[-1], h_out=1, w_out=y.shape[-1],
                          c_in=module.in_channels, c_out=module.out_channels,
                          stride=module.stride[0], groups=module.groups)]
    if isinstance(module, nn.Linear):
        return [LayerSpec("fc", c_in=module.in_features, c_out=module.out_features)]
    if isinstance(module, nn.BatchNorm2d):
        h, w, c = _shape4(x)
        return [LayerSpec("bn", c_in=c, h_in=h, w_in=w, h_out=h, w_out=w)]
    if isinstance(module, (REU, TanhExp, nn.ReLU, nn.Sigmoid)):
        if x.dim() == 4:
            h, w, c = _shape4(x)
        else:
            h, w, c = 1, x.shape[-1], x.shape[1] if x.dim() > 1 else 1
        return [LayerSpec("act", c_in=c, h_in=h, w_in=w, h_out=h, w_out=w)]
    if isinstance(module, (nn.AdaptiveAvgPool2d, nn.AdaptiveMaxPool2d)):
        h_in, w_in, c = _shape4(x)
        h_out, w_out, _ = _shape4(y)
        return [LayerSpec("pool", k_w=max(w_in // w_out, 1), k_h=max(h_in // h_out, 1),
                          h_in=h_in, w_in=w_in, h_out=h_out, w_out=w_out, c_in=c, c_out=c)]
    if isinstance(module, ChannelPool):
        h, w, c = _shape4(x)
        # one scan over the channel axis per output statistic (avg, max)
        return [LayerSpec("pool", h_in=h, w_in=w, h_out=h, w_out=w, c_in=c, c_out=1),
                LayerSpec("pool", h_in=h, w_in=w, h_out=h, w_out=w, c_in=c, c_out=1)]
    if isinstance(module, nn.Upsample):
        h_in, w_in, c = _shape4(x)
        h_out, w_out, _ = _shape4(y)
        return [LayerSpec("pool", k_w=2, k_h=2, h_in=h_in, w_in=w_in,
                          h_out=h_out, w_out=w_out, c_in=c, c_out=c)]
    raise AnalysisError(f"no accounting rule for module type {type(module).__name__}")


_COUNTED = (nn.Conv2d, nn.Conv1d, nn.Linear, nn.BatchNorm2d, REU, TanhExp,
            nn.ReLU, nn.Sigmoid, nn.AdaptiveAvgPool2d, nn.AdaptiveMaxPool2d,
            ChannelPool, nn.Upsample)


def model_complexity(model: nn.Module, input_size: Tuple[int, int],
                     in_channels: int = 3, example_input=None) -> ComplexityReport:
    """Walk a model with a dummy forward and account every counted layer.

    FLOPs come from the layer formulas over inferred shapes; parameters come
    from independent weight enumeration. Raises AnalysisError naming the
    layer if shape inference fails or a parameterized module has no rule.
    Models whose forward does not take one (N, C, H, W) tensor can be walked
    by passing example_input explicitly.
    """
    was_training = model.training
    model.eval()
    rows: List[LayerReport] = []
    notes: List[str] = []
    seen = set()
    handles = []
    entered = ["<input>"]

    def pre_hook(name):
        def fn(module, inputs):
            entered[0] = name
        return fn

    def post_hook(name):
        def fn(module, inputs, output):
            x = inputs[0]
            out = output[0] if isinstance(output, (tuple, list)) else output
            params = 0
            if id(module) not in seen:
                seen.add(id(module))
                params = sum(p.numel() for p in module.parameters(recurse=False))
            for spec in _specs_for(module, x, out):
                rounded = spec.kind == "conv" and conv_flops_exact(spec).denominator != 1
                if rounded:
                    notes.append(f"{name}: native-mode conv FLOPs rounded down "
                                 f"({conv_flops_exact(spec)})")
                rows.append(LayerReport(
                    name=name or "model", kind=spec.kind,
                    flops=layer_flops(spec, "native"),
                    flops_standard=layer_flops(spec, "standard"),
                    params=params, rounded=rounded, spec=spec,
                ))
                params = 0
        return fn

    for name, module in model.named_modules():
        handles.append(module.register_forward_pre_hook(pre_hook(name or "model")))
        if isinstance(module, _COUNTED):
            handles.append(module.register_forward_hook(post_hook(name or "model")))
    if example_input is None:
        example_input = torch.zeros(1, in_channels, input_size[0], input_size[1])
    try:
        with torch.no_grad():
            model(example_input)
    except Exception as exc:
        raise AnalysisError(f"shape inference failed inside layer '{entered[0]}': {exc}") from exc
    finally:
        for handle in handles:
            handle.remove()
        if was_training:
            model.train()

    report = ComplexityReport(layers=rows, input_size=tuple(input_size), notes=notes)
    enumerated = sum(p.numel() for p in model.parameters())
    if report.total_params != enumerated:
        raise AnalysisError(
            f"parameter accounting incomplete: rows hold {report.total_params}, "
            f"model enumerates {enumerated}"
        )
    return report
