#!/usr/bin/env python3
"""Analytic FLOPs accounting: per-layer substitution into the closed-form
cost decomposition, plus the whole-model walk.

Two conventions are reported: the decomposition as printed (conv cost via
input dims divided by stride squared) and conventional MAC counting via
output dims. They agree whenever strides divide the input exactly.
"""

from jetseg import JetSeg, LayerSpec, layer_flops, model_complexity, profile_config

# single layers, by hand
conv = LayerSpec("conv", k_w=3, k_h=3, h_in=4, w_in=4, h_out=4, w_out=4, c_in=8, c_out=8)
print("3x3 conv on 4x4x8 -> 8:", layer_flops(conv), "FLOPs")

grouped = LayerSpec("conv", k_w=3, k_h=3, h_in=4, w_in=4, h_out=4, w_out=4,
                    c_in=8, c_out=8, groups=4)
print("same conv with g=4:    ", layer_flops(grouped), "FLOPs (exactly 1/4)")

bn = LayerSpec("bn", c_in=16, h_in=8, w_in=8, h_out=8, w_out=8)
print("bn on 8x8x16:          ", layer_flops(bn), "FLOPs")

# the full model walk: shapes inferred by execution, parameters enumerated
for profile in ("nano", "agx", "workstation"):
    report = model_complexity(JetSeg(profile_config(profile)), (512, 512))
    print(f"\n{profile} @ 512x512: {report.total_flops('native') / 1e9:.4f} GFLOPs "
          f"({report.total_flops('standard') / 1e9:.4f} std), "
          f"{report.total_params:,} params")
    for kind, total in report.component_totals("native").items():
        print(f"  F_{kind:<4} {total / 1e6:10.2f} M")

print("\nworkstation per-layer head:")
print(model_complexity(JetSeg(profile_config("workstation")), (512, 512)).table(max_rows=12))
