#!/usr/bin/env python3
"""Building the full encoder-decoder in its three device profiles and
watching the stride-4/8/16 feature ladder.
"""

import torch

from jetseg import JetSeg, profile_config

x = torch.randn(1, 3, 512, 512)

for profile in ("workstation", "agx", "nano"):
    cfg = profile_config(profile)
    model = JetSeg(cfg).eval()
    with torch.no_grad():
        feats = model.encoder(x)
        logits = model.decoder(feats)
    print(f"\n{profile} profile: stem={cfg.stem_channels}, stages={cfg.stage_channels}, "
          f"blocks={cfg.blocks_per_stage}, attention={cfg.attention}")
    for name, f in zip(("S1 (stride 4)", "S2 (stride 8)", "S3 (stride 16)"), feats):
        print(f"  {name}: {tuple(f.shape)}")
    print(f"  logits: {tuple(logits.shape)}")
    print(f"  parameters: {model.num_parameters():,}")

# Config files round-trip losslessly, so a profile is fully portable.
from jetseg import load_config, save_config

save_config(profile_config("nano"), "/tmp/nano.yaml")
print("\nnano config file:")
print(open("/tmp/nano.yaml").read())
assert load_config("/tmp/nano.yaml") == profile_config("nano")
