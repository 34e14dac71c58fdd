import dataclasses

import pytest
import torch

from jetseg.config import ModelConfig, load_config, profile_config, save_config
from jetseg.encoder import JetNet, build_encoder
from jetseg.errors import ConfigError, InvalidInputError


def encoder_params(profile):
    return sum(p.numel() for p in JetNet(profile_config(profile)).parameters())


class TestEncoder:
    @pytest.mark.parametrize("profile", ["workstation", "agx", "nano"])
    def test_stride_ladder(self, profile):
        cfg = profile_config(profile)
        enc = build_encoder(cfg)
        feats = enc(torch.randn(1, 3, 64, 64))
        assert len(feats) == 3
        for f, stride, channels in zip(feats, (4, 8, 16), cfg.stage_channels):
            assert f.shape == (1, channels, 64 // stride, 64 // stride)

    def test_indivisible_input_rejected(self):
        enc = build_encoder(profile_config("nano"))
        with pytest.raises(InvalidInputError, match="divisible by 16"):
            enc(torch.randn(1, 3, 60, 64))

    def test_eval_determinism(self):
        torch.manual_seed(0)
        enc = build_encoder(profile_config("nano")).eval()
        x = torch.randn(1, 3, 32, 32)
        with torch.no_grad():
            a = enc(x)
            b = enc(x)
        for fa, fb in zip(a, b):
            assert torch.equal(fa, fb)

    def test_batch_independence_in_eval(self):
        torch.manual_seed(1)
        enc = build_encoder(profile_config("nano")).eval()
        x = torch.randn(2, 3, 32, 32)
        with torch.no_grad():
            batched = enc(x)
            singles = [enc(x[i:i + 1]) for i in range(2)]
        for k in range(3):
            stacked = torch.cat([singles[0][k], singles[1][k]])
            assert torch.allclose(batched[k], stacked, atol=1e-5)

    def test_profile_parameter_monotonicity(self):
        nano, agx, ws = (encoder_params(p) for p in ("nano", "agx", "workstation"))
        assert nano <= agx <= ws
        assert nano < ws

    def test_gradient_flow_all_parameters(self):
        torch.manual_seed(2)
        enc = build_encoder(profile_config("nano"))
        feats = enc(torch.randn(2, 3, 32, 32))
        loss = sum(f.square().mean() for f in feats)
        loss.backward()
        zero_grad = []
        for name, p in enc.named_parameters():
            assert p.grad is not None, name
            assert torch.isfinite(p.grad).all(), name
            if (p.grad == 0).all():
                zero_grad.append(name)
        assert zero_grad == [], f"unexplained all-zero gradients: {zero_grad}"


class TestConfig:
    def test_round_trip_is_lossless(self, tmp_path):
        for profile in ("workstation", "agx", "nano"):
            cfg = profile_config(profile)
            path = tmp_path / f"{profile}.yaml"
            save_config(cfg, path)
            restored = load_config(path)
            assert restored == cfg
            # rebuilt models agree in size
            a = sum(p.numel() for p in JetNet(cfg).parameters())
            b = sum(p.numel() for p in JetNet(restored).parameters())
            assert a == b

    def test_serialize_parse_serialize_stable(self, tmp_path):
        cfg = profile_config("agx")
        p1, p2 = tmp_path / "a.yaml", tmp_path / "b.yaml"
        save_config(cfg, p1)
        save_config(load_config(p1), p2)
        assert p1.read_text() == p2.read_text()

    def test_violations_name_the_field(self):
        with pytest.raises(ConfigError, match="stage_channels"):
            ModelConfig(stage_channels=(24, 32))
        with pytest.raises(ConfigError, match="attention"):
            ModelConfig(attention=("cbam", "sam", "nope"))
        with pytest.raises(ConfigError, match="expansion_ratio"):
            ModelConfig(expansion_ratio=-1)
        with pytest.raises(ConfigError, match="profile"):
            ModelConfig(profile="laptop")
        with pytest.raises(ConfigError, match="num_classes"):
            ModelConfig(num_classes=1)

    def test_unknown_fields_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            ModelConfig.from_dict({"profile": "nano", "width": 3})

    def test_overrides_via_replace(self):
        cfg = dataclasses.replace(profile_config("nano"), num_classes=11)
        assert cfg.num_classes == 11 and cfg.profile == "nano"
