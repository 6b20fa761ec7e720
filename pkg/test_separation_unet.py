#!/usr/bin/env python3
"""Tests für die Separation U-Net, ihre Bausteine und den visuellen Encoder."""

import os
import sys
import tempfile

import numpy as np
import torch
import torch.nn as nn

# Füge Projektverzeichnis zum Pfad hinzu
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from models.layers import FiLMResnetBlock, JointAttention, TimeAttention
from models.separation_unet import (
    CABlock,
    FeatureInteraction,
    SeparatorModel,
    UNetConfig,
    bottleneck_shape,
)
from models.visual_encoder import ConvVisualEncoder, PrecomputedEmbeddings
from utils.array_container import write_container


def small_config(**overrides) -> UNetConfig:
    values = dict(grid_height=32, grid_width=32, base_channels=8, visual_width=8)
    values.update(overrides)
    return UNetConfig(**values)


def _randomize_zero_inits(module: nn.Module, seed: int = 0) -> None:
    """Null-initialisierte Skalierungen zufällig setzen, damit alle Pfade Gradienten tragen."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.GroupNorm):
                m.weight.copy_(1.0 + 0.1 * torch.randn(m.weight.shape, generator=gen, dtype=m.weight.dtype))
                m.bias.copy_(0.1 * torch.randn(m.bias.shape, generator=gen, dtype=m.bias.dtype))
        output = getattr(module, "output", None)
        if isinstance(output, nn.Conv2d):
            output.weight.copy_(0.2 * torch.randn(output.weight.shape, generator=gen, dtype=output.weight.dtype))


def _finite_difference_check(loss_fn, params, per_param: int = 2, h: float = 1e-6, seed: int = 0) -> float:
    """Größter relativer Fehler zwischen Autograd- und zentralen Differenzen-Gradienten."""
    rng = np.random.default_rng(seed)
    grads = torch.autograd.grad(loss_fn(), params)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            for _ in range(per_param):
                idx = tuple(int(rng.integers(s)) for s in p.shape)
                original = p[idx].item()
                p[idx] = original + h
                plus = loss_fn().item()
                p[idx] = original - h
                minus = loss_fn().item()
                p[idx] = original
                numeric = (plus - minus) / (2 * h)
                analytic = g[idx].item()
                err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-3)
                worst = max(worst, err)
    return worst


def _weighted_loss(output: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    return (output * weights).mean() + (output ** 2).mean()


def test_film_block_identity_at_init():
    torch.manual_seed(0)
    block = FiLMResnetBlock(8, 8, time_dim=16, groups=4)
    x = torch.randn(2, 8, 8, 8)
    out = block(x, torch.randn(2, 16))
    assert out.shape == x.shape
    assert torch.equal(out, x)

    wider = FiLMResnetBlock(4, 8, time_dim=16, groups=4)
    assert wider(torch.randn(2, 4, 8, 8), torch.randn(2, 16)).shape == (2, 8, 8, 8)

    try:
        FiLMResnetBlock(4, 6, time_dim=16, groups=4)
        assert False
    except ValueError:
        pass
    try:
        block(x, torch.randn(2, 12))
        assert False
    except ValueError:
        pass
    print("✅ FiLM-ResNet-Block: Identität bei Initialisierung, Formen")


def test_film_block_gradients():
    torch.manual_seed(1)
    block = FiLMResnetBlock(4, 8, time_dim=16, groups=4).double()
    _randomize_zero_inits(block)
    x = torch.randn(2, 4, 8, 8, dtype=torch.float64, requires_grad=True)
    t_emb = torch.randn(2, 16, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(block, (x, t_emb))

    weights = torch.randn(2, 8, 8, 8, dtype=torch.float64)
    params = [block.conv1.weight, block.conv2.weight, block.norm1.weight,
              block.time_mlp[1].weight, block.residual.weight]
    err = _finite_difference_check(lambda: _weighted_loss(block(x.detach(), t_emb.detach()), weights), params)
    assert err < 1e-4, f"relativer Fehler {err:.2e}"
    print(f"✅ FiLM-ResNet-Block: Gradienten (rel. Fehler {err:.1e})")


def test_time_attention():
    torch.manual_seed(2)
    attn = TimeAttention(8, heads=2).double()
    x = torch.randn(1, 8, 4, 6, dtype=torch.float64)
    attn.attention.keep_weights = True
    out = attn(x)
    assert out.shape == x.shape
    row_sums = attn.attention.last_weights.sum(dim=-1)
    assert torch.allclose(row_sums, torch.ones_like(row_sums), atol=1e-5)
    assert attn.attention.last_weights.shape[-1] == 6

    perm = torch.randperm(6)
    assert torch.allclose(attn(x[..., perm]), out[..., perm], atol=1e-10)

    xg = x.clone().requires_grad_(True)
    assert torch.autograd.gradcheck(attn, (xg,))
    err = _finite_difference_check(lambda: (attn(x) ** 2).mean(),
                                   [attn.attention.qkv.weight, attn.attention.out.weight, attn.norm.weight])
    assert err < 1e-4, f"relativer Fehler {err:.2e}"

    try:
        TimeAttention(6, heads=4)
        assert False
    except ValueError:
        pass
    print("✅ Time-Attention: Zeilensummen, Permutationsäquivarianz, Gradienten")


def test_joint_attention_rows():
    attn = JointAttention(16, heads=4)
    attn.attention.keep_weights = True
    out = attn(torch.randn(2, 16, 4, 4))
    assert out.shape == (2, 16, 4, 4)
    weights = attn.attention.last_weights
    assert weights.shape == (2, 4, 16, 16)
    assert torch.allclose(weights.sum(dim=-1), torch.ones(2, 4, 16), atol=1e-5)
    print("✅ Joint-Attention über alle Positionen")


def test_feature_interaction():
    torch.manual_seed(3)
    cfg = small_config()
    fim = FeatureInteraction(16, cfg).double()
    _randomize_zero_inits(fim)
    f_a = torch.randn(1, 16, 4, 4, dtype=torch.float64, requires_grad=True)
    v = torch.randn(1, 16, dtype=torch.float64, requires_grad=True)
    t_emb = torch.randn(1, cfg.time_dim, dtype=torch.float64, requires_grad=True)

    out = fim(f_a, v, t_emb)
    assert out.shape == f_a.shape
    zero_v = fim(f_a, torch.zeros_like(v), t_emb)
    assert float((out - zero_v).norm()) > 0

    assert torch.autograd.gradcheck(fim, (f_a, v, t_emb))
    params = [fim.res1.conv1.weight, fim.res1.residual.weight, fim.attention.attention.qkv.weight]
    err = _finite_difference_check(lambda: (fim(f_a.detach(), v.detach(), t_emb.detach()) ** 2).mean(), params)
    assert err < 1e-4, f"relativer Fehler {err:.2e}"

    try:
        fim(f_a, torch.randn(1, 8, dtype=torch.float64), t_emb)
        assert False
    except ValueError:
        pass
    print("✅ Feature-Interaction: Form, Konditionierung, Gradienten")


def test_ca_block_directions():
    cfg = small_config()
    t_emb = torch.randn(1, cfg.time_dim)
    down = CABlock(8, 16, cfg, "down")
    h = down(torch.randn(1, 8, 32, 32), t_emb)
    assert h.shape == (1, 16, 16, 16)

    up = CABlock(16, 8, cfg, "up", skip_channels=16)
    assert up(h, t_emb, skip=torch.randn(1, 16, 16, 16)).shape == (1, 8, 32, 32)
    try:
        up(h, t_emb)
        assert False
    except ValueError:
        pass

    resnet_only = CABlock(8, 16, small_config(block_variant="resnet_only"), "down")
    assert isinstance(resnet_only.mixer, FiLMResnetBlock)
    print("✅ CA-Block: halbiert/verdoppelt Raster, Skip erforderlich")


def test_full_model_gradients():
    torch.manual_seed(4)
    model = SeparatorModel(small_config()).double()
    _randomize_zero_inits(model.unet)
    x_t = torch.randn(1, 1, 32, 32, dtype=torch.float64)
    x_mix = torch.rand(1, 1, 32, 32, dtype=torch.float64)
    v = torch.randn(1, 64, dtype=torch.float64)
    weights = torch.randn(1, 1, 32, 32, dtype=torch.float64)

    unet = model.unet
    params = [
        unet.input_proj.weight,
        unet.time_mlp.mlp[0].weight,
        unet.down[0].res1.conv1.weight,
        unet.down[1].mixer.attention.qkv.weight,
        unet.down[3].sample.weight,
        unet.fim.res1.time_mlp[1].weight,
        unet.fim.attention.attention.out.weight,
        unet.up[0].sample.weight,
        unet.up[3].res2.conv2.weight,
        unet.final_block.conv1.weight,
        unet.output.weight,
    ]
    err = _finite_difference_check(lambda: _weighted_loss(model.predict_noise(x_t, x_mix, v, 7), weights), params)
    assert err < 1e-4, f"relativer Fehler {err:.2e}"

    with torch.no_grad():
        a = model.predict_noise(x_t, x_mix, v, 7)
        b = model.predict_noise(x_t, torch.rand(1, 1, 32, 32, dtype=torch.float64), v, 7)
    assert a.shape == x_t.shape
    assert float((a - b).norm()) > 0
    print(f"✅ Gesamtmodell: Gradienten (rel. Fehler {err:.1e}), Mischung wirkt")


def test_zero_output_at_init_and_determinism():
    torch.manual_seed(5)
    model = SeparatorModel(small_config()).eval()
    x = torch.randn(2, 1, 32, 32)
    v = torch.randn(2, 64)
    t = torch.tensor([3, 900])
    with torch.no_grad():
        first = model.predict_noise(x, x.abs(), v, t)
        second = model.predict_noise(x, x.abs(), v, t)
    assert torch.all(first == 0)
    assert torch.equal(first, second)
    try:
        model.predict_noise(x, torch.zeros(2, 1, 16, 16), v, t)
        assert False
    except ValueError:
        pass
    try:
        model.predict_noise(torch.zeros(1, 1, 24, 24), torch.zeros(1, 1, 24, 24), v[:1], 1)
        assert False
    except ValueError:
        pass
    print("✅ Ausgabe null bei Initialisierung, deterministisch")


def test_shape_contract_full_size():
    cfg = UNetConfig()
    assert bottleneck_shape(cfg) == (512, 16, 16)
    model = SeparatorModel(cfg).eval()
    assert len(model.unet.down) == 4 and len(model.unet.up) == 4

    with torch.no_grad():
        v = model.encode_frames(torch.randn(1, 3, 224, 224))
        assert v.shape == (1, 512)
        out = model.predict_noise(torch.randn(1, 1, 256, 256), torch.rand(1, 1, 256, 256), v, 1000)
    assert out.shape == (1, 1, 256, 256)
    assert tuple(model.unet.last_bottleneck.shape) == (1, 512, 16, 16)
    print(f"✅ 256×256 → Engpass 512×16×16 → 256×256 ({model.parameter_count():,} Parameter)")


def test_config_validation():
    for bad in (dict(block_variant="unbekannt"), dict(grid_height=40), dict(embedding_source="clip")):
        try:
            small_config(**bad).validate()
            assert False, f"{bad} muss abgelehnt werden"
        except ValueError:
            pass
    try:
        small_config(block_variant="time_freq_efficient").validate()
        assert False
    except NotImplementedError:
        pass
    print("✅ Konfigurationsprüfung")


def test_visual_encoder():
    torch.manual_seed(6)
    encoder = ConvVisualEncoder(512, width=8).eval()
    image = torch.randn(1, 3, 224, 224)
    with torch.no_grad():
        a = encoder(torch.cat([image, image]))
    assert a.shape == (2, 512)
    assert torch.equal(a[0], a[1])
    try:
        encoder(torch.randn(1, 1, 224, 224))
        assert False
    except ValueError:
        pass

    model = SeparatorModel(small_config(freeze_visual=True))
    assert not any(p.requires_grad for p in model.visual.parameters())
    model.set_visual_frozen(False)
    assert all(p.requires_grad for p in model.visual.parameters())
    print("✅ Visueller Encoder: Dimension, Determinismus, Einfrieren")


def test_precomputed_embeddings():
    table = np.arange(12, dtype=np.float32).reshape(3, 4)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "emb.dcnt")
        write_container(path, {"embeddings": table}, metadata={"keys": ["a.png", "b.png", "c.png"]})
        emb = PrecomputedEmbeddings(path, 4)
        assert "b.png" in emb
        assert torch.equal(emb.lookup(["c.png", "a.png"]), torch.from_numpy(table[[2, 0]]))
        try:
            emb.lookup(["x.png"])
            assert False
        except KeyError:
            pass
        try:
            PrecomputedEmbeddings(path, 8)
            assert False
        except ValueError:
            pass

        # relative Schlüssel gelten ab dem Verzeichnis der Tabelle
        nested = os.path.join(tmp, "emb_rel.dcnt")
        write_container(nested, {"embeddings": table},
                        metadata={"keys": ["frames/a.png", "clip#0", os.path.join(tmp, "abs", "c.png")]})
        emb = PrecomputedEmbeddings(nested, 4)
        manifest_key = os.path.normpath(os.path.join(tmp, "frames", "a.png"))
        assert manifest_key in emb
        assert torch.equal(emb.lookup([manifest_key]), torch.from_numpy(table[[0]]))
        assert torch.equal(emb.lookup([os.path.join(tmp, "frames", "..", "frames", "a.png")]),
                           torch.from_numpy(table[[0]]))
        assert torch.equal(emb.lookup(["clip#0", os.path.join(tmp, "abs", "c.png")]),
                           torch.from_numpy(table[[1, 2]]))
        assert os.path.join(tmp, "b.png") not in emb
    print("✅ Vorberechnete Einbettungen, relative Schlüssel ab dem Tabellenverzeichnis")


def main():
    tests = [
        test_film_block_identity_at_init,
        test_film_block_gradients,
        test_time_attention,
        test_joint_attention_rows,
        test_feature_interaction,
        test_ca_block_directions,
        test_full_model_gradients,
        test_zero_output_at_init_and_determinism,
        test_shape_contract_full_size,
        test_config_validation,
        test_visual_encoder,
        test_precomputed_embeddings,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"❌ {test.__name__}: {e}")
    print("=" * 60)
    print("🎉 ALLE TESTS BESTANDEN!" if not failed else f"⚠️  {failed} TESTS FEHLGESCHLAGEN!")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
