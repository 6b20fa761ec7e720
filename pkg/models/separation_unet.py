"""Separation U-Net ε_θ(x_t, x_mix, v, t) mit CA-Blöcken und Feature Interaction Module.

Aufbau:
    [x_t, x_mix] → 1×1-Conv → 4 CA-Blöcke abwärts → FIM (mit visueller
    Einbettung) → 4 CA-Blöcke aufwärts (mit Skip-Verbindungen) →
    ResNet-Block mit Eingangsmerkmalen → 1×1-Conv (mit Null initialisiert) → ε̂

Bei 256×256 und base_channels = 64 hat der Engpass die Form 512×16×16.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import torch
import torch.nn as nn

from .layers import FiLMResnetBlock, JointAttention, TimeAttention, TimestepMLP
from .visual_encoder import ConvVisualEncoder

BLOCK_VARIANTS = ("time_attention", "resnet_only", "time_freq_efficient")
EMBEDDING_SOURCES = ("conv", "precomputed")


@dataclass
class UNetConfig:
    """Architekturparameter der Separation U-Net."""
    grid_height: int = 256
    grid_width: int = 256
    base_channels: int = 64
    channel_multipliers: List[int] = field(default_factory=lambda: [1, 2, 4, 8])
    attention_heads: int = 4
    time_embed_dim: int = 0             # 0 → 4·base_channels
    groups_for_norm: int = 8
    block_variant: str = "time_attention"
    visual_width: int = 32
    freeze_visual: bool = False
    embedding_source: str = "conv"

    @property
    def levels(self) -> List[int]:
        return [self.base_channels * m for m in self.channel_multipliers]

    @property
    def bottleneck_channels(self) -> int:
        return self.levels[-1]

    @property
    def time_dim(self) -> int:
        return self.time_embed_dim or 4 * self.base_channels

    @property
    def downsample_factor(self) -> int:
        return 2 ** len(self.channel_multipliers)

    def validate(self) -> None:
        factor = self.downsample_factor
        if self.grid_height % factor or self.grid_width % factor:
            raise ValueError(
                f"Raster {self.grid_height}×{self.grid_width} nicht durch {factor} teilbar"
            )
        if self.block_variant not in BLOCK_VARIANTS:
            raise ValueError(
                f"Unbekannte Blockvariante: {self.block_variant}. "
                f"Verfügbar: {', '.join(BLOCK_VARIANTS)}"
            )
        if self.block_variant == "time_freq_efficient":
            raise NotImplementedError(
                "Variante 'time_freq_efficient' (effiziente Zeit-Frequenz-Attention) ist nicht implementiert"
            )
        if self.embedding_source not in EMBEDDING_SOURCES:
            raise ValueError(f"Unbekannte Einbettungsquelle: {self.embedding_source}")
        if self.base_channels % 2:
            raise ValueError("base_channels muss gerade sein (Sinus-Einbettung)")


def _make_mixer(channels: int, cfg: UNetConfig) -> nn.Module:
    if cfg.block_variant == "resnet_only":
        return FiLMResnetBlock(channels, channels, cfg.time_dim, cfg.groups_for_norm)
    return TimeAttention(channels, cfg.attention_heads)


class CABlock(nn.Module):
    """
    Convolution-Attention-Block: ResNet → ResNet → Time-Attention → Ab-/Aufwärtstastung.

    Aufwärts wird die passende Skip-Verbindung vor den ResNet-Blöcken
    kanalweise angehängt.
    """

    def __init__(self, in_channels: int, out_channels: int, cfg: UNetConfig,
                 direction: str = "down", skip_channels: int = 0):
        super().__init__()
        if direction not in ("down", "up"):
            raise ValueError(f"Unbekannte Richtung: {direction}")
        self.direction = direction
        first_in = in_channels + (skip_channels if direction == "up" else 0)
        self.res1 = FiLMResnetBlock(first_in, out_channels, cfg.time_dim, cfg.groups_for_norm)
        self.res2 = FiLMResnetBlock(out_channels, out_channels, cfg.time_dim, cfg.groups_for_norm)
        self.mixer = _make_mixer(out_channels, cfg)
        if direction == "down":
            self.sample = nn.Conv2d(out_channels, out_channels, 3, stride=2, padding=1)
        else:
            self.sample = nn.ConvTranspose2d(out_channels, out_channels, 4, stride=2, padding=1)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor,
                skip: Optional[torch.Tensor] = None) -> torch.Tensor:
        if self.direction == "up":
            if skip is None:
                raise ValueError("Aufwärts-Block benötigt eine Skip-Verbindung")
            x = torch.cat([x, skip], dim=1)
        h = self.res1(x, t_emb)
        h = self.res2(h, t_emb)
        h = self.mixer(h, t_emb)
        return self.sample(h)


class FeatureInteraction(nn.Module):
    """
    Audio-visuelle Interaktion am Engpass.

    Die Einbettung v wird auf die Engpassgröße gekachelt, mit f_a verkettet
    (2C Kanäle), durch zwei FiLM-ResNet-Blöcke auf C reduziert und dann mit
    Attention über alle Frequenz-Zeit-Positionen verarbeitet.
    """

    def __init__(self, channels: int, cfg: UNetConfig):
        super().__init__()
        self.channels = channels
        self.res1 = FiLMResnetBlock(2 * channels, channels, cfg.time_dim, cfg.groups_for_norm)
        self.res2 = FiLMResnetBlock(channels, channels, cfg.time_dim, cfg.groups_for_norm)
        self.attention = JointAttention(channels, cfg.attention_heads)

    def forward(self, f_a: torch.Tensor, v: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        if v.dim() != 2 or v.shape[1] != self.channels:
            raise ValueError(
                f"Visuelle Einbettung hat Form {tuple(v.shape)}, erwartet (B, {self.channels})"
            )
        if f_a.shape[1] != self.channels:
            raise ValueError(f"Audio-Merkmale haben {f_a.shape[1]} Kanäle, erwartet {self.channels}")
        f_v = v[:, :, None, None].expand(-1, -1, f_a.shape[2], f_a.shape[3])
        h = torch.cat([f_a, f_v.to(f_a.dtype)], dim=1)
        h = self.res1(h, t_emb)
        h = self.res2(h, t_emb)
        return self.attention(h, t_emb)


class SeparationUNet(nn.Module):
    """Rauschschätzer ε_θ auf dem Netzwerkraster."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        levels = cfg.levels
        base = levels[0]

        self.time_mlp = TimestepMLP(cfg.base_channels, cfg.time_dim)
        self.input_proj = nn.Conv2d(2, base, 1)

        self.down = nn.ModuleList()
        down_out = []
        for i, channels in enumerate(levels):
            out_channels = levels[min(i + 1, len(levels) - 1)]
            self.down.append(CABlock(channels, out_channels, cfg, "down"))
            down_out.append(out_channels)

        self.fim = FeatureInteraction(cfg.bottleneck_channels, cfg)

        self.up = nn.ModuleList()
        channels = cfg.bottleneck_channels
        for i in reversed(range(len(levels))):
            self.up.append(CABlock(channels, levels[i], cfg, "up", skip_channels=down_out[i]))
            channels = levels[i]

        self.final_block = FiLMResnetBlock(channels + base, base, cfg.time_dim, cfg.groups_for_norm)
        self.output = nn.Conv2d(base, 1, 1)
        nn.init.zeros_(self.output.weight)
        nn.init.zeros_(self.output.bias)

        self.last_bottleneck: Optional[torch.Tensor] = None

    def forward(self, x_t: torch.Tensor, x_mix: torch.Tensor, v: torch.Tensor,
                t: torch.Tensor) -> torch.Tensor:
        if x_t.shape != x_mix.shape:
            raise ValueError(f"x_t {tuple(x_t.shape)} und x_mix {tuple(x_mix.shape)} verschieden")
        if x_t.dim() != 4 or x_t.shape[1] != 1:
            raise ValueError(f"Erwartet (B, 1, H, W), erhalten {tuple(x_t.shape)}")
        factor = self.cfg.downsample_factor
        if x_t.shape[2] % factor or x_t.shape[3] % factor:
            raise ValueError(f"Raster {tuple(x_t.shape[2:])} nicht durch {factor} teilbar")

        t_emb = self.time_mlp(t)
        h0 = self.input_proj(torch.cat([x_t, x_mix], dim=1))

        h = h0
        skips = []
        for block in self.down:
            h = block(h, t_emb)
            skips.append(h)
        self.last_bottleneck = h.detach()

        h = self.fim(h, v, t_emb)

        for block in self.up:
            h = block(h, t_emb, skips.pop())

        h = self.final_block(torch.cat([h, h0], dim=1), t_emb)
        return self.output(h)


class SeparatorModel(nn.Module):
    """Separation U-Net plus visueller Encoder."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.unet = SeparationUNet(cfg)
        self.cfg = cfg
        self.visual = ConvVisualEncoder(cfg.bottleneck_channels, cfg.visual_width, cfg.groups_for_norm)
        self.set_visual_frozen(cfg.freeze_visual)

    def set_visual_frozen(self, frozen: bool) -> None:
        self.cfg.freeze_visual = frozen
        for p in self.visual.parameters():
            p.requires_grad_(not frozen)

    def encode_frames(self, frames: torch.Tensor) -> torch.Tensor:
        """Bilder (B, 3, H, W) → Einbettungen (B, C)."""
        if self.cfg.freeze_visual:
            with torch.no_grad():
                return self.visual(frames)
        return self.visual(frames)

    def predict_noise(self, x_t: torch.Tensor, x_mix: torch.Tensor, v: torch.Tensor,
                      t: Union[int, torch.Tensor]) -> torch.Tensor:
        """ε̂ = ε_θ(x_t, x_mix, v, t); t als int oder Tensor (B,) in [1, T]."""
        if x_t.dim() == 3:
            x_t, x_mix = x_t[:, None], x_mix[:, None]
        if not torch.is_tensor(t):
            t = torch.full((x_t.shape[0],), int(t), dtype=torch.long, device=x_t.device)
        return self.unet(x_t, x_mix, v, t.to(x_t.device))

    def forward(self, x_t, x_mix, v, t):
        return self.predict_noise(x_t, x_mix, v, t)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def bottleneck_shape(cfg: UNetConfig) -> Tuple[int, int, int]:
    """Erwartete Engpassform (C, H/16, W/16) für die Konfiguration."""
    factor = cfg.downsample_factor
    return (cfg.bottleneck_channels, cfg.grid_height // factor, cfg.grid_width // factor)
