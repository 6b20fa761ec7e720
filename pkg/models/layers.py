"""Bausteine der Separation U-Net.

Achsenkonvention aller Feature-Maps: (Batch, Kanäle, Frequenz, Zeit).
"""

import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F


class WSConv2d(nn.Conv2d):
    """Faltung mit standardisierten Gewichten (Mittelwert 0, Std 1 je Ausgabekanal)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3,
                 stride: int = 1, padding: int = 1, eps: float = 1e-5):
        super().__init__(in_channels, out_channels, kernel_size, stride, padding)
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        weight = self.weight
        mean = weight.mean(dim=(1, 2, 3), keepdim=True)
        var = weight.var(dim=(1, 2, 3), keepdim=True, unbiased=False)
        weight = (weight - mean) * torch.rsqrt(var + self.eps)
        return F.conv2d(x, weight, self.bias, self.stride, self.padding)


class FiLMResnetBlock(nn.Module):
    """
    ResNet-Block mit Zeitschritt-Konditionierung.

    WS-Conv → GroupNorm → (1+γ)·x + β → SiLU → WS-Conv → GroupNorm → SiLU,
    plus Residualpfad (1×1-Projektion bei abweichender Kanalzahl).
    Die Skalierung der letzten GroupNorm startet bei 0, der Block ist
    bei Initialisierung also die Identität des Residualpfads.
    """

    def __init__(self, in_channels: int, out_channels: int, time_dim: int, groups: int = 8):
        super().__init__()
        if out_channels % groups != 0:
            raise ValueError(f"{out_channels} Kanäle nicht durch {groups} Gruppen teilbar")
        self.time_dim = time_dim
        self.time_mlp = nn.Sequential(nn.SiLU(), nn.Linear(time_dim, 2 * out_channels))

        self.conv1 = WSConv2d(in_channels, out_channels, 3, padding=1)
        self.norm1 = nn.GroupNorm(groups, out_channels)
        self.conv2 = WSConv2d(out_channels, out_channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(groups, out_channels)
        nn.init.zeros_(self.norm2.weight)

        if in_channels != out_channels:
            self.residual = nn.Conv2d(in_channels, out_channels, 1)
        else:
            self.residual = nn.Identity()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        if t_emb.shape[-1] != self.time_dim:
            raise ValueError(
                f"Zeiteinbettung hat Dimension {t_emb.shape[-1]}, erwartet {self.time_dim}"
            )
        gamma, beta = self.time_mlp(t_emb).chunk(2, dim=-1)

        h = self.norm1(self.conv1(x))
        h = h * (1 + gamma[:, :, None, None]) + beta[:, :, None, None]
        h = F.silu(h)
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.residual(x)


class MultiHeadSelfAttention(nn.Module):
    """Multi-Head-Self-Attention über eine Tokenfolge (B, L, C)."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"{channels} Kanäle nicht durch {heads} Köpfe teilbar")
        self.heads = heads
        self.d_k = channels // heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.out = nn.Linear(channels, channels)
        self.last_weights: Optional[torch.Tensor] = None
        self.keep_weights = False

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n_batch, length, channels = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(n_batch, length, self.heads, self.d_k).transpose(1, 2)
        k = k.view(n_batch, length, self.heads, self.d_k).transpose(1, 2)
        v = v.view(n_batch, length, self.heads, self.d_k).transpose(1, 2)

        scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(self.d_k)
        weights = torch.softmax(scores, dim=-1)
        if self.keep_weights:
            self.last_weights = weights.detach()

        context = torch.matmul(weights, v).transpose(1, 2).reshape(n_batch, length, channels)
        return self.out(context)


class TimeAttention(nn.Module):
    """
    Pre-LN-Attention entlang der Zeitachse, für jede Frequenzzeile getrennt.

    Ohne Positionskodierung: eine Permutation der Zeitpositionen permutiert
    die Ausgabe identisch.
    """

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.attention = MultiHeadSelfAttention(channels, heads)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor = None) -> torch.Tensor:
        b, c, f, t = x.shape
        tokens = x.permute(0, 2, 3, 1).reshape(b * f, t, c)
        tokens = tokens + self.attention(self.norm(tokens))
        return tokens.reshape(b, f, t, c).permute(0, 3, 1, 2)


class JointAttention(nn.Module):
    """Pre-LN-Attention über alle Frequenz-Zeit-Positionen gemeinsam."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        self.norm = nn.LayerNorm(channels)
        self.attention = MultiHeadSelfAttention(channels, heads)

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor = None) -> torch.Tensor:
        b, c, f, t = x.shape
        tokens = x.flatten(2).transpose(1, 2)
        tokens = tokens + self.attention(self.norm(tokens))
        return tokens.transpose(1, 2).reshape(b, c, f, t)


class TimestepMLP(nn.Module):
    """Sinus-Einbettung des Zeitschritts → zweischichtiges MLP mit SiLU."""

    def __init__(self, base_channels: int, time_dim: int):
        super().__init__()
        self.base_channels = base_channels
        self.mlp = nn.Sequential(
            nn.Linear(base_channels, time_dim),
            nn.SiLU(),
            nn.Linear(time_dim, time_dim),
        )

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        from calculations.diffusion import timestep_embedding

        emb = timestep_embedding(t, self.base_channels)
        return self.mlp(emb.to(dtype=self.mlp[0].weight.dtype))
