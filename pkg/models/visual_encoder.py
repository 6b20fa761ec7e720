"""Visuelle Encoder: Bild → globale Einbettung der Dimension C."""

import os
from typing import Dict, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

# Normierung der Eingabebilder (ImageNet-Statistik), Kanalreihenfolge RGB
IMAGE_MEAN = (0.485, 0.456, 0.406)
IMAGE_STD = (0.229, 0.224, 0.225)


class ConvVisualEncoder(nn.Module):
    """
    Kompaktes Faltungsnetz aus sechs Blöcken (Stride 2, GroupNorm, SiLU),
    globales Average-Pooling und lineare Projektion auf C Dimensionen.

    Erwartet normierte Bilder der Form (B, 3, H, W); H und W sind frei,
    Standard ist 224×224.
    """

    def __init__(self, embed_dim: int = 512, width: int = 32, groups: int = 8):
        super().__init__()
        widths = [width, 2 * width, 4 * width, 8 * width, 8 * width, 8 * width]
        layers = []
        in_channels = 3
        for out_channels in widths:
            layers += [
                nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1),
                nn.GroupNorm(groups, out_channels),
                nn.SiLU(),
            ]
            in_channels = out_channels
        self.backbone = nn.Sequential(*layers)
        self.project = nn.Linear(in_channels, embed_dim)
        self.embed_dim = embed_dim

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ValueError(f"Bild muss die Form (B, 3, H, W) haben, erhalten {tuple(image.shape)}")
        features = self.backbone(image)
        return self.project(features.mean(dim=(2, 3)))


class PrecomputedEmbeddings:
    """
    Extern berechnete Einbettungen, z. B. aus einem vortrainierten Backbone.

    Die Datei ist ein Array-Container mit einem Array "embeddings" (N × C)
    und der Metadaten-Liste "keys" (Bildschlüssel in Zeilenreihenfolge).
    Relative Bildpfade beziehen sich auf das Verzeichnis der Datei und
    passen so auch auf die absoluten Pfade eines Manifests.
    """

    def __init__(self, path: str, embed_dim: int):
        from utils.array_container import read_container

        arrays, metadata = read_container(path)
        table = np.asarray(arrays["embeddings"], dtype=np.float32)
        keys = metadata.get("keys", [])
        if table.ndim != 2 or table.shape[1] != embed_dim:
            raise ValueError(
                f"Einbettungen in {path} haben Form {table.shape}, erwartet (N, {embed_dim})"
            )
        if len(keys) != table.shape[0]:
            raise ValueError(f"{path}: {len(keys)} Schlüssel für {table.shape[0]} Einbettungen")
        self.path = path
        self.embed_dim = embed_dim
        base_dir = os.path.dirname(os.path.abspath(path))
        self._rows: Dict[str, np.ndarray] = {}
        for i, key in enumerate(keys):
            self._rows[key] = table[i]
            self._rows.setdefault(os.path.normpath(os.path.join(base_dir, key)), table[i])

    def _resolve(self, key: str) -> Optional[str]:
        if key in self._rows:
            return key
        resolved = os.path.normpath(os.path.abspath(key))
        return resolved if resolved in self._rows else None

    def __contains__(self, key: str) -> bool:
        return self._resolve(key) is not None

    def lookup(self, keys: Sequence[str]) -> torch.Tensor:
        resolved = [self._resolve(k) for k in keys]
        for key, row in zip(keys, resolved):
            if row is None:
                raise KeyError(f"Keine Einbettung für {key} in {self.path}")
        return torch.from_numpy(np.stack([self._rows[k] for k in resolved]))
