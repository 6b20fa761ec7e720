"""Netzwerke: Separation U-Net und visueller Encoder."""

from .separation_unet import SeparationUNet, SeparatorModel, UNetConfig
from .visual_encoder import ConvVisualEncoder, PrecomputedEmbeddings

__all__ = ['SeparationUNet', 'SeparatorModel', 'UNetConfig', 'ConvVisualEncoder', 'PrecomputedEmbeddings']
