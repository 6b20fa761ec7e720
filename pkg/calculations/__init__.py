"""Berechnungsmodule: Spektrogramme, Diffusion, BSS-Metriken, Training und Auswertung."""

from .spectrogram import SpectrogramConfig, Waveform, stft, istft
from .diffusion import DiffusionConfig, NoiseSchedule, make_schedule
from .bss_metrics import bss_decompose, bss_scores

__all__ = [
    'SpectrogramConfig',
    'Waveform',
    'stft',
    'istft',
    'DiffusionConfig',
    'NoiseSchedule',
    'make_schedule',
    'bss_decompose',
    'bss_scores',
]
