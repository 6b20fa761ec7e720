"""Daten: Toy-Klassen, Toy-Generator und Mix-and-Separate-Pipeline."""

from .toy_classes import ToyClassDB
from .toy_dataset import ToyDatasetConfig, generate_toy_examples, write_toy_dataset
from .mixtures import DataConfig, MixtureSampler, load_manifest, mix_and_separate

__all__ = [
    'ToyClassDB',
    'ToyDatasetConfig',
    'generate_toy_examples',
    'write_toy_dataset',
    'DataConfig',
    'MixtureSampler',
    'load_manifest',
    'mix_and_separate',
]
