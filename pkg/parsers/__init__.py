"""Parser für Manifeste und Mediendateien."""

from .manifest_parser import ManifestEntry, ManifestError, ManifestParser
from .media_io import MediaError, read_image, read_wav, write_image, write_wav

__all__ = [
    'ManifestEntry',
    'ManifestError',
    'ManifestParser',
    'MediaError',
    'read_image',
    'read_wav',
    'write_image',
    'write_wav',
]
