"""Lesen und Schreiben von Mediendateien (WAV-Audio, PNG-Bilder)."""

import os

import numpy as np
from scipy import signal
from scipy.io import wavfile

from calculations.spectrogram import Waveform

WAV_SUBTYPES = ("pcm16", "float32")


class MediaError(OSError):
    """Mediendatei fehlt oder ist nicht lesbar."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


def read_wav(path: str, sample_rate: int = None) -> Waveform:
    """
    Liest eine WAV-Datei als Mono-Waveform (Werte etwa in [-1, 1]).

    Args:
        path: WAV-Datei (PCM 16/32 bit oder float)
        sample_rate: Zielabtastrate; bei Abweichung wird polyphas umgetastet

    Returns:
        Waveform
    """
    if not os.path.exists(path):
        raise MediaError(path, "Datei nicht gefunden")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, OSError) as e:
        raise MediaError(path, f"WAV nicht lesbar ({e})") from e

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    if sample_rate is not None and rate != sample_rate:
        g = np.gcd(int(rate), int(sample_rate))
        samples = signal.resample_poly(samples, sample_rate // g, rate // g)
        rate = sample_rate
    try:
        return Waveform(samples, int(rate))
    except ValueError as e:
        raise MediaError(path, str(e)) from e


def write_wav(path: str, w: Waveform, subtype: str = "float32") -> None:
    """Schreibt eine Waveform als WAV (float32 oder 16-bit PCM)."""
    if subtype not in WAV_SUBTYPES:
        raise ValueError(f"Unbekanntes WAV-Format: {subtype}. Verfügbar: {', '.join(WAV_SUBTYPES)}")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    if subtype == "pcm16":
        data = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(path, w.sample_rate, data)


def read_image(path: str) -> np.ndarray:
    """Liest ein Bild als RGB-Array (H × W × 3, float in [0, 1])."""
    import matplotlib.image as mpimg

    if not os.path.exists(path):
        raise MediaError(path, "Datei nicht gefunden")
    try:
        image = mpimg.imread(path)
    except (ValueError, OSError, SyntaxError) as e:
        raise MediaError(path, f"Bild nicht lesbar ({e})") from e

    image = np.asarray(image)
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / 255.0
    if image.ndim == 2:
        image = np.stack([image] * 3, axis=-1)
    return np.asarray(image[..., :3], dtype=np.float32)


def write_image(path: str, image: np.ndarray) -> None:
    """Schreibt ein RGB-Array (Werte in [0, 1]) als PNG ohne Zeitstempel-Metadaten."""
    import matplotlib.pyplot as plt

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    plt.imsave(path, np.clip(image, 0.0, 1.0), format="png", metadata={"Software": None})
