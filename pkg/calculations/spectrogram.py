"""Spektrogramm-Berechnungen: STFT/ISTFT, Magnitudenskalierung und Rasterung.

Die Netzwerk-Darstellung ist ein Raster [Frequenz × Zeit]. Magnituden werden
logarithmisch komprimiert (ln(1+x)·σ, auf [0, 1] begrenzt) und per bilinearer
Interpolation auf das Netzwerkraster (Standard 256×256) gebracht.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import signal
from scipy.interpolate import RegularGridInterpolator


@dataclass
class SpectrogramConfig:
    """Standardwerte für die Spektrogramm-Pipeline."""
    sample_rate: int = 11025        # Hz ("11 kHz")
    window_size: int = 1022         # Hann-Fenster, F = 512
    hop_length: int = 256
    grid_height: int = 256          # Frequenzachse im Netz
    grid_width: int = 256           # Zeitachse im Netz
    sigma: float = 0.15             # Skalierungsfaktor

    @property
    def grid(self) -> Tuple[int, int]:
        return (self.grid_height, self.grid_width)


@dataclass
class Waveform:
    """Mono-Audiosignal mit Abtastrate."""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"Abtastrate muss positiv sein: {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Waveform enthält NaN/Inf")

    @property
    def duration(self) -> float:
        """Dauer in Sekunden."""
        return len(self.samples) / self.sample_rate

    def fit_length(self, num_samples: int) -> "Waveform":
        """Zentriert beschneiden bzw. mit Nullen auffüllen."""
        n = len(self.samples)
        if n == num_samples:
            return self
        if n > num_samples:
            start = (n - num_samples) // 2
            return Waveform(self.samples[start:start + num_samples], self.sample_rate)
        padded = np.zeros(num_samples)
        start = (num_samples - n) // 2
        padded[start:start + n] = self.samples
        return Waveform(padded, self.sample_rate)


@dataclass
class ComplexSpectrogram:
    """Magnitude und Phase einer STFT auf einem F×T-Raster."""
    magnitude: np.ndarray
    phase: np.ndarray
    window_size: int
    hop_length: int
    sample_rate: int

    def __post_init__(self):
        if self.magnitude.shape != self.phase.shape:
            raise ValueError(
                f"Form von Magnitude {self.magnitude.shape} und Phase "
                f"{self.phase.shape} stimmt nicht überein"
            )
        if self.magnitude.shape[0] != self.window_size // 2 + 1:
            raise ValueError(
                f"F={self.magnitude.shape[0]} passt nicht zu Fenster {self.window_size}"
            )
        if np.any(self.magnitude < 0):
            raise ValueError("Magnitude muss nichtnegativ sein")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.magnitude.shape

    @property
    def num_frames(self) -> int:
        return self.magnitude.shape[1]

    def to_complex(self) -> np.ndarray:
        return self.magnitude * np.exp(1j * self.phase)


@dataclass
class ScaledMagnitude:
    """Skaliertes Magnitudenraster (Diffusionszustand x_t, Daten in [0, 1])."""
    values: np.ndarray
    sigma: float
    source_shape: Tuple[int, int] = field(default=None)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma muss positiv sein: {self.sigma}")
        if self.source_shape is None:
            self.source_shape = tuple(self.values.shape)
        self.source_shape = tuple(int(s) for s in self.source_shape)


def hann_window(window_size: int) -> np.ndarray:
    """Periodisches Hann-Fenster."""
    return signal.get_window("hann", window_size, fftbins=True)


def _check_overlap(window_size: int, hop_length: int) -> np.ndarray:
    """Prüft die Überlappungsbedingung (NOLA) und liefert das Fenster."""
    if window_size % 2 != 0:
        raise ValueError(f"Fenstergröße muss gerade sein: {window_size}")
    if hop_length <= 0 or hop_length > window_size:
        raise ValueError(f"Ungültige Hop-Länge {hop_length} für Fenster {window_size}")
    window = hann_window(window_size)
    if not signal.check_NOLA(window, window_size, window_size - hop_length):
        raise ValueError(
            f"Fenster {window_size}/Hop {hop_length} erfüllt die Überlappungsbedingung nicht"
        )
    return window


def stft(w: Waveform, window_size: int = 1022, hop_length: int = 256) -> ComplexSpectrogram:
    """
    Kurzzeit-Fouriertransformation ohne Randauffüllung.

    Frame k beginnt bei Sample k·hop_length; es entstehen
    1 + (N − window_size) // hop_length Frames.

    Args:
        w: Eingangssignal
        window_size: Fensterlänge in Samples (gerade)
        hop_length: Versatz zwischen Frames in Samples

    Returns:
        ComplexSpectrogram mit F = window_size/2 + 1 Bins
    """
    window = _check_overlap(window_size, hop_length)
    if len(w.samples) < window_size:
        raise ValueError(
            f"Eingabe zu kurz: {len(w.samples)} Samples < Fenster {window_size}"
        )

    frames = np.lib.stride_tricks.sliding_window_view(w.samples, window_size)[::hop_length]
    spectrum = np.fft.rfft(frames * window, axis=1).T

    return ComplexSpectrogram(
        magnitude=np.abs(spectrum),
        phase=np.angle(spectrum),
        window_size=window_size,
        hop_length=hop_length,
        sample_rate=w.sample_rate,
    )


def istft(s: ComplexSpectrogram) -> Waveform:
    """
    Inverse STFT per Least-Squares-Overlap-Add.

    Länge des Ergebnisses: hop_length·(T − 1) + window_size.
    Samples, an denen die Fenstersumme verschwindet (äußerste Ränder),
    werden auf 0 gesetzt.
    """
    window = _check_overlap(s.window_size, s.hop_length)
    n_frames = s.num_frames
    length = s.hop_length * (n_frames - 1) + s.window_size

    frames = np.fft.irfft(s.to_complex(), n=s.window_size, axis=0).T * window

    output = np.zeros(length)
    norm = np.zeros(length)
    window_sq = window ** 2
    for k in range(n_frames):
        start = k * s.hop_length
        output[start:start + s.window_size] += frames[k]
        norm[start:start + s.window_size] += window_sq

    valid = norm > 1e-10 * norm.max()
    output[valid] /= norm[valid]
    output[~valid] = 0.0

    return Waveform(output, s.sample_rate)


def scale_magnitude(m: np.ndarray, sigma: float = 0.15) -> ScaledMagnitude:
    """Skaliert Magnituden: clip(ln(1+m)·σ, 0, 1)."""
    m = np.asarray(m, dtype=np.float64)
    if sigma <= 0:
        raise ValueError(f"sigma muss positiv sein: {sigma}")
    if np.any(m < 0):
        raise ValueError("Magnitude muss nichtnegativ sein")
    values = np.clip(np.log1p(m) * sigma, 0.0, 1.0)
    return ScaledMagnitude(values=values, sigma=sigma, source_shape=m.shape)


def unscale_magnitude(s: ScaledMagnitude) -> np.ndarray:
    """Kehrt die Skalierung um: e^(v/σ) − 1, negative Werte werden 0."""
    return np.maximum(np.expm1(np.asarray(s.values, dtype=np.float64) / s.sigma), 0.0)


def resample_grid(m: np.ndarray, target: Tuple[int, int]) -> np.ndarray:
    """
    Bilineare Interpolation eines 2-D-Rasters auf die Zielform.

    Align-Corners-Semantik: die Eckpunkte von Quelle und Ziel fallen
    zusammen, Zielpunkt i liegt bei i·(F−1)/(H−1). Bei gleicher Form
    ist die Abbildung exakt die Identität.
    """
    m = np.asarray(m, dtype=np.float64)
    height, width = int(target[0]), int(target[1])
    if height < 2 or width < 2:
        raise ValueError(f"Zielraster muss mindestens 2×2 sein: {target}")
    if m.ndim != 2 or m.shape[0] < 2 or m.shape[1] < 2:
        raise ValueError(f"Quellraster muss 2-D und mindestens 2×2 sein: {m.shape}")
    if m.shape == (height, width):
        return m.copy()

    rows = np.arange(m.shape[0], dtype=np.float64)
    cols = np.arange(m.shape[1], dtype=np.float64)
    interpolator = RegularGridInterpolator((rows, cols), m, method="linear")

    target_rows = np.linspace(0.0, m.shape[0] - 1, height)
    target_cols = np.linspace(0.0, m.shape[1] - 1, width)
    grid_r, grid_c = np.meshgrid(target_rows, target_cols, indexing="ij")
    points = np.stack([grid_r.ravel(), grid_c.ravel()], axis=-1)
    return interpolator(points).reshape(height, width)


def to_network(spec: ComplexSpectrogram, cfg: SpectrogramConfig) -> ScaledMagnitude:
    """Magnitude → Netzwerkraster → Skalierung."""
    resampled = resample_grid(spec.magnitude, cfg.grid)
    scaled = scale_magnitude(resampled, cfg.sigma)
    scaled.source_shape = spec.shape
    return scaled


def reconstruct_waveform(sep: ScaledMagnitude, mix: ComplexSpectrogram) -> Waveform:
    """
    Rekonstruiert ein Signal aus einer geschätzten skalierten Magnitude.

    Ablauf: Entskalieren → Rückinterpolation auf (F, T) → Kombination mit
    der Mischungsphase → ISTFT.
    """
    if tuple(sep.source_shape) != tuple(mix.shape):
        raise ValueError(
            f"Formangabe der Schätzung {sep.source_shape} passt nicht zur "
            f"Mischung {mix.shape}"
        )
    magnitude = resample_grid(unscale_magnitude(sep), mix.shape)
    magnitude = np.maximum(magnitude, 0.0)
    estimate = ComplexSpectrogram(
        magnitude=magnitude,
        phase=mix.phase,
        window_size=mix.window_size,
        hop_length=mix.hop_length,
        sample_rate=mix.sample_rate,
    )
    return istft(estimate)


def save_spectrogram(path: str, s: ComplexSpectrogram) -> None:
    """Speichert ein Spektrogramm als .dspec-Container."""
    from utils.array_container import write_container

    write_container(
        path,
        {"magnitude": s.magnitude, "phase": s.phase},
        metadata={
            "kind": "spectrogram",
            "window_size": s.window_size,
            "hop_length": s.hop_length,
            "sample_rate": s.sample_rate,
        },
    )


def load_spectrogram(path: str) -> ComplexSpectrogram:
    """Lädt ein mit save_spectrogram gespeichertes Spektrogramm."""
    from utils.array_container import ContainerError, read_container

    arrays, metadata = read_container(path)
    if metadata.get("kind") != "spectrogram":
        raise ContainerError(f"{path} enthält kein Spektrogramm")
    return ComplexSpectrogram(
        magnitude=arrays["magnitude"],
        phase=arrays["phase"],
        window_size=int(metadata["window_size"]),
        hop_length=int(metadata["hop_length"]),
        sample_rate=int(metadata["sample_rate"]),
    )


if __name__ == "__main__":
    # Beispiel: 440-Hz-Sinus
    cfg = SpectrogramConfig()
    t = np.arange(int(6 * cfg.sample_rate)) / cfg.sample_rate
    tone = Waveform(0.5 * np.sin(2 * np.pi * 440 * t), cfg.sample_rate)

    spec = stft(tone, cfg.window_size, cfg.hop_length)
    print(f"Spektrogramm: {spec.shape[0]} Bins × {spec.num_frames} Frames")
    print(f"Maximum bei Bin {int(np.argmax(spec.magnitude[:, 10]))}")

    scaled = to_network(spec, cfg)
    print(f"Netzwerkraster: {scaled.values.shape}, max {scaled.values.max():.3f}")
