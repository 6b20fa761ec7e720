"""Datenbank der synthetischen Klangklassen für den Toy-Datensatz.

Jede Klasse verbindet eine Signalfamilie in einem eigenen Frequenzband mit
einem eigenen Bildmuster. Die Bänder (bezogen auf den Grundton) sind
disjunkt, ein einfacher Bandklassifikator trennt die Klassen also sicher.
"""

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

MAX_AMPLITUDE = 0.5


@dataclass
class ToyClass:
    """Klangklasse mit Frequenzband und Bildmuster."""
    name: str
    signal_family: str          # sine | chirp | harmonic | am
    band_min_hz: float
    band_max_hz: float
    pattern: str                # stripes_h | stripes_v | checker | rings
    color: Tuple[float, float, float]
    description: str

    @property
    def band(self) -> Tuple[float, float]:
        return (self.band_min_hz, self.band_max_hz)

    @property
    def center_hz(self) -> float:
        return 0.5 * (self.band_min_hz + self.band_max_hz)


class ToyClassDB:
    """Datenbank der vier Toy-Klassen (Reihenfolge ist die Klassennummer)."""

    TOY_CLASSES = {
        "sinus": ToyClass(
            name="sinus",
            signal_family="sine",
            band_min_hz=300.0,
            band_max_hz=500.0,
            pattern="stripes_h",
            color=(0.85, 0.2, 0.2),
            description="Reiner Sinuston",
        ),
        "chirp": ToyClass(
            name="chirp",
            signal_family="chirp",
            band_min_hz=900.0,
            band_max_hz=1100.0,
            pattern="stripes_v",
            color=(0.2, 0.75, 0.25),
            description="Linearer Sweep um die Mittenfrequenz (±40 Hz)",
        ),
        "obertoene": ToyClass(
            name="obertoene",
            signal_family="harmonic",
            band_min_hz=1300.0,
            band_max_hz=1500.0,
            pattern="checker",
            color=(0.2, 0.35, 0.9),
            description="Rechteckähnlicher Stapel ungerader Obertöne (1/k)",
        ),
        "am_ton": ToyClass(
            name="am_ton",
            signal_family="am",
            band_min_hz=1900.0,
            band_max_hz=2300.0,
            pattern="rings",
            color=(0.95, 0.8, 0.15),
            description="Amplitudenmodulierter Ton (4-8 Hz)",
        ),
    }

    @classmethod
    def get_class(cls, name: str) -> ToyClass:
        """Holt eine Klasse nach Namen."""
        if name not in cls.TOY_CLASSES:
            raise KeyError(f"Unbekannte Toy-Klasse: {name}")
        return cls.TOY_CLASSES[name]

    @classmethod
    def get_all_names(cls) -> List[str]:
        return list(cls.TOY_CLASSES.keys())

    @classmethod
    def get_classes(cls, num_classes: int) -> List[ToyClass]:
        """Die ersten num_classes Klassen."""
        if not 1 <= num_classes <= len(cls.TOY_CLASSES):
            raise ValueError(
                f"Anzahl Klassen muss in [1, {len(cls.TOY_CLASSES)}] liegen: {num_classes}"
            )
        return list(cls.TOY_CLASSES.values())[:num_classes]

    @classmethod
    def bands(cls) -> Dict[str, Tuple[float, float]]:
        return {name: c.band for name, c in cls.TOY_CLASSES.items()}

    @classmethod
    def classify_band(cls, samples: np.ndarray, sample_rate: int) -> str:
        """Klasse, in deren Band das Betragsspektrum sein Maximum hat."""
        spectrum = np.abs(np.fft.rfft(samples))
        freqs = np.fft.rfftfreq(len(samples), d=1.0 / sample_rate)
        peak = freqs[int(np.argmax(spectrum))]
        for name, (low, high) in cls.bands().items():
            if low <= peak <= high:
                return name
        return ""


def synthesize_signal(toy: ToyClass, num_samples: int, sample_rate: int,
                      rng: np.random.Generator) -> np.ndarray:
    """
    Erzeugt ein Klassensignal mit zufälligem Grundton, Phase und Amplitude.

    Der Spitzenwert liegt in [0.3, 0.5].
    """
    t = np.arange(num_samples) / sample_rate
    phase = rng.uniform(0.0, 2 * np.pi)
    low, high = toy.band

    if toy.signal_family == "sine":
        f0 = rng.uniform(low, high)
        sig = np.sin(2 * np.pi * f0 * t + phase)
    elif toy.signal_family == "chirp":
        f0 = rng.uniform(low + 40.0, high - 40.0)
        sweep = rng.choice([-1.0, 1.0]) * 80.0
        duration = num_samples / sample_rate
        # f(t) = f0 − sweep/2 + sweep·t/duration
        inst_phase = 2 * np.pi * ((f0 - sweep / 2) * t + sweep * t ** 2 / (2 * duration))
        sig = np.sin(inst_phase + phase)
    elif toy.signal_family == "harmonic":
        f0 = rng.uniform(low, high)
        sig = np.zeros(num_samples)
        for k in (1, 3, 5, 7):
            if k * f0 < sample_rate / 2:
                sig += np.sin(2 * np.pi * k * f0 * t + k * phase) / k
    elif toy.signal_family == "am":
        f0 = rng.uniform(low + 20.0, high - 20.0)
        f_mod = rng.uniform(4.0, 8.0)
        sig = (1.0 + 0.5 * np.sin(2 * np.pi * f_mod * t)) * np.sin(2 * np.pi * f0 * t + phase)
    else:
        raise ValueError(f"Unbekannte Signalfamilie: {toy.signal_family}")

    amplitude = rng.uniform(0.3, MAX_AMPLITUDE)
    peak = np.max(np.abs(sig))
    if peak > 0:
        sig = sig * (amplitude / peak)
    return sig


def draw_pattern(toy: ToyClass, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Zeichnet das Klassenmuster als RGB-Bild (size × size × 3, Werte in [0, 1]).

    Verschiebung, Helligkeit und ein leichtes Pixelrauschen werden zufällig
    variiert; das Muster selbst bleibt klassentypisch.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    period = size / 8.0
    shift = rng.uniform(0.0, period)

    if toy.pattern == "stripes_h":
        mask = np.sin(2 * np.pi * (yy + shift) / period) > 0
    elif toy.pattern == "stripes_v":
        mask = np.sin(2 * np.pi * (xx + shift) / period) > 0
    elif toy.pattern == "checker":
        mask = ((np.floor((xx + shift) / period) + np.floor((yy + shift) / period)) % 2) == 0
    elif toy.pattern == "rings":
        r = np.hypot(xx - size / 2, yy - size / 2)
        mask = np.sin(2 * np.pi * (r + shift) / period) > 0
    else:
        raise ValueError(f"Unbekanntes Muster: {toy.pattern}")

    brightness = rng.uniform(0.85, 1.0)
    color = np.asarray(toy.color) * brightness
    image = np.where(mask[..., None], color[None, None, :], 0.1)
    image = image + rng.normal(0.0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0)


if __name__ == "__main__":
    db = ToyClassDB()
    rng = np.random.default_rng(0)
    print("Verfügbare Toy-Klassen:")
    print("=" * 60)
    for name in db.get_all_names():
        toy = db.get_class(name)
        sig = synthesize_signal(toy, 11025, 11025, rng)
        print(f"{name:10s} {toy.band_min_hz:6.0f}-{toy.band_max_hz:6.0f} Hz  "
              f"Spitze {np.max(np.abs(sig)):.2f}  erkannt als {db.classify_band(sig, 11025)}")
