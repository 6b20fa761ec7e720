"""Mix-and-Separate: Paarbildung, Bildauswahl, Datensätze und Batches.

Zwei Audio-Bild-Paare aus verschiedenen Quellen werden im Zeitbereich
summiert; Mischung und beide Quellen werden als skalierte Magnituden auf dem
Netzwerkraster bereitgestellt, die Mischungsphase bleibt für die
Rekonstruktion erhalten.

Zufall ist an (seed, epoch, Beispielindex) gebunden, die Batchfolge hängt
also nur vom Seed ab.
"""

import os
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from calculations.spectrogram import (
    ComplexSpectrogram,
    ScaledMagnitude,
    SpectrogramConfig,
    Waveform,
    stft,
    to_network,
)
from models.visual_encoder import IMAGE_MEAN, IMAGE_STD

FRAME_POLICIES = ("random_in_event", "fixed_index", "random_frame")
PAIRING_MODES = ("source", "label")

Frame = Union[str, np.ndarray]


@dataclass
class DataConfig:
    """Datenpipeline-Parameter; Presets setzen nur Standardwerte."""
    preset: str = "music"
    duration: float = 6.0               # Sekunden
    frame_policy: str = "random_frame"
    fixed_index: int = -1               # -1 → mittleres Bild
    resize: int = 256
    crop: int = 224
    rms_match: bool = False
    pairing: str = "source"
    pairs_per_epoch: int = 0            # 0 → len(dataset) // 2

    def validate(self) -> None:
        if self.duration <= 0:
            raise ValueError(f"duration muss positiv sein: {self.duration}")
        if self.frame_policy not in FRAME_POLICIES:
            raise ValueError(
                f"Unbekannte Bildauswahl: {self.frame_policy}. Verfügbar: {', '.join(FRAME_POLICIES)}"
            )
        if self.pairing not in PAIRING_MODES:
            raise ValueError(f"Unbekannte Paarbildung: {self.pairing}")
        if not 0 < self.crop <= self.resize:
            raise ValueError(f"crop ({self.crop}) muss in (0, resize={self.resize}] liegen")


DATA_PRESETS = {
    "music": {"duration": 6.0, "frame_policy": "random_frame"},
    "ave": {"duration": 10.0, "frame_policy": "random_in_event"},
    "toy": {"duration": 6.0, "frame_policy": "random_frame", "pairing": "label"},
}


def apply_preset(cfg: DataConfig, preset: str) -> DataConfig:
    """Setzt die Presetwerte auf cfg (in place) und gibt cfg zurück."""
    if preset not in DATA_PRESETS:
        raise ValueError(f"Unbekanntes Preset: {preset}. Verfügbar: {', '.join(DATA_PRESETS)}")
    cfg.preset = preset
    for key, value in DATA_PRESETS[preset].items():
        setattr(cfg, key, value)
    return cfg


@dataclass
class AudioVisualPair:
    """Audio fester Länge plus ein vorverarbeitetes Bild (3 × crop × crop)."""
    audio: Waveform
    frame: np.ndarray
    source_id: str
    label: str = ""
    frame_key: str = ""


@dataclass
class MixtureExample:
    """Mischung zweier Paare mit Zielen, Bildern und Mischungsspektrogramm."""
    x_mix: ScaledMagnitude
    targets: Tuple[ScaledMagnitude, ScaledMagnitude]
    frames: Tuple[np.ndarray, np.ndarray]
    mix_spec: ComplexSpectrogram
    mixture: Waveform
    sources: Tuple[Waveform, Waveform]
    source_ids: Tuple[str, str]
    labels: Tuple[str, str] = ("", "")
    frame_keys: Tuple[str, str] = ("", "")

    @property
    def mix_phase(self) -> np.ndarray:
        return self.mix_spec.phase


# ---------------------------------------------------------------------------
# Bildauswahl
# ---------------------------------------------------------------------------

def choose_frame_index(num_frames: int, policy: str, event: Optional[Tuple[float, float]] = None,
                       training: bool = False, rng: np.random.Generator = None,
                       fixed_index: int = -1) -> int:
    """
    Index des zu verwendenden Bildes (Bilder mit 1 fps, Bild i ↔ Sekunde i).

    Im Auswertemodus ist die Wahl deterministisch (Mitte des Fensters bzw.
    der Sequenz).
    """
    if num_frames <= 0:
        raise ValueError("Bildsequenz ist leer")
    if policy not in FRAME_POLICIES:
        raise ValueError(f"Unbekannte Bildauswahl: {policy}")

    if policy == "fixed_index":
        index = num_frames // 2 if fixed_index < 0 else fixed_index
        if index >= num_frames:
            raise ValueError(f"Bildindex {index} außerhalb der Sequenz (Länge {num_frames})")
        return index

    if policy == "random_in_event":
        if event is None:
            raise ValueError("Bildauswahl 'random_in_event' benötigt ein Ereignisfenster")
        start, end = event
        candidates = [i for i in range(num_frames) if start <= i <= end]
        if not candidates:
            candidates = [int(np.clip(round(0.5 * (start + end)), 0, num_frames - 1))]
    else:
        candidates = list(range(num_frames))

    if training:
        if rng is None:
            raise ValueError("Zufällige Bildauswahl im Training benötigt einen Generator")
        return int(candidates[rng.integers(len(candidates))])
    return int(candidates[len(candidates) // 2])


def preprocess_frame(image: np.ndarray, training: bool = False, rng: np.random.Generator = None,
                     resize: int = 256, crop: int = 224) -> np.ndarray:
    """
    RGB-Bild (H × W × 3) → normiertes Array (3 × crop × crop).

    Training: Skalieren auf resize × resize, dann zufälliger Ausschnitt.
    Auswertung: direktes Skalieren auf crop × crop.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"Bild muss die Form (H, W, 3) haben, erhalten {image.shape}")
    tensor = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))[None]

    if training:
        if rng is None:
            raise ValueError("Zufälliger Ausschnitt benötigt einen Generator")
        tensor = F.interpolate(tensor, size=(resize, resize), mode="bilinear", align_corners=False)
        top = int(rng.integers(0, resize - crop + 1))
        left = int(rng.integers(0, resize - crop + 1))
        tensor = tensor[:, :, top:top + crop, left:left + crop]
    else:
        tensor = F.interpolate(tensor, size=(crop, crop), mode="bilinear", align_corners=False)

    mean = torch.tensor(IMAGE_MEAN, dtype=torch.float32)[:, None, None]
    std = torch.tensor(IMAGE_STD, dtype=torch.float32)[:, None, None]
    return ((tensor[0] - mean) / std).numpy()


def sample_frame(video_frames: Sequence[Frame], policy: str, event: Optional[Tuple[float, float]] = None,
                 training: bool = False, rng: np.random.Generator = None, cfg: DataConfig = None
                 ) -> Tuple[np.ndarray, int]:
    """
    Wählt ein Bild nach der Policy und bereitet es vor.

    Einträge der Sequenz sind Bildpfade oder RGB-Arrays; nur das gewählte
    Bild wird geladen.

    Returns:
        (Array 3 × crop × crop, gewählter Index)
    """
    from parsers.media_io import read_image

    cfg = cfg or DataConfig()
    if len(video_frames) == 0:
        raise ValueError("Bildsequenz ist leer")
    index = choose_frame_index(len(video_frames), policy, event, training, rng, cfg.fixed_index)
    item = video_frames[index]
    image = read_image(item) if isinstance(item, str) else item
    return preprocess_frame(image, training, rng, cfg.resize, cfg.crop), index


# ---------------------------------------------------------------------------
# Mischen
# ---------------------------------------------------------------------------

def _rms(samples: np.ndarray) -> float:
    return float(np.sqrt(np.mean(samples ** 2)))


def mix_and_separate(p1: AudioVisualPair, p2: AudioVisualPair, spec_cfg: SpectrogramConfig = None,
                     rms_match: bool = False) -> MixtureExample:
    """
    Summiert zwei Paare und berechnet skalierte Magnituden von Mischung und Quellen.

    Args:
        p1, p2: Paare gleicher Länge und Abtastrate
        spec_cfg: Spektrogramm-Parameter
        rms_match: beide Quellen vor dem Mischen auf ihren gemeinsamen
                   geometrischen RMS-Mittelwert bringen

    Returns:
        MixtureExample
    """
    spec_cfg = spec_cfg or SpectrogramConfig()
    a1, a2 = p1.audio, p2.audio
    if a1.sample_rate != a2.sample_rate:
        raise ValueError(f"Abtastraten verschieden: {a1.sample_rate} Hz vs. {a2.sample_rate} Hz")
    if len(a1.samples) != len(a2.samples):
        raise ValueError(f"Längen verschieden: {len(a1.samples)} vs. {len(a2.samples)} Samples")

    s1, s2 = a1.samples, a2.samples
    if rms_match:
        r1, r2 = _rms(s1), _rms(s2)
        if r1 > 0 and r2 > 0:
            target = np.sqrt(r1 * r2)
            s1, s2 = s1 * (target / r1), s2 * (target / r2)
    src1 = Waveform(s1, a1.sample_rate)
    src2 = Waveform(s2, a2.sample_rate)
    mixture = Waveform(s1 + s2, a1.sample_rate)

    spec_mix = stft(mixture, spec_cfg.window_size, spec_cfg.hop_length)
    spec_1 = stft(src1, spec_cfg.window_size, spec_cfg.hop_length)
    spec_2 = stft(src2, spec_cfg.window_size, spec_cfg.hop_length)

    return MixtureExample(
        x_mix=to_network(spec_mix, spec_cfg),
        targets=(to_network(spec_1, spec_cfg), to_network(spec_2, spec_cfg)),
        frames=(p1.frame, p2.frame),
        mix_spec=spec_mix,
        mixture=mixture,
        sources=(src1, src2),
        source_ids=(p1.source_id, p2.source_id),
        labels=(p1.label, p2.label),
        frame_keys=(p1.frame_key, p2.frame_key),
    )


# ---------------------------------------------------------------------------
# Datensätze
# ---------------------------------------------------------------------------

class AudioVisualDataset:
    """Gemeinsame Logik für Datensätze aus Audio und Bildsequenzen."""

    def __init__(self, data_cfg: DataConfig = None, spec_cfg: SpectrogramConfig = None):
        self.data_cfg = data_cfg or DataConfig()
        self.spec_cfg = spec_cfg or SpectrogramConfig()
        self.data_cfg.validate()

    @property
    def num_samples(self) -> int:
        return int(round(self.data_cfg.duration * self.spec_cfg.sample_rate))

    def __len__(self) -> int:
        raise NotImplementedError

    def source_id(self, i: int) -> str:
        raise NotImplementedError

    def label(self, i: int) -> str:
        return ""

    def event(self, i: int) -> Optional[Tuple[float, float]]:
        return None

    def _audio(self, i: int) -> Waveform:
        raise NotImplementedError

    def _frames(self, i: int) -> Sequence[Frame]:
        raise NotImplementedError

    def _frame_key(self, i: int, index: int) -> str:
        item = self._frames(i)[index]
        return item if isinstance(item, str) else f"{self.source_id(i)}#{index}"

    def load_pair(self, i: int, training: bool = False, rng: np.random.Generator = None) -> AudioVisualPair:
        """Lädt Eintrag i als AudioVisualPair fester Länge."""
        audio = self._audio(i).fit_length(self.num_samples)
        frame, index = sample_frame(
            self._frames(i), self.data_cfg.frame_policy, self.event(i), training, rng, self.data_cfg
        )
        return AudioVisualPair(
            audio=audio,
            frame=frame,
            source_id=self.source_id(i),
            label=self.label(i),
            frame_key=self._frame_key(i, index),
        )

    def __getitem__(self, i: int) -> AudioVisualPair:
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.load_pair(i)

    def __iter__(self) -> Iterator[AudioVisualPair]:
        for i in range(len(self)):
            yield self.load_pair(i)


class ManifestDataset(AudioVisualDataset):
    """Datensatz aus einem Manifest; Medien werden erst beim Zugriff dekodiert."""

    def __init__(self, entries, data_cfg: DataConfig = None, spec_cfg: SpectrogramConfig = None,
                 manifest_path: str = ""):
        super().__init__(data_cfg, spec_cfg)
        self.entries = list(entries)
        self.manifest_path = manifest_path

    def __len__(self) -> int:
        return len(self.entries)

    def source_id(self, i: int) -> str:
        return self.entries[i].source_id

    def label(self, i: int) -> str:
        return self.entries[i].label

    def event(self, i: int) -> Optional[Tuple[float, float]]:
        return self.entries[i].event

    def _audio(self, i: int) -> Waveform:
        from parsers.media_io import read_wav

        return read_wav(self.entries[i].audio_path, self.spec_cfg.sample_rate)

    def _frames(self, i: int) -> Sequence[Frame]:
        return self.entries[i].frame_paths


class MemoryDataset(AudioVisualDataset):
    """Datensatz aus Objekten im Speicher (z. B. dem Toy-Generator)."""

    def __init__(self, items, data_cfg: DataConfig = None, spec_cfg: SpectrogramConfig = None):
        super().__init__(data_cfg, spec_cfg)
        self.items = list(items)

    def __len__(self) -> int:
        return len(self.items)

    def source_id(self, i: int) -> str:
        return self.items[i].source_id

    def label(self, i: int) -> str:
        return self.items[i].label

    def event(self, i: int) -> Optional[Tuple[float, float]]:
        return self.items[i].event

    def _audio(self, i: int) -> Waveform:
        return self.items[i].audio

    def _frames(self, i: int) -> Sequence[Frame]:
        return self.items[i].images


def load_manifest(path: str, data_cfg: DataConfig = None, spec_cfg: SpectrogramConfig = None
                  ) -> ManifestDataset:
    """
    Lädt ein Manifest als Datensatz.

    Alle referenzierten Dateien müssen existieren; fehlende Dateien werden
    mit Zeilennummer und Pfad gemeldet. Dekodiert wird erst beim Zugriff.
    """
    from parsers.manifest_parser import ManifestParser
    from parsers.media_io import MediaError

    entries = ManifestParser.parse_file(path)
    for entry in entries:
        for media in [entry.audio_path] + entry.frame_paths:
            if not os.path.exists(media):
                raise MediaError(media, f"Datei fehlt (Manifest {path}, Zeile {entry.line_no})")
    return ManifestDataset(entries, data_cfg, spec_cfg, manifest_path=path)


# ---------------------------------------------------------------------------
# Paarbildung und Batches
# ---------------------------------------------------------------------------

def pair_indices(num_items: int, group_of: Callable[[int], str], rng: np.random.Generator,
                 max_pairs: int = 0) -> List[Tuple[int, int]]:
    """
    Zufällige Paare (i, j) mit group_of(i) != group_of(j).

    Einträge ohne passenden Partner bleiben übrig.
    """
    pool = [int(i) for i in rng.permutation(num_items)]
    pairs = []
    while len(pool) >= 2:
        first = pool.pop(0)
        partner = next((k for k, j in enumerate(pool) if group_of(j) != group_of(first)), None)
        if partner is None:
            continue
        pairs.append((first, pool.pop(partner)))
        if max_pairs and len(pairs) >= max_pairs:
            break
    return pairs


def collate(examples: Sequence[MixtureExample]) -> Dict[str, object]:
    """Stapelt Beispiele zu Tensoren (B, 1, H, W) bzw. (B, 3, crop, crop)."""
    def stack_grid(values):
        return torch.from_numpy(np.stack(values).astype(np.float32))[:, None]

    return {
        "x_mix": stack_grid([e.x_mix.values for e in examples]),
        "x1": stack_grid([e.targets[0].values for e in examples]),
        "x2": stack_grid([e.targets[1].values for e in examples]),
        "frames1": torch.from_numpy(np.stack([e.frames[0] for e in examples]).astype(np.float32)),
        "frames2": torch.from_numpy(np.stack([e.frames[1] for e in examples]).astype(np.float32)),
        "keys1": [e.frame_keys[0] for e in examples],
        "keys2": [e.frame_keys[1] for e in examples],
        "examples": list(examples),
    }


class MixtureSampler:
    """Deterministische Mischungen und Batches eines Datensatzes."""

    EVAL_STREAM = 0xE7A1

    def __init__(self, dataset: AudioVisualDataset, seed: int = 0):
        if len(dataset) == 0:
            raise ValueError("Datensatz ist leer")
        self.dataset = dataset
        self.seed = int(seed)

    def _group_of(self) -> Callable[[int], str]:
        ds = self.dataset
        if ds.data_cfg.pairing == "label" and all(ds.label(i) for i in range(len(ds))):
            return ds.label
        return ds.source_id

    def _pairs(self, rng: np.random.Generator, max_pairs: int) -> List[Tuple[int, int]]:
        pairs = pair_indices(len(self.dataset), self._group_of(), rng, max_pairs)
        if not pairs:
            raise ValueError("Keine gültigen Paare: alle Einträge gehören zur selben Quelle")
        return pairs

    def epoch_pairs(self, epoch: int) -> List[Tuple[int, int]]:
        limit = self.dataset.data_cfg.pairs_per_epoch or len(self.dataset) // 2
        return self._pairs(np.random.default_rng([self.seed, epoch]), limit)

    def eval_pairs(self, max_mixtures: int = 0) -> List[Tuple[int, int]]:
        """Feste Paarung für Auswertungen (unabhängig von Trainingsepochen)."""
        return self._pairs(np.random.default_rng([self.seed, self.EVAL_STREAM]), max_mixtures)

    def build(self, i: int, j: int, training: bool, rng: np.random.Generator = None) -> MixtureExample:
        p1 = self.dataset.load_pair(i, training, rng)
        p2 = self.dataset.load_pair(j, training, rng)
        return mix_and_separate(p1, p2, self.dataset.spec_cfg, self.dataset.data_cfg.rms_match)

    def batches(self, epoch: int, batch_size: int, training: bool = True) -> Iterator[Dict[str, object]]:
        """Batches einer Epoche; Zufall je Beispiel aus (seed, epoch, k)."""
        if batch_size < 1:
            raise ValueError(f"batch_size muss positiv sein: {batch_size}")
        pairs = self.epoch_pairs(epoch)
        for start in range(0, len(pairs), batch_size):
            examples = []
            for k in range(start, min(start + batch_size, len(pairs))):
                rng = np.random.default_rng([self.seed, epoch, k])
                examples.append(self.build(*pairs[k], training=training, rng=rng))
            yield collate(examples)

    def num_batches(self, epoch: int, batch_size: int) -> int:
        return -(-len(self.epoch_pairs(epoch)) // batch_size)
