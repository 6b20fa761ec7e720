"""Generator für den synthetischen Audio-Bild-Datensatz.

Jedes Beispiel paart ein Klassensignal (zufälliger Grundton im Klassenband,
zufällige Phase und Amplitude) mit leicht variierten Bildern des
Klassenmusters. Gleicher Seed → identischer Datensatz.
"""

import json
import os
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from calculations.spectrogram import Waveform
from .toy_classes import ToyClassDB, draw_pattern, synthesize_signal

SPLITS = ("train", "val", "test")


@dataclass
class ToyDatasetConfig:
    """Parameter des Toy-Datensatzes."""
    num_classes: int = 4
    examples_per_class: int = 24
    duration: float = 6.0
    sample_rate: int = 11025
    frames_per_example: int = 3
    image_size: int = 256
    val_fraction: float = 0.125
    test_fraction: float = 0.125
    seed: int = 0

    def validate(self) -> None:
        ToyClassDB.get_classes(self.num_classes)
        if self.examples_per_class < 1:
            raise ValueError(f"examples_per_class muss positiv sein: {self.examples_per_class}")
        if self.frames_per_example < 1:
            raise ValueError("frames_per_example muss positiv sein")
        if not 0 <= self.val_fraction + self.test_fraction < 1:
            raise ValueError("val_fraction + test_fraction muss in [0, 1) liegen")


@dataclass
class ToyExample:
    """Ein generiertes Beispiel im Speicher."""
    audio: Waveform
    images: List[np.ndarray]
    source_id: str
    label: str
    split: str
    event: Optional[Tuple[float, float]] = None


def _split_counts(cfg: ToyDatasetConfig) -> Dict[str, int]:
    n_val = int(round(cfg.examples_per_class * cfg.val_fraction))
    n_test = int(round(cfg.examples_per_class * cfg.test_fraction))
    return {"train": cfg.examples_per_class - n_val - n_test, "val": n_val, "test": n_test}


def generate_toy_examples(cfg: ToyDatasetConfig = None) -> List[ToyExample]:
    """
    Erzeugt alle Beispiele deterministisch aus cfg.seed.

    Die Aufteilung in train/val/test erfolgt je Klasse, damit jede Klasse in
    jedem Split vertreten ist.
    """
    cfg = cfg or ToyDatasetConfig()
    cfg.validate()
    num_samples = int(round(cfg.duration * cfg.sample_rate))
    counts = _split_counts(cfg)
    examples = []

    for class_idx, toy in enumerate(ToyClassDB.get_classes(cfg.num_classes)):
        rng = np.random.default_rng([cfg.seed, class_idx])
        split_of = ["train"] * counts["train"] + ["val"] * counts["val"] + ["test"] * counts["test"]
        for idx, split in enumerate(split_of):
            samples = synthesize_signal(toy, num_samples, cfg.sample_rate, rng)
            images = [draw_pattern(toy, cfg.image_size, rng) for _ in range(cfg.frames_per_example)]
            examples.append(ToyExample(
                audio=Waveform(samples, cfg.sample_rate),
                images=images,
                source_id=f"{toy.name}_{idx:03d}",
                label=toy.name,
                split=split,
                event=(0.0, cfg.duration),
            ))
    return examples


def write_toy_dataset(cfg: ToyDatasetConfig, out_dir: str) -> Dict[str, str]:
    """
    Schreibt WAV-Dateien, PNG-Bilder, ein Manifest je Split und einen
    Konfigurationsschnappschuss nach out_dir.

    Returns:
        Split → Manifestpfad
    """
    from parsers.manifest_parser import ManifestParser
    from parsers.media_io import write_image, write_wav

    cfg.validate()
    try:
        os.makedirs(out_dir, exist_ok=True)
        marker = os.path.join(out_dir, ".schreibtest")
        with open(marker, "w", encoding="utf-8") as f:
            f.write("")
        os.remove(marker)
    except OSError as e:
        raise OSError(f"Ausgabeverzeichnis nicht beschreibbar: {out_dir} ({e})") from e

    lines: Dict[str, List[str]] = {split: [] for split in SPLITS}
    for ex in generate_toy_examples(cfg):
        audio_rel = os.path.join("audio", f"{ex.source_id}.wav")
        write_wav(os.path.join(out_dir, audio_rel), ex.audio, subtype="pcm16")
        frame_rels = []
        for k, image in enumerate(ex.images):
            rel = os.path.join("frames", f"{ex.source_id}_{k}.png")
            write_image(os.path.join(out_dir, rel), image)
            frame_rels.append(rel)
        lines[ex.split].append(
            ManifestParser.format_entry(audio_rel, frame_rels, ex.event, ex.source_id, ex.label)
        )

    manifests = {}
    for split in SPLITS:
        path = os.path.join(out_dir, f"manifest_{split}.tsv")
        ManifestParser.write_file(path, lines[split])
        manifests[split] = path

    with open(os.path.join(out_dir, "toy_config.json"), "w", encoding="utf-8") as f:
        json.dump({"toy_dataset": asdict(cfg), "classes": ToyClassDB.get_all_names()[:cfg.num_classes]},
                  f, indent=2, ensure_ascii=False)

    total = sum(len(v) for v in lines.values())
    print(f"✅ Toy-Datensatz erzeugt: {total} Beispiele, {cfg.num_classes} Klassen → {out_dir}")
    return manifests


def toy_memory_datasets(cfg: ToyDatasetConfig = None, data_cfg=None, spec_cfg=None) -> Dict[str, object]:
    """Split → MemoryDataset, ohne Dateien zu schreiben."""
    from .mixtures import DataConfig, MemoryDataset, apply_preset

    examples = generate_toy_examples(cfg)
    if data_cfg is None:
        data_cfg = apply_preset(DataConfig(), "toy")
    return {
        split: MemoryDataset([e for e in examples if e.split == split], data_cfg, spec_cfg)
        for split in SPLITS
    }


if __name__ == "__main__":
    examples = generate_toy_examples(ToyDatasetConfig(examples_per_class=4))
    for ex in examples:
        print(f"{ex.source_id:14s} {ex.split:5s} Spitze {np.max(np.abs(ex.audio.samples)):.2f}")
