"""Laufkonfiguration mit Versionierung, Validierung und Überschreibungen.

Die Konfiguration wird als JSON mit einem Abschnitt je Modul gespeichert
(file_format "DAVIS-RUN"). Unbekannte Abschnitte oder Schlüssel werden
abgelehnt, damit Tippfehler nicht still ignoriert werden.
"""

import json
import os
import zlib
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from calculations.diffusion import DiffusionConfig, make_schedule
from calculations.engine import InferConfig, TrainConfig
from calculations.spectrogram import SpectrogramConfig
from data.mixtures import DataConfig
from models.separation_unet import UNetConfig

CURRENT_FORMAT_VERSION = "1.0"
SUPPORTED_VERSIONS = ["1.0"]
FILE_FORMAT = "DAVIS-RUN"
DEVICE_ENV = "DAVIS_DEVICE"


class ConfigError(ValueError):
    """Ungültiger Konfigurationsschlüssel oder -wert."""

    def __init__(self, key: str, reason: str):
        super().__init__(f"{key}: {reason}")
        self.key = key
        self.reason = reason


@dataclass
class PathsConfig:
    """Pfade eines Laufs (relativ zum Arbeitsverzeichnis)."""
    out_dir: str = "runs/davis"
    train_manifest: str = ""
    val_manifest: str = ""
    eval_manifest: str = ""
    embeddings: str = ""


@dataclass
class RunConfig:
    """Gesamtkonfiguration; jeder Abschnitt entspricht einem Modul."""
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    model: UNetConfig = field(default_factory=UNetConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    @classmethod
    def sections(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: asdict(getattr(self, name)) for name in self.sections()}

    @classmethod
    def from_dict(cls, data: Dict[str, Dict[str, Any]]) -> "RunConfig":
        """Baut eine Konfiguration; fehlende Schlüssel behalten ihren Standardwert."""
        cfg = cls()
        for section, values in data.items():
            if section not in cls.sections():
                raise ConfigError(section, "unbekannter Abschnitt")
            if not isinstance(values, dict):
                raise ConfigError(section, "Abschnitt muss ein Objekt sein")
            for key, value in values.items():
                set_value(cfg, f"{section}.{key}", value)
        return cfg

    def set_seed(self, seed: int) -> None:
        self.train.seed = seed
        self.infer.seed = seed

    def validate(self) -> None:
        """Prüft Einzelwerte und Abhängigkeiten zwischen den Abschnitten."""
        checks = [
            ("model", self.model.validate),
            ("data", self.data.validate),
            ("train", self.train.validate),
            ("infer", lambda: self.infer.validate(self.diffusion.T)),
            ("diffusion", lambda: make_schedule(**asdict(self.diffusion))),
        ]
        for section, check in checks:
            try:
                check()
            except NotImplementedError as e:
                raise ConfigError(f"{section}", str(e)) from e
            except ValueError as e:
                if isinstance(e, ConfigError):
                    raise
                raise ConfigError(section, str(e)) from e

        spec = self.spectrogram
        if spec.sample_rate <= 0:
            raise ConfigError("spectrogram.sample_rate", "muss positiv sein")
        if spec.sigma <= 0:
            raise ConfigError("spectrogram.sigma", "muss positiv sein")
        if self.train.T != self.diffusion.T:
            raise ConfigError("train.T", f"{self.train.T} passt nicht zu diffusion.T={self.diffusion.T}")
        if self.train.sigma != spec.sigma:
            raise ConfigError("train.sigma", f"{self.train.sigma} passt nicht zu spectrogram.sigma={spec.sigma}")
        if (self.model.grid_height, self.model.grid_width) != spec.grid:
            raise ConfigError(
                "model.grid_height",
                f"Modellraster {self.model.grid_height}×{self.model.grid_width} ≠ Spektrogrammraster "
                f"{spec.grid_height}×{spec.grid_width}",
            )
        if self.model.embedding_source == "precomputed" and not self.paths.embeddings:
            raise ConfigError("paths.embeddings", "für embedding_source=precomputed erforderlich")


def _coerce(key: str, current: Any, value: Any) -> Any:
    """Wandelt value in den Typ des bisherigen Werts."""
    if isinstance(current, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "ja", "yes", "on"):
            return True
        if text in ("0", "false", "nein", "no", "off"):
            return False
        raise ConfigError(key, f"Wahrheitswert erwartet, erhalten '{value}'")
    try:
        if isinstance(current, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            items = value if isinstance(value, list) else [v for v in str(value).split(",") if v.strip()]
            kind = type(current[0]) if current else int
            return [kind(v) for v in items]
    except (TypeError, ValueError):
        raise ConfigError(key, f"{type(current).__name__} erwartet, erhalten '{value}'")
    return str(value)


def set_value(cfg: RunConfig, key: str, value: Any) -> None:
    """Setzt 'abschnitt.schlüssel' mit Typumwandlung."""
    if "." not in key:
        raise ConfigError(key, "Format abschnitt.schlüssel erwartet")
    section, name = key.split(".", 1)
    if section not in RunConfig.sections():
        raise ConfigError(key, f"unbekannter Abschnitt '{section}'")
    target = getattr(cfg, section)
    if name not in {f.name for f in fields(target)}:
        raise ConfigError(key, "unbekannter Schlüssel")
    setattr(target, name, _coerce(key, getattr(target, name), value))


def apply_overrides(cfg: RunConfig, overrides: List[str]) -> RunConfig:
    """Wendet '--set abschnitt.schlüssel=wert'-Angaben an (in place)."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(item, "Format abschnitt.schlüssel=wert erwartet")
        key, value = item.split("=", 1)
        set_value(cfg, key.strip(), value.strip())
    return cfg


def derive_seed(root: int, purpose: str) -> int:
    """Stabiler Seed je Verwendungszweck aus dem Wurzel-Seed."""
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(purpose.encode("utf-8"))])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def resolve_device(name: str = "") -> str:
    """Gerätename: explizit > Umgebungsvariable DAVIS_DEVICE > cuda falls verfügbar > cpu."""
    import torch

    name = name or os.environ.get(DEVICE_ENV, "")
    if name:
        return name
    return "cuda" if torch.cuda.is_available() else "cpu"


class RunConfigHandler:
    """Handler für Konfigurationsdateien mit Versionsprüfung."""

    def __init__(self):
        self.format_version = CURRENT_FORMAT_VERSION

    def export_to_file(self, filepath: str, cfg: RunConfig, notes: str = "") -> str:
        """
        Schreibt die Konfiguration als JSON.

        Args:
            filepath: Zieldatei (Endung .json wird ergänzt)
            cfg: Konfiguration
            notes: freier Kommentar

        Returns:
            Pfad der geschriebenen Datei
        """
        if not filepath.endswith(".json"):
            filepath += ".json"
        directory = os.path.dirname(filepath)
        if directory:
            os.makedirs(directory, exist_ok=True)

        data = {
            "file_format": FILE_FORMAT,
            "format_version": CURRENT_FORMAT_VERSION,
            "created_date": datetime.now().isoformat(timespec="seconds"),
            "notes": notes,
        }
        data.update(cfg.to_dict())
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        return filepath

    def import_from_file(self, filepath: str) -> RunConfig:
        """
        Liest und validiert eine Konfigurationsdatei.

        Raises:
            FileNotFoundError: Datei fehlt
            ConfigError: Format, Version, Schlüssel oder Werte ungültig
        """
        if not os.path.exists(filepath):
            raise FileNotFoundError(f"Konfigurationsdatei nicht gefunden: {filepath}")
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(filepath, f"JSON-Fehler ({e})") from e

        if data.get("file_format") != FILE_FORMAT:
            raise ConfigError("file_format", f"erwartet {FILE_FORMAT}")
        version = data.get("format_version", "")
        if version not in SUPPORTED_VERSIONS:
            raise ConfigError(
                "format_version",
                f"nicht unterstützt: {version}. Unterstützte Versionen: {', '.join(SUPPORTED_VERSIONS)}",
            )
        sections = {k: v for k, v in data.items()
                    if k not in ("file_format", "format_version", "created_date", "notes")}
        cfg = RunConfig.from_dict(sections)
        cfg.validate()
        return cfg

    def validate_file(self, filepath: str) -> Tuple[bool, str]:
        """(gültig, Beschreibung) für eine Konfigurationsdatei."""
        try:
            self.import_from_file(filepath)
        except (OSError, ValueError) as e:
            return False, f"Validierungsfehler: {e}"
        return True, f"✅ Gültige Konfiguration (Version {CURRENT_FORMAT_VERSION})"

    def get_file_info(self, filepath: str) -> Optional[Dict[str, Any]]:
        """Kurzinfo ohne vollständige Validierung."""
        try:
            with open(filepath, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            print(f"Fehler beim Lesen der Datei-Info: {e}")
            return None
        return {
            "format": data.get("file_format", "unbekannt"),
            "version": data.get("format_version", "unbekannt"),
            "created_date": data.get("created_date", "unbekannt"),
            "block_variant": data.get("model", {}).get("block_variant", ""),
            "T": data.get("diffusion", {}).get("T"),
            "seed": data.get("train", {}).get("seed"),
        }
