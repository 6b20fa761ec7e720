"""Parser für Manifest-Dateien (ein Audio-Bild-Paar pro Zeile).

Format (tabulatorgetrennt, UTF-8):

    audio.wav <TAB> bild1.png,bild2.png <TAB> start-ende|- <TAB> source_id [<TAB> label]

Zeilen mit führendem "#" und Leerzeilen werden übersprungen. Relative Pfade
beziehen sich auf das Verzeichnis des Manifests. Die Bilder liegen mit 1 fps
vor, Bild i gehört also zur Sekunde i.
"""

import os
from dataclasses import dataclass
from typing import List, Optional, Tuple


class ManifestError(ValueError):
    """Schemafehler in einer Manifest-Zeile."""

    def __init__(self, path: str, line_no: int, reason: str):
        super().__init__(f"{path}, Zeile {line_no}: {reason}")
        self.path = path
        self.line_no = line_no
        self.reason = reason


@dataclass
class ManifestEntry:
    """Ein Eintrag des Manifests mit aufgelösten Pfaden."""
    audio_path: str
    frame_paths: List[str]
    event: Optional[Tuple[float, float]]
    source_id: str
    label: str
    line_no: int


class ManifestParser:
    """Parser für Manifest-Dateien."""

    @staticmethod
    def parse_line(line: str, base_dir: str, path: str, line_no: int) -> ManifestEntry:
        fields = line.rstrip("\n").split("\t")
        if len(fields) not in (4, 5):
            raise ManifestError(path, line_no, f"4 oder 5 Felder erwartet, gefunden {len(fields)}")
        audio, frames, event_text, source_id = (f.strip() for f in fields[:4])
        label = fields[4].strip() if len(fields) == 5 else ""
        if label == "-":
            label = ""

        if not audio:
            raise ManifestError(path, line_no, "Audiopfad fehlt")
        frame_paths = [f.strip() for f in frames.split(",") if f.strip()]
        if not frame_paths:
            raise ManifestError(path, line_no, "Mindestens ein Bildpfad erforderlich")
        if not source_id:
            raise ManifestError(path, line_no, "source_id fehlt")

        event = None
        if event_text and event_text != "-":
            try:
                start, end = (float(x) for x in event_text.split("-", 1))
            except ValueError:
                raise ManifestError(path, line_no, f"Ereignisfenster ungültig: '{event_text}'")
            if not 0 <= start < end:
                raise ManifestError(path, line_no, f"Ereignisfenster leer oder negativ: '{event_text}'")
            event = (start, end)

        def resolve(p: str) -> str:
            return p if os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

        return ManifestEntry(
            audio_path=resolve(audio),
            frame_paths=[resolve(p) for p in frame_paths],
            event=event,
            source_id=source_id,
            label=label,
            line_no=line_no,
        )

    @classmethod
    def parse_file(cls, filepath: str) -> List[ManifestEntry]:
        """Liest alle Einträge; Schemafehler melden die Zeilennummer."""
        if not os.path.exists(filepath):
            raise FileNotFoundError(f"Manifest nicht gefunden: {filepath}")
        base_dir = os.path.dirname(os.path.abspath(filepath))
        entries = []
        with open(filepath, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                entries.append(cls.parse_line(line, base_dir, filepath, line_no))
        return entries

    @staticmethod
    def format_entry(audio: str, frames: List[str], event: Optional[Tuple[float, float]],
                     source_id: str, label: str = "") -> str:
        """Erzeugt eine Manifest-Zeile (ohne Zeilenumbruch)."""
        event_text = "-" if event is None else f"{event[0]:g}-{event[1]:g}"
        fields = [audio, ",".join(frames), event_text, source_id]
        if label:
            fields.append(label)
        return "\t".join(fields)

    @classmethod
    def write_file(cls, filepath: str, lines: List[str]) -> None:
        with open(filepath, "w", encoding="utf-8", newline="\n") as f:
            f.write("# audio\tframes\tevent\tsource_id\tlabel\n")
            for line in lines:
                f.write(line + "\n")
