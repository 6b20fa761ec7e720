#!/usr/bin/env python3
"""
DAVIS Audio-visuelle Quellentrennung

Haupteinstiegspunkt (Kommandozeile):

    python main.py make-toy-data --out data/toy
    python main.py train --train-manifest data/toy/manifest_train.tsv --preset toy
    python main.py separate --mixture mix.wav --frame bild.png --checkpoint runs/davis/best.ckpt
    python main.py evaluate --checkpoint runs/davis/best.ckpt --manifest data/toy/manifest_test.tsv
    python main.py ablate --train-manifest ... --eval-manifest ...

Exit-Codes: 0 Erfolg, 1 Aufruf-/Konfigurationsfehler, 2 Laufzeitfehler.
"""

import argparse
import copy
import os
import sys
from typing import List, Optional

# Füge den aktuellen Ordner zum Python-Pfad hinzu
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    """Fehlerhafter Aufruf (Exit-Code 1)."""


class CliParser(argparse.ArgumentParser):
    """ArgumentParser, der bei Aufruffehlern mit Code 1 statt 2 endet."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Konfigurationsdatei (DAVIS-RUN JSON)")
    p.add_argument("--set", action="append", default=[], metavar="ABSCHNITT.SCHLÜSSEL=WERT",
                   help="Konfigurationswert überschreiben (mehrfach möglich)")
    p.add_argument("--seed", type=int, help="Wurzel-Seed für alle Zufallsquellen")
    p.add_argument("--device", help="torch-Gerät (Standard: $DAVIS_DEVICE bzw. automatisch)")


def build_parser() -> argparse.ArgumentParser:
    from calculations.evaluation import ABLATION_STEPS, ABLATION_VARIANTS, EVAL_MODES
    from data.mixtures import DATA_PRESETS

    parser = CliParser(prog="davis", description="Audio-visuelle Quellentrennung mit bedingter Diffusion")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("make-toy-data", help="Synthetischen Audio-Bild-Datensatz erzeugen")
    p.add_argument("--out", required=True, help="Ausgabeverzeichnis")
    p.add_argument("--classes", type=int, default=4, help="Anzahl Klassen (1-4)")
    p.add_argument("--per-class", type=int, default=24, help="Beispiele je Klasse")
    p.add_argument("--duration", type=float, default=6.0, help="Clipdauer in Sekunden")
    p.add_argument("--frames", type=int, default=3, help="Bilder je Beispiel")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="Modell trainieren")
    _add_config_args(p)
    p.add_argument("--train-manifest", help="Manifest der Trainingsdaten")
    p.add_argument("--val-manifest", help="Manifest der Validierungsdaten")
    p.add_argument("--preset", choices=sorted(DATA_PRESETS), help="Datenpreset")
    p.add_argument("--out", help="Ausgabeverzeichnis (Checkpoints, Log)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="Lernrate")
    p.add_argument("--resume", help="Checkpoint zum Fortsetzen")
    p.add_argument("--no-progress", action="store_true", help="Fortschrittsbalken ausblenden")

    p = sub.add_parser("separate", help="Quelle zu einem Bild aus einer Mischung trennen")
    _add_config_args(p)
    p.add_argument("--mixture", required=True, help="Mischung (WAV)")
    p.add_argument("--frame", required=True, help="Bild der Zielquelle (PNG)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--steps", type=int, help="DDIM-Schritte (Standard 25)")
    p.add_argument("--sampler", choices=["ddim", "ddpm"])
    p.add_argument("--eta", type=float)
    p.add_argument("--out", default="separated.wav", help="Ausgabe-WAV")
    p.add_argument("--emit-plots", action="store_true", help="Spektrogramme als PNG schreiben")
    p.add_argument("--ema", action="store_true", help="EMA-Gewichte verwenden")

    p = sub.add_parser("evaluate", help="SDR/SIR/SAR auf festen Mischungspaaren")
    _add_config_args(p)
    p.add_argument("--manifest", help="Auswertemanifest")
    p.add_argument("--checkpoint", help="Checkpoint (für --mode model)")
    p.add_argument("--mode", choices=list(EVAL_MODES), default="model")
    p.add_argument("--steps", type=int)
    p.add_argument("--max-mixtures", type=int)
    p.add_argument("--out", default="eval", help="Ausgabeverzeichnis")
    p.add_argument("--pdf", action="store_true", help="PDF-Bericht erzeugen")
    p.add_argument("--swap", action="store_true", help="Konditionierungstausch (Toy-Klassen)")

    p = sub.add_parser("ablate", help="Blockvarianten und Schrittzahlen vergleichen")
    _add_config_args(p)
    p.add_argument("--train-manifest")
    p.add_argument("--val-manifest")
    p.add_argument("--eval-manifest")
    p.add_argument("--preset", choices=sorted(DATA_PRESETS))
    p.add_argument("--variant", action="append", choices=list(ABLATION_VARIANTS),
                   help="Blockvariante (mehrfach möglich, Standard: alle)")
    p.add_argument("--steps", type=int, nargs="+", default=list(ABLATION_STEPS))
    p.add_argument("--checkpoint", action="append", default=[], metavar="VARIANTE=PFAD",
                   help="Vorhandenen Checkpoint verwenden statt zu trainieren")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="Ausgabeverzeichnis")
    p.add_argument("--pdf", action="store_true")
    p.add_argument("--no-progress", action="store_true")
    return parser


# ---------------------------------------------------------------------------
# Konfiguration
# ---------------------------------------------------------------------------

def build_run_config(args, base=None):
    """Konfigurationsdatei bzw. Basis → Preset → --set → dedizierte Flags."""
    from data.mixtures import apply_preset
    from utils.run_config import RunConfig, RunConfigHandler, apply_overrides

    if getattr(args, "config", None):
        cfg = RunConfigHandler().import_from_file(args.config)
    else:
        cfg = copy.deepcopy(base) if base is not None else RunConfig()
    if getattr(args, "preset", None):
        apply_preset(cfg.data, args.preset)
    apply_overrides(cfg, getattr(args, "set", []))
    if getattr(args, "seed", None) is not None:
        cfg.set_seed(args.seed)
    if getattr(args, "device", None):
        cfg.train.device = args.device
    for flag, key in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "learning_rate")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg.train, key, value)
    for flag in ("steps", "sampler", "eta"):
        value = getattr(args, flag, None)
        if value is not None and not isinstance(value, list):
            setattr(cfg.infer, flag, value)
    if getattr(args, "out", None) and args.command in ("train", "ablate"):
        cfg.paths.out_dir = args.out
    for flag in ("train_manifest", "val_manifest", "eval_manifest"):
        value = getattr(args, flag, None)
        if value:
            setattr(cfg.paths, flag, value)
    if getattr(args, "manifest", None):
        cfg.paths.eval_manifest = args.manifest
    cfg.validate()
    return cfg


def _snapshot(cfg, directory: str) -> None:
    from utils.run_config import RunConfigHandler

    RunConfigHandler().export_to_file(os.path.join(directory or ".", "run_config.json"), cfg)


def _require(path: str, what: str) -> str:
    from utils.run_config import ConfigError

    if not path:
        raise ConfigError(what, "Pfad fehlt")
    return path


def _datasets(cfg, *keys):
    from data.mixtures import load_manifest

    return [load_manifest(getattr(cfg.paths, k), cfg.data, cfg.spectrogram) if getattr(cfg.paths, k) else None
            for k in keys]


# ---------------------------------------------------------------------------
# Kommandos
# ---------------------------------------------------------------------------

def cmd_make_toy_data(args) -> int:
    from data.toy_dataset import ToyDatasetConfig, write_toy_dataset

    toy_cfg = ToyDatasetConfig(
        num_classes=args.classes,
        examples_per_class=args.per_class,
        duration=args.duration,
        frames_per_example=args.frames,
        seed=args.seed,
    )
    try:
        toy_cfg.validate()
    except ValueError as e:
        raise UsageError(str(e))
    manifests = write_toy_dataset(toy_cfg, args.out)
    for split, path in manifests.items():
        print(f"  ✓ {split}: {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    from calculations.engine import train
    from utils.checkpoint import load_checkpoint
    from utils.run_config import RunConfig

    base = RunConfig.from_dict(load_checkpoint(args.resume).config) if args.resume else None
    cfg = build_run_config(args, base)
    _require(cfg.paths.train_manifest, "paths.train_manifest")
    train_set, val_set = _datasets(cfg, "train_manifest", "val_manifest")

    result = train(cfg, train_set, cfg.paths.out_dir, val_set, resume=args.resume,
                   progress=not args.no_progress)
    print("=" * 60)
    print(f"✅ Training abgeschlossen: {result.epochs_run} Epochen, {result.global_step} Schritte")
    print(f"   Bester Val-Verlust: {result.best_val_loss:.4f}")
    print(f"   Checkpoints: {result.best_checkpoint}, {result.last_checkpoint}")
    return EXIT_OK


def _load_for_inference(args):
    from calculations.engine import load_model
    from utils.run_config import ConfigError

    model, ckpt_cfg, meta = load_model(args.checkpoint, args.device, use_ema=getattr(args, "ema", False))
    cfg = build_run_config(args, ckpt_cfg)
    if vars(cfg.diffusion) != vars(ckpt_cfg.diffusion):
        raise ConfigError("diffusion", f"Rauschplan {vars(cfg.diffusion)} passt nicht zum Checkpoint "
                                       f"{vars(ckpt_cfg.diffusion)}")
    if cfg.to_dict()["model"] != ckpt_cfg.to_dict()["model"]:
        raise ConfigError("model", "Modellkonfiguration weicht vom Checkpoint ab")
    return model, cfg, meta


def cmd_separate(args) -> int:
    from calculations.engine import load_embeddings, separate_detailed
    from parsers.media_io import read_image, read_wav, write_wav

    model, cfg, _ = _load_for_inference(args)
    mixture = read_wav(args.mixture, cfg.spectrogram.sample_rate)
    frame = read_image(args.frame)
    embeddings = load_embeddings(cfg)
    embedding = embeddings.lookup([args.frame]) if embeddings is not None else None

    result = separate_detailed(mixture, frame, model, cfg, trace=args.emit_plots, embedding=embedding)
    write_wav(args.out, result.waveform)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _snapshot(cfg, out_dir)
    steps = cfg.infer.sampler_steps(cfg.diffusion.T)
    print(f"✅ Getrennte Quelle gespeichert: {args.out} ({cfg.infer.sampler}, {steps} Schritte)")

    if args.emit_plots:
        from calculations.spectrogram import stft
        from utils.plots import save_grid_plot, save_spectrogram_plot

        stem = os.path.splitext(args.out)[0]
        spec_cfg = cfg.spectrogram
        mix_spec = stft(mixture, spec_cfg.window_size, spec_cfg.hop_length)
        est_spec = stft(result.waveform, spec_cfg.window_size, spec_cfg.hop_length)
        paths = [
            save_spectrogram_plot(f"{stem}_mixture.png", mix_spec.magnitude, spec_cfg.sample_rate,
                                  spec_cfg.hop_length, "Mischung"),
            save_spectrogram_plot(f"{stem}_estimate.png", est_spec.magnitude, spec_cfg.sample_rate,
                                  spec_cfg.hop_length, "Schätzung"),
            save_grid_plot(f"{stem}_grid.png", result.estimate.values, "Netzwerkraster x̂0"),
        ]
        for path in paths:
            print(f"  ✓ Diagramm: {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from calculations.engine import load_embeddings
    from calculations.evaluation import conditioning_swap_report, evaluate_pairs, write_report
    from data.toy_classes import ToyClassDB
    from utils.run_config import ConfigError

    if args.mode == "model":
        if not args.checkpoint:
            raise ConfigError("--checkpoint", "für --mode model erforderlich")
        model, cfg, _ = _load_for_inference(args)
    else:
        model, cfg = None, build_run_config(args)
    (eval_set,) = _datasets(cfg, "eval_manifest")
    if eval_set is None:
        raise ConfigError("paths.eval_manifest", "Pfad fehlt")

    embeddings = load_embeddings(cfg) if model is not None else None
    report = evaluate_pairs(model, eval_set, cfg, mode=args.mode, max_mixtures=args.max_mixtures,
                            embeddings=embeddings, progress=True)
    paths = write_report(report, args.out)
    _snapshot(cfg, args.out)
    print("=" * 60)
    print(f"✅ Auswertung ({args.mode}): {report.summary['num_mixtures']} Mischungen, "
          f"{report.summary['num_rows']} Zeilen")
    print(f"   SDR {report.mean_sdr:.2f} dB | SIR {report.mean_sir:.2f} dB | SAR {report.mean_sar:.2f} dB")
    print(f"   Bericht: {paths['rows']}, {paths['summary']}")

    if args.swap:
        if model is None:
            raise ConfigError("--swap", "nur mit --mode model möglich")
        swap = conditioning_swap_report(model, eval_set, ToyClassDB.bands(), cfg,
                                        max_mixtures=args.max_mixtures, embeddings=embeddings)
        swap_path = os.path.join(args.out, "conditioning_swap.csv")
        swap.to_csv(swap_path, index=False)
        share = float(swap["flipped"].mean()) if len(swap) else 0.0
        print(f"   Konditionierungstausch: {share:.0%} der Mischungen kippen um ≥ 10 dB ({swap_path})")

    if args.pdf:
        from utils.pdf_export import generate_pdf_report

        log = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "train_log.jsonl") \
            if args.checkpoint else None
        generate_pdf_report(os.path.join(args.out, "evaluation.pdf"), report,
                            {"checkpoint": args.checkpoint or "-"}, log)
    return EXIT_OK


def cmd_ablate(args) -> int:
    from calculations.evaluation import ABLATION_VARIANTS, run_ablation
    from utils.run_config import ConfigError

    cfg = build_run_config(args)
    checkpoints = {}
    for item in args.checkpoint:
        if "=" not in item:
            raise ConfigError(item, "Format VARIANTE=PFAD erwartet")
        variant, path = item.split("=", 1)
        if variant not in ABLATION_VARIANTS:
            raise ConfigError(item, f"unbekannte Variante '{variant}'")
        checkpoints[variant] = path
    variants = args.variant or list(ABLATION_VARIANTS)
    missing_training = [v for v in variants if v not in checkpoints]
    if missing_training:
        _require(cfg.paths.train_manifest, "paths.train_manifest")
    _require(cfg.paths.eval_manifest, "paths.eval_manifest")
    train_set, val_set, eval_set = _datasets(cfg, "train_manifest", "val_manifest", "eval_manifest")

    table = run_ablation(cfg, train_set, eval_set, cfg.paths.out_dir, variants, args.steps,
                         val_set=val_set, checkpoints=checkpoints, progress=not args.no_progress)
    _snapshot(cfg, cfg.paths.out_dir)
    print("=" * 60)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    if args.pdf:
        from utils.pdf_export import generate_pdf_report

        generate_pdf_report(os.path.join(cfg.paths.out_dir, "ablation.pdf"), table)
    return EXIT_OK


COMMANDS = {
    "make-toy-data": cmd_make_toy_data,
    "train": cmd_train,
    "separate": cmd_separate,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Hauptfunktion - führt ein Kommando aus und liefert den Exit-Code."""
    from parsers.manifest_parser import ManifestError
    from utils.run_config import ConfigError

    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"❌ Aufruffehler: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ManifestError) as e:
        print(f"❌ Konfigurationsfehler: {e}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("❌ Abgebrochen", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"❌ Fehler: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
