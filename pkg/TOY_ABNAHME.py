#!/usr/bin/env python3
"""
Abnahmelauf auf dem Toy-Datensatz (4 Klassen, reduziertes Modell).

Ablauf:
    1. Toy-Datensatz im Speicher erzeugen
    2. Modell mit base_channels = 32 trainieren
    3. Auswertung mit DDIM-25 gegen die Mischung als Schätzung
    4. Konditionierungstausch auf allen Auswertemischungen
    5. DDIM-Schrittzahlen 10, 15, 25, 50
    6. linearer Klassifikator auf den Bildeinbettungen

Kriterien:
    - mittlerer SDR des Modells ≥ SDR der Mischung + 5 dB
    - ≥ 90 % der Mischungen kippen beim Bildtausch um ≥ 10 dB
    - SDR(25 Schritte) ≥ SDR(10 Schritte) − 0.5 dB
    - linearer Klassifikator auf den Bildeinbettungen trifft > 95 % der Testbilder
    - Validierungs-SDR der letzten Epoche liegt über dem der ersten

Laufzeit: etwa 2 Stunden auf einer GPU, deutlich länger auf der CPU.

    python TOY_ABNAHME.py --out runs/toy_abnahme
    python TOY_ABNAHME.py --checkpoint runs/toy_abnahme/training/best.ckpt
"""

import argparse
import copy
import json
import os
import sys

# Füge den aktuellen Ordner zum Python-Pfad hinzu
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pandas as pd

from calculations.engine import load_embeddings, load_model, train
from calculations.evaluation import (
    ABLATION_STEPS,
    conditioning_swap_report,
    embedding_separability,
    evaluate_pairs,
    write_report,
)
from data.mixtures import apply_preset
from data.toy_classes import ToyClassDB
from data.toy_dataset import ToyDatasetConfig, toy_memory_datasets
from utils.run_config import RunConfig, RunConfigHandler

MIN_SDR_GAIN_DB = 5.0
MIN_FLIP_SHARE = 0.9
MIN_FLIP_DB = 10.0
STEP_TOLERANCE_DB = 0.5
MIN_LINEAR_ACCURACY = 0.95


def val_sdr_curve(log_path: str) -> list:
    """Validierungs-SDR je Epoche aus dem Trainingslog (leer, wenn nicht vorhanden)."""
    if not os.path.exists(log_path):
        return []
    log = pd.read_json(log_path, lines=True)
    if "val_sdr" not in log.columns:
        return []
    epochs = log[log["kind"] == "epoch"].dropna(subset=["val_sdr"])
    return [float(v) for v in epochs["val_sdr"]]


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    apply_preset(cfg.data, "toy")
    cfg.model.base_channels = 32
    cfg.model.visual_width = 32
    cfg.train.epochs = args.epochs
    cfg.train.batch_size = args.batch_size
    cfg.train.learning_rate = args.lr
    cfg.train.device = args.device or ""
    cfg.infer.sampler = "ddim"
    cfg.infer.steps = 25
    cfg.paths.out_dir = args.out
    cfg.set_seed(args.seed)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Toy-Abnahmelauf")
    parser.add_argument("--out", default="runs/toy_abnahme")
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--lr", type=float, default=2e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--device", default=None)
    parser.add_argument("--checkpoint", help="Vorhandenen Checkpoint auswerten statt zu trainieren")
    parser.add_argument("--pdf", action="store_true", help="PDF-Bericht erzeugen")
    args = parser.parse_args(argv)

    cfg = build_config(args)
    os.makedirs(args.out, exist_ok=True)
    RunConfigHandler().export_to_file(os.path.join(args.out, "run_config.json"), cfg, notes="Toy-Abnahme")

    print("=" * 60)
    print("🔄 Toy-Abnahme")
    print("=" * 60)

    toy_cfg = ToyDatasetConfig(num_classes=4, duration=cfg.data.duration, seed=args.seed)
    splits = toy_memory_datasets(toy_cfg, cfg.data, cfg.spectrogram)
    print(f"✓ Toy-Daten: {len(splits['train'])} Training, {len(splits['val'])} Validierung, "
          f"{len(splits['test'])} Test")

    checkpoint = args.checkpoint
    if not checkpoint:
        result = train(cfg, splits["train"], os.path.join(args.out, "training"), splits["val"])
        checkpoint = result.best_checkpoint
    model, cfg_loaded, meta = load_model(checkpoint, cfg.train.device)
    print(f"✓ Modell geladen: {checkpoint} (Epoche {meta.get('epoch', '?')})")
    embeddings = load_embeddings(cfg_loaded)

    test_set = splits["test"]
    model_report = evaluate_pairs(model, test_set, cfg_loaded, mode="model", embeddings=embeddings,
                                  progress=True)
    mixture_report = evaluate_pairs(None, test_set, cfg_loaded, mode="mixture")
    write_report(model_report, args.out, prefix="eval_model")
    write_report(mixture_report, args.out, prefix="eval_mixture")
    gain = model_report.mean_sdr - mixture_report.mean_sdr

    swap = conditioning_swap_report(model, test_set, ToyClassDB.bands(), cfg_loaded, min_flip_db=MIN_FLIP_DB,
                                    embeddings=embeddings)
    swap.to_csv(os.path.join(args.out, "conditioning_swap.csv"), index=False)
    flip_share = float(swap["flipped"].mean()) if len(swap) else 0.0

    step_rows = []
    for steps in ABLATION_STEPS:
        infer_cfg = copy.deepcopy(cfg_loaded.infer)
        infer_cfg.steps = steps
        report = evaluate_pairs(model, test_set, cfg_loaded, infer_cfg, embeddings=embeddings)
        step_rows.append({"steps": steps, "sdr": report.mean_sdr, "sir": report.mean_sir, "sar": report.mean_sar})
        print(f"  ✓ DDIM {steps:2d} Schritte: SDR {report.mean_sdr:.2f} dB")
    step_table = pd.DataFrame(step_rows)
    step_table.to_csv(os.path.join(args.out, "steps.csv"), index=False)
    sdr_by_steps = dict(zip(step_table["steps"], step_table["sdr"]))

    accuracy = embedding_separability(model, splits["train"], test_set, embeddings)
    print(f"  ✓ Linearer Klassifikator auf Bildeinbettungen: {accuracy:.1%}")
    log_path = os.path.join(os.path.dirname(os.path.abspath(checkpoint)), "train_log.jsonl")
    curve = val_sdr_curve(log_path)

    checks = [
        (f"SDR-Gewinn gegenüber Mischung {gain:.2f} dB ≥ {MIN_SDR_GAIN_DB} dB", gain >= MIN_SDR_GAIN_DB),
        (f"Bildtausch kippt {flip_share:.0%} der Mischungen (≥ {MIN_FLIP_SHARE:.0%})", flip_share >= MIN_FLIP_SHARE),
        (f"SDR(25) {sdr_by_steps[25]:.2f} dB ≥ SDR(10) {sdr_by_steps[10]:.2f} dB − {STEP_TOLERANCE_DB} dB",
         sdr_by_steps[25] >= sdr_by_steps[10] - STEP_TOLERANCE_DB),
        (f"Lineare Trennbarkeit der Bildeinbettungen {accuracy:.1%} > {MIN_LINEAR_ACCURACY:.0%}",
         accuracy > MIN_LINEAR_ACCURACY),
    ]
    if len(curve) >= 2:
        checks.append((f"Validierungs-SDR steigt von {curve[0]:.2f} dB auf {curve[-1]:.2f} dB",
                       curve[-1] > curve[0]))
    else:
        print(f"⚠️  Kein Validierungs-SDR-Verlauf in {log_path}")

    print("=" * 60)
    print(f"Modell:   SDR {model_report.mean_sdr:.2f} | SIR {model_report.mean_sir:.2f} | "
          f"SAR {model_report.mean_sar:.2f} dB")
    print(f"Mischung: SDR {mixture_report.mean_sdr:.2f} dB")
    for text, ok in checks:
        print(f"{'✅' if ok else '❌'} {text}")

    with open(os.path.join(args.out, "abnahme.json"), "w", encoding="utf-8") as f:
        json.dump({
            "checkpoint": checkpoint,
            "model_sdr": model_report.mean_sdr,
            "mixture_sdr": mixture_report.mean_sdr,
            "sdr_gain": gain,
            "flip_share": flip_share,
            "sdr_by_steps": {str(k): float(v) for k, v in sdr_by_steps.items()},
            "linear_accuracy": accuracy,
            "val_sdr_curve": curve,
            "passed": all(ok for _, ok in checks),
        }, f, indent=2, ensure_ascii=False)

    if args.pdf:
        from utils.pdf_export import generate_pdf_report

        generate_pdf_report(os.path.join(args.out, "abnahme.pdf"), model_report,
                            {"checkpoint": checkpoint, "sdr_gain_db": round(gain, 2),
                             "flip_share": round(flip_share, 3)}, log_path)

    passed = all(ok for _, ok in checks)
    print("=" * 60)
    print("🎉 ABNAHME BESTANDEN!" if passed else "⚠️  ABNAHME NICHT BESTANDEN")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
