"""Auswertung: SDR/SIR/SAR auf festen Mischungspaaren, Konditionierungstausch,
lineare Trennbarkeit der Bildeinbettungen, Ablation.

Modi der Auswertung:
    model         Schätzung durch das Modell (Standard)
    mixture       Mischung als Schätzung für beide Quellen (Referenzwert)
    ground_truth  wahre Quellen als Schätzung (Plausibilitätsprüfung)
"""

import copy
import json
import os
import warnings
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from scipy import linalg

from calculations.bss_metrics import bss_decompose, bss_scores
from calculations.spectrogram import ScaledMagnitude, Waveform, reconstruct_waveform, stft
from data.mixtures import AudioVisualDataset, MixtureExample, MixtureSampler, collate

EVAL_MODES = ("model", "mixture", "ground_truth")
ABLATION_VARIANTS = ("time_attention", "resnet_only")
ABLATION_STEPS = (10, 15, 25, 50)

ROW_COLUMNS = [
    "mixture_id", "source", "source_id", "label", "mode", "steps",
    "sdr", "sir", "sar", "sdr_clamped", "sir_clamped", "sar_clamped",
]


@dataclass
class EvaluationReport:
    """Zeilen je (Mischung, Quelle) plus Mittelwerte."""
    rows: pd.DataFrame
    summary: Dict[str, object]

    @property
    def mean_sdr(self) -> float:
        return float(self.summary["mean_sdr"])

    @property
    def mean_sir(self) -> float:
        return float(self.summary["mean_sir"])

    @property
    def mean_sar(self) -> float:
        return float(self.summary["mean_sar"])


def score_estimates(estimates: Sequence[np.ndarray], sources: Sequence[np.ndarray],
                    filter_len: int = 512) -> List[Dict[str, object]]:
    """
    SDR/SIR/SAR für jede Schätzung gegen ihre Quelle (Zielindex = Position).

    Schätzungen und Referenzen werden bei abweichender Länge mit Warnung
    auf die kürzere Länge gebracht.
    """
    ref_len = min(len(s) for s in sources)
    scores = []
    for idx, est in enumerate(estimates):
        est = np.asarray(est, dtype=np.float64)
        n = min(len(est), ref_len)
        if len(est) != ref_len:
            warnings.warn(f"Längen von Schätzung ({len(est)}) und Referenz ({ref_len}) verschieden, "
                          f"kürze auf {n} Samples")
        refs = [np.asarray(s, dtype=np.float64)[:n] for s in sources]
        s = bss_scores(bss_decompose(est[:n], refs, idx, filter_len))
        scores.append({
            "sdr": s.sdr, "sir": s.sir, "sar": s.sar,
            "sdr_clamped": s.sdr_clamped, "sir_clamped": s.sir_clamped, "sar_clamped": s.sar_clamped,
        })
    return scores


def _model_estimates(model, examples: Sequence[MixtureExample], run_cfg, infer_cfg,
                     embeddings=None) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Trennt beide Quellen jeder Mischung; liefert Wellenformen je Beispiel."""
    from calculations.engine import separate_grids, visual_embeddings

    device = next(model.parameters()).device
    batch = collate(examples)
    x_mix = batch["x_mix"].to(device)
    grids = []
    with torch.no_grad():
        for side in (1, 2):
            v = visual_embeddings(model, batch, side, embeddings)
            grids.append(separate_grids(model, x_mix, v, run_cfg, infer_cfg, seed_purpose=f"eval/{side}"))

    results = []
    for k, ex in enumerate(examples):
        waves = []
        for side in (0, 1):
            est = ScaledMagnitude(grids[side][k], run_cfg.spectrogram.sigma, source_shape=ex.mix_spec.shape)
            waves.append(reconstruct_waveform(est, ex.mix_spec).samples)
        results.append((waves[0], waves[1]))
    return results


def evaluate_pairs(model, dataset: AudioVisualDataset, run_cfg, infer_cfg=None, mode: str = "model",
                   max_mixtures: int = None, embeddings=None, progress: bool = False) -> EvaluationReport:
    """
    Wertet feste, per Seed gebildete Mischungspaare aus.

    Args:
        model: SeparatorModel (nur für mode="model" erforderlich)
        dataset: Auswertedatensatz
        run_cfg: Laufkonfiguration
        infer_cfg: Sampler-Einstellungen (Standard: run_cfg.infer)
        mode: model | mixture | ground_truth
        max_mixtures: Obergrenze der Mischungen (Standard: infer.eval_mixtures, 0 → alle)

    Returns:
        EvaluationReport mit 2 Zeilen je Mischung
    """
    from tqdm import tqdm

    if mode not in EVAL_MODES:
        raise ValueError(f"Unbekannter Auswertemodus: {mode}. Verfügbar: {', '.join(EVAL_MODES)}")
    if len(dataset) == 0:
        raise ValueError("Auswertedatensatz ist leer")
    if mode == "model" and model is None:
        raise ValueError("Modus 'model' benötigt ein Modell")
    infer_cfg = infer_cfg or run_cfg.infer
    limit = infer_cfg.eval_mixtures if max_mixtures is None else max_mixtures

    sampler = MixtureSampler(dataset, infer_cfg.seed)
    pairs = sampler.eval_pairs(limit)
    steps = infer_cfg.sampler_steps(run_cfg.diffusion.T) if mode == "model" else 0

    rows = []
    chunks = range(0, len(pairs), infer_cfg.batch_size)
    for start in tqdm(chunks, desc="Auswertung", disable=not progress, leave=False):
        chunk = pairs[start:start + infer_cfg.batch_size]
        examples = [sampler.build(i, j, training=False) for i, j in chunk]
        if mode == "model":
            estimates = _model_estimates(model, examples, run_cfg, infer_cfg, embeddings)
        elif mode == "mixture":
            estimates = [(ex.mixture.samples, ex.mixture.samples) for ex in examples]
        else:
            estimates = [(ex.sources[0].samples, ex.sources[1].samples) for ex in examples]

        for offset, (ex, est) in enumerate(zip(examples, estimates)):
            scores = score_estimates(est, [s.samples for s in ex.sources], infer_cfg.filter_len)
            for side, score in enumerate(scores):
                rows.append({
                    "mixture_id": start + offset,
                    "source": side + 1,
                    "source_id": ex.source_ids[side],
                    "label": ex.labels[side],
                    "mode": mode,
                    "steps": steps,
                    **score,
                })

    frame = pd.DataFrame(rows, columns=ROW_COLUMNS)
    summary = {
        "mode": mode,
        "num_mixtures": len(pairs),
        "num_rows": len(frame),
        "mean_sdr": float(frame["sdr"].mean()),
        "mean_sir": float(frame["sir"].mean()),
        "mean_sar": float(frame["sar"].mean()),
        "clamped_rows": int((frame[["sdr_clamped", "sir_clamped", "sar_clamped"]].any(axis=1)).sum()),
        "sampler": infer_cfg.sampler if mode == "model" else "",
        "steps": steps,
        "seed": infer_cfg.seed,
        "filter_len": infer_cfg.filter_len,
    }
    return EvaluationReport(frame, summary)


def write_report(report: EvaluationReport, out_dir: str, prefix: str = "eval") -> Dict[str, str]:
    """Schreibt <prefix>_rows.jsonl und <prefix>_summary.json; liefert die Pfade."""
    os.makedirs(out_dir, exist_ok=True)
    rows_path = os.path.join(out_dir, f"{prefix}_rows.jsonl")
    summary_path = os.path.join(out_dir, f"{prefix}_summary.json")
    with open(rows_path, "w", encoding="utf-8") as f:
        for record in report.rows.to_dict(orient="records"):
            f.write(json.dumps({k: _plain(v) for k, v in record.items()}, ensure_ascii=False) + "\n")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(report.summary, f, indent=2, ensure_ascii=False)
    return {"rows": rows_path, "summary": summary_path}


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


# ---------------------------------------------------------------------------
# Konditionierungstausch
# ---------------------------------------------------------------------------

def band_energy(samples: np.ndarray, sample_rate: int, band: Tuple[float, float],
                window_size: int = 1022, hop_length: int = 256) -> float:
    """Energie des Betragsquadrat-Spektrogramms im Frequenzband [low, high] Hz."""
    spec = stft(Waveform(samples, sample_rate), window_size, hop_length)
    freqs = np.arange(spec.shape[0]) * sample_rate / window_size
    mask = (freqs >= band[0]) & (freqs <= band[1])
    return float(np.sum(spec.magnitude[mask] ** 2))


def _ratio_db(num: float, den: float) -> float:
    return float(10.0 * np.log10((num + 1e-12) / (den + 1e-12)))


def conditioning_swap(model, example: MixtureExample, class_bands: Dict[str, Tuple[float, float]],
                      run_cfg, infer_cfg=None, embeddings=None) -> Dict[str, object]:
    """
    Trennt dieselbe Mischung einmal mit dem Bild jeder Quelle.

    dominance_k = 10·log10(E_band(label_1) / E_band(label_2)) der Schätzung
    mit Bild k; flip_db = dominance_1 − dominance_2.
    """
    label_a, label_b = example.labels
    if label_a not in class_bands or label_b not in class_bands:
        raise ValueError(f"Keine Bandangabe für Klassen {example.labels}")
    if label_a == label_b:
        raise ValueError("Konditionierungstausch benötigt zwei verschiedene Klassen")

    spec_cfg = run_cfg.spectrogram
    waves = _model_estimates(model, [example], run_cfg, infer_cfg or run_cfg.infer, embeddings)[0]
    dominance = []
    for wave in waves:
        e_a = band_energy(wave, spec_cfg.sample_rate, class_bands[label_a], spec_cfg.window_size, spec_cfg.hop_length)
        e_b = band_energy(wave, spec_cfg.sample_rate, class_bands[label_b], spec_cfg.window_size, spec_cfg.hop_length)
        dominance.append(_ratio_db(e_a, e_b))
    return {
        "label_1": label_a,
        "label_2": label_b,
        "dominance_frame1_db": dominance[0],
        "dominance_frame2_db": dominance[1],
        "flip_db": dominance[0] - dominance[1],
    }


def conditioning_swap_report(model, dataset: AudioVisualDataset, class_bands: Dict[str, Tuple[float, float]],
                             run_cfg, infer_cfg=None, min_flip_db: float = 10.0,
                             max_mixtures: int = None, embeddings=None) -> pd.DataFrame:
    """Konditionierungstausch für alle festen Auswertepaare mit verschiedenen Klassen."""
    infer_cfg = infer_cfg or run_cfg.infer
    sampler = MixtureSampler(dataset, infer_cfg.seed)
    limit = infer_cfg.eval_mixtures if max_mixtures is None else max_mixtures
    rows = []
    for mixture_id, (i, j) in enumerate(sampler.eval_pairs(limit)):
        example = sampler.build(i, j, training=False)
        if example.labels[0] == example.labels[1]:
            continue
        row = conditioning_swap(model, example, class_bands, run_cfg, infer_cfg, embeddings)
        row["mixture_id"] = mixture_id
        row["flipped"] = row["flip_db"] >= min_flip_db
        rows.append(row)
    return pd.DataFrame(rows, columns=[
        "mixture_id", "label_1", "label_2", "dominance_frame1_db", "dominance_frame2_db", "flip_db", "flipped",
    ])


# ---------------------------------------------------------------------------
# Lineare Trennbarkeit der Bildeinbettungen
# ---------------------------------------------------------------------------

def frame_embeddings(model, dataset: AudioVisualDataset, embeddings=None,
                     batch_size: int = 16) -> Tuple[np.ndarray, List[str]]:
    """Einbettung des Auswertebilds jedes Eintrags (N × C) und die Klassenlabels."""
    from calculations.engine import visual_embeddings

    if len(dataset) == 0:
        raise ValueError("Datensatz ist leer")
    vectors, labels = [], []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            pairs = [dataset.load_pair(i) for i in range(start, min(start + batch_size, len(dataset)))]
            batch = {
                "frames1": torch.from_numpy(np.stack([p.frame for p in pairs]).astype(np.float32)),
                "keys1": [p.frame_key for p in pairs],
            }
            v = visual_embeddings(model, batch, 1, embeddings)
            vectors.append(v.detach().cpu().numpy().astype(np.float64))
            labels += [p.label for p in pairs]
    return np.concatenate(vectors), labels


def linear_classifier_accuracy(train_vectors: np.ndarray, train_labels: Sequence[str],
                               test_vectors: np.ndarray, test_labels: Sequence[str],
                               ridge: float = 1.0) -> float:
    """
    Trefferquote eines linearen Klassifikators auf festen Einbettungen.

    Standardisierung mit den Trainingsstatistiken, Ridge-Regression auf
    One-Hot-Ziele, Vorhersage per argmax. Klassen, die im Training fehlen,
    zählen als Fehler.
    """
    train_vectors = np.asarray(train_vectors, dtype=np.float64)
    test_vectors = np.asarray(test_vectors, dtype=np.float64)
    if len(train_vectors) == 0 or len(test_vectors) == 0:
        raise ValueError("Trainings- und Testeinbettungen dürfen nicht leer sein")
    if len(train_vectors) != len(train_labels) or len(test_vectors) != len(test_labels):
        raise ValueError("Anzahl der Einbettungen und Labels verschieden")
    if train_vectors.shape[1] != test_vectors.shape[1]:
        raise ValueError(f"Dimensionen verschieden: {train_vectors.shape[1]} / {test_vectors.shape[1]}")

    classes = sorted(set(train_labels))
    mean = train_vectors.mean(axis=0)
    std = train_vectors.std(axis=0) + 1e-8

    def design(vectors: np.ndarray) -> np.ndarray:
        z = (vectors - mean) / std
        return np.hstack([z, np.ones((len(z), 1))])

    X = design(train_vectors)
    Y = np.zeros((len(X), len(classes)))
    Y[np.arange(len(X)), [classes.index(label) for label in train_labels]] = 1.0
    W = linalg.solve(X.T @ X + ridge * np.eye(X.shape[1]), X.T @ Y, assume_a="pos")
    predicted = [classes[k] for k in np.argmax(design(test_vectors) @ W, axis=1)]
    return float(np.mean([p == label for p, label in zip(predicted, test_labels)]))


def embedding_separability(model, train_set: AudioVisualDataset, test_set: AudioVisualDataset,
                           embeddings=None, ridge: float = 1.0) -> float:
    """Klassifiziert die Testbilder linear anhand der Einbettungen des Trainingssets."""
    train_vectors, train_labels = frame_embeddings(model, train_set, embeddings)
    test_vectors, test_labels = frame_embeddings(model, test_set, embeddings)
    if not all(train_labels) or not all(test_labels):
        raise ValueError("Alle Einträge benötigen ein Klassenlabel")
    return linear_classifier_accuracy(train_vectors, train_labels, test_vectors, test_labels, ridge)


# ---------------------------------------------------------------------------
# Ablation
# ---------------------------------------------------------------------------

def run_ablation(run_cfg, train_set: AudioVisualDataset, eval_set: AudioVisualDataset, out_dir: str,
                 variants: Sequence[str] = ABLATION_VARIANTS, steps: Sequence[int] = ABLATION_STEPS,
                 val_set: AudioVisualDataset = None, checkpoints: Dict[str, str] = None,
                 progress: bool = True) -> pd.DataFrame:
    """
    Trainiert (oder lädt) je Blockvariante ein Modell mit identischem Seed und
    wertet es für jede DDIM-Schrittzahl aus.

    Args:
        checkpoints: Variante → vorhandener Checkpoint (überspringt das Training)

    Returns:
        DataFrame mit Spalten variant, steps, seed, sdr, sir, sar
    """
    from calculations.engine import load_embeddings, load_model, train

    for variant in variants:
        if variant not in ABLATION_VARIANTS:
            raise ValueError(f"Unbekannte Variante: {variant}. Verfügbar: {', '.join(ABLATION_VARIANTS)}")
    for n in steps:
        if not 1 <= int(n) <= run_cfg.diffusion.T:
            raise ValueError(f"Schrittzahl {n} außerhalb von [1, {run_cfg.diffusion.T}]")

    checkpoints = checkpoints or {}
    rows = []
    for variant in variants:
        cfg = copy.deepcopy(run_cfg)
        cfg.model.block_variant = variant
        variant_dir = os.path.join(out_dir, variant)
        if variant in checkpoints:
            ckpt_path = checkpoints[variant]
        else:
            print(f"🔄 Ablation {variant}: Training mit Seed {cfg.train.seed}")
            ckpt_path = train(cfg, train_set, variant_dir, val_set, progress=progress).best_checkpoint
        model, loaded_cfg, _ = load_model(ckpt_path, cfg.train.device)
        if loaded_cfg.model.block_variant != variant:
            raise ValueError(f"Checkpoint {ckpt_path} hat Variante {loaded_cfg.model.block_variant}, erwartet {variant}")
        embeddings = load_embeddings(loaded_cfg)

        for n in steps:
            infer_cfg = copy.deepcopy(cfg.infer)
            infer_cfg.sampler = "ddim"
            infer_cfg.steps = int(n)
            report = evaluate_pairs(model, eval_set, loaded_cfg, infer_cfg, embeddings=embeddings)
            rows.append({
                "variant": variant,
                "steps": int(n),
                "seed": cfg.train.seed,
                "sdr": report.mean_sdr,
                "sir": report.mean_sir,
                "sar": report.mean_sar,
            })
            print(f"  ✓ {variant}, {n} Schritte: SDR {report.mean_sdr:.2f} dB, "
                  f"SIR {report.mean_sir:.2f} dB, SAR {report.mean_sar:.2f} dB")

    table = pd.DataFrame(rows, columns=["variant", "steps", "seed", "sdr", "sir", "sar"])
    os.makedirs(out_dir, exist_ok=True)
    table.to_csv(os.path.join(out_dir, "ablation.csv"), index=False)
    return table
