"""Diagramme als PNG-Dateien (Spektrogramme, Trainingsverlauf, Metriken)."""

import json
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def save_spectrogram_plot(path: str, magnitude: np.ndarray, sample_rate: int, hop_length: int,
                          title: str = "") -> str:
    """Log-Magnitude (dB) über Zeit und Frequenz."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    db = 20.0 * np.log10(np.maximum(magnitude, 1e-8))
    n_bins, n_frames = magnitude.shape
    extent = [0.0, n_frames * hop_length / sample_rate, 0.0, sample_rate / 2.0]

    fig, ax = plt.subplots(figsize=(10, 5))
    image = ax.imshow(db, origin="lower", aspect="auto", extent=extent, cmap="magma",
                      vmin=db.max() - 80.0, vmax=db.max())
    ax.set_xlabel("Zeit [s]", fontsize=12)
    ax.set_ylabel("Frequenz [Hz]", fontsize=12)
    if title:
        ax.set_title(title, fontsize=14, fontweight="bold")
    fig.colorbar(image, ax=ax, label="dB")
    plt.tight_layout()
    _ensure_dir(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_grid_plot(path: str, grid: np.ndarray, title: str = "") -> str:
    """Skaliertes Netzwerkraster (Werte in [0, 1])."""
    fig, ax = plt.subplots(figsize=(6, 5))
    image = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xlabel("Zeitindex")
    ax.set_ylabel("Frequenzindex")
    if title:
        ax.set_title(title, fontweight="bold")
    fig.colorbar(image, ax=ax)
    plt.tight_layout()
    _ensure_dir(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def read_training_log(log_path: str) -> pd.DataFrame:
    """Trainingslog (JSON-Zeilen) als DataFrame."""
    with open(log_path, "r", encoding="utf-8") as f:
        records = [json.loads(line) for line in f if line.strip()]
    return pd.DataFrame(records)


def plot_training_curve(log_path: str, path: str) -> Optional[str]:
    """Verlauf von Trainings- und Validierungsverlust je Epoche."""
    log = read_training_log(log_path)
    if log.empty or "kind" not in log:
        return None
    epochs = log[log["kind"] == "epoch"]
    if epochs.empty:
        return None

    fig, ax = plt.subplots(figsize=(10, 5))
    ax.plot(epochs["epoch"] + 1, epochs["loss"], "o-", linewidth=2, color="#1f4788", label="Training")
    if "val_loss" in epochs:
        ax.plot(epochs["epoch"] + 1, epochs["val_loss"], "s--", linewidth=2, color="#c0392b",
                label="Validierung")
    ax.set_xlabel("Epoche", fontsize=12, fontweight="bold")
    ax.set_ylabel("Verlust", fontsize=12, fontweight="bold")
    ax.set_title("Trainingsverlauf", fontsize=14, fontweight="bold")
    ax.grid(True, alpha=0.3, linestyle="--")
    ax.legend()
    plt.tight_layout()
    _ensure_dir(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_metric_bars(table: pd.DataFrame, group_col: str, path: str, title: str) -> str:
    """Balkendiagramm SDR/SIR/SAR je Gruppe (z. B. Variante/Schrittzahl)."""
    metrics = ["sdr", "sir", "sar"]
    groups = table[group_col].astype(str).tolist()
    x = np.arange(len(groups))
    width = 0.25

    fig, ax = plt.subplots(figsize=(max(8, len(groups) * 1.2), 5))
    for k, (metric, color) in enumerate(zip(metrics, ["#1f4788", "#27ae60", "#e67e22"])):
        ax.bar(x + (k - 1) * width, table[metric], width, label=metric.upper(), color=color)
    ax.set_xticks(x)
    ax.set_xticklabels(groups, rotation=30, ha="right")
    ax.set_ylabel("dB", fontsize=12, fontweight="bold")
    ax.set_title(title, fontsize=14, fontweight="bold")
    ax.grid(True, axis="y", alpha=0.3, linestyle="--")
    ax.legend()
    plt.tight_layout()
    _ensure_dir(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def _ensure_dir(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
