#!/usr/bin/env python3
"""Tests für Training, Sampling, Checkpoints und Auswertung auf kleinem Raster.

Alle Läufe nutzen ein 32×32-Raster, T = 10 und den Toy-Datensatz, damit sie
auf der CPU in wenigen Sekunden durchlaufen.
"""

import copy
import json
import os
import sys
import tempfile

import numpy as np
import torch
import torch.nn as nn

# Füge Projektverzeichnis zum Pfad hinzu
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from calculations.diffusion import DiffusionConfig, schedule_from_config
from calculations.engine import (
    MAX_MAGNITUDE,
    EmaWeights,
    InferConfig,
    clamp_estimate,
    compute_loss,
    intermediate_trace,
    load_embeddings,
    load_model,
    sample,
    separate,
    separate_detailed,
    separate_grids,
    train,
    train_step,
)
from calculations.evaluation import (
    conditioning_swap_report,
    embedding_separability,
    evaluate_pairs,
    frame_embeddings,
    linear_classifier_accuracy,
    run_ablation,
    write_report,
)
from calculations.spectrogram import Waveform
from data.mixtures import DataConfig, MixtureSampler, apply_preset
from data.toy_classes import ToyClassDB
from data.toy_dataset import ToyDatasetConfig, toy_memory_datasets
from models.separation_unet import SeparatorModel, UNetConfig
from utils.array_container import write_container
from utils.checkpoint import load_checkpoint, save_checkpoint
from utils.pdf_export import generate_pdf_report
from utils.run_config import RunConfig

torch.set_num_threads(1)

SR = 11025


def small_run_config(**train_overrides) -> RunConfig:
    cfg = RunConfig()
    cfg.spectrogram.grid_height = cfg.spectrogram.grid_width = 32
    cfg.model = UNetConfig(grid_height=32, grid_width=32, base_channels=8, visual_width=8)
    cfg.diffusion = DiffusionConfig(kind="linear", T=10, beta_start=0.2, beta_end=0.6)
    cfg.data = apply_preset(DataConfig(), "toy")
    cfg.data.duration = 1.0
    cfg.data.resize = cfg.data.crop = 32
    cfg.train.T = 10
    cfg.train.epochs = 2
    cfg.train.batch_size = 2
    cfg.train.learning_rate = 1e-3
    cfg.train.log_every = 1
    cfg.train.device = "cpu"
    cfg.infer.steps = 5
    cfg.infer.filter_len = 16
    for key, value in train_overrides.items():
        setattr(cfg.train, key, value)
    cfg.validate()
    return cfg


def toy_splits(cfg: RunConfig, examples_per_class: int = 8):
    toy = ToyDatasetConfig(num_classes=2, examples_per_class=examples_per_class, duration=1.0,
                           frames_per_example=2, image_size=32, val_fraction=0.25, test_fraction=0.25)
    return toy_memory_datasets(toy, cfg.data, cfg.spectrogram)


def _mixture() -> Waveform:
    t = np.arange(SR) / SR
    return Waveform(0.4 * np.sin(2 * np.pi * 400 * t) + 0.3 * np.sin(2 * np.pi * 1000 * t), SR)


class _ConstantNoiseModel(nn.Module):
    """Liefert ε̂ = value überall."""

    def __init__(self, value: float):
        super().__init__()
        self.value = value

    def predict_noise(self, x_t, x_mix, v, t):
        return torch.full_like(x_t, self.value)


class _FixedEstimateModel(nn.Module):
    """Wählt ε̂ so, dass x̂0 in jedem Schritt genau target ist."""

    def __init__(self, sched, target: torch.Tensor):
        super().__init__()
        self.sched = sched
        self.target = target

    def predict_noise(self, x_t, x_mix, v, t):
        a_bar = self.sched.alpha_bar_at(int(t))
        return (x_t - float(np.sqrt(a_bar)) * self.target) / float(np.sqrt(1.0 - a_bar))


def _randomize_output(model: SeparatorModel, std: float = 0.05, seed: int = 0) -> None:
    """Ersetzt die nullinitialisierte Ausgabeschicht, damit ε̂ von den Eingaben abhängt."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.unet.output.parameters():
            p.copy_(torch.randn(p.shape, generator=gen) * std)


def _write_label_embeddings(path: str, splits, dim: int, frames_per_example: int = 2) -> None:
    """Tabelle mit einem Zufallsvektor je Klasse, Schlüssel wie im Toy-Datensatz im Speicher."""
    rng = np.random.default_rng(11)
    per_label, keys, rows = {}, [], []
    for dataset in splits.values():
        for i in range(len(dataset)):
            if dataset.label(i) not in per_label:
                per_label[dataset.label(i)] = rng.standard_normal(dim).astype(np.float32)
            for k in range(frames_per_example):
                keys.append(f"{dataset.source_id(i)}#{k}")
                rows.append(per_label[dataset.label(i)])
    write_container(path, {"embeddings": np.stack(rows)}, metadata={"keys": keys})


# ---------------------------------------------------------------------------
# Verlust und Training
# ---------------------------------------------------------------------------

def test_initial_loss():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    batch = next(MixtureSampler(splits["train"], seed=0).batches(0, 2, training=False))
    sched = schedule_from_config(cfg.diffusion)
    total, info = compute_loss(model, batch, sched, cfg.train, torch.Generator().manual_seed(1))
    assert 1.8 < float(total) < 2.2, f"Anfangsverlust {float(total):.3f}"
    assert 0.85 < info["loss_1"] < 1.15 and 0.85 < info["loss_2"] < 1.15
    assert all(1 <= t <= 10 for t in info["t_1"] + info["t_2"])
    print(f"✅ Anfangsverlust {float(total):.3f} (≈ 2 bei ε̂ = 0)")


def test_overfit_single_example():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    batch = next(MixtureSampler(splits["train"], seed=0).batches(0, 1, training=False))
    sched = schedule_from_config(cfg.diffusion)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)

    losses = []
    for _ in range(400):
        generator = torch.Generator().manual_seed(5)
        losses.append(train_step(batch, model, sched, cfg.train, optimizer, generator))
    assert losses[-1] < 0.1 * losses[0], f"{losses[0]:.3f} → {losses[-1]:.3f}"
    print(f"✅ Überanpassung an ein Beispiel: {losses[0]:.3f} → {losses[-1]:.4f}")


def test_loss_symmetric_under_pair_swap():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    _randomize_output(model)
    model.eval()
    sched = schedule_from_config(cfg.diffusion)

    batch = next(MixtureSampler(splits["train"], seed=0).batches(0, 2, training=False))
    swapped = dict(batch)
    for a, b in (("x1", "x2"), ("frames1", "frames2"), ("keys1", "keys2")):
        swapped[a], swapped[b] = batch[b], batch[a]

    gen = torch.Generator().manual_seed(4)
    n = batch["x1"].shape[0]
    draw_a = (torch.randint(1, 11, (n,), generator=gen), torch.randn(batch["x1"].shape, generator=gen))
    draw_b = (torch.randint(1, 11, (n,), generator=gen), torch.randn(batch["x2"].shape, generator=gen))
    with torch.no_grad():
        total, info = compute_loss(model, batch, sched, cfg.train, gen, draws={1: draw_a, 2: draw_b})
        total_s, info_s = compute_loss(model, swapped, sched, cfg.train, gen, draws={1: draw_b, 2: draw_a})

    assert info["loss_1"] != info["loss_2"]
    assert abs(info["loss_1"] - info_s["loss_2"]) < 1e-6
    assert abs(info["loss_2"] - info_s["loss_1"]) < 1e-6
    assert abs(float(total) - float(total_s)) < 1e-6
    assert info["t_1"] == info_s["t_2"] and info["t_2"] == info_s["t_1"]
    print(f"✅ Verlust symmetrisch beim Tausch der Quellen ({float(total):.4f})")


def test_trained_model_follows_image():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    batch = next(MixtureSampler(splits["train"], seed=0).batches(0, 1, training=False))
    example = batch["examples"][0]
    assert example.labels[0] != example.labels[1]
    sched = schedule_from_config(cfg.diffusion)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)
    for step in range(300):
        train_step(batch, model, sched, cfg.train, optimizer, torch.Generator().manual_seed(step))

    model.eval()
    with torch.no_grad():
        v1 = model.encode_frames(batch["frames1"])
        v2 = model.encode_frames(batch["frames2"])
    est1 = separate_grids(model, batch["x_mix"], v1, cfg)[0]
    est2 = separate_grids(model, batch["x_mix"], v2, cfg)[0]
    x1 = batch["x1"][0, 0].numpy().astype(np.float64)
    x2 = batch["x2"][0, 0].numpy().astype(np.float64)

    def dist(a, b):
        return float(np.mean(np.abs(a - b)))

    assert dist(est1, x1) < dist(est1, x2), f"{dist(est1, x1):.4f} / {dist(est1, x2):.4f}"
    assert dist(est2, x2) < dist(est2, x1), f"{dist(est2, x2):.4f} / {dist(est2, x1):.4f}"
    assert dist(est1, est2) > 0.3 * dist(x1, x2)
    print(f"✅ Trainiertes Modell folgt dem Bild: |x̂(v1) − x̂(v2)| = {dist(est1, est2):.4f}, "
          f"|x1 − x2| = {dist(x1, x2):.4f}")


def test_train_step_rejects_non_finite():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    model = SeparatorModel(cfg.model)
    batch = next(MixtureSampler(splits["train"], seed=0).batches(0, 2, training=False))
    batch["x1"][0, 0, 0, 0] = float("nan")
    sched = schedule_from_config(cfg.diffusion)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3)
    try:
        train_step(batch, model, sched, cfg.train, optimizer, torch.Generator().manual_seed(0))
        assert False, "NaN im Ziel muss abbrechen"
    except FloatingPointError as e:
        assert "t=" in str(e) and "max|x|" in str(e)

    wrong = schedule_from_config(DiffusionConfig(T=20, beta_start=0.01, beta_end=0.2))
    try:
        train_step(batch, model, wrong, cfg.train, optimizer, torch.Generator().manual_seed(0))
        assert False
    except ValueError:
        pass
    print("✅ Nicht endlicher Verlust und falscher Rauschplan werden abgelehnt")


def test_ema_update():
    model = nn.Linear(2, 1)
    with torch.no_grad():
        model.weight.fill_(1.0)
    ema = EmaWeights(model, 0.5)
    with torch.no_grad():
        model.weight.fill_(3.0)
    ema.update(model)
    assert torch.allclose(ema.state_dict()["weight"], torch.full((1, 2), 2.0))
    print("✅ EMA-Gewichte")


def test_training_determinism_and_artifacts():
    cfg = small_run_config()
    splits = toy_splits(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        a = train(cfg, splits["train"], os.path.join(tmp, "a"), splits["val"], progress=False)
        b = train(cfg, splits["train"], os.path.join(tmp, "b"), splits["val"], progress=False)
        assert a.epochs_run == 2 and a.global_step == b.global_step == 4
        assert np.max(np.abs(a.history["train_loss"].values - b.history["train_loss"].values)) < 1e-6
        assert np.max(np.abs(a.history["val_loss"].values - b.history["val_loss"].values)) < 1e-6

        run_dir = os.path.join(tmp, "a")
        for name in ("run_config.json", "train_log.jsonl", "best.ckpt", "last.ckpt"):
            assert os.path.exists(os.path.join(run_dir, name)), name
        with open(os.path.join(run_dir, "train_log.jsonl"), encoding="utf-8") as f:
            kinds = [line.split('"kind": "')[1].split('"')[0] for line in f]
        assert kinds.count("epoch") == 2 and kinds.count("step") == 4

        meta = load_checkpoint(a.last_checkpoint).meta
        assert meta["epoch"] == 1 and meta["global_step"] == 4
        assert abs(a.best_val_loss - a.history["val_loss"].min()) < 1e-12
        assert np.array_equal(a.history["val_sdr"].values, b.history["val_sdr"].values)
    print("✅ Zwei Läufe mit gleichem Seed identisch, Artefakte vollständig")


def test_validation_sdr_logged_and_rising():
    cfg = small_run_config(epochs=6, learning_rate=2e-3, val_sdr_mixtures=4)
    splits = toy_splits(cfg, examples_per_class=16)
    with tempfile.TemporaryDirectory() as tmp:
        result = train(cfg, splits["train"], tmp, splits["val"], progress=False)
        curve = result.history["val_sdr"].values
        assert len(curve) == 6 and np.all(np.isfinite(curve))
        assert curve[-1] > curve[0], f"Val-SDR {curve[0]:.2f} → {curve[-1]:.2f} dB"

        with open(os.path.join(tmp, "train_log.jsonl"), encoding="utf-8") as f:
            records = [json.loads(line) for line in f]
        logged = [r["val_sdr"] for r in records if r["kind"] == "epoch"]
        assert np.allclose(logged, curve)

        off = train(small_run_config(epochs=1, val_sdr_mixtures=0), splits["train"],
                    os.path.join(tmp, "aus"), splits["val"], progress=False)
        assert np.isnan(off.history["val_sdr"].iloc[0])
    try:
        small_run_config(val_sdr_mixtures=-1)
        assert False
    except ValueError:
        pass
    print(f"✅ Validierungs-SDR je Epoche: {curve[0]:.2f} → {curve[-1]:.2f} dB")


def test_resume_matches_uninterrupted():
    cfg = small_run_config(ema_decay=0.5)
    splits = toy_splits(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        full = train(cfg, splits["train"], os.path.join(tmp, "voll"), splits["val"], progress=False)

        short_cfg = copy.deepcopy(cfg)
        short_cfg.train.epochs = 1
        part_dir = os.path.join(tmp, "teil")
        first = train(short_cfg, splits["train"], part_dir, splits["val"], progress=False)
        assert first.epochs_run == 1
        resumed = train(cfg, splits["train"], part_dir, splits["val"],
                        resume=first.last_checkpoint, progress=False)
        assert resumed.epochs_run == 1 and resumed.global_step == full.global_step
        assert int(resumed.history["epoch"].iloc[0]) == 1
        assert abs(resumed.history["train_loss"].iloc[0] - full.history["train_loss"].iloc[1]) < 1e-6

        ref = load_checkpoint(full.last_checkpoint)
        res = load_checkpoint(resumed.last_checkpoint)
        assert res.meta["epoch"] == 1
        for name, value in ref.model_state.items():
            assert torch.allclose(value, res.model_state[name], atol=1e-6), name
        for name, value in ref.ema_state.items():
            assert torch.allclose(value, res.ema_state[name], atol=1e-6), name

        other = copy.deepcopy(cfg)
        other.model.base_channels = 16
        try:
            train(other, splits["train"], part_dir, resume=first.last_checkpoint, progress=False)
            assert False, "abweichende Modellkonfiguration muss abgelehnt werden"
        except ValueError:
            pass
    print("✅ Fortgesetztes Training entspricht ununterbrochenem Lauf")


def test_checkpoint_roundtrip():
    cfg = small_run_config(epochs=1)
    splits = toy_splits(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        result = train(cfg, splits["train"], tmp, progress=False)
        model, loaded_cfg, meta = load_model(result.last_checkpoint, "cpu", expected_diffusion=cfg.diffusion)
        assert loaded_cfg.to_dict() == cfg.to_dict()
        assert meta["epoch"] == 0

        trained = SeparatorModel(cfg.model)
        trained.load_state_dict(load_checkpoint(result.last_checkpoint).model_state)
        trained.eval()
        gen = torch.Generator().manual_seed(3)
        x_t = torch.randn((2, 1, 32, 32), generator=gen)
        x_mix = torch.rand((2, 1, 32, 32), generator=gen)
        v = torch.randn((2, cfg.model.bottleneck_channels), generator=gen)
        with torch.no_grad():
            assert torch.equal(model.predict_noise(x_t, x_mix, v, 4), trained.predict_noise(x_t, x_mix, v, 4))
            assert float(model.predict_noise(x_t, x_mix, v, 4).abs().max()) > 0

        copy_path = os.path.join(tmp, "kopie.ckpt")
        save_checkpoint(copy_path, model, loaded_cfg, meta={"epoch": 0})
        again, _, _ = load_model(copy_path, "cpu")
        with torch.no_grad():
            assert torch.equal(again.predict_noise(x_t, x_mix, v, 7), model.predict_noise(x_t, x_mix, v, 7))

        try:
            load_model(result.last_checkpoint, "cpu",
                       expected_diffusion=DiffusionConfig(T=20, beta_start=0.2, beta_end=0.6))
            assert False, "abweichender Rauschplan muss abgelehnt werden"
        except ValueError:
            pass
    print("✅ Checkpoint-Roundtrip bitgenau, Rauschplan wird geprüft")


# ---------------------------------------------------------------------------
# Sampling und Trennung
# ---------------------------------------------------------------------------

def test_trace_lengths_and_final_snapshot():
    cfg = small_run_config()
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    frame = np.zeros((3, 32, 32), dtype=np.float32)

    result = separate_detailed(_mixture(), frame, model, cfg, trace=True)
    assert len(result.trace) == cfg.infer.steps + 1
    assert np.array_equal(result.trace[-1][0, 0].astype(np.float64), result.x0)
    assert result.estimate.values.min() >= 0
    assert abs(len(result.waveform.samples) - SR) <= cfg.spectrogram.window_size

    ddpm = separate_detailed(_mixture(), frame, model, cfg, InferConfig(sampler="ddpm", steps=5), trace=True)
    assert len(ddpm.trace) == cfg.diffusion.T + 1
    assert separate_detailed(_mixture(), frame, model, cfg).trace == []

    snapshots = intermediate_trace(_mixture(), frame, model, cfg)
    assert len(snapshots) == cfg.infer.steps + 1
    assert all(s.shape == result.trace[0].shape for s in snapshots)

    try:
        separate(Waveform(np.zeros(22050), 22050), frame, model, cfg)
        assert False
    except ValueError:
        pass
    print("✅ Verlauf: DDIM Schritte + 1, DDPM T + 1, letzter Stand = x0")


def test_sampling_determinism():
    cfg = small_run_config()
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    image = np.random.default_rng(0).uniform(0, 1, (40, 40, 3))
    x_T = torch.randn((1, 1, 32, 32), generator=torch.Generator().manual_seed(9))

    a = separate(_mixture(), image, model, cfg, x_T=x_T)
    b = separate(_mixture(), image, model, cfg, x_T=x_T)
    assert np.array_equal(a.samples, b.samples)
    c = separate(_mixture(), image, model, cfg)
    d = separate(_mixture(), image, model, cfg)
    assert np.array_equal(c.samples, d.samples)

    try:
        separate(_mixture(), image, model, cfg, x_T=torch.zeros((1, 1, 16, 16)))
        assert False
    except ValueError:
        pass
    print("✅ DDIM mit η = 0 und festem x_T bitgenau reproduzierbar")


def test_first_snapshot_statistics():
    sched = schedule_from_config(DiffusionConfig(T=10, beta_start=0.2, beta_end=0.6))
    x_mix = torch.zeros((1, 1, 256, 256))
    v = torch.zeros((1, 8))
    _, snapshots = sample(_ConstantNoiseModel(0.0), x_mix, v, sched, InferConfig(steps=5),
                          torch.Generator().manual_seed(0), trace=True)
    first = snapshots[0]
    assert first.shape == (1, 1, 256, 256)
    assert abs(float(first.mean())) < 0.05
    assert 0.9 <= float(first.std()) <= 1.1
    assert len(snapshots) == 6
    print(f"✅ Startzustand: μ = {first.mean():.4f}, σ = {first.std():.4f}")


def test_sampling_rejects_non_finite():
    sched = schedule_from_config(DiffusionConfig(T=10, beta_start=0.2, beta_end=0.6))
    x_mix = torch.zeros((1, 1, 16, 16))
    try:
        sample(_ConstantNoiseModel(float("inf")), x_mix, torch.zeros((1, 8)), sched, InferConfig(steps=5))
        assert False, "nicht endlicher Zustand muss abbrechen"
    except FloatingPointError as e:
        assert "t=10" in str(e)
    try:
        sample(_ConstantNoiseModel(0.0), x_mix, torch.zeros((1, 8)), sched, InferConfig(steps=11))
        assert False
    except ValueError:
        pass
    print("✅ Sampling bricht bei nicht endlichen Werten ab")


def test_estimate_keeps_values_above_one():
    cfg = small_run_config()
    sched = schedule_from_config(cfg.diffusion)
    target = torch.linspace(-0.5, 3.0, 16 * 16).reshape(1, 1, 16, 16)
    x_mix = torch.zeros((1, 1, 16, 16))
    grid = separate_grids(_FixedEstimateModel(sched, target), x_mix, torch.zeros((1, 8)), cfg)[0]
    expected = target[0, 0].numpy().astype(np.float64)

    above = expected > 1.0
    assert above.any() and grid.max() > 2.9
    assert np.allclose(grid[above], expected[above], atol=1e-3)
    assert np.all(grid[expected < 0] == 0.0)
    assert np.allclose(grid[(expected >= 0) & ~above], expected[(expected >= 0) & ~above], atol=1e-3)

    ceiling = np.log1p(MAX_MAGNITUDE) * cfg.spectrogram.sigma
    assert np.array_equal(clamp_estimate(np.array([-1.0, 0.5, 1.5, 100.0]), cfg.spectrogram.sigma),
                          np.array([0.0, 0.5, 1.5, ceiling]))
    print(f"✅ x̂0 wird nur nach unten begrenzt (Maximum {grid.max():.3f})")


# ---------------------------------------------------------------------------
# Auswertung
# ---------------------------------------------------------------------------

def test_evaluation_modes():
    cfg = small_run_config()
    test_set = toy_splits(cfg)["test"]
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)

    truth = evaluate_pairs(None, test_set, cfg, mode="ground_truth")
    n_mix = truth.summary["num_mixtures"]
    assert n_mix >= 1 and len(truth.rows) == 2 * n_mix
    assert truth.mean_sdr > 60 and truth.mean_sir > 60
    assert set(truth.rows["source"]) == {1, 2}

    mixture = evaluate_pairs(None, test_set, cfg, mode="mixture")
    assert len(mixture.rows) == 2 * n_mix
    assert np.all(np.isfinite(mixture.rows[["sdr", "sir", "sar"]].values))
    assert mixture.mean_sdr < truth.mean_sdr
    assert list(mixture.rows["mixture_id"]) == list(truth.rows["mixture_id"])

    estimated = evaluate_pairs(model, test_set, cfg, mode="model")
    assert len(estimated.rows) == 2 * n_mix
    assert set(estimated.rows["steps"]) == {5}
    assert estimated.summary["sampler"] == "ddim"
    assert np.all(np.isfinite(estimated.rows[["sdr", "sir", "sar"]].values))
    again = evaluate_pairs(model, test_set, cfg, mode="model")
    assert np.array_equal(estimated.rows["sdr"].values, again.rows["sdr"].values)

    with tempfile.TemporaryDirectory() as tmp:
        paths = write_report(estimated, tmp)
        with open(paths["rows"], encoding="utf-8") as f:
            assert len(f.readlines()) == 2 * n_mix
        assert os.path.exists(paths["summary"])
        pdf = generate_pdf_report(os.path.join(tmp, "auswertung.pdf"), estimated, {"checkpoint": "-"})
        assert os.path.getsize(pdf) > 0

    for kwargs in (dict(model=None, mode="model"), dict(model=model, mode="oracle")):
        try:
            evaluate_pairs(kwargs["model"], test_set, cfg, mode=kwargs["mode"])
            assert False, kwargs
        except ValueError:
            pass
    print(f"✅ Auswertung: {n_mix} Mischungen, wahre Quellen {truth.mean_sdr:.1f} dB, "
          f"Mischung {mixture.mean_sdr:.1f} dB")


def test_conditioning_swap_report():
    cfg = small_run_config()
    test_set = toy_splits(cfg)["test"]
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    table = conditioning_swap_report(model, test_set, ToyClassDB.bands(), cfg, max_mixtures=1)
    assert list(table.columns)[-1] == "flipped"
    assert len(table) == 1
    row = table.iloc[0]
    assert row["label_1"] != row["label_2"]
    assert abs(row["flip_db"] - (row["dominance_frame1_db"] - row["dominance_frame2_db"])) < 1e-9
    print(f"✅ Konditionierungstausch: flip = {row['flip_db']:.2f} dB")


def test_precomputed_embeddings_on_inference_paths():
    cfg = small_run_config(epochs=1)
    splits = toy_splits(cfg)
    test_set = splits["test"]
    assert load_embeddings(cfg) is None
    with tempfile.TemporaryDirectory() as tmp:
        cfg.model.embedding_source = "precomputed"
        cfg.paths.embeddings = os.path.join(tmp, "einbettungen.dcnt")
        cfg.validate()
        _write_label_embeddings(cfg.paths.embeddings, splits, cfg.model.bottleneck_channels)
        embeddings = load_embeddings(cfg)

        torch.manual_seed(0)
        model = SeparatorModel(cfg.model)
        _randomize_output(model)
        pair = test_set.load_pair(0)
        for call in (
            lambda: evaluate_pairs(model, test_set, cfg, mode="model"),
            lambda: conditioning_swap_report(model, test_set, ToyClassDB.bands(), cfg, max_mixtures=1),
            lambda: separate_detailed(_mixture(), pair.frame, model, cfg),
        ):
            try:
                call()
                assert False, "ohne Einbettungstabelle muss abgebrochen werden"
            except ValueError:
                pass

        report = evaluate_pairs(model, test_set, cfg, mode="model", embeddings=embeddings)
        assert np.all(np.isfinite(report.rows[["sdr", "sir", "sar"]].values))
        swap = conditioning_swap_report(model, test_set, ToyClassDB.bands(), cfg, max_mixtures=1,
                                        embeddings=embeddings)
        assert len(swap) == 1

        # Schätzung hängt vom Tabellenvektor ab, nicht vom Bild
        other = next(i for i in range(len(test_set)) if test_set.label(i) != pair.label)
        own = separate_detailed(_mixture(), pair.frame, model, cfg,
                                embedding=embeddings.lookup([pair.frame_key]))
        foreign = separate_detailed(_mixture(), pair.frame, model, cfg,
                                    embedding=embeddings.lookup([f"{test_set.source_id(other)}#0"]))
        assert not np.array_equal(own.x0, foreign.x0)

        run = train(cfg, splits["train"], os.path.join(tmp, "lauf"), splits["val"], progress=False)
        assert np.isfinite(run.history["val_sdr"].iloc[0])
        table = run_ablation(cfg, splits["train"], test_set, os.path.join(tmp, "ablation"),
                             variants=("time_attention",), steps=(5,),
                             checkpoints={"time_attention": run.best_checkpoint}, progress=False)
        assert len(table) == 1 and np.isfinite(table["sdr"].iloc[0])
    print("✅ Vorberechnete Einbettungen in Auswertung, Bildtausch, Trennung und Ablation")


def test_linear_classifier_accuracy():
    rng = np.random.default_rng(2)
    centers = {"sinus": rng.standard_normal(16) * 4, "rauschen": rng.standard_normal(16) * 4}

    def draw(n):
        labels = [("sinus", "rauschen")[k % 2] for k in range(n)]
        return np.stack([centers[label] + 0.3 * rng.standard_normal(16) for label in labels]), labels

    train_vectors, train_labels = draw(20)
    test_vectors, test_labels = draw(10)
    assert linear_classifier_accuracy(train_vectors, train_labels, test_vectors, test_labels) == 1.0
    assert linear_classifier_accuracy(train_vectors, train_labels, test_vectors, ["chirp"] * 10) == 0.0
    try:
        linear_classifier_accuracy(train_vectors, train_labels[:5], test_vectors, test_labels)
        assert False
    except ValueError:
        pass

    cfg = small_run_config()
    splits = toy_splits(cfg)
    torch.manual_seed(0)
    model = SeparatorModel(cfg.model)
    vectors, labels = frame_embeddings(model, splits["test"])
    assert vectors.shape == (len(splits["test"]), cfg.model.bottleneck_channels)
    assert labels == [splits["test"].label(i) for i in range(len(splits["test"]))]
    accuracy = embedding_separability(model, splits["train"], splits["test"])
    assert 0.0 <= accuracy <= 1.0
    print(f"✅ Linearer Klassifikator: trennbare Einbettungen 100 %, untrainierter Encoder {accuracy:.0%}")


def test_ablation_table():
    cfg = small_run_config(epochs=1)
    splits = toy_splits(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        table = run_ablation(cfg, splits["train"], splits["test"], tmp,
                             variants=("time_attention", "resnet_only"), steps=(2, 5), progress=False)
        assert len(table) == 4
        assert set(table["variant"]) == {"time_attention", "resnet_only"}
        assert set(table["seed"]) == {cfg.train.seed}
        assert os.path.exists(os.path.join(tmp, "ablation.csv"))
        assert os.path.getsize(generate_pdf_report(os.path.join(tmp, "ablation.pdf"), table)) > 0
        for variant in ("time_attention", "resnet_only"):
            assert os.path.exists(os.path.join(tmp, variant, "best.ckpt"))

        try:
            run_ablation(cfg, splits["train"], splits["test"], tmp, variants=("unet_plain",), steps=(5,))
            assert False
        except ValueError:
            pass
        try:
            run_ablation(cfg, splits["train"], splits["test"], tmp, steps=(50,))
            assert False, "mehr Schritte als T muss abgelehnt werden"
        except ValueError:
            pass
    print("✅ Ablation: Tabelle je Variante und Schrittzahl")


def main():
    tests = [
        test_initial_loss,
        test_overfit_single_example,
        test_loss_symmetric_under_pair_swap,
        test_trained_model_follows_image,
        test_train_step_rejects_non_finite,
        test_ema_update,
        test_training_determinism_and_artifacts,
        test_validation_sdr_logged_and_rising,
        test_resume_matches_uninterrupted,
        test_checkpoint_roundtrip,
        test_trace_lengths_and_final_snapshot,
        test_sampling_determinism,
        test_first_snapshot_statistics,
        test_sampling_rejects_non_finite,
        test_estimate_keeps_values_above_one,
        test_evaluation_modes,
        test_conditioning_swap_report,
        test_precomputed_embeddings_on_inference_paths,
        test_linear_classifier_accuracy,
        test_ablation_table,
    ]
    failed = 0
    for test in tests:
        try:
            test()
        except Exception as e:
            failed += 1
            print(f"❌ {test.__name__}: {e}")
    print("=" * 60)
    print("🎉 ALLE TESTS BESTANDEN!" if not failed else f"⚠️  {failed} TESTS FEHLGESCHLAGEN!")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
