"""Training und Inferenz des bedingten Diffusionsmodells.

Training: für beide Quellen eines Mischungspaares wird je Beispiel ein
Zeitschritt t ~ U{1..T} und ein Rauschfeld ε gezogen; der Verlust ist die
Summe der beiden Rauschvorhersagefehler.

Inferenz: ausgehend von x_T ~ N(0, I) wird mit DDPM oder DDIM bis x_0
entrauscht, entskaliert und mit der Mischungsphase rekonstruiert.
"""

import copy
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from calculations.diffusion import (
    NoiseSchedule,
    ddim_step,
    ddim_timesteps,
    ddpm_step,
    schedule_from_config,
)
from calculations.spectrogram import (
    ScaledMagnitude,
    Waveform,
    reconstruct_waveform,
    stft,
    to_network,
)
from data.mixtures import AudioVisualDataset, MixtureSampler, preprocess_frame
from models.separation_unet import SeparatorModel
from models.visual_encoder import PrecomputedEmbeddings

LOSS_KINDS = ("mse", "l1")
SAMPLERS = ("ddim", "ddpm")
# Magnitude-Obergrenze beim Entskalieren der Schätzung; hält e^(x/σ) endlich
MAX_MAGNITUDE = 1e12


@dataclass
class TrainConfig:
    """Trainingsparameter (Adam, konstante Lernrate)."""
    T: int = 1000
    learning_rate: float = 1e-4
    batch_size: int = 10
    epochs: int = 200
    sigma: float = 0.15
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    grad_clip: float = 1.0              # 0 → aus
    loss: str = "mse"
    ema_decay: float = 0.0              # 0 → aus
    log_every: int = 10
    val_sdr_mixtures: int = 4           # Mischungen für den Validierungs-SDR je Epoche, 0 → aus
    seed: int = 0
    device: str = ""                    # leer → DAVIS_DEVICE bzw. automatisch

    def validate(self) -> None:
        for name in ("T", "learning_rate", "batch_size", "epochs", "sigma", "adam_eps", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"train.{name} muss positiv sein: {getattr(self, name)}")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ValueError("train.adam_beta1/adam_beta2 müssen in [0, 1) liegen")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"train.loss unbekannt: {self.loss}. Verfügbar: {', '.join(LOSS_KINDS)}")
        if not 0 <= self.ema_decay < 1:
            raise ValueError(f"train.ema_decay muss in [0, 1) liegen: {self.ema_decay}")
        if self.grad_clip < 0 or self.weight_decay < 0:
            raise ValueError("train.grad_clip und train.weight_decay dürfen nicht negativ sein")
        if self.val_sdr_mixtures < 0:
            raise ValueError(f"train.val_sdr_mixtures darf nicht negativ sein: {self.val_sdr_mixtures}")


@dataclass
class InferConfig:
    """Sampling-Parameter. DDPM läuft immer über alle T Schritte."""
    sampler: str = "ddim"
    steps: int = 25
    eta: float = 0.0
    seed: int = 0
    filter_len: int = 512
    eval_mixtures: int = 0              # 0 → alle möglichen Paare
    batch_size: int = 4

    def validate(self, T: int = None) -> None:
        if self.sampler not in SAMPLERS:
            raise ValueError(f"infer.sampler unbekannt: {self.sampler}. Verfügbar: {', '.join(SAMPLERS)}")
        if self.steps < 1:
            raise ValueError(f"infer.steps muss positiv sein: {self.steps}")
        if T is not None and self.steps > T:
            raise ValueError(f"infer.steps ({self.steps}) größer als T ({T})")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"infer.eta muss in [0, 1] liegen: {self.eta}")
        if self.filter_len < 1 or self.batch_size < 1:
            raise ValueError("infer.filter_len und infer.batch_size müssen positiv sein")

    def sampler_steps(self, T: int) -> int:
        return T if self.sampler == "ddpm" else self.steps


# ---------------------------------------------------------------------------
# Verlust und Trainingsschritt
# ---------------------------------------------------------------------------

class EmaWeights:
    """Exponentiell gleitender Mittelwert der Modellgewichte."""

    def __init__(self, model: torch.nn.Module, decay: float):
        self.decay = decay
        self.shadow = {k: v.detach().clone() for k, v in model.state_dict().items()}

    @torch.no_grad()
    def update(self, model: torch.nn.Module) -> None:
        for name, value in model.state_dict().items():
            if value.dtype.is_floating_point:
                self.shadow[name].mul_(self.decay).add_(value.detach(), alpha=1.0 - self.decay)
            else:
                self.shadow[name].copy_(value)

    def state_dict(self) -> Dict[str, torch.Tensor]:
        return self.shadow


def visual_embeddings(model: SeparatorModel, batch: Dict[str, object], side: int,
                      embeddings: Optional[PrecomputedEmbeddings] = None) -> torch.Tensor:
    """
    Einbettung v der Bilder einer Seite (1 oder 2) des Batches.

    Modelle mit embedding_source="precomputed" benötigen die Tabelle; ihr
    Bild-Encoder ist untrainiert.
    """
    device = next(model.parameters()).device
    if embeddings is not None:
        return embeddings.lookup(batch[f"keys{side}"]).to(device)
    if model.cfg.embedding_source == "precomputed":
        raise ValueError("Modell erwartet vorberechnete Einbettungen, keine Tabelle übergeben")
    return model.encode_frames(batch[f"frames{side}"].to(device))


def load_embeddings(run_cfg) -> Optional[PrecomputedEmbeddings]:
    """Einbettungstabelle aus run_cfg.paths.embeddings, falls das Modell sie verwendet."""
    if run_cfg.model.embedding_source != "precomputed":
        return None
    if not run_cfg.paths.embeddings:
        raise ValueError("model.embedding_source=precomputed benötigt paths.embeddings")
    return PrecomputedEmbeddings(run_cfg.paths.embeddings, run_cfg.model.bottleneck_channels)


def _gather(values: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
    return values[t].view(-1, 1, 1, 1)


def compute_loss(model: SeparatorModel, batch: Dict[str, object], sched: NoiseSchedule,
                 cfg: TrainConfig, generator: torch.Generator,
                 embeddings: Optional[PrecomputedEmbeddings] = None,
                 draws: Optional[Dict[int, Tuple[torch.Tensor, torch.Tensor]]] = None
                 ) -> Tuple[torch.Tensor, Dict[str, object]]:
    """
    Zweiseitiger Rauschvorhersage-Verlust L = L1 + L2.

    Args:
        draws: feste Ziehungen {Seite: (t, ε)} anstelle des Generators

    Returns:
        (Gesamtverlust, Diagnose mit Einzelverlusten, Zeitschritten und max|x|)
    """
    device = next(model.parameters()).device
    dtype = next(model.parameters()).dtype
    arrays = sched.torch_arrays(device=device, dtype=dtype)
    x_mix = batch["x_mix"].to(device=device, dtype=dtype)
    total = torch.zeros((), device=device, dtype=dtype)
    info: Dict[str, object] = {"max_abs_x": float(x_mix.abs().max())}

    for side in (1, 2):
        x0 = batch[f"x{side}"].to(device=device, dtype=dtype)
        n = x0.shape[0]
        if draws is not None and side in draws:
            t, eps = draws[side]
            eps = eps.to(device=device, dtype=dtype)
        else:
            t = torch.randint(1, sched.T + 1, (n,), generator=generator)
            eps = torch.randn(x0.shape, generator=generator, dtype=dtype).to(device)
        t = t.to(device)
        x_t = _gather(arrays["sqrt_alpha_bar"], t) * x0 + _gather(arrays["sqrt_one_minus_alpha_bar"], t) * eps

        v = visual_embeddings(model, batch, side, embeddings).to(dtype)
        eps_hat = model.predict_noise(x_t, x_mix, v, t)
        if cfg.loss == "l1":
            loss = (eps - eps_hat).abs().mean()
        else:
            loss = ((eps - eps_hat) ** 2).mean()
        total = total + loss
        info[f"loss_{side}"] = float(loss.detach())
        info[f"t_{side}"] = t.detach().cpu().tolist()
        info["max_abs_x"] = max(info["max_abs_x"], float(x_t.detach().abs().max()))
    return total, info


def train_step(batch: Dict[str, object], model: SeparatorModel, sched: NoiseSchedule,
               cfg: TrainConfig, optimizer: torch.optim.Optimizer, generator: torch.Generator,
               embeddings: Optional[PrecomputedEmbeddings] = None,
               ema: Optional[EmaWeights] = None) -> float:
    """
    Ein Optimierungsschritt auf einem Batch.

    Raises:
        FloatingPointError: bei nicht endlichem Verlust oder Gradienten
    """
    if sched.T != cfg.T:
        raise ValueError(f"Rauschplan hat T={sched.T}, Training erwartet T={cfg.T}")
    model.train()
    optimizer.zero_grad(set_to_none=True)
    total, info = compute_loss(model, batch, sched, cfg, generator, embeddings)

    if not torch.isfinite(total):
        raise FloatingPointError(
            f"Verlust nicht endlich ({float(total)}); t={info['t_1']}/{info['t_2']}, "
            f"max|x|={info['max_abs_x']:.3e}"
        )
    total.backward()
    params = [p for p in model.parameters() if p.requires_grad]
    max_norm = cfg.grad_clip if cfg.grad_clip > 0 else float("inf")
    grad_norm = torch.nn.utils.clip_grad_norm_(params, max_norm)
    if not torch.isfinite(grad_norm):
        raise FloatingPointError(
            f"Gradient nicht endlich (Norm {float(grad_norm)}); t={info['t_1']}/{info['t_2']}, "
            f"max|x|={info['max_abs_x']:.3e}"
        )
    optimizer.step()
    if ema is not None:
        ema.update(model)
    return float(total.detach())


# ---------------------------------------------------------------------------
# Trainingsschleife
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    """Ergebnis eines Trainingslaufs."""
    best_checkpoint: str
    last_checkpoint: str
    history: pd.DataFrame
    best_val_loss: float
    epochs_run: int
    global_step: int


class Trainer:
    """
    Trainiert ein SeparatorModel auf einem Datensatz.

    Zufall ist nach Zweck getrennt: Initialisierung, Datenreihenfolge und
    Rauschziehungen je Epoche erhalten eigene, aus dem Wurzel-Seed
    abgeleitete Seeds. Ein fortgesetzter Lauf ist daher identisch zu einem
    ununterbrochenen.
    """

    def __init__(self, run_cfg, train_set: AudioVisualDataset, out_dir: str,
                 val_set: Optional[AudioVisualDataset] = None, resume: Optional[str] = None,
                 progress: bool = True):
        from utils.run_config import derive_seed, resolve_device

        run_cfg.validate()
        if len(train_set) == 0:
            raise ValueError("Trainingsdatensatz ist leer")
        self.run_cfg = run_cfg
        self.cfg: TrainConfig = run_cfg.train
        self.train_set = train_set
        self.val_set = val_set if val_set is not None and len(val_set) > 0 else None
        self.out_dir = out_dir
        self.progress = progress
        self.device = resolve_device(self.cfg.device)
        self.sched = schedule_from_config(run_cfg.diffusion)

        torch.manual_seed(derive_seed(self.cfg.seed, "init"))
        self.model = SeparatorModel(copy.deepcopy(run_cfg.model)).to(self.device)
        params = [p for p in self.model.parameters() if p.requires_grad]
        self.optimizer = torch.optim.Adam(
            params,
            lr=self.cfg.learning_rate,
            betas=(self.cfg.adam_beta1, self.cfg.adam_beta2),
            eps=self.cfg.adam_eps,
            weight_decay=self.cfg.weight_decay,
        )
        self.ema = EmaWeights(self.model, self.cfg.ema_decay) if self.cfg.ema_decay > 0 else None
        self.embeddings = load_embeddings(run_cfg)

        self.sampler = MixtureSampler(train_set, derive_seed(self.cfg.seed, "data"))
        self.val_sampler = MixtureSampler(self.val_set, derive_seed(self.cfg.seed, "val-data")) \
            if self.val_set is not None else None

        self.start_epoch = 0
        self.global_step = 0
        self.best_val = math.inf
        self.history: List[Dict[str, float]] = []
        if resume:
            self._resume(resume)

    @property
    def log_path(self) -> str:
        return os.path.join(self.out_dir, "train_log.jsonl")

    @property
    def best_path(self) -> str:
        return os.path.join(self.out_dir, "best.ckpt")

    @property
    def last_path(self) -> str:
        return os.path.join(self.out_dir, "last.ckpt")

    def _resume(self, path: str) -> None:
        from utils.checkpoint import load_checkpoint

        ckpt = load_checkpoint(path, device=self.device)
        if ckpt.config.get("model") != self.run_cfg.to_dict()["model"]:
            raise ValueError(f"Modellkonfiguration von {path} passt nicht zum aktuellen Lauf")
        self.model.load_state_dict(ckpt.model_state)
        if ckpt.optimizer_state is not None:
            self.optimizer.load_state_dict(ckpt.optimizer_state)
        if self.ema is not None and ckpt.ema_state is not None:
            self.ema.shadow = {k: v.to(self.device) for k, v in ckpt.ema_state.items()}
        self.start_epoch = int(ckpt.meta.get("epoch", -1)) + 1
        self.global_step = int(ckpt.meta.get("global_step", 0))
        self.best_val = float(ckpt.meta.get("best_val_loss", math.inf))
        print(f"🔄 Setze Training fort ab Epoche {self.start_epoch + 1} ({path})")

    def _log(self, record: Dict[str, object]) -> None:
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")

    @torch.no_grad()
    def validation_loss(self) -> float:
        """Verlust auf dem Validierungsset mit fester Paarung und festem Rauschen."""
        from utils.run_config import derive_seed

        if self.val_sampler is None:
            raise ValueError("Kein Validierungsset vorhanden")
        self.model.eval()
        generator = torch.Generator().manual_seed(derive_seed(self.cfg.seed, "val-noise"))
        losses = []
        for batch in self.val_sampler.batches(0, self.cfg.batch_size, training=False):
            total, _ = compute_loss(self.model, batch, self.sched, self.cfg, generator, self.embeddings)
            losses.append(float(total))
        return float(np.mean(losses))

    @torch.no_grad()
    def validation_sdr(self) -> Optional[float]:
        """Mittlerer SDR auf festen Validierungsmischungen (None, wenn abgeschaltet)."""
        from calculations.evaluation import evaluate_pairs

        if self.val_set is None or self.cfg.val_sdr_mixtures == 0:
            return None
        self.model.eval()
        report = evaluate_pairs(self.model, self.val_set, self.run_cfg, mode="model",
                                max_mixtures=self.cfg.val_sdr_mixtures, embeddings=self.embeddings)
        return report.mean_sdr

    def _save(self, path: str, epoch: int, train_loss: float, val_loss: float) -> None:
        from utils.checkpoint import save_checkpoint

        save_checkpoint(
            path,
            self.model,
            self.run_cfg,
            optimizer=self.optimizer,
            meta={
                "epoch": epoch,
                "global_step": self.global_step,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "best_val_loss": self.best_val,
            },
            ema_state=self.ema.state_dict() if self.ema is not None else None,
        )

    def train(self) -> TrainResult:
        """Führt alle verbleibenden Epochen aus und speichert best/last-Checkpoints."""
        from utils.run_config import RunConfigHandler, derive_seed

        os.makedirs(self.out_dir, exist_ok=True)
        RunConfigHandler().export_to_file(os.path.join(self.out_dir, "run_config.json"), self.run_cfg)
        if self.start_epoch == 0 and os.path.exists(self.log_path):
            os.remove(self.log_path)

        print(f"🔄 Training: {self.model.parameter_count():,} Parameter, Gerät {self.device}, "
              f"Seed {self.cfg.seed}")
        start_time = time.time()
        for epoch in range(self.start_epoch, self.cfg.epochs):
            generator = torch.Generator().manual_seed(derive_seed(self.cfg.seed, f"noise/{epoch}"))
            losses = []
            batches = tqdm(
                self.sampler.batches(epoch, self.cfg.batch_size, training=True),
                total=self.sampler.num_batches(epoch, self.cfg.batch_size),
                desc=f"Epoche {epoch + 1}/{self.cfg.epochs}",
                disable=not self.progress,
                leave=False,
            )
            for batch in batches:
                loss = train_step(batch, self.model, self.sched, self.cfg, self.optimizer,
                                  generator, self.embeddings, self.ema)
                losses.append(loss)
                self.global_step += 1
                batches.set_postfix(loss=f"{loss:.4f}")
                if self.global_step % self.cfg.log_every == 0:
                    self._log({
                        "kind": "step",
                        "epoch": epoch,
                        "step": self.global_step,
                        "loss": loss,
                        "lr": self.optimizer.param_groups[0]["lr"],
                        "wall_time": time.time() - start_time,
                    })

            train_loss = float(np.mean(losses))
            val_loss = self.validation_loss() if self.val_sampler is not None else train_loss
            val_sdr = self.validation_sdr()
            self._log({
                "kind": "epoch",
                "epoch": epoch,
                "step": self.global_step,
                "loss": train_loss,
                "val_loss": val_loss,
                "val_sdr": val_sdr,
                "lr": self.optimizer.param_groups[0]["lr"],
                "wall_time": time.time() - start_time,
            })
            self.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                                 "val_sdr": math.nan if val_sdr is None else val_sdr})

            improved = val_loss < self.best_val
            if improved:
                self.best_val = val_loss
            self._save(self.last_path, epoch, train_loss, val_loss)
            if improved:
                self._save(self.best_path, epoch, train_loss, val_loss)
            marker = " ★" if improved else ""
            sdr_text = f", Val-SDR {val_sdr:.2f} dB" if val_sdr is not None else ""
            print(f"  ✓ Epoche {epoch + 1}: Loss {train_loss:.4f}, Val {val_loss:.4f}{sdr_text}{marker}")

        return TrainResult(
            best_checkpoint=self.best_path,
            last_checkpoint=self.last_path,
            history=pd.DataFrame(self.history, columns=["epoch", "train_loss", "val_loss", "val_sdr"]),
            best_val_loss=self.best_val,
            epochs_run=len(self.history),
            global_step=self.global_step,
        )


def train(run_cfg, dataset: AudioVisualDataset, out_dir: str,
          val_dataset: Optional[AudioVisualDataset] = None, resume: Optional[str] = None,
          progress: bool = True) -> TrainResult:
    """Trainiert nach run_cfg und liefert die Pfade der Checkpoints."""
    return Trainer(run_cfg, dataset, out_dir, val_dataset, resume, progress).train()


# ---------------------------------------------------------------------------
# Inferenz
# ---------------------------------------------------------------------------

def sampling_plan(sched: NoiseSchedule, infer_cfg: InferConfig) -> List[Tuple[int, int]]:
    """Liste der (t, t_prev)-Sprünge des Samplers."""
    infer_cfg.validate(sched.T)
    if infer_cfg.sampler == "ddpm":
        return [(t, t - 1) for t in range(sched.T, 0, -1)]
    return ddim_timesteps(sched.T, infer_cfg.steps)


@torch.no_grad()
def sample(model: SeparatorModel, x_mix: torch.Tensor, v: torch.Tensor, sched: NoiseSchedule,
           infer_cfg: InferConfig, generator: torch.Generator = None,
           x_T: torch.Tensor = None, trace: bool = False) -> Tuple[torch.Tensor, List[np.ndarray]]:
    """
    Iteratives Entrauschen von x_T bis x_0 auf dem Netzwerkraster.

    Args:
        x_mix: (B, 1, H, W) skalierte Mischungsmagnitude
        v: (B, C) visuelle Einbettung
        x_T: optionaler Startzustand; sonst aus generator gezogen
        trace: Zwischenstände sammeln (x_T und nach jedem Schritt)

    Returns:
        (x_0, Liste der Zwischenstände als numpy-Arrays)
    """
    plan = sampling_plan(sched, infer_cfg)
    model.eval()
    device = x_mix.device
    generator = generator or torch.Generator().manual_seed(infer_cfg.seed)

    def noise() -> torch.Tensor:
        return torch.randn(x_mix.shape, generator=generator, dtype=x_mix.dtype).to(device)

    x = noise() if x_T is None else x_T.to(device=device, dtype=x_mix.dtype)
    if tuple(x.shape) != tuple(x_mix.shape):
        raise ValueError(f"x_T {tuple(x.shape)} passt nicht zu x_mix {tuple(x_mix.shape)}")
    snapshots = [x.cpu().numpy().copy()] if trace else []

    for t, t_prev in plan:
        eps_hat = model.predict_noise(x, x_mix, v, t)
        if infer_cfg.sampler == "ddpm":
            z = noise() if t > 1 else torch.zeros_like(x)
            x = ddpm_step(x, eps_hat, t, z, sched)
        else:
            z = noise() if infer_cfg.eta > 0 else None
            x = ddim_step(x, eps_hat, t, t_prev, sched, infer_cfg.eta, z)
        if not torch.isfinite(x).all():
            raise FloatingPointError(f"Nicht endlicher Zwischenzustand bei t={t} → {t_prev}")
        if trace:
            snapshots.append(x.cpu().numpy().copy())
    return x, snapshots


@dataclass
class SeparationResult:
    """Ergebnis einer Trennung mit optionalem Verlauf."""
    waveform: Waveform
    estimate: ScaledMagnitude
    x0: np.ndarray
    trace: List[np.ndarray] = field(default_factory=list)


def clamp_estimate(x0: np.ndarray, sigma: float) -> np.ndarray:
    """
    Begrenzt x̂0 vor dem Entskalieren: negative Werte werden 0.

    Werte über 1 bleiben erhalten; oben greift nur MAX_MAGNITUDE.
    """
    return np.clip(x0, 0.0, np.log1p(MAX_MAGNITUDE) * sigma)


def _frame_tensor(frame: np.ndarray, crop: int) -> torch.Tensor:
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim == 3 and frame.shape[2] == 3 and frame.shape[0] != 3:
        frame = preprocess_frame(frame, training=False, crop=crop)
    return torch.from_numpy(np.ascontiguousarray(frame))[None]


def separate_detailed(mixture: Waveform, frame, model: SeparatorModel, run_cfg,
                      infer_cfg: InferConfig = None, x_T: torch.Tensor = None,
                      trace: bool = False, embedding: torch.Tensor = None) -> SeparationResult:
    """
    Trennt die zum Bild gehörende Quelle aus einer Mischung.

    Args:
        mixture: Mischsignal
        frame: RGB-Bild (H × W × 3, [0, 1]) oder vorverarbeitet (3 × crop × crop)
        model: trainiertes Modell
        run_cfg: Laufkonfiguration (Spektrogramm, Rauschplan, Daten)
        infer_cfg: Sampler-Einstellungen (Standard: run_cfg.infer)
        x_T: optionaler Startzustand (1, 1, H, W)
        trace: Zwischenstände sammeln
        embedding: vorberechnete Einbettung (1, C) statt Bildkodierung
    """
    infer_cfg = infer_cfg or run_cfg.infer
    spec_cfg = run_cfg.spectrogram
    if mixture.sample_rate != spec_cfg.sample_rate:
        raise ValueError(f"Mischung hat {mixture.sample_rate} Hz, erwartet {spec_cfg.sample_rate} Hz")
    sched = schedule_from_config(run_cfg.diffusion)
    device = next(model.parameters()).device
    dtype = next(model.parameters()).dtype

    mix_spec = stft(mixture, spec_cfg.window_size, spec_cfg.hop_length)
    x_mix_scaled = to_network(mix_spec, spec_cfg)
    x_mix = torch.from_numpy(x_mix_scaled.values).to(device=device, dtype=dtype)[None, None]

    if embedding is None and model.cfg.embedding_source == "precomputed":
        raise ValueError("Modell erwartet eine vorberechnete Einbettung, keine übergeben")
    with torch.no_grad():
        if embedding is None:
            v = model.encode_frames(_frame_tensor(frame, run_cfg.data.crop).to(device=device, dtype=dtype))
        else:
            v = embedding.to(device=device, dtype=dtype).reshape(1, -1)

    from utils.run_config import derive_seed

    generator = torch.Generator().manual_seed(derive_seed(infer_cfg.seed, "sampling"))
    x0, snapshots = sample(model, x_mix, v, sched, infer_cfg, generator, x_T, trace)
    x0_np = x0[0, 0].cpu().numpy().astype(np.float64)
    estimate = ScaledMagnitude(clamp_estimate(x0_np, spec_cfg.sigma), spec_cfg.sigma,
                               source_shape=mix_spec.shape)
    waveform = reconstruct_waveform(estimate, mix_spec)
    return SeparationResult(waveform, estimate, x0_np, snapshots)


def separate(mixture: Waveform, frame, model: SeparatorModel, run_cfg,
             infer_cfg: InferConfig = None, x_T: torch.Tensor = None) -> Waveform:
    """Getrenntes Signal der Quelle, die zum Bild gehört."""
    return separate_detailed(mixture, frame, model, run_cfg, infer_cfg, x_T).waveform


def intermediate_trace(mixture: Waveform, frame, model: SeparatorModel, run_cfg,
                       infer_cfg: InferConfig = None, x_T: torch.Tensor = None) -> List[np.ndarray]:
    """Zwischenstände x_T … x_0 (Länge = Schrittzahl + 1)."""
    return separate_detailed(mixture, frame, model, run_cfg, infer_cfg, x_T, trace=True).trace


@torch.no_grad()
def separate_grids(model: SeparatorModel, x_mix: torch.Tensor, v: torch.Tensor, run_cfg,
                   infer_cfg: InferConfig = None, seed_purpose: str = "sampling") -> np.ndarray:
    """Batchweises Sampling auf dem Netzwerkraster; liefert x_0 nach clamp_estimate."""
    from utils.run_config import derive_seed

    infer_cfg = infer_cfg or run_cfg.infer
    sched = schedule_from_config(run_cfg.diffusion)
    generator = torch.Generator().manual_seed(derive_seed(infer_cfg.seed, seed_purpose))
    x0, _ = sample(model, x_mix, v, sched, infer_cfg, generator)
    return clamp_estimate(x0[:, 0].cpu().numpy().astype(np.float64), run_cfg.spectrogram.sigma)


def load_model(path: str, device: str = None, expected_diffusion=None,
               use_ema: bool = False) -> Tuple[SeparatorModel, object, Dict[str, object]]:
    """
    Lädt Modell und Laufkonfiguration aus einem Checkpoint.

    Args:
        expected_diffusion: DiffusionConfig, die zum Checkpoint passen muss
        use_ema: EMA-Gewichte verwenden, falls vorhanden

    Returns:
        (Modell im Eval-Modus, RunConfig, Metadaten)
    """
    from utils.checkpoint import load_checkpoint
    from utils.run_config import RunConfig, resolve_device

    device = resolve_device(device or "")
    ckpt = load_checkpoint(path, device=device)
    run_cfg = RunConfig.from_dict(ckpt.config)
    if expected_diffusion is not None and ckpt.schedule != vars(expected_diffusion):
        raise ValueError(
            f"Rauschplan des Checkpoints {ckpt.schedule} passt nicht zu {vars(expected_diffusion)}"
        )
    model = SeparatorModel(run_cfg.model).to(device)
    state = ckpt.ema_state if use_ema and ckpt.ema_state is not None else ckpt.model_state
    model.load_state_dict(state)
    model.eval()
    return model, run_cfg, ckpt.meta
