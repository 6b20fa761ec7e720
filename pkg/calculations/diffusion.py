"""Diffusions-Kern: Rauschplan, Vorwärtsprozess, DDPM-/DDIM-Schritte.

Zeitschritte laufen von 1 bis T; Index 0 der Arrays gehört zu t = 1.
ᾱ_0 ist als 1 definiert, damit β̃_1 = 0 gilt.

Die Schrittfunktionen arbeiten mit numpy-Arrays und torch-Tensoren,
da nur Skalare aus dem Plan mit dem Zustand verrechnet werden.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import torch

Grid = Union[np.ndarray, torch.Tensor]

SCHEDULE_KINDS = ("linear", "cosine")


@dataclass
class DiffusionConfig:
    """Parameter des Rauschplans (werden im Checkpoint gespeichert)."""
    kind: str = "linear"
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Vorberechnete Arrays eines Rauschplans (float64, unveränderlich)."""
    kind: str
    T: int
    beta_start: float
    beta_end: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"Zeitschritt t={t} außerhalb von [1, {self.T}]")
        return t

    def alpha_bar_at(self, t: int) -> float:
        """ᾱ_t mit ᾱ_0 = 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self.check_t(t) - 1])

    def to_config(self) -> DiffusionConfig:
        return DiffusionConfig(self.kind, self.T, self.beta_start, self.beta_end)

    def torch_arrays(self, device=None, dtype=torch.float32) -> dict:
        """Arrays als Tensoren mit vorangestelltem ᾱ_0 = 1 (Index = t)."""
        alpha_bar = np.concatenate([[1.0], self.alpha_bar])
        return {
            "sqrt_alpha_bar": torch.tensor(np.sqrt(alpha_bar), device=device, dtype=dtype),
            "sqrt_one_minus_alpha_bar": torch.tensor(
                np.sqrt(1.0 - alpha_bar), device=device, dtype=dtype
            ),
        }


def make_schedule(
    kind: str = "linear",
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> NoiseSchedule:
    """
    Erzeugt einen Rauschplan.

    Args:
        kind: "linear" (β linear zwischen beta_start und beta_end) oder
              "cosine" (ᾱ nach Kosinusverlauf, β auf [beta_start, 0.999] begrenzt)
        T: Anzahl der Diffusionsschritte
        beta_start: kleinstes β
        beta_end: größtes β (nur linear)

    Returns:
        NoiseSchedule mit β, α, ᾱ und β̃
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"Unbekannter Rauschplan: {kind}. Verfügbar: {', '.join(SCHEDULE_KINDS)}")
    if T < 1:
        raise ValueError(f"T muss mindestens 1 sein: {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(
            f"Ungültige Grenzen: 0 < beta_start ({beta_start}) ≤ beta_end ({beta_end}) < 1 verletzt"
        )

    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    else:
        s = 0.008
        steps = np.arange(T + 1, dtype=np.float64) / T
        f = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        beta = np.clip(1.0 - f[1:] / f[:-1], beta_start, 0.999)

    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    posterior_var = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta

    for arr in (beta, alpha, alpha_bar, posterior_var):
        arr.setflags(write=False)

    return NoiseSchedule(
        kind=kind,
        T=T,
        beta_start=beta_start,
        beta_end=beta_end,
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        posterior_var=posterior_var,
    )


def schedule_from_config(cfg: DiffusionConfig) -> NoiseSchedule:
    return make_schedule(cfg.kind, cfg.T, cfg.beta_start, cfg.beta_end)


def _check_same_shape(a: Grid, b: Grid, what: str) -> None:
    if tuple(a.shape) != tuple(b.shape):
        raise ValueError(f"Form von {what} {tuple(b.shape)} passt nicht zu {tuple(a.shape)}")


def q_sample(x0: Grid, t: int, eps: Grid, sched: NoiseSchedule) -> Grid:
    """Vorwärtsprozess: √ᾱ_t·x0 + √(1−ᾱ_t)·ε."""
    _check_same_shape(x0, eps, "eps")
    a_bar = sched.alpha_bar_at(sched.check_t(t))
    return math.sqrt(a_bar) * x0 + math.sqrt(1.0 - a_bar) * eps


def forward_step(x_prev: Grid, t: int, noise: Grid, sched: NoiseSchedule) -> Grid:
    """Einzelner Vorwärtsschritt q(x_t | x_{t−1}) = N(√(1−β_t)·x_{t−1}, β_t·I)."""
    _check_same_shape(x_prev, noise, "noise")
    beta = float(sched.beta[sched.check_t(t) - 1])
    return math.sqrt(1.0 - beta) * x_prev + math.sqrt(beta) * noise


def ddpm_step(x_t: Grid, eps_hat: Grid, t: int, z: Grid, sched: NoiseSchedule) -> Grid:
    """
    Ein Rückwärtsschritt nach DDPM.

    x_{t−1} = 1/√α_t · (x_t − (1−α_t)/√(1−ᾱ_t) · ε̂) + √β̃_t · z

    Bei t = 1 ist β̃_1 = 0, z hat dort keinen Einfluss.
    """
    t = sched.check_t(t)
    _check_same_shape(x_t, eps_hat, "eps_hat")
    _check_same_shape(x_t, z, "z")
    alpha = float(sched.alpha[t - 1])
    a_bar = float(sched.alpha_bar[t - 1])
    mean = (x_t - (1.0 - alpha) / math.sqrt(1.0 - a_bar) * eps_hat) / math.sqrt(alpha)
    return mean + math.sqrt(float(sched.posterior_var[t - 1])) * z


def predict_x0(x_t: Grid, eps_hat: Grid, t: int, sched: NoiseSchedule) -> Grid:
    """x̂0 = (x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t."""
    a_bar = sched.alpha_bar_at(sched.check_t(t))
    return (x_t - math.sqrt(1.0 - a_bar) * eps_hat) / math.sqrt(a_bar)


def ddim_step(
    x_t: Grid,
    eps_hat: Grid,
    t: int,
    t_prev: int,
    sched: NoiseSchedule,
    eta: float = 0.0,
    z: Grid = None,
) -> Grid:
    """
    Ein DDIM-Sprung von t nach t_prev (t_prev = 0 liefert x̂0).

    Mit η = 0 ist der Schritt deterministisch und z wird ignoriert.
    """
    t = sched.check_t(t)
    t_prev = int(t_prev)
    if t_prev >= t or t_prev < 0:
        raise ValueError(f"t_prev={t_prev} muss in [0, t={t}) liegen")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta muss in [0, 1] liegen: {eta}")
    _check_same_shape(x_t, eps_hat, "eps_hat")

    a_bar = sched.alpha_bar_at(t)
    a_bar_prev = sched.alpha_bar_at(t_prev)
    x0_hat = predict_x0(x_t, eps_hat, t, sched)

    sigma = eta * math.sqrt((1.0 - a_bar_prev) / (1.0 - a_bar)) * math.sqrt(1.0 - a_bar / a_bar_prev)
    direction = math.sqrt(max(1.0 - a_bar_prev - sigma ** 2, 0.0))
    x_prev = math.sqrt(a_bar_prev) * x0_hat + direction * eps_hat
    if sigma > 0.0:
        if z is None:
            raise ValueError("eta > 0 benötigt ein Rauschfeld z")
        _check_same_shape(x_t, z, "z")
        x_prev = x_prev + sigma * z
    return x_prev


def ddim_timesteps(T: int, steps: int) -> List[Tuple[int, int]]:
    """
    Gleichmäßig verteilte DDIM-Zeitpunkte.

    t_i = round(T − i·T/steps) für i = 0..steps−1; der letzte Schritt
    springt nach t_prev = 0. Beispiel T=1000, steps=25: 1000, 960, …, 40.
    """
    if not 1 <= steps <= T:
        raise ValueError(f"Schrittzahl {steps} muss in [1, T={T}] liegen")
    spacing = T / steps
    times = [int(round(T - i * spacing)) for i in range(steps)]
    return list(zip(times, times[1:] + [0]))


def timestep_embedding(t, dim: int) -> torch.Tensor:
    """
    Sinusförmige Positionseinbettung (Transformer-Stil).

    Erste Hälfte sin(t/10000^(2i/dim)), zweite Hälfte cos(t/10000^(2i/dim)).

    Args:
        t: int oder Tensor der Form (B,)
        dim: gerade Einbettungsdimension

    Returns:
        Tensor (dim,) für int-Eingabe, sonst (B, dim)
    """
    if dim % 2 != 0:
        raise ValueError(f"Einbettungsdimension muss gerade sein: {dim}")
    scalar = not torch.is_tensor(t)
    t_tensor = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    if torch.any(t_tensor < 0):
        raise ValueError("Zeitschritt muss nichtnegativ sein")

    half = dim // 2
    exponents = torch.arange(half, dtype=torch.float64, device=t_tensor.device) * 2.0 / dim
    freqs = torch.pow(torch.tensor(10000.0, dtype=torch.float64, device=t_tensor.device), -exponents)
    args = t_tensor[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    return emb[0] if scalar else emb


if __name__ == "__main__":
    sched = make_schedule("linear", 1000, 1e-4, 0.02)
    print(f"ᾱ_1 = {sched.alpha_bar[0]:.6f}")
    print(f"ᾱ_T = {sched.alpha_bar[-1]:.3e}")
    print(f"DDIM-25: {[t for t, _ in ddim_timesteps(1000, 25)][:4]} …")
