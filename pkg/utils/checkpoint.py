"""Checkpoints im Array-Container-Format.

Arrays:
    model/<name>            Gewichte nach hierarchischem Parameternamen
    ema/<name>              EMA-Gewichte (optional)
    optim/<index>/<key>     Tensor-Zustände des Optimierers (Adam-Momente, step)

Metadaten: Laufkonfiguration, Rauschplan, Trainingsstand und die
nicht-tensoriellen Optimierer-Einträge (param_groups).
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import torch

from .array_container import ContainerError, read_container, write_container

CHECKPOINT_KIND = "checkpoint"
CHECKPOINT_VERSION = "1"


@dataclass
class Checkpoint:
    """Geladener Checkpoint."""
    model_state: Dict[str, torch.Tensor]
    config: Dict[str, Dict[str, Any]]
    schedule: Dict[str, Any]
    meta: Dict[str, Any]
    optimizer_state: Optional[Dict[str, Any]] = None
    ema_state: Optional[Dict[str, torch.Tensor]] = None


def _to_numpy(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy()


def save_checkpoint(path: str, model: torch.nn.Module, run_cfg, optimizer=None,
                    meta: Dict[str, Any] = None,
                    ema_state: Dict[str, torch.Tensor] = None) -> None:
    """
    Speichert Modell, Konfiguration, Optimiererzustand und Metadaten.

    Args:
        path: Zieldatei (.ckpt)
        model: Modell
        run_cfg: RunConfig des Laufs
        optimizer: optionaler Optimierer (für das Fortsetzen)
        meta: Trainingsstand (epoch, global_step, Verluste)
        ema_state: optionale EMA-Gewichte
    """
    arrays: Dict[str, np.ndarray] = {}
    for name, value in model.state_dict().items():
        arrays[f"model/{name}"] = _to_numpy(value)
    if ema_state is not None:
        for name, value in ema_state.items():
            arrays[f"ema/{name}"] = _to_numpy(value)

    optim_meta = None
    if optimizer is not None:
        state_dict = optimizer.state_dict()
        state_meta = {}
        for index, entries in state_dict["state"].items():
            slots = {}
            for key, value in entries.items():
                if torch.is_tensor(value):
                    arrays[f"optim/{index}/{key}"] = _to_numpy(value)
                    slots[key] = {"array": f"optim/{index}/{key}"}
                else:
                    slots[key] = {"value": value}
            state_meta[str(index)] = slots
        optim_meta = {"param_groups": state_dict["param_groups"], "state": state_meta}

    cfg_dict = run_cfg.to_dict()
    write_container(
        path,
        arrays,
        metadata={
            "kind": CHECKPOINT_KIND,
            "checkpoint_version": CHECKPOINT_VERSION,
            "run_config": cfg_dict,
            "schedule": cfg_dict["diffusion"],
            "meta": meta or {},
            "optimizer": optim_meta,
            "has_ema": ema_state is not None,
        },
    )


def load_checkpoint(path: str, device: str = "cpu") -> Checkpoint:
    """Lädt einen Checkpoint; Tensoren liegen auf device (Optimierer-step auf CPU)."""
    arrays, metadata = read_container(path)
    if metadata.get("kind") != CHECKPOINT_KIND:
        raise ContainerError(f"{path} ist kein Checkpoint")

    def tensor(name: str) -> torch.Tensor:
        return torch.from_numpy(np.array(arrays[name], copy=True))

    model_state = {k[len("model/"):]: tensor(k).to(device) for k in arrays if k.startswith("model/")}
    ema_state = None
    if metadata.get("has_ema"):
        ema_state = {k[len("ema/"):]: tensor(k).to(device) for k in arrays if k.startswith("ema/")}

    optimizer_state = None
    optim_meta = metadata.get("optimizer")
    if optim_meta is not None:
        state = {}
        for index, slots in optim_meta["state"].items():
            entries = {}
            for key, slot in slots.items():
                entries[key] = tensor(slot["array"]) if "array" in slot else slot["value"]
            state[int(index)] = entries
        optimizer_state = {"state": state, "param_groups": optim_meta["param_groups"]}

    return Checkpoint(
        model_state=model_state,
        config=metadata["run_config"],
        schedule=metadata["schedule"],
        meta=metadata.get("meta", {}),
        optimizer_state=optimizer_state,
        ema_state=ema_state,
    )
