"""Checkpoint files: a plain dict of tensors and JSON-compatible metadata."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Tuple

import torch

from s5sep.errors import InvalidInputError
from s5sep.sed import SedConfig, SedModel
from s5sep.separator import Separator, SeparatorConfig

FORMAT = "s5sep-checkpoint"
VERSION = 1


def save_checkpoint(path: Path, kind: str, model: torch.nn.Module, config: Dict[str, Any],
                    meta: Dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "config": config,
        "state_dict": model.state_dict(),
        "meta": meta or {},
    }
    torch.save(payload, path)
    return path


def read_checkpoint(path: Path, kind: str) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # corrupted or foreign file
        raise InvalidInputError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != FORMAT:
        raise InvalidInputError(f"{path} is not an s5sep checkpoint")
    if payload.get("kind") != kind:
        raise InvalidInputError(f"{path} holds a {payload.get('kind')!r} model, expected {kind!r}")
    return payload


def load_stage1(path: Path) -> Tuple[SedModel, Dict[str, Any]]:
    payload = read_checkpoint(path, "stage1")
    model = SedModel(SedConfig(**payload["config"]["sed"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def load_stage2(path: Path) -> Tuple[Separator, Dict[str, Any]]:
    payload = read_checkpoint(path, "stage2")
    model = Separator(SeparatorConfig.from_dict(payload["config"]["separator"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
