"""Tagging, inference on WAV files and split-level CA-SDRi reports."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set

import numpy as np
import torch

from s5sep.dsp import MelConfig, StftConfig, mel_spectrogram
from s5sep.errors import InvalidInputError
from s5sep.metrics import ca_sdri, tagging_accuracy
from s5sep.pipeline.checkpoint import load_stage1, load_stage2
from s5sep.scene import SceneRendering, ToyCatalog, read_wav, render_dataset_scene, write_wav
from s5sep.sed import SedModel, detect_active_classes
from s5sep.separator import Separator, iterative_separate, onehot

log = logging.getLogger(__name__)

MODES = ("predicted", "oracle", "alternate")


class Stage1Tagger:
    """A Stage-1 detector bundled with the front end it was trained on."""

    def __init__(self, model: SedModel, stft_config: StftConfig, mel_config: MelConfig):
        self.model = model.eval()
        self.stft_config = stft_config
        self.mel_config = mel_config

    @classmethod
    def from_checkpoint(cls, path: Path) -> "Stage1Tagger":
        model, payload = load_stage1(path)
        return cls(model, StftConfig(**payload["config"]["stft"]), MelConfig(**payload["config"]["mel"]))

    @property
    def n_classes(self) -> int:
        return self.model.config.n_classes

    @torch.no_grad()
    def weak_probs(self, mixture_ch1) -> np.ndarray:
        """Clip probabilities ``[C]`` for ``[T]`` input, ``[B, C]`` for ``[B, T]``."""
        wave = torch.as_tensor(np.asarray(mixture_ch1), dtype=torch.float32)
        mel = mel_spectrogram(wave, self.stft_config, self.mel_config)
        return self.model(mel).weak.numpy().astype(np.float64)

    def detect(self, mixture_ch1, threshold: float = 0.5) -> Set[int]:
        return detect_active_classes(self.weak_probs(mixture_ch1), threshold)


def render_split(
    split: str,
    n_scenes: int,
    base_seed: int,
    catalog: ToyCatalog,
    n_workers: int = 1,
) -> List[SceneRendering]:
    """Render scenes ``0..n_scenes-1`` of a split, optionally across worker processes."""
    if n_scenes < 1:
        raise InvalidInputError("n_scenes must be >= 1")
    args = [(split, i, base_seed, catalog) for i in range(n_scenes)]
    if n_workers <= 1:
        return [render_dataset_scene(*a) for a in args]
    with ProcessPoolExecutor(n_workers) as pool:
        return list(pool.map(render_dataset_scene, *zip(*args)))


@torch.no_grad()
def separate_classes(
    separator: Separator, mixture: np.ndarray, classes: Iterable[int], n_iters: int
) -> Dict[int, List[np.ndarray]]:
    """Estimates for each class after every pass ``1..n_iters`` (one batched call)."""
    classes = sorted(classes)
    if not classes:
        return {}
    mix = torch.as_tensor(np.asarray(mixture), dtype=torch.float32)
    mix = mix.unsqueeze(0).expand(len(classes), -1, -1).contiguous()
    cond = separator.condition(mix, onehot(classes, separator.config.n_classes))
    history = iterative_separate(separator, mix, cond, n_iters, return_all=True)
    return {c: [h[i].numpy().astype(np.float64) for h in history] for i, c in enumerate(classes)}


@dataclass
class EvalResult:
    rows: List[dict]
    summary: dict
    csv_path: Optional[Path] = None
    json_path: Optional[Path] = None


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def evaluate(
    scenes: Iterable,
    separator: Separator,
    n_iters_list: Sequence[int],
    *,
    tagger: Optional[Stage1Tagger] = None,
    alt_tagger: Optional[Stage1Tagger] = None,
    threshold: float = 0.5,
    out_dir: Optional[Path] = None,
    name: str = "eval",
) -> EvalResult:
    """Score every scene under each class-set mode and number of passes.

    ``scenes`` yields objects with ``scene_id``, ``mixture[M, T]``,
    ``direct_targets`` and ``weak_labels``. Oracle mode always runs; the
    predicted and alternate modes run when their tagger is given. The report
    has one row per ``(scene, n_iters)``.
    """
    n_iters_list = sorted(set(int(n) for n in n_iters_list))
    if not n_iters_list or n_iters_list[0] < 1:
        raise InvalidInputError("n_iters_list must hold positive integers")
    max_iters = n_iters_list[-1]
    n_classes = separator.config.n_classes
    taggers = {"predicted": tagger, "alternate": alt_tagger}
    for t in taggers.values():
        if t is not None and t.n_classes != n_classes:
            raise InvalidInputError(
                f"tagger has {t.n_classes} classes but separator has {n_classes}"
            )
    modes = [m for m in MODES if m == "oracle" or taggers[m] is not None]

    rows: List[dict] = []
    class_sets: Dict[str, List[Set[int]]] = {m: [] for m in modes}
    truths: List[Set[int]] = []
    scores: Dict[str, Dict[int, List[float]]] = {m: {n: [] for n in n_iters_list} for m in modes}
    per_class: Dict[str, Dict[int, Dict[int, List[float]]]] = {
        m: {n: {c: [] for c in range(1, n_classes + 1)} for n in n_iters_list} for m in modes
    }
    for scene in scenes:
        truth = set(int(c) for c in scene.weak_labels)
        truths.append(truth)
        sets = {}
        for m in modes:
            sets[m] = truth if m == "oracle" else taggers[m].detect(scene.mixture[0], threshold)
            class_sets[m].append(sets[m])
        needed = set().union(*sets.values())
        estimates = separate_classes(separator, scene.mixture, needed, max_iters)
        for n in n_iters_list:
            row = {"scene_id": scene.scene_id, "n_iters": n}
            for m in modes:
                report = ca_sdri(
                    {c: estimates[c][n - 1] for c in sets[m]}, scene.direct_targets, scene.mixture[0]
                )
                scores[m][n].append(report.ca_sdri)
                row[f"{m}_ca_sdri"] = report.ca_sdri
                row[f"{m}_n_union"] = report.n_union
                row[f"{m}_classes"] = " ".join(str(c) for c in sorted(sets[m]))
                row[f"{m}_exact_match"] = int(report.tagging["exact_match"])
                for c in range(1, n_classes + 1):
                    value = report.per_class.get(c)
                    row[f"{m}_sdri_c{c}"] = "" if value is None else value
                    if value is not None:
                        per_class[m][n][c].append(value)
            rows.append(row)
    if not truths:
        raise InvalidInputError("evaluation received no scenes")

    summary = {
        "name": name,
        "n_scenes": len(truths),
        "n_iters": n_iters_list,
        "modes": {},
        "curve": {},
    }
    for m in modes:
        entry = {
            "ca_sdri": {str(n): _mean(scores[m][n]) for n in n_iters_list},
            "per_class_sdri": {
                str(n): {str(c): _mean(v) for c, v in per_class[m][n].items()} for n in n_iters_list
            },
        }
        if m != "oracle":
            entry["tagging"] = tagging_accuracy(class_sets[m], truths)
        summary["modes"][m] = entry
        summary["curve"][m] = [[n, _mean(scores[m][n])] for n in n_iters_list]

    result = EvalResult(rows, summary)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.csv_path = out_dir / f"{name}.csv"
        with open(result.csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        result.json_path = out_dir / f"{name}.json"
        result.json_path.write_text(json.dumps(summary, indent=2))
    return result


def mean_ca_sdri(result: EvalResult, mode: str = "oracle", n_iters: Optional[int] = None) -> float:
    entry = result.summary["modes"][mode]["ca_sdri"]
    key = str(n_iters if n_iters is not None else result.summary["n_iters"][0])
    return entry[key]


def tag_file(wav_path: Path, stage1_ckpt: Path) -> Dict[int, float]:
    """Clip probability per class for channel 1 of a WAV file."""
    tagger = Stage1Tagger.from_checkpoint(stage1_ckpt)
    audio, sr = read_wav(wav_path)
    if sr != tagger.stft_config.sample_rate_hz:
        raise InvalidInputError(f"{wav_path} is {sr} Hz, model expects {tagger.stft_config.sample_rate_hz}")
    probs = tagger.weak_probs(audio[0])
    return {c + 1: float(p) for c, p in enumerate(probs)}


def infer(
    mixture_wav: Path,
    stage1_ckpt: Path,
    stage2_ckpt: Path,
    n_iters: int,
    threshold: float,
    out_dir: Path,
) -> Path:
    """Detect classes on channel 1, extract each and write one mono WAV per class.

    Returns the path of ``manifest.json``. An empty detection set writes an
    empty manifest and logs a warning.
    """
    if n_iters < 1:
        raise InvalidInputError(f"n_iters must be >= 1, got {n_iters}")
    tagger = Stage1Tagger.from_checkpoint(stage1_ckpt)
    separator, _ = load_stage2(stage2_ckpt)
    cfg = separator.config
    if tagger.n_classes != cfg.n_classes:
        raise InvalidInputError(
            f"stage-1 checkpoint has {tagger.n_classes} classes, stage-2 has {cfg.n_classes}"
        )
    mixture, sr = read_wav(mixture_wav)
    if sr != cfg.stft.sample_rate_hz:
        raise InvalidInputError(f"{mixture_wav} is {sr} Hz, model expects {cfg.stft.sample_rate_hz}")
    if mixture.shape[0] != cfg.n_mix_channels:
        raise InvalidInputError(
            f"{mixture_wav} has {mixture.shape[0]} channels, model expects {cfg.n_mix_channels}"
        )
    probs = tagger.weak_probs(mixture[0])
    classes = detect_active_classes(probs, threshold)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not classes:
        log.warning("no class reached threshold %.2f in %s", threshold, mixture_wav)
    estimates = separate_classes(separator, mixture, classes, n_iters)
    detections = []
    for c in sorted(classes):
        path = out_dir / f"class_{c:02d}.wav"
        write_wav(path, estimates[c][-1], sr)
        detections.append(
            {"class": c, "weak_prob": float(probs[c - 1]), "n_iters": n_iters, "file": path.name}
        )
    manifest = {
        "input": str(mixture_wav),
        "threshold": threshold,
        "n_iters": n_iters,
        "detections": detections,
        "weak_probs": {str(c + 1): float(p) for c, p in enumerate(probs)},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
