"""Stage-1 (detector) and Stage-2 (separator) training loops."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from s5sep.dsp import mel_spectrogram
from s5sep.errors import InvalidInputError, TrainingDivergedError
from s5sep.pipeline.checkpoint import load_stage1, save_checkpoint
from s5sep.pipeline.config import ExperimentConfig, TrainConfig
from s5sep.pipeline.schedule import cosine_warmup_lr, layerwise_lr
from s5sep.scene import SceneRendering, ToyCatalog, render_dataset_scene
from s5sep.sed import SedConfig, SedLabels, SedModel, frame_targets, sed_loss
from s5sep.separator import Separator, onehot, refinement_training_step

log = logging.getLogger(__name__)

STAGE1_EPOCH = 0
STAGE2_EPOCH = 1


@dataclass
class TrainResult:
    checkpoint: Path
    curve: Path
    losses: List[float] = field(default_factory=list)
    seconds: float = 0.0


def train_batches(
    catalog: ToyCatalog, base_seed: int, batch_size: int, n_steps: int, epoch: int
):
    """Yield ``n_steps`` lists of training scenes; batch ``i`` holds scenes ``i*B .. i*B+B-1``."""
    for step in range(n_steps):
        start = step * batch_size
        yield [
            render_dataset_scene("train", start + j, base_seed, catalog, epoch)
            for j in range(batch_size)
        ]


def sed_batch(
    scenes: Sequence[SceneRendering], cfg: ExperimentConfig, sed_cfg: SedConfig
):
    """Log-mel inputs of mixture channel 1 and frame/clip targets for a batch."""
    stft_cfg, mel_cfg = cfg.stft_config(), cfg.mel_config()
    wave = torch.tensor(np.stack([s.mixture[0] for s in scenes]), dtype=torch.float32)
    mel = mel_spectrogram(wave, stft_cfg, mel_cfg)
    n_out = sed_cfg.output_frames(mel.shape[-1])
    labels = [
        frame_targets(s.strong_labels, n_out, cfg.data.scene_length_s, sed_cfg.n_classes)
        for s in scenes
    ]
    return mel, SedLabels(
        torch.stack([lab.strong for lab in labels]), torch.stack([lab.weak for lab in labels])
    )


def _optimizer(groups: List[dict], train_cfg: TrainConfig):
    # Adam with the default moment decay rates and no weight decay
    opt = torch.optim.Adam(groups, betas=(0.9, 0.999), weight_decay=0.0)
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt,
        lambda s: cosine_warmup_lr(s, 1.0, train_cfg.warmup_steps, train_cfg.total_steps),
    )
    return opt, sched


def layerwise_groups(layer_groups: List[List[torch.nn.Parameter]], base_lr: float, decay: float):
    n = len(layer_groups)
    return [
        {"params": params, "lr": layerwise_lr(base_lr, i, n, decay)}
        for i, params in enumerate(layer_groups)
    ]


def _check_finite(loss: torch.Tensor, step: int) -> None:
    value = float(loss.detach())
    if not math.isfinite(value):
        raise TrainingDivergedError(step, value)


class _CurveWriter:
    def __init__(self, path: Path, columns: Sequence[str]):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(columns)

    def row(self, *values) -> None:
        self._writer.writerow(values)

    def close(self) -> None:
        self._fh.close()


def stage1_checkpoint_config(cfg: ExperimentConfig, sed_cfg: SedConfig) -> dict:
    return {
        "sed": sed_cfg.to_dict(),
        "stft": asdict(cfg.stft_config()),
        "mel": asdict(cfg.mel_config()),
        "experiment": cfg.to_dict(),
    }


def train_stage1(
    cfg: ExperimentConfig,
    out_dir: Path,
    *,
    on_step: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Train the Stage-1 detector on freshly rendered training scenes."""
    t_cfg = cfg.stage1
    out_dir = Path(out_dir)
    sed_cfg = cfg.sed_config()
    catalog = cfg.catalog()
    torch.manual_seed(t_cfg.seed)
    model = SedModel(sed_cfg)
    model.train()
    opt, sched = _optimizer(
        layerwise_groups(model.layer_groups(), t_cfg.base_lr, t_cfg.layerwise_decay), t_cfg
    )
    curve = _CurveWriter(out_dir / "stage1_curve.csv", ["step", "lr", "loss"])
    losses: List[float] = []
    t0 = time.time()
    try:
        for step, scenes in enumerate(
            train_batches(catalog, cfg.data.base_seed, t_cfg.batch_size, t_cfg.total_steps, STAGE1_EPOCH)
        ):
            mel, labels = sed_batch(scenes, cfg, sed_cfg)
            out = model(mel)
            loss = sed_loss(out.strong, out.weak, labels, t_cfg.lam)
            _check_finite(loss, step)
            lr = opt.param_groups[-1]["lr"]
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            losses.append(float(loss.detach()))
            curve.row(step, f"{lr:.6e}", f"{losses[-1]:.6f}")
            if on_step is not None:
                on_step(step, losses[-1])
            if step % t_cfg.log_every == 0:
                log.info("stage1 step %d loss %.4f lr %.2e", step, losses[-1], lr)
    finally:
        curve.close()
    ckpt = save_checkpoint(
        out_dir / "stage1.pt",
        "stage1",
        model,
        stage1_checkpoint_config(cfg, sed_cfg),
        {"steps": t_cfg.total_steps, "final_loss": losses[-1], "config_hash": cfg.content_hash()},
    )
    return TrainResult(ckpt, curve.path, losses, time.time() - t0)


def _check_stage1_compatible(cfg: ExperimentConfig, payload: dict) -> SedConfig:
    sed_cfg = SedConfig(**payload["config"]["sed"])
    if sed_cfg.n_classes != cfg.data.n_target_classes:
        raise InvalidInputError(
            f"stage-1 checkpoint has {sed_cfg.n_classes} classes, config expects "
            f"{cfg.data.n_target_classes}"
        )
    if payload["config"]["stft"] != asdict(cfg.stft_config()) or payload["config"]["mel"] != asdict(
        cfg.mel_config()
    ):
        raise InvalidInputError("stage-1 checkpoint uses different STFT or mel settings")
    return sed_cfg


def build_stage2_model(cfg: ExperimentConfig, stage1_checkpoint: Path) -> Separator:
    """Separator for ``cfg`` with its Stage-2 detector copied from the Stage-1 checkpoint."""
    sed_model, payload = load_stage1(stage1_checkpoint)
    sed_cfg = _check_stage1_compatible(cfg, payload)
    torch.manual_seed(cfg.stage2.seed)
    model = Separator(cfg.separator_config(sed=sed_cfg))
    model.load_sed_weights(sed_model.state_dict())
    if model.sed is not None and not cfg.stage2.trainable_s2sed:
        for p in model.sed.parameters():
            p.requires_grad_(False)
    return model


def stage2_param_groups(model: Separator, t_cfg: TrainConfig) -> List[dict]:
    groups = model.parameter_groups()
    lrs = t_cfg.param_group_lrs
    out = [
        {"params": groups[name], "lr": lrs[name]}
        for name in ("pretrained", "dprnn", "new")
        if groups[name]
    ]
    if model.sed is not None and t_cfg.trainable_s2sed:
        out += layerwise_groups(
            model.sed.layer_groups(), t_cfg.lr_stage2_sed, t_cfg.stage2_sed_layer_decay
        )
    return out


def stage2_batch(scenes: Sequence[SceneRendering], n_classes: int, rng: np.random.Generator):
    """Mixtures, one-hot target classes (one random target per scene) and references."""
    classes = []
    for s in scenes:
        present = sorted(s.weak_labels)
        classes.append(present[int(rng.integers(len(present)))])
    mixture = torch.tensor(np.stack([s.mixture for s in scenes]), dtype=torch.float32)
    target = torch.tensor(
        np.stack([s.direct_targets[c] for s, c in zip(scenes, classes)]), dtype=torch.float32
    )
    return mixture, onehot(classes, n_classes), target


def train_stage2(
    cfg: ExperimentConfig,
    out_dir: Path,
    stage1_checkpoint: Path,
    *,
    name: str = "stage2",
    on_step: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Train the separator (and, unless frozen, its Stage-2 detector) jointly."""
    t_cfg = cfg.stage2
    out_dir = Path(out_dir)
    model = build_stage2_model(cfg, stage1_checkpoint)
    model.train()
    opt, sched = _optimizer(stage2_param_groups(model, t_cfg), t_cfg)
    rng = np.random.default_rng([t_cfg.seed, cfg.data.base_seed, 2])
    catalog = cfg.catalog()
    curve = _CurveWriter(out_dir / f"{name}_curve.csv", ["step", "lr", "loss", "n_iters"])
    losses: List[float] = []
    t0 = time.time()
    try:
        for step, scenes in enumerate(
            train_batches(catalog, cfg.data.base_seed, t_cfg.batch_size, t_cfg.total_steps, STAGE2_EPOCH)
        ):
            mixture, class_onehot, target = stage2_batch(scenes, cfg.data.n_target_classes, rng)
            res = refinement_training_step(
                model, mixture, class_onehot, target, t_cfg.max_train_iterations, rng
            )
            _check_finite(res.loss, step)
            lr = opt.param_groups[0]["lr"]
            opt.zero_grad()
            res.loss.backward()
            opt.step()
            sched.step()
            losses.append(float(res.loss.detach()))
            curve.row(step, f"{lr:.6e}", f"{losses[-1]:.6f}", res.n_iters)
            if on_step is not None:
                on_step(step, losses[-1])
            if step % t_cfg.log_every == 0:
                log.info("%s step %d loss %.4f k %d", name, step, losses[-1], res.n_iters)
    finally:
        curve.close()
    model.eval()
    ckpt = save_checkpoint(
        out_dir / f"{name}.pt",
        "stage2",
        model,
        {"separator": model.config.to_dict(), "experiment": cfg.to_dict()},
        {
            "steps": t_cfg.total_steps,
            "final_loss": losses[-1],
            "config_hash": cfg.content_hash(),
            "stage1_checkpoint": str(stage1_checkpoint),
        },
    )
    return TrainResult(ckpt, curve.path, losses, time.time() - t0)


def parameter_snapshot(module: torch.nn.Module) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in module.state_dict().items()}
