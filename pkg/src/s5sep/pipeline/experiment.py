"""Run manifests, the ablation grid and the end-to-end toy experiment."""

from __future__ import annotations

import copy
import json
import logging
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from s5sep.errors import InvalidInputError
from s5sep.pipeline.checkpoint import load_stage2
from s5sep.pipeline.config import ExperimentConfig
from s5sep.pipeline.evaluate import Stage1Tagger, evaluate, render_split
from s5sep.pipeline.train import build_stage2_model, train_stage1, train_stage2

log = logging.getLogger(__name__)

# stage-2 overrides for each named variant; the base configuration is "full"
ABLATIONS: Dict[str, Dict[str, object]] = {
    "full": {},
    "no_time_film": {"time_film": False},
    "no_injection": {"injection": False},
    "frozen_s2sed": {"trainable_s2sed": False},
    "no_dprnn": {"dprnn": False},
    "plain_film": {"time_film": False, "injection": False, "trainable_s2sed": False, "dprnn": False},
    "iter1": {"max_train_iterations": 1},
    "iter2": {"max_train_iterations": 2},
    "iter4": {"max_train_iterations": 4},
}
DEFAULT_ABLATIONS = ("full", "no_time_film", "no_injection", "frozen_s2sed")


@dataclass
class ExperimentManifest:
    run_id: str
    config: dict
    config_hash: str
    checkpoints: Dict[str, str] = field(default_factory=dict)
    metric_history: Dict[str, List[float]] = field(default_factory=dict)
    results: Dict[str, dict] = field(default_factory=dict)

    @classmethod
    def new(cls, cfg: ExperimentConfig) -> "ExperimentManifest":
        return cls(uuid.uuid4().hex[:12], cfg.to_dict(), cfg.content_hash())

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2))
        return path

    @classmethod
    def load(cls, path: Path) -> "ExperimentManifest":
        path = Path(path)
        if not path.is_file():
            raise InvalidInputError(f"manifest not found: {path}")
        return cls(**json.loads(path.read_text()))


def load_or_create_manifest(run_dir: Path, cfg: ExperimentConfig) -> ExperimentManifest:
    path = Path(run_dir) / "manifest.json"
    if path.is_file():
        manifest = ExperimentManifest.load(path)
        if manifest.config_hash != cfg.content_hash():
            log.warning("config differs from the one recorded in %s; recording the new one", path)
            manifest.config, manifest.config_hash = cfg.to_dict(), cfg.content_hash()
        return manifest
    return ExperimentManifest.new(cfg)


def variant_config(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    if variant not in ABLATIONS:
        raise InvalidInputError(f"unknown ablation {variant!r}; choose from {sorted(ABLATIONS)}")
    out = copy.deepcopy(cfg)
    for key, value in ABLATIONS[variant].items():
        setattr(out.stage2, key, value)
    return out


def validation_scenes(cfg: ExperimentConfig, n_workers: int = 1):
    e = cfg.evaluate
    return render_split(e.split, e.n_scenes, cfg.data.base_seed, cfg.catalog(), n_workers)


def tagging_report(tagger: Stage1Tagger, scenes, threshold: float) -> dict:
    from s5sep.metrics import tagging_accuracy

    predicted = [tagger.detect(s.mixture[0], threshold) for s in scenes]
    return tagging_accuracy(predicted, [set(s.weak_labels) for s in scenes])


def run_ablations(
    cfg: ExperimentConfig,
    run_dir: Path,
    stage1_ckpt: Path,
    variants: Sequence[str] = DEFAULT_ABLATIONS,
    *,
    scenes=None,
    manifest: Optional[ExperimentManifest] = None,
) -> Dict[str, dict]:
    """Train and evaluate each Stage-2 variant from the same Stage-1 checkpoint."""
    run_dir = Path(run_dir)
    scenes = scenes if scenes is not None else validation_scenes(cfg)
    tagger = Stage1Tagger.from_checkpoint(stage1_ckpt)
    results: Dict[str, dict] = {}
    for name in variants:
        v_cfg = variant_config(cfg, name)
        trained = train_stage2(v_cfg, run_dir, stage1_ckpt, name=f"stage2_{name}")
        separator, _ = load_stage2(trained.checkpoint)
        report = evaluate(
            scenes, separator, v_cfg.evaluate.n_iters, tagger=tagger,
            threshold=v_cfg.evaluate.threshold, out_dir=run_dir, name=f"eval_{name}",
        )
        results[name] = {
            "checkpoint": str(trained.checkpoint),
            "train_seconds": trained.seconds,
            "final_loss": trained.losses[-1],
            "ca_sdri": report.summary["modes"],
        }
        if manifest is not None:
            manifest.checkpoints[f"stage2_{name}"] = str(trained.checkpoint)
            manifest.metric_history[f"stage2_{name}_loss"] = trained.losses
        log.info("variant %s: %s", name, report.summary["modes"]["oracle"]["ca_sdri"])
    (run_dir / "ablation.json").write_text(json.dumps(results, indent=2))
    return results


@dataclass
class ToyExperimentResult:
    tagging: dict
    untrained_oracle: float
    oracle: float
    predicted: float
    ablations: Dict[str, float]
    sweep: dict
    seconds: float
    manifest_path: Path


def run_toy_experiment(
    cfg: ExperimentConfig,
    run_dir: Path,
    *,
    ablations: Sequence[str] = ("no_time_film", "no_injection", "frozen_s2sed"),
    sweep_iters: Sequence[int] = tuple(range(1, 11)),
) -> ToyExperimentResult:
    """Stage 1, Stage 2, its ablations and an iteration sweep on the validation split.

    Headline numbers use a single pass (``n_iters`` = 1 when present in the
    evaluation list, else the smallest listed value).
    """
    t0 = time.time()
    run_dir = Path(run_dir)
    manifest = ExperimentManifest.new(cfg)
    scenes = validation_scenes(cfg)
    n_head = min(cfg.evaluate.n_iters)
    thr = cfg.evaluate.threshold

    s1 = train_stage1(cfg, run_dir)
    manifest.checkpoints["stage1"] = str(s1.checkpoint)
    manifest.metric_history["stage1_loss"] = s1.losses
    tagger = Stage1Tagger.from_checkpoint(s1.checkpoint)
    tagging = tagging_report(tagger, scenes, thr)

    untrained = build_stage2_model(cfg, s1.checkpoint).eval()
    base = evaluate(scenes, untrained, [n_head], out_dir=run_dir, name="eval_untrained")
    untrained_score = base.summary["modes"]["oracle"]["ca_sdri"][str(n_head)]

    variants = ["full"] + [a for a in ablations if a != "full"]
    results = run_ablations(cfg, run_dir, s1.checkpoint, variants, scenes=scenes, manifest=manifest)
    full = results["full"]["ca_sdri"]

    separator, _ = load_stage2(Path(results["full"]["checkpoint"]))
    sweep = evaluate(scenes, separator, sweep_iters, tagger=tagger, threshold=thr,
                     out_dir=run_dir, name="eval_sweep")

    manifest.results = {
        "tagging": tagging,
        "untrained_oracle_ca_sdri": untrained_score,
        "ablations": {k: v["ca_sdri"] for k, v in results.items()},
        "sweep_curve": sweep.summary["curve"],
    }
    manifest_path = manifest.save(run_dir / "manifest.json")
    return ToyExperimentResult(
        tagging=tagging,
        untrained_oracle=untrained_score,
        oracle=full["oracle"]["ca_sdri"][str(n_head)],
        predicted=full["predicted"]["ca_sdri"][str(n_head)],
        ablations={k: v["ca_sdri"]["oracle"]["ca_sdri"][str(n_head)] for k, v in results.items()},
        sweep=sweep.summary,
        seconds=time.time() - t0,
        manifest_path=manifest_path,
    )
