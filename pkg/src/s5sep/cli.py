"""Command-line interface: ``s5sep <command> [options]``.

Failures exit nonzero and print a JSON object ``{"error": ..., "message": ...}``
on stderr. Relative run and data directories resolve against ``$S5SEP_DATA_ROOT``
(default: the current directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from s5sep.errors import InvalidInputError, TrainingDivergedError

DATA_ROOT_ENV = "S5SEP_DATA_ROOT"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_DIVERGED = 3


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidInputError(f"{self.prog}: {message}")


def data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def _resolve(path: Optional[str], default: str) -> Path:
    p = Path(path if path is not None else default)
    return p if p.is_absolute() else data_root() / p


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [section] key = value entries")
    p.add_argument("--preset", default="desk", choices=("desk", "full"))
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config key; repeatable; wins over --config")
    p.add_argument("--seed", type=int, help="sets data.base_seed, stage1.seed and stage2.seed")
    p.add_argument("--run-dir", help="output directory (default: runs/default)")


def _add_eval_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-iters", type=int, nargs="+", help="sets evaluate.n_iters")
    p.add_argument("--threshold", type=float, help="sets evaluate.threshold")
    p.add_argument("--split", choices=("train", "val", "test"), help="sets evaluate.split")
    p.add_argument("--n-scenes", type=int, help="sets evaluate.n_scenes")


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="s5sep", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)

    p = sub.add_parser("synth", help="render a dataset split to WAV + JSON files")
    _add_config_args(p)
    p.add_argument("--split", default="val", choices=("train", "val", "test"))
    p.add_argument("--n-scenes", type=int, default=10)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--out", help="scene directory (default: scenes/<split>)")

    p = sub.add_parser("train-stage1", help="train the Stage-1 detector")
    _add_config_args(p)
    p.add_argument("--steps", type=int, help="sets stage1.total_steps")

    p = sub.add_parser("train-stage2", help="train the separator from a Stage-1 checkpoint")
    _add_config_args(p)
    p.add_argument("--stage1", help="Stage-1 checkpoint (default: <run-dir>/stage1.pt)")
    p.add_argument("--steps", type=int, help="sets stage2.total_steps")

    p = sub.add_parser("tag", help="print clip probabilities for channel 1 of a WAV")
    p.add_argument("wav")
    p.add_argument("--stage1", required=True)
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("infer", help="detect and extract every active class of a WAV")
    p.add_argument("wav")
    p.add_argument("--stage1", required=True)
    p.add_argument("--stage2", required=True)
    p.add_argument("--n-iters", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="CA-SDRi report over a split")
    _add_config_args(p)
    _add_eval_args(p)
    p.add_argument("--stage1", help="Stage-1 checkpoint (default: <run-dir>/stage1.pt)")
    p.add_argument("--stage2", help="Stage-2 checkpoint (default: <run-dir>/stage2.pt)")
    p.add_argument("--alt-stage1", help="alternate tagger checkpoint for a third column")
    p.add_argument("--scenes-dir", help="evaluate scenes written by `synth` instead of rendering")
    p.add_argument("--name", default="eval")
    p.add_argument("--workers", type=int, default=1, help="scene rendering processes")

    p = sub.add_parser("ablate", help="train and evaluate the Stage-2 ablation grid")
    _add_config_args(p)
    _add_eval_args(p)
    p.add_argument("--stage1", help="Stage-1 checkpoint (default: <run-dir>/stage1.pt)")
    p.add_argument("--variants", nargs="+", help="subset of the grid (default: full and the three ablations)")
    p.add_argument("--steps", type=int, help="sets stage2.total_steps")
    return parser


def _config(args):
    from s5sep.pipeline.config import apply_overrides, load_config

    cfg = load_config(Path(args.config) if args.config else None, args.preset)
    sugar: List[str] = []
    if getattr(args, "seed", None) is not None:
        sugar += [f"data.base_seed={args.seed}", f"stage1.seed={args.seed}", f"stage2.seed={args.seed}"]
    if getattr(args, "steps", None) is not None:
        stage = "stage1" if args.command == "train-stage1" else "stage2"
        sugar.append(f"{stage}.total_steps={args.steps}")
    if getattr(args, "n_iters", None):
        sugar.append("evaluate.n_iters=" + ",".join(str(n) for n in args.n_iters))
    if getattr(args, "threshold", None) is not None:
        sugar.append(f"evaluate.threshold={args.threshold}")
    if getattr(args, "split", None) is not None and args.command != "synth":
        sugar.append(f"evaluate.split={args.split}")
    if getattr(args, "n_scenes", None) is not None and args.command != "synth":
        sugar.append(f"evaluate.n_scenes={args.n_scenes}")
    return apply_overrides(cfg, sugar + list(args.overrides))


def _run_dir(args) -> Path:
    run_dir = _resolve(args.run_dir, "runs/default")
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, default=str))


def cmd_synth(args) -> int:
    from s5sep.scene import make_dataset, write_scene

    cfg = _config(args)
    out = _resolve(args.out, f"scenes/{args.split}")
    ids = []
    for r in make_dataset(args.split, args.n_scenes, cfg.data.base_seed, cfg.catalog(), start=args.start):
        write_scene(r, out)
        ids.append(r.scene_id)
    manifest = {"split": args.split, "base_seed": cfg.data.base_seed, "config_hash": cfg.content_hash(),
                "scenes": ids}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    _emit({"out": str(out), "n_scenes": len(ids)})
    return EXIT_OK


def cmd_train_stage1(args) -> int:
    from s5sep.pipeline.experiment import load_or_create_manifest
    from s5sep.pipeline.train import train_stage1

    cfg = _config(args)
    run_dir = _run_dir(args)
    (run_dir / "config.ini").write_text(cfg.to_ini())
    manifest = load_or_create_manifest(run_dir, cfg)
    result = train_stage1(cfg, run_dir)
    manifest.checkpoints["stage1"] = str(result.checkpoint)
    manifest.metric_history["stage1_loss"] = result.losses
    manifest.save(run_dir / "manifest.json")
    _emit({"checkpoint": result.checkpoint, "curve": result.curve, "final_loss": result.losses[-1]})
    return EXIT_OK


def cmd_train_stage2(args) -> int:
    from s5sep.pipeline.experiment import load_or_create_manifest
    from s5sep.pipeline.train import train_stage2

    cfg = _config(args)
    run_dir = _run_dir(args)
    stage1 = _resolve(args.stage1, str(run_dir / "stage1.pt"))
    manifest = load_or_create_manifest(run_dir, cfg)
    result = train_stage2(cfg, run_dir, stage1)
    manifest.checkpoints["stage2"] = str(result.checkpoint)
    manifest.metric_history["stage2_loss"] = result.losses
    manifest.save(run_dir / "manifest.json")
    _emit({"checkpoint": result.checkpoint, "curve": result.curve, "final_loss": result.losses[-1]})
    return EXIT_OK


def cmd_tag(args) -> int:
    from s5sep.pipeline.evaluate import tag_file

    probs = tag_file(_resolve(args.wav, args.wav), _resolve(args.stage1, args.stage1))
    _emit({"weak_probs": probs, "detected": sorted(c for c, p in probs.items() if p >= args.threshold)})
    return EXIT_OK


def cmd_infer(args) -> int:
    from s5sep.pipeline.evaluate import infer

    path = infer(_resolve(args.wav, args.wav), _resolve(args.stage1, args.stage1),
                 _resolve(args.stage2, args.stage2), args.n_iters, args.threshold,
                 _resolve(args.out, args.out))
    manifest = json.loads(path.read_text())
    if not manifest["detections"]:
        print(json.dumps({"warning": "no class detected", "manifest": str(path)}), file=sys.stderr)
    _emit({"manifest": path, "classes": [d["class"] for d in manifest["detections"]]})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from s5sep.pipeline.checkpoint import load_stage2
    from s5sep.pipeline.evaluate import Stage1Tagger, evaluate, render_split
    from s5sep.scene import list_scenes, load_scene

    cfg = _config(args)
    run_dir = _run_dir(args)
    stage1 = _resolve(args.stage1, str(run_dir / "stage1.pt"))
    stage2 = _resolve(args.stage2, str(run_dir / "stage2.pt"))
    separator, _ = load_stage2(stage2)
    tagger = Stage1Tagger.from_checkpoint(stage1)
    alt = Stage1Tagger.from_checkpoint(_resolve(args.alt_stage1, args.alt_stage1)) if args.alt_stage1 else None
    if args.scenes_dir:
        directory = _resolve(args.scenes_dir, args.scenes_dir)
        scenes = [load_scene(directory, sid) for sid in list_scenes(directory)]
        if not scenes:
            raise InvalidInputError(f"no scenes found in {directory}")
    else:
        e = cfg.evaluate
        scenes = render_split(e.split, e.n_scenes, cfg.data.base_seed, cfg.catalog(), args.workers)
    result = evaluate(scenes, separator, cfg.evaluate.n_iters, tagger=tagger, alt_tagger=alt,
                      threshold=cfg.evaluate.threshold, out_dir=run_dir, name=args.name)
    _emit({"csv": result.csv_path, "json": result.json_path,
           "ca_sdri": {m: v["ca_sdri"] for m, v in result.summary["modes"].items()}})
    return EXIT_OK


def cmd_ablate(args) -> int:
    from s5sep.pipeline.experiment import DEFAULT_ABLATIONS, load_or_create_manifest, run_ablations

    cfg = _config(args)
    run_dir = _run_dir(args)
    stage1 = _resolve(args.stage1, str(run_dir / "stage1.pt"))
    manifest = load_or_create_manifest(run_dir, cfg)
    results = run_ablations(cfg, run_dir, stage1, args.variants or DEFAULT_ABLATIONS, manifest=manifest)
    manifest.results["ablations"] = {k: v["ca_sdri"] for k, v in results.items()}
    manifest.save(run_dir / "manifest.json")
    _emit({k: v["ca_sdri"]["oracle"]["ca_sdri"] for k, v in results.items()})
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2,
    "tag": cmd_tag,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        return _fail(exc, EXIT_INVALID)
    except TrainingDivergedError as exc:
        return _fail(exc, EXIT_DIVERGED)
    except Exception as exc:  # any other failure still yields machine-readable output
        return _fail(exc, EXIT_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
