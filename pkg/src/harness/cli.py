"""
Command line entry point: gen-scene, train, eval, report and flops.

    python -m src.harness.cli train --config run.json --seed 1 --out data/runs/seed1

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ValidationError

from shared.contracts.train_contracts import PRESETS, DataConfig, FlopsRequest, TrainConfig
from shared.schemas.metric_schema import EVAL_MODES, METRIC_COLUMNS
from shared.utils import configure_logging
from src.geometry.camera_rig import default_ring_rig
from src.harness.evaluation.metrics import NoValidGroundTruthError
from src.harness.evaluation.predictor import evaluate
from src.harness.flops import flops_estimate
from src.harness.report.report_exporter import ReportWriteError, generate_report
from src.harness.training.train_pipeline import NumericalAbortError, train
from src.scene.renderer import uncovered_cameras
from src.scene.scene_spec import default_scene, save_scene

logger = logging.getLogger("harness.cli")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _load_model(model: type, path: Optional[str]) -> BaseModel:
    if path is None:
        return model()
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"Config file {file} does not exist")
    return model.model_validate_json(file.read_text())


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Scale-aware surround depth: scenes, training, evaluation.")
    parser.add_argument("--log-level", default="INFO", help="Logging level")
    verbs = parser.add_subparsers(dest="verb", required=True)

    scene = verbs.add_parser("gen-scene", help="Write the seeded default scene and its rig as JSON")
    scene.add_argument("--seed", type=int, default=0, help="Scene seed")
    scene.add_argument("--out", required=True, help="Output scene JSON path")
    scene.add_argument("--size", type=int, nargs=2, default=(96, 160), metavar=("H", "W"), help="Image size")
    scene.add_argument("--cameras", type=int, default=6, help="Cameras on the ring")
    scene.add_argument("--boxes", type=int, default=12, help="Number of boxes")

    tr = verbs.add_parser("train", help="Two-round self-supervised training")
    tr.add_argument("--config", help="TrainConfig JSON file")
    tr.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named preset instead of defaults")
    tr.add_argument("--seed", type=int, help="Override the run seed")
    tr.add_argument("--out", help="Override the output directory")
    tr.add_argument("--round", choices=["1", "2", "both"], default="both", help="Rounds to run")
    tr.add_argument("--steps", type=int, help="Steps for every selected round")
    tr.add_argument("--resume", help="Checkpoint to resume from")

    ev = verbs.add_parser("eval", help="Depth metrics of a checkpoint")
    ev.add_argument("--checkpoint", required=True, help="Checkpoint file")
    ev.add_argument("--config", help="DataConfig JSON; defaults to the run's own data")
    ev.add_argument("--mode", choices=EVAL_MODES, help="Evaluate one mode only")
    ev.add_argument("--frames", type=int, nargs="*", help="Frame indices")
    ev.add_argument("--max-depth", type=float, default=200.0, help="Ignore ground truth beyond this depth")
    ev.add_argument("--out", help="Write the EvalReport JSON here")

    rp = verbs.add_parser("report", help="Metric tables, depth and error maps, loss curves")
    rp.add_argument("--checkpoint", required=True, help="Checkpoint file")
    rp.add_argument("--config", help="DataConfig JSON; defaults to the run's own data")
    rp.add_argument("--out", required=True, help="Report directory")
    rp.add_argument("--frames", type=int, nargs="*", help="Frame indices")
    rp.add_argument("--map-frames", type=int, default=1, help="Frames to write maps for")

    fl = verbs.add_parser("flops", help="Analytic multiply-add counts")
    fl.add_argument("--config", help="FlopsRequest JSON file")
    fl.add_argument("--layers", action="store_true", help="Print the per-layer table")
    return parser


def _train_config(args: argparse.Namespace) -> TrainConfig:
    if args.config and args.preset:
        raise ConfigError("Use either --config or --preset, not both")
    if args.preset:
        config = PRESETS[args.preset]()
    else:
        config = _load_model(TrainConfig, args.config)
    data = config.model_dump()
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out_dir"] = args.out
    rounds = data["rounds"]
    if args.round == "1":
        rounds = rounds[:1]
    elif args.round == "2":
        if len(rounds) < 2:
            raise ConfigError("Config has no second round")
        rounds[0]["steps"] = 0
    if args.steps is not None:
        for i, r in enumerate(rounds):
            if args.round != "2" or i == 1:
                r["steps"] = args.steps
    data["rounds"] = rounds
    return TrainConfig.model_validate(data)


def _data_config(path: Optional[str]) -> Optional[DataConfig]:
    return _load_model(DataConfig, path) if path else None


# =============================================================================
# VERBS
# =============================================================================

def cmd_gen_scene(args: argparse.Namespace) -> int:
    spec = default_scene(seed=args.seed, image_size=tuple(args.size), n_boxes=args.boxes)
    rig = default_ring_rig(n_cameras=args.cameras, image_size=tuple(args.size))
    spec = spec.model_copy(update={"rig": rig.to_file_model()})
    missing = uncovered_cameras(spec)
    if missing:
        logger.warning(f"Cameras {missing} see no primitive in frame 0")
    path = save_scene(spec, args.out)
    print(f"Scene written to {path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    artifacts = train(config, resume_from=args.resume)
    print(f"Checkpoint: {artifacts.checkpoint_path}")
    print(f"Loss log:   {artifacts.loss_log_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate(args.checkpoint, _data_config(args.config), args.mode, args.max_depth, args.frames)
    header = "mode".ljust(15) + "".join(k.rjust(10) for k in METRIC_COLUMNS)
    print(header)
    for mode, values in report.metrics.items():
        print(mode.ljust(15) + "".join(f"{values[k]:10.4f}" for k in METRIC_COLUMNS))
    print(f"median(pred)/median(gt): {report.median_ratio:.4f} over {report.n_images} images")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.model_dump_json(indent=2))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    files = generate_report(args.checkpoint, args.out, _data_config(args.config), args.frames, map_frames=args.map_frames)
    print(f"Wrote {len(files)} files to {args.out}")
    return EXIT_OK


def cmd_flops(args: argparse.Namespace) -> int:
    report = flops_estimate(_load_model(FlopsRequest, args.config))
    if args.layers:
        print(report.to_frame().to_string(index=False))
    summary = report.to_dict()
    summary.pop("layers")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
    "flops": cmd_flops,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    configure_logging(getattr(logging, str(args.log_level).upper(), logging.INFO))
    try:
        return COMMANDS[args.verb](args)
    except (ValidationError, ConfigError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except NumericalAbortError as e:
        logger.error(str(e))
        return EXIT_NUMERICAL
    except FileNotFoundError as e:
        logger.error(f"Missing file: {e}")
        return EXIT_CONFIG
    except (NoValidGroundTruthError, ReportWriteError) as e:
        logger.error(str(e))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
