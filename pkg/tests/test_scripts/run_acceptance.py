#!/usr/bin/env python3
"""
Long-running end-to-end experiments on the seeded synthetic scene.

Usage:
    python3 tests/test_scripts/run_acceptance.py all
    python3 tests/test_scripts/run_acceptance.py scale --steps 2000
    python3 tests/test_scripts/run_acceptance.py motivation
    python3 tests/test_scripts/run_acceptance.py ablation --seeds 0 1 2

Each experiment trains under data/acceptance/<name>/ and prints PASS or FAIL
per check. Expect hours on a desktop CPU at the default step counts.
"""

import argparse
import logging
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from shared.contracts.train_contracts import (  # noqa: E402
    TrainConfig,
    global_only_preset,
    motivation_preset,
    ratio_sweep_presets,
)
from shared.utils import configure_logging  # noqa: E402
from src.harness.evaluation.predictor import evaluate  # noqa: E402
from src.harness.training.train_pipeline import train  # noqa: E402

OUT_ROOT = Path("data/acceptance")


def print_header(name: str) -> None:
    print("=" * 60)
    print(f"EXPERIMENT: {name}")
    print("=" * 60)


def check(label: str, ok: bool) -> bool:
    print(f"  [{'PASS' if ok else 'FAIL'}] {label}")
    return ok


def _with_steps(config: TrainConfig, steps: int) -> TrainConfig:
    data = config.model_dump()
    for r in data["rounds"]:
        r["steps"] = steps
    return TrainConfig.model_validate(data)


def _run(config: TrainConfig, steps: int):
    artifacts = train(_with_steps(config, steps))
    return evaluate(artifacts.checkpoint_path)


def run_scale(steps: int, seed: int = 0) -> bool:
    """Both rounds with default weights: metric scale without median scaling."""
    print_header("scale-aware training")
    report = _run(TrainConfig(seed=seed, out_dir=str(OUT_ROOT / f"scale_seed{seed}")), steps)
    m = report.metrics["scale-aware"]
    print(f"  abs_rel {m['abs_rel']:.4f}  a1 {m['a1']:.4f}  median ratio {report.median_ratio:.4f}")
    results = [
        check("scale-aware abs_rel < 0.10", m["abs_rel"] < 0.10),
        check("scale-aware a1 > 0.90", m["a1"] > 0.90),
        check("median ratio in [0.95, 1.05]", 0.95 <= report.median_ratio <= 1.05),
    ]
    return all(results)


def run_motivation(steps: int, seed: int = 0) -> bool:
    """Temporal warps only: shape is learned, scale is not."""
    print_header("motivation (no spatial warps, no SfM)")
    report = _run(motivation_preset(seed=seed, out_dir=str(OUT_ROOT / f"motivation_seed{seed}")), steps)
    median, aware = report.metrics["median-scaled"]["abs_rel"], report.metrics["scale-aware"]["abs_rel"]
    print(f"  median-scaled abs_rel {median:.4f}  scale-aware abs_rel {aware:.4f}")
    results = [
        check("median-scaled abs_rel < 0.15", median < 0.15),
        check("scale-aware abs_rel > 0.5", aware > 0.5),
    ]
    return all(results)


def run_ablation(steps: int, seeds=(0, 1, 2)) -> bool:
    """Neighbor stage against global-only, and filter ratio 1/3 against 0."""
    print_header("ablations")
    nca_wins, nca_ok, filter_wins = 0, True, 0
    for seed in seeds:
        nca = _run(TrainConfig(seed=seed, out_dir=str(OUT_ROOT / f"nca_seed{seed}")), steps)
        flat = _run(global_only_preset(seed=seed, out_dir=str(OUT_ROOT / f"global_seed{seed}")), steps)
        a, b = nca.metrics["scale-aware"]["abs_rel"], flat.metrics["scale-aware"]["abs_rel"]
        nca_wins += a < b
        nca_ok &= a <= b + 0.005
        sweep = {c.rounds[1].filter_ratio: c for c in ratio_sweep_presets(ratios=(1.0 / 3.0, 0.0), seed=seed)}
        third = _run(sweep[1.0 / 3.0].model_copy(update={"out_dir": str(OUT_ROOT / f"ratio_third_seed{seed}")}), steps)
        none = _run(sweep[0.0].model_copy(update={"out_dir": str(OUT_ROOT / f"ratio_zero_seed{seed}")}), steps)
        t, z = third.metrics["scale-aware"]["abs_rel"], none.metrics["scale-aware"]["abs_rel"]
        filter_wins += t < z
        print(f"  seed {seed}: nca {a:.4f} vs global-only {b:.4f}; ratio 1/3 {t:.4f} vs 0 {z:.4f}")
    need = (2 * len(seeds) + 2) // 3
    results = [
        check("neighbor stage never worse by more than 0.005", nca_ok),
        check(f"neighbor stage better on >= {need} of {len(seeds)} seeds", nca_wins >= need),
        check(f"ratio 1/3 better than 0 on >= {need} of {len(seeds)} seeds", filter_wins >= need),
    ]
    return all(results)


def main() -> int:
    parser = argparse.ArgumentParser(description="End-to-end acceptance experiments")
    parser.add_argument("experiment", choices=["scale", "motivation", "ablation", "all"])
    parser.add_argument("--steps", type=int, default=1000, help="Steps per round")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2], help="Seeds for the ablations")
    args = parser.parse_args()
    configure_logging()
    logging.getLogger("harness.train").setLevel(logging.WARNING)

    ok = True
    if args.experiment in ("scale", "all"):
        ok &= run_scale(args.steps)
    if args.experiment in ("motivation", "all"):
        ok &= run_motivation(args.steps)
    if args.experiment in ("ablation", "all"):
        ok &= run_ablation(args.steps, tuple(args.seeds))
    print("\nALL PASSED" if ok else "\nSOME CHECKS FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
