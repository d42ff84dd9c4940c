"""
Depth Harness Service
=====================
Provides REST API for:
- Checkpoint status
- Evaluation of a checkpoint on rendered frames
- Analytic FLOP estimates
- The latest evaluation report
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from shared.config import default_out_dir
from shared.contracts.train_contracts import EvalRequest, FlopsRequest
from shared.utils import configure_logging
from src.harness.evaluation.predictor import DepthPredictor, evaluate
from src.harness.flops import flops_estimate
from src.harness.training.train_pipeline import CHECKPOINT_NAME

logger = logging.getLogger("harness.service")

app = FastAPI(title="Surround Depth Harness", version="1.0")

REPORT_NAME = "eval_report.json"

predictor: Optional[DepthPredictor] = None


def default_checkpoint() -> Path:
    return Path(default_out_dir()) / CHECKPOINT_NAME


# =============================================================================
# LIFECYCLE
# =============================================================================

@app.on_event("startup")
def _load_checkpoint() -> None:
    """Load the default checkpoint on startup if it exists."""
    global predictor
    configure_logging()
    path = default_checkpoint()
    try:
        predictor = DepthPredictor(path)
        logger.info(f"Checkpoint {path} loaded (step {predictor.step})")
    except FileNotFoundError:
        logger.info(f"No checkpoint at {path}; train first or pass one to /depth/evaluate")
        predictor = None
    except Exception as e:
        logger.error(f"Error loading checkpoint {path}: {e}")
        predictor = None


# =============================================================================
# ENDPOINTS
# =============================================================================

@app.get("/depth/status")
def status() -> Dict[str, Any]:
    """Check whether a checkpoint is loaded and what it contains."""
    if predictor is None:
        return {"ready": False, "checkpoint": str(default_checkpoint())}
    return {
        "ready": True,
        "checkpoint": predictor.checkpoint_path,
        "step": predictor.step,
        "image_size": list(predictor.config.image_size),
        "n_views": predictor.config.n_views,
        "use_nca": predictor.config.use_nca,
    }


@app.post("/depth/evaluate")
def evaluate_checkpoint(req: EvalRequest) -> Dict[str, Any]:
    """
    Evaluate a checkpoint in both modes (or the one requested).

    The report is also stored next to the checkpoint for GET /depth/report.
    """
    try:
        report = evaluate(req.checkpoint, req.data, req.mode, req.max_depth, req.frames, req.n_jobs)
    except FileNotFoundError as e:
        raise HTTPException(status_code=404, detail=f"Checkpoint not found: {e}")
    except (ValidationError, ValueError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        raise HTTPException(status_code=500, detail=str(e))

    path = Path(req.checkpoint).parent / REPORT_NAME
    path.write_text(report.model_dump_json(indent=2))
    return {"ok": True, "report_path": str(path), "report": report.model_dump(mode="json")}


@app.post("/depth/flops")
def flops(req: FlopsRequest) -> Dict[str, Any]:
    """Multiply-add counts for the configured network, NCA against global-only wiring."""
    try:
        summary = flops_estimate(req).to_dict()
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return {"ok": True, **summary}


@app.get("/depth/report")
def get_report(checkpoint: Optional[str] = None) -> Dict[str, Any]:
    """Get the latest evaluation report of a checkpoint."""
    ckpt = Path(checkpoint) if checkpoint else default_checkpoint()
    report_path = ckpt.parent / REPORT_NAME
    if not report_path.exists():
        raise HTTPException(status_code=404, detail="No evaluation report found. Evaluate a checkpoint first.")
    return {"ok": True, "report": json.loads(report_path.read_text())}
