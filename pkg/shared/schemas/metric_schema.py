"""
Metric and Log Schemas
======================
Column orders for the tables written by training, evaluation and reports.
"""

from typing import List

# Same order as the standard depth benchmark tables
METRIC_COLUMNS: List[str] = [
    "abs_rel",
    "sq_rel",
    "rmse",
    "rmse_log",
    "a1",
    "a2",
    "a3",
]

EVAL_MODES: List[str] = ["scale-aware", "median-scaled"]

LOSS_LOG_COLUMNS: List[str] = [
    "step",
    "round",
    "frame",
    "loss",
    "sfm",
    "photo",
    "smooth",
    "sfm_points",
    "learning_rate",
]
