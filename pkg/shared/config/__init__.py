"""
Shared Configuration Defaults
=============================
Numeric defaults used across components. Values that come from the
training recipe (loss weights, learning rates, Adam betas) live here so
config models and library code agree on them.
"""

import os

# =============================================================================
# OUTPUT
# =============================================================================

OUT_DIR_ENV = "SURROUND_DEPTH_OUT"


def default_out_dir() -> str:
    return os.getenv(OUT_DIR_ENV, "data/runs")


# =============================================================================
# DEPTH RANGE
# =============================================================================

D_MIN = 0.1      # meters, lower bound of the disparity mapping
D_MAX = 200.0    # meters, upper bound and evaluation cap
Z_MIN = 1e-6     # points at or behind this camera depth are invalid

# =============================================================================
# PHOTOMETRIC LOSS
# =============================================================================

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_ALPHA = 0.85

# =============================================================================
# LOSS WEIGHTS (per-resolution combination)
# =============================================================================

SFM_WEIGHT_ROUND1 = 0.1
SFM_WEIGHT_ROUND2 = 0.005
PHOTO_WEIGHT = 0.5
FULL_RES_WEIGHT = 1.0 / 2.0
AUX_RES_WEIGHT = 1.0 / 6.0
SMOOTH_WEIGHT = 1.0
FILTER_RATIO = 1.0 / 3.0

# =============================================================================
# OPTIMIZER
# =============================================================================

LR_ROUND1 = 6e-5
LR_ROUND2 = 5e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999

# =============================================================================
# SFM
# =============================================================================

MAX_REPROJECTION_PX = 2.0
