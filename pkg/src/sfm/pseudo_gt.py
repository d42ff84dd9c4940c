"""
Pseudo Ground Truth
===================
Triangulates cross-view matches into metric sparse depth for both views
of every pair. Matches whose reprojection residual exceeds the gate, whose
rays are degenerate or whose depth leaves (0, d_max] are dropped.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd

from shared.config import D_MAX, MAX_REPROJECTION_PX, Z_MIN
from src.geometry.camera_rig import CameraRig
from src.geometry.triangulation import triangulate_points
from src.losses.sfm_loss import PROVENANCE_FULL, SparseDepthTarget, ViewTarget
from src.sfm.matching import MatchSet

logger = logging.getLogger("sfm")

DIAGNOSTICS: Counter = Counter()


def build_pseudo_gt(
    matches: MatchSet,
    rig: CameraRig,
    max_residual: float = MAX_REPROJECTION_PX,
    d_max: float = D_MAX,
) -> SparseDepthTarget:
    matches.check_adjacent(rig)
    uv: Dict[int, List[np.ndarray]] = {}
    depth: Dict[int, List[np.ndarray]] = {}
    rejected = 0

    for (n, m), rows in matches.pairs.items():
        if len(rows) == 0:
            continue
        uv_n, uv_m = rows[:, :2], rows[:, 2:4]
        depth_n, residual, ok = triangulate_points(uv_n, uv_m, rig, n, m)
        depth_m, _, _ = triangulate_points(uv_m, uv_n, rig, m, n)
        with np.errstate(invalid="ignore"):
            keep = ok & np.isfinite(residual) & (residual <= max_residual)
            keep &= np.isfinite(depth_n) & np.isfinite(depth_m)
            keep &= (depth_n > Z_MIN) & (depth_m > Z_MIN) & (depth_n <= d_max) & (depth_m <= d_max)
        rejected += int((~keep).sum())
        for cam, pix, z in ((n, uv_n, depth_n), (m, uv_m, depth_m)):
            uv.setdefault(cam, []).append(pix[keep])
            depth.setdefault(cam, []).append(z[keep])

    DIAGNOSTICS["rejected_matches"] += rejected
    views = {
        cam: ViewTarget(np.concatenate(uv[cam]), np.concatenate(depth[cam]))
        for cam in sorted(uv)
    }
    target = SparseDepthTarget(views, PROVENANCE_FULL, rig.image_size)
    if len(matches) and len(target) == 0:
        DIAGNOSTICS["empty_pseudo_gt"] += 1
        logger.warning(f"All {len(matches)} matches rejected; pseudo ground truth is empty")
    else:
        logger.debug(f"Pseudo GT: {len(target)} points kept, {rejected} matches rejected")
    return target


def dump_pseudo_gt(target: SparseDepthTarget, path: Union[str, Path]) -> Path:
    """Write {"provenance", "image_size", "views": {camera: [{u, v, depth, weight}, ...]}}."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    views = {}
    for cam, view in target.views.items():
        df = pd.DataFrame({"u": view.uv[:, 0], "v": view.uv[:, 1], "depth": view.depth, "weight": view.weight})
        views[str(cam)] = df.to_dict(orient="records")
    payload = {
        "provenance": target.provenance,
        "image_size": list(target.image_size) if target.image_size else None,
        "views": views,
    }
    path.write_text(json.dumps(payload, indent=2))
    return path


def load_pseudo_gt(path: Union[str, Path]) -> SparseDepthTarget:
    payload = json.loads(Path(path).read_text())
    views = {}
    for cam, records in payload["views"].items():
        df = pd.DataFrame(records, columns=["u", "v", "depth", "weight"])
        views[int(cam)] = ViewTarget(df[["u", "v"]].to_numpy(), df["depth"].to_numpy(), df["weight"].to_numpy())
    size = payload.get("image_size")
    return SparseDepthTarget(views, payload["provenance"], tuple(size) if size else None)
