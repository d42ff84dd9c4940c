"""
Training and evaluation data: the synthetic scene sequence a config asks
for, its frame split and the per-frame pseudo ground truth.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Sequence, Tuple

from joblib import Parallel, delayed

from shared.contracts.train_contracts import DataConfig
from src.geometry.camera_rig import default_ring_rig
from src.losses.sfm_loss import SparseDepthTarget
from src.scene.scene_spec import default_scene, load_scene
from src.scene.sequence import FrameSequence, ego_sequence
from src.sfm.matching import match_overlap
from src.sfm.pseudo_gt import build_pseudo_gt

logger = logging.getLogger("harness.train")


def build_sequence(data: DataConfig) -> FrameSequence:
    if data.scene_path:
        spec = load_scene(data.scene_path)
    else:
        spec = default_scene(seed=data.scene_seed, image_size=tuple(data.image_size), n_boxes=data.n_boxes,
                             texture=data.texture)
        rig = default_ring_rig(n_cameras=data.n_cameras, image_size=tuple(data.image_size), hfov_deg=data.hfov_deg)
        spec = spec.model_copy(update={"rig": rig.to_file_model()})
    return ego_sequence(spec, data.n_frames, list(data.motion))


def split_frames(data: DataConfig) -> Tuple[List[int], List[int]]:
    """(train, eval) frame indices; both leave out the first and last frame so neighbors exist."""
    usable = range(1, data.n_frames - 1)
    eval_frames = list(usable)[::data.eval_stride]
    held_out = set(eval_frames)
    train_frames = [k for k in usable if k not in held_out]
    if not train_frames:
        train_frames = list(usable)
    return train_frames, eval_frames


def frame_pseudo_gt(sequence: FrameSequence, k: int) -> SparseDepthTarget:
    images, _ = sequence.views(k)
    return build_pseudo_gt(match_overlap(images, sequence.rig), sequence.rig)


def build_targets(sequence: FrameSequence, frames: Sequence[int], n_jobs: int = -1) -> Dict[int, SparseDepthTarget]:
    """Pseudo-GT per frame; frames are rendered first, then matched in parallel threads."""
    frames = list(frames)
    sequence.prefetch(frames, n_jobs)
    targets = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(frame_pseudo_gt)(sequence, k) for k in frames)
    counts = [len(t) for t in targets]
    if counts:
        logger.info(f"Pseudo GT for {len(frames)} frames: {sum(counts)} points, min {min(counts)} per frame")
    return dict(zip(frames, targets))
