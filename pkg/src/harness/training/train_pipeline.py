"""
Training Pipeline for Surround Depth
====================================
Two-round self-supervised training of the depth and joint-pose networks:
- Temporal warps from frames t-1 and t+1 through the predicted ego-motion
- Spatial warps from ring neighbors through the known extrinsics
- Sparse metric supervision from triangulated pseudo ground truth
Round 2 re-ranks the pseudo ground truth at every epoch and drops the
share the current model fits worst.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from shared.contracts.train_contracts import TrainConfig
from shared.schemas.metric_schema import LOSS_LOG_COLUMNS
from src.geometry.camera_rig import CameraRig
from src.geometry.se3 import se3_exp
from src.geometry.warping import temporal_transforms, warp_views
from src.harness.data import build_sequence, build_targets, split_frames
from src.losses.combine import LossWeights, ResolutionLosses, combine_losses
from src.losses.photometric import photometric_loss
from src.losses.sfm_loss import SparseDepthTarget, sfm_loss_views
from src.losses.smoothness import smoothness_loss
from src.nca.config import NcaConfig
from src.networks.checkpoint import load_checkpoint, module_tensors, save_checkpoint, section
from src.networks.depth_network import DepthNetwork, DepthNetworkConfig
from src.networks.pose_network import PoseNetwork, pose_forward
from src.scene.frame import MultiViewFrame
from src.scene.sequence import FrameSequence
from src.sfm.progressive import ProgressiveSchedule, progressive_step
from src.tensor.optim import Adam
from src.tensor.tensor import Tensor, as_tensor, concat, no_grad

logger = logging.getLogger("harness.train")

CHECKPOINT_NAME = "checkpoint.ckpt"
LOSS_LOG_NAME = "loss_log.csv"

# seed substreams
DEPTH_STREAM, POSE_STREAM, ORDER_STREAM = 0, 1, 2


class NumericalAbortError(RuntimeError):
    pass


@dataclass
class TrainArtifacts:
    checkpoint_path: str
    loss_log_path: str
    steps: int


@dataclass
class TrainState:
    config: TrainConfig
    sequence: FrameSequence
    depth: DepthNetwork
    pose: PoseNetwork
    optimizer: Adam
    train_frames: List[int]
    eval_frames: List[int]
    step: int = 0
    targets: Dict[int, SparseDepthTarget] = field(default_factory=dict)
    filtered_keep: Dict[int, Dict[int, np.ndarray]] = field(default_factory=dict)
    log_rows: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def rig(self) -> CameraRig:
        return self.sequence.rig

    @property
    def epoch_length(self) -> int:
        return max(len(self.train_frames) // self.config.batch_size, 1)


def substream(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, *key)))


# =============================================================================
# SETUP
# =============================================================================

def network_config(config: TrainConfig, rig: CameraRig) -> DepthNetworkConfig:
    settings = config.network
    H, W = rig.image_size
    ring = None if rig.ring == tuple(range(rig.n_cameras)) else rig.ring
    nca = NcaConfig(
        token_grid=(H // 32, W // 32),
        n_heads=settings.n_heads,
        global_depth=settings.nca_depth,
        tie_view_embeddings=settings.tie_view_embeddings,
        use_neighbor=settings.use_neighbor_attention,
        mlp_ratio=settings.mlp_ratio,
        ring=ring,
    )
    return DepthNetworkConfig(
        image_size=(H, W),
        n_views=rig.n_cameras,
        channels=settings.channels,
        decoder_channels=settings.decoder_channels,
        init_depth=settings.init_depth,
        use_nca=settings.use_nca,
        nca=nca,
    )


def build_state(config: TrainConfig, resume_from: Optional[Union[str, Path]] = None) -> TrainState:
    sequence = build_sequence(config.data)
    rig = sequence.rig
    train_frames, eval_frames = split_frames(config.data)
    depth = DepthNetwork(network_config(config, rig), rng=substream(config.seed, DEPTH_STREAM))
    pose = PoseNetwork(rig.n_cameras, rig.image_size, channels=config.network.pose_channels,
                       rng=substream(config.seed, POSE_STREAM))
    optimizer = Adam(
        depth.parameters() + pose.parameters(),
        lr=config.rounds[0].learning_rate,
        betas=(config.beta1, config.beta2),
    )
    state = TrainState(config, sequence, depth, pose, optimizer, train_frames, eval_frames)
    logger.info(
        f"Depth network: {depth.num_parameters()} parameters, pose network: {pose.num_parameters()}; "
        f"{len(train_frames)} training frames, {len(eval_frames)} held out"
    )
    if resume_from is not None:
        restore_state(state, resume_from)
    return state


def save_state(state: TrainState, path: Union[str, Path]) -> Path:
    tensors = module_tensors({"depth": state.depth, "pose": state.pose})
    for i, (m, v) in enumerate(zip(state.optimizer.m, state.optimizer.v)):
        tensors[f"optim.m.{i}"] = m
        tensors[f"optim.v.{i}"] = v
    meta = {
        "network": state.depth.config.to_dict(),
        "pose": {
            "n_views": state.pose.n_views,
            "image_size": list(state.rig.image_size),
            "channels": list(state.config.network.pose_channels),
        },
        "step": state.step,
        "optimizer": {"t": state.optimizer.t, "lr": state.optimizer.lr},
        "train_config": state.config.model_dump(mode="json"),
        "eval_frames": state.eval_frames,
        "filtered_keep": {
            str(k): {str(cam): idx.tolist() for cam, idx in keep.items()}
            for k, keep in state.filtered_keep.items()
        },
    }
    return save_checkpoint(path, tensors, meta)


def restore_state(state: TrainState, path: Union[str, Path]) -> None:
    tensors, meta = load_checkpoint(path)
    state.depth.load_state_dict(section(tensors, "depth"))
    state.pose.load_state_dict(section(tensors, "pose"))
    n = len(state.optimizer.params)
    state.optimizer.load_state_dict({
        "t": meta["optimizer"]["t"],
        "lr": meta["optimizer"]["lr"],
        "m": [tensors[f"optim.m.{i}"] for i in range(n)],
        "v": [tensors[f"optim.v.{i}"] for i in range(n)],
    })
    state.step = int(meta["step"])
    state.filtered_keep = {
        int(k): {int(cam): np.asarray(idx, dtype=np.int64) for cam, idx in keep.items()}
        for k, keep in meta.get("filtered_keep", {}).items()
    }
    logger.info(f"Resumed from {path} at step {state.step}")


# =============================================================================
# LOSSES
# =============================================================================

def loss_weights(config: TrainConfig, schedule: ProgressiveSchedule) -> LossWeights:
    return LossWeights.for_round(
        schedule.round,
        sfm=schedule.sfm_weight,
        a=config.ssim_alpha,
        photo=config.photo_weight,
        full_res=config.full_res_weight,
        aux_res=config.aux_res_weight,
        smooth=config.smooth_weight,
    )


def round_schedule(config: TrainConfig, round_index: int) -> ProgressiveSchedule:
    first = config.rounds[0]
    second = config.rounds[-1]
    return ProgressiveSchedule(
        round=round_index,
        filter_ratio=config.rounds[round_index - 1].filter_ratio,
        sfm_weight_round1=first.sfm_weight if config.use_sfm else 0.0,
        sfm_weight_round2=second.sfm_weight if config.use_sfm else 0.0,
    )


def _warp_sources(state: TrainState, batch: Tensor, images: np.ndarray, neighbors: Dict[int, np.ndarray]):
    """(source images, target→source transforms, source intrinsics) for every warp of the batch."""
    rig = state.rig
    B, N, C, H, W = images.shape
    K = np.tile(rig.intrinsics, (B, 1, 1))
    sources = []
    for dt in (-1, 1):
        motion = se3_exp(pose_forward(state.pose, batch, Tensor(neighbors[dt]), dt))
        transform = concat([temporal_transforms(rig, motion[b]) for b in range(B)], axis=0)
        sources.append((Tensor(neighbors[dt].reshape(B * N, C, H, W)), transform, K))
    if state.config.use_spatial_warps:
        for offset in (-1, 1):
            idx = [rig.ring_neighbor(n, offset) for n in range(N)]
            sources.append((
                Tensor(images[:, idx].reshape(B * N, C, H, W)),
                np.tile(rig.spatial_transforms(offset), (B, 1, 1)),
                np.tile(rig.intrinsics[idx], (B, 1, 1)),
            ))
    return K, sources


def compute_losses(
    state: TrainState,
    frames: List[MultiViewFrame],
    weights: LossWeights,
    targets: Optional[Dict[int, SparseDepthTarget]] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """L_final for a batch of frames and its full-resolution components."""
    images = np.stack([f.images for f in frames])
    neighbors = {dt: np.stack([f.neighbor(dt) for f in frames]) for dt in (-1, 1)}
    B, N, C, H, W = images.shape
    batch = Tensor(images)
    output = state.depth(batch)
    K, sources = _warp_sources(state, batch, images, neighbors)
    target_images = Tensor(images.reshape(B * N, C, H, W))
    use_sfm = targets is not None and weights.sfm > 0

    per_res = []
    for depth in output.loss_depths():
        d = depth.reshape(B * N, 1, H, W)
        warped = [warp_views(d, src, T, K, K_src) for src, T, K_src in sources]
        photo = photometric_loss(target_images, [w[0] for w in warped], [w[1] for w in warped], weights.a)
        smooth = smoothness_loss(d, target_images)
        sfm = Tensor(0.0)
        if use_sfm:
            for b, frame in enumerate(frames):
                sfm = sfm + sfm_loss_views(d[b * N:(b + 1) * N], targets[frame.index])[0]
            sfm = sfm / float(B)
        per_res.append(ResolutionLosses(sfm, photo, smooth))

    total = combine_losses(per_res, weights)
    full = per_res[0]
    components = {
        "loss": float(total.data),
        "sfm": float(as_tensor(full.sfm).data),
        "photo": float(as_tensor(full.photo).data),
        "smooth": float(as_tensor(full.smooth).data),
        "sfm_points": sum(len(targets[f.index]) for f in frames) if use_sfm else 0,
    }
    return total, components


def _dump_batch(state: TrainState, frames: List[MultiViewFrame], components: Dict[str, float]) -> Path:
    path = Path(state.config.out_dir) / f"nan_dump_step{state.step}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        frames=np.array([f.index for f in frames]),
        images=np.stack([f.images for f in frames]),
        previous=np.stack([f.neighbor(-1) for f in frames]),
        next=np.stack([f.neighbor(1) for f in frames]),
        **{k: np.array(v) for k, v in components.items()},
    )
    return path


def train_step(
    state: TrainState,
    frames: List[MultiViewFrame],
    weights: LossWeights,
    targets: Optional[Dict[int, SparseDepthTarget]] = None,
) -> Dict[str, float]:
    state.optimizer.zero_grad()
    total, components = compute_losses(state, frames, weights, targets)
    if not np.isfinite(components["loss"]):
        path = _dump_batch(state, frames, components)
        logger.error(f"Non-finite loss at step {state.step}; batch dumped to {path}")
        raise NumericalAbortError(f"Non-finite loss at step {state.step} (frames {[f.index for f in frames]}); see {path}")
    total.backward()
    state.optimizer.step()
    return components


def refilter(state: TrainState, schedule: ProgressiveSchedule) -> Dict[int, SparseDepthTarget]:
    """Round-2 targets for every training frame, ranked with the current depth network."""
    filtered, keep_all = {}, {}
    with no_grad():
        for k in state.train_frames:
            images, _ = state.sequence.views(k)
            predictions = state.depth(Tensor(images[None])).final[0]
            _, filtered[k], keep_all[k] = progressive_step(schedule, state.targets[k], predictions)
    state.filtered_keep = keep_all
    kept = sum(len(t) for t in filtered.values())
    total = sum(len(state.targets[k]) for k in state.train_frames)
    logger.info(f"Refiltered pseudo GT at step {state.step}: kept {kept} of {total} points")
    return filtered


def batch_frames(state: TrainState, step: int) -> List[int]:
    epoch, position = divmod(step, state.epoch_length)
    order = substream(state.config.seed, ORDER_STREAM, epoch).permutation(state.train_frames)
    B = state.config.batch_size
    return order[position * B:(position + 1) * B].tolist()


# =============================================================================
# TRAINING
# =============================================================================

def train(
    config: TrainConfig,
    resume_from: Optional[Union[str, Path]] = None,
    stop_after: Optional[int] = None,
) -> TrainArtifacts:
    """
    Run both rounds, or resume a checkpoint where it stopped.

    stop_after ends the run early at that global step, still writing the
    checkpoint and loss log, so a later call with resume_from continues it.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / LOSS_LOG_NAME
    state = build_state(config, resume_from)
    if resume_from is not None and log_path.exists() and log_path.stat().st_size > 0:
        previous = pd.read_csv(log_path)
        state.log_rows = previous[previous["step"] <= state.step].to_dict(orient="records")

    stop = config.total_steps if stop_after is None else min(stop_after, config.total_steps)
    wants_sfm = config.use_sfm and any(r.sfm_weight > 0 for r in config.rounds)
    if wants_sfm and state.step < stop:
        state.targets = build_targets(state.sequence, state.train_frames, config.n_jobs)
    targets_all = state.targets or None

    round_start = 0
    filtered: Optional[Dict[int, SparseDepthTarget]] = None
    for round_index, round_cfg in enumerate(config.rounds, start=1):
        round_end = round_start + round_cfg.steps
        if state.step < min(round_end, stop):
            schedule = round_schedule(config, round_index)
            weights = loss_weights(config, schedule)
            state.optimizer.lr = round_cfg.learning_rate
            logger.info(
                f"Round {round_index}: steps {max(state.step, round_start)}-{round_end}, "
                f"lr {round_cfg.learning_rate:g}, sfm weight {weights.sfm:g}, filter ratio {schedule.filter_ratio:.3f}"
            )
            while state.step < min(round_end, stop):
                targets = targets_all
                if round_index == 2 and targets is not None and weights.sfm > 0:
                    new_epoch = state.step == round_start or state.step % state.epoch_length == 0
                    if new_epoch or not state.filtered_keep:
                        filtered = refilter(state, schedule)
                    elif filtered is None:
                        filtered = {k: state.targets[k].filtered(keep) for k, keep in state.filtered_keep.items()}
                    targets = filtered

                frame_ids = batch_frames(state, state.step)
                frames = [state.sequence.sample(k) for k in frame_ids]
                components = train_step(state, frames, weights, targets)
                state.step += 1
                state.log_rows.append({
                    "step": state.step,
                    "round": round_index,
                    "frame": " ".join(str(k) for k in frame_ids),
                    **components,
                    "learning_rate": round_cfg.learning_rate,
                })
                if state.step % config.log_every == 0:
                    logger.info(
                        f"step {state.step} round {round_index}: loss {components['loss']:.5f} "
                        f"(sfm {components['sfm']:.5f}, photo {components['photo']:.5f}, "
                        f"smooth {components['smooth']:.5f}, {components['sfm_points']} points)"
                    )
                if config.checkpoint_every and state.step % config.checkpoint_every == 0:
                    save_state(state, out_dir / f"checkpoint_step{state.step}.ckpt")
        round_start = round_end

    checkpoint = save_state(state, out_dir / CHECKPOINT_NAME)
    pd.DataFrame(state.log_rows, columns=LOSS_LOG_COLUMNS).to_csv(log_path, index=False)
    logger.info(f"Training stopped at step {state.step}; checkpoint {checkpoint}, loss log {log_path}")
    return TrainArtifacts(str(checkpoint), str(log_path), state.step)
