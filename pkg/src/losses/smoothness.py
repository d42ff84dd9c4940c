"""Edge-aware smoothness on mean-normalized disparity."""

from __future__ import annotations

from typing import Union

from src.geometry.projection import DepthMap
from src.tensor.tensor import Tensor, as_tensor


def smoothness_loss(depth: Union[DepthMap, Tensor], image: Tensor) -> Tensor:
    """
    mean(|∂x d*|·exp(−|∂x I|)) + mean(|∂y d*|·exp(−|∂y I|)), d* = disparity / mean disparity.

    depth is (1, H, W) or (B, 1, H, W); image is (C, H, W) or (B, C, H, W).
    Image gradients are averaged over channels.
    """
    if isinstance(depth, DepthMap):
        depth = depth.values
    depth, image = as_tensor(depth), as_tensor(image)
    if depth.ndim == 3:
        depth = depth.reshape(1, *depth.shape)
    if image.ndim == 3:
        image = image.reshape(1, *image.shape)

    disp = 1.0 / depth
    norm = disp / disp.mean(axis=(2, 3), keepdims=True)

    grad_disp_x = (norm[:, :, :, :-1] - norm[:, :, :, 1:]).abs()
    grad_disp_y = (norm[:, :, :-1, :] - norm[:, :, 1:, :]).abs()
    grad_img_x = (image[:, :, :, :-1] - image[:, :, :, 1:]).abs().mean(axis=1, keepdims=True)
    grad_img_y = (image[:, :, :-1, :] - image[:, :, 1:, :]).abs().mean(axis=1, keepdims=True)

    return (grad_disp_x * (-grad_img_x).exp()).mean() + (grad_disp_y * (-grad_img_y).exp()).mean()
