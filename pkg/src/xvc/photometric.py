"""Photometric reprojection error (L1 + SSIM) and edge-aware smoothness."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DomainError
from .tensor import as_tensor

# stands in for "no valid source" under min-reprojection
_INVALID_ERROR = 1e6


@dataclass(frozen=True)
class PhotometricConfig:
    """Weights and SSIM constants. ``reduction`` is "mean" or "min" (per-pixel
    minimum over several warped sources)."""

    ssim_weight: float = 0.85
    ssim_window: int = 3
    ssim_c1: float = 1e-4
    ssim_c2: float = 9e-4
    reduction: str = "mean"

    def __post_init__(self):
        if not 0.0 <= self.ssim_weight <= 1.0:
            raise ContractError(f"ssim_weight must be in [0, 1], got {self.ssim_weight}")
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ContractError(f"ssim_window must be odd and >= 3, got {self.ssim_window}")
        if self.ssim_c1 <= 0 or self.ssim_c2 <= 0:
            raise ContractError("SSIM stabilisers must be positive")
        if self.reduction not in ("mean", "min"):
            raise ContractError(f"unknown reduction {self.reduction!r}")


def _as_hwc(img):
    img = as_tensor(img)
    if img.ndim == 2:
        return T.reshape(img, img.shape + (1,))
    if img.ndim != 3:
        raise ContractError(f"image must be (H, W) or (H, W, C), got {img.shape}")
    return img


def box_filter(x, window):
    """Mean over a ``window`` x ``window`` neighbourhood with reflection padding."""
    H, W = x.shape[:2]
    r = window // 2
    if H <= r or W <= r:
        raise ContractError(f"image {H}x{W} too small for window {window}")
    rows = np.pad(np.arange(H), r, mode="reflect")
    cols = np.pad(np.arange(W), r, mode="reflect")
    padded = x[rows][:, cols]
    acc = None
    for dy in range(window):
        for dx in range(window):
            tap = padded[dy:dy + H, dx:dx + W]
            acc = tap if acc is None else acc + tap
    return acc * (1.0 / (window * window))


def ssim_dissimilarity(a, b, cfg=PhotometricConfig()):
    """Per-element (1 - SSIM) / 2 clamped to [0, 1]; shape (H, W, C)."""
    a, b = _as_hwc(a), _as_hwc(b)
    w = cfg.ssim_window
    mu_a = box_filter(a, w)
    mu_b = box_filter(b, w)
    var_a = box_filter(a * a, w) - mu_a * mu_a
    var_b = box_filter(b * b, w) - mu_b * mu_b
    cov = box_filter(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2)
    den = (mu_a * mu_a + mu_b * mu_b + cfg.ssim_c1) * (var_a + var_b + cfg.ssim_c2)
    return T.clip((1.0 - num / den) * 0.5, 0.0, 1.0)


def photometric_error_map(ref, warped, cfg=PhotometricConfig()):
    """Per-pixel error (H, W): SSIM and L1 terms mixed, averaged over channels."""
    ref, warped = _as_hwc(ref), _as_hwc(warped)
    if ref.shape != warped.shape:
        raise ContractError(f"image shapes differ: {ref.shape} vs {warped.shape}")
    l1 = T.tabs(ref - warped)
    a = cfg.ssim_weight
    if a == 0.0:
        per = l1
    else:
        per = ssim_dissimilarity(ref, warped, cfg) * a + l1 * (1.0 - a)
    return T.mean(per, axis=2)


def photometric_loss(ref, warped, mask, cfg=PhotometricConfig()):
    """Mean photometric error over valid pixels.

    With ``cfg.reduction == "min"``, ``warped`` and ``mask`` are sequences of
    per-source images/masks and each pixel keeps its smallest valid error.
    """
    if cfg.reduction == "min":
        warped, masks = list(warped), [np.asarray(m, bool) for m in mask]
        if len(warped) != len(masks) or not warped:
            raise ContractError("min reduction needs matching non-empty source lists")
        best = None
        for w_img, m in zip(warped, masks):
            err = T.where(m, photometric_error_map(ref, w_img, cfg), _INVALID_ERROR)
            best = err if best is None else T.minimum(best, err)
        emap, valid = best, np.logical_or.reduce(masks)
    else:
        emap = photometric_error_map(ref, warped, cfg)
        valid = np.asarray(mask, bool)
    if valid.shape != emap.shape:
        raise ContractError(f"mask shape {valid.shape} does not match image {emap.shape}")
    count = int(valid.sum())
    if count == 0:
        raise DomainError("no valid pixels")
    return T.tsum(T.where(valid, emap, 0.0)) * (1.0 / count)


def smoothness_loss(depth, image):
    """Edge-aware smoothness of mean-normalised inverse depth.

    mean(|dx mu| exp(-|dx I|)) + mean(|dy mu| exp(-|dy I|)) with forward
    differences; image gradients are averaged over channels.
    """
    depth = as_tensor(depth)
    img = _as_hwc(image)
    if depth.ndim != 2 or depth.shape != img.shape[:2]:
        raise ContractError(f"depth {depth.shape} and image {img.shape} must share H, W")
    disp = 1.0 / depth
    mean_disp = T.mean(disp)
    if mean_disp.item() == 0.0:
        raise DomainError("mean inverse depth is zero")
    mu = disp / mean_disp
    dx_mu = T.tabs(mu[:, 1:] - mu[:, :-1])
    dy_mu = T.tabs(mu[1:, :] - mu[:-1, :])
    dx_img = np.abs(img.data[:, 1:] - img.data[:, :-1]).mean(axis=2)
    dy_img = np.abs(img.data[1:, :] - img.data[:-1, :]).mean(axis=2)
    return T.mean(dx_mu * np.exp(-dx_img)) + T.mean(dy_mu * np.exp(-dy_img))
