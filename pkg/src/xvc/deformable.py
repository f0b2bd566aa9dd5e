"""Grouped deformable sampling and the depth-feature alignment losses.

Feature maps are (C, H, W). An offset field is (G * 2 * n * n, H, W): for
group g and kernel tap k the channels ``g*2n^2 + 2k`` and ``g*2n^2 + 2k + 1``
hold the (dx, dy) displacement in pixels. Kernel weights are (G, n * n),
one scalar per group and tap, shared across positions. Taps are ordered
row-major over (ky, kx) in [-r, r]^2.
"""
import numpy as np

from . import tensor as T
from . import tensorio
from .errors import ContractError
from .tensor import Tensor, as_tensor

DEFAULT_GROUPS = 8
DEFAULT_KERNEL = 3


def kernel_taps(n):
    """Regular-grid tap offsets p_k as an (n*n, 2) array of (kx, ky)."""
    if n < 1 or n % 2 == 0:
        raise ContractError(f"kernel size must be odd and positive, got {n}")
    r = n // 2
    ky, kx = np.mgrid[-r:r + 1, -r:r + 1]
    return np.stack([kx.ravel(), ky.ravel()], axis=1).astype(np.float64)


def delta_weights(groups=DEFAULT_GROUPS, n=DEFAULT_KERNEL):
    """Weights selecting only the centre tap in every group."""
    w = np.zeros((groups, n * n))
    w[:, (n * n) // 2] = 1.0
    return Tensor(w)


def uniform_offsets(H, W, dx, dy, groups=DEFAULT_GROUPS, n=DEFAULT_KERNEL):
    """Offset field with displacement (dx, dy) on every group, tap and pixel.

    ``dx``/``dy`` may be scalars or (H, W) flow fields.
    """
    dx = np.broadcast_to(np.asarray(dx, dtype=np.float64), (H, W))
    dy = np.broadcast_to(np.asarray(dy, dtype=np.float64), (H, W))
    pair = np.stack([dx, dy])
    return Tensor(np.tile(pair, (groups * n * n, 1, 1)))


def _check(src, offsets, weights):
    if src.ndim != 3:
        raise ContractError(f"feature map must be (C, H, W), got {src.shape}")
    if weights.ndim != 2:
        raise ContractError(f"kernel weights must be (G, n*n), got {weights.shape}")
    G, taps = weights.shape
    n = int(round(np.sqrt(taps)))
    if n * n != taps or n % 2 == 0:
        raise ContractError(f"kernel weights need an odd square tap count, got {taps}")
    C, H, W = src.shape
    if C % G:
        raise ContractError(f"{C} channels not divisible by {G} groups")
    if offsets.shape != (G * 2 * taps, H, W):
        raise ContractError(
            f"offset field must be {(G * 2 * taps, H, W)} for G={G}, n={n}, got {offsets.shape}")
    return G, n


def deformable_sample(src, offsets, weights):
    """out_c(p) = sum_k w[g, k] * src_c(p + p_k + dp_{g,k}(p)), g the group of c.

    Samples are bilinear with border clamping; differentiable w.r.t. all
    three inputs.
    """
    src, offsets, weights = as_tensor(src), as_tensor(offsets), as_tensor(weights)
    _check(src, offsets, weights)
    return T.deformable_sample(src, offsets, weights)


def deformable_sample_reference(src, offsets, weights):
    """:func:`deformable_sample` composed from per-tap bilinear samples.

    Slower; kept as an independent check of the fused kernel.
    """
    src, offsets, weights = as_tensor(src), as_tensor(offsets), as_tensor(weights)
    G, n = _check(src, offsets, weights)
    C, H, W = src.shape
    cg = C // G
    hwc = T.transpose(src, (1, 2, 0))
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    u, v = u.ravel(), v.ravel()
    taps = kernel_taps(n)
    per_group = []
    for g in range(G):
        src_g = hwc[:, :, g * cg:(g + 1) * cg]
        acc = None
        for k, (kx, ky) in enumerate(taps):
            ch = g * 2 * n * n + 2 * k
            x = T.reshape(offsets[ch], (H * W,)) + (u + kx)
            y = T.reshape(offsets[ch + 1], (H * W,)) + (v + ky)
            term = T.bilinear_sample(src_g, x, y) * weights[g, k]
            acc = term if acc is None else acc + term
        per_group.append(acc)
    out = T.concatenate(per_group, axis=1) if G > 1 else per_group[0]
    return T.transpose(T.reshape(out, (H, W, C)), (2, 0, 1))


def recon_loss(ref_image, recon_image):
    """Mean squared difference between the reference and its reconstruction."""
    a, b = as_tensor(ref_image), as_tensor(recon_image)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return T.mean(d * d)


def df_loss(depth_feat_ref, depth_feat_src, offsets, weights):
    """Align source depth features with the RGB offsets, then mean squared error."""
    ref, src = as_tensor(depth_feat_ref), as_tensor(depth_feat_src)
    if ref.shape != src.shape:
        raise ContractError(f"depth feature shapes differ: {ref.shape} vs {src.shape}")
    return recon_loss(ref, deformable_sample(src, offsets, weights))


class PixelAffine:
    """Per-pixel affine channel map y = W x + b on channels-last arrays."""

    def __init__(self, weight, bias=None):
        self.weight = as_tensor(weight)
        if self.weight.ndim != 2:
            raise ContractError(f"weight must be (out, in), got {self.weight.shape}")
        self.bias = as_tensor(np.zeros(self.weight.shape[0]) if bias is None else bias)
        if self.bias.shape != (self.weight.shape[0],):
            raise ContractError(f"bias must be ({self.weight.shape[0]},), got {self.bias.shape}")

    @classmethod
    def load(cls, weight_path, bias_path=None):
        bias = None if bias_path is None else tensorio.load(bias_path)
        return cls(tensorio.load(weight_path), bias)

    def __call__(self, x):
        x = as_tensor(x)
        H, W, cin = x.shape
        if cin != self.weight.shape[1]:
            raise ContractError(f"expected {self.weight.shape[1]} input channels, got {cin}")
        flat = T.reshape(x, (H * W, cin)) @ T.transpose(self.weight) + self.bias
        return T.reshape(flat, (H, W, self.weight.shape[0]))


class Encoder(PixelAffine):
    """Image (H, W, Cin) -> feature map (C, H, W)."""

    def __call__(self, image):
        return T.transpose(super().__call__(image), (2, 0, 1))


class Decoder(PixelAffine):
    """Feature map (C, H, W) -> image (H, W, Cout)."""

    def __call__(self, features):
        return super().__call__(T.transpose(as_tensor(features), (1, 2, 0)))


def dfa_terms(ref_image, src_image, depth_feat_ref, depth_feat_src, offsets, weights,
              reconstructor, extractor):
    """Return ``(recon_loss, df_loss)``; both share ``offsets`` and ``weights``."""
    aligned = deformable_sample(extractor(src_image), offsets, weights)
    l_re = recon_loss(ref_image, reconstructor(aligned))
    l_df = df_loss(depth_feat_ref, depth_feat_src, offsets, weights)
    return l_re, l_df


def dfa_loss(ref_image, src_image, depth_feat_ref, depth_feat_src, offsets, weights,
             reconstructor, extractor):
    """Unweighted sum of the reconstruction and depth-feature terms."""
    l_re, l_df = dfa_terms(ref_image, src_image, depth_feat_ref, depth_feat_src,
                           offsets, weights, reconstructor, extractor)
    return l_re + l_df
