import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xvc import deformable as D
from xvc import tensor as T
from xvc import tensorio
from xvc.errors import ContractError
from xvc.gradcheck import finite_difference_check
from xvc.tensor import Tensor


def smooth_features(C, H, W):
    yy, xx = np.mgrid[0:H, 0:W] / max(H, W)
    return np.stack([0.5 + 0.3 * np.sin((c + 1) * xx + (2 - c % 3) * yy) for c in range(C)])


def test_kernel_taps_row_major():
    taps = D.kernel_taps(3)
    assert taps.shape == (9, 2)
    np.testing.assert_array_equal(taps[0], [-1, -1])
    np.testing.assert_array_equal(taps[1], [0, -1])
    np.testing.assert_array_equal(taps[4], [0, 0])
    with pytest.raises(ContractError):
        D.kernel_taps(4)


def test_default_offset_field_has_144_channels():
    off = D.uniform_offsets(4, 5, 0.0, 0.0)
    assert off.shape == (144, 4, 5)


def test_zero_offset_delta_kernel_is_identity(rng):
    for n in (3, 5):
        src = rng.normal(size=(8, 6, 7))
        out = D.deformable_sample(src, D.uniform_offsets(6, 7, 0, 0, 4, n), D.delta_weights(4, n))
        np.testing.assert_array_equal(out.data, src)


def test_unit_offset_shifts_left(rng):
    src = rng.normal(size=(2, 5, 6))
    out = D.deformable_sample(src, D.uniform_offsets(5, 6, 1.0, 0.0, 2, 3), D.delta_weights(2, 3)).data
    assert np.abs(out[:, :, :-1] - src[:, :, 1:]).max() <= 1e-12


def test_channel_group_mismatch_rejected(rng):
    with pytest.raises(ContractError):
        D.deformable_sample(rng.normal(size=(6, 4, 4)), D.uniform_offsets(4, 4, 0, 0, 4, 3),
                            D.delta_weights(4, 3))
    with pytest.raises(ContractError):
        D.deformable_sample(rng.normal(size=(8, 4, 4)), D.uniform_offsets(4, 4, 0, 0, 2, 3),
                            D.delta_weights(4, 3))


def test_fused_kernel_matches_composite(rng):
    src = Tensor(rng.normal(size=(6, 7, 9)), requires_grad=True)
    off = Tensor(rng.normal(scale=2.0, size=(3 * 18, 7, 9)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 9)), requires_grad=True)
    g = rng.normal(size=(6, 7, 9))
    results = []
    for fn in (D.deformable_sample, D.deformable_sample_reference):
        for t in (src, off, w):
            t.grad = None
        out = fn(src, off, w)
        T.backward(T.tsum(out * g))
        results.append((out.data, src.grad, off.grad, w.grad))
    for a, b in zip(*results):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@pytest.mark.parametrize("which", ["src", "offsets", "weights"])
def test_gradients_match_fd(rng, which):
    src = smooth_features(4, 8, 8)
    off = rng.uniform(-0.8, 0.8, (2 * 18, 8, 8))
    off[np.abs(off - np.round(off)) < 0.01] += 0.05
    w = rng.uniform(-0.5, 1.0, (2, 9))
    args = {"src": src, "offsets": off, "weights": w}

    def f(x):
        return T.tsum(D.deformable_sample(**{**args, which: x}) ** 2)

    assert finite_difference_check(f, args[which]) < 1e-4


@settings(max_examples=25, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.integers(0, 10 ** 6))
def test_integer_offset_shift_consistency(dx, dy, seed):
    rng = np.random.default_rng(seed)
    H, W, G = 9, 10, 2
    src = rng.normal(size=(4, H, W))
    off = rng.uniform(-0.4, 0.4, (G * 18, H, W))
    w = rng.normal(size=(G, 9))
    shifted_off = off.copy()
    shifted_off[0::2] += dx
    shifted_off[1::2] += dy
    moved = np.zeros_like(src)
    # moved(p) = src(p + (dx, dy)); border rows/columns are never compared
    ys, xs = slice(max(0, -dy), H - max(0, dy)), slice(max(0, -dx), W - max(0, dx))
    moved[:, ys, xs] = src[:, max(0, dy):H + min(0, dy), max(0, dx):W + min(0, dx)]
    a = D.deformable_sample(src, shifted_off, w).data
    b = D.deformable_sample(moved, off, w).data
    m = 3 + max(abs(dx), abs(dy))
    np.testing.assert_allclose(a[:, m:H - m, m:W - m], b[:, m:H - m, m:W - m], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.integers(0, 10 ** 6))
def test_group_independence(g, seed):
    rng = np.random.default_rng(seed)
    G, n, cg = 4, 3, 2
    src = rng.normal(size=(G * cg, 6, 6))
    off = rng.normal(size=(G * 2 * n * n, 6, 6))
    w = rng.normal(size=(G, n * n))
    base = D.deformable_sample(src, off, w).data
    off2 = off.copy()
    off2[g * 2 * n * n:(g + 1) * 2 * n * n] += rng.normal(size=(2 * n * n, 6, 6))
    out = D.deformable_sample(src, off2, w).data
    changed = np.any(out != base, axis=(1, 2))
    others = np.ones(G * cg, bool)
    others[g * cg:(g + 1) * cg] = False
    assert not changed[others].any()


def test_recon_loss_examples(rng):
    a = rng.uniform(size=(4, 4, 3))
    assert D.recon_loss(a, a).item() == 0.0
    assert abs(D.recon_loss(np.full((3, 3), 0.5), np.full((3, 3), 0.6)).item() - 0.01) < 1e-15
    b = rng.uniform(size=(4, 4, 3))
    want = sum((x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    assert abs(D.recon_loss(a, b).item() - want) < 1e-12
    with pytest.raises(ContractError):
        D.recon_loss(a, b[:3])


def test_df_loss_zero_on_aligned_pair(rng):
    feat = rng.normal(size=(8, 6, 6))
    assert D.df_loss(feat, feat, D.uniform_offsets(6, 6, 0, 0), D.delta_weights()).item() == 0.0


def test_df_loss_exact_alignment_beats_zero_offsets(rng):
    src = smooth_features(8, 8, 10)
    ref = np.zeros_like(src)
    ref[:, :, :-1] = src[:, :, 1:]
    ref[:, :, -1] = src[:, :, -1]  # clamped border sample
    aligned = D.df_loss(ref, src, D.uniform_offsets(8, 10, 1.0, 0.0), D.delta_weights()).item()
    zero = D.df_loss(ref, src, D.uniform_offsets(8, 10, 0.0, 0.0), D.delta_weights()).item()
    rand = D.df_loss(ref, src, Tensor(rng.normal(size=(144, 8, 10))), D.delta_weights()).item()
    assert aligned < 1e-24
    assert zero > aligned and rand > aligned


def test_dfa_loss_decomposes(rng):
    enc = D.Encoder(rng.normal(size=(4, 3)))
    dec = D.Decoder(rng.normal(size=(3, 4)))
    ref, src = rng.uniform(size=(2, 6, 6, 3))
    fr, fs = rng.normal(size=(2, 4, 6, 6))
    off = rng.normal(size=(2 * 18, 6, 6))
    w = rng.normal(size=(2, 9))
    total = D.dfa_loss(ref, src, fr, fs, off, w, dec, enc).item()
    l_re = D.recon_loss(ref, dec(D.deformable_sample(enc(src), off, w))).item()
    l_df = D.df_loss(fr, fs, off, w).item()
    assert total == l_re + l_df


def test_dfa_loss_zero_inputs():
    z = np.zeros((6, 6, 3))
    f = np.zeros((4, 6, 6))
    enc = D.Encoder(np.zeros((4, 3)))
    dec = D.Decoder(np.zeros((3, 4)))
    assert D.dfa_loss(z, z, f, f, np.zeros((36, 6, 6)), np.zeros((2, 9)), dec, enc).item() == 0.0


def test_pixel_affine_load_roundtrip(tmp_path, rng):
    w, b = rng.normal(size=(4, 3)), rng.normal(size=4)
    tensorio.save(tmp_path / "w.xvt", w)
    tensorio.save(tmp_path / "b.xvt", b)
    enc = D.Encoder.load(tmp_path / "w.xvt", tmp_path / "b.xvt")
    img = rng.uniform(size=(2, 3, 3))
    np.testing.assert_allclose(enc(img).data, np.einsum("oc,hwc->ohw", w, img) + b[:, None, None])
