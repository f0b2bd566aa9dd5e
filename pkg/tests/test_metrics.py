import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from xvc.errors import ContractError, DomainError
from xvc.metrics import CSV_COLUMNS, evaluate_depth, evaluate_split, mean_report, reports_to_csv


def test_perfect_prediction():
    gt = np.array([[2.0, 5.0], [9.0, 30.0]])
    r = evaluate_depth(gt, gt, median_scale=False)
    assert r.abs_rel == 0 and r.rmse == 0 and r.sq_rel == 0
    assert r.delta1 == r.delta2 == r.delta3 == 1.0


def test_hand_computed_fixture():
    r = evaluate_depth(np.array([5.0, 8.0]), np.array([4.0, 10.0]), median_scale=False)
    assert abs(r.abs_rel - 0.225) < 1e-9
    assert abs(r.rmse - np.sqrt(2.5)) < 1e-9
    assert abs(r.sq_rel - (1 / 4 + 4 / 10) / 2) < 1e-12
    assert abs(r.rmse_log - np.sqrt((np.log(5 / 4) ** 2 + np.log(8 / 10) ** 2) / 2)) < 1e-12
    # both ratios are exactly 1.25 and the threshold is strict
    assert (r.delta1, r.delta2, r.delta3) == (0.0, 1.0, 1.0)


def test_delta_thresholds_fixture():
    gt = np.ones(4)
    pred = np.array([1.0, 1.3, 1.6, 2.0])
    r = evaluate_depth(pred, gt, median_scale=False)
    assert (r.delta1, r.delta2, r.delta3) == (0.25, 0.5, 0.75)


def test_scale_removed_by_median():
    gt = np.random.default_rng(0).uniform(1, 50, 40)
    r = evaluate_depth(2 * gt, gt)
    assert r.abs_rel == 0 and r.rmse == 0 and r.delta1 == 1.0


def test_cap_and_mask_select_pixels():
    gt = np.array([4.0, 10.0, 90.0, 0.0])
    pred = np.array([5.0, 8.0, 1.0, 3.0])
    r = evaluate_depth(pred, gt, cap=80, median_scale=False)
    assert r.n_pixels == 2 and abs(r.abs_rel - 0.225) < 1e-12
    r = evaluate_depth(pred, gt, median_scale=False, mask=[True, False, True, True])
    assert r.n_pixels == 1


def test_no_valid_pixels():
    with pytest.raises(DomainError):
        evaluate_depth(np.ones(3), np.zeros(3))
    with pytest.raises(ContractError):
        evaluate_depth(np.ones(3), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 30, elements=st.floats(0.5, 79)), st.floats(1e-3, 1e3),
       st.integers(0, 2 ** 32 - 1))
def test_median_scaling_invariance(gt, c, seed):
    pred = gt * np.random.default_rng(seed).uniform(0.7, 1.4, gt.size)
    a = evaluate_depth(pred, gt)
    b = evaluate_depth(c * pred, gt)
    for f in ("abs_rel", "sq_rel", "rmse", "rmse_log"):
        assert abs(getattr(a, f) - getattr(b, f)) <= 1e-9 * max(1.0, abs(getattr(a, f)))
    # the delta counts compare ratios against fixed thresholds; allow one-pixel flips at ties
    for f in ("delta1", "delta2", "delta3"):
        assert abs(getattr(a, f) - getattr(b, f)) <= 1.0 / gt.size


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 25, elements=st.floats(0.5, 79)), st.integers(0, 2 ** 32 - 1))
def test_deltas_ordered_and_finite(gt, seed):
    pred = gt * np.random.default_rng(seed).uniform(0.3, 3.0, gt.size)
    r = evaluate_depth(pred, gt)
    assert r.delta1 <= r.delta2 <= r.delta3
    assert all(np.isfinite(v) for v in r.row(True))


def test_positive_noise_never_lowers_rmse():
    rng = np.random.default_rng(7)
    for _ in range(50):
        gt = rng.uniform(1, 60, 100)
        pred = gt * rng.uniform(0.9, 1.1, 100)
        noisy = np.where(pred >= gt, pred + rng.uniform(0, 2, 100), pred)
        assert evaluate_depth(noisy, gt, median_scale=False).rmse >= evaluate_depth(pred, gt, median_scale=False).rmse


def test_split_examples():
    gt = np.array([3.0, 7.0, 12.0])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        out = evaluate_split([(gt, gt)], ["motion"])
    assert set(out) == {"motion"} and out["motion"].abs_rel == 0.0
    assert any("static" in str(x.message) for x in w)
    out = evaluate_split([(gt * 1.1, gt), (gt * 1.1, gt)], ["motion", "static"])
    assert out["motion"] == out["static"]


def test_split_is_mean_of_per_image_reports(rng):
    pairs = [(rng.uniform(1, 20, 9), rng.uniform(1, 20, 9)) for _ in range(5)]
    labels = ["motion", "static", "motion", "motion", "static"]
    out = evaluate_split(pairs, labels)
    for label in ("motion", "static"):
        reps = [evaluate_depth(p, g) for (p, g), l in zip(pairs, labels) if l == label]
        assert out[label] == mean_report(reps)
        assert out[label].abs_rel == pytest.approx(np.mean([r.abs_rel for r in reps]), abs=1e-15)


def test_csv_header_and_rows():
    r = evaluate_depth(np.array([5.0, 8.0]), np.array([4.0, 10.0]), median_scale=False)
    text = reports_to_csv([r])
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert float(lines[1].split(",")[0]) == r.abs_rel
    assert "\r" not in text
    assert reports_to_csv([r], with_log10=True).split("\n")[0].endswith(",log10")
