import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import metrics_loop
from spheredepth.cddc import DepthRange
from spheredepth.errors import GeometryMismatch, NoValidPixels
from spheredepth.metrics import MetricReport, evaluate, evaluate_masked, format_table, row_mask

NAMES = ["abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3"]


def test_perfect_prediction(rng):
    gt = rng.uniform(0.5, 10, size=(16, 32))
    r = evaluate(gt, gt)
    assert (r.abs_rel, r.sq_rel, r.rmse, r.rmse_log) == (0.0, 0.0, 0.0, 0.0)
    assert (r.delta1, r.delta2, r.delta3) == (1.0, 1.0, 1.0)
    assert r.valid_count == 512


def test_double_prediction(rng):
    gt = rng.uniform(0.5, 10, size=(16, 32))
    r = evaluate(2 * gt, gt)
    assert r.abs_rel == 1.0
    assert r.delta3 == 0.0
    assert r.delta1 == 0.0


def test_factor_1_2_is_within_delta1(rng):
    gt = rng.uniform(0.5, 10, size=(8, 8))
    assert evaluate(1.2 * gt, gt).delta1 == 1.0


@given(st.floats(0.05, 20))
def test_uniform_scale_abs_rel(k):
    gt = np.array([[0.5, 1.0, 2.0, 4.0]])
    assert evaluate(k * gt, gt).abs_rel == pytest.approx(abs(k - 1), rel=1e-14, abs=1e-15)


def test_matches_loop_oracle(rng):
    for _ in range(20):
        gt = rng.uniform(0.1, 10, size=(4, 4))
        gt[rng.random((4, 4)) < 0.2] = 0.0
        if not np.any(gt > 0):
            continue
        pred = rng.uniform(0.1, 10, size=(4, 4))
        got = evaluate(pred, gt).as_dict()
        want = metrics_loop(pred, gt)
        for name in NAMES:
            assert abs(got[name] - want[name]) <= 1e-12


@settings(max_examples=30)
@given(arrays(np.float64, 12, elements=st.floats(0.1, 50)), arrays(np.float64, 12, elements=st.floats(0.1, 50)), st.randoms())
def test_permutation_invariance(pred, gt, random):
    order = list(range(12))
    random.shuffle(order)
    a = evaluate(pred.reshape(3, 4), gt.reshape(3, 4)).as_dict()
    b = evaluate(pred[order].reshape(4, 3), gt[order].reshape(4, 3)).as_dict()
    for name in NAMES:
        assert a[name] == pytest.approx(b[name], rel=1e-12, abs=1e-15)


def test_invalid_gt_ignored():
    gt = np.array([[1.0, 0.0, np.nan, -1.0]])
    pred = np.array([[2.0, 5.0, 5.0, 5.0]])
    r = evaluate(pred, gt)
    assert r.valid_count == 1
    assert r.abs_rel == 1.0


def test_clamp_applied_before_metrics():
    gt = np.array([[5.0, 5.0]])
    pred = np.array([[20.0, -1.0]])
    r = evaluate(pred, gt, clamp=DepthRange(1.0, 10.0))
    assert r.abs_rel == pytest.approx((5 / 5 + 4 / 5) / 2)


def test_no_valid_pixels():
    with pytest.raises(NoValidPixels):
        evaluate(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(GeometryMismatch):
        evaluate(np.ones((2, 2)), np.ones((2, 3)))


def test_row_mask_512():
    mask = row_mask(512, 1024, 0.15, 0.15)
    assert not mask[:76].any()
    assert not mask[436:].any()
    assert mask[76:436].all()
    assert int(512 * 0.15) == 76


def test_masked_evaluation_ignores_masked_rows(rng):
    gt = rng.uniform(1, 5, size=(512, 16))
    pred = gt.copy()
    pred[:76] = 1000.0
    pred[436:] = 1000.0
    r = evaluate_masked(pred, gt, 0.15, 0.15)
    assert r.abs_rel == 0.0
    assert r.valid_count == (436 - 76) * 16
    pred[76, 0] = 1000.0
    assert evaluate_masked(pred, gt, 0.15, 0.15).abs_rel > 0


def test_zero_fractions_match_evaluate(rng):
    gt = rng.uniform(1, 5, size=(8, 16))
    pred = rng.uniform(1, 5, size=(8, 16))
    assert evaluate_masked(pred, gt, 0.0, 0.0) == evaluate(pred, gt)


def test_fully_masked_raises():
    with pytest.raises(NoValidPixels):
        evaluate_masked(np.ones((2, 4)), np.ones((2, 4)), 0.5, 0.5)
    with pytest.raises(ValueError):
        row_mask(4, 8, 0.6, 0.0)


def test_report_schema_and_table():
    r = evaluate(np.ones((2, 2)), np.ones((2, 2)))
    assert MetricReport.field_names() == NAMES + ["valid_count"]
    text = format_table(r)
    for name in NAMES:
        assert name in text
