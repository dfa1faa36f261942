import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from colordet import boxes as bx
from colordet.errors import InvalidInputError

from oracles import iou_scalar, nms_quadratic


def test_single_anchor():
    a = bx.gen_anchors(1, 1, bx.AnchorConfig(scales=(16,), ratios=(1.0,), stride=16))
    np.testing.assert_allclose(a, [[0, 0, 16, 16]])


def test_anchor_count_and_centres():
    cfg = bx.AnchorConfig(scales=(8, 16, 32), ratios=(0.5, 1, 2), stride=4)
    a = bx.gen_anchors(2, 2, cfg)
    assert a.shape == (36, 4)
    centres = np.unique(np.round((a[:, :2] + a[:, 2:]) / 2, 9), axis=0)
    np.testing.assert_allclose(centres, [[2, 2], [2, 6], [6, 2], [6, 6]])


def test_anchor_aspect_and_area():
    a = bx.gen_anchors(1, 1, bx.AnchorConfig(scales=(40,), ratios=(2.0,), stride=1))[0]
    w, h = a[2] - a[0], a[3] - a[1]
    assert math.isclose(h / w, 2.0) and math.isclose(w * h, 1600.0)


def test_iou_examples():
    assert bx.iou([0, 0, 2, 2], [0, 0, 2, 2]) == 1.0
    assert bx.iou([0, 0, 1, 1], [2, 2, 3, 3]) == 0.0
    assert math.isclose(bx.iou([0, 0, 2, 2], [1, 1, 3, 3]), 1 / 7)


box_st = st.tuples(
    st.floats(0, 50), st.floats(0, 50), st.floats(0.5, 50), st.floats(0.5, 50)
).map(lambda t: [t[0], t[1], t[0] + t[2], t[1] + t[3]])


@settings(max_examples=300)
@given(box_st, box_st)
def test_iou_properties(a, b):
    v = bx.iou(a, b)
    assert 0.0 <= v <= 1.0
    assert math.isclose(v, bx.iou(b, a), abs_tol=1e-15)
    assert math.isclose(v, iou_scalar(a, b), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(bx.iou(a, a), 1.0)


def test_encode_examples():
    anchor = [-5, -5, 5, 5]
    np.testing.assert_allclose(bx.encode([anchor], [anchor]), [[0, 0, 0, 0]])
    np.testing.assert_allclose(bx.encode([[0, -5, 10, 5]], [anchor]), [[0.5, 0, 0, 0]])


@settings(max_examples=300)
@given(box_st, box_st)
def test_encode_decode_roundtrip(b, a):
    # outside the decode clamp the roundtrip is not meant to hold
    assume(np.all(bx.encode([b], [a])[0, 2:] < bx.MAX_LOG_RATIO))
    back = bx.decode(bx.encode([b], [a]), [a])
    np.testing.assert_allclose(back[0], b, rtol=1e-9, atol=1e-9)


def test_decode_clamps_and_clips():
    out = bx.decode([[0, 0, 50, 50]], [[0, 0, 16, 16]])
    assert np.all(np.isfinite(out))
    assert math.isclose(out[0, 2] - out[0, 0], 1000.0)
    clipped = bx.decode([[0, 0, 1, 1]], [[0, 0, 16, 16]], image_size=(20, 30))
    assert clipped[0, 0] >= 0 and clipped[0, 2] <= 30 and clipped[0, 3] <= 20


def test_nms_examples():
    assert bx.nms([[0, 0, 1, 1]], [0.3]) == [0]
    assert bx.nms([[0, 0, 4, 4], [0, 0, 4, 4]], [0.9, 0.8], 0.5) == [0]
    assert bx.nms([[0, 0, 1, 1], [5, 5, 6, 6]], [0.1, 0.9], 0.5) == [1, 0]


def test_nms_tie_break_lower_index():
    assert bx.nms([[0, 0, 4, 4], [0, 0, 4, 4]], [0.5, 0.5], 0.5) == [0]


@settings(max_examples=300)
@given(st.lists(st.tuples(box_st, st.sampled_from([0.1, 0.5, 0.5, 0.9]) | st.floats(0, 1)),
                min_size=0, max_size=8),
       st.floats(0, 1))
def test_nms_matches_quadratic_reference(items, thresh):
    boxes = [b for b, _ in items]
    scores = [s for _, s in items]
    assert bx.nms(np.array(boxes).reshape(-1, 4), scores, thresh) == nms_quadratic(boxes, scores, thresh)


def test_nms_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        bx.nms([[0, 0, 1, 1]], [float("nan")])
    with pytest.raises(InvalidInputError):
        bx.nms([[0, 0, 1, 1]], [0.5], 1.5)


def test_assign_examples():
    gt = [[0, 0, 10, 10]]
    labels, matched = bx.assign_labels([[0, 0, 10, 10], [50, 50, 60, 60]], gt)
    assert labels.tolist() == [bx.FG, bx.BG] and matched.tolist() == [0, -1]
    # IoU exactly 0.5 with a second, better anchor present
    labels, _ = bx.assign_labels([[0, 0, 10, 10], [0, 0, 10, 20]], gt, lo=0.3, hi=0.7)
    assert labels.tolist() == [bx.FG, bx.IGNORE]


def test_assign_empty_gt():
    labels, matched = bx.assign_labels([[0, 0, 1, 1]] * 3, np.zeros((0, 4)))
    assert (labels == bx.BG).all() and (matched == -1).all()


def test_best_anchor_promoted():
    labels, matched = bx.assign_labels([[0, 0, 10, 10], [30, 30, 40, 40]], [[5, 5, 25, 25]])
    assert labels[0] == bx.FG and matched[0] == 0


@settings(max_examples=200)
@given(st.lists(box_st, min_size=1, max_size=10), st.lists(box_st, min_size=1, max_size=4))
def test_every_overlapped_gt_gets_fg(anchors, gt):
    labels, matched = bx.assign_labels(anchors, gt)
    ious = bx.iou_matrix(anchors, gt)
    for j in range(len(gt)):
        if ious[:, j].max() > 0:
            assert np.any(labels[ious[:, j] == ious[:, j].max()] == bx.FG)
    assert np.all((labels == bx.FG) == (matched >= 0))
