import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colordet import losses as ls
from colordet.errors import InvalidInputError

from oracles import central_diff


def test_vcr_examples():
    assert ls.vcr_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert math.isclose(ls.vcr_loss([0.0], [0.11]), 0.055)
    assert math.isclose(ls.vcr_loss([0.0], [1.0]), 0.945)
    assert math.isclose(0.5 * 0.11 ** 2 / 0.11, 0.11 - 0.5 * 0.11, abs_tol=1e-15)


def test_vcr_grad_examples():
    assert ls.vcr_loss_grad([0.5], [0.5])[0] == 0.0
    assert math.isclose(ls.vcr_loss_grad([0.0], [0.055])[0], -0.5)
    assert ls.vcr_loss_grad([0.0], [0.11])[0] == -1.0


def test_vcr_errors():
    with pytest.raises(InvalidInputError):
        ls.vcr_loss([0.0, 1.0], [0.0])
    with pytest.raises(InvalidInputError):
        ls.vcr_loss([0.0], [0.0], beta=0.0)
    with pytest.raises(InvalidInputError):
        ls.vcr_loss([], [])


def test_smooth_l1_is_vcr_at_beta_one():
    rng = np.random.default_rng(0)
    p, t = rng.normal(size=(2, 50))
    assert ls.smooth_l1_loss(p, t) == ls.vcr_loss(p, t, beta=1.0)


def test_small_beta_limit():
    assert abs(ls.vcr_loss([0.0], [0.7], beta=1e-6) - 0.7) < 1e-5


@settings(max_examples=200)
@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(-10, 10))
def test_knee_shift_is_affine(b1, b2, d):
    lo, hi = sorted((b1, b2))
    if abs(d) < hi:
        d = math.copysign(hi, d if d else 1.0) * 1.5
    diff = ls.vcr_loss([0.0], [d], beta=lo) - ls.vcr_loss([0.0], [d], beta=hi)
    assert math.isclose(diff, 0.5 * (hi - lo), abs_tol=1e-12)


@settings(max_examples=200)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(0.01, 3))
def test_losses_non_negative_and_zero_iff_equal(vals, beta):
    p = np.array(vals)
    t = p + 0.3
    for f in (lambda a, b: ls.vcr_loss(a, b, beta), ls.l1_loss, ls.mse_loss):
        assert f(p, t) > 0
        assert f(p, p) == 0


def test_baselines():
    assert ls.mse_loss([1.0], [1.0]) == 0.0
    assert ls.l1_loss([0.0], [0.5]) == 0.5
    assert ls.focal_loss([1.0, 0.0], 0) == 0.0
    assert math.isclose(ls.focal_loss([0.5, 0.5], 0, gamma=2, alpha=1), 0.25 * math.log(2))
    assert math.isclose(ls.ce_loss([0.25, 0.75], 1), -math.log(0.75))


def test_prob_validation():
    with pytest.raises(InvalidInputError):
        ls.ce_loss([0.0, 1.0], 0)
    with pytest.raises(InvalidInputError):
        ls.focal_loss([1.2, -0.2], 0)
    with pytest.raises(InvalidInputError):
        ls.ce_loss([0.5, 0.5], 2)


def test_softmax():
    p = ls.softmax([[1.0, 2.0, 3.0], [1000.0, 1000.0, 1000.0]])
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    np.testing.assert_allclose(p[1], 1 / 3)


def test_loss_config():
    assert ls.LossConfig().effective_beta == 0.11
    assert ls.LossConfig("smooth_l1").effective_beta == 1.0
    with pytest.raises(InvalidInputError):
        ls.LossConfig("hinge")
    cfg = ls.LossConfig("focal", gamma=2, alpha_bal=1.0)
    assert math.isclose(ls.baseline_loss(cfg, [0.5, 0.5], 0), 0.25 * math.log(2))


REGRESSION = [
    ("vcr", ls.vcr_loss, ls.vcr_loss_grad),
    ("smooth_l1", ls.smooth_l1_loss, ls.smooth_l1_loss_grad),
    ("mse", ls.mse_loss, ls.mse_loss_grad),
    ("l1", ls.l1_loss, ls.l1_loss_grad),
]


@pytest.mark.parametrize("reduction", ["mean", "sum"])
@pytest.mark.parametrize("name,f,g", REGRESSION)
def test_regression_grads_vs_finite_differences(name, f, g, reduction):
    rng = np.random.default_rng(hash(name) % 2**32)
    for _ in range(50):
        n = int(rng.integers(1, 16))
        p = rng.normal(scale=0.3, size=n)
        t = rng.normal(scale=0.3, size=n)
        if name == "l1":
            # keep away from the kink at d = 0
            t = p + np.where(rng.random(n) < 0.5, -1, 1) * rng.uniform(0.01, 1, n)
        fd = central_diff(lambda x: f(x, t, reduction=reduction), p)
        np.testing.assert_allclose(g(p, t, reduction=reduction), fd, atol=1e-5)


@pytest.mark.parametrize("kind", ["ce", "focal"])
@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 2.0])
def test_classification_grads_vs_finite_differences(kind, gamma):
    rng = np.random.default_rng(int(gamma * 10))
    cfg = ls.LossConfig(kind, gamma=gamma)
    for _ in range(40):
        probs = ls.softmax(rng.normal(size=(3, 5)))
        target = rng.integers(0, 5, size=3)
        fd = central_diff(lambda x: ls.baseline_loss(cfg, x, target), probs, h=1e-7)
        np.testing.assert_allclose(ls.baseline_loss_grad(cfg, probs, target), fd, atol=1e-5)


def test_focal_grad_at_certainty_is_finite():
    g = ls.focal_loss_grad([1.0, 0.0], 0, gamma=0.5)
    assert np.all(np.isfinite(g))
