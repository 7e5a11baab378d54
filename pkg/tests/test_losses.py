import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uirloss import losses
from uirloss.gradcheck import numeric_grad, relative_error
from uirloss.numerics import DimensionError, softmax

# Reference numbers below were evaluated with mpmath at 50 significant digits.
Z123 = np.array([1.0, 2.0, 3.0])


def test_arcface_target_at_zero_angle():
    out = losses.arcface_logits(np.array([1.0, 0.2]), 0, s=64.0, m=0.5)
    assert out[0] == pytest.approx(64 * math.cos(0.5), rel=1e-14)
    assert out[0] == pytest.approx(56.165, abs=1e-3)
    assert out[1] == 64 * 0.2


def test_arcface_reference_value():
    c = np.array([0.3, -0.2, 0.8])
    out = losses.arcface_logits(c, 2, s=64.0, m=0.5)
    assert out[2] == pytest.approx(26.522286486385687855, rel=1e-13)
    ce = losses.cross_entropy(out, 2).value
    assert ce == pytest.approx(0.00066043178282348505786, rel=1e-10)


def test_arcface_zero_margin_is_scaled_cosines(rng):
    c = rng.uniform(-1, 1, size=9)
    np.testing.assert_array_equal(losses.arcface_logits(c, 4, s=30.0, m=0.0), 30.0 * c)


def test_arcface_margin_touches_target_only(rng):
    c = rng.uniform(-1, 1, size=6)
    out = losses.arcface_logits(c, 1, s=64.0, m=0.5)
    mask = np.arange(6) != 1
    np.testing.assert_array_equal(out[mask], 64.0 * c[mask])


def test_arcface_continuous_in_margin(rng):
    c = rng.uniform(-0.9, 0.9, size=5)
    base = 10.0 * c
    for m in (1e-3, 1e-5, 1e-7):
        assert np.max(np.abs(losses.arcface_logits(c, 0, 10.0, m) - base)) < 20 * m


def test_arcface_clamps_cosines():
    out = losses.arcface_logits(np.array([1.0 + 1e-12, 0.0]), 0, s=1.0, m=0.5)
    assert np.isfinite(out).all()
    assert out[0] == pytest.approx(math.cos(0.5))


def test_arcface_target_monotone_in_cosine():
    # the fallback branch keeps the target logit increasing past theta = pi - m
    c = np.linspace(-1, 1, 2001)
    t = losses._margin_target(c, 0.5)
    assert np.all(np.diff(t) > 0)


def test_arcface_errors():
    with pytest.raises(IndexError):
        losses.arcface_logits(np.array([0.1, 0.2]), 2)
    with pytest.raises(IndexError):
        losses.arcface_logits(np.array([0.1, 0.2]), -1)
    with pytest.raises(ValueError):
        losses.arcface_logits(np.array([0.1, 0.2]), 0, m=2.0)


def test_cross_entropy_uniform():
    r = losses.cross_entropy(np.zeros(2), 0)
    assert r.value == pytest.approx(math.log(2), rel=1e-15)
    np.testing.assert_allclose(r.grad_logits, [-0.5, 0.5], atol=1e-16)


def test_cross_entropy_confident():
    r = losses.cross_entropy(np.array([10.0, -10.0]), 0)
    # log1p(e^-20)
    assert r.value == pytest.approx(2.0611536922666e-09, rel=1e-12)


def test_cross_entropy_reference_and_gradient():
    r = losses.cross_entropy(Z123, 0)
    assert r.value == pytest.approx(2.4076059644443803045, rel=1e-14)
    np.testing.assert_allclose(r.grad_logits, softmax(Z123) - np.array([1, 0, 0]), atol=1e-15)


def test_cross_entropy_bad_target():
    with pytest.raises(IndexError):
        losses.cross_entropy(Z123, 3)


def test_batch_cross_entropy_matches_single(rng):
    z = rng.normal(scale=4, size=(6, 5))
    y = rng.integers(5, size=6)
    values, grads = losses.batch_cross_entropy(z, y)
    for i in range(6):
        r = losses.cross_entropy(z[i], y[i])
        assert values[i] == pytest.approx(r.value, rel=1e-14)
        np.testing.assert_allclose(grads[i], r.grad_logits, atol=1e-16)


def test_uir_uniform_values():
    r = losses.uir_loss(np.zeros(2), stabilized=False)
    assert r.value == pytest.approx(2 * math.log(2), rel=1e-14)
    np.testing.assert_array_equal(r.grad_logits, [0.0, 0.0])
    assert losses.uir_loss(np.full(4, 3.0), False).value == pytest.approx(4 * math.log(4), rel=1e-14)
    assert abs(losses.uir_loss(np.full(4, -2.0), True).value - 4 * math.log(4)) < 1e-9


def test_uir_two_class_reference():
    r = losses.uir_loss(np.array([math.log(3), 0.0]), stabilized=False)
    assert r.value == pytest.approx(-(math.log(0.75) + math.log(0.25)), rel=1e-14)
    assert r.value == pytest.approx(1.67398, abs=1e-5)
    np.testing.assert_allclose(r.grad_logits, [0.5, -0.5], atol=1e-14)


def test_uir_reference_values():
    assert losses.uir_loss(Z123, False).value == pytest.approx(4.2228178933331409134, rel=1e-14)
    r = losses.uir_loss(Z123, True)
    assert r.value == pytest.approx(3.3872938686764293084, rel=1e-14)
    np.testing.assert_allclose(
        r.grad_logits,
        [-0.03821671760622933403, -0.072745910765130923921, 0.11096262837136025795],
        rtol=1e-12,
    )


def test_uir_needs_two_classes():
    with pytest.raises(DimensionError):
        losses.uir_loss(np.array([1.0]))
    with pytest.raises(DimensionError):
        losses.batch_uir_loss(np.zeros((3, 1)))


@pytest.mark.parametrize("stabilized", [False, True])
@pytest.mark.parametrize("n", [2, 3, 8, 64])
def test_uir_lower_bound(n, stabilized, rng):
    bound = n * math.log(n)
    for _ in range(200):
        z = rng.normal(scale=rng.uniform(0.1, 20), size=n)
        assert losses.uir_loss(z, stabilized).value >= bound - 1e-9
    const = losses.uir_loss(np.full(n, rng.normal()), stabilized)
    assert abs(const.value - bound) < 1e-9
    assert np.max(np.abs(const.grad_logits)) < 1e-10


@pytest.mark.parametrize("stabilized", [False, True])
def test_uir_equality_only_at_constant_logits(stabilized, rng):
    # a visible perturbation of constant logits moves the value off the bound
    z = np.zeros(5)
    z[2] = 0.5
    assert losses.uir_loss(z, stabilized).value > 5 * math.log(5) + 1e-6


@given(arrays(np.float64, st.integers(2, 12), elements=st.floats(-30, 30)),
       st.floats(-50, 50), st.booleans())
def test_uir_shift_invariant(z, c, stabilized):
    a = losses.uir_loss(z, stabilized)
    b = losses.uir_loss(z + c, stabilized)
    assert b.value == pytest.approx(a.value, rel=1e-9, abs=1e-9)


@given(arrays(np.float64, st.integers(2, 10), elements=st.floats(-5, 5)), st.booleans())
def test_uir_gradient_sums_to_zero(z, stabilized):
    # invariance to adding a constant means the gradient has no mean component
    g = losses.uir_loss(z, stabilized).grad_logits
    assert abs(g.sum()) < 1e-9


def test_stabilized_probabilities_bounded_below(rng):
    for _ in range(1000):
        n = int(rng.integers(2, 200))
        z = rng.uniform(-1e3, 1e3, size=n)
        q = losses.stabilized_probabilities(z)
        assert q.min() >= 1.0 / (n - 1 + math.e) - 1e-15
        assert np.isfinite(losses.uir_loss(z, True).value)


def test_plain_variant_gradient_closed_form(rng):
    z = rng.normal(size=7)
    np.testing.assert_allclose(losses.uir_loss(z, False).grad_logits, 7 * softmax(z) - 1, atol=1e-14)


@pytest.mark.parametrize("stabilized", [False, True])
def test_uir_gradient_finite_differences(stabilized, rng):
    for _ in range(20):
        z = rng.normal(scale=3, size=int(rng.integers(2, 9)))
        num = numeric_grad(lambda v: losses.uir_loss(v, stabilized).value, z)
        assert relative_error(losses.uir_loss(z, stabilized).grad_logits, num) < 1e-6


def test_arcface_backward_finite_differences(rng):
    for _ in range(20):
        n = 6
        c = rng.uniform(-0.95, 0.95, size=n)
        y = int(rng.integers(n))

        def f(v):
            return losses.cross_entropy(losses.arcface_logits(v, y, 20.0, 0.5), y).value

        g = losses.cross_entropy(losses.arcface_logits(c, y, 20.0, 0.5), y).grad_logits
        analytic = losses.arcface_backward(c, y, g, 20.0, 0.5)
        assert relative_error(analytic, numeric_grad(f, c)) < 1e-6


def test_batch_arcface_matches_single(rng):
    c = rng.uniform(-1, 1, size=(4, 5))
    y = np.array([0, 4, 2, 2])
    g = rng.normal(size=(4, 5))
    logits = losses.batch_arcface_logits(c, y)
    back = losses.batch_arcface_backward(c, y, g)
    for i in range(4):
        np.testing.assert_allclose(logits[i], losses.arcface_logits(c[i], y[i]), rtol=1e-15)
        np.testing.assert_allclose(back[i], losses.arcface_backward(c[i], y[i], g[i]), rtol=1e-15)


def test_combined_loss():
    assert losses.combined_loss(1.0, 5.0) == pytest.approx(1.5)
    assert losses.combined_loss(0.37, 1e9, losses.LossWeights(0.0)) == 0.37
    assert losses.combined_loss(0.0, 5.54518) == pytest.approx(0.554518)


def test_loss_weights_validation():
    assert losses.LossWeights().w == 0.1
    with pytest.raises(ValueError):
        losses.LossWeights(-0.1)
