"""Loss values and gradients against hand math, frozen high-precision
references, and finite differences."""

import numpy as np
import pytest

from hoilab.losses import (
    LOSS_NAMES,
    bce_loss,
    focal_loss,
    get_loss,
    lse_sign_loss,
    positive_negative_ratio,
    weighted_bce_loss,
)
from oracles import central_difference_grad

LN2 = float(np.log(2.0))
LN3 = float(np.log(3.0))

# Reference values computed independently at 50-digit precision from the
# closed forms, then rounded to float64.  `extra` carries per-class
# positive weights for the weighted entropy loss and (gamma_f, alpha)
# for the focal loss.
HIGH_PRECISION_CASES = [
    (
        "lse",
        [0.855418, -4.940272, -4.38136, -4.499959, 6.068852],
        [-1, 1, 1, 1, -1],
        None,
        6.613793539334579,
        [0.003156234615231512, -0.18758531207196863, -0.1072670736111474,
         -0.12077396486692196, 0.5798756822672065],
    ),
    (
        "lse",
        [-8.196, -7.315378, 6.216607, 2.013446, 0.127343],
        [1, 1, -1, 1, -1],
        None,
        8.636384176404531,
        [-0.6437890450075702, -0.2668666519055356, 0.08894143350156236,
         -2.370486690167384e-05, 0.00020163706663224557],
    ),
    (
        "lse",
        [4.723796, -9.637394, 2.372986, 0.222338, -7.909282],
        [-1, -1, 1, -1, 1],
        None,
        7.950633610311346,
        [0.03968279302485757, 2.299411299977272e-08, -3.284800287013848e-05,
         0.0004401937397668764, -0.9594917034533728],
    ),
    (
        "lse",
        [6.455694, -3.660772, -7.866076, -1.543611, 6.819679],
        [1, -1, 1, -1, -1],
        None,
        8.167421878336832,
        [-4.4592463530717125e-07, 7.295930154671404e-06, -0.739821840140867,
         6.0611077877474366e-05, 0.25982605831376354],
    ),
    (
        "lse",
        [10000.0, -10000.0, 10000.0],
        [1, -1, -1],
        None,
        10000.0,
        [-0.0, 0.0, 1.0],
    ),
    ("lse", [-3.25], [1], None, 3.288041371687783, [-0.9626731126558705]),
    (
        "bce",
        [8.2406, 8.648284, -1.359541, -2.883781, -1.817056],
        [1, 1, -1, 1, 1],
        None,
        5.134818913943271,
        [-0.00026365643334703103, -0.00017539685436742197, 0.2043149119376725,
         -0.9470388253864427, -0.8602124952629855],
    ),
    (
        "bce",
        [5.420059, -1.259253, 6.30609, 0.683192, 8.97889],
        [1, -1, -1, 1, -1],
        None,
        15.950017002685486,
        [-0.0044073745117686166, 0.2211025109126123, 0.998178169459887,
         -0.3355492540276049, 0.9998739732075008],
    ),
    (
        "bce",
        [-5.097896, 6.504672, 9.854269, 9.6751, -6.473935],
        [-1, -1, 1, -1, 1],
        None,
        22.66295061257687,
        [0.006072487231507668, 0.9985058044535271, -5.2519736739628875e-05,
         0.9999371753362449, -0.9984592361084844],
    ),
    (
        "bce",
        [700.0, -700.0, 35.5],
        [-1, 1, 1],
        None,
        1400.0,
        [1.0, -1.0, -3.824246628097134e-16],
    ),
    (
        "wbce",
        [-2.568661, 6.18943, 6.419077],
        [1, -1, -1],
        [2.5, 0.5, 9.0],
        19.21844550600776,
        [-2.322043044209987, 0.9979532024848843, 0.9983724929187777],
    ),
    (
        "wbce",
        [-3.981121, 4.324565, -4.609747],
        [-1, -1, -1],
        [1.0, 7.0, 0.25],
        4.366115209009162,
        [0.01832271638575125, 0.9869336810768324, 0.009856224264092652],
    ),
    (
        "focal",
        [1.230112, 3.592179, 0.759851, 7.051612],
        [1, -1, -1, -1],
        (2.0, 0.25),
        8.252580505426927,
        [-0.007966156408572131, 0.8291057164411257, 0.49095479590774554,
         0.7571923767288224],
    ),
    (
        "focal",
        [-0.445418, -4.214301, 6.506218, -2.516658],
        [1, 1, 1, 1],
        (0.7, 0.6),
        4.384725422941508,
        [-0.3676808355684897, -0.6108268047553369, -1.598893824031671e-05,
         -0.6029013473848925],
    ),
]


def _dispatch(kind, s, y, extra):
    if kind == "lse":
        return lse_sign_loss(s, y)
    if kind == "bce":
        return bce_loss(s, y)
    if kind == "wbce":
        return weighted_bce_loss(s, y, np.asarray(extra))
    gamma_f, alpha = extra
    return focal_loss(s, y, gamma_f=gamma_f, alpha=alpha)


def test_high_precision_reference_values():
    for kind, s, y, extra, want_value, want_grad in HIGH_PRECISION_CASES:
        value, grad = _dispatch(kind, s, y, extra)
        np.testing.assert_allclose(value, want_value, rtol=1e-12, atol=0,
                                   err_msg=f"{kind} value")
        np.testing.assert_allclose(grad, want_grad, rtol=1e-12, atol=0,
                                   err_msg=f"{kind} grad")


def test_single_zero_logit_positive():
    value, grad = lse_sign_loss([0.0], [1])
    np.testing.assert_allclose(value, LN2, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad, [-0.5], rtol=0, atol=1e-12)


def test_two_zero_logits_mixed_labels():
    value, grad = lse_sign_loss([0.0, 0.0], [1, -1])
    np.testing.assert_allclose(value, LN3, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad, [-1.0 / 3.0, 1.0 / 3.0], rtol=0, atol=1e-12)


def test_bce_zero_logits():
    value, grad = bce_loss([0.0], [1])
    np.testing.assert_allclose(value, LN2, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad, [-0.5], rtol=0, atol=1e-12)
    value2, _ = bce_loss([0.0, 0.0], [1, -1])
    np.testing.assert_allclose(value2, 2.0 * LN2, rtol=0, atol=1e-12)


def test_bce_additivity_over_classes():
    rng = np.random.default_rng(3)
    s = rng.uniform(-4, 4, 6)
    y = rng.choice([-1, 1], 6)
    total, _ = bce_loss(s, y)
    parts = sum(bce_loss([si], [yi])[0] for si, yi in zip(s, y))
    np.testing.assert_allclose(total, parts, rtol=1e-12)


def test_weighted_bce_hand_value():
    value, grad = weighted_bce_loss([0.0], [1], [4.0])
    np.testing.assert_allclose(value, 4.0 * LN2, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad, [-2.0], rtol=0, atol=1e-12)


def test_weighted_bce_unit_weights_match_bce():
    rng = np.random.default_rng(4)
    s = rng.uniform(-5, 5, 8)
    y = rng.choice([-1, 1], 8)
    v1, g1 = weighted_bce_loss(s, y, np.ones(8))
    v2, g2 = bce_loss(s, y)
    np.testing.assert_allclose(v1, v2, rtol=1e-15)
    np.testing.assert_allclose(g1, g2, rtol=1e-15)


def test_positive_negative_ratio():
    np.testing.assert_allclose(
        positive_negative_ratio(np.array([10]), 100), [9.0], rtol=0, atol=0
    )
    # zero positives fall back to weight 1
    np.testing.assert_allclose(
        positive_negative_ratio(np.array([0, 50]), 100), [1.0, 1.0], rtol=0
    )
    with pytest.raises(ValueError):
        positive_negative_ratio(np.array([-1]), 10)
    with pytest.raises(ValueError):
        positive_negative_ratio(np.array([11]), 10)


def test_focal_known_value():
    value, grad = focal_loss([0.0], [1], gamma_f=2.0, alpha=0.25)
    np.testing.assert_allclose(value, 0.04332169878499658, rtol=0, atol=1e-12)
    np.testing.assert_allclose(grad, [-0.07457169878499659], rtol=0, atol=1e-12)


def test_focal_zero_focus_is_weighted_bce():
    rng = np.random.default_rng(5)
    s = rng.uniform(-5, 5, 10)
    y = np.ones(10, dtype=int)
    alpha = 0.25
    fv, fg = focal_loss(s, y, gamma_f=0.0, alpha=alpha)
    bv, bg = bce_loss(s, y)
    np.testing.assert_allclose(fv, alpha * bv, rtol=1e-14)
    np.testing.assert_allclose(fg, alpha * bg, rtol=1e-14)


def test_focal_focus_shrinks_easy_examples():
    # a confident correct logit loses gradient mass as gamma_f grows
    mags = [abs(focal_loss([3.0], [1], gamma_f=g)[1][0]) for g in (0.0, 1.0, 2.0, 5.0)]
    assert all(a > b for a, b in zip(mags, mags[1:]))


def _mass_and_signs(s, y):
    value, grad = lse_sign_loss(s, y)
    z = -np.asarray(y, dtype=np.float64) * np.asarray(s, dtype=np.float64)
    m = max(0.0, z.max())
    mass = np.exp(z - m).sum() / (np.exp(-m) + np.exp(z - m).sum())
    return value, grad, z, mass


def test_lse_sandwich_mass_sign_ratio():
    rng = np.random.default_rng(11)
    for _ in range(300):
        c = int(rng.integers(1, 30))
        s = rng.uniform(-10, 10, c)
        y = rng.choice([-1, 1], c)
        value, grad, z, mass = _mass_and_signs(s, y)
        hinge = max(0.0, z.max())
        assert hinge - 1e-12 <= value <= hinge + np.log(c + 1.0) + 1e-12
        np.testing.assert_allclose(np.abs(grad).sum(), mass, rtol=0, atol=1e-12)
        assert (np.sign(grad) == -y).all()
        # gradient magnitudes fall off exponentially with the margin gap
        i = int(np.argmax(z))
        j = int(np.argmin(z))
        if i != j:
            np.testing.assert_allclose(
                abs(grad[i]) / abs(grad[j]), np.exp(z[i] - z[j]), rtol=1e-12
            )


def test_lse_extreme_logits_stay_finite():
    # both classes maximally wrong: hinge term 1e4 plus log 2 for the tie
    value, grad = lse_sign_loss([10000.0, -10000.0], [-1, 1])
    assert np.isfinite(value)
    np.testing.assert_allclose(value, 10000.0 + LN2, rtol=1e-15)
    np.testing.assert_allclose(grad, [0.5, -0.5], rtol=0, atol=1e-12)


def test_lse_margin_growth_vanishes():
    # all classes correct with huge margin: loss and gradient go to zero
    y = np.array([1, -1, 1, -1])
    value, grad = lse_sign_loss(y * 300.0, y)
    assert value < 1e-12
    assert (np.abs(grad) < 1e-12).all()


def test_batched_rows_match_single_rows():
    rng = np.random.default_rng(6)
    s = rng.uniform(-6, 6, (5, 7))
    y = rng.choice([-1, 1], (5, 7))
    w = rng.uniform(0.5, 5.0, 7)
    for fn in (
        lse_sign_loss,
        bce_loss,
        lambda a, b: weighted_bce_loss(a, b, w),
        focal_loss,
    ):
        values, grads = fn(s, y)
        assert values.shape == (5,) and grads.shape == (5, 7)
        for r in range(5):
            v, g = fn(s[r], y[r])
            np.testing.assert_allclose(values[r], v, rtol=1e-15)
            np.testing.assert_allclose(grads[r], g, rtol=1e-15)


def _loss_for_fd(name, y, w):
    if name == "weighted_bce":
        return lambda batch: weighted_bce_loss(batch, np.tile(y, (len(batch), 1)), w)[0]
    loss = {"lse_sign": lse_sign_loss, "bce": bce_loss, "focal": focal_loss}[name]
    return lambda batch: loss(batch, np.tile(y, (len(batch), 1)))[0]


def test_finite_difference_gradients():
    rng = np.random.default_rng(7)
    for name in LOSS_NAMES:
        for _ in range(25):
            c = int(rng.integers(1, 12))
            s = rng.uniform(-6, 6, c)
            y = rng.choice([-1, 1], c)
            w = rng.uniform(0.5, 8.0, c)
            if name == "weighted_bce":
                _, grad = weighted_bce_loss(s, y, w)
            else:
                _, grad = _dispatch(
                    {"lse_sign": "lse", "bce": "bce", "focal": "focal"}[name],
                    s, y, (2.0, 0.25),
                )
            fd = central_difference_grad(_loss_for_fd(name, y, w), s)
            err = np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12)
            assert err < 1e-6, f"{name}: fd mismatch {err:.3e}"


def test_get_loss_dispatch():
    rng = np.random.default_rng(8)
    s = rng.uniform(-3, 3, 4)
    y = rng.choice([-1, 1], 4)
    w = rng.uniform(1.0, 3.0, 4)
    v, _ = get_loss("lse_sign")(s, y)
    np.testing.assert_allclose(v, lse_sign_loss(s, y)[0], rtol=0)
    v, _ = get_loss("weighted_bce", pos_weight=w)(s, y)
    np.testing.assert_allclose(v, weighted_bce_loss(s, y, w)[0], rtol=0)
    v, _ = get_loss("focal", gamma_f=1.5, alpha=0.5)(s, y)
    np.testing.assert_allclose(v, focal_loss(s, y, gamma_f=1.5, alpha=0.5)[0], rtol=0)
    with pytest.raises(ValueError):
        get_loss("hinge")
    with pytest.raises(ValueError):
        get_loss("weighted_bce")


def test_input_validation():
    with pytest.raises(ValueError, match=r"index \(0, 1\)"):
        lse_sign_loss([0.0, np.inf], [1, 1])
    with pytest.raises(ValueError, match="not \\+1 or -1"):
        bce_loss([0.0], [0])
    with pytest.raises(ValueError):
        lse_sign_loss([[0.0], [0.0]], [[1]])  # shape mismatch
    with pytest.raises(ValueError):
        weighted_bce_loss([0.0, 0.0], [1, 1], [1.0])
    with pytest.raises(ValueError):
        weighted_bce_loss([0.0], [1], [-1.0])
    with pytest.raises(ValueError):
        focal_loss([0.0], [1], gamma_f=-0.5)
    with pytest.raises(ValueError):
        focal_loss([0.0], [1], alpha=0.0)
    with pytest.raises(ValueError):
        focal_loss([0.0], [1], alpha=1.5)
