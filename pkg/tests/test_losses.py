"""Analytic values and error contracts of the training objectives."""

import numpy as np
import pytest

from accentvc import autodiff as ad
from accentvc.errors import InputError
from accentvc.losses import loss_D, loss_G, loss_adv, loss_recons
from accentvc.optim import ParamStore, adam_step
from accentvc.rng import substream


def test_recons_unit_value():
    target = np.arange(12.0).reshape(3, 4)
    out = loss_recons(target.copy(), target + 1.0, target)
    assert out.item() == pytest.approx(1.0, rel=1e-12)


def test_recons_perfect_is_zero():
    target = np.ones((2, 5))
    assert loss_recons(target, target, target).item() == 0.0


def test_recons_weights_ignore_padded_rows():
    rng = substream(0, "pad")
    target = rng.standard_normal((4, 3))
    pre = rng.standard_normal((4, 3))
    w = np.array([[1.0], [1.0], [0.0], [0.0]])
    got = loss_recons(pre, pre, target, weights=w)
    want = loss_recons(pre[:2], pre[:2], target[:2])
    assert got.item() == pytest.approx(want.item(), rel=1e-12)


def test_adv_uniform_is_zero():
    p = np.full((7, 4), 0.25)
    assert loss_adv(p).item() == 0.0


@pytest.mark.parametrize("n", [2, 3, 5])
def test_adv_one_hot_value(n):
    p = np.zeros((3, n))
    p[:, 0] = 1.0
    assert loss_adv(p).item() == pytest.approx((n - 1) / n, rel=1e-12)


def test_adv_two_class_example():
    p = np.array([[0.75, 0.25]])
    assert loss_adv(p).item() == pytest.approx(0.125, rel=1e-12)


def test_adv_rejects_non_distribution():
    with pytest.raises(InputError):
        loss_adv(np.array([[0.5, 0.6]]))


def test_adv_one_hot_is_maximal():
    rng = substream(1, "adv-max")
    for n in (2, 3, 5):
        bound = (n - 1) / n
        for _ in range(50):
            z = rng.standard_normal((4, n)) * 3
            p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
            assert loss_adv(p).item() <= bound + 1e-12


def test_loss_d_matching_one_hot_near_zero():
    p = np.eye(3)[[0, 1, 2, 1]]
    assert loss_D(p, np.array([0, 1, 2, 1])).item() <= 1e-11


def test_loss_d_uniform_is_log_n():
    p = np.full((5, 3), 1.0 / 3.0)
    assert loss_D(p, np.array([0, 1, 2, 0, 1])).item() == pytest.approx(
        np.log(3.0), rel=1e-12)


def test_loss_d_label_out_of_range():
    p = np.full((2, 3), 1.0 / 3.0)
    with pytest.raises(InputError):
        loss_D(p, np.array([0, 3]))


def test_loss_g_combination():
    assert loss_G(1.0, 2.0 / 3.0, 0.3).item() == pytest.approx(1.2, rel=1e-12)


def test_loss_g_beta_zero_is_recons():
    assert loss_G(0.7, 123.0, 0.0).item() == pytest.approx(0.7, rel=1e-15)


def test_adv_descent_reaches_uniform():
    """Minimizing the adversarial term alone over free logits must push the
    softmax to uniform within 1e-3 in 200 steps."""
    for n in (2, 3, 5):
        rng = substream(7, "adv-descent", n)
        store = ParamStore()
        store.add("z", rng.standard_normal((6, n)))
        for _ in range(200):
            p = ad.softmax_rows(ad.leaf(store["z"]))
            ad.backward(loss_adv(p))
            adam_step(store, 0.05)
        with ad.no_grad():
            p = ad.softmax_rows(ad.leaf(store["z"])).data
        assert np.abs(p - 1.0 / n).max() < 1e-3


def test_losses_accept_tensors_and_arrays():
    target = np.ones((2, 3))
    pre = ad.tensor(np.zeros((2, 3)))
    out = loss_recons(pre, np.zeros((2, 3)), target)
    assert out.item() == pytest.approx(2.0, rel=1e-12)
    ad.backward(out)
