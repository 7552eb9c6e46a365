import math
from dataclasses import dataclass

import pytest

from rldx.events import ModelUpdate, TensorStats
from rldx.nn_checks import (
    NnThresholds,
    check_activations,
    check_gradients,
    check_loss,
    check_parameters,
)
from rldx.stats import Series

TH = NnThresholds()


def stats(name, mean=0.0, std=0.1, lo=-1.0, hi=1.0, l2=1.0, zero=0.0, bad=0.0, digest=1):
    return TensorStats(name, mean, std, lo, hi, l2, zero, bad, digest)


def update(idx, main=(), loss=0.5, grads=(), acts=()):
    return ModelUpdate(
        update_idx=idx,
        loss=loss,
        main_params=tuple(main),
        target_params=tuple(main),
        grad_norms=tuple(grads),
        activations=tuple(acts),
        probe_outputs=(),
    )


def ids(diags):
    return [d.diagnostic_id for d in diags]


# -- parameters --------------------------------------------------------------


def healthy_updates(n=10):
    out = []
    for i in range(1, n + 1):
        out.append(
            update(
                i,
                main=[
                    stats("l1.weight", std=0.2, digest=100 + i),
                    stats("l1.bias", mean=0.0, std=0.05, digest=200 + i),
                ],
                loss=0.5 / i,
                grads=[("l1.weight", 0.05)],
                acts=[stats("l1.relu", zero=0.3, digest=300 + i)],
            )
        )
    return out


def test_parameters_healthy_is_clean():
    assert check_parameters(healthy_updates(), TH) == []


def test_zero_init_weights_fire_w3():
    ups = healthy_updates()
    first = ups[0]
    zeroed = update(
        1,
        main=[stats("l1.weight", std=0.0, zero=1.0, digest=1), first.main_params[1]],
        loss=first.loss,
    )
    out = check_parameters([zeroed] + ups[1:], TH)
    assert "NN.W3" in ids(out)


def test_bias_init_at_one_fires_b1():
    # a constant 1.0 bias has |mean| exactly 1.0; the convention is inclusive
    ups = healthy_updates()
    bad = update(
        1,
        main=[ups[0].main_params[0], stats("l1.bias", mean=1.0, std=0.0, digest=5)],
    )
    out = check_parameters([bad] + ups[1:], TH)
    assert "NN.B1" in ids(out)


def test_exploded_weight_norm_fires_w1_critical():
    ups = healthy_updates()
    bad = update(3, main=[stats("l1.weight", l2=2e3, digest=7)])
    out = check_parameters(ups[:2] + [bad], TH)
    w1 = next(d for d in out if d.diagnostic_id == "NN.W1")
    assert w1.severity == "critical"


def test_frozen_layer_fires_w2():
    ups = []
    for i in range(1, 9):
        ups.append(
            update(
                i,
                main=[stats("l1.weight", digest=42)],  # digest never moves
                loss=1.0 / i,  # loss keeps changing
            )
        )
    out = check_parameters(ups, TH)
    assert "NN.W2" in ids(out)


def test_static_loss_does_not_fire_w2():
    ups = [update(i, main=[stats("l1.weight", digest=42)], loss=0.5) for i in range(1, 9)]
    assert "NN.W2" not in ids(check_parameters(ups, TH))


# -- gradients ---------------------------------------------------------------


def test_gradients_in_range_clean():
    ups = [update(i, grads=[("l1.weight", 0.01), ("l2.weight", 5.0)]) for i in range(1, 6)]
    assert check_gradients(ups, TH) == []


def test_vanishing_gradients_fire_g1():
    ups = [update(i, grads=[("l1.weight", 1e-12)]) for i in range(1, 6)]
    out = check_gradients(ups, TH)
    assert ids(out) == ["NN.G1"]


def test_exploding_gradient_fires_g2():
    out = check_gradients([update(1, grads=[("l1.weight", 2e3)])], TH)
    assert ids(out) == ["NN.G2"]
    assert out[0].severity == "critical"


def test_nan_gradient_fires_g2():
    out = check_gradients([update(1, grads=[("l1.weight", math.nan)])], TH)
    assert "NN.G2" in ids(out)


# -- activations -------------------------------------------------------------


def test_activations_moderate_zeros_clean():
    ups = [update(i, acts=[stats("l1.relu", zero=0.3)]) for i in range(1, 8)]
    assert check_activations(ups, TH) == []


def test_dying_relu_fires_a1():
    ups = [update(i, acts=[stats("l1.relu", zero=0.99)]) for i in range(1, 8)]
    assert "NN.A1" in ids(check_activations(ups, TH))


def test_saturated_tanh_fires_a2():
    ups = [update(1, acts=[stats("out.tanh", mean=0.999, std=1e-5)])]
    assert "NN.A2" in ids(check_activations(ups, TH))


def test_missing_activations_skipped():
    assert check_activations([update(1)], TH) == []


# -- loss --------------------------------------------------------------------


def loss_series(values, start=1):
    return Series(range(start, start + len(values)), values)


def test_noisy_bounded_loss_clean():
    vals = [0.5 + 0.1 * ((-1) ** i) for i in range(60)]
    assert check_loss(loss_series(vals), TH) == []


def test_nonfinite_loss_fires_l1():
    vals = [0.5] * 7 + [math.nan] + [0.4 + 0.01 * i for i in range(20)]
    out = check_loss(loss_series(vals), TH)
    l1 = next(d for d in out if d.diagnostic_id == "NN.L1")
    assert l1.severity == "critical"
    assert l1.observed == 8.0  # update index of the first bad value


def test_rising_loss_fires_l2_as_info():
    vals = [0.1 + 0.001 * i for i in range(20)] + [0.5 + 0.01 * i for i in range(30)]
    out = check_loss(loss_series(vals), TH)
    l2 = next(d for d in out if d.diagnostic_id == "NN.L2")
    assert l2.severity == "info"


def test_constant_loss_fires_l3():
    out = check_loss(loss_series([0.5] * 20), TH)
    assert "NN.L3" in ids(out)


def test_checks_read_only_summary_statistics():
    """The NN checks accept objects exposing TensorStats fields and nothing
    else; raw parameter arrays never enter the interface."""

    @dataclass(frozen=True)
    class Opaque:
        update_idx: int
        loss: float
        main_params: tuple
        target_params: tuple
        grad_norms: tuple
        activations: tuple
        probe_outputs: tuple

    u = Opaque(1, 0.5, (stats("l1.weight"),), (), (("l1.weight", 0.1),), (), ())
    assert check_parameters([u], TH) == []
    assert check_gradients([u], TH) == []
    assert check_activations([u], TH) == []
