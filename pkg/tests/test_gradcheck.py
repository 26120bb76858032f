"""Analytic gradients versus central finite differences on the tiny network."""

import numpy as np

from cagop.duration import (
    DurationSample,
    backward,
    gradient_check,
    init_params,
    iter_tensors,
    tiny_config,
)

SAMPLE = DurationSample.from_durations([3, 7, 1, 5, 2], [4.0, 9.0, 3.0, 6.0, 5.0])


def test_every_tensor_matches_finite_differences():
    cfg = tiny_config(seed=0)
    params = init_params(cfg, num_phones=8, rng=np.random.default_rng(0))
    worst = gradient_check(params, cfg, SAMPLE, step=1e-5, max_entries_per_tensor=3)
    assert worst < 1e-4


def test_gradients_mirror_parameter_structure():
    cfg = tiny_config(seed=1)
    params = init_params(cfg, num_phones=8, rng=np.random.default_rng(1))
    _, grads = backward(params, cfg, SAMPLE)
    p_names = [(n, t.shape) for n, t in iter_tensors(params)]
    g_names = [(n, t.shape) for n, t in iter_tensors(grads)]
    assert p_names == g_names
    for _, g in iter_tensors(grads):
        assert np.all(np.isfinite(g))


def test_log_sigma_gradient_agrees_with_loss_perturbation():
    cfg = tiny_config(seed=2)
    params = init_params(cfg, num_phones=8, rng=np.random.default_rng(2))
    loss0, grads = backward(params, cfg, SAMPLE)
    g = grads.blocks[0].log_sigma[0]
    assert g != 0.0

    h = 1e-5
    params.blocks[0].log_sigma[0] += h
    loss_up, _ = backward(params, cfg, SAMPLE)
    params.blocks[0].log_sigma[0] -= 2 * h
    loss_dn, _ = backward(params, cfg, SAMPLE)
    fd = (loss_up - loss_dn) / (2 * h)
    assert np.sign(fd) == np.sign(g)
    assert abs(fd - g) / max(abs(fd), abs(g)) < 1e-4
    assert loss0 > 0.0
