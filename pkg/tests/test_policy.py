#!/usr/bin/env python
# -*- coding: utf-8 -*-

import numpy as np
import pytest
import torch

from exceptions import ShapeMismatchError
from grid import encode_state
from models import GridState, LIGHT
from policy import PolicyNetwork, forward, greedy_action, masked_distribution, masked_log_probs, masked_sample


@pytest.fixture
def suite_net(suite_scenario):
    torch.manual_seed(0)
    return PolicyNetwork.for_scenario(suite_scenario, channels=(4, 8, 8), hidden=16)


def test_network_shapes(suite_net, suite_scenario):
    assert suite_net.n_actions == 169
    assert suite_net.n_values == 7
    state = encode_state(GridState.initial(suite_scenario), suite_scenario)
    logits, value = suite_net(np.stack([state, state, state]))
    assert logits.shape == (3, 169)
    assert value.shape == (3,)
    single_logits, single_value = forward(suite_net, state)
    assert single_logits.shape == (169,)
    assert isinstance(single_value, float)


def test_network_rejects_other_scenarios(suite_net, small):
    with pytest.raises(ShapeMismatchError):
        suite_net.check_scenario(small)
    with pytest.raises(ShapeMismatchError):
        suite_net(encode_state(GridState.initial(small), small))


def test_network_rejects_out_of_range_values(suite_net, suite_scenario):
    state = encode_state(GridState.initial(suite_scenario), suite_scenario).copy()
    state[0, 0] = 9
    with pytest.raises(ShapeMismatchError):
        suite_net(state)


def test_masked_sample_stays_feasible(rng):
    logits = torch.tensor([5.0, 0.0, 1.0, 9.0, -2.0])
    mask = np.array([False, True, True, False, True])
    for _ in range(200):
        index, log_prob = masked_sample(logits, mask, 0.1, rng)
        assert mask[index]
        assert log_prob <= 0.0


def test_full_exploration_is_uniform(rng):
    logits = torch.tensor([0.0, 50.0, 0.0, 0.0])
    mask = np.array([True, True, True, False])
    counts = np.zeros(4)
    for _ in range(3000):
        counts[masked_sample(logits, mask, 1.0, rng)[0]] += 1
    assert counts[3] == 0
    assert np.all(np.abs(counts[:3] / 3000 - 1 / 3) < 0.05)


def test_log_prob_is_masked_softmax(rng):
    logits = torch.tensor([1.0, 2.0, 3.0])
    mask = np.array([True, False, True])
    index, log_prob = masked_sample(logits, mask, 0.0, rng)
    expected = torch.log_softmax(torch.tensor([1.0, 3.0], dtype=torch.float64), dim=0)
    assert log_prob == pytest.approx(float(expected[0 if index == 0 else 1]), rel=1e-12)


def test_single_feasible_action_has_zero_log_prob(rng):
    index, log_prob = masked_sample(torch.randn(6), np.eye(6, dtype=bool)[4], 0.0, rng)
    assert index == 4
    assert log_prob == pytest.approx(0.0, abs=1e-12)


def test_empty_mask_rejected(rng):
    with pytest.raises(ValueError):
        masked_sample(torch.zeros(3), np.zeros(3, dtype=bool), 0.0, rng)


def test_greedy_action_respects_mask():
    assert greedy_action(torch.tensor([5.0, 1.0, 3.0]), np.array([False, True, True])) == 2


def test_masked_log_probs_batch():
    logits = torch.zeros(2, 3)
    mask = torch.tensor([[True, True, False], [True, False, False]])
    probs = masked_log_probs(logits, mask).exp()
    assert probs[0].tolist() == pytest.approx([0.5, 0.5, 0.0])
    assert probs[1].tolist() == pytest.approx([1.0, 0.0, 0.0])


def test_one_hot_channels(tiny):
    net = PolicyNetwork.for_scenario(tiny, channels=(2, 2, 2), hidden=4)
    state = GridState.initial(tiny).with_frame(LIGHT, (1, 1))
    encoded = net.one_hot(encode_state(state, tiny))
    assert encoded.shape == (1, net.n_values) + tiny.tensor_shape
    assert torch.all(encoded.sum(dim=1) == 1)


def test_all_zero_input_gives_finite_outputs(suite_net, suite_scenario):
    logits, value = suite_net(torch.zeros((2,) + suite_scenario.tensor_shape, dtype=torch.long))
    assert torch.isfinite(logits).all()
    assert torch.isfinite(value).all()


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_masked_distribution_entropy_bounds(seed):
    generator = torch.Generator().manual_seed(seed)
    logits = torch.randn(12, generator=generator, dtype=torch.float64) * 3.0
    mask = np.zeros(12, dtype=bool)
    mask[[1, 4, 5, 9, 10]] = True
    dist = masked_distribution(logits, mask)
    assert float(dist.probs.sum()) == pytest.approx(1.0, abs=1e-12)
    assert float(dist.probs[~torch.as_tensor(mask)].sum()) == 0.0
    entropy = float(dist.entropy())
    assert 0.0 <= entropy <= np.log(mask.sum()) + 1e-12
