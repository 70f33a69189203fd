#!/usr/bin/env python
# -*- coding: utf-8 -*-

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch

from baseline import generate_batch
from config import TrainConfig, load_config
from env import CantileverEnv
from evaluation import compare, evaluate, sample_policy_designs
from exceptions import CheckpointError, ShapeMismatchError, TrainingError
from models import LIGHT, MEDIUM
from policy import PolicyNetwork, masked_log_probs
from trainer import (TrajectoryBuffer, build_network, clipped_policy_loss, compute_gae, load_checkpoint,
                     phase1_scenario, ppo_update, restore_rng, save_checkpoint, train_phase1, train_phase2)

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'

TINY_TRAIN = TrainConfig(total_steps=64, n_rollout=32, n_epochs=2, minibatch_size=16,
                         conv_channels=(4, 4, 4), hidden_size=8, checkpoint_interval=1, n_rand=0)


def _buffer(rewards, values, dones):
    buffer = TrajectoryBuffer(len(rewards))
    for r, v, d in zip(rewards, values, dones):
        buffer.add(np.zeros((1, 1)), 0, 0.0, r, v, d, [True])
    return buffer


def test_gae_single_step():
    advantages, returns = compute_gae(_buffer([1.0], [0.5], [True]), 0.99, 0.95, normalize=False)
    assert advantages.tolist() == pytest.approx([0.5])
    assert returns.tolist() == pytest.approx([1.0])


def test_gae_undiscounted_returns():
    advantages, returns = compute_gae(_buffer([1.0, 2.0, 3.0], [0.0] * 3, [False, False, True]),
                                      1.0, 1.0, normalize=False)
    assert advantages.tolist() == pytest.approx([6.0, 5.0, 3.0])
    assert returns.tolist() == pytest.approx([6.0, 5.0, 3.0])


def test_gae_zero_for_exact_values():
    advantages, _ = compute_gae(_buffer([1.0, 1.0, 1.0], [1.75, 1.5, 1.0], [False, False, True]),
                                0.5, 0.9, normalize=False)
    assert advantages.tolist() == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)


def test_gae_does_not_bootstrap_across_episodes():
    advantages, _ = compute_gae(_buffer([1.0, 1.0], [0.0, 10.0], [True, True]), 1.0, 1.0, normalize=False)
    assert advantages.tolist() == pytest.approx([1.0, -9.0])


def test_gae_bootstraps_open_episode():
    advantages, _ = compute_gae(_buffer([0.0], [0.0], [False]), 0.5, 1.0, normalize=False, last_value=4.0)
    assert advantages.tolist() == pytest.approx([2.0])


def test_gae_normalization():
    advantages, returns = compute_gae(_buffer([1.0, 0.0, 3.0, 2.0], [0.0] * 4, [False, True, False, True]),
                                      0.9, 0.9)
    assert advantages.mean() == pytest.approx(0.0, abs=1e-9)
    assert advantages.std() == pytest.approx(1.0, rel=1e-6)
    assert returns[1] == pytest.approx(0.0)


def test_gae_empty_buffer():
    with pytest.raises(TrainingError):
        compute_gae(TrajectoryBuffer(), 0.99, 0.95)


def test_clipped_loss_examples():
    one = torch.tensor([1.0])
    loss = clipped_policy_loss(torch.log(torch.tensor([1.5])), torch.zeros(1), one, 0.2)
    assert float(loss) == pytest.approx(-1.2)
    loss = clipped_policy_loss(torch.log(torch.tensor([0.5])), torch.zeros(1), -one, 0.2)
    assert float(loss) == pytest.approx(0.8)


def test_clipped_loss_gradcheck():
    log_ratio = torch.tensor([-0.5, -0.1, 0.0, 0.1, 0.5], dtype=torch.float64, requires_grad=True)
    advantages = torch.tensor([1.0, -1.0, 2.0, -2.0, 0.5], dtype=torch.float64)
    old = torch.zeros(5, dtype=torch.float64)
    assert torch.autograd.gradcheck(lambda x: clipped_policy_loss(x, old, advantages, 0.2), (log_ratio,))


def _tiny_batch(tiny, seed=0):
    rng = np.random.default_rng(seed)
    env = CantileverEnv(tiny, rng)
    states, masks = [], []
    for _ in range(3):
        states.append(env.reset())
        masks.append(env.action_mask())
    return torch.as_tensor(np.stack(states)), torch.as_tensor(np.stack(masks))


def test_ratio_one_matches_vanilla_policy_gradient(tiny):
    torch.manual_seed(0)
    net = PolicyNetwork.for_scenario(tiny, channels=(2, 2, 2), hidden=4).double()
    states, masks = _tiny_batch(tiny)
    actions = torch.tensor([1, 5, 11])
    advantages = torch.tensor([0.5, -1.0, 2.0], dtype=torch.float64)

    def chosen_log_probs():
        logits, _ = net(states)
        return masked_log_probs(logits, masks).gather(1, actions.unsqueeze(1)).squeeze(1)

    # 评论家头不参与策略损失
    params = [p for name, p in net.named_parameters() if not name.startswith('critic.')]
    new = chosen_log_probs()
    clipped = clipped_policy_loss(new, new.detach(), advantages, 0.2)
    grads = torch.autograd.grad(clipped, params)
    vanilla = -(advantages * chosen_log_probs()).mean()
    expected = torch.autograd.grad(vanilla, params)
    for g, e in zip(grads, expected):
        assert torch.allclose(g, e, atol=1e-6)


def test_finite_difference_gradients(tiny):
    torch.manual_seed(1)
    net = PolicyNetwork.for_scenario(tiny, channels=(2, 2, 2), hidden=4).double()
    states, masks = _tiny_batch(tiny, seed=3)
    actions = torch.tensor([1, 5, 11])
    advantages = torch.tensor([1.0, -0.5, 0.25], dtype=torch.float64)
    with torch.no_grad():
        logits, _ = net(states)
        old = masked_log_probs(logits, masks).gather(1, actions.unsqueeze(1)).squeeze(1) + 0.01

    def loss_fn():
        logits, values = net(states)
        new = masked_log_probs(logits, masks).gather(1, actions.unsqueeze(1)).squeeze(1)
        return clipped_policy_loss(new, old, advantages, 0.2) + 0.5 * (values ** 2).mean()

    params = list(net.parameters())
    analytic = torch.autograd.grad(loss_fn(), params)
    eps = 1e-6
    passed = total = 0
    with torch.no_grad():
        for param, grad in zip(params, analytic):
            flat, flat_grad = param.view(-1), grad.reshape(-1)
            for k in range(flat.numel()):
                original = float(flat[k])
                flat[k] = original + eps
                up = float(loss_fn())
                flat[k] = original - eps
                down = float(loss_fn())
                flat[k] = original
                numeric = (up - down) / (2 * eps)
                scale = max(abs(numeric), abs(float(flat_grad[k])))
                total += 1
                if scale < 1e-7 or abs(numeric - float(flat_grad[k])) <= 1e-3 * scale:
                    passed += 1
    assert passed / total >= 0.95


def _filled_buffer(tiny, rewards=None):
    rng = np.random.default_rng(0)
    env = CantileverEnv(tiny, rng)
    buffer = TrajectoryBuffer(16)
    for _ in range(4):
        obs = env.reset()
        while not env.done:
            mask = env.action_mask()
            index = int(rng.choice(np.flatnonzero(mask)))
            before = obs
            obs, reward, terminated, truncated, _ = env.step(index)
            if rewards is not None:
                reward = rewards
            buffer.add(before, index, -1.0, reward, 0.0, terminated or truncated, mask)
    return buffer


@pytest.mark.filterwarnings('error:Converting a tensor with requires_grad:UserWarning')
def test_ppo_update_runs(tiny, rng):
    torch.manual_seed(0)
    cfg = replace(TINY_TRAIN, minibatch_size=4)
    net = build_network(tiny, cfg)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    buffer = _filled_buffer(tiny)
    with pytest.raises(TrainingError):
        ppo_update(buffer, net, optimizer, cfg, rng)
    buffer.finish(cfg.gamma, cfg.gae_lambda)
    stats = ppo_update(buffer, net, optimizer, cfg, rng)
    assert stats.n_updates == cfg.n_epochs * -(-len(buffer) // cfg.minibatch_size)
    assert np.isfinite([stats.policy_loss, stats.value_loss, stats.entropy]).all()


def test_ppo_update_rejects_non_finite_loss(tiny, rng):
    cfg = TINY_TRAIN
    net = build_network(tiny, cfg)
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    buffer = _filled_buffer(tiny, rewards=float('nan'))
    buffer.finish(cfg.gamma, cfg.gae_lambda, normalize=False)
    with pytest.raises(TrainingError):
        ppo_update(buffer, net, optimizer, cfg, rng)


def test_phase1_scenario_properties(suite_scenario, rng):
    cfg = TrainConfig(phase1_targets=2)
    excluded = {(5, 7), (4, 7), (5, 6), (5, 8)}
    for _ in range(20):
        scenario = phase1_scenario(suite_scenario, rng, cfg)
        assert scenario.self_load_only
        assert scenario.inventory == {LIGHT: 30, MEDIUM: 0}
        assert scenario.tensor_shape == suite_scenario.tensor_shape
        assert scenario.max_cell_value == suite_scenario.max_cell_value
        assert len(scenario.targets) == 2
        assert all(t.load_kn == 0.0 and t.cell not in excluded for t in scenario.targets)


def test_train_phase1_writes_log_and_checkpoints(small, tmp_path):
    result = train_phase1(TINY_TRAIN, np.random.default_rng(0), small, out_dir=tmp_path)
    assert result.steps >= TINY_TRAIN.total_steps
    assert result.log
    assert set(result.log[0]) >= {'phase', 'iteration', 'steps', 'mean_reward', 'policy_loss', 'epsilon'}
    assert (tmp_path / 'phase1_iter0001.pt').exists()
    assert not list(tmp_path.glob('*.tmp'))


def test_training_is_reproducible(small):
    a = train_phase1(TINY_TRAIN, np.random.default_rng(42), small)
    b = train_phase1(TINY_TRAIN, np.random.default_rng(42), small)
    assert a.log == b.log
    for (name, x), (_, y) in zip(a.net.state_dict().items(), b.net.state_dict().items()):
        assert torch.equal(x, y), name


def test_checkpoint_round_trip(small, tmp_path):
    rng = np.random.default_rng(9)
    net = build_network(small, TINY_TRAIN)
    optimizer = torch.optim.Adam(net.parameters())
    path = save_checkpoint(tmp_path / 'net.pt', net, optimizer, TINY_TRAIN, rng, {'phase': 'phase1'})
    expected_next = rng.random()

    checkpoint = load_checkpoint(path)
    assert checkpoint.config == TINY_TRAIN
    assert checkpoint.meta == {'phase': 'phase1'}
    for name, tensor in net.state_dict().items():
        assert torch.equal(tensor, checkpoint.net.state_dict()[name])
    assert restore_rng(checkpoint.rng_state).random() == expected_next


def test_checkpoint_errors(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / 'missing.pt')
    junk = tmp_path / 'junk.pt'
    junk.write_bytes(b'not a checkpoint')
    with pytest.raises(CheckpointError):
        load_checkpoint(junk)
    old = tmp_path / 'old.pt'
    torch.save({'format': 'cantilever-ppo', 'version': 99}, old)
    with pytest.raises(CheckpointError):
        load_checkpoint(old)


def test_phase2_requires_matching_shapes(small, two_targets, rng):
    net = build_network(small, TINY_TRAIN)
    with pytest.raises(ShapeMismatchError):
        train_phase2(net, two_targets, TINY_TRAIN, rng)


def test_phase2_logs_terminated_designs(small):
    base = train_phase1(TINY_TRAIN, np.random.default_rng(1), small)
    before = {name: t.clone() for name, t in base.net.state_dict().items()}
    result = train_phase2(base.net, small, TINY_TRAIN, np.random.default_rng(2))
    assert len(result.designs) == sum(row['terminated'] for row in result.log)
    for record in result.designs:
        assert record.label == 'policy'
        assert record.evaluation is not None
    # 微调不改动基础网络
    for name, tensor in base.net.state_dict().items():
        assert torch.equal(tensor, before[name])



def test_desk_preset_keeps_full_encoder():
    config = load_config(CONFIG_DIR / 'desk.json')
    for phase in (config.phase1, config.phase2):
        assert phase.conv_channels == (64, 128, 128)
        assert phase.hidden_size == 512


@pytest.mark.slow
def test_desk_scale_training_beats_baseline(desk_scenario):
    config = load_config(CONFIG_DIR / 'desk.json')
    rng = np.random.default_rng(0)
    base = train_phase1(config.phase1, rng, desk_scenario)
    tuned = train_phase2(base.net, desk_scenario, config.phase2, rng)
    policy_designs = sample_policy_designs(tuned.net, desk_scenario, 100, rng)
    baseline_designs = generate_batch(desk_scenario, rng, 100)
    policy = evaluate(policy_designs, desk_scenario, label='policy')
    baseline = evaluate(baseline_designs, desk_scenario, label='baseline')
    assert policy.avg_failed_elements < baseline.avg_failed_elements
    assert policy.avg_frame_count < baseline.avg_frame_count
    assert policy.pct_within_allowable_deflection > baseline.pct_within_allowable_deflection
    assert policy.high_performing_pct >= 5 * max(baseline.high_performing_pct, 1.0)
    assert not compare(policy, baseline).empty
