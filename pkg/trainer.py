#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
策略训练模块
提供轨迹缓存、GAE优势估计、PPO裁剪更新，以及两阶段训练流程（基础训练与迁移微调）
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F
from tqdm import tqdm

from config import RewardConfig, StructureConfig, TrainConfig
from env import CantileverEnv
from exceptions import CheckpointError, ShapeMismatchError, TrainingError
from models import DesignRecord, LIGHT, Scenario, Target
from policy import PolicyNetwork, forward, masked_distribution, masked_log_probs, masked_sample
from utils import atomic_path

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'cantilever-ppo'
CHECKPOINT_VERSION = 1


@dataclass
class TrajectoryBuffer:
    """按时间顺序存放的转移记录，回合连续排列，每轮迭代后清空"""
    capacity: int = 2048
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def add(self, state, action, log_prob, reward, value, done, mask):
        self.states.append(np.asarray(state, dtype=np.int64))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        self.masks.append(np.asarray(mask, dtype=bool))
        self.advantages = None
        self.returns = None

    def __len__(self):
        return len(self.rewards)

    @property
    def full(self):
        return len(self) >= self.capacity

    def finish(self, gamma, lam, normalize=True, last_value=0.0):
        self.advantages, self.returns = compute_gae(self, gamma, lam, normalize, last_value)
        return self.advantages, self.returns

    def clear(self):
        for name in ('states', 'actions', 'log_probs', 'rewards', 'values', 'dones', 'masks'):
            getattr(self, name).clear()
        self.advantages = None
        self.returns = None


def compute_gae(buffer, gamma, lam, normalize=True, last_value=0.0):
    """
    广义优势估计

    在终止或截断步处不做自举（下一状态价值取0）；缓存末尾若回合未结束则用last_value自举。
    returns = 未归一化的优势 + 价值。

    Returns:
        tuple: (advantages, returns)，均为float64数组
    """
    n = len(buffer)
    if n == 0:
        raise TrainingError("轨迹缓存为空，无法计算优势")
    rewards = np.asarray(buffer.rewards, dtype=np.float64)
    values = np.asarray(buffer.values, dtype=np.float64)
    dones = np.asarray(buffer.dones, dtype=np.float64)
    next_values = np.append(values[1:], float(last_value))

    advantages = np.zeros(n)
    last_gae = 0.0
    for t in reversed(range(n)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        last_gae = delta + gamma * lam * nonterminal * last_gae
        advantages[t] = last_gae
    returns = advantages + values
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages, returns


@dataclass
class LossStats:
    policy_loss: float = 0.0
    value_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    clip_fraction: float = 0.0
    n_updates: int = 0


def clipped_policy_loss(new_log_probs, old_log_probs, advantages, clip_ratio):
    """PPO裁剪代理损失 -mean(min(ρA, clip(ρ, 1-c, 1+c)A))"""
    ratio = torch.exp(new_log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * advantages
    return -torch.min(unclipped, clipped).mean()


def ppo_update(buffer, net, optimizer, cfg, rng):
    """
    在缓存数据上做n_epochs轮打乱的小批量PPO更新

    总损失 = 策略损失 + value_coef × 价值均方误差 - entropy_coef × 熵，并做梯度范数裁剪。

    Returns:
        LossStats: 各项损失的均值
    """
    if buffer.advantages is None:
        raise TrainingError("更新前必须先计算优势（buffer.finish）")
    states = torch.as_tensor(np.stack(buffer.states))
    actions = torch.as_tensor(buffer.actions, dtype=torch.long)
    old_log_probs = torch.as_tensor(buffer.log_probs, dtype=torch.float32)
    advantages = torch.as_tensor(buffer.advantages, dtype=torch.float32)
    returns = torch.as_tensor(buffer.returns, dtype=torch.float32)
    masks = torch.as_tensor(np.stack(buffer.masks))

    stats = LossStats()
    n = len(buffer)
    net.train()
    for epoch in range(cfg.n_epochs):
        order = torch.as_tensor(rng.permutation(n))
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            logits, values = net(states[idx])
            log_probs = masked_log_probs(logits, masks[idx])
            new_log_probs = log_probs.gather(1, actions[idx].unsqueeze(1)).squeeze(1)
            entropy = masked_distribution(logits, masks[idx]).entropy().mean()

            policy_loss = clipped_policy_loss(new_log_probs, old_log_probs[idx], advantages[idx], cfg.clip_ratio)
            value_loss = F.mse_loss(values, returns[idx])
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"损失出现非有限值（第{epoch + 1}轮）: policy={policy_loss.item()}, "
                    f"value={value_loss.item()}, entropy={entropy.item()}, "
                    f"优势范围=[{advantages.min().item():.3g}, {advantages.max().item():.3g}]")

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.max_grad_norm)
            optimizer.step()

            with torch.no_grad():
                log_ratio = new_log_probs - old_log_probs[idx]
                stats.approx_kl += float(((torch.exp(log_ratio) - 1) - log_ratio).mean())
                stats.clip_fraction += float(((torch.exp(log_ratio) - 1).abs() > cfg.clip_ratio).float().mean())
            stats.policy_loss += policy_loss.item()
            stats.value_loss += value_loss.item()
            stats.entropy += entropy.item()
            stats.n_updates += 1

    net.eval()
    k = max(stats.n_updates, 1)
    return LossStats(stats.policy_loss / k, stats.value_loss / k, stats.entropy / k,
                     stats.approx_kl / k, stats.clip_fraction / k, stats.n_updates)


@dataclass
class TrainingResult:
    """训练输出：网络、优化器、逐轮日志、记录的设计"""
    net: PolicyNetwork
    optimizer: torch.optim.Optimizer
    config: TrainConfig
    log: List[dict] = field(default_factory=list)
    designs: List[DesignRecord] = field(default_factory=list)
    steps: int = 0
    episodes: int = 0


def make_optimizer(net, cfg):
    return torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)


def build_network(scenario, cfg):
    return PolicyNetwork.for_scenario(scenario, cfg.conv_channels, cfg.hidden_size)


def seed_torch(rng, deterministic=True):
    """从numpy生成器派生torch种子"""
    torch.manual_seed(int(rng.integers(2 ** 31 - 1)))
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


def phase1_scenario(template, rng, cfg):
    """
    第一阶段随机场景：固定支座，目标在网格内均匀随机（排除支座及其4邻域），
    无外荷载，仅使用轻型框架
    """
    si, sj = template.support
    excluded = {(si, sj), (si + 1, sj), (si - 1, sj), (si, sj + 1), (si, sj - 1)}
    candidates = [(i, j) for i in range(template.height) for j in range(template.width)
                  if (i, j) not in excluded]
    picks = rng.choice(len(candidates), size=min(cfg.phase1_targets, len(candidates)), replace=False)
    n_frames = cfg.phase1_inventory if cfg.phase1_inventory is not None else template.total_inventory
    inventory = {code: 0 for code in template.frame_codes}
    inventory[LIGHT] = n_frames
    return Scenario(
        height=template.height,
        width=template.width,
        support=template.support,
        targets=tuple(Target(candidates[int(k)], 0.0) for k in sorted(picks)),
        inventory=inventory,
        module_size=template.module_size,
        include_inventory_rows=template.include_inventory_rows,
        inventory_rows=template.inventory_row_count,
        self_load_only=True,
        name='phase1',
    )


def run_training(net, optimizer, cfg, rng, scenario_fn, reward_config=None, structure=None,
                 phase='phase1', out_dir=None, log_designs=False, callback=None):
    """
    PPO训练主循环（两个阶段共用）

    每轮迭代：以epsilon-贪婪策略收集完整回合直到至少n_rollout步（不超过剩余总步数），
    截断回合奖励为0，随后计算GAE并做PPO更新；每checkpoint_interval轮保存检查点。

    Args:
        net: 策略网络
        optimizer: 优化器
        cfg: TrainConfig
        rng: numpy随机数生成器
        scenario_fn: 每个回合调用一次，返回该回合的场景
        phase: 阶段名，用于文件命名与日志
        out_dir: 输出目录，None时不写检查点
        log_designs: 是否记录每个终止回合的设计
        callback: 每轮迭代结束后调用 callback(result)

    Returns:
        TrainingResult: 训练结果
    """
    reward_config = reward_config or RewardConfig()
    structure = structure or StructureConfig()
    result = TrainingResult(net, optimizer, cfg)
    buffer = TrajectoryBuffer(cfg.n_rollout)
    env = CantileverEnv(scenario_fn(), rng, reward_config, structure, cfg.n_rand)
    n_iterations = math.ceil(cfg.total_steps / cfg.n_rollout) if cfg.total_steps else 0
    net.eval()

    progress = tqdm(total=cfg.total_steps, desc=f"{phase} 训练", unit="步", disable=not n_iterations)
    iteration = 0
    while result.steps < cfg.total_steps:
        iteration += 1
        budget = min(cfg.n_rollout, cfg.total_steps - result.steps)
        returns, lengths = [], []
        n_terminated = n_truncated = 0
        epsilon = cfg.epsilon_at(result.steps)
        buffer.capacity = budget
        while not buffer.full:
            epsilon = cfg.epsilon_at(result.steps + len(buffer))
            obs = env.reset(scenario_fn())
            result.episodes += 1
            if not env.action_mask().any():
                n_truncated += 1
                continue
            episode_return, length = 0.0, 0
            while not env.done:
                mask = env.action_mask()
                logits, value = forward(net, obs)
                index, log_prob = masked_sample(logits, mask, epsilon, rng)
                obs_before = obs
                obs, reward, terminated, truncated, info = env.step(index)
                buffer.add(obs_before, index, log_prob, reward, value, terminated or truncated, mask)
                episode_return += reward
                length += 1
            returns.append(episode_return)
            lengths.append(length)
            if env.state.terminated:
                n_terminated += 1
                if log_designs and info['evaluation'] is not None:
                    result.designs.append(DesignRecord(env.state, info['evaluation'], label='policy',
                                                       extra={'steps': result.steps + len(buffer)}))
            else:
                n_truncated += 1

        collected = len(buffer)
        buffer.finish(cfg.gamma, cfg.gae_lambda)
        stats = ppo_update(buffer, net, optimizer, cfg, rng)
        buffer.clear()
        result.steps += collected
        progress.update(collected)

        row = {
            'phase': phase,
            'iteration': iteration,
            'steps': result.steps,
            'episodes': result.episodes,
            'terminated': n_terminated,
            'truncated': n_truncated,
            'mean_reward': float(np.mean(returns)) if returns else 0.0,
            'mean_episode_length': float(np.mean(lengths)) if lengths else 0.0,
            'policy_loss': stats.policy_loss,
            'value_loss': stats.value_loss,
            'entropy': stats.entropy,
            'approx_kl': stats.approx_kl,
            'epsilon': epsilon,
        }
        result.log.append(row)
        logger.info("[%s] 第%d/%d轮 步数%d 回合%d 平均回报%.4f 平均长度%.1f 策略损失%.4f 价值损失%.4f",
                    phase, iteration, n_iterations, result.steps, result.episodes,
                    row['mean_reward'], row['mean_episode_length'], stats.policy_loss, stats.value_loss)

        if out_dir is not None and iteration % cfg.checkpoint_interval == 0:
            save_checkpoint(Path(out_dir) / f"{phase}_iter{iteration:04d}.pt", net, optimizer, cfg, rng,
                            {'phase': phase, 'iteration': iteration, 'steps': result.steps})
        if callback is not None:
            callback(result)
    progress.close()
    return result


def train_phase1(cfg, rng, template, reward_config=None, structure=None, out_dir=None, callback=None):
    """
    第一阶段：随机目标、仅自重、单一框架类型，从零初始化网络

    Args:
        cfg: TrainConfig
        rng: numpy随机数生成器
        template: 提供网格尺寸、支座、库存行数的模板场景

    Returns:
        TrainingResult: 训练结果
    """
    seed_torch(rng, cfg.deterministic)
    sample = phase1_scenario(template, rng, cfg)
    net = build_network(sample, cfg)
    optimizer = make_optimizer(net, cfg)
    return run_training(net, optimizer, cfg, rng, lambda: phase1_scenario(template, rng, cfg),
                        reward_config, structure, 'phase1', out_dir, callback=callback)


def train_phase2(base_net, scenario, cfg, rng, reward_config=None, structure=None, out_dir=None, callback=None):
    """
    第二阶段：以基础网络初始化，在固定场景（固定目标、外荷载、混合类型库存）上微调

    每个终止回合的设计都被记录（状态 + 结构评价），用于设计空间导出。
    """
    base_net.check_scenario(scenario)
    seed_torch(rng, cfg.deterministic)
    net = PolicyNetwork(**_net_kwargs(base_net.spec))
    net.load_state_dict(base_net.state_dict())
    optimizer = make_optimizer(net, cfg)
    return run_training(net, optimizer, cfg, rng, lambda: scenario, reward_config, structure,
                        'phase2', out_dir, log_designs=True, callback=callback)


def _net_kwargs(spec):
    return {
        'height': spec['height'],
        'width': spec['width'],
        'n_values': spec['n_values'],
        'n_actions': spec['n_actions'],
        'channels': tuple(spec['channels']),
        'hidden': spec['hidden'],
    }


def save_checkpoint(path, net, optimizer, cfg, rng, meta=None):
    """
    保存检查点（先写临时文件再重命名）

    内容：格式版本、网络结构与各层形状、权重、优化器状态、配置、随机数状态。
    """
    payload = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'network': net.spec,
        'layer_shapes': {name: list(t.shape) for name, t in net.state_dict().items()},
        'state_dict': net.state_dict(),
        'optimizer': optimizer.state_dict() if optimizer is not None else None,
        'config': asdict(cfg),
        'rng_state': rng.bit_generator.state if rng is not None else None,
        'torch_rng_state': torch.get_rng_state(),
        'meta': meta or {},
    }
    with atomic_path(path) as tmp:
        torch.save(payload, tmp)
    logger.info("检查点已保存: %s", path)
    return path


@dataclass
class Checkpoint:
    net: PolicyNetwork
    config: TrainConfig
    optimizer_state: Optional[dict]
    rng_state: Optional[dict]
    meta: dict


def load_checkpoint(path):
    """读取检查点并重建网络"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"检查点文件不存在: {path}")
    try:
        payload = torch.load(path, map_location='cpu', weights_only=False)
    except Exception as e:
        raise CheckpointError(f"检查点文件无法读取: {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise CheckpointError(f"不是有效的检查点文件: {path}")
    if payload.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"检查点版本不受支持: {payload.get('version')}（当前版本{CHECKPOINT_VERSION}）")
    net = PolicyNetwork(**_net_kwargs(payload['network']))
    shapes = {name: list(t.shape) for name, t in net.state_dict().items()}
    if shapes != payload['layer_shapes']:
        raise ShapeMismatchError(f"检查点层形状与网络结构不一致: {path}")
    net.load_state_dict(payload['state_dict'])
    net.eval()
    config = TrainConfig(**payload['config'])
    return Checkpoint(net, config, payload.get('optimizer'), payload.get('rng_state'), payload.get('meta', {}))


def restore_rng(rng_state):
    """由检查点中的状态恢复numpy生成器"""
    rng = np.random.default_rng()
    rng.bit_generator.state = rng_state
    return rng
