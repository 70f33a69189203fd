#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
策略网络模块
共享卷积骨干的Actor-Critic网络与带掩码的动作采样
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.distributions import Categorical

from exceptions import ShapeMismatchError
from grid import action_space_size
from models import LOAD_MARKER

# 状态取值从-1开始，独热编码时整体平移
VALUE_OFFSET = -LOAD_MARKER


class PolicyNetwork(nn.Module):
    """
    Actor-Critic网络

    状态张量的整数取值独热编码为通道，经3层卷积（每层后接LayerNorm与ReLU）
    和一层全连接，分出动作logits头与价值头。
    """

    def __init__(self, height, width, n_values, n_actions, channels=(64, 128, 128), hidden=512):
        super().__init__()
        self.height = height
        self.width = width
        self.n_values = n_values
        self.n_actions = n_actions
        self.channels = tuple(channels)
        self.hidden = hidden

        layers = []
        in_ch = n_values
        for out_ch in self.channels:
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1),
                nn.LayerNorm([out_ch, height, width]),
                nn.ReLU(),
            ]
            in_ch = out_ch
        self.encoder = nn.Sequential(*layers)
        self.fc = nn.Linear(in_ch * height * width, hidden)
        self.actor = nn.Linear(hidden, n_actions)
        self.critic = nn.Linear(hidden, 1)

    @classmethod
    def for_scenario(cls, scenario, channels=(64, 128, 128), hidden=512):
        h, w = scenario.tensor_shape
        return cls(h, w, scenario.max_cell_value + VALUE_OFFSET + 1,
                   action_space_size(scenario), channels, hidden)

    @property
    def spec(self):
        """网络结构描述，写入检查点用于形状校验"""
        return {
            'height': self.height,
            'width': self.width,
            'n_values': self.n_values,
            'n_actions': self.n_actions,
            'channels': list(self.channels),
            'hidden': self.hidden,
        }

    def check_scenario(self, scenario):
        expected = PolicyNetwork.for_scenario(scenario, self.channels, self.hidden).spec
        if expected != self.spec:
            raise ShapeMismatchError(f"网络结构与场景不兼容: 网络{self.spec}，场景需要{expected}")

    def one_hot(self, states):
        states = torch.as_tensor(states, dtype=torch.long)
        if states.dim() == 2:
            states = states.unsqueeze(0)
        if tuple(states.shape[1:]) != (self.height, self.width):
            raise ShapeMismatchError(f"状态张量形状{tuple(states.shape[1:])}与网络输入"
                                     f"{(self.height, self.width)}不一致")
        shifted = states + VALUE_OFFSET
        if shifted.min() < 0 or shifted.max() >= self.n_values:
            raise ShapeMismatchError(f"状态取值超出网络编码范围[-1, {self.n_values - 2}]")
        dtype = self.fc.weight.dtype
        return F.one_hot(shifted, self.n_values).permute(0, 3, 1, 2).to(dtype)

    def forward(self, states):
        """
        Args:
            states: (B, H, W) 或 (H, W) 整数状态张量

        Returns:
            tuple: (logits (B, n_actions), value (B,))
        """
        x = self.encoder(self.one_hot(states))
        x = F.relu(self.fc(x.flatten(1)))
        return self.actor(x), self.critic(x).squeeze(-1)


def forward(net, state):
    """单个状态张量的前向计算（推理模式，不记录梯度）"""
    with torch.no_grad():
        logits, value = net(state)
    return logits[0], float(value[0])


def masked_logits(logits, mask):
    """不可行动作的logits置为极小值"""
    mask = torch.as_tensor(mask, dtype=torch.bool, device=logits.device)
    return logits.masked_fill(~mask, torch.finfo(logits.dtype).min)


def masked_distribution(logits, mask):
    return Categorical(logits=masked_logits(logits, mask))


def masked_log_probs(logits, mask):
    return torch.log_softmax(masked_logits(logits, mask), dim=-1)


def masked_sample(logits, mask, epsilon, rng):
    """
    epsilon-贪婪的掩码采样

    以概率epsilon在可行动作中均匀采样，否则按掩码softmax分布采样。
    返回的对数概率始终是掩码softmax下的对数概率。

    Args:
        logits: 一维logits（torch张量或数组）
        mask: 布尔掩码
        epsilon: 均匀探索概率
        rng: numpy随机数生成器

    Returns:
        tuple: (动作索引, 对数概率)
    """
    mask = np.asarray(mask, dtype=bool)
    feasible = np.flatnonzero(mask)
    if feasible.size == 0:
        raise ValueError("掩码中没有可行动作（环境应已截断）")
    logits = torch.as_tensor(logits).detach().to(torch.float64).reshape(-1)
    log_probs = masked_log_probs(logits, mask)

    if rng.random() < epsilon:
        index = int(feasible[int(rng.integers(feasible.size))])
    else:
        probs = torch.exp(log_probs[feasible]).numpy()
        probs = probs / probs.sum()
        index = int(feasible[int(rng.choice(feasible.size, p=probs))])
    return index, float(log_probs[index])


def greedy_action(logits, mask):
    """掩码下概率最大的动作"""
    masked = masked_logits(torch.as_tensor(logits).detach().reshape(-1), mask)
    return int(torch.argmax(masked))
