#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
配置模块
提供奖励、基线、结构、训练等配置项及JSON配置文件的读取
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from exceptions import ConfigError


@dataclass(frozen=True)
class RewardConfig:
    """奖励参数：过程奖励系数、挠度限值比例、库存惩罚上限"""
    interim_coefficient: float = 0.0025
    deflection_ratio: float = 1.0 / 120.0
    inventory_penalty_cap: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"奖励参数不能为负: {f.name}={getattr(self, f.name)}")


@dataclass(frozen=True)
class StructureConfig:
    """结构建模参数"""
    bracing: str = 'single'
    support_frame_code: Optional[int] = None

    def __post_init__(self):
        if self.bracing not in ('single', 'x'):
            raise ConfigError(f"未知的支撑形式: {self.bracing}（可选 single / x）")


@dataclass(frozen=True)
class BaselineConfig:
    """基线生成参数：扩展概率、扩展轮数、最大重试次数"""
    p_expand: float = 0.3
    expansion_passes: int = 1
    max_retries: int = 50

    def __post_init__(self):
        if not 0.0 <= self.p_expand <= 1.0:
            raise ConfigError(f"扩展概率必须在[0, 1]之间: {self.p_expand}")
        if self.expansion_passes < 0 or self.max_retries < 1:
            raise ConfigError("扩展轮数不能为负，最大重试次数至少为1")


@dataclass(frozen=True)
class TrainConfig:
    """PPO训练参数"""
    total_steps: int = 100_000
    n_rollout: int = 2048
    n_epochs: int = 10
    minibatch_size: int = 64
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    epsilon_start: float = 0.10
    epsilon_end: float = 0.01
    epsilon_decay_fraction: float = 0.5
    n_rand: int = 2
    checkpoint_interval: int = 10
    phase1_inventory: Optional[int] = None
    phase1_targets: int = 1
    conv_channels: tuple = (64, 128, 128)
    hidden_size: int = 512
    deterministic: bool = True

    def __post_init__(self):
        object.__setattr__(self, 'conv_channels', tuple(int(c) for c in self.conv_channels))
        positive = ('n_rollout', 'n_epochs', 'minibatch_size', 'hidden_size', 'checkpoint_interval', 'phase1_targets')
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"训练参数必须为正: {name}={getattr(self, name)}")
        if self.total_steps < 0 or self.n_rand < 0:
            raise ConfigError("total_steps 与 n_rand 不能为负")
        if self.clip_ratio <= 0 or self.learning_rate <= 0:
            raise ConfigError("clip_ratio 与 learning_rate 必须为正")
        if not (0 < self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ConfigError(f"折扣因子或GAE参数超出范围: gamma={self.gamma}, lambda={self.gae_lambda}")
        for name in ('epsilon_start', 'epsilon_end', 'epsilon_decay_fraction'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} 必须在[0, 1]之间")
        if len(self.conv_channels) != 3 or min(self.conv_channels) <= 0:
            raise ConfigError(f"卷积通道配置必须为3个正整数: {self.conv_channels}")

    def epsilon_at(self, step):
        """epsilon线性退火：在前 decay_fraction 的训练步内从start降到end"""
        horizon = self.epsilon_decay_fraction * self.total_steps
        if horizon <= 0:
            return self.epsilon_end
        frac = min(max(step / horizon, 0.0), 1.0)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def phase2_defaults():
    """第二阶段默认配置：5万步，不做初始随机步"""
    return TrainConfig(total_steps=50_000, n_rand=0)


@dataclass(frozen=True)
class AppConfig:
    """全部配置"""
    reward: RewardConfig = field(default_factory=RewardConfig)
    structure: StructureConfig = field(default_factory=StructureConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    phase1: TrainConfig = field(default_factory=TrainConfig)
    phase2: TrainConfig = field(default_factory=phase2_defaults)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {
    'reward': RewardConfig,
    'structure': StructureConfig,
    'baseline': BaselineConfig,
    'phase1': TrainConfig,
    'phase2': TrainConfig,
}


def _build_section(name, cls, values, default):
    if not isinstance(values, dict):
        raise ConfigError(f"配置节 {name} 必须是JSON对象")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"配置节 {name} 含未知字段: {', '.join(sorted(unknown))}")
    try:
        return replace(default, **values)
    except TypeError as e:
        raise ConfigError(f"配置节 {name} 字段类型错误: {e}") from e


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("配置文件顶层必须是JSON对象")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"配置文件含未知配置节: {', '.join(sorted(unknown))}")
    base = AppConfig()
    sections = {name: _build_section(name, cls, data[name], getattr(base, name))
                for name, cls in _SECTIONS.items() if name in data}
    return replace(base, **sections)


def load_config(path=None):
    """
    读取JSON配置文件，未给出的字段取默认值

    Args:
        path: 配置文件路径，为None时返回默认配置

    Returns:
        AppConfig: 配置对象
    """
    if path is None:
        return AppConfig()
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"配置文件不存在: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件不是有效的JSON格式: {path}") from e
    return config_from_dict(data)


def save_config(config, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(config.to_dict(), f, ensure_ascii=False, indent=4)
