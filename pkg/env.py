#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
设计环境模块
实现MDP的回合生命周期：可行动作掩码、状态转移、过程奖励与终止奖励、截断
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config import RewardConfig, StructureConfig
from core import solve_static, utilization_p90
from exceptions import AnalysisError, InfeasibleActionError
from grid import (action_space_size, action_to_index, connected_fraction, encode_state,
                  frontier_mask, index_to_action)
from models import DesignEvaluation, GridState, StepOutcome
from structure import build_fe_model

logger = logging.getLogger(__name__)


def feasible_actions(state, scenario):
    """
    可行动作布尔掩码（扁平动作空间）

    放置动作可行：单元为空、非荷载标记、4邻接于已占用单元、该类型库存 >= 1。
    终止动作可行：全部目标已连通。
    """
    mask = np.zeros(action_space_size(scenario), dtype=bool)
    frontier = frontier_mask(state).ravel()
    hw = scenario.height * scenario.width
    for t, code in enumerate(scenario.frame_codes):
        if state.remaining.get(code, 0) >= 1:
            mask[1 + t * hw:1 + (t + 1) * hw] = frontier
    mask[0] = connected_fraction(state, scenario) == 1.0
    return mask


def reset(scenario, rng, n_rand=0):
    """
    初始化回合：放置支座、库存满，然后执行n_rand个均匀随机的可行放置动作

    可行放置动作耗尽时提前停止。
    """
    state = GridState.initial(scenario)
    for _ in range(n_rand):
        candidates = np.flatnonzero(feasible_actions(state, scenario)[1:]) + 1
        if candidates.size == 0:
            break
        action = index_to_action(int(rng.choice(candidates)), scenario)
        state = state.with_frame(action.frame_code, action.cell)
    return GridState(state.design, state.remaining, 0)


def cantilever_length(scenario):
    """
    悬臂长度：支座到最远受荷目标的水平单元距离 × 模块尺寸

    无外荷载的场景（仅自重）取全部目标；长度不小于一个模块。
    """
    targets = scenario.loaded_targets or scenario.targets
    reach = max(abs(t.cell[1] - scenario.support[1]) for t in targets)
    return scenario.module_size * max(reach, 1)


def reward_from_terms(n_targets, n_used, n_inventory, max_deflection, allowable, n_failed, cfg=None):
    """终止奖励各项的组合"""
    cfg = cfg or RewardConfig()
    ratio = n_used / n_inventory if n_inventory else 0.0
    inventory_penalty = min(ratio, cfg.inventory_penalty_cap)
    deflection_penalty = 1.0 if max_deflection >= allowable else 0.0
    return float(n_targets - inventory_penalty - deflection_penalty - n_failed)


def evaluate_design(state, scenario, cfg=None, structure=None):
    """
    对终止设计做有限元分析并计算终止奖励各项

    奖励 = N_target - min(N_used / N_inventory, cap) - 1{δ_max >= δ_allow} - |F|

    Returns:
        DesignEvaluation: 评价结果；分析失败时抛出AnalysisError
    """
    cfg = cfg or RewardConfig()
    model = build_fe_model(state, scenario, structure or StructureConfig())
    result = solve_static(model)
    allowable = cfg.deflection_ratio * cantilever_length(scenario)
    n_inventory = scenario.total_inventory
    ratio = state.n_used / n_inventory if n_inventory else 0.0
    reward = reward_from_terms(len(scenario.targets), state.n_used, n_inventory, result.max_deflection,
                               allowable, result.n_failed, cfg)
    return DesignEvaluation(
        frame_count=state.n_used,
        failed_count=result.n_failed,
        max_deflection=result.max_deflection,
        allowable_deflection=allowable,
        utilization_p90=utilization_p90(result),
        inventory_ratio=ratio,
        reward=float(reward),
        n_elements=len(model.elements),
    )


def terminal_reward(state, scenario, cfg=None, structure=None):
    """终止奖励（需全部目标已连通）"""
    return evaluate_design(state, scenario, cfg, structure).reward


def step(state, action, scenario, cfg=None, structure=None, mask=None):
    """
    执行一个动作

    放置：更新网格与库存，奖励 = 过程系数 × 连通比例；若新状态没有任何可行动作则截断、奖励为0。
    终止：奖励为终止奖励；有限元分析奇异时按截断处理、奖励为0。

    Args:
        state: 当前状态
        action: Action
        scenario: 场景
        cfg: RewardConfig
        mask: 可选，已计算的当前状态可行掩码

    Returns:
        StepOutcome: 转移结果
    """
    cfg = cfg or RewardConfig()
    if mask is None:
        mask = feasible_actions(state, scenario)
    index = action_to_index(action, scenario)
    if not mask[index]:
        raise InfeasibleActionError(f"动作不可行: {action}（索引{index}）")

    if action.terminate:
        try:
            evaluation = evaluate_design(state, scenario, cfg, structure)
        except AnalysisError as e:
            logger.warning("终止设计分析失败，按截断处理: %s", e)
            return StepOutcome(state.finished(truncated=True), 0.0, False, True)
        return StepOutcome(state.finished(terminated=True), evaluation.reward, True, False, evaluation)

    next_state = state.with_frame(action.frame_code, action.cell)
    if not feasible_actions(next_state, scenario).any():
        return StepOutcome(next_state.finished(truncated=True), 0.0, False, True)
    reward = cfg.interim_coefficient * connected_fraction(next_state, scenario)
    return StepOutcome(next_state, reward, False, False)


@dataclass
class EpisodeTrace:
    """回合轨迹：依次记录 (状态张量, 动作索引, 奖励)"""
    scenario_name: str = ""
    steps: List[dict] = field(default_factory=list)
    terminated: bool = False
    truncated: bool = False

    def record(self, tensor, index, reward):
        self.steps.append({'state': np.asarray(tensor).tolist(), 'action': int(index), 'reward': float(reward)})

    @property
    def total_reward(self):
        return sum(s['reward'] for s in self.steps)

    def to_dict(self):
        return {'scenario': self.scenario_name, 'terminated': self.terminated,
                'truncated': self.truncated, 'steps': self.steps}


def write_traces(traces, path):
    """按行写出回合轨迹（JSON Lines）"""
    with open(path, 'w', encoding='utf-8') as f:
        for trace in traces:
            f.write(json.dumps(trace.to_dict(), ensure_ascii=False) + '\n')


def read_traces(path):
    traces = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                data = json.loads(line)
                traces.append(EpisodeTrace(data.get('scenario', ''), data['steps'],
                                           data.get('terminated', False), data.get('truncated', False)))
    return traces


class CantileverEnv:
    """
    扁平动作索引的回合式环境封装

    reset() 返回状态张量；step(index) 返回 (状态张量, 奖励, terminated, truncated, info)。
    单个实例不在多个并发执行者之间共享，随机性全部来自注入的生成器。
    """

    def __init__(self, scenario, rng, reward_config=None, structure=None, n_rand=0, record_trace=False):
        self.scenario = scenario
        self.rng = rng
        self.reward_config = reward_config or RewardConfig()
        self.structure = structure or StructureConfig()
        self.n_rand = n_rand
        self.record_trace = record_trace
        self.state = None
        self.trace = None
        self._mask = None

    @property
    def n_actions(self):
        return action_space_size(self.scenario)

    def observe(self):
        return encode_state(self.state, self.scenario)

    def reset(self, scenario=None):
        if scenario is not None:
            self.scenario = scenario
        self.state = reset(self.scenario, self.rng, self.n_rand)
        self._mask = feasible_actions(self.state, self.scenario)
        self.trace = EpisodeTrace(self.scenario.name) if self.record_trace else None
        return self.observe()

    def action_mask(self):
        return self._mask

    @property
    def done(self):
        return self.state.terminated or self.state.truncated

    def step(self, index):
        if self.state is None or self.done:
            raise InfeasibleActionError("回合已结束，请先调用reset()")
        obs = self.observe()
        action = index_to_action(int(index), self.scenario)
        outcome = step(self.state, action, self.scenario, self.reward_config, self.structure, self._mask)
        self.state = outcome.next_state
        self._mask = feasible_actions(self.state, self.scenario)
        if self.trace is not None:
            self.trace.record(obs, index, outcome.reward)
            self.trace.terminated = outcome.terminated
            self.trace.truncated = outcome.truncated
        info = {'evaluation': outcome.evaluation, 'action': action}
        return self.observe(), outcome.reward, outcome.terminated, outcome.truncated, info
