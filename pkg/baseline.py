#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
基线生成模块
由随机曼哈顿路径出发，随机扩展并随机分配框架类型，生成对照用的可行设计
"""

import logging
from collections import deque

import numpy as np
from tqdm import tqdm

from config import BaselineConfig
from exceptions import GenerationError
from env import EpisodeTrace, step
from grid import action_to_index, connected_fraction, encode_state, frontier_mask
from models import EMPTY, SUPPORT, Action, GridState, neighbors4

logger = logging.getLogger(__name__)

# 类型分配前的占位取值
_FREE = SUPPORT + 1


def manhattan_path(start, end, rng):
    """
    单调曼哈顿路径（含起点与终点）

    行、列方向的移动顺序在所有单调交错方式中均匀随机选取。

    Args:
        start: 起点单元 (row, col)
        end: 终点单元
        rng: numpy随机数生成器

    Returns:
        list: 按顺序排列的单元列表，长度 |Δrow| + |Δcol| + 1
    """
    di = end[0] - start[0]
    dj = end[1] - start[1]
    moves = [(int(np.sign(di)), 0)] * abs(di) + [(0, int(np.sign(dj)))] * abs(dj)
    order = rng.permutation(len(moves)) if moves else []
    path = [tuple(start)]
    i, j = start
    for k in order:
        i, j = i + moves[k][0], j + moves[k][1]
        path.append((i, j))
    return path


def _termini(target, scenario, rng):
    """目标标记旁的可占用单元，按到支座的曼哈顿距离由近到远排列（并列时随机）"""
    marker_cells = set(scenario.target_cells)
    options = [n for n in neighbors4(target, scenario.height, scenario.width) if n not in marker_cells]
    si, sj = scenario.support
    ties = rng.random(len(options))
    keyed = sorted(zip(options, ties), key=lambda item: (abs(item[0][0] - si) + abs(item[0][1] - sj), item[1]))
    return [cell for cell, _ in keyed]


def _target_path(target, scenario, rng):
    """
    支座到目标标记旁的一条路径，不经过任何荷载标记

    先取最近的终点；路径穿过其他标记时依次改用更远的终点。
    """
    marker_cells = set(scenario.target_cells)
    for end in _termini(target, scenario, rng):
        path = manhattan_path(scenario.support, end, rng)
        if not marker_cells.intersection(path):
            return path
    return None


def _attempt(scenario, rng, config):
    design = GridState.initial(scenario).design.copy()

    # 1) 每个目标一条随机曼哈顿路径
    for target in scenario.target_cells:
        path = _target_path(target, scenario, rng)
        if path is None:
            return None
        for cell in path:
            if design[cell] == EMPTY:
                design[cell] = _FREE

    # 2) 随机扩展：当前设计的每个空邻居以p_expand的概率加入
    for _ in range(config.expansion_passes):
        probe = GridState(design, scenario.inventory)
        frontier = sorted(zip(*np.nonzero(frontier_mask(probe))))
        for cell in frontier:
            if rng.random() < config.p_expand:
                design[cell] = _FREE

    # 3) 随机分配类型，受剩余库存约束
    remaining = dict(scenario.inventory)
    for cell in sorted(zip(*np.nonzero(design >= _FREE))):
        stocked = [code for code in scenario.frame_codes if remaining[code] > 0]
        if not stocked:
            return None
        code = stocked[int(rng.integers(len(stocked)))]
        design[cell] = code
        remaining[code] -= 1

    state = GridState(design, remaining, int(np.count_nonzero(design >= _FREE)))
    if connected_fraction(state, scenario) < 1.0:
        return None
    return state


def generate_baseline(scenario, rng, config=None):
    """
    生成一个基线设计：路径 -> 扩展 -> 类型分配

    库存不足或存在未连通目标时重试，超过max_retries后抛出GenerationError。

    Returns:
        GridState: 连通全部目标的完整设计
    """
    config = config or BaselineConfig()
    for attempt in range(1, config.max_retries + 1):
        state = _attempt(scenario, rng, config)
        if state is not None:
            if attempt > 1:
                logger.debug("基线设计在第%d次尝试时生成成功", attempt)
            return state
    raise GenerationError(f"基线生成在{config.max_retries}次重试后仍失败，场景对基线不可行: {scenario.name}")


def generate_batch(scenario, rng, n, config=None, progress=False):
    """批量生成n个基线设计"""
    iterator = range(n)
    if progress:
        iterator = tqdm(iterator, desc="生成基线设计")
    return [generate_baseline(scenario, rng, config) for _ in iterator]


def placement_order(state, scenario):
    """按从支座出发的广度优先顺序列出已放置的框架，保证逐个放置时始终连通"""
    seen = {scenario.support}
    queue = deque([scenario.support])
    order = []
    while queue:
        cell = queue.popleft()
        for nb in neighbors4(cell, scenario.height, scenario.width):
            if nb not in seen and state.design[nb] > SUPPORT:
                seen.add(nb)
                queue.append(nb)
                order.append((int(state.design[nb]), nb))
    return order


def replay_design(state, scenario, reward_config=None, structure=None):
    """
    把完整设计还原为一条回合轨迹：按广度优先顺序逐个放置，最后终止

    每一步都经过环境的可行性检查，因此可用来验证设计满足终止掩码。

    Returns:
        EpisodeTrace: 回合轨迹
    """
    current = GridState.initial(scenario)
    trace = EpisodeTrace(scenario.name)
    actions = [Action.place(code, *cell) for code, cell in placement_order(state, scenario)] + [Action.stop()]
    for action in actions:
        outcome = step(current, action, scenario, reward_config, structure)
        trace.record(encode_state(current, scenario), action_to_index(action, scenario), outcome.reward)
        current = outcome.next_state
        if outcome.truncated:
            break
    trace.terminated = current.terminated
    trace.truncated = current.truncated
    return trace
