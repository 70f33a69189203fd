#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
网格核心模块
提供状态张量编码、动作扁平索引编解码以及网格连通性查询
"""

import numpy as np
from scipy import ndimage

from exceptions import ActionDecodeError, EncodingError, ScenarioError
from models import Action, EMPTY, LOAD_MARKER, SUPPORT, neighbors4

# 4邻接结构元（共边相邻）
FOUR_CONNECTIVITY = ndimage.generate_binary_structure(2, 1)


def encode_state(state, scenario):
    """
    将网格状态编码为整数矩阵

    库存行位于设计网格之上，按行优先依次填入各类型剩余数量的库存槽取值，
    其余为0；目标单元为-1。

    Args:
        state: GridState
        scenario: 场景

    Returns:
        np.ndarray: 形状为 (H_inv + H, W) 的int64矩阵
    """
    design = np.array(state.design, dtype=np.int64)
    for cell in scenario.target_cells:
        design[cell] = LOAD_MARKER
    if not scenario.include_inventory_rows:
        return design
    n_rows = scenario.inventory_row_count

    capacity = n_rows * scenario.width
    remaining_total = sum(max(state.remaining.get(code, 0), 0) for code in scenario.frame_codes)
    if remaining_total > capacity:
        raise EncodingError(f"剩余库存{remaining_total}超出库存行容量{capacity}（{n_rows}行 x {scenario.width}列）")

    slots = np.zeros(capacity, dtype=np.int64)
    offset = 0
    for code in scenario.frame_codes:
        count = max(state.remaining.get(code, 0), 0)
        slots[offset:offset + count] = scenario.inventory_value(code)
        offset += count
    return np.vstack([slots.reshape(n_rows, scenario.width), design])


def action_space_size(scenario):
    return 1 + scenario.n_types * scenario.height * scenario.width


def action_to_index(action, scenario):
    """
    动作 -> 扁平索引

    索引0为终止；1 + t*H*W + i*W + j 为在(i, j)放置第t种类型。
    """
    if action.terminate:
        return 0
    if not scenario.in_grid(action.cell):
        raise ActionDecodeError(f"动作单元超出设计区域: {action.cell}")
    t = scenario.type_ordinal(action.frame_code)
    h, w = scenario.height, scenario.width
    return 1 + t * h * w + action.row * w + action.col


def index_to_action(index, scenario):
    """扁平索引 -> 动作，越界时抛出ActionDecodeError"""
    size = action_space_size(scenario)
    if not 0 <= index < size:
        raise ActionDecodeError(f"动作索引越界: {index}（动作空间大小{size}）")
    if index == 0:
        return Action.stop()
    hw = scenario.height * scenario.width
    t, rest = divmod(int(index) - 1, hw)
    row, col = divmod(rest, scenario.width)
    return Action.place(scenario.frame_codes[t], row, col)


def support_component(state, scenario):
    """与支座4连通的已占用单元布尔网格"""
    labels, _ = ndimage.label(state.design >= SUPPORT, structure=FOUR_CONNECTIVITY)
    support_label = labels[scenario.support]
    if support_label == 0:
        raise ScenarioError(f"支座位置未被占用: {scenario.support}")
    return labels == support_label


def target_connected(state, scenario, component=None):
    """
    各目标是否已连通

    目标单元本身不可占用，因此判定为：存在与目标4相邻且与支座连通的已占用单元。

    Returns:
        list[bool]: 与scenario.targets顺序一致
    """
    if component is None:
        component = support_component(state, scenario)
    h, w = scenario.height, scenario.width
    return [any(component[n] for n in neighbors4(cell, h, w)) for cell in scenario.target_cells]


def connected_fraction(state, scenario):
    """已连通目标数 / 目标总数"""
    flags = target_connected(state, scenario)
    return sum(flags) / len(flags)


def frontier_mask(state):
    """可放置框架的单元：空单元且4邻接于已占用单元"""
    occupied = state.design >= SUPPORT
    grown = ndimage.binary_dilation(occupied, structure=FOUR_CONNECTIVITY)
    return grown & (state.design == EMPTY)
