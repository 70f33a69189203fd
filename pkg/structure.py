#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
结构模型模块
将网格设计转换为节点去重后的二维刚架有限元模型
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from config import StructureConfig
from exceptions import ModelError
from grid import support_component, target_connected
from models import FRAME_TYPES, LIGHT, SUPPORT, get_frame_type, neighbors4


@dataclass(frozen=True)
class SectionProperties:
    """圆钢管截面：面积 A (m²)、惯性矩 I (m⁴)、外半径、内半径"""
    area: float
    moment_of_inertia: float
    outer_radius: float
    inner_radius: float


@dataclass(frozen=True)
class Material:
    """
    材料常数，单位 kN/m²（与 kN、m 的荷载和长度单位一致）

    默认值：E = 200 GPa, G = 80 GPa, f_y = 350 MPa
    """
    youngs_modulus: float = 200e6
    shear_modulus: float = 80e6
    yield_strength: float = 350e3

    def __post_init__(self):
        if min(self.youngs_modulus, self.shear_modulus, self.yield_strength) <= 0:
            raise ModelError("材料常数必须为正")


STEEL = Material()


def section_properties(frame):
    """
    由外半径R与壁厚比α计算截面特性

    R_inner = (1 - α)R, A = π(R² - R_inner²), I = π/4 (R⁴ - R_inner⁴)
    """
    r = frame.outer_radius
    r_inner = (1.0 - frame.thickness_ratio) * r
    area = math.pi * (r ** 2 - r_inner ** 2)
    inertia = math.pi / 4.0 * (r ** 4 - r_inner ** 4)
    return SectionProperties(area, inertia, r, r_inner)


@dataclass(frozen=True)
class Element:
    """二维刚架单元"""
    node_a: int
    node_b: int
    section: SectionProperties
    material: Material
    frame_code: int
    owner_codes: Tuple[int, ...]


@dataclass
class FEModel:
    """有限元模型：节点坐标、单元、固定节点、节点荷载 (Fx, Fy) kN"""
    nodes: np.ndarray
    elements: List[Element]
    fixed_nodes: Tuple[int, ...]
    nodal_loads: Dict[int, Tuple[float, float]]

    @property
    def n_nodes(self):
        return len(self.nodes)

    def total_load(self):
        if not self.nodal_loads:
            return np.zeros(2)
        return np.sum(np.array(list(self.nodal_loads.values()), dtype=float), axis=0)

    def to_listing(self):
        """纯文本清单：每行一条 NODE / ELEM / FIX / LOAD 记录"""
        lines = []
        for nid, (x, y) in enumerate(self.nodes):
            lines.append(f"NODE {nid} {x:.9g} {y:.9g}")
        for eid, e in enumerate(self.elements):
            lines.append(f"ELEM {eid} {e.node_a} {e.node_b} A={e.section.area:.9g} "
                         f"I={e.section.moment_of_inertia:.9g} E={e.material.youngs_modulus:.9g} "
                         f"type={e.frame_code}")
        for nid in self.fixed_nodes:
            lines.append(f"FIX {nid}")
        for nid in sorted(self.nodal_loads):
            fx, fy = self.nodal_loads[nid]
            lines.append(f"LOAD {nid} {fx:.9g} {fy:.9g}")
        return '\n'.join(lines) + '\n'


def _corner_keys(cell, height):
    """单元四角的格点坐标 (列, 行)，行0为网格顶部，y向上"""
    i, j = cell
    bottom = height - 1 - i
    return {
        'bl': (j, bottom),
        'br': (j + 1, bottom),
        'tl': (j, bottom + 1),
        'tr': (j + 1, bottom + 1),
    }


# 朝向荷载标记单元的边（邻居单元相对于标记单元的方位 -> 该邻居的边）
_FACING_EDGE = {
    (1, 0): ('tl', 'tr'),    # 邻居在标记下方，取其顶边
    (-1, 0): ('bl', 'br'),   # 邻居在标记上方，取其底边
    (0, -1): ('tr', 'br'),   # 邻居在标记左侧，取其右边
    (0, 1): ('tl', 'bl'),    # 邻居在标记右侧，取其左边
}


def _support_code(config):
    if config.support_frame_code is not None:
        return config.support_frame_code
    return max(FRAME_TYPES.values(), key=lambda f: f.outer_radius).code


def build_fe_model(state, scenario, config=None, material=STEEL, allow_partial=False):
    """
    由网格状态构建有限元模型

    每个已占用单元生成边长为module_size的方形模块：4个角节点（与相邻单元共享）、
    4根弦杆和对角斜撑（single为左下-右上，x为双斜撑）。相邻单元重合的弦杆合并为
    一根，取外半径较大的截面。支座单元四角全部固接。自由框架在四角各施加自重，
    外荷载平分到与荷载标记相邻的已占用单元朝向标记的边的两个节点上。

    Args:
        state: GridState
        scenario: 场景
        config: StructureConfig
        material: 材料
        allow_partial: 是否允许分析未连通全部目标的设计

    Returns:
        FEModel: 有限元模型
    """
    config = config or StructureConfig()
    component = support_component(state, scenario)
    if not allow_partial and not all(target_connected(state, scenario, component)):
        raise ModelError("设计未连通全部目标，不能进行分析（如需分析部分设计请指定allow_partial）")

    design = state.design
    h = scenario.height
    s = scenario.module_size
    cells = sorted((int(i), int(j)) for i, j in zip(*np.nonzero(design >= SUPPORT)))
    support_code = _support_code(config)

    keys = sorted({key for cell in cells for key in _corner_keys(cell, h).values()},
                  key=lambda k: (k[1], k[0]))
    node_id = {key: n for n, key in enumerate(keys)}
    nodes = np.array([(col * s, row * s) for col, row in keys], dtype=float).reshape(-1, 2)

    sections = {}

    def section_of(code):
        if code not in sections:
            sections[code] = section_properties(get_frame_type(code))
        return sections[code]

    # 弦杆以无序节点对为键合并，斜撑不与其他单元共享
    chords = {}
    braces = []
    for cell in cells:
        code = int(design[cell])
        frame_code = support_code if code == SUPPORT else code
        c = _corner_keys(cell, h)
        for a, b in (('bl', 'br'), ('br', 'tr'), ('tl', 'tr'), ('bl', 'tl')):
            pair = tuple(sorted((node_id[c[a]], node_id[c[b]])))
            if pair in chords:
                governing, owners = chords[pair]
                if get_frame_type(frame_code).outer_radius > get_frame_type(governing).outer_radius:
                    governing = frame_code
                chords[pair] = (governing, owners + (code,))
            else:
                chords[pair] = (frame_code, (code,))
        braces.append(((node_id[c['bl']], node_id[c['tr']]), frame_code, code))
        if config.bracing == 'x':
            braces.append(((node_id[c['tl']], node_id[c['br']]), frame_code, code))

    elements = [Element(a, b, section_of(code), material, code, tuple(sorted(owners)))
                for (a, b), (code, owners) in sorted(chords.items())]
    elements += [Element(a, b, section_of(code), material, code, (owner,))
                 for (a, b), code, owner in sorted(braces)]

    sc = _corner_keys(scenario.support, h)
    fixed = tuple(sorted(node_id[key] for key in sc.values()))

    loads = {}

    def add_load(nid, fy):
        fx0, fy0 = loads.get(nid, (0.0, 0.0))
        loads[nid] = (fx0, fy0 + fy)

    for cell in cells:
        code = int(design[cell])
        if code < LIGHT:
            continue
        w = get_frame_type(code).self_load_per_node
        if w:
            for key in _corner_keys(cell, h).values():
                add_load(node_id[key], -w)

    for target in scenario.loaded_targets:
        host = _load_host(target.cell, design, component, h, scenario.width)
        if host is None:
            raise ModelError(f"荷载目标 {target.cell} 没有相邻的已占用单元，荷载无法施加")
        di, dj = host[0] - target.cell[0], host[1] - target.cell[1]
        c = _corner_keys(host, h)
        for corner in _FACING_EDGE[(di, dj)]:
            add_load(node_id[c[corner]], -target.load_kn / 2.0)

    return FEModel(nodes, elements, fixed, dict(sorted(loads.items())))


def _load_host(cell, design, component, height, width):
    """荷载附着单元：优先与支座连通的相邻单元，按 下、左、右、上 的顺序"""
    occupied = [n for n in neighbors4(cell, height, width) if design[n] >= SUPPORT]
    for n in occupied:
        if component[n]:
            return n
    return occupied[0] if occupied else None
