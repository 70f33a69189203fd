#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
结构分析核心模块
提供二维刚架的直接刚度法线弹性静力分析
"""

import logging
from dataclasses import dataclass
from typing import FrozenSet

import numpy as np
from scipy import linalg

from exceptions import AnalysisError, InputError, SingularModelError

logger = logging.getLogger(__name__)

DOF_PER_NODE = 3
# Cholesky主元平方的最小/最大比值低于该阈值视为奇异
PIVOT_RATIO_TOL = 1e-12


@dataclass(frozen=True)
class FEAResult:
    """
    分析结果

    displacements: (n_nodes, 3) 节点位移 (ux, uy, θ)，单位 m / m / rad
    max_deflection: 自由节点最大位移 √(ux²+uy²)
    axial_stress: 单元轴向应力 MPa，受拉为正
    utilization: 单元利用率 |σ| / f_y
    failed_elements: 利用率 > 1 的单元编号
    reactions: (n_nodes, 3) 节点反力，自由节点为0
    """
    displacements: np.ndarray
    max_deflection: float
    axial_stress: np.ndarray
    utilization: np.ndarray
    failed_elements: FrozenSet[int]
    reactions: np.ndarray

    @property
    def n_failed(self):
        return len(self.failed_elements)


def _geometry(p_a, p_b):
    dx, dy = np.asarray(p_b, dtype=float) - np.asarray(p_a, dtype=float)
    length = float(np.hypot(dx, dy))
    if length <= 0.0:
        raise AnalysisError("单元长度为0")
    return length, dx / length, dy / length


def element_stiffness(p_a, p_b, section, material):
    """
    欧拉-伯努利二维刚架单元刚度矩阵（整体坐标）

    Args:
        p_a, p_b: 单元两端节点坐标
        section: SectionProperties
        material: Material

    Returns:
        np.ndarray: 6×6 刚度矩阵，自由度顺序 (ux_a, uy_a, θ_a, ux_b, uy_b, θ_b)
    """
    length, c, s = _geometry(p_a, p_b)
    e = material.youngs_modulus
    ea = e * section.area / length
    ei = e * section.moment_of_inertia
    k1 = 12.0 * ei / length ** 3
    k2 = 6.0 * ei / length ** 2
    k3 = 4.0 * ei / length
    k4 = 2.0 * ei / length
    local = np.array([
        [ea, 0.0, 0.0, -ea, 0.0, 0.0],
        [0.0, k1, k2, 0.0, -k1, k2],
        [0.0, k2, k3, 0.0, -k2, k4],
        [-ea, 0.0, 0.0, ea, 0.0, 0.0],
        [0.0, -k1, -k2, 0.0, k1, -k2],
        [0.0, k2, k4, 0.0, -k2, k3],
    ])
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    t = np.zeros((6, 6))
    t[:3, :3] = rot
    t[3:, 3:] = rot
    return t.T @ local @ t


def _element_dofs(element):
    a, b = element.node_a, element.node_b
    return np.array([3 * a, 3 * a + 1, 3 * a + 2, 3 * b, 3 * b + 1, 3 * b + 2])


def assemble_stiffness(model):
    """组装整体刚度矩阵（稠密）"""
    n_dof = DOF_PER_NODE * model.n_nodes
    k = np.zeros((n_dof, n_dof))
    for element in model.elements:
        dofs = _element_dofs(element)
        ke = element_stiffness(model.nodes[element.node_a], model.nodes[element.node_b],
                               element.section, element.material)
        k[np.ix_(dofs, dofs)] += ke
    return k


def load_vector(model, nodal_loads=None):
    nodal_loads = model.nodal_loads if nodal_loads is None else nodal_loads
    f = np.zeros(DOF_PER_NODE * model.n_nodes)
    for nid, (fx, fy) in nodal_loads.items():
        if not (np.isfinite(fx) and np.isfinite(fy)):
            raise InputError(f"节点 {nid} 的荷载不是有限值: ({fx}, {fy})")
        f[3 * nid] += fx
        f[3 * nid + 1] += fy
    return f


def solve_static(model, nodal_loads=None):
    """
    线弹性静力分析

    组装整体刚度矩阵，消去固定自由度，对 K_ff u_f = f_f 做Cholesky分解求解，
    再由单元轴向伸长计算轴向应力。

    Args:
        model: FEModel
        nodal_loads: 可选，替代模型自带荷载的 {节点: (Fx, Fy)}

    Returns:
        FEAResult: 分析结果
    """
    if not model.elements:
        raise AnalysisError("模型中没有单元")
    f = load_vector(model, nodal_loads)
    n_dof = f.size
    if not model.fixed_nodes:
        raise SingularModelError("模型没有固定节点，存在刚体位移")
    fixed = np.zeros(n_dof, dtype=bool)
    for nid in model.fixed_nodes:
        if not 0 <= nid < model.n_nodes:
            raise AnalysisError(f"固定节点编号无效: {nid}")
        fixed[3 * nid:3 * nid + 3] = True
    free = ~fixed

    k = assemble_stiffness(model)
    u = np.zeros(n_dof)
    if free.any():
        k_ff = k[np.ix_(free, free)]
        try:
            factor = linalg.cho_factor(k_ff, lower=True, check_finite=False)
        except linalg.LinAlgError as e:
            raise SingularModelError("缩减刚度矩阵不正定（机构或悬浮结构）") from e
        pivots = np.diag(factor[0]) ** 2
        if pivots.min() <= PIVOT_RATIO_TOL * pivots.max():
            raise SingularModelError(f"缩减刚度矩阵接近奇异（主元比 {pivots.min() / pivots.max():.3e}）")
        u[free] = linalg.cho_solve(factor, f[free], check_finite=False)
        if not np.all(np.isfinite(u)):
            raise AnalysisError("求解结果出现非有限值（数值溢出）")

    reactions = k @ u - f
    reactions[free] = 0.0

    stress = np.empty(len(model.elements))
    utilization = np.empty(len(model.elements))
    for eid, element in enumerate(model.elements):
        p_a, p_b = model.nodes[element.node_a], model.nodes[element.node_b]
        length, c, s = _geometry(p_a, p_b)
        ua = u[3 * element.node_a:3 * element.node_a + 2]
        ub = u[3 * element.node_b:3 * element.node_b + 2]
        elongation = (ub[0] - ua[0]) * c + (ub[1] - ua[1]) * s
        sigma = element.material.youngs_modulus * elongation / length
        stress[eid] = sigma / 1000.0
        utilization[eid] = abs(sigma) / element.material.yield_strength

    disp = u.reshape(-1, DOF_PER_NODE)
    free_nodes = np.ones(model.n_nodes, dtype=bool)
    free_nodes[list(model.fixed_nodes)] = False
    if free_nodes.any():
        max_deflection = float(np.max(np.hypot(disp[free_nodes, 0], disp[free_nodes, 1])))
    else:
        max_deflection = 0.0

    failed = frozenset(int(e) for e in np.flatnonzero(utilization > 1.0))
    logger.debug("分析完成: 节点%d 单元%d 最大位移%.4e m 失效单元%d",
                 model.n_nodes, len(model.elements), max_deflection, len(failed))
    return FEAResult(disp, max_deflection, stress, utilization, failed,
                     reactions.reshape(-1, DOF_PER_NODE))


def utilization_p90(result):
    """
    单元利用率的90百分位（最近秩法：升序排序后取第 ceil(0.9n) 个）
    """
    values = np.sort(np.asarray(result.utilization if hasattr(result, 'utilization') else result, dtype=float))
    n = values.size
    if n == 0:
        raise AnalysisError("没有单元，无法计算利用率百分位")
    rank = (9 * n + 9) // 10
    return float(values[rank - 1])
