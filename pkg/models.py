#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
模型类模块
提供框架类型、设计场景、网格状态、动作等数据模型的定义
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np

from exceptions import ScenarioError, StateError

Cell = Tuple[int, int]

# 网格单元取值（状态网格编码）
LOAD_MARKER = -1
EMPTY = 0
SUPPORT = 1
LIGHT = 2
MEDIUM = 3


@dataclass(frozen=True)
class FrameType:
    """模块化桁架框架类型（截面几何与每节点自重）"""
    code: int
    name: str
    outer_radius: float
    thickness_ratio: float
    self_load_per_node: float

    def __post_init__(self):
        if self.code < 2:
            raise ScenarioError(f"框架类型编码必须不小于2: {self.code}")
        if self.outer_radius <= 0:
            raise ScenarioError(f"外半径必须大于0: {self.outer_radius}")
        if not 0 < self.thickness_ratio < 1:
            raise ScenarioError(f"壁厚比必须在(0, 1)之间: {self.thickness_ratio}")
        if self.self_load_per_node < 0:
            raise ScenarioError(f"节点自重不能为负: {self.self_load_per_node}")


FRAME_TYPES: Dict[int, FrameType] = {
    LIGHT: FrameType(LIGHT, 'light', 0.10, 0.10, 4.0),
    MEDIUM: FrameType(MEDIUM, 'medium', 0.20, 0.10, 6.0),
}


def register_frame_type(frame):
    """
    注册新的框架类型

    Args:
        frame: FrameType实例，编码不能与已有类型重复

    Returns:
        FrameType: 注册的类型
    """
    if frame.code in FRAME_TYPES or frame.code in (LOAD_MARKER, EMPTY, SUPPORT):
        raise ScenarioError(f"框架类型编码已被占用: {frame.code}")
    if any(f.name == frame.name for f in FRAME_TYPES.values()):
        raise ScenarioError(f"框架类型名称已被占用: {frame.name}")
    FRAME_TYPES[frame.code] = frame
    return frame


def get_frame_type(code):
    try:
        return FRAME_TYPES[code]
    except KeyError:
        raise ScenarioError(f"未知的框架类型编码: {code}") from None


def frame_type_by_name(name):
    for frame in FRAME_TYPES.values():
        if frame.name == name:
            return frame
    raise ScenarioError(f"未知的框架类型名称: {name}")


@dataclass(frozen=True)
class Target:
    """目标位置（荷载标记单元）及其外荷载，荷载为0表示仅需到达"""
    cell: Cell
    load_kn: float = 0.0


@dataclass(frozen=True)
class Scenario:
    """
    设计场景：网格尺寸、支座位置、目标与荷载、库存

    inventory为 框架编码 -> 数量。inventory_rows为None时库存行数
    按 ceil(总库存 / 宽度) 计算；指定时固定行数，便于不同场景共享网络输入形状。
    """
    height: int
    width: int
    support: Cell
    targets: Tuple[Target, ...]
    inventory: Mapping[int, int]
    module_size: float = 1.0
    include_inventory_rows: bool = True
    inventory_rows: Optional[int] = None
    self_load_only: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, 'support', tuple(int(v) for v in self.support))
        targets = tuple(t if isinstance(t, Target) else Target(*t) for t in self.targets)
        object.__setattr__(self, 'targets', tuple(
            Target(tuple(int(v) for v in t.cell), float(t.load_kn)) for t in targets))
        object.__setattr__(self, 'inventory', {int(k): int(v) for k, v in sorted(self.inventory.items())})
        self._validate()

    def _validate(self):
        if self.height <= 0 or self.width <= 0:
            raise ScenarioError(f"网格尺寸必须为正: {self.height}x{self.width}")
        if not self.in_grid(self.support):
            raise ScenarioError(f"支座位置超出网格: {self.support}")
        if not self.targets:
            raise ScenarioError("至少需要一个目标位置")
        seen = set()
        for target in self.targets:
            if not self.in_grid(target.cell):
                raise ScenarioError(f"目标位置超出网格: {target.cell}")
            if target.cell == self.support:
                raise ScenarioError(f"目标位置不能与支座重合: {target.cell}")
            if target.cell in seen:
                raise ScenarioError(f"目标位置重复: {target.cell}")
            if not math.isfinite(target.load_kn) or target.load_kn < 0:
                raise ScenarioError(f"外荷载必须为非负有限值: {target.load_kn}")
            seen.add(target.cell)
        if not self.self_load_only and not any(t.load_kn > 0 for t in self.targets):
            raise ScenarioError("每个场景至少需要一个外荷载大于0的目标")
        if not self.inventory:
            raise ScenarioError("库存不能为空")
        for code, count in self.inventory.items():
            get_frame_type(code)
            if count < 0:
                raise ScenarioError(f"库存数量不能为负: {code} -> {count}")
        if self.module_size <= 0:
            raise ScenarioError(f"模块尺寸必须为正: {self.module_size}")
        if self.inventory_rows is not None and self.inventory_rows < 0:
            raise ScenarioError(f"库存行数不能为负: {self.inventory_rows}")

    def in_grid(self, cell):
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    @property
    def frame_codes(self):
        """场景使用的框架编码（升序），其序号即动作编码中的类型序号"""
        return tuple(sorted(self.inventory))

    @property
    def n_types(self):
        return len(self.inventory)

    @property
    def total_inventory(self):
        return sum(self.inventory.values())

    @property
    def target_cells(self):
        return tuple(t.cell for t in self.targets)

    @property
    def loaded_targets(self):
        return tuple(t for t in self.targets if t.load_kn > 0)

    @property
    def inventory_row_count(self):
        if not self.include_inventory_rows:
            return 0
        if self.inventory_rows is not None:
            return self.inventory_rows
        return math.ceil(self.total_inventory / self.width)

    @property
    def tensor_shape(self):
        return (self.inventory_row_count + self.height, self.width)

    @property
    def max_cell_value(self):
        """状态张量中可能出现的最大取值（最后一种库存槽编码）"""
        codes = self.frame_codes
        if not self.include_inventory_rows:
            return codes[-1]
        return self.inventory_value(codes[-1])

    def inventory_value(self, code):
        """库存槽取值：最大框架编码之后依次编号（两种类型时为4、5）"""
        codes = self.frame_codes
        return codes[-1] + 1 + codes.index(code)

    def type_ordinal(self, code):
        try:
            return self.frame_codes.index(code)
        except ValueError:
            raise ScenarioError(f"场景中不存在框架类型: {code}") from None

    def to_dict(self):
        data = {
            'name': self.name,
            'grid': {'height': self.height, 'width': self.width},
            'support': list(self.support),
            'targets': [{'cell': list(t.cell), 'load_kN': t.load_kn} for t in self.targets],
            'inventory': {get_frame_type(code).name: count for code, count in self.inventory.items()},
            'module_size_m': self.module_size,
            'include_inventory_rows': self.include_inventory_rows,
        }
        if self.inventory_rows is not None:
            data['inventory_rows'] = self.inventory_rows
        if self.self_load_only:
            data['self_load_only'] = True
        return data

    @classmethod
    def from_dict(cls, data):
        """从JSON字典构建场景，键名见场景文件格式"""
        try:
            grid = data['grid']
            inventory = {}
            for key, count in data['inventory'].items():
                code = int(key) if str(key).lstrip('-').isdigit() else frame_type_by_name(key).code
                inventory[code] = int(count)
            return cls(
                height=int(grid['height']),
                width=int(grid['width']),
                support=tuple(data['support']),
                targets=tuple(Target(tuple(t['cell']), float(t.get('load_kN', 0.0)))
                              for t in data['targets']),
                inventory=inventory,
                module_size=float(data.get('module_size_m', 1.0)),
                include_inventory_rows=bool(data.get('include_inventory_rows', True)),
                inventory_rows=data.get('inventory_rows'),
                self_load_only=bool(data.get('self_load_only', False)),
                name=str(data.get('name', '')),
            )
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"场景文件格式不正确: 缺少或错误的字段 {e}") from e


def load_scenario(path):
    """
    读取场景JSON文件

    Args:
        path: 场景文件路径

    Returns:
        Scenario: 场景对象
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"场景文件不是有效的JSON格式: {path}") from e
    scenario = Scenario.from_dict(data)
    if not scenario.name:
        scenario = replace(scenario, name=path.stem)
    return scenario


def save_scenario(scenario, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(scenario.to_dict(), f, ensure_ascii=False, indent=4)


@dataclass(frozen=True, eq=False)
class GridState:
    """
    MDP状态：设计网格 + 剩余库存

    design为H×W整数网格（-1荷载标记、0空、1支座、>=2框架），只读。
    """
    design: np.ndarray
    remaining: Mapping[int, int]
    step_count: int = 0
    terminated: bool = False
    truncated: bool = False

    def __post_init__(self):
        design = np.array(self.design, dtype=np.int8)
        design.flags.writeable = False
        object.__setattr__(self, 'design', design)
        object.__setattr__(self, 'remaining', {int(k): int(v) for k, v in sorted(self.remaining.items())})

    @classmethod
    def initial(cls, scenario):
        """初始状态：仅放置支座框架，库存满"""
        design = np.zeros((scenario.height, scenario.width), dtype=np.int8)
        for cell in scenario.target_cells:
            design[cell] = LOAD_MARKER
        design[scenario.support] = SUPPORT
        return cls(design, dict(scenario.inventory))

    @property
    def n_used(self):
        """已放置的自由框架数量（不含支座）"""
        return int(np.count_nonzero(self.design >= LIGHT))

    @property
    def frame_count(self):
        return self.n_used

    def with_frame(self, code, cell):
        """返回放置一个框架后的新状态（不做可行性检查）"""
        design = self.design.copy()
        design[cell] = code
        remaining = dict(self.remaining)
        remaining[code] = remaining.get(code, 0) - 1
        return GridState(design, remaining, self.step_count + 1)

    def finished(self, terminated=False, truncated=False):
        return replace(self, terminated=terminated, truncated=truncated)

    def __eq__(self, other):
        if not isinstance(other, GridState):
            return NotImplemented
        return (np.array_equal(self.design, other.design)
                and self.remaining == other.remaining
                and self.step_count == other.step_count
                and self.terminated == other.terminated
                and self.truncated == other.truncated)

    def __hash__(self):
        return hash((self.design.tobytes(), self.design.shape, tuple(self.remaining.items()), self.step_count))

    def to_dict(self):
        return {
            'design': self.design.tolist(),
            'remaining': {str(k): v for k, v in self.remaining.items()},
            'step_count': self.step_count,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(np.array(data['design'], dtype=np.int8),
                   {int(k): int(v) for k, v in data['remaining'].items()},
                   int(data.get('step_count', 0)))


def validate_state(state, scenario):
    """
    检查网格状态的全部不变量，不满足时抛出StateError

    Args:
        state: GridState
        scenario: 对应的场景
    """
    design = state.design
    if design.shape != (scenario.height, scenario.width):
        raise StateError(f"网格尺寸不符: {design.shape}")
    if int(np.count_nonzero(design == SUPPORT)) != 1 or design[scenario.support] != SUPPORT:
        raise StateError("支座框架必须恰好一个且位于支座位置")
    for cell in scenario.target_cells:
        if design[cell] != LOAD_MARKER:
            raise StateError(f"荷载标记单元被占用: {cell}")
    if int(np.count_nonzero(design == LOAD_MARKER)) != len(scenario.targets):
        raise StateError("荷载标记数量与目标数量不符")
    for code, total in scenario.inventory.items():
        placed = int(np.count_nonzero(design == code))
        left = state.remaining.get(code, 0)
        if left < 0:
            raise StateError(f"库存为负: {code} -> {left}")
        if placed + left != total:
            raise StateError(f"库存守恒不成立: 类型{code} 已用{placed} + 剩余{left} != {total}")
    unknown = set(np.unique(design[design >= LIGHT]).tolist()) - set(scenario.inventory)
    if unknown:
        raise StateError(f"网格中存在场景外的框架类型: {sorted(unknown)}")

    from grid import support_component
    occupied = design >= SUPPORT
    if int(np.count_nonzero(occupied & ~support_component(state, scenario))):
        raise StateError("已占用单元不是包含支座的单一4连通分量")


@dataclass(frozen=True)
class Action:
    """动作 (e, k, i, j)：e=1时终止，其余字段被忽略"""
    terminate: bool
    frame_code: int = 0
    row: int = 0
    col: int = 0

    @classmethod
    def stop(cls):
        return cls(True)

    @classmethod
    def place(cls, frame_code, row, col):
        return cls(False, int(frame_code), int(row), int(col))

    @property
    def cell(self):
        return (self.row, self.col)

    def __str__(self):
        if self.terminate:
            return "终止"
        return f"放置 {get_frame_type(self.frame_code).name} @ ({self.row}, {self.col})"


@dataclass(frozen=True)
class DesignEvaluation:
    """终止设计的结构评价结果"""
    frame_count: int
    failed_count: int
    max_deflection: float
    allowable_deflection: float
    utilization_p90: float
    inventory_ratio: float
    reward: float
    n_elements: int = 0
    analysis_ok: bool = True

    @property
    def within_deflection(self):
        return self.analysis_ok and self.max_deflection < self.allowable_deflection

    @property
    def high_performing(self):
        return is_high_performing(self.frame_count, self.failed_count)


def is_high_performing(frame_count, failed_count):
    """高性能设计筛选：框架数 < 20 且失效单元数 < 3"""
    return frame_count < 20 and failed_count < 3


@dataclass(frozen=True)
class StepOutcome:
    """一步转移的结果"""
    next_state: GridState
    reward: float
    terminated: bool
    truncated: bool
    evaluation: Optional[DesignEvaluation] = None

    def __post_init__(self):
        if self.terminated and self.truncated:
            raise StateError("terminated与truncated不能同时为真")
        if not math.isfinite(self.reward):
            raise StateError(f"奖励必须为有限值: {self.reward}")


@dataclass
class DesignRecord:
    """设计记录：状态 + 评价 + 来源标签，用于设计空间导出"""
    state: GridState
    evaluation: Optional[DesignEvaluation] = None
    label: str = ""
    snapshot: Optional[int] = None
    extra: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricsSummary:
    """一组设计的五项对比指标"""
    n_designs: int
    avg_failed_elements: float
    avg_frame_count: float
    utilization_p90: float
    pct_without_failures: float
    pct_within_allowable_deflection: float
    high_performing_count: int
    n_analysis_failures: int = 0
    label: str = ""

    def __post_init__(self):
        for pct in (self.pct_without_failures, self.pct_within_allowable_deflection):
            if not (math.isnan(pct) or 0.0 <= pct <= 100.0):
                raise ValueError(f"百分比必须在[0, 100]之间: {pct}")
        if self.high_performing_count > self.n_designs:
            raise ValueError("高性能设计数不能超过设计总数")

    @property
    def high_performing_pct(self):
        if not self.n_designs:
            return float('nan')
        return 100.0 * self.high_performing_count / self.n_designs


def neighbors4(cell, height, width) -> Iterator[Cell]:
    """网格内的4邻域单元，顺序为 下、左、右、上"""
    i, j = cell
    for di, dj in ((1, 0), (0, -1), (0, 1), (-1, 0)):
        ni, nj = i + di, j + dj
        if 0 <= ni < height and 0 <= nj < width:
            yield ni, nj


def load_designs(path) -> Sequence[DesignRecord]:
    """读取JSONL设计文件（每行一个设计）"""
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise ScenarioError(f"设计文件第{line_no}行不是有效的JSON") from e
            records.append(DesignRecord(GridState.from_dict(data), label=data.get('label', ''),
                                        snapshot=data.get('snapshot')))
    return records


def save_designs(records, path):
    """写出JSONL设计文件"""
    with open(path, 'w', encoding='utf-8') as f:
        for record in records:
            data = record.state.to_dict()
            if record.label:
                data['label'] = record.label
            if record.snapshot is not None:
                data['snapshot'] = record.snapshot
            f.write(json.dumps(data, ensure_ascii=False) + '\n')
