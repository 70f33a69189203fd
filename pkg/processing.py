#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
批量分析模块
对一批设计逐个建立有限元模型并分析，串行或多进程执行，记录每个设计的分析结果
"""

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor

from tqdm import tqdm

from config import RewardConfig, StructureConfig
from env import cantilever_length, evaluate_design
from exceptions import AnalysisError, ModelError
from models import DesignEvaluation
from structure import build_fe_model

logger = logging.getLogger(__name__)


def worst_case_evaluation(state, scenario, reward_config=None, structure=None):
    """
    分析失败时的最坏情况评价：全部单元计为失效、不满足挠度限值、奖励为0

    无法建模时按每个框架5根杆件估计单元数。
    """
    reward_config = reward_config or RewardConfig()
    try:
        n_elements = len(build_fe_model(state, scenario, structure or StructureConfig(),
                                        allow_partial=True).elements)
    except ModelError:
        n_elements = 5 * (state.n_used + 1)
    total = scenario.total_inventory
    return DesignEvaluation(
        frame_count=state.n_used,
        failed_count=n_elements,
        max_deflection=float('inf'),
        allowable_deflection=reward_config.deflection_ratio * cantilever_length(scenario),
        utilization_p90=float('nan'),
        inventory_ratio=state.n_used / total if total else 0.0,
        reward=0.0,
        n_elements=n_elements,
        analysis_ok=False,
    )


def analyze_one(task):
    """
    分析单个设计（可在子进程中执行）

    Args:
        task: (序号, 状态, 场景, 奖励配置, 结构配置)

    Returns:
        dict: 包含step、operation、params、success、message、evaluation字段的结果
    """
    index, state, scenario, reward_config, structure = task
    params = {'frame_count': state.n_used}
    try:
        evaluation = evaluate_design(state, scenario, reward_config, structure)
        message = (f"设计{index}: 结构分析 执行成功 - 框架{evaluation.frame_count}个，"
                   f"失效单元{evaluation.failed_count}个，最大位移{evaluation.max_deflection:.4e} m")
        success = True
    except (AnalysisError, ModelError) as e:
        evaluation = worst_case_evaluation(state, scenario, reward_config, structure)
        message = f"设计{index}: 结构分析 执行失败: {e.category}: {e}"
        success = False
    return {
        'step': index,
        'operation': 'analyze_design',
        'params': params,
        'success': success,
        'message': message,
        'evaluation': evaluation,
    }


class BatchAnalyzer:
    """
    批量结构分析

    workers为1时串行执行；大于1时用进程池并行分析，结果按输入顺序返回。
    """

    def __init__(self, scenario, reward_config=None, structure=None, workers=1, progress=False):
        self.scenario = scenario
        self.reward_config = reward_config or RewardConfig()
        self.structure = structure or StructureConfig()
        self.workers = max(int(workers), 1)
        self.progress = progress
        self.step_results = []

    def run(self, states):
        """
        分析全部设计

        Args:
            states: GridState列表

        Returns:
            list: 每个设计的结果字典（顺序与输入一致）
        """
        self.step_results = []
        tasks = [(i, s, self.scenario, self.reward_config, self.structure) for i, s in enumerate(states, 1)]
        if not tasks:
            return self.step_results

        try:
            if self.workers == 1 or len(tasks) == 1:
                iterator = map(analyze_one, tasks)
                self.step_results = list(tqdm(iterator, total=len(tasks), desc="结构分析", disable=not self.progress))
            else:
                chunksize = max(len(tasks) // (4 * self.workers), 1)
                with ProcessPoolExecutor(max_workers=self.workers) as pool:
                    iterator = pool.map(analyze_one, tasks, chunksize=chunksize)
                    self.step_results = list(tqdm(iterator, total=len(tasks), desc="结构分析",
                                                  disable=not self.progress))
        except Exception as e:
            logger.error("批量分析中断: %s\n%s", e, traceback.format_exc())
            raise

        n_failed = sum(1 for r in self.step_results if not r['success'])
        if n_failed:
            logger.warning("%d/%d 个设计的结构分析失败，已按最坏情况计入", n_failed, len(tasks))
        logger.info("批量分析完成: %d 个设计", len(tasks))
        return self.step_results

    def evaluations(self, states):
        return [r['evaluation'] for r in self.run(states)]
