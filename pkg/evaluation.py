#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
设计评估模块
汇总对比指标、策略与基线的差值、多场景差值统计、设计向量导出以及训练过程中的设计空间追踪
"""

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from config import RewardConfig, StructureConfig
from env import CantileverEnv
from models import LIGHT, DesignRecord, GridState, MetricsSummary
from grid import encode_state
from policy import forward, greedy_action, masked_sample
from processing import BatchAnalyzer
from trainer import train_phase2
from utils import check_writable, ensure_output_dir

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.10g'
VECTOR_METRICS = ['frame_count', 'failed_count', 'max_deflection', 'reward']

# (字段, 中文名, 差值倍数)；利用率以百分点给出差值
COMPARE_METRICS = [
    ('avg_failed_elements', '平均失效单元数', 1.0),
    ('avg_frame_count', '平均框架数', 1.0),
    ('utilization_p90', '利用率（90百分位）', 100.0),
    ('pct_without_failures', '无失效设计占比 %', 1.0),
    ('pct_within_allowable_deflection', '满足挠度限值占比 %', 1.0),
    ('high_performing_pct', '高性能设计占比 %', 1.0),
]


def _as_records(designs, label=''):
    return [d if isinstance(d, DesignRecord) else DesignRecord(d, label=label) for d in designs]


def evaluate_records(designs, scenario, reward_config=None, structure=None, workers=1, progress=False):
    """为缺少评价结果的设计补做结构分析，返回DesignRecord列表"""
    records = _as_records(designs)
    pending = [r for r in records if r.evaluation is None]
    if pending:
        analyzer = BatchAnalyzer(scenario, reward_config, structure, workers, progress)
        for record, evaluation in zip(pending, analyzer.evaluations([r.state for r in pending])):
            record.evaluation = evaluation
    return records


def summarize(evaluations, label=''):
    """
    由逐设计评价汇总五项指标

    利用率取各设计90百分位利用率的平均；分析失败的设计不计入利用率平均。
    """
    evaluations = list(evaluations)
    n = len(evaluations)
    if n == 0:
        nan = float('nan')
        return MetricsSummary(0, nan, nan, nan, nan, nan, 0, 0, label)
    ok = [e for e in evaluations if e.analysis_ok]
    p90 = math.fsum(e.utilization_p90 for e in ok) / len(ok) if ok else float('nan')
    return MetricsSummary(
        n_designs=n,
        avg_failed_elements=math.fsum(e.failed_count for e in evaluations) / n,
        avg_frame_count=math.fsum(e.frame_count for e in evaluations) / n,
        utilization_p90=p90,
        pct_without_failures=100.0 * sum(1 for e in evaluations if e.failed_count == 0) / n,
        pct_within_allowable_deflection=100.0 * sum(1 for e in evaluations if e.within_deflection) / n,
        high_performing_count=sum(1 for e in evaluations if e.high_performing),
        n_analysis_failures=n - len(ok),
        label=label,
    )


def evaluate(designs, scenario, reward_config=None, structure=None, workers=1, label='', progress=False):
    """
    对一组终止设计做结构分析并汇总对比指标

    Args:
        designs: GridState 或 DesignRecord 列表
        scenario: 场景
        workers: 并行分析进程数

    Returns:
        MetricsSummary: 指标汇总
    """
    records = evaluate_records(designs, scenario, reward_config, structure, workers, progress)
    summary = summarize([r.evaluation for r in records], label)
    if summary.n_analysis_failures:
        logger.warning("[%s] %d 个设计分析失败，按最坏情况计入", label or '设计', summary.n_analysis_failures)
    return summary


def compare(policy, baseline):
    """
    策略与基线的指标差值（策略 - 基线）

    利用率差值以百分点表示；失效单元数与框架数为负表示改进，其余为正表示改进。

    Returns:
        pd.DataFrame: 列 metric, name, policy, baseline, delta
    """
    rows = []
    for key, name, scale in COMPARE_METRICS:
        p, b = getattr(policy, key), getattr(baseline, key)
        rows.append({'metric': key, 'name': name, 'policy': p, 'baseline': b, 'delta': (p - b) * scale})
    return pd.DataFrame(rows, columns=['metric', 'name', 'policy', 'baseline', 'delta'])


def summarize_deltas(delta_tables):
    """
    多场景差值统计：每项指标在各场景上的平均、最大、最小差值

    Args:
        delta_tables: {场景名: compare() 结果}

    Returns:
        pd.DataFrame: 列 metric, name, avg_delta, max_delta, min_delta, n_scenarios
    """
    if not delta_tables:
        return pd.DataFrame(columns=['metric', 'name', 'avg_delta', 'max_delta', 'min_delta', 'n_scenarios'])
    combined = pd.concat([t.assign(scenario=name) for name, t in sorted(delta_tables.items())], ignore_index=True)
    grouped = combined.groupby(['metric', 'name'], sort=False)['delta']
    table = grouped.agg(avg_delta='mean', max_delta='max', min_delta='min', n_scenarios='count').reset_index()
    return table


def rank_difficulty(baseline_summaries):
    """
    场景难度排序：基线设计的平均失效单元数越多越难

    Returns:
        pd.DataFrame: 列 rank, scenario, avg_failed_elements, n_designs
    """
    rows = [{'scenario': name, 'avg_failed_elements': s.avg_failed_elements, 'n_designs': s.n_designs}
            for name, s in baseline_summaries.items()]
    table = pd.DataFrame(rows, columns=['scenario', 'avg_failed_elements', 'n_designs'])
    table = table.sort_values(['avg_failed_elements', 'scenario'], ascending=[False, True], kind='mergesort')
    table.insert(0, 'rank', range(1, len(table) + 1))
    return table.reset_index(drop=True)


def _vector_columns(scenario):
    rows, cols = scenario.tensor_shape
    return [f"c{k}" for k in range(rows * cols)]


def design_vector_frame(records, scenario):
    """
    设计向量表：展平的状态张量 + 框架数、失效单元数、最大位移、奖励

    来源标签不止一种时追加label列，有快照编号时追加snapshot列。
    """
    columns = _vector_columns(scenario) + VECTOR_METRICS
    labelled = len({r.label for r in records}) > 1
    snapshots = any(r.snapshot is not None for r in records)
    if labelled:
        columns.append('label')
    if snapshots:
        columns.append('snapshot')

    rows = []
    for record in records:
        e = record.evaluation
        row = [int(v) for v in encode_state(record.state, scenario).ravel()]
        row += [e.frame_count, e.failed_count, e.max_deflection, e.reward]
        if labelled:
            row.append(record.label)
        if snapshots:
            row.append(-1 if record.snapshot is None else int(record.snapshot))
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def export_design_vectors(records, scenario, out_path, reward_config=None, structure=None, workers=1):
    """
    导出设计向量CSV（供外部降维工具使用）

    未评价的设计先做结构分析。相同输入重复导出得到逐字节相同的文件。
    """
    records = evaluate_records(records, scenario, reward_config, structure, workers)
    out_path = check_writable(out_path)
    frame = design_vector_frame(records, scenario)
    frame.to_csv(out_path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.info("已导出 %d 个设计向量: %s", len(records), out_path)
    return out_path


def import_design_vectors(path, scenario):
    """
    读取设计向量CSV，重建设计状态

    剩余库存由场景库存减去网格中各类型框架数得到；指标列放入DesignRecord.extra。
    """
    frame = pd.read_csv(path, keep_default_na=False)
    vector_cols = _vector_columns(scenario)
    missing = [c for c in vector_cols + VECTOR_METRICS if c not in frame.columns]
    if missing:
        raise ValueError(f"设计向量文件缺少列: {', '.join(missing[:5])}")
    values = frame[vector_cols].to_numpy(dtype=np.int64)
    rows, cols = scenario.tensor_shape
    records = []
    for k, row in enumerate(frame.itertuples(index=False)):
        design = values[k].reshape(rows, cols)[rows - scenario.height:]
        remaining = {code: scenario.inventory[code] - int(np.count_nonzero(design == code))
                     for code in scenario.frame_codes}
        state = GridState(design, remaining, int(np.count_nonzero(design >= LIGHT)))
        extra = {
            'frame_count': int(getattr(row, 'frame_count')),
            'failed_count': int(getattr(row, 'failed_count')),
            'max_deflection': float(getattr(row, 'max_deflection')),
            'reward': float(getattr(row, 'reward')),
        }
        label = str(getattr(row, 'label')) if 'label' in frame.columns else ''
        snapshot = int(getattr(row, 'snapshot')) if 'snapshot' in frame.columns else None
        if snapshot is not None and snapshot < 0:
            snapshot = None
        records.append(DesignRecord(state, label=label, snapshot=snapshot, extra=extra))
    return records


def sample_policy_designs(net, scenario, n, rng, greedy=False, reward_config=None, structure=None,
                          label='policy', snapshot=None, max_attempts=None):
    """
    由策略推断设计

    采样模式按掩码softmax分布抽样（不做epsilon探索）；贪婪模式每步取概率最大的动作。
    截断回合不产生设计，尝试次数上限默认20n。

    Returns:
        list: 终止设计的DesignRecord（含评价）
    """
    net.check_scenario(scenario)
    env = CantileverEnv(scenario, rng, reward_config or RewardConfig(), structure or StructureConfig())
    max_attempts = max_attempts or 20 * max(n, 1)
    records = []
    attempts = 0
    while len(records) < n and attempts < max_attempts:
        attempts += 1
        obs = env.reset()
        info = {}
        while not env.done:
            mask = env.action_mask()
            if not mask.any():
                break
            logits, _ = forward(net, obs)
            if greedy:
                index = greedy_action(logits, mask)
            else:
                index, _ = masked_sample(logits, mask, 0.0, rng)
            obs, _, _, _, info = env.step(index)
        if env.state.terminated and info.get('evaluation') is not None:
            records.append(DesignRecord(env.state, info['evaluation'], label=label, snapshot=snapshot))
    if len(records) < n:
        logger.warning("策略在%d次尝试中只得到%d个终止设计（目标%d个）", attempts, len(records), n)
    return records


def snapshot_marks(total_steps, interval_steps):
    """快照步数：interval的整数倍且小于总步数，最后再加总步数"""
    if interval_steps <= 0:
        raise ValueError(f"快照间隔必须为正: {interval_steps}")
    marks = list(range(interval_steps, total_steps, interval_steps))
    return marks + [total_steps]


def run_search_trace(scenario, base_net, cfg, rng, interval_steps, out_dir, n_designs=100,
                     reward_config=None, structure=None, greedy=False, baseline_records=None):
    """
    设计空间追踪：第二阶段微调期间每隔interval_steps对策略做快照并推断一批设计

    Args:
        scenario: 微调场景
        base_net: 第一阶段网络
        cfg: 第二阶段TrainConfig
        rng: numpy随机数生成器
        interval_steps: 快照间隔（训练步）
        out_dir: 输出目录
        n_designs: 每个快照推断的设计数
        baseline_records: 可选，一并导出的基线设计（标签baseline）

    Returns:
        tuple: (快照统计表 DataFrame, 全部设计记录)
    """
    out_dir = ensure_output_dir(out_dir)
    marks = snapshot_marks(cfg.total_steps, interval_steps)
    sample_rng = np.random.default_rng(int(rng.integers(2 ** 63 - 1)))
    records = list(_as_records(baseline_records or [], label='baseline'))
    summary_rows = []

    def take_snapshot(k, net, steps):
        designs = sample_policy_designs(net, scenario, n_designs, sample_rng, greedy, reward_config,
                                        structure, label=f"snapshot_{k}", snapshot=k)
        records.extend(designs)
        summary = summarize([d.evaluation for d in designs], f"snapshot_{k}")
        summary_rows.append({
            'snapshot': k,
            'steps': steps,
            'n_designs': summary.n_designs,
            'avg_failed_elements': summary.avg_failed_elements,
            'avg_frame_count': summary.avg_frame_count,
            'high_performing_count': summary.high_performing_count,
        })
        logger.info("快照%d（%d步）: %d个设计，平均失效单元%.2f", k, steps, summary.n_designs,
                    summary.avg_failed_elements)

    pending = list(marks[:-1])

    def on_iteration(result):
        while pending and result.steps >= pending[0]:
            pending.pop(0)
            take_snapshot(len(summary_rows) + 1, result.net, result.steps)

    result = train_phase2(base_net, scenario, cfg, rng, reward_config, structure, out_dir, callback=on_iteration)
    take_snapshot(len(summary_rows) + 1, result.net, result.steps)

    table = pd.DataFrame(summary_rows)
    table.to_csv(Path(out_dir) / 'snapshots.csv', index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    export_design_vectors(records, scenario, Path(out_dir) / 'trace_vectors.csv', reward_config, structure)
    return table, records
