#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
报告生成模块
提供训练日志、分析结果、指标汇总与对比表的CSV输出，终端对齐表格，以及Excel评估报告
"""

import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np
import openpyxl
import pandas as pd
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter
from rich.console import Console
from rich.table import Table

from message_utils import format_result_message
from utils import check_writable, ensure_output_dir

logger = logging.getLogger(__name__)

console = Console()

FLOAT_FORMAT = '%.10g'

TRAINING_LOG_COLUMNS = [
    'phase', 'iteration', 'steps', 'episodes', 'terminated', 'truncated', 'mean_reward',
    'mean_episode_length', 'policy_loss', 'value_loss', 'entropy', 'approx_kl', 'epsilon',
]

DESIGN_COLUMNS = [
    'design', 'label', 'frame_count', 'failed_count', 'max_deflection', 'allowable_deflection',
    'utilization_p90', 'inventory_ratio', 'reward', 'n_elements', 'analysis_ok', 'high_performing',
]

METRIC_NAMES = {
    'n_designs': '设计数',
    'avg_failed_elements': '平均失效单元数',
    'avg_frame_count': '平均框架数',
    'utilization_p90': '利用率（90百分位）',
    'pct_without_failures': '无失效设计占比 %',
    'pct_within_allowable_deflection': '满足挠度限值占比 %',
    'high_performing_count': '高性能设计数',
    'high_performing_pct': '高性能设计占比 %',
    'n_analysis_failures': '分析失败数',
}


def write_table(frame, path):
    """以统一格式写出CSV（浮点保留10位有效数字，换行符\\n）"""
    path = check_writable(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def write_training_log(rows, path):
    """每轮迭代一行的训练日志"""
    return write_table(pd.DataFrame(rows, columns=TRAINING_LOG_COLUMNS), path)


def design_rows(records):
    rows = []
    for k, record in enumerate(records, 1):
        e = record.evaluation
        rows.append({
            'design': k,
            'label': record.label,
            'frame_count': e.frame_count,
            'failed_count': e.failed_count,
            'max_deflection': e.max_deflection,
            'allowable_deflection': e.allowable_deflection,
            'utilization_p90': e.utilization_p90,
            'inventory_ratio': e.inventory_ratio,
            'reward': e.reward,
            'n_elements': e.n_elements,
            'analysis_ok': int(e.analysis_ok),
            'high_performing': int(e.high_performing),
        })
    return rows


def write_design_metrics(records, path):
    """逐设计的结构分析指标"""
    return write_table(pd.DataFrame(design_rows(records), columns=DESIGN_COLUMNS), path)


def metrics_frame(summaries):
    rows = []
    for summary in summaries:
        row = asdict(summary)
        row['high_performing_pct'] = summary.high_performing_pct
        rows.append(row)
    columns = ['label'] + [k for k in METRIC_NAMES]
    return pd.DataFrame(rows, columns=columns)


def write_metrics(summaries, path):
    return write_table(metrics_frame(summaries), path)


def write_fea_csv(model, result, out_dir, prefix='fea'):
    """
    写出单个设计的分析结果

    节点表：node, x, y, ux, uy, rz, rx, ry, mz
    单元表：element, node_a, node_b, frame_code, axial_stress_mpa, utilization, failed

    Returns:
        tuple: (节点表路径, 单元表路径)
    """
    out_dir = ensure_output_dir(out_dir)
    disp, reac = result.displacements, result.reactions
    nodes = pd.DataFrame({
        'node': np.arange(model.n_nodes),
        'x': model.nodes[:, 0],
        'y': model.nodes[:, 1],
        'ux': disp[:, 0],
        'uy': disp[:, 1],
        'rz': disp[:, 2],
        'rx': reac[:, 0],
        'ry': reac[:, 1],
        'mz': reac[:, 2],
    })
    elements = pd.DataFrame({
        'element': np.arange(len(model.elements)),
        'node_a': [e.node_a for e in model.elements],
        'node_b': [e.node_b for e in model.elements],
        'frame_code': [e.frame_code for e in model.elements],
        'axial_stress_mpa': result.axial_stress,
        'utilization': result.utilization,
        'failed': [int(k in result.failed_elements) for k in range(len(model.elements))],
    })
    node_path = write_table(nodes, Path(out_dir) / f"{prefix}_nodes.csv")
    element_path = write_table(elements, Path(out_dir) / f"{prefix}_elements.csv")
    return node_path, element_path


def render_table(frame, title=None, print_table=True):
    """用rich输出对齐的文本表格"""
    table = Table(title=title, show_header=True, header_style="bold cyan")
    for column in frame.columns:
        justify = "right" if pd.api.types.is_numeric_dtype(frame[column]) else "left"
        table.add_column(str(column), justify=justify)
    for row in frame.itertuples(index=False):
        table.add_row(*[_format_cell(v) for v in row])
    if print_table:
        console.print(table)
    return table


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return f"{value:.4f}"
    return str(value)


_THIN = Side(style='thin')
_BORDER = Border(left=_THIN, right=_THIN, top=_THIN, bottom=_THIN)
_HEADER_FILL = PatternFill(start_color="DDDDDD", end_color="DDDDDD", fill_type="solid")
_GOOD_FILL = PatternFill(start_color="C6EFCE", end_color="C6EFCE", fill_type="solid")
_BAD_FILL = PatternFill(start_color="FFC7CE", end_color="FFC7CE", fill_type="solid")


def _write_header(ws, headers, widths):
    for col, (header, width) in enumerate(zip(headers, widths), 1):
        cell = ws.cell(row=1, column=col, value=header)
        cell.font = Font(bold=True, size=12)
        cell.fill = _HEADER_FILL
        cell.alignment = Alignment(horizontal="center", vertical="center")
        cell.border = _BORDER
        ws.column_dimensions[get_column_letter(col)].width = width


def _excel_value(value):
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return str(value)
    if isinstance(value, np.generic):
        return value.item()
    return value


def _write_frame(ws, frame, headers=None, widths=None):
    headers = headers or [str(c) for c in frame.columns]
    _write_header(ws, headers, widths or [18] * len(headers))
    for r, row in enumerate(frame.itertuples(index=False), 2):
        for c, value in enumerate(row, 1):
            ws.cell(row=r, column=c, value=_excel_value(value)).border = _BORDER


def generate_report(summaries, output_dir, deltas=None, step_results=None, file_name="设计评估报告.xlsx"):
    """
    生成Excel格式的评估报告

    工作表：指标汇总；指标对比（给出差值时）；分析记录（给出批量分析结果时，成功绿色、失败红色）

    Args:
        summaries: MetricsSummary列表
        output_dir: 输出目录
        deltas: 可选，compare() 的差值表
        step_results: 可选，BatchAnalyzer的逐设计结果
        file_name: 报告文件名

    Returns:
        str: 报告文件路径
    """
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "指标汇总"
    frame = metrics_frame(summaries)
    headers = ['来源'] + [METRIC_NAMES[c] for c in frame.columns[1:]]
    _write_frame(ws, frame, headers, [14] + [20] * (len(headers) - 1))

    if deltas is not None:
        ws = wb.create_sheet("指标对比")
        frame = deltas[['name', 'policy', 'baseline', 'delta']]
        _write_frame(ws, frame, ['指标', '策略', '基线', '差值'], [24, 14, 14, 14])
        for r, row in enumerate(deltas.itertuples(index=False), 2):
            improved = row.delta < 0 if row.metric in ('avg_failed_elements', 'avg_frame_count') else row.delta > 0
            if row.delta != 0 and np.isfinite(row.delta):
                ws.cell(row=r, column=4).fill = _GOOD_FILL if improved else _BAD_FILL

    if step_results:
        ws = wb.create_sheet("分析记录")
        _write_header(ws, ["设计", "操作", "执行结果", "详细信息"], [8, 16, 10, 70])
        for row, result in enumerate(step_results, 2):
            ws.cell(row=row, column=1, value=result['step']).alignment = Alignment(horizontal="center")
            ws.cell(row=row, column=2, value="结构分析")
            success_cell = ws.cell(row=row, column=3, value="成功" if result['success'] else "失败")
            success_cell.alignment = Alignment(horizontal="center")
            success_cell.fill = _GOOD_FILL if result['success'] else _BAD_FILL
            ws.cell(row=row, column=4, value=format_result_message(result))
            for col in range(1, 5):
                ws.cell(row=row, column=col).border = _BORDER

    report_path = check_writable(Path(ensure_output_dir(output_dir)) / file_name)
    wb.save(report_path)
    logger.info("评估报告已生成: %s", report_path)
    return str(report_path)
