#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
执行模块
提供命令行各子命令的执行功能实现
"""

import logging
from dataclasses import replace
from pathlib import Path

import pandas as pd

from baseline import generate_batch, replay_design
from config import save_config
from core import solve_static
from env import write_traces
from evaluation import (compare, evaluate_records, export_design_vectors, rank_difficulty,
                        run_search_trace, sample_policy_designs, summarize, summarize_deltas)
from exceptions import ScenarioError
from models import DesignRecord, load_designs, load_scenario, save_designs, validate_state
from processing import BatchAnalyzer
from report import (generate_report, render_table, write_design_metrics, write_fea_csv, write_metrics,
                    write_table, write_training_log)
from structure import build_fe_model
from trainer import load_checkpoint, save_checkpoint, train_phase1, train_phase2
from utils import ensure_output_dir, make_rng

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).resolve().parent / 'scenarios'


def _scenario(args):
    if not args.scenario:
        raise ScenarioError("请用 --scenario 指定场景文件")
    return load_scenario(args.scenario)


def _read_designs(paths, scenario, label=None):
    """读取一个或多个设计文件并校验；未带标签的设计以文件名作为标签"""
    records = []
    for path in paths:
        for record in load_designs(path):
            validate_state(record.state, scenario)
            if label is not None:
                record.label = label
            elif not record.label:
                record.label = Path(path).stem
            records.append(record)
    logger.info("读取设计 %d 个", len(records))
    return records


def _log_results(step_results):
    """在日志中输出逐设计分析结果"""
    for result in step_results:
        status = "✓" if result['success'] else "✗"
        logger.debug("%s %s", status, result['message'])


def _apply_steps(cfg, steps):
    return cfg if steps is None else replace(cfg, total_steps=steps)


def train_base(args, config):
    """第一阶段训练：随机目标、仅自重"""
    template = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    cfg = _apply_steps(config.phase1, args.steps)
    rng = make_rng(args.seed)
    save_config(config, out_dir / 'config.json')
    result = train_phase1(cfg, rng, template, config.reward, config.structure, out_dir)
    write_training_log(result.log, out_dir / 'phase1_log.csv')
    path = save_checkpoint(out_dir / 'phase1_final.pt', result.net, result.optimizer, cfg, rng,
                           {'phase': 'phase1', 'steps': result.steps, 'template': template.name})
    logger.info("第一阶段训练完成: %d 步，%d 个回合，检查点 %s", result.steps, result.episodes, path)
    return 0


def finetune(args, config):
    """第二阶段微调：固定场景，记录每个终止设计"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    checkpoint = load_checkpoint(args.checkpoint)
    cfg = _apply_steps(config.phase2, args.steps)
    rng = make_rng(args.seed)
    save_config(config, out_dir / 'config.json')
    result = train_phase2(checkpoint.net, scenario, cfg, rng, config.reward, config.structure, out_dir)
    write_training_log(result.log, out_dir / 'phase2_log.csv')
    save_checkpoint(out_dir / 'phase2_final.pt', result.net, result.optimizer, cfg, rng,
                    {'phase': 'phase2', 'steps': result.steps, 'scenario': scenario.name})
    save_designs(result.designs, out_dir / 'phase2_designs.jsonl')
    export_design_vectors(result.designs, scenario, out_dir / 'phase2_vectors.csv')
    logger.info("第二阶段微调完成: %d 步，记录设计 %d 个", result.steps, len(result.designs))
    return 0


def baseline(args, config):
    """批量生成基线设计，写出设计文件、逐设计指标，可选写出回合轨迹"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    rng = make_rng(args.seed)
    states = generate_batch(scenario, rng, args.n, config.baseline, progress=True)
    records = evaluate_records([DesignRecord(s, label='baseline') for s in states], scenario,
                               config.reward, config.structure, args.workers, progress=True)
    save_designs(records, out_dir / 'baseline_designs.jsonl')
    write_design_metrics(records, out_dir / 'baseline_metrics.csv')
    if args.traces:
        traces = [replay_design(s, scenario, config.reward, config.structure) for s in states]
        write_traces(traces, out_dir / 'baseline_traces.jsonl')
    summary = summarize([r.evaluation for r in records], 'baseline')
    render_table(_summary_frame([summary]), title=f"基线设计 {scenario.name}")
    return 0


def sample(args, config):
    """由检查点推断策略设计"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    checkpoint = load_checkpoint(args.checkpoint)
    rng = make_rng(args.seed)
    records = sample_policy_designs(checkpoint.net, scenario, args.n, rng, args.greedy,
                                    config.reward, config.structure)
    save_designs(records, out_dir / 'policy_designs.jsonl')
    write_design_metrics(records, out_dir / 'policy_metrics.csv')
    summary = summarize([r.evaluation for r in records], 'policy')
    render_table(_summary_frame([summary]), title=f"策略设计 {scenario.name}")
    return 0


def _summary_frame(summaries):
    rows = [{
        '来源': s.label,
        '设计数': s.n_designs,
        '平均失效单元': s.avg_failed_elements,
        '平均框架数': s.avg_frame_count,
        '利用率P90': s.utilization_p90,
        '无失效%': s.pct_without_failures,
        '满足挠度%': s.pct_within_allowable_deflection,
        '高性能数': s.high_performing_count,
        '分析失败': s.n_analysis_failures,
    } for s in summaries]
    return pd.DataFrame(rows)


def evaluate(args, config):
    """对设计文件做结构分析并汇总指标（每个标签一组）"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    records = _read_designs(args.designs, scenario)
    analyzer = BatchAnalyzer(scenario, config.reward, config.structure, args.workers, progress=True)
    step_results = analyzer.run([r.state for r in records])
    _log_results(step_results)
    for record, result in zip(records, step_results):
        record.evaluation = result['evaluation']

    labels = list(dict.fromkeys(r.label for r in records))
    summaries = [summarize([r.evaluation for r in records if r.label == label], label) for label in labels]
    write_metrics(summaries, out_dir / 'metrics.csv')
    write_design_metrics(records, out_dir / 'design_metrics.csv')
    render_table(_summary_frame(summaries), title=f"设计评估 {scenario.name}")
    if args.report:
        generate_report(summaries, out_dir, step_results=step_results)
    return 0


def compare_designs(args, config):
    """策略与基线对比：给出设计文件，或由检查点/基线生成器现场产生"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    rng = make_rng(args.seed)

    if args.policy_designs:
        policy_records = _read_designs(args.policy_designs, scenario, label='policy')
    elif args.checkpoint:
        net = load_checkpoint(args.checkpoint).net
        policy_records = sample_policy_designs(net, scenario, args.n, rng, args.greedy, config.reward,
                                               config.structure)
    else:
        raise ScenarioError("请给出 --policy-designs 或 --checkpoint")

    if args.baseline_designs:
        baseline_records = _read_designs(args.baseline_designs, scenario, label='baseline')
    else:
        states = generate_batch(scenario, rng, args.n, config.baseline, progress=True)
        baseline_records = [DesignRecord(s, label='baseline') for s in states]

    policy_records = evaluate_records(policy_records, scenario, config.reward, config.structure, args.workers)
    baseline_records = evaluate_records(baseline_records, scenario, config.reward, config.structure, args.workers)
    policy_summary = summarize([r.evaluation for r in policy_records], 'policy')
    baseline_summary = summarize([r.evaluation for r in baseline_records], 'baseline')
    deltas = compare(policy_summary, baseline_summary)

    write_metrics([policy_summary, baseline_summary], out_dir / 'metrics.csv')
    write_table(deltas, out_dir / 'compare.csv')
    render_table(_summary_frame([policy_summary, baseline_summary]), title=f"指标汇总 {scenario.name}")
    render_table(deltas[['name', 'policy', 'baseline', 'delta']], title="策略 - 基线")
    if args.report:
        generate_report([policy_summary, baseline_summary], out_dir, deltas=deltas)
    return 0


def summarize_suite(args, config):
    """汇总多个场景的对比表，给出平均、最大、最小差值"""
    out_dir = ensure_output_dir(args.out)
    tables = {Path(path).parent.name or Path(path).stem: pd.read_csv(path) for path in args.inputs}
    table = summarize_deltas(tables)
    write_table(table, out_dir / 'delta_summary.csv')
    render_table(table[['name', 'avg_delta', 'max_delta', 'min_delta', 'n_scenarios']], title="多场景差值统计")
    return 0


def export_space(args, config):
    """导出设计向量"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    records = _read_designs(args.designs, scenario)
    export_design_vectors(records, scenario, out_dir / 'design_vectors.csv', config.reward,
                          config.structure, args.workers)
    return 0


def trace_search(args, config):
    """第二阶段微调期间按间隔快照策略并导出设计向量"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    checkpoint = load_checkpoint(args.checkpoint)
    cfg = _apply_steps(config.phase2, args.steps)
    rng = make_rng(args.seed)
    baseline_records = None
    if args.baseline_n:
        baseline_records = [DesignRecord(s, label='baseline')
                            for s in generate_batch(scenario, rng, args.baseline_n, config.baseline)]
    table, _ = run_search_trace(scenario, checkpoint.net, cfg, rng, args.interval, out_dir, args.n,
                                config.reward, config.structure, args.greedy, baseline_records)
    render_table(table, title="设计空间快照")
    return 0


def analyze(args, config):
    """分析单个设计：写出有限元清单与节点/单元结果表"""
    scenario = _scenario(args)
    out_dir = ensure_output_dir(args.out)
    records = _read_designs(args.designs, scenario)
    if not 1 <= args.index <= len(records):
        raise IndexError(f"设计序号超出范围: {args.index}（共{len(records)}个）")
    state = records[args.index - 1].state
    model = build_fe_model(state, scenario, config.structure)
    (out_dir / f"design{args.index}_model.txt").write_text(model.to_listing(), encoding='utf-8')
    result = solve_static(model)
    write_fea_csv(model, result, out_dir, prefix=f"design{args.index}")
    logger.info("设计%d: 节点%d 单元%d 最大位移%.4e m 失效单元%d", args.index, model.n_nodes,
                len(model.elements), result.max_deflection, result.n_failed)
    return 0


def list_scenarios(args, config):
    """列出场景目录中的场景；--rank 时按基线平均失效单元数排序"""
    directory = Path(args.directory) if args.directory else SCENARIO_DIR
    paths = sorted(directory.glob('*.json'))
    scenarios = [load_scenario(p) for p in paths]
    rows = [{
        '名称': s.name or p.stem,
        '网格': f"{s.height}×{s.width}",
        '支座': str(s.support),
        '目标': ' '.join(f"{t.cell}:{t.load_kn:g}kN" for t in s.targets),
        '库存': ' '.join(f"{k}:{v}" for k, v in s.to_dict()['inventory'].items()),
    } for p, s in zip(paths, scenarios)]
    render_table(pd.DataFrame(rows), title=f"场景目录 {directory}")

    if args.rank:
        out_dir = ensure_output_dir(args.out)
        rng = make_rng(args.seed)
        summaries = {}
        for path, scenario in zip(paths, scenarios):
            records = evaluate_records(generate_batch(scenario, rng, args.n, config.baseline), scenario,
                                       config.reward, config.structure, args.workers)
            summaries[scenario.name or path.stem] = summarize([r.evaluation for r in records], 'baseline')
        table = rank_difficulty(summaries)
        write_table(table, out_dir / 'difficulty.csv')
        render_table(table, title="场景难度（基线平均失效单元数）")
    return 0


COMMANDS = {
    'train-base': train_base,
    'finetune': finetune,
    'baseline': baseline,
    'sample': sample,
    'evaluate': evaluate,
    'compare': compare_designs,
    'summarize': summarize_suite,
    'export-space': export_space,
    'trace-search': trace_search,
    'analyze': analyze,
    'scenarios': list_scenarios,
}
