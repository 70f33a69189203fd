#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
模块化悬臂结构设计工具
主程序入口
"""

import argparse
import logging
import sys

from config import load_config
from execution import COMMANDS
from message_utils import exit_code_for, format_error_message

logger = logging.getLogger(__name__)


def build_parser():
    """命令行参数定义"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--scenario', help='场景文件（JSON）')
    common.add_argument('--seed', type=int, default=0, help='随机种子')
    common.add_argument('--config', help='配置文件（JSON），缺省使用默认配置')
    common.add_argument('--out', default='output', help='输出目录')
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--log-file', help='同时写入的日志文件')
    common.add_argument('--workers', type=int, default=1, help='结构分析并行进程数')

    parser = argparse.ArgumentParser(prog='cantilever', description='模块化悬臂结构的强化学习设计工具')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train-base', parents=[common], help='第一阶段训练（随机目标、仅自重）')
    p.add_argument('--steps', type=int, help='覆盖配置中的训练总步数')

    p = sub.add_parser('finetune', parents=[common], help='第二阶段微调（固定场景）')
    p.add_argument('--checkpoint', required=True, help='第一阶段检查点')
    p.add_argument('--steps', type=int, help='覆盖配置中的训练总步数')

    p = sub.add_parser('baseline', parents=[common], help='批量生成基线设计')
    p.add_argument('--n', type=int, default=500, help='设计数量')
    p.add_argument('--traces', action='store_true', help='同时写出回合轨迹')

    p = sub.add_parser('sample', parents=[common], help='由检查点推断策略设计')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--n', type=int, default=500)
    p.add_argument('--greedy', action='store_true', help='贪婪推断（默认按分布采样）')

    p = sub.add_parser('evaluate', parents=[common], help='结构分析并汇总指标')
    p.add_argument('--designs', nargs='+', required=True, help='设计文件（JSONL）')
    p.add_argument('--report', action='store_true', help='生成Excel报告')

    p = sub.add_parser('compare', parents=[common], help='策略与基线指标对比')
    p.add_argument('--policy-designs', nargs='+')
    p.add_argument('--baseline-designs', nargs='+')
    p.add_argument('--checkpoint', help='未给出策略设计文件时由此检查点推断')
    p.add_argument('--n', type=int, default=500, help='现场生成的设计数量')
    p.add_argument('--greedy', action='store_true')
    p.add_argument('--report', action='store_true', help='生成Excel报告')

    p = sub.add_parser('summarize', parents=[common], help='汇总多个场景的对比表')
    p.add_argument('--inputs', nargs='+', required=True, help='各场景的 compare.csv')

    p = sub.add_parser('export-space', parents=[common], help='导出设计向量')
    p.add_argument('--designs', nargs='+', required=True)

    p = sub.add_parser('trace-search', parents=[common], help='微调期间的设计空间追踪')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--interval', type=int, default=7500, help='快照间隔（训练步）')
    p.add_argument('--n', type=int, default=100, help='每个快照推断的设计数量')
    p.add_argument('--baseline-n', type=int, default=0, help='一并导出的基线设计数量')
    p.add_argument('--steps', type=int, help='覆盖配置中的训练总步数')
    p.add_argument('--greedy', action='store_true')

    p = sub.add_parser('analyze', parents=[common], help='分析单个设计并写出清单与结果表')
    p.add_argument('--designs', nargs='+', required=True)
    p.add_argument('--index', type=int, default=1, help='设计序号（从1开始）')

    p = sub.add_parser('scenarios', parents=[common], help='列出场景目录')
    p.add_argument('--directory', help='场景目录，缺省为内置场景')
    p.add_argument('--rank', action='store_true', help='按基线平均失效单元数排序')
    p.add_argument('--n', type=int, default=100, help='排序时每个场景的基线设计数量')
    return parser


def setup_logging(level='INFO', log_file=None):
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(level=getattr(logging, level), format='%(asctime)s - %(levelname)s - %(message)s',
                        handlers=handlers, force=True)


def main(argv=None):
    """程序主入口函数，返回进程退出码"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.log_file)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except KeyboardInterrupt:
        logger.error("用户中断")
        return 130
    except Exception as e:
        logger.debug("命令执行失败", exc_info=True)
        logger.error(format_error_message(e))
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
