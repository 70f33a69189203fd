#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
消息处理工具模块
提供分析结果消息与错误消息的格式化，以及错误类别到退出码的映射
"""

from exceptions import (AnalysisError, CheckpointError, ConfigError, DesignError, EncodingError,
                        GenerationError, ModelError, ScenarioError, ShapeMismatchError, TrainingError)

# 错误类别 -> 进程退出码
EXIT_CODES = (
    ((ConfigError, ScenarioError, EncodingError), 2),
    ((AnalysisError, ModelError), 3),
    ((TrainingError, CheckpointError, ShapeMismatchError), 4),
    ((OSError,), 5),
    ((GenerationError,), 6),
)


def format_result_message(result):
    """
    格式化单个设计的分析结果消息，去掉"设计N: 操作名"前缀

    Args:
        result: 包含step、success和message字段的结果字典

    Returns:
        str: 格式化后的消息
    """
    message = result['message']
    prefix = f"设计{result['step']}: "
    if not message.startswith(prefix):
        return message
    body = message[len(prefix):]
    if " 执行成功" in body:
        if " - " in body:
            return "执行成功 - " + body.split(" - ", 1)[1]
        return "执行成功"
    if " 执行失败" in body:
        reason = body.split(" 执行失败: ", 1)
        return "执行失败: " + reason[1] if len(reason) > 1 and reason[1] else "执行失败"
    return body


def exit_code_for(error):
    """按错误类别给出非零退出码，未归类的错误为1"""
    for classes, code in EXIT_CODES:
        if isinstance(error, classes):
            return code
    return 1


def format_error_message(error):
    """
    将异常转换为带类别的一行消息

    Args:
        error: 异常对象

    Returns:
        str: 形如 "[分析错误] 缩减刚度矩阵不正定" 的消息
    """
    if isinstance(error, DesignError):
        category = error.category
    elif isinstance(error, PermissionError):
        category = "权限错误"
    elif isinstance(error, FileNotFoundError):
        category = "文件不存在"
    elif isinstance(error, OSError):
        category = "读写错误"
    elif isinstance(error, ValueError):
        category = "参数错误"
    else:
        category = "其他错误"
    text = str(error).strip() or type(error).__name__
    return f"[{category}] {text.splitlines()[0]}"
