#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
工具函数模块
提供输出目录检查、原子写入、随机数生成器等辅助功能
"""

import os
from contextlib import contextmanager
from pathlib import Path

import numpy as np


def ensure_output_dir(output_dir):
    """
    确保输出目录存在且可写

    Args:
        output_dir: 输出目录路径

    Returns:
        Path: 输出目录
    """
    if not output_dir:
        raise ValueError("输出目录不能为空")
    output_path = Path(output_dir)
    if not output_path.exists():
        try:
            output_path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise PermissionError(f"无法创建输出目录 {output_dir}: {e}") from e
    if not output_path.is_dir():
        raise NotADirectoryError(f"输出路径不是目录: {output_dir}")
    if not os.access(output_path, os.W_OK):
        raise PermissionError(f"输出目录 {output_dir} 不可写")
    return output_path


def check_writable(path):
    """目标文件已存在且不可写时抛出PermissionError"""
    path = Path(path)
    if path.exists() and not os.access(path, os.W_OK):
        raise PermissionError(f"目标文件 {path} 已存在且不可写")
    ensure_output_dir(path.parent if str(path.parent) else '.')
    return path


@contextmanager
def atomic_path(path):
    """
    原子写入：产出临时文件路径，写入成功后重命名为目标文件

    用法：
        with atomic_path(target) as tmp:
            torch.save(obj, tmp)
    """
    path = check_writable(path)
    tmp = path.with_name(path.name + '.tmp')
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def make_rng(seed=None):
    """由整数种子创建numpy随机数生成器"""
    return np.random.default_rng(seed)
