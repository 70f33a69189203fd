#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
异常定义模块
按类别区分场景、编码、结构分析、训练等环节的错误
"""


class DesignError(Exception):
    """所有领域错误的基类"""
    category = "其他错误"


class ScenarioError(DesignError, ValueError):
    """场景定义不合法"""
    category = "场景错误"


class ConfigError(DesignError, ValueError):
    """配置文件不合法"""
    category = "配置错误"


class EncodingError(DesignError):
    """状态编码失败（库存超出库存行容量等）"""
    category = "编码错误"


class ActionDecodeError(DesignError, IndexError):
    """动作索引越界"""
    category = "动作解码错误"


class StateError(DesignError):
    """网格状态不满足不变量"""
    category = "状态错误"


class InfeasibleActionError(DesignError):
    """执行了被掩码禁止的动作（调用方违反约定）"""
    category = "不可行动作"


class ModelError(DesignError):
    """无法由设计生成有限元模型"""
    category = "建模错误"


class AnalysisError(DesignError):
    """有限元分析失败"""
    category = "分析错误"


class SingularModelError(AnalysisError):
    """缩减刚度矩阵奇异（机构或悬浮结构）"""
    category = "分析错误（刚度奇异）"


class InputError(AnalysisError, ValueError):
    """荷载等输入含非有限值"""
    category = "输入错误"


class GenerationError(DesignError):
    """基线生成重试次数耗尽"""
    category = "生成错误"


class ShapeMismatchError(DesignError, ValueError):
    """网络输入或检查点与场景形状不一致"""
    category = "形状不匹配"


class TrainingError(DesignError):
    """训练过程中出现非有限损失等问题"""
    category = "训练错误"


class CheckpointError(DesignError):
    """检查点文件无法读取或版本不符"""
    category = "检查点错误"
