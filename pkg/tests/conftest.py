#!/usr/bin/env python
# -*- coding: utf-8 -*-

from pathlib import Path

import numpy as np
import pytest

from models import LIGHT, MEDIUM, Scenario, Target, load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / 'scenarios'


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny():
    """2×3网格：支座在左下，目标在右下，中间一格即可连通"""
    return Scenario(height=2, width=3, support=(1, 0), targets=(Target((1, 2), 10.0),),
                    inventory={LIGHT: 2, MEDIUM: 1}, name='tiny')


@pytest.fixture
def small():
    """4×5网格：支座在左下角，目标在底行第4列"""
    return Scenario(height=4, width=5, support=(3, 0), targets=(Target((3, 3), 10.0),),
                    inventory={LIGHT: 6, MEDIUM: 2}, name='small')


@pytest.fixture
def two_targets():
    """3×5网格：支座居中，左右各一个目标"""
    return Scenario(height=3, width=5, support=(2, 2),
                    targets=(Target((2, 0), 10.0), Target((2, 4), 10.0)),
                    inventory={LIGHT: 6, MEDIUM: 2}, name='two_targets')


@pytest.fixture
def suite_scenario():
    return load_scenario(SCENARIO_DIR / 's01.json')


@pytest.fixture
def desk_scenario():
    return load_scenario(SCENARIO_DIR / 'desk_6x10.json')
