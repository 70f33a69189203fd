#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math

import numpy as np
import pandas as pd
import pytest

import processing
from baseline import generate_baseline, generate_batch
from evaluation import (compare, design_vector_frame, evaluate, evaluate_records, export_design_vectors,
                        import_design_vectors, rank_difficulty, sample_policy_designs, snapshot_marks, summarize,
                        summarize_deltas)
from exceptions import SingularModelError
from models import DesignRecord, MetricsSummary
from policy import PolicyNetwork


def _summary(failed, frames, p90, no_fail=50.0, within=50.0, high=10, n=100, label=''):
    return MetricsSummary(n, failed, frames, p90, no_fail, within, high, 0, label)


def test_identical_designs_summary(small, rng):
    state = generate_baseline(small, rng)
    summary = evaluate([state] * 5, small, label='same')
    assert summary.n_designs == 5
    assert summary.avg_frame_count == state.n_used
    assert summary.pct_without_failures in (0.0, 100.0)
    assert summary.pct_within_allowable_deflection in (0.0, 100.0)
    assert summary.label == 'same'


def test_summary_ignores_design_order(suite_scenario):
    records = evaluate_records(generate_batch(suite_scenario, np.random.default_rng(4), 20), suite_scenario)
    evaluations = [r.evaluation for r in records]
    assert summarize(evaluations) == summarize(list(reversed(evaluations)))


def test_empty_summary_is_nan():
    summary = summarize([], 'none')
    assert summary.n_designs == 0
    assert math.isnan(summary.avg_failed_elements)


def test_compare_deltas():
    same = _summary(2.0, 15.0, 0.4)
    assert compare(same, same)['delta'].abs().max() == 0.0

    table = compare(_summary(1.5, 12.0, 0.52), _summary(5.0, 14.0, 0.40)).set_index('metric')
    assert table.loc['avg_failed_elements', 'delta'] == pytest.approx(-3.5)
    assert table.loc['avg_frame_count', 'delta'] == pytest.approx(-2.0)
    # 利用率差值以百分点表示
    assert table.loc['utilization_p90', 'delta'] == pytest.approx(12.0)


def test_summarize_deltas_across_scenarios():
    baseline = _summary(5.0, 14.0, 0.40)
    tables = {
        's01': compare(_summary(1.0, 12.0, 0.50), baseline),
        's02': compare(_summary(3.0, 10.0, 0.40), baseline),
    }
    table = summarize_deltas(tables).set_index('metric')
    row = table.loc['avg_failed_elements']
    assert row['avg_delta'] == pytest.approx(-3.0)
    assert row['max_delta'] == pytest.approx(-2.0)
    assert row['min_delta'] == pytest.approx(-4.0)
    assert row['n_scenarios'] == 2
    assert summarize_deltas({}).empty


def test_rank_difficulty_orders_by_failures():
    table = rank_difficulty({'a': _summary(1.0, 10, 0.3), 'b': _summary(4.0, 10, 0.3),
                             'c': _summary(4.0, 10, 0.3)})
    assert table['scenario'].tolist() == ['b', 'c', 'a']
    assert table['rank'].tolist() == [1, 2, 3]


def test_export_design_vectors(suite_scenario, tmp_path):
    states = generate_batch(suite_scenario, np.random.default_rng(5), 4)
    path = export_design_vectors(states, suite_scenario, tmp_path / 'vectors.csv')
    frame = pd.read_csv(path)
    assert frame.shape == (4, 9 * 14 + 4)
    assert list(frame.columns[-4:]) == ['frame_count', 'failed_count', 'max_deflection', 'reward']
    assert frame['frame_count'].tolist() == [s.n_used for s in states]


def test_export_is_byte_identical(small, tmp_path):
    states = generate_batch(small, np.random.default_rng(6), 3)
    first = export_design_vectors(states, small, tmp_path / 'a.csv')
    second = export_design_vectors(states, small, tmp_path / 'b.csv')
    assert first.read_bytes() == second.read_bytes()


def test_export_empty_writes_header(small, tmp_path):
    path = export_design_vectors([], small, tmp_path / 'empty.csv')
    lines = path.read_text(encoding='utf-8').splitlines()
    assert len(lines) == 1
    assert lines[0].startswith('c0,')


def test_import_restores_designs(small, tmp_path):
    states = generate_batch(small, np.random.default_rng(8), 3)
    labels = ['baseline', 'policy', 'baseline']
    records = [DesignRecord(s, label=labels[k - 1], snapshot=k) for k, s in enumerate(states, 1)]
    path = export_design_vectors(records, small, tmp_path / 'vectors.csv')
    loaded = import_design_vectors(path, small)
    assert [r.state for r in loaded] == states
    assert [r.label for r in loaded] == labels
    assert [r.snapshot for r in loaded] == [1, 2, 3]
    assert [r.extra['frame_count'] for r in loaded] == [s.n_used for s in states]


def test_vector_frame_label_columns(small, rng):
    rows, cols = small.tensor_shape
    policy = evaluate_records([DesignRecord(generate_baseline(small, rng), label='policy')], small)
    # 单一来源时保持 网格列 + 4个指标列 的布局
    frame = design_vector_frame(policy, small)
    assert frame.shape[1] == rows * cols + 4
    assert 'label' not in frame.columns
    baseline = evaluate_records([DesignRecord(generate_baseline(small, rng), label='baseline')], small)
    frame = design_vector_frame(policy + baseline, small)
    assert frame.columns[-1] == 'label'
    assert frame['label'].tolist() == ['policy', 'baseline']
    assert 'snapshot' not in frame.columns


@pytest.mark.parametrize('total, interval, expected', [
    (50_000, 7_500, [7_500, 15_000, 22_500, 30_000, 37_500, 45_000, 50_000]),
    (1_000, 5_000, [1_000]),
    (1_000, 500, [500, 1_000]),
])
def test_snapshot_marks(total, interval, expected):
    assert snapshot_marks(total, interval) == expected


def test_snapshot_interval_must_be_positive():
    with pytest.raises(ValueError):
        snapshot_marks(100, 0)


def test_failed_analysis_counts_as_worst_case(small, rng, monkeypatch):
    def broken(state, scenario, cfg=None, structure=None):
        raise SingularModelError("测试用奇异模型")

    monkeypatch.setattr(processing, 'evaluate_design', broken)
    states = generate_batch(small, rng, 3)
    records = evaluate_records(states, small)
    summary = summarize([r.evaluation for r in records])
    assert summary.n_analysis_failures == 3
    assert math.isnan(summary.utilization_p90)
    assert summary.pct_within_allowable_deflection == 0.0
    for record in records:
        assert record.evaluation.failed_count == record.evaluation.n_elements > 0
        assert record.evaluation.reward == 0.0


def test_sample_policy_designs(tiny, rng):
    net = PolicyNetwork.for_scenario(tiny, channels=(2, 2, 2), hidden=4)
    records = sample_policy_designs(net, tiny, 5, rng)
    assert len(records) == 5
    for record in records:
        assert record.state.terminated
        assert record.label == 'policy'
        assert record.evaluation is not None

    greedy = sample_policy_designs(net, tiny, 3, rng, greedy=True)
    assert len({r.state.design.tobytes() for r in greedy}) <= 1


def test_parallel_analysis_matches_serial(small):
    states = generate_batch(small, np.random.default_rng(12), 6)
    serial = evaluate(states, small, workers=1)
    parallel = evaluate(states, small, workers=2)
    assert serial == parallel
