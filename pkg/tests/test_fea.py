#!/usr/bin/env python
# -*- coding: utf-8 -*-

import time

import numpy as np
import pytest

from baseline import generate_baseline
from core import element_stiffness, solve_static, utilization_p90
from exceptions import AnalysisError, InputError, SingularModelError
from models import LIGHT, GridState, get_frame_type
from structure import STEEL, Element, FEModel, build_fe_model, section_properties

LIGHT_SECTION = section_properties(get_frame_type(LIGHT))


def _bar(p_b, load, fixed=(0,)):
    element = Element(0, 1, LIGHT_SECTION, STEEL, LIGHT, (LIGHT,))
    return FEModel(np.array([[0.0, 0.0], p_b]), [element], tuple(fixed), {1: load})


def test_cantilever_tip_deflection():
    result = solve_static(_bar([1.0, 0.0], (0.0, -1.0)))
    expected = 1.0 / (3.0 * STEEL.youngs_modulus * LIGHT_SECTION.moment_of_inertia)
    assert result.displacements[1, 1] == pytest.approx(-expected, rel=1e-8)
    assert result.max_deflection == pytest.approx(expected, rel=1e-8)


def test_reactions_balance_loads():
    model = _bar([1.0, 0.0], (3.0, -5.0))
    result = solve_static(model)
    assert result.reactions[:, :2].sum(axis=0) + model.total_load() == pytest.approx([0.0, 0.0], abs=1e-9)
    # 自由节点反力为0
    assert np.all(result.reactions[1] == 0.0)


def test_axial_stress_in_mpa():
    result = solve_static(_bar([0.0, 1.0], (0.0, 10.0)))
    assert result.axial_stress[0] == pytest.approx(10.0 / LIGHT_SECTION.area / 1000.0, rel=1e-8)
    assert result.utilization[0] == pytest.approx(10.0 / LIGHT_SECTION.area / STEEL.yield_strength, rel=1e-8)
    assert result.n_failed == 0


def test_overloaded_bar_fails():
    load = 2.0 * STEEL.yield_strength * LIGHT_SECTION.area
    result = solve_static(_bar([1.0, 0.0], (-load, 0.0)))
    assert result.axial_stress[0] < 0
    assert result.failed_elements == frozenset({0})


def test_no_fixed_nodes_is_singular():
    with pytest.raises(SingularModelError):
        solve_static(_bar([1.0, 0.0], (0.0, -1.0), fixed=()))


def test_floating_element_is_singular():
    elements = [Element(0, 1, LIGHT_SECTION, STEEL, LIGHT, (LIGHT,)),
                Element(2, 3, LIGHT_SECTION, STEEL, LIGHT, (LIGHT,))]
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [4.0, 0.0]])
    model = FEModel(nodes, elements, (0,), {3: (0.0, -1.0)})
    with pytest.raises(SingularModelError):
        solve_static(model)


def test_non_finite_load_rejected():
    with pytest.raises(InputError):
        solve_static(_bar([1.0, 0.0], (0.0, float('nan'))))


def test_utilization_p90_nearest_rank():
    assert utilization_p90(np.arange(1, 11, dtype=float)) == 9.0
    assert utilization_p90([0.1, 0.5, 0.2]) == 0.5
    assert utilization_p90([0.7]) == 0.7
    with pytest.raises(AnalysisError):
        utilization_p90([])


def test_frame_model_solves_quickly(suite_scenario):
    state = generate_baseline(suite_scenario, np.random.default_rng(7))
    model = build_fe_model(state, suite_scenario)
    solve_static(model)
    start = time.perf_counter()
    result = solve_static(model)
    assert time.perf_counter() - start < 0.1
    assert np.isfinite(result.max_deflection)
    assert len(result.utilization) == len(model.elements)


def test_subdivided_cantilever_matches_single_element():
    element = Element(0, 1, LIGHT_SECTION, STEEL, LIGHT, (LIGHT,))
    halves = [element, Element(1, 2, LIGHT_SECTION, STEEL, LIGHT, (LIGHT,))]
    single = solve_static(_bar([1.0, 0.0], (0.0, -1.0)))
    split = solve_static(FEModel(np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]), halves, (0,),
                                 {2: (0.0, -1.0)}))
    assert split.displacements[2, 1] == pytest.approx(single.displacements[1, 1], rel=1e-9)


def test_p90_ignores_element_order(suite_scenario):
    state = generate_baseline(suite_scenario, np.random.default_rng(11))
    result = solve_static(build_fe_model(state, suite_scenario))
    shuffled = np.random.default_rng(0).permutation(result.utilization)
    assert utilization_p90(shuffled) == utilization_p90(result)


def test_equilibrium_on_frame_model(small):
    state = generate_baseline(small, np.random.default_rng(2))
    model = build_fe_model(state, small)
    result = solve_static(model)
    total = model.total_load()
    residual = result.reactions[:, :2].sum(axis=0) + total
    assert np.abs(residual).max() <= 1e-8 * np.abs(total).max()


def test_element_stiffness_is_symmetric_with_rigid_body_modes():
    k = element_stiffness([0.5, 0.25], [1.7, 1.15], LIGHT_SECTION, STEEL)
    assert np.allclose(k, k.T, rtol=0.0, atol=1e-9 * np.abs(k).max())
    eigenvalues = np.linalg.eigvalsh(k)
    near_zero = np.abs(eigenvalues) <= 1e-9 * eigenvalues.max()
    assert int(near_zero.sum()) == 3
    assert np.all(eigenvalues[~near_zero] > 0)


def test_axial_stiffness():
    length = 2.0
    k = element_stiffness([0.0, 0.0], [length, 0.0], LIGHT_SECTION, STEEL)
    ea_over_l = STEEL.youngs_modulus * LIGHT_SECTION.area / length
    assert k[0, 0] == pytest.approx(ea_over_l, rel=1e-12)
    assert k[0, 3] == pytest.approx(-ea_over_l, rel=1e-12)
    assert k[1, 1] == pytest.approx(12.0 * STEEL.youngs_modulus * LIGHT_SECTION.moment_of_inertia / length ** 3)


def test_quarter_turn_rotates_stiffness():
    horizontal = element_stiffness([0.0, 0.0], [1.0, 0.0], LIGHT_SECTION, STEEL)
    vertical = element_stiffness([0.0, 0.0], [0.0, 1.0], LIGHT_SECTION, STEEL)
    rot = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r = np.zeros((6, 6))
    r[:3, :3] = rot
    r[3:, 3:] = rot
    assert np.allclose(vertical, r @ horizontal @ r.T, rtol=1e-12, atol=1e-6)


def _frame_model(tiny):
    return build_fe_model(GridState.initial(tiny).with_frame(LIGHT, (1, 1)), tiny)


def test_superposition(tiny):
    model = _frame_model(tiny)
    free = [n for n in range(model.n_nodes) if n not in model.fixed_nodes]
    sideways = {free[0]: (3.0, 0.0)}
    combined = dict(model.nodal_loads)
    fx, fy = combined.get(free[0], (0.0, 0.0))
    combined[free[0]] = (fx + 3.0, fy)
    r1 = solve_static(model)
    r2 = solve_static(model, sideways)
    r3 = solve_static(model, combined)
    assert np.allclose(r3.displacements, r1.displacements + r2.displacements, rtol=1e-9, atol=1e-15)
    assert np.allclose(r3.axial_stress, r1.axial_stress + r2.axial_stress, rtol=1e-9, atol=1e-9)


def test_doubling_loads_doubles_response(tiny):
    model = _frame_model(tiny)
    doubled = {n: (2.0 * fx, 2.0 * fy) for n, (fx, fy) in model.nodal_loads.items()}
    r1 = solve_static(model)
    r2 = solve_static(model, doubled)
    assert r2.max_deflection == pytest.approx(2.0 * r1.max_deflection, rel=1e-9)
    assert np.allclose(r2.axial_stress, 2.0 * r1.axial_stress, rtol=1e-9, atol=1e-12)
