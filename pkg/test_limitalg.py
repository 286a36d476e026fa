import json
import logging
import time

import numpy as np
import pytest

from dynamics import GOLDEN_THETA, DimensionError, MinimalMap, TorusPoint
from limitalg import (
    NoMatchingError, StageModel, StagePermutation, build_intertwiners, connecting_map,
    default_eps, dense_stage_defect, dense_telescoped_defect, lift, replay_manifest,
    run_manifest, stage_automorphism, stage_threshold, stage_trace, trace_invariance_gap,
)
from matalg import MatrixFunction, TrigPolynomial, normalized_trace
from matching import Permutation
from measure import grid_points

GOLDEN_A = (1, 1, 1, 1)
GOLDEN_B = (90, 145, 234, 378)


def _tests():
    return [
        MatrixFunction.scalar(TrigPolynomial.coordinate(1)),
        MatrixFunction.scalar(TrigPolynomial.coordinate(1, power=2)),
        MatrixFunction.scalar(TrigPolynomial.constant(1, 1.0)),
    ]


def _matrix_function(rng):
    def poly():
        return TrigPolynomial(1, tuple(
            ((int(rng.integers(-2, 3)),), complex(rng.normal(), rng.normal())) for _ in range(2)
        ))
    return MatrixFunction(((poly(), poly()), (poly(), poly())))


def _grid_model(stages, b=6):
    points = tuple(grid_points(1, b - 1))
    return StageModel((1,) * stages, (b,) * stages, (points,) * stages)


@pytest.fixture(scope="module")
def golden_run():
    map_ = MinimalMap.rotation(GOLDEN_THETA)
    tests = _tests()
    eps = default_eps(4)
    start = time.perf_counter()
    model = StageModel.build(map_, GOLDEN_A, GOLDEN_B, tests, eps)
    report = build_intertwiners(model, map_, tests, eps)
    elapsed = time.perf_counter() - start
    return map_, tests, eps, model, report, elapsed


def test_default_eps():
    assert default_eps(3) == [0.5, 0.25, 0.125]


def test_stage_model_validation():
    two = (TorusPoint((0.0,)), TorusPoint((0.5,)))
    with pytest.raises(ValueError):
        StageModel((0,), (3,), (two,))
    with pytest.raises(ValueError):
        StageModel((2,), (2,), ((),))
    with pytest.raises(ValueError):
        StageModel((1,), (3,), ((TorusPoint((0.0,)),),))
    with pytest.raises(ValueError):
        # a_n/b_n crescente
        StageModel((1, 2), (3, 3), (two, (TorusPoint((0.0,)),)))
    with pytest.raises(ValueError):
        StageModel((1,), (3,), (two,), permutations=(Permutation.identity(2),) * 2)


def test_stage_sizes():
    model = _grid_model(3)
    assert model.l == (5, 5, 5)
    assert [model.k(n) for n in range(4)] == [1, 6, 36, 216]
    with pytest.raises(ValueError):
        model.k(4)


def test_connecting_map_of_coordinate():
    model = StageModel((1,), (3,), ((TorusPoint((0.0,)), TorusPoint((0.5,))),))
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    phi = connecting_map(z, model, 0)
    x = TorusPoint((0.125,))
    np.testing.assert_allclose(phi(x), np.diag([z(x)[0, 0], 1.0, -1.0]), atol=1e-12)
    assert phi.size == 3


def test_connecting_map_of_identity():
    model = _grid_model(1)
    phi = connecting_map(MatrixFunction.identity(2), model, 0)
    np.testing.assert_allclose(phi(TorusPoint((0.3,))), np.eye(12))


def test_connecting_map_is_multiplicative(rng):
    model = _grid_model(2)
    f, g = _matrix_function(rng), _matrix_function(rng)
    coords = rng.random((20, 1))
    product = connecting_map(f @ g, model, 0).evaluate_many(coords)
    separate = connecting_map(f, model, 0).evaluate_many(coords) @ connecting_map(g, model, 0).evaluate_many(coords)
    np.testing.assert_allclose(product, separate, atol=1e-12)


def test_connecting_map_preserves_weighted_trace(rng):
    model = _grid_model(1)
    f = _matrix_function(rng)
    x = TorusPoint((0.37,))
    value = normalized_trace(connecting_map(f, model, 0)(x))
    expected = (normalized_trace(f(x)) + sum(normalized_trace(f(p)) for p in model.samples[0])) / 6
    assert abs(value - expected) < 1e-12
    traced, _ = stage_trace(f, model, 0, 1, x)
    assert abs(traced - value) < 1e-12


def test_connecting_map_checks_stage_and_size():
    model = _grid_model(2)
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    with pytest.raises(ValueError):
        connecting_map(z, model, 2)
    with pytest.raises(DimensionError):
        connecting_map(z, model, 1)
    assert lift(z, model, 2).size == 36


def test_stage_automorphism_without_rotation():
    identity_map = MinimalMap.rotation(0.0)
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    x = TorusPoint((0.2,))
    np.testing.assert_allclose(stage_automorphism(z, identity_map)(x), z(x))
    np.testing.assert_allclose(stage_automorphism(z, identity_map, StagePermutation.identity(1))(x), z(x))


def test_stage_automorphism_conjugates_constants():
    f = MatrixFunction.constant(np.diag([1.0, 2.0]))
    swapped = stage_automorphism(f, MinimalMap.rotation(GOLDEN_THETA), StagePermutation((1, 0)))
    np.testing.assert_allclose(swapped(TorusPoint((0.4,))), np.diag([2.0, 1.0]))
    with pytest.raises(DimensionError):
        stage_automorphism(f, MinimalMap.rotation(GOLDEN_THETA), StagePermutation.identity(3))


def test_stage_automorphism_rotates(rotation03):
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    x = TorusPoint((0.1,))
    assert stage_automorphism(z, rotation03)(x)[0, 0] == pytest.approx(np.exp(2j * np.pi * 0.4))


def test_next_stage_intertwiner():
    V = StagePermutation.identity(1).next_stage(1, 3, Permutation((1, 0)))
    assert V.indices == (0, 2, 1)
    assert V.to_intertwiner().is_unitary
    np.testing.assert_array_equal(V.amplified(2), [0, 1, 4, 5, 2, 3])


def test_exact_rotation_has_no_defect():
    model = _grid_model(2)
    map_ = MinimalMap.rotation(0.2)
    report = build_intertwiners(model, map_, _tests())
    assert report.passed
    for stage in report.stages:
        assert stage.defect == pytest.approx(0.0, abs=1e-12)
        assert stage.certified
    assert report.intertwiner(2).size == 36


def test_constant_tests_have_no_defect(rotation03):
    model = _grid_model(1)
    constant = [MatrixFunction.constant(np.diag([1.0, 3.0]))]
    report = build_intertwiners(model, rotation03, constant, [0.15])
    assert report.stages[0].defect == 0
    assert report.stages[0].certificate == 0
    assert report.stages[0].bottleneck == pytest.approx(0.1)


def test_missing_matching_reports_bottleneck(rotation03):
    model = _grid_model(1)
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    with pytest.raises(NoMatchingError) as info:
        build_intertwiners(model, rotation03, [z], [0.05])
    assert info.value.stage == 0
    assert info.value.bottleneck == pytest.approx(0.1)
    assert info.value.threshold < 0.05


def test_fixed_permutations_are_used(rotation03):
    points = tuple(grid_points(1, 5))
    model = StageModel((1,), (6,), (points,), permutations=(Permutation.identity(5),))
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    report = build_intertwiners(model, rotation03, [z], [1.0])
    assert report.stages[0].bottleneck == pytest.approx(0.3)
    assert report.stages[0].certified


def test_blockwise_defect_matches_dense_matrices(rotation03, rng):
    model = _grid_model(2)
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    report = build_intertwiners(model, rotation03, [z], [1.0, 1.0])
    coords = rng.random((6, 1))
    expected = 2 * np.sin(0.1 * np.pi)
    for n in range(2):
        assert report.stages[n].defect == pytest.approx(expected, abs=1e-9)
        assert dense_stage_defect(z, model, rotation03, n, report, coords) == pytest.approx(
            report.stages[n].defect, abs=1e-9)
    assert dense_telescoped_defect(z, model, rotation03, report, coords) == pytest.approx(
        report.telescoped, abs=1e-9)


def test_stage_threshold_ignores_constants():
    assert stage_threshold([MatrixFunction.identity(1)], 0.3) == 0.3
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    assert stage_threshold([z], 0.3) < 0.3 / (2 * np.pi)


def test_golden_four_stages(golden_run):
    map_, tests, eps, model, report, elapsed = golden_run
    assert model.l == (89, 144, 233, 377)
    for stage, eps_n in zip(report.stages, eps):
        assert stage.defect < eps_n
        assert stage.certified
        assert stage.bottleneck < stage.threshold
    assert report.telescoped < report.eps_total
    assert report.passed

    manifest = run_manifest(model, map_, tests, eps, report, seed=7)
    replayed = replay_manifest(json.loads(json.dumps(manifest)))
    assert json.dumps(replayed, sort_keys=True) == json.dumps(manifest, sort_keys=True)
    assert elapsed < 60


def test_golden_stage_traces(golden_run):
    map_, _, eps, model, report, _ = golden_run
    z = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    start = time.perf_counter()
    x0 = TorusPoint((0.0,))
    for n in range(1, model.stages + 1):
        value, oscillation = stage_trace(z, model, 0, n, x0)
        c_n = np.prod([model.a[j] / model.b[j] for j in range(n)])
        assert abs(value) <= c_n + 1e-12
        assert oscillation == pytest.approx(2 * c_n)
        bottlenecks = [s.bottleneck for s in report.stages]
        assert trace_invariance_gap(z, model, map_, 0, n, x0, bottlenecks).passed
    assert time.perf_counter() - start < 5


def test_trace_of_constant_and_projection():
    model = _grid_model(2)
    x0 = TorusPoint((0.0,))
    value, oscillation = stage_trace(MatrixFunction.constant(3 * np.eye(2)), model, 0, 2, x0)
    assert value == pytest.approx(3.0)
    assert oscillation == 0
    value, _ = stage_trace(MatrixFunction.constant(np.diag([1.0, 0.0])), model, 0, 2, x0)
    assert value == pytest.approx(0.5)
    with pytest.raises(ValueError):
        stage_trace(MatrixFunction.identity(1), model, 1, 1, x0)


def test_constant_stage_ratio_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="limitalg"):
        _grid_model(3)
    assert any("a_n/b_n non decresce" in r.getMessage() for r in caplog.records)

    caplog.clear()
    points = tuple(grid_points(1, 5))
    with caplog.at_level(logging.WARNING, logger="limitalg"):
        StageModel((1, 1), (6, 11), (points, tuple(grid_points(1, 10))))
    assert not caplog.records
