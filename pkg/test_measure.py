import time
from fractions import Fraction

import numpy as np
import pytest

from dynamics import GOLDEN_THETA, DimensionError, MinimalMap, TorusPoint
from measure import (
    Arc, ClosedArcSet, EmpiricalMeasure, SampleSizeError, check_measure_comparison,
    dyadic_side, empirical_integral, epsilon_dense_sample, grid_points, is_epsilon_dense,
    lebesgue_measure, matching_aware_sample, partition_box_count,
)
from matalg import TrigPolynomial


def test_arc_across_zero():
    arc = Arc(Fraction(9, 10), Fraction(1, 10))
    assert arc.length == Fraction(1, 5)
    assert arc.contains(0.0)
    assert arc.contains(0.95)
    assert not arc.contains(0.5)
    assert Arc.from_start(Fraction(9, 10), Fraction(1, 5)) == arc


def test_arc_validation_and_full_circle():
    with pytest.raises(ValueError):
        Arc(0.2, 1.5)
    with pytest.raises(ValueError):
        Arc.from_start(0.1, -0.2)
    assert Arc.from_start(0.3, 2).is_full
    assert Arc(0, 1).mask(np.array([0.0, 0.5, 0.999])).all()


def test_arc_overlap():
    a = Arc(Fraction(9, 10), Fraction(1, 10))
    b = Arc(Fraction(0), Fraction(1, 2))
    assert a.overlap(b) == Fraction(1, 10)
    assert Arc(Fraction(1, 4), Fraction(1, 2)).overlap(Arc(Fraction(1, 2), Fraction(3, 4))) == 0


def test_arc_distance_is_zero_inside():
    arc = Arc(0.2, 0.4)
    d = arc.distance(np.array([0.3, 0.5, 0.9]))
    np.testing.assert_allclose(d, [0.0, 0.1, 0.3])


def test_lebesgue_measure_of_unions():
    F = ClosedArcSet(1, ((Arc(0.0, 0.5),), (Arc(0.25, 0.75),)))
    assert lebesgue_measure(F) == pytest.approx(0.75)
    box = ClosedArcSet(2, ((Arc(0.9, 0.1), Arc(0.0, 0.5)),))
    assert lebesgue_measure(box) == pytest.approx(0.1)
    assert lebesgue_measure(ClosedArcSet.empty()) == 0.0
    assert lebesgue_measure(ClosedArcSet.point(TorusPoint((0.3,)))) == 0.0


def test_closed_arc_set_dimension_check():
    with pytest.raises(DimensionError):
        ClosedArcSet(2, ((Arc(0, 0.5),),))
    with pytest.raises(DimensionError):
        ClosedArcSet.arc(0.1, 0.2).mask(np.zeros((3, 2)))


def test_neighbourhood_is_open():
    F = ClosedArcSet.arc(0.4, 0.5)
    inside = F.neighbourhood_mask(np.array([[0.3], [0.31], [0.55]]), 0.1)
    assert inside.tolist() == [False, True, True]


def test_dyadic_side():
    assert dyadic_side(0.25) == 0.125
    assert dyadic_side(0.1) == 0.0625
    assert dyadic_side(0.6) == 1.0
    assert partition_box_count(2, 0.25) == 64


def test_mass_is_exact():
    mu = EmpiricalMeasure(tuple(grid_points(1, 3)))
    assert mu.weight == Fraction(1, 3)
    assert mu.mass(ClosedArcSet.arc(0.0, 0.5)) == Fraction(2, 3)
    assert mu.mass(ClosedArcSet.whole()) == 1


def test_empty_measure_rejected():
    with pytest.raises(ValueError):
        EmpiricalMeasure(())


def test_partition_sample_is_dense(golden):
    mu = epsilon_dense_sample(golden, 0.1, {20, 40, 89})
    assert mu.n == 40
    assert mu.box_count == 16
    assert is_epsilon_dense(mu.support, 0.1)


def test_partition_sample_on_torus(furstenberg):
    mu = epsilon_dense_sample(furstenberg, 0.3, {128, 200})
    assert mu.n == 128
    assert mu.dim == 2
    assert is_epsilon_dense(mu.support, 0.3)


def test_too_few_points(golden):
    with pytest.raises(SampleSizeError):
        epsilon_dense_sample(golden, 0.1, {10, 31})
    assert epsilon_dense_sample(golden, 0.75, {1}).n == 1


def test_grid_points():
    points = grid_points(2, 9)
    assert len(points) == 9
    assert points[4].coords == pytest.approx((1 / 3, 1 / 3))
    with pytest.raises(SampleSizeError):
        grid_points(2, 10)


def test_empirical_integral_of_coordinate_vanishes_on_grid():
    mu = EmpiricalMeasure(tuple(grid_points(1, 12)))
    assert abs(empirical_integral(mu, TrigPolynomial.coordinate(1))) < 1e-12
    assert empirical_integral(mu, lambda p: 2.0) == pytest.approx(2.0)


def test_matching_aware_sample_prefers_grid(golden):
    mu, eps_star, perm = matching_aware_sample(golden, 0.1, {89}, 0.01)
    assert mu.n == 89
    assert eps_star < 1 / 89
    assert len(perm) == 89


def test_matching_aware_sample_failure(rotation03):
    with pytest.raises(SampleSizeError):
        matching_aware_sample(rotation03, 0.2, {5}, 0.05)


def _grid_arcs():
    arcs = [ClosedArcSet.whole()]
    for i in range(100):
        for j in range(100):
            arcs.append(ClosedArcSet.arc(i / 100, j / 100))
    return arcs


@pytest.mark.parametrize("eps, n", [(0.25, 16), (0.1, 89), (0.05, 128)])
def test_sample_is_close_to_its_image(golden, eps, n):
    start = time.perf_counter()
    mu = epsilon_dense_sample(golden, eps, {n})
    report = check_measure_comparison(mu, golden, eps, _grid_arcs())
    assert report.passed, report.failures[:3]
    assert len(report.entries) == 10001
    assert time.perf_counter() - start < 20


def test_comparison_detects_clustered_sample():
    # tutti i punti in [0, 0.1]: le immagini cadono vicino a θ
    map_ = MinimalMap.rotation(GOLDEN_THETA)
    mu = EmpiricalMeasure(tuple(TorusPoint((i / 100,)) for i in range(10)))
    report = check_measure_comparison(mu, map_, 0.05, [ClosedArcSet.arc(0.0, 0.1)])
    assert not report.passed
    assert report.failures[0].mu1_F == 10


def test_comparison_on_five_grid_with_point_set():
    mu = EmpiricalMeasure(tuple(grid_points(1, 5)))
    report = check_measure_comparison(mu, MinimalMap.rotation(0.3), 0.15,
                                      [ClosedArcSet.point(TorusPoint((0.0,)))])
    entry = report.entries[0]
    assert entry.mu1_F == 1
    # ψ(0.8) = 0.1 cade in F_ε
    assert entry.mu2_F_eps == 1
    assert entry.mu2_F == 0
    assert entry.mu1_F_eps == 1
    assert report.passed
    assert mu.mass(ClosedArcSet.point(TorusPoint((0.0,)))) == Fraction(1, 5)


def test_partition_counts_per_box(golden):
    mu = epsilon_dense_sample(golden, 0.1, {89})
    side = mu.box_side
    assert side == 1 / 16
    counts = [int(ClosedArcSet.arc(i * side, (i + 1) * side).mask(mu.coords).sum()) for i in range(16)]
    # ⌊89/16⌋ = 5 punti per scatola, il resto nell'ultima
    assert counts == [5] * 15 + [14]
    assert sum(counts) == 89


@pytest.mark.parametrize("eps, n", [(0.1, 89), (0.05, 128)])
@pytest.mark.parametrize("power", [1, 2, 3])
def test_empirical_integral_error_is_bounded(golden, eps, n, power):
    mu = epsilon_dense_sample(golden, eps, {n})
    f = TrigPolynomial.coordinate(1, power=power)
    modulus = min(2.0, 2 * np.pi * power * eps)
    # ∫ e^{2πikx} dx = 0
    assert abs(empirical_integral(mu, f)) <= modulus + mu.box_count / mu.n
