import math

import numpy as np
import pytest

from dynamics import (
    GOLDEN_THETA, DimensionError, MinimalMap, PhasePolynomial, TorusPoint,
    apply, apply_inverse_many, apply_many, circle_distance, convergents, dist,
    favourable_sizes, lipschitz, orbit, wrap,
)


def test_wrap():
    assert wrap(1.0) == 0
    assert wrap(-0.25) == 0.75
    assert wrap(1 - 1e-16) == 0
    assert wrap(2.5) == 0.5


def test_circle_distance_is_symmetric_and_short():
    assert circle_distance(0.05, 0.95) == pytest.approx(0.1)
    assert circle_distance(0.95, 0.05) == pytest.approx(0.1)
    assert circle_distance(0.0, 0.5) == 0.5


def test_torus_point_rejects_unwrapped_coordinates():
    with pytest.raises(ValueError):
        TorusPoint((1.0,))
    with pytest.raises(ValueError):
        TorusPoint(())
    assert TorusPoint.of(1.25, -0.5).coords == (0.25, 0.5)


def test_rotation_moves_by_theta(golden):
    x = TorusPoint((0.5,))
    assert apply(golden, x).coords[0] == pytest.approx(wrap(0.5 + GOLDEN_THETA))


def test_furstenberg_step():
    map_ = MinimalMap.furstenberg(0.1, [2], [PhasePolynomial(cos=(0.0, 0.25))])
    x = TorusPoint((0.2, 0.3))
    expected = wrap(2 * 0.2 + 0.25 * math.cos(2 * math.pi * 0.2) + 0.3)
    y = apply(map_, x)
    assert y.coords[0] == pytest.approx(0.3)
    assert y.coords[1] == pytest.approx(expected)


def test_inverse_undoes_furstenberg(furstenberg, rng):
    coords = rng.random((50, 2))
    back = apply_inverse_many(furstenberg, apply_many(furstenberg, coords))
    gap = np.abs(np.mod(back - coords + 0.5, 1.0) - 0.5)
    assert gap.max() < 1e-12


def test_dimension_mismatch(golden):
    with pytest.raises(DimensionError):
        apply_many(golden, np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        dist(TorusPoint((0.1,)), TorusPoint((0.1, 0.2)))


def test_orbit(golden):
    points = orbit(golden, TorusPoint((0.0,)), 4)
    assert len(points) == 4
    assert points[0] == TorusPoint((0.0,))
    assert points[3].coords[0] == pytest.approx(wrap(3 * GOLDEN_THETA))
    with pytest.raises(ValueError):
        orbit(golden, TorusPoint((0.0,)), 0)


def test_lipschitz_constants(golden):
    assert lipschitz(golden) == 1.0
    assert lipschitz(MinimalMap.furstenberg(GOLDEN_THETA, [2])) == 3.0


def test_minimality_flag():
    assert MinimalMap.rotation(GOLDEN_THETA).minimal
    assert not MinimalMap.rotation(0.25).minimal
    assert not MinimalMap.furstenberg(GOLDEN_THETA, [0]).minimal
    assert MinimalMap.furstenberg(GOLDEN_THETA, [1, -2]).minimal


def test_map_validation():
    with pytest.raises(ValueError):
        MinimalMap.rotation(float("nan"))
    with pytest.raises(ValueError):
        MinimalMap.furstenberg(GOLDEN_THETA, [])
    with pytest.raises(ValueError):
        MinimalMap.furstenberg(GOLDEN_THETA, [1.5])


def test_map_json_restores_furstenberg():
    map_ = MinimalMap.furstenberg(GOLDEN_THETA, [1, 3], [PhasePolynomial(sin=(0.1,)), PhasePolynomial()])
    assert MinimalMap.from_json(map_.to_json()) == map_
    data = map_.to_json()
    data["dim"] = 2
    with pytest.raises(DimensionError):
        MinimalMap.from_json(data)


def test_golden_convergents_are_fibonacci():
    denominators = [c.denominator for c in convergents(GOLDEN_THETA, 12)]
    assert denominators == [1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144]
    assert favourable_sizes(GOLDEN_THETA, 80, 400) == [89, 144, 233, 377]


def test_phase_polynomial_lipschitz():
    phase = PhasePolynomial(cos=(0.5, 1.0), sin=(0.0, 0.25))
    assert phase(0.0) == pytest.approx(1.5)
    assert phase.lipschitz == pytest.approx(2 * math.pi * (1.0 + 2 * 0.25))


def test_furstenberg_without_phase_wraps_second_coordinate():
    map_ = MinimalMap.furstenberg(0.25, [1])
    y = apply(map_, TorusPoint((0.5, 0.5)))
    assert y.coords[0] == pytest.approx(0.75)
    assert y.coords[1] == pytest.approx(0.0)


@pytest.mark.parametrize("n", [55, 89, 144])
def test_golden_orbit_is_dense(golden, n):
    points = np.array([p.coords[0] for p in orbit(golden, TorusPoint((0.0,)), n)])
    samples = np.linspace(0.0, 1.0, 2000, endpoint=False)
    gaps = np.abs(np.mod(samples[:, None] - points[None, :] + 0.5, 1.0) - 0.5)
    assert gaps.min(axis=1).max() <= 2 / n


def test_furstenberg_orbit_has_distinct_points(furstenberg):
    points = orbit(furstenberg, TorusPoint((0.0, 0.0)), 100)
    assert len(set(points)) == 100


def test_dist_triangle_inequality(rng):
    for _ in range(200):
        x, y, z = (TorusPoint(tuple(c)) for c in rng.random((3, 2)))
        assert dist(x, z) <= dist(x, y) + dist(y, z) + 1e-12
