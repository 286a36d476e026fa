import math

import numpy as np
import pytest

from dynamics import DimensionError, MinimalMap, TorusPoint
from matalg import (
    MatrixFunction, TrigPolynomial, block_index, check_modulus, dense_intertwining_defect,
    evaluate_diag, intertwining_defect, modulus_threshold, modulus_defect_bound,
    normalized_trace, permutation_intertwiner, spectral_norm,
)
from matching import Permutation, matching_defect, min_bottleneck
from measure import grid_points


def _random_poly(rng, dim=1, terms=3):
    return TrigPolynomial(dim, tuple(
        (tuple(int(k) for k in rng.integers(-3, 4, size=dim)),
         complex(rng.normal(), rng.normal()))
        for _ in range(terms)
    ))


def test_polynomial_normalisation():
    p = TrigPolynomial(1, (((1,), 2), ((1,), -2), ((0,), 1)))
    assert p.terms == (((0,), 1 + 0j),)
    assert p.is_constant
    with pytest.raises(DimensionError):
        TrigPolynomial(2, (((1,), 1),))


def test_coordinate_times_adjoint_is_one():
    z = TrigPolynomial.coordinate(1)
    assert (z * z.adjoint()).terms == (((0,), 1 + 0j),)
    assert z(TorusPoint((0.25,))) == pytest.approx(1j)


def test_lipschitz_and_modulus():
    z = TrigPolynomial.coordinate(1)
    assert z.lipschitz == pytest.approx(2 * math.pi)
    assert z.modulus(0.01) == pytest.approx(2 * math.pi * 0.01)
    assert z.modulus(1.0) == 2.0
    p = TrigPolynomial(1, (((0,), 3), ((2,), 0.5)))
    assert p.mean == 3
    assert p.deviation == 0.5


def test_matrix_function_compose(rotation03):
    f = MatrixFunction.scalar(TrigPolynomial.coordinate(1)).compose(rotation03)
    assert f(TorusPoint((0.1,)))[0, 0] == pytest.approx(np.exp(2j * math.pi * 0.4))


def test_matrix_function_product_and_adjoint(rng):
    f = MatrixFunction(((_random_poly(rng), _random_poly(rng)), (_random_poly(rng), _random_poly(rng))))
    g = MatrixFunction(((_random_poly(rng), _random_poly(rng)), (_random_poly(rng), _random_poly(rng))))
    coords = rng.random((7, 1))
    np.testing.assert_allclose((f @ g).evaluate_many(coords),
                               f.evaluate_many(coords) @ g.evaluate_many(coords), atol=1e-10)
    np.testing.assert_allclose(f.adjoint().evaluate_many(coords),
                               np.conj(np.swapaxes(f.evaluate_many(coords), 1, 2)), atol=1e-12)


def test_matrix_function_must_be_square():
    z = TrigPolynomial.coordinate(1)
    with pytest.raises(ValueError):
        MatrixFunction(((z, z),))


def test_permutation_intertwiner_conjugation(rng):
    s = Permutation((2, 0, 1))
    W = permutation_intertwiner(s, 2)
    assert W.is_unitary
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    np.testing.assert_allclose(W.conjugate(A), W.matrix @ A @ W.matrix.conj().T)
    np.testing.assert_array_equal(block_index(s.as_array(), 2), [4, 5, 0, 1, 2, 3])


def test_spectral_norm_against_svd(rng):
    Q1, _ = np.linalg.qr(rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12)))
    Q2, _ = np.linalg.qr(rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12)))
    A = Q1 @ np.diag(np.linspace(5.0, 0.5, 12)) @ Q2
    assert spectral_norm(A) == pytest.approx(5.0, rel=1e-8)


def test_spectral_norm_on_block_diagonal():
    blocks = [np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[3.0, 0.0], [0.0, -4.0]])]
    A = np.zeros((4, 4))
    A[:2, :2], A[2:, 2:] = blocks
    assert spectral_norm(A) == pytest.approx(4.0)
    assert spectral_norm(np.diag([1.0, -7.0, 2.0])) == 7.0
    with pytest.raises(ValueError):
        spectral_norm(np.array([[np.nan]]))


def test_defect_on_five_point_grid(rotation03):
    points = grid_points(1, 5)
    eps_star, s = min_bottleneck(points, rotation03)
    f = MatrixFunction.scalar(TrigPolynomial.coordinate(1))
    expected = 2 * math.sin(0.1 * math.pi)
    assert intertwining_defect(f, points, rotation03, s) == pytest.approx(expected, abs=1e-9)
    assert dense_intertwining_defect(f, points, rotation03, s) == pytest.approx(expected, abs=1e-9)


def test_defect_never_exceeds_modulus_bound(rng):
    for _ in range(200):
        map_ = MinimalMap.rotation(float(rng.random()))
        n = int(rng.integers(4, 12))
        points = [TorusPoint((float(c),)) for c in rng.random(n)]
        s = Permutation(tuple(rng.permutation(n)))
        if rng.random() < 0.5:
            f = MatrixFunction.scalar(_random_poly(rng))
        else:
            f = MatrixFunction(((_random_poly(rng), _random_poly(rng)), (_random_poly(rng), _random_poly(rng))))
        delta = matching_defect(points, map_, s)
        defect = intertwining_defect(f, points, map_, s)
        assert defect <= modulus_defect_bound(f, delta) + 1e-12


def test_modulus_threshold():
    f = MatrixFunction.scalar(TrigPolynomial(1, (((1,), 0.5), ((-2,), 1j), ((0,), 3))))
    delta = modulus_threshold(f, 0.05)
    assert modulus_defect_bound(f, delta) < 0.05
    assert modulus_threshold(MatrixFunction.identity(2), 0.05) == math.inf
    with pytest.raises(ValueError):
        modulus_defect_bound(f, 0.0)


def test_check_modulus(rng):
    f = MatrixFunction.scalar(TrigPolynomial.coordinate(2, 1, power=2))
    assert check_modulus(f, 0.01, 500, rng).passed


def test_evaluate_diag_and_trace():
    f = MatrixFunction.identity(2)
    D = evaluate_diag(f, grid_points(1, 3))
    assert D.shape == (6, 6)
    assert normalized_trace(D) == 1
