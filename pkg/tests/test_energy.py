import numpy as np
import pytest

from filmhom import (ConfigurationError, DeformationGradient,
                     DimensionMismatchError, EnergyDensity)


def test_split_roundtrip(rng):
    F = DeformationGradient(rng.standard_normal((2, 3)))
    rebuilt = DeformationGradient.from_split(F.bar, F.last_column)
    assert np.array_equal(rebuilt.entries, F.entries)


def test_evaluate_p_norm_examples():
    W = EnergyDensity.p_norm_power(2.0, 1, 2)
    assert W.evaluate([[1.0, 0.0]]) == pytest.approx(1.0)
    W3 = EnergyDensity.p_norm_power(2.0, 1, 3)
    assert W3.evaluate([[1.0, 2.0, 2.0]]) == pytest.approx(9.0)


def test_evaluate_frobenius_example():
    W = EnergyDensity.frobenius_power(4.0, 1, 2)
    assert W.evaluate([[3.0, 4.0]]) == pytest.approx(625.0)


def test_gradient_examples():
    W = EnergyDensity.p_norm_power(2.0, 1, 3)
    assert np.allclose(W.gradient([[1.0, 2.0, 2.0]]), [[2.0, 4.0, 4.0]])
    Wq = EnergyDensity.quadratic_form(np.eye(4), 2, 2)
    F = np.array([[1.0, -2.0], [0.5, 3.0]])
    assert np.allclose(Wq.gradient(F), 2.0 * F)
    W4 = EnergyDensity.p_norm_power(4.0, 1, 2)
    assert np.allclose(W4.gradient([[1.0, 0.0]]), [[4.0, 0.0]])


def test_gradient_matches_directional_derivative(rng):
    densities = [
        EnergyDensity.p_norm_power(2.0, 2, 3),
        EnergyDensity.p_norm_power(4.0, 2, 3),
        EnergyDensity.frobenius_power(3.0, 2, 3),
        EnergyDensity.quadratic_form(np.eye(6) + 0.2 * np.ones((6, 6)), 2, 3),
    ]
    h = 1e-5
    for W in densities:
        for _ in range(10):
            F = rng.uniform(-2, 2, size=(2, 3))
            G = rng.uniform(-1, 1, size=(2, 3))
            fd = (W.evaluate(F + h * G) - W.evaluate(F - h * G)) / (2 * h)
            an = float(np.sum(W.gradient(F) * G))
            assert fd == pytest.approx(an, rel=1e-4, abs=1e-8)


def test_custom_density_fd_gradient(rng):
    W = EnergyDensity.custom(lambda F: float(np.sum(F * F) + np.sum(np.abs(F) ** 4)),
                             p=4.0, m=1, n=2, gamma=1.0, beta=2.0)
    F = np.array([[0.7, -1.2]])
    expected = 2 * F + 4 * np.abs(F) ** 3 * np.sign(F)
    assert np.allclose(W.gradient(F), expected, rtol=1e-5, atol=1e-5)


def test_p_homogeneity_exact(rng):
    for W in (EnergyDensity.p_norm_power(3.0, 2, 2),
              EnergyDensity.frobenius_power(2.5, 2, 2)):
        for _ in range(10):
            F = rng.uniform(-2, 2, size=(2, 2))
            lam = rng.uniform(-3, 3)
            assert W.evaluate(lam * F) == pytest.approx(
                abs(lam) ** W.p * W.evaluate(F), rel=1e-12, abs=1e-12)


def test_evenness(rng):
    for W in (EnergyDensity.p_norm_power(2.0, 2, 2),
              EnergyDensity.frobenius_power(3.0, 2, 2)):
        for _ in range(10):
            F = rng.uniform(-2, 2, size=(2, 2))
            assert W.evaluate(-F) == pytest.approx(W.evaluate(F), rel=1e-14)


def test_convexity_sampled(rng):
    densities = [
        EnergyDensity.p_norm_power(1.5, 2, 2),
        EnergyDensity.p_norm_power(4.0, 2, 2),
        EnergyDensity.frobenius_power(2.0, 2, 2),
        EnergyDensity.quadratic_form(np.diag([1.0, 2.0, 3.0, 4.0]), 2, 2),
    ]
    for W in densities:
        for _ in range(30):
            F = rng.uniform(-2, 2, size=(2, 2))
            G = rng.uniform(-2, 2, size=(2, 2))
            lam = rng.uniform(0, 1)
            mid = W.evaluate(lam * F + (1 - lam) * G)
            assert mid <= lam * W.evaluate(F) + (1 - lam) * W.evaluate(G) + 1e-10


def test_growth_bounds(rng):
    for W in (EnergyDensity.p_norm_power(2.0, 2, 3),
              EnergyDensity.p_norm_power(4.0, 1, 3),
              EnergyDensity.p_norm_power(1.5, 1, 2),
              EnergyDensity.frobenius_power(3.0, 2, 2),
              EnergyDensity.quadratic_form(np.diag([0.5, 1.0, 2.0, 3.0]), 2, 2)):
        for _ in range(50):
            F = rng.uniform(-3, 3, size=(W.m, W.n))
            w = W.evaluate(F)
            fro = float(np.linalg.norm(F))
            assert w >= W.gamma * fro ** W.p - 1e-12
            assert w <= W.beta * (1 + fro ** W.p) + 1e-12


def test_dimension_mismatch():
    W = EnergyDensity.p_norm_power(2.0, 1, 3)
    with pytest.raises(DimensionMismatchError):
        W.evaluate([[1.0, 2.0]])
    with pytest.raises(DimensionMismatchError):
        W.gradient(np.ones((2, 3)))


def test_quadratic_form_requires_spd():
    with pytest.raises(ConfigurationError):
        EnergyDensity.quadratic_form(-np.eye(4), 2, 2)
    with pytest.raises(ConfigurationError):
        EnergyDensity.quadratic_form(np.arange(16.0).reshape(4, 4), 2, 2)


def test_p_must_exceed_one():
    with pytest.raises(ConfigurationError):
        EnergyDensity.p_norm_power(1.0, 1, 2)
    with pytest.raises(ConfigurationError):
        EnergyDensity.frobenius_power(0.5, 1, 2)


def test_custom_convexity_check_catches_violation():
    W = EnergyDensity.custom(lambda F: float(np.sqrt(np.abs(F).sum())),
                             p=2.0, m=1, n=2, gamma=0.1, beta=10.0)
    with pytest.raises(ConfigurationError):
        W.check_convexity()
