"""The frozen reference constants are reproducible from the independent oracles."""
import math

import pytest
from scipy.special import jn_zeros

import oracles
from conftest import (BESSEL_J01_SQ, BESSEL_J11_SQ, CAP035_LAMBDA1, CAP035_LAMBDA2,
                      MODEL_FD_1_12_1)


def test_bessel_roots_from_series():
    assert oracles.first_bessel_zero(0) ** 2 == pytest.approx(BESSEL_J01_SQ, rel=1e-13)
    assert oracles.first_bessel_zero(1) ** 2 == pytest.approx(BESSEL_J11_SQ, rel=1e-13)


def test_bessel_series_agrees_with_scipy_roots():
    # cross-check of the oracle itself against an unrelated implementation
    assert oracles.first_bessel_zero(0) == pytest.approx(jn_zeros(0, 1)[0], rel=1e-13)
    assert oracles.first_bessel_zero(1) == pytest.approx(jn_zeros(1, 1)[0], rel=1e-13)


def test_legendre_shooting_hemisphere_is_two():
    assert oracles.cap_eigenvalue(math.pi / 2) == pytest.approx(2.0, abs=1e-9)


def test_legendre_shooting_small_cap():
    assert oracles.cap_eigenvalue(0.35) == pytest.approx(CAP035_LAMBDA1, rel=1e-10)
    assert oracles.cap_eigenvalue(0.35, m=1) == pytest.approx(CAP035_LAMBDA2, rel=1e-10)


def test_fd_model_oracle_reproduces_euclidean_limit():
    assert oracles.richardson_fd_model(1.0, 1.0, 1.0) == pytest.approx(math.pi ** 2, rel=1e-9)


def test_fd_model_oracle_frozen_value():
    assert oracles.fd_model_eigenvalue(1.0, 1.2, 1.0) == pytest.approx(MODEL_FD_1_12_1, rel=1e-12)
