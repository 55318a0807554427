"""Tests for H_p, omega_p and the Bellman value."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_bellman.bellman_fn import (
    BellmanParams,
    bellman_value,
    beta_log_grid,
    beta_minimizer,
    check_p,
    conjugate,
    h_p,
    h_p_prime,
    holder_split_slack,
    ineq_311_rhs,
    ineq_36_slack,
    omega_p,
    young_gap,
)
from dyadic_bellman.errors import DomainError, UsageError


class TestOmega:
    """Test the inverse of H_p."""

    def test_known_value(self):
        assert omega_p(2.0, 0.75) == pytest.approx(1.5, abs=1e-12)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 8.0])
    def test_endpoints(self, p):
        assert omega_p(p, 0.0) == pytest.approx(p / (p - 1.0), abs=1e-12)
        assert omega_p(p, 1.0) == 1.0

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 8.0])
    def test_inverse_on_grid(self, p):
        """H_p(omega_p(x)) = x on a 101-point grid."""
        for x in np.linspace(0.0, 1.0, 101):
            assert abs(h_p(p, omega_p(p, float(x))) - x) <= 1e-12

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(1.01, 64.0), x=st.floats(0.0, 1.0))
    def test_range_and_inverse(self, p, x):
        z = omega_p(p, x)
        assert 1.0 <= z <= p / (p - 1.0) * (1.0 + 1e-12)
        assert abs(h_p(p, z) - x) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(p=st.floats(1.1, 10.0), x=st.floats(0.0, 0.98), dx=st.floats(0.001, 0.01))
    def test_decreasing(self, p, x, dx):
        assert omega_p(p, x + dx) <= omega_p(p, x)

    def test_domain(self):
        with pytest.raises(DomainError, match="outside"):
            omega_p(2.0, 1.5)
        with pytest.raises(DomainError, match="outside"):
            omega_p(1.0, 0.5)
        with pytest.raises(DomainError):
            h_p(2.0, 2.5)


class TestHelpers:
    """Test small helpers."""

    def test_check_p(self):
        assert check_p(64) == 64.0
        with pytest.raises(DomainError):
            check_p(64.5)

    def test_conjugate(self):
        assert conjugate(3.0) == pytest.approx(1.5)

    def test_h_prime_sign(self):
        assert h_p_prime(2.0, 1.0) == 0.0
        assert h_p_prime(3.0, 1.2) < 0

    def test_beta_grid(self):
        grid = beta_log_grid()
        assert grid.size == 25
        assert grid[0] == pytest.approx(1e-3)
        assert grid[-1] == pytest.approx(1e3)


class TestBellmanValue:
    """Test the Bellman value and its parameters."""

    def test_constant_case(self):
        """F = f^p gives the constant bound."""
        assert bellman_value(2.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_example(self):
        """p=2, f=1, F=4/3 gives 3."""
        assert bellman_value(2.0, 1.0, 4.0 / 3.0) == pytest.approx(3.0)

    def test_holder_violation(self):
        with pytest.raises(DomainError, match="Hölder"):
            bellman_value(2.0, 2.0, 3.0)

    def test_nonpositive_f(self):
        with pytest.raises(DomainError, match="positive"):
            bellman_value(2.0, 0.0, 1.0)

    def test_params(self):
        params = BellmanParams.from_moments(2.0, 1.0, 4.0 / 3.0)
        assert params.c == pytest.approx(1.5)
        assert params.beta_star == pytest.approx(0.5)
        assert params.q == pytest.approx(2.0)
        assert params.bound == pytest.approx(3.0)
        assert params.ratio == pytest.approx(0.75)

    @settings(max_examples=100, deadline=None)
    @given(p=st.floats(1.1, 8.0), f=st.floats(0.1, 10.0), t=st.floats(1.0, 100.0))
    def test_between_lp_and_trivial(self, p, f, t):
        """F <= B_p(f, F) <= (p/(p-1))^p F."""
        F = f ** p * t
        b = bellman_value(p, f, F)
        assert F * (1.0 - 1e-9) <= b <= (p / (p - 1.0)) ** p * F * (1.0 + 1e-9)


class TestScalarInequalities:
    """Test the scalar inequalities the proofs rest on."""

    @settings(max_examples=200, deadline=None)
    @given(p=st.floats(1.1, 8.0), beta=st.floats(1e-3, 1e3), x=st.floats(0.0, 1.0))
    def test_ineq_36(self, p, beta, x):
        assert ineq_36_slack(p, beta, x) >= -1e-12

    def test_ineq_36_zero_at_origin(self):
        assert ineq_36_slack(2.0, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(p=st.floats(1.1, 8.0), t=st.floats(0.0, 10.0))
    def test_young(self, p, t):
        assert young_gap(p, t) >= -1e-12

    def test_young_zero_at_one(self):
        assert young_gap(3.0, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_holder_split(self):
        """Equality when the ratios lambda_i/sigma_i agree."""
        assert holder_split_slack(2.0, [1.0, 2.0], [0.5, 1.0]) == pytest.approx(0.0, abs=1e-12)
        assert holder_split_slack(2.0, [1.0, 0.0], [0.5, 0.5]) > 0

    def test_holder_split_lengths(self):
        with pytest.raises(UsageError, match="equal nonzero lengths"):
            holder_split_slack(2.0, [1.0], [1.0, 2.0])

    def test_ineq_311_minimizer(self):
        """beta_minimizer sits at the minimum of the right-hand side."""
        p, h, phi_p = 2.0, 2.0, 4.0
        beta = beta_minimizer(p, h, phi_p)
        assert beta == pytest.approx(math.sqrt(0.5), rel=1e-9)
        best = ineq_311_rhs(p, beta, phi_p, h)
        for b in (beta * 0.9, beta * 1.1):
            assert ineq_311_rhs(p, b, phi_p, h) >= best
