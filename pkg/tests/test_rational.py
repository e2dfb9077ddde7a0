import math

import numpy as np
import pytest

from conftest import assert_close_rel, numeric_grad
from raft.errors import DomainError
from raft.rational import (
    RationalCoefficients,
    identity_coefficients,
    load_coefficients,
    rational_backward,
    rational_forward,
    rational_forward_batch,
    save_coefficients,
)

M, N = 5, 4


def random_coeffs(rng, scale=1.0):
    return RationalCoefficients(
        tuple(rng.normal(scale=scale, size=M + 1)),
        tuple(rng.normal(scale=scale, size=N)),
    )


class TestForward:
    def test_x_zero_returns_a0(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            c = random_coeffs(rng)
            assert rational_forward(0.0, c) == c.numerator[0]

    def test_identity_configuration(self):
        c = identity_coefficients()
        assert rational_forward(2.5, c) == 2.5
        for x in np.linspace(-20, 20, 41):
            assert rational_forward(float(x), c) == float(x)

    def test_nonfinite_input_rejected(self):
        c = identity_coefficients()
        with pytest.raises(DomainError):
            rational_forward(float("nan"), c)
        with pytest.raises(DomainError):
            rational_forward(float("inf"), c)

    def test_nonfinite_coefficients_rejected(self):
        with pytest.raises(DomainError):
            RationalCoefficients((0.0, float("nan")), (0.0,))

    def test_denominator_safety(self):
        # Q >= 1 implies |F| <= |P| and finiteness everywhere
        rng = np.random.default_rng(11)
        for _ in range(200):
            c = random_coeffs(rng, scale=3.0)
            x = float(rng.uniform(-50, 50))
            p = sum(a * x**j for j, a in enumerate(c.numerator))
            f = rational_forward(x, c)
            assert math.isfinite(f)
            assert abs(f) <= abs(p) + 1e-12

    def test_horner_matches_naive_power_sum(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            c = random_coeffs(rng)
            x = float(rng.uniform(-5, 5))
            p = sum(a * x**j for j, a in enumerate(c.numerator))
            s = sum(b * x**k for k, b in enumerate(c.denominator, start=1))
            naive = p / (1.0 + abs(s))
            got = rational_forward(x, c)
            assert abs(got - naive) <= 8 * math.ulp(abs(naive) + 1e-300)

    def test_continuous_at_denominator_kink(self):
        # S(x) = x*(x-1) has a root at x=1 where |S| kinks; F must stay continuous
        c = RationalCoefficients((1.0, 0.5, 0.2, 0.0, 0.0, 0.0), (-1.0, 1.0, 0.0, 0.0))
        s_left = -1.0 * (1 - 1e-8) + (1 - 1e-8) ** 2
        s_right = -1.0 * (1 + 1e-8) + (1 + 1e-8) ** 2
        assert s_left < 0 < s_right
        f_left = rational_forward(1.0 - 1e-8, c)
        f_right = rational_forward(1.0 + 1e-8, c)
        assert abs(f_left - f_right) < 1e-6


class TestBackward:
    def test_identity_configuration_unit_slope(self):
        c = identity_coefficients()
        for x in (-3.0, -0.7, 0.0, 1.3, 9.0):
            ev = rational_backward(x, c)
            assert ev.d_input == pytest.approx(1.0, abs=1e-15)

    def test_x_zero_gradients(self):
        rng = np.random.default_rng(3)
        c = random_coeffs(rng)
        ev = rational_backward(0.0, c)
        assert ev.d_numerator == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        assert ev.d_denominator == [0.0, 0.0, 0.0, 0.0]

    def test_all_gradients_match_finite_differences(self):
        rng = np.random.default_rng(23)
        h = 1e-5
        for _ in range(25):
            c = random_coeffs(rng)
            x = float(rng.uniform(-5, 5))
            ev = rational_backward(x, c)

            fd_x = (rational_forward(x + h, c) - rational_forward(x - h, c)) / (2 * h)
            assert_close_rel(ev.d_input, fd_x)

            flat = np.array(c.to_flat())
            fd = numeric_grad(
                lambda: rational_forward(x, RationalCoefficients.from_flat(flat, M, N)), flat, h=h
            )
            assert_close_rel(np.array(ev.d_numerator), fd[: M + 1])
            assert_close_rel(np.array(ev.d_denominator), fd[M + 1 :])

    def test_subgradient_zero_at_sign_change(self):
        # at b = 0 the denominator gradient vanishes (sign(0) := 0)
        c = RationalCoefficients((0.0, 1.0, 0.3, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0))
        ev = rational_backward(1.7, c)
        assert ev.d_denominator == [0.0, 0.0, 0.0, 0.0]


class TestBatch:
    def test_constant_row(self):
        c = RationalCoefficients((0.5, 0.0, 0.0, 0.0, 0.0, 0.0), (0.0,) * 4)
        out = rational_forward_batch(np.array([0.0, 0.0]), c)
        np.testing.assert_array_equal(out, [0.5, 0.5])

    def test_identity_batch(self):
        out = rational_forward_batch(np.array([-1.0, 0.0, 2.0]), identity_coefficients())
        np.testing.assert_array_equal(out, [-1.0, 0.0, 2.0])

    def test_matches_scalar_loop_exactly(self):
        rng = np.random.default_rng(31)
        c = random_coeffs(rng)
        xs = rng.uniform(-5, 5, size=100)
        batch = rational_forward_batch(xs, c)
        loop = np.array([rational_forward(float(x), c) for x in xs])
        np.testing.assert_array_equal(batch, loop)

    def test_shape_preserved(self):
        c = identity_coefficients()
        xs = np.zeros((3, 4, 5))
        assert rational_forward_batch(xs, c).shape == (3, 4, 5)

    def test_nonfinite_batch_rejected(self):
        with pytest.raises(DomainError):
            rational_forward_batch(np.array([1.0, np.inf]), identity_coefficients())


class TestSerialization:
    def test_flat_round_trip(self):
        rng = np.random.default_rng(5)
        c = random_coeffs(rng)
        again = RationalCoefficients.from_flat(c.to_flat(), M, N)
        assert again == c

    def test_flat_length_validation(self):
        with pytest.raises(DomainError):
            RationalCoefficients.from_flat([1.0, 2.0], 5, 4)

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        c = random_coeffs(rng)
        path = tmp_path / "coeffs.json"
        save_coefficients(c, path)
        assert load_coefficients(path) == c
