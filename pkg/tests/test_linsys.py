import numpy as np
import pytest

from ftcbench.core.errors import (
    AlgebraicLoop,
    DegenerateDenominator,
    ImproperSystem,
    InvalidTransferFunction,
    PoleOnGrid,
    UnstableSystem,
)
from ftcbench.core.linsys import (
    FrequencyGrid,
    RationalTF,
    default_grid,
    evaluate,
    feedback,
    feedback_unity,
    freq_response,
    hinf_norm,
    is_stable,
    minreal,
    parallel,
    peak,
    poles,
    series,
    zeros,
)


def resonant(zeta=0.1, wn=1.0):
    return RationalTF((wn * wn,), (1.0, 2.0 * zeta * wn, wn * wn))


def resonant_peak(zeta):
    return 1.0 / (2.0 * zeta * np.sqrt(1.0 - zeta * zeta))


class TestRationalTF:
    def test_leading_zeros_are_trimmed(self):
        tf = RationalTF((0.0, 0.0, 2.0), (0.0, 1.0, 1.0))
        assert tf.num == (2.0,)
        assert tf.den == (1.0, 1.0)

    def test_zero_denominator_rejected(self):
        with pytest.raises(InvalidTransferFunction):
            RationalTF((1.0,), (0.0, 0.0))

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidTransferFunction):
            RationalTF((np.nan,), (1.0, 1.0))

    def test_properness(self):
        assert RationalTF((1.0,), (1.0, 1.0)).is_proper
        assert RationalTF((1.0, 0.0), (1.0, 1.0)).is_biproper
        assert not RationalTF((1.0, 0.0, 0.0), (1.0, 1.0)).is_proper

    def test_gains(self):
        tf = RationalTF((2.0, 4.0), (1.0, 8.0))
        assert tf.dc_gain() == pytest.approx(0.5)
        assert tf.high_frequency_gain() == pytest.approx(2.0)

    def test_sum_with_common_denominator(self):
        g = RationalTF((1.0,), (1.0, 1.0))
        total = g + g
        np.testing.assert_allclose(total.normalized().numerator, [2.0])
        np.testing.assert_allclose(total.normalized().denominator, [1.0, 1.0])

    def test_series_cancels_pole_zero_pair(self):
        product = RationalTF((1.0,), (1.0, 1.0)) * RationalTF((1.0, 1.0), (1.0,))
        assert product.den_degree == 0
        assert product.dc_gain() == pytest.approx(1.0)

    def test_subtraction_gives_zero(self):
        g = RationalTF((1.0,), (1.0, 2.0))
        assert (g - g).is_zero


class TestFrequencyResponse:
    def test_first_order_corner(self):
        grid = FrequencyGrid([0.1, 1.0, 10.0])
        response = freq_response(RationalTF((1.0,), (1.0, 1.0)), grid)
        assert response.magnitude[1] == pytest.approx(1.0 / np.sqrt(2.0))
        assert response.phase_deg[1] == pytest.approx(-45.0)

    def test_pole_on_grid(self):
        with pytest.raises(PoleOnGrid):
            freq_response(RationalTF((1.0,), (1.0, 0.0, 1.0)), FrequencyGrid([0.5, 1.0, 2.0]))

    def test_grid_must_increase(self):
        with pytest.raises(ValueError):
            FrequencyGrid([1.0, 1.0, 2.0])

    def test_default_grid(self):
        grid = default_grid()
        assert len(grid) == 400
        assert grid.omegas[0] == pytest.approx(1e-3)
        assert grid.omegas[-1] == pytest.approx(1e3)


class TestPolesAndStability:
    def test_static_gain_has_no_poles(self):
        with pytest.raises(DegenerateDenominator):
            poles(RationalTF.static(3.0))
        assert is_stable(RationalTF.static(3.0))

    def test_stability(self):
        assert is_stable(RationalTF((1.0,), (1.0, 3.0, 2.0)))
        assert not is_stable(RationalTF((1.0,), (1.0, -1.0)))
        assert not is_stable(RationalTF((1.0,), (1.0, 0.0)))

    def test_zeros(self):
        np.testing.assert_allclose(np.sort(zeros(RationalTF((1.0, 3.0, 2.0), (1.0, 1.0, 1.0, 1.0))).real),
                                   [-2.0, -1.0])

    def test_minreal(self):
        reduced = minreal(RationalTF((1.0, 1.0), (1.0, 3.0, 2.0)))
        assert reduced.den_degree == 1
        np.testing.assert_allclose(reduced.normalized().denominator, [1.0, 2.0])
        np.testing.assert_allclose(reduced.normalized().numerator, [1.0])

    def test_minreal_keeps_distinct_roots(self):
        tf = RationalTF((1.0, 1.5), (1.0, 3.0, 2.0))
        assert minreal(tf) == tf


class TestFeedback:
    def test_unity_feedback_of_integrator(self):
        closed = feedback_unity(RationalTF((1.0,), (1.0, 0.0)))
        np.testing.assert_allclose(closed.normalized().denominator, [1.0, 1.0])
        assert closed.dc_gain() == pytest.approx(1.0)

    def test_general_feedback(self):
        closed = feedback(RationalTF((2.0,), (1.0, 1.0)), RationalTF.static(0.5))
        np.testing.assert_allclose(closed.normalized().denominator, [1.0, 2.0])

    def test_algebraic_loop(self):
        with pytest.raises(AlgebraicLoop):
            feedback(RationalTF.static(-1.0), RationalTF.static(1.0))


class TestHinfNorm:
    def test_first_order(self):
        assert hinf_norm(RationalTF((1.0,), (1.0, 1.0))) == pytest.approx(1.0, rel=1e-4)

    def test_resonant_peak(self):
        assert hinf_norm(resonant(0.1)) == pytest.approx(resonant_peak(0.1), rel=1e-3)

    def test_static_and_zero(self):
        assert hinf_norm(RationalTF.static(-2.5)) == pytest.approx(2.5)
        assert hinf_norm(RationalTF((0.0,), (1.0, 1.0))) == 0.0

    def test_biproper_high_frequency_gain(self):
        assert hinf_norm(RationalTF((3.0, 1.0), (1.0, 1.0))) == pytest.approx(3.0, rel=1e-4)

    def test_errors(self):
        with pytest.raises(UnstableSystem):
            hinf_norm(RationalTF((1.0,), (1.0, -1.0)))
        with pytest.raises(ImproperSystem):
            hinf_norm(RationalTF((1.0, 0.0), (1.0,)))

    def test_matches_dense_grid_on_random_systems(self):
        rng = np.random.default_rng(7)
        dense = np.logspace(-3, 3, 100_000)
        for _ in range(50):
            order = int(rng.integers(1, 7))
            roots = []
            while len(roots) < order:
                real = -rng.uniform(0.1, 5.0)
                if order - len(roots) >= 2 and rng.random() < 0.5:
                    imag = rng.uniform(0.1, 5.0)
                    roots += [complex(real, imag), complex(real, -imag)]
                else:
                    roots.append(real)
            den = np.real(np.poly(roots))
            num = rng.normal(size=int(rng.integers(1, order + 1)))
            tf = RationalTF(num, den)
            reference = float(np.max(np.abs(evaluate(tf, dense))))
            assert hinf_norm(tf) == pytest.approx(reference, rel=5e-3)


def test_peak_refines_grid_maximum():
    tf = resonant(0.05)
    grid = FrequencyGrid.logspace(0.1, 10.0, 30)
    coarse = float(np.max(np.abs(evaluate(tf, grid.omegas))))
    result = peak(lambda w: np.abs(evaluate(tf, w)), grid)
    assert result.value >= coarse
    assert result.value == pytest.approx(resonant_peak(0.05), rel=1e-6)
    assert result.omega == pytest.approx(np.sqrt(1.0 - 2.0 * 0.05 ** 2), rel=1e-4)


def test_series_and_parallel_connections():
    g = RationalTF((1.0,), (1.0, 1.0))
    h = RationalTF((2.0,), (1.0, 3.0))
    omegas = np.array([0.1, 1.0, 10.0])
    np.testing.assert_allclose(evaluate(series(g, h), omegas), evaluate(g, omegas) * evaluate(h, omegas))
    np.testing.assert_allclose(evaluate(parallel(g, h), omegas), evaluate(g, omegas) + evaluate(h, omegas))
