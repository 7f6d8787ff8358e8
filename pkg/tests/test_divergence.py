import math

import numpy as np
import pytest

from drotrain.divergence import (
    INFINITE,
    InfiniteDivergence,
    chi2_spec,
    divergence_value,
    kl_spec,
)


def brute_force_legendre(f, y, t_hi=10.0, points=200_001):
    """Independent sup of t*y - f(t) over a dense t-grid on [0, t_hi]."""
    ts = np.linspace(0.0, t_hi, points)
    return max(t * y - f(t) for t in ts)


class TestKlSpec:
    def test_normalization(self):
        assert kl_spec().f(1.0) == 0.0

    def test_f_star_at_one(self):
        assert kl_spec().f_star(1.0) == pytest.approx(1.0, abs=1e-15)

    def test_f_at_two_matches_direct_evaluation(self):
        # direct high-precision evaluation of t*log(t) at t=2
        assert kl_spec().f(2.0) == pytest.approx(1.3862943611198906, abs=1e-15)

    def test_f_zero_continuous_extension(self):
        assert kl_spec().f(0.0) == 0.0

    def test_f_star_matches_brute_force(self):
        spec = kl_spec()
        for y in [-2.0, -0.5, 0.0, 0.7, 1.5]:
            assert spec.f_star(y) == pytest.approx(
                brute_force_legendre(spec.f, y), abs=1e-4
            )


class TestChi2Spec:
    def test_normalization(self):
        assert chi2_spec().f(1.0) == 0.0

    def test_f_star_at_zero(self):
        assert chi2_spec().f_star(0.0) == 0.0

    def test_f_star_below_kink_matches_brute_force(self):
        # sup of t*y - (t-1)^2 over t >= 0 hits the boundary t=0 for y < -2
        spec = chi2_spec()
        assert spec.f_star(-3.0) == pytest.approx(
            brute_force_legendre(spec.f, -3.0), abs=1e-8
        )
        assert spec.f_star(-3.0) == pytest.approx(-1.0, abs=1e-12)

    def test_f_star_kink_is_continuous(self):
        spec = chi2_spec()
        assert spec.f_star(-2.0) == pytest.approx(-1.0, abs=1e-15)
        assert spec.f_star(-2.0 + 1e-9) == pytest.approx(-1.0, abs=1e-8)
        assert spec.f_star(-2.0 - 1e-9) == -1.0


@pytest.mark.parametrize("spec", [kl_spec(), chi2_spec()], ids=["kl", "chi2"])
class TestSharedInvariants:
    def test_convexity_sampled(self, spec):
        rng = np.random.default_rng(0)
        for _ in range(200):
            t1, t2 = rng.uniform(1e-3, 10.0, 2)
            for alpha in (0.25, 0.5, 0.75):
                mid = spec.f(alpha * t1 + (1 - alpha) * t2)
                chord = alpha * spec.f(t1) + (1 - alpha) * spec.f(t2)
                assert mid <= chord + 1e-12

    def test_fenchel_young_sampled(self, spec):
        rng = np.random.default_rng(1)
        for _ in range(500):
            t = float(rng.uniform(1e-6, 10.0))
            y = float(rng.uniform(-3.0, 3.0))
            assert t * y <= spec.f(t) + spec.f_star(y) + 1e-12

    def test_divergence_of_distribution_with_itself_is_zero(self, spec):
        p = np.array([1 / 3, 1 / 3, 1 / 3])
        assert divergence_value(spec, p, p) == pytest.approx(0.0, abs=1e-12)

    def test_nonnegativity_on_random_simplex_pairs(self, spec):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            q = rng.exponential(1.0, n)
            q /= q.sum()
            p = rng.exponential(1.0, n)
            p /= p.sum()
            val = divergence_value(spec, q, p)
            assert isinstance(val, float)
            assert val >= -1e-12


class TestDivergenceValue:
    def test_kl_example(self):
        # direct formula: sum q_i log(q_i / p_i) = log 2
        val = divergence_value(kl_spec(), [1.0, 0.0], [0.5, 0.5])
        assert val == pytest.approx(math.log(2.0), abs=1e-12)

    def test_kl_matches_direct_formula_randomized(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            q = rng.exponential(1.0, n)
            q /= q.sum()
            p = rng.exponential(1.0, n)
            p /= p.sum()
            direct = float((q * np.log(q / p)).sum())
            assert divergence_value(kl_spec(), q, p) == pytest.approx(direct, abs=1e-12)

    def test_absolute_continuity_failure_is_tagged(self):
        val = divergence_value(kl_spec(), [0.5, 0.5], [1.0, 0.0])
        assert isinstance(val, InfiniteDivergence)
        assert val is INFINITE

    def test_shared_zero_mass_coordinate_is_fine(self):
        val = divergence_value(kl_spec(), [1.0, 0.0], [1.0, 0.0])
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="equal-length"):
            divergence_value(kl_spec(), [1.0], [0.5, 0.5])

    def test_non_normalized_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            divergence_value(kl_spec(), [0.7, 0.7], [0.5, 0.5])
        with pytest.raises(ValueError, match="sum to 1"):
            divergence_value(kl_spec(), [0.5, 0.5], [0.9, 0.3])
