"""Statistics module against scipy and hand-computed references."""

import math

import numpy as np
import pytest
import scipy.stats

from episode_forge.errors import EmptyInput
from episode_forge.stats import (
    chi2_sf,
    chi_square_gof,
    mean_ci95,
    paired_t_test,
    t_cdf,
    t_quantile,
    t_two_sided_p,
)


def test_identical_samples_t_zero_p_one():
    a = np.array([0.3, 1.1, -0.4, 2.0])
    res = paired_t_test(a, a.copy())
    assert res.t == 0.0 and res.p == 1.0 and res.dof == 3
    assert not res.degenerate


def test_constant_nonzero_difference_degenerates():
    a = np.array([2.0, 3.0, 4.0, 5.0])
    res = paired_t_test(a, a - 1.0)
    assert res.degenerate
    assert res.p == 0.0
    assert math.isinf(res.t) and res.t > 0


def test_small_sample_against_direct_formula():
    d = np.array([1.2, -0.3, 0.8, 0.4, -0.1])
    res = paired_t_test(d, np.zeros_like(d))
    t_expected = d.mean() / (d.std(ddof=1) / np.sqrt(d.size))
    assert res.t == pytest.approx(t_expected, rel=1e-12)
    ref = scipy.stats.ttest_rel(d, np.zeros_like(d))
    assert res.t == pytest.approx(ref.statistic, abs=1e-10)
    assert res.p == pytest.approx(ref.pvalue, abs=1e-10)


def test_random_pairs_match_scipy():
    rng = np.random.default_rng(21)
    for _ in range(50):
        n = int(rng.integers(3, 40))
        a = rng.standard_normal(n)
        b = a + rng.standard_normal(n) * rng.uniform(0.1, 2.0) + rng.uniform(-1, 1)
        res = paired_t_test(a, b)
        ref = scipy.stats.ttest_rel(a, b)
        assert res.t == pytest.approx(ref.statistic, abs=1e-8)
        assert res.p == pytest.approx(ref.pvalue, abs=1e-6)


def test_t_antisymmetric_and_shift_invariant():
    rng = np.random.default_rng(22)
    a, b = rng.standard_normal(20), rng.standard_normal(20)
    fwd, rev = paired_t_test(a, b), paired_t_test(b, a)
    assert fwd.t == pytest.approx(-rev.t) and fwd.p == pytest.approx(rev.p)
    shifted = paired_t_test(a + 5.0, b + 5.0)
    assert shifted.t == pytest.approx(fwd.t) and shifted.p == pytest.approx(fwd.p)


def test_t_tail_grid_matches_scipy():
    for dof in (1, 2, 5, 10, 30, 100):
        for t in (0.0, 0.3, 1.0, 2.5, 7.0, 20.0):
            assert t_two_sided_p(t, dof) == pytest.approx(
                2 * scipy.stats.t.sf(t, dof), abs=1e-8
            )
            assert t_cdf(t, dof) == pytest.approx(scipy.stats.t.cdf(t, dof), abs=1e-8)


def test_t_quantile_matches_scipy():
    for dof in (1, 2, 10, 50):
        for q in (0.6, 0.9, 0.975, 0.999):
            assert t_quantile(q, dof) == pytest.approx(
                scipy.stats.t.ppf(q, dof), rel=1e-6, abs=1e-8
            )


def test_ci95_constant_list_zero_halfwidth():
    mean, hw = mean_ci95([4.0, 4.0, 4.0])
    assert mean == 4.0 and hw == 0.0


def test_ci95_two_points_t_table_value():
    # sd of (0, 2) is sqrt(2); halfwidth = t_{0.975,1} * sqrt(2)/sqrt(2)
    mean, hw = mean_ci95([0.0, 2.0])
    assert mean == pytest.approx(1.0)
    assert hw == pytest.approx(12.7062, abs=1e-3)


def test_ci95_shrinks_like_inverse_sqrt_n():
    # 64x the sample should shrink the halfwidth about 8x; allow slack
    rng = np.random.default_rng(23)
    _, hw_small = mean_ci95(rng.standard_normal(100))
    _, hw_big = mean_ci95(rng.standard_normal(6400))
    assert hw_big < hw_small / 4


def test_ci95_needs_two_values():
    with pytest.raises(EmptyInput):
        mean_ci95([1.0])


def test_chi2_sf_matches_scipy():
    for dof in (1, 3, 5, 19):
        for x in (0.1, 1.0, 4.0, 15.0, 40.0):
            assert chi2_sf(x, dof) == pytest.approx(
                scipy.stats.chi2.sf(x, dof), abs=1e-10
            )


def test_chi_square_gof_uniform_counts():
    counts = [100, 100, 100, 100]
    stat, p = chi_square_gof(counts, [0.25] * 4)
    assert stat == 0.0 and p == 1.0


def test_chi_square_gof_matches_scipy():
    rng = np.random.default_rng(24)
    probs = rng.dirichlet(np.ones(6))
    counts = rng.multinomial(5000, probs)
    stat, p = chi_square_gof(counts, probs)
    ref = scipy.stats.chisquare(counts, probs * counts.sum())
    assert stat == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, abs=1e-10)


def test_unequal_lengths_rejected():
    with pytest.raises(ValueError):
        paired_t_test([1.0, 2.0], [1.0])
