import numpy as np
import pytest
from scipy import stats

from nbdiversity.sampling import (
    AttemptStream,
    ConditioningError,
    LevyMeasure,
    PointConfiguration,
    SamplerConfig,
    block_probabilities,
    counts_to_multiplicities,
    draw_block_counts_conditioned,
    draw_partition,
    gamma_sequence,
    nbpp_counts,
    nbpp_draw,
    population_probabilities,
    substream,
    weights_untrimmed,
)


def test_gamma_sequence_moments_and_shape():
    rng = substream(1, 0)
    draws = np.array([gamma_sequence(5, rng) for _ in range(100_000)])
    assert abs(draws[:, 4].mean() - 5) < 0.05
    assert np.all(np.diff(draws, axis=1) > 0)
    ks = stats.kstest(draws[:, 0], "expon").statistic
    assert ks < 0.01


def test_weights_untrimmed_basic():
    p = weights_untrimmed(0.5, 1000, substream(2, 0))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(p) < 0)


def test_weights_concentrate_for_small_alpha():
    # P(p_1 > 0.99) is bounded by P((G1/G2)^20 < 1/99) = 0.0101^0.05 ~ 0.795
    rng = substream(3, 0)
    first = np.array([weights_untrimmed(0.05, 1000, rng)[0] for _ in range(10_000)])
    frac = np.mean(first > 0.99)
    upper = (1 / 99) ** 0.05
    assert 0.75 < frac < upper + 0.01
    assert np.median(first) > 0.999


def test_weights_reproducible_and_scale_free():
    a = weights_untrimmed(0.5, 500, substream(4, 1))
    b = weights_untrimmed(0.5, 500, substream(4, 1))
    assert np.array_equal(a, b)
    g = gamma_sequence(500, substream(4, 2))
    assert np.allclose(weights_untrimmed(0.5, 500, gammas=g), weights_untrimmed(0.5, 500, gammas=7.3 * g),
                       rtol=1e-12, atol=0)


def test_block_probabilities():
    pt = np.array([0.4, 0.3, 0.15, 0.1, 0.05])
    assert np.allclose(block_probabilities(pt, 0, 5), pt)
    assert np.allclose(block_probabilities(pt, 1, 1), [1.0])
    assert np.allclose(block_probabilities(pt, 2, 3), [0.5, 1 / 3, 1 / 6])
    with pytest.raises(IndexError):
        block_probabilities(pt, 3, 3)


def test_draw_partition_examples():
    rng = substream(5, 0)
    assert dict(draw_partition([1.0], 7, rng).items()) == {7: 1}
    outcomes = [draw_partition([0.5, 0.5], 2, rng) for _ in range(100_000)]
    frac_split = np.mean([o.k == 2 for o in outcomes])
    assert abs(frac_split - 0.5) < 0.01
    all_first = np.mean([dict(draw_partition([0.7, 0.2, 0.1], 3, rng).items()) == {3: 1} for _ in range(50_000)])
    # {3:1} arises from any single block: 0.7^3 + 0.2^3 + 0.1^3
    assert abs(all_first - (0.343 + 0.008 + 0.001)) < 0.01


def test_draw_partition_invariants_random():
    rng = substream(6, 0)
    for _ in range(100_000 // 50):
        k = rng.integers(1, 12)
        p = rng.dirichlet(np.ones(k))
        n = int(rng.integers(1, 80))
        pc = draw_partition(p, n, rng)
        assert pc.n == n and 1 <= pc.k <= min(k, n)


def test_population_probabilities_modes():
    cfg = SamplerConfig(truncation_J=50)
    for trim in ("gamma", "round"):
        p = population_probabilities(0.5, 2.0, 5, substream(7, 0), SamplerConfig(truncation_J=50, trim=trim))
        assert p.size == 5 and p.sum() == pytest.approx(1.0) and np.all(np.diff(p) <= 0)
    p = population_probabilities(0.5, None, 5, substream(7, 0), cfg)
    assert p.size == 5
    with pytest.raises(ValueError):
        population_probabilities(0.5, 3.0, 47, substream(7, 0), cfg)


def test_gamma_trim_matches_integer_offset_in_law():
    # for integer r the shifted construction is the same law as dropping r atoms
    a, r, k, N = 0.4, 2.0, 3, 20_000
    g = np.array([population_probabilities(a, r, k, substream(8, 0, i), SamplerConfig(trim="gamma"))[0]
                  for i in range(N)])
    o = np.array([population_probabilities(a, r, k, substream(8, 1, i), SamplerConfig(truncation_J=50, trim="round"))[0]
                  for i in range(N)])
    assert stats.ks_2samp(g, o).pvalue > 0.001


def test_attempt_stream_deterministic_and_conditioned():
    s1 = AttemptStream(11, (0,), 20, 4)
    s2 = AttemptStream(11, (0,), 20, 4)
    c1 = s1.conditioned(0.5, 1.3, 500)
    c2 = s2.conditioned(0.5, 1.3, 500)
    assert np.array_equal(c1, c2)
    assert c1.shape == (500, 4)
    assert np.all(c1.sum(axis=1) == 20) and np.all(c1 > 0)
    M = counts_to_multiplicities(c1, 20)
    assert np.all(M @ np.arange(1, 21) == 20) and np.all(M.sum(axis=1) == 4)


def test_attempt_stream_block_counts_match_multinomial_law():
    # allocation via sorted uniforms is multinomial given p
    s = AttemptStream(12, (0,), 5, 2, chunk_size=20_000)
    c = s.block_counts(0, 0.99, 1.0, "none")
    frac_all_first = np.mean(c[:, 0] == 5)
    partial, _, _, _ = s.chunk(0)
    w = partial[:, :2] ** (-1 / 0.99)
    p1 = w[:, 0] / w.sum(axis=1)
    assert abs(frac_all_first - np.mean(p1 ** 5)) < 4 * np.sqrt(np.mean(p1 ** 5) / 20_000) + 1e-3


def test_conditioning_cap_raises():
    s = AttemptStream(13, (0,), 30, 12)
    with pytest.raises(ConditioningError):
        s.conditioned(0.05, 0.1, 10, max_attempts=100)
    with pytest.raises(ConditioningError):
        draw_block_counts_conditioned([0.999999, 1e-6], 3, 5, substream(13, 1), max_attempts=50)


def test_fixed_population_conditioning():
    c = draw_block_counts_conditioned([0.6, 0.3, 0.1], 10, 300, substream(14, 0))
    assert c.shape == (300, 3) and np.all(c > 0) and np.all(c.sum(axis=1) == 10)


def test_levy_measure_and_points():
    m = LevyMeasure(0.5)
    assert m.mass(0.5, 1.0) == pytest.approx(0.5 ** -0.5 - 1)
    with pytest.raises(ValueError):
        m.mass(0.0, 1.0)
    with pytest.raises(ValueError):
        LevyMeasure(1.0)
    with pytest.raises(ValueError):
        PointConfiguration([0.5, 1.2])
    pts = nbpp_draw(m, 2.0, substream(15, 0))
    assert len(pts) == pts.points.size
    assert np.all((pts.points > 1e-6) & (pts.points <= 1))


def test_nbpp_draw_counts_on_interval():
    m = LevyMeasure(0.5)
    rng = substream(16, 0)
    c = np.array([nbpp_draw(m, 2.0, rng, eps=0.25).count(0.5, 1.0) for _ in range(20_000)])
    lam = m.mass(0.5, 1.0)
    assert abs(c.mean() - 2 * lam) < 3 * np.sqrt(2 * (lam + lam ** 2) / c.size)


@pytest.mark.parametrize("alpha", [0.3, 0.7])
@pytest.mark.parametrize("r", [0.5, 2.0])
def test_nbpp_total_count_moments(alpha, r):
    eps = 1e-6
    m = LevyMeasure(alpha)
    lam = m.mass(eps, 1.0)
    c = nbpp_counts(m, r, [(eps, 1.0)], 100_000, substream(17, int(alpha * 10), int(r * 10)))[:, 0].astype(float)
    mean_th, var_th = r * lam, r * (lam + lam ** 2)
    assert abs(c.mean() - mean_th) < 3 * np.sqrt(var_th / c.size)
    # SE of the sample variance from the fourth central moment
    m4 = np.mean((c - c.mean()) ** 4)
    assert abs(c.var(ddof=1) - var_th) < 3 * np.sqrt((m4 - c.var() ** 2) / c.size)


def test_nbpp_disjoint_counts_positively_correlated():
    m = LevyMeasure(0.5)
    c = nbpp_counts(m, 2.0, [(0.5, 0.75), (0.75, 1.0)], 100_000, substream(18, 0))
    rho, pval = stats.pearsonr(c[:, 0], c[:, 1])
    assert rho > 0 and pval < 0.01


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(trim="ceil")
    with pytest.raises(ValueError):
        SamplerConfig(truncation_J=0)
    with pytest.raises(ValueError):
        SamplerConfig(seed=-1)
    with pytest.raises(ValueError):
        SamplerConfig(truncation_J=10).check_truncation(8, 2.5)
