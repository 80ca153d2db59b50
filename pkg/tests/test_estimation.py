import numpy as np
import pytest

from nbdiversity.esf import Params, conditional_expected_counts
from nbdiversity.estimation import (
    ExpectedCounts,
    GridSpec,
    WeightScheme,
    expected_counts,
    expected_table,
    fit_grid,
    fit_pd_alpha_baseline,
    normality_summary,
    simulation_study,
    weighted_ss,
)
from nbdiversity.partitions import PartitionCounts
from nbdiversity.sampling import SamplerConfig

PERTH_13 = PartitionCounts({1: 2, 2: 2, 3: 1, 4: 3, 9: 1})
SMALL = GridSpec(alpha_values=(0.2, 0.4, 0.6), r_values=(0.5, 1.5, 3.0), replicates_L=200)


def test_grid_defaults_and_validation():
    g = GridSpec()
    assert g.alpha_values[0] == 0.05 and g.alpha_values[-1] == 0.95 and len(g.alpha_values) == 19
    assert g.r_values[0] == 0.1 and g.r_values[-1] == 10.0 and len(g.r_values) == 100
    assert g.replicates_L == 1000
    for bad in [dict(alpha_values=()), dict(alpha_values=(0.5, 0.4)), dict(alpha_values=(0.0, 0.5)),
                dict(r_values=(-1.0, 1.0)), dict(replicates_L=0)]:
        with pytest.raises(ValueError):
            GridSpec(**bad)


def test_weighted_ss_examples():
    obs = np.array([2.0, 0.0])
    exp = ExpectedCounts(np.array([0.0, 1.0]))
    assert weighted_ss(obs, exp, WeightScheme("proportional_to_j")) == 6.0
    assert weighted_ss(obs, exp, WeightScheme("unit")) == 5.0
    assert weighted_ss(obs, ExpectedCounts(obs.copy())) == 0.0
    with pytest.raises(ValueError):
        weighted_ss(np.zeros(3), exp)
    with pytest.raises(ValueError):
        WeightScheme("squared")


def test_expected_counts_degenerate_k():
    E = expected_counts(Params(0.3, 1.0), 7, 1).E
    assert E[6] == 1 and E[:6].sum() == 0
    E = expected_counts(Params(0.3, 1.0), 7, 7).E
    assert E[0] == 7 and E[1:].sum() == 0


def test_expected_counts_conserves_items_and_is_reproducible():
    cfg = SamplerConfig(seed=5)
    e1 = expected_counts(Params(0.4, 1.3), 20, 4, cfg, L=300)
    e2 = expected_counts(Params(0.4, 1.3), 20, 4, cfg, L=300)
    assert np.array_equal(e1.E, e2.E)
    assert np.dot(np.arange(1, 21), e1.E) == pytest.approx(20)
    assert e1.E.sum() == pytest.approx(4)


def test_expected_counts_matches_table_entry():
    cfg = SamplerConfig(seed=9)
    table = expected_table(20, 3, [0.3, 0.5], [1.0, 2.0], cfg, 200)
    e = expected_counts(Params(0.5, 2.0), 20, 3, cfg, L=200).E
    assert np.array_equal(table.E[3], e)


@pytest.mark.xfail(strict=True, reason="the top-k sampling procedure is not the exact law given K=k; "
                                      "the divergence is a documented diagnostic")
def test_expected_counts_against_exact_conditional_law():
    p = Params(0.2, 1.0)
    exact = conditional_expected_counts(p, 10, 2)
    cfg = SamplerConfig(seed=3)
    from nbdiversity.sampling import AttemptStream, counts_to_multiplicities
    M = counts_to_multiplicities(AttemptStream(3, (0,), 10, 2).conditioned(0.2, 1.0, 20_000), 10)
    se = M.std(axis=0) / np.sqrt(M.shape[0]) + 1e-12
    assert np.all(np.abs(M.mean(axis=0) - exact) <= 3 * se)


def test_exact_conditional_counts_are_consistent():
    E = conditional_expected_counts(Params(0.2, 1.0), 10, 2)
    assert np.dot(np.arange(1, 11), E) == pytest.approx(10, abs=1e-9)
    assert E.sum() == pytest.approx(2, abs=1e-9)


def test_fit_grid_properties():
    cfg = SamplerConfig(seed=1)
    fit = fit_grid(PERTH_13, SMALL, cfg=cfg)
    S = fit.objectives
    assert fit.objective == pytest.approx(S.min())
    assert np.all(fit.objective <= S[np.isfinite(S)])
    assert (fit.alpha_hat, fit.r_hat) in fit.grid_points
    assert len(fit.replicate_estimates) == SMALL.replicates_L
    a = np.array([x for x, _ in fit.replicate_estimates])
    r = np.array([y for _, y in fit.replicate_estimates])
    assert fit.se_alpha == pytest.approx(np.std(a, ddof=1))
    assert fit.se_r == pytest.approx(np.std(r, ddof=1))
    again = fit_grid(PERTH_13, SMALL, cfg=cfg)
    assert (again.alpha_hat, again.r_hat, again.replicate_estimates) == (fit.alpha_hat, fit.r_hat,
                                                                         fit.replicate_estimates)
    assert np.array_equal(again.objectives, fit.objectives)


def test_fit_grid_tie_break_and_weight_scaling():
    cfg = SamplerConfig(seed=2)
    base = fit_grid(PERTH_13, SMALL, WeightScheme(), cfg)
    scaled = fit_grid(PERTH_13, SMALL, WeightScheme(scale=10.0), cfg)
    assert (base.alpha_hat, base.r_hat) == (scaled.alpha_hat, scaled.r_hat)
    # k = 1: every point ties; the first (smallest alpha, then r) wins and is flagged
    flat = fit_grid(PartitionCounts({6: 1}), SMALL, cfg=cfg)
    assert (flat.alpha_hat, flat.r_hat) == (0.2, 0.5)
    assert not flat.identifiable and flat.warnings


def test_fit_grid_excludes_failed_points():
    grid = GridSpec(alpha_values=(0.05, 0.5), r_values=(0.1, 2.0), replicates_L=50)
    obs = PartitionCounts({1: 7, 2: 1, 3: 1, 5: 2, 6: 1})
    fit = fit_grid(obs, grid, cfg=SamplerConfig(seed=4, max_attempts=3000))
    assert fit.excluded
    bad = {(a, r) for a, r, _ in fit.excluded}
    for (a, r), s in zip(fit.grid_points, fit.objectives):
        assert np.isfinite(s) == ((a, r) not in bad)
    assert (fit.alpha_hat, fit.r_hat) not in bad


def test_boundary_warning():
    grid = GridSpec(alpha_values=(0.3, 0.5), r_values=(0.1, 0.2), replicates_L=100)
    fit = fit_grid(PartitionCounts({1: 1, 3: 1, 5: 1, 6: 1, 9: 1, 13: 1, 15: 1, 16: 1}), grid,
                   cfg=SamplerConfig(seed=0))
    assert any("boundary" in w for w in fit.warnings)


def test_baseline_has_no_r():
    grid = GridSpec(alpha_values=(0.2, 0.4, 0.6, 0.8), replicates_L=100)
    fit = fit_pd_alpha_baseline(PERTH_13, grid, cfg=SamplerConfig(seed=1))
    assert fit.r_hat is None and fit.se_r is None
    assert all(r is None for _, r in fit.replicate_estimates)
    assert fit.alpha_hat in grid.alpha_values
    d = fit.to_dict()
    assert d["r_hat"] is None and len(d["per_point_objectives"]) == 4


def test_crn_off_still_reproducible():
    cfg = SamplerConfig(seed=6, common_random_numbers=False)
    a = fit_grid(PERTH_13, SMALL, cfg=cfg)
    b = fit_grid(PERTH_13, SMALL, cfg=cfg)
    assert np.array_equal(a.objectives, b.objectives)


def test_fresh_replicate_mode_runs():
    grid = GridSpec(alpha_values=(0.3, 0.6), r_values=(1.0, 2.0), replicates_L=20)
    fit = fit_grid(PERTH_13, grid, cfg=SamplerConfig(seed=7), replicate_mode="fresh")
    assert len(fit.replicate_estimates) == 20


def test_simulation_study_degenerate_k1():
    cell = simulation_study(Params(0.2, 1.0), 1, 20, L=50, N_pop=3, grid=SMALL, seed=0)
    assert not cell.identifiable and cell.mean_alpha is None


def test_simulation_study_small():
    grid = GridSpec(alpha_values=(0.1, 0.2, 0.3, 0.4), r_values=(0.5, 1.0, 2.0), replicates_L=200)
    cell = simulation_study(Params(0.2, 1.0), 2, 20, L=100, N_pop=4, grid=grid, seed=3)
    assert cell.identifiable and cell.populations == 4
    assert 0.1 <= cell.mean_alpha <= 0.4
    assert cell.se_r_alpha >= 0 and cell.se_p_alpha >= 0
    again = simulation_study(Params(0.2, 1.0), 2, 20, L=100, N_pop=4, grid=grid, seed=3)
    assert again.to_dict() == cell.to_dict()


def test_normality_summary():
    x = np.random.default_rng(0).normal(size=5000)
    s = normality_summary(x)
    assert abs(s["skewness"]) < 0.1 and abs(s["excess_kurtosis"]) < 0.2
    assert normality_summary([0.3, 0.3, 0.3])["skewness"] is None
