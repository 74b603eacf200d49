import math

import numpy as np
import pytest
from scipy.stats import kendalltau

from gapcr import ConfigError, SimConfig, Target, evaluate_weighted, gen_sample, gen_subject, true_functionals
from gapcr.simulation import (
    DEFAULT_GRID,
    censoring_rates,
    conditional_cif1,
    conditional_cif1_inv,
    default_targets,
    run_mc_study,
    sample_frailty,
    simulated_censoring_rates,
    survival_grid,
    type1_mass,
)


def test_true_functionals_at_zero():
    tr = true_functionals(1.25, 0.0)
    assert (tr.F1, tr.F2, tr.S, tr.Lambda1, tr.Lambda2) == (0.0, 0.0, 1.0, 0.0, 0.0)


def test_true_functionals_sum_to_one():
    t = np.linspace(0, 5, 101)
    tr = true_functionals(1.25, t)
    np.testing.assert_allclose(tr.F1 + tr.F2 + tr.S, 1.0, atol=1e-15)
    np.testing.assert_allclose(tr.Lambda2, 0.25 * t)


def test_grid_matches_published_points():
    assert [round(t, 3) for t in DEFAULT_GRID] == [0.179, 0.285, 0.409, 0.555, 0.733, 0.963, 1.288]
    assert true_functionals(1.25, survival_grid()[0]).S == pytest.approx(0.8)


def test_frailty():
    rng = np.random.default_rng(0)
    assert sample_frailty(1.0, rng) == 1.0
    np.testing.assert_array_equal(sample_frailty(1.0, rng, size=5), np.ones(5))
    w = sample_frailty(1.5, rng, size=100_000)
    assert abs(w.mean() - 2.0) < 3 * math.sqrt(2.0 / w.size)
    w = sample_frailty(2.0, rng, size=100_000)
    assert abs(w.var() - 1.0) < 3 * math.sqrt(8.0 / w.size)
    with pytest.raises(ConfigError, match="theta must be"):
        sample_frailty(0.5, rng)


def test_conditional_cif_round_trip():
    rng = np.random.default_rng(1)
    theta, w, a = 1.5, 2.0, 1.25
    u = rng.uniform(0, type1_mass(w, a, theta), size=1000)
    t = conditional_cif1_inv(u, w, a, theta)
    assert np.max(np.abs(conditional_cif1(t, w, a, theta) - u)) < 1e-10


def test_conditional_cif_limits_and_domain():
    assert conditional_cif1(0.0, 2.0, 1.25, 1.5) == 0.0
    assert conditional_cif1(1e-9, 2.0, 1.25, 1.5) < 1e-6
    with pytest.raises(ValueError, match="cause 2"):
        conditional_cif1_inv(type1_mass(2.0, 1.25, 1.5), 2.0, 1.25, 1.5)
    # theta = 1 falls back to the marginal incidence
    t = conditional_cif1_inv(0.3, 1.0, 1.25, 1.0)
    assert true_functionals(1.25, t).F1 == pytest.approx(0.3, abs=1e-14)


@pytest.mark.parametrize("t", [0.285, 0.733])
def test_frailty_mixture_recovers_marginal(t):
    w = sample_frailty(1.5, np.random.default_rng(2), size=100_000)
    vals = conditional_cif1(t, w, 1.25, 1.5)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - true_functionals(1.25, t).F1) < 3 * se


def test_cause_one_share():
    # cause and gap are independent marginally, so censoring leaves the share at 0.8
    rng = np.random.default_rng(3)
    first = np.concatenate([gen_sample(SimConfig(theta=1.5), rng, n=20_000).cause[:, 0] for _ in range(5)])
    observed = first[first > 0]
    share = np.mean(observed == 1)
    assert abs(share - 0.8) < 3 * math.sqrt(0.16 / observed.size)


def test_generated_subjects_are_valid():
    cfg = SimConfig(theta=1.5)
    s = gen_sample(cfg, np.random.default_rng(4), n=300)
    assert len(s.subjects) == 300  # SubjectRecord validates every invariant
    subj = gen_subject(cfg, np.random.default_rng(5))
    assert subj.records[-1].cause == 0
    assert 0 < subj.censor_time < 10


def _weighted_se(hit, y, upper):
    x = hit / (1 - y / upper)
    return x.std(ddof=1) / math.sqrt(x.size)


def test_generator_marginals_under_censoring():
    upper = 10.0
    s = gen_sample(SimConfig(theta=1.5, censor_upper=upper), np.random.default_rng(6), n=20_000)
    grid = np.array(DEFAULT_GRID)
    tr = true_functionals(1.25, grid)
    for j in (1, 2, 3):
        targets = [Target("cif", j, cause=1), Target("sum", j), Target("csh", j, cause=1, plugin="sum")]
        vals = evaluate_weighted(s, targets, grid)
        f, surv, lam = (vals[t][0] for t in targets)
        gap, cause = s.gap[:, j - 1], s.cause[:, j - 1]
        y = np.minimum(s.cum[:, j - 1], upper * (1 - 1e-9))
        for m, t in enumerate(grid):
            se_f = _weighted_se((gap <= t) & (cause == 1), y, upper)
            se_s = _weighted_se((gap <= t) & (cause > 0), y, upper)
            assert abs(f[m] - tr.F1[m]) < 3 * se_f
            assert abs(surv[m] - tr.S[m]) < 3 * se_s
            assert abs(lam[m] - tr.Lambda1[m]) < 3 * se_f / tr.S[m]


def _paired_type1_gaps(theta, n):
    s = gen_sample(SimConfig(theta=theta, censor_upper=50.0), np.random.default_rng(7), n=n)
    both = (s.cause[:, 0] == 1) & (s.cause[:, 1] == 1)
    return s.gap[both, 0], s.gap[both, 1]


def test_frailty_induces_positive_association():
    x, y = _paired_type1_gaps(1.5, 16_000)
    assert x.size > 10_000
    tau, p = kendalltau(x[:10_000], y[:10_000])
    se = math.sqrt(2 * (2 * 10_000 + 5) / (9 * 10_000 * 9_999))
    assert tau > 3 * se


def test_independence_at_theta_one():
    x, y = _paired_type1_gaps(1.0, 16_000)
    tau, _ = kendalltau(x[:10_000], y[:10_000])
    se = math.sqrt(2 * (2 * 10_000 + 5) / (9 * 10_000 * 9_999))
    assert abs(tau) < 3 * se


def test_batched_censoring_rates():
    cfg = SimConfig(theta=1.0)
    whole = censoring_rates(gen_sample(cfg, np.random.default_rng(12), n=3000), (1, 2))
    batched = simulated_censoring_rates(cfg, 3000, np.random.default_rng(12), stages=(1, 2), batch=3000)
    assert whole == batched


def test_censoring_rates_definition():
    s = gen_sample(SimConfig(theta=1.0), np.random.default_rng(8), n=20_000)
    rates = censoring_rates(s, (1, 2))
    assert rates[0] == pytest.approx(np.mean(s.m_stage == 1))
    # closed form for stage 1: P(T1 > C) with C ~ U(0, 10), T1 ~ Exp(1.25)
    assert abs(rates[0] - (1 - math.exp(-12.5)) / 12.5) < 4 * math.sqrt(0.08 * 0.92 / s.n)


@pytest.mark.parametrize(
    "kwargs, message",
    [
        ({"theta": 0.5}, "theta must be"),
        ({"alpha_j": 1.0}, "alpha_j must exceed 1"),
        ({"censor_upper": 0.0}, "censor_upper"),
        ({"B": 1}, "B >= 2"),
        ({"alpha": 1.5}, "alpha must lie"),
    ],
)
def test_config_validation(kwargs, message):
    with pytest.raises(ConfigError, match=message):
        SimConfig(**kwargs)


def test_stage_specific_rates():
    cfg = SimConfig(alpha_j=(1.5, 2.0))
    assert cfg.alpha_at(1) == 1.5 and cfg.alpha_at(2) == 2.0 and cfg.alpha_at(5) == 2.0


def test_sample_determinism():
    cfg = SimConfig(theta=1.5)
    a = gen_sample(cfg, np.random.default_rng(9))
    b = gen_sample(cfg, np.random.default_rng(9))
    np.testing.assert_array_equal(a.gap, b.gap)
    np.testing.assert_array_equal(a.censor, b.censor)


def _summary_key(result):
    return [(r.target, r.t, r.bias, r.ese, r.bse, r.cp) for r in result.summary], result.rejection


def test_mc_study_is_deterministic_across_workers():
    cfg = SimConfig(theta=1.5, n=80, reps=4, B=10, seed=11)
    one = run_mc_study(cfg, workers=1)
    two = run_mc_study(cfg, workers=2)
    assert _summary_key(one) == _summary_key(two)
    assert one.failures == 0


def test_mc_study_small_run_shape():
    cfg = SimConfig(theta=1.0, n=100, reps=3, B=10, seed=2)
    res = run_mc_study(cfg)
    targets = default_targets()
    assert len(res.summary) == len(targets) * len(DEFAULT_GRID)
    assert set(res.rejection[0]) == {"n", "theta", "t", "F", "S1", "S2", "S3", "S4", "L1", "L2", "L3", "L4"}
    for row in res.summary:
        assert row.ese is None or row.ese >= 0
        assert 0 <= row.cp <= 1
    assert "failures" in res.manifest()


def test_single_replication_flags_missing_ese():
    res = run_mc_study(SimConfig(theta=1.0, n=100, reps=1, B=10, seed=3))
    assert all(r.ese is None and "ese_undefined" in r.flags for r in res.summary)


def test_mc_study_rejects_targets_without_truth():
    with pytest.raises(ConfigError, match="no closed-form truth"):
        run_mc_study(SimConfig(reps=1, B=2), targets=[Target("cond", 2, cause=1, prev_cause=1)])
