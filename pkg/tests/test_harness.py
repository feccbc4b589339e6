import dataclasses

import numpy as np
import pytest

from uniformity.core import lemma_parameters, norms_to_distance_bound, tv_to_uniform_class, uniform, validate
from uniformity.errors import DegenerateFit
from uniformity.estimator import EstimatorConfig
from uniformity.harness import (
    ESTIMATE_COLUMNS,
    TEST_COLUMNS,
    Scenario,
    aggregate,
    check_distance_bound,
    check_gap_equivalence,
    check_holder,
    fit_loglog,
    lemma_sweep,
    parse_scenario,
    run_trials,
    scaling_fit,
    summary_json,
    sweep_instance,
    trials_csv,
)
from uniformity.sampling import parse_family, realize
from uniformity.tester import TesterConfig

DESK = TesterConfig(estimator=EstimatorConfig(k_override=100), k3_override=200)


def _scenario(family="uniform:n=200", trials=20, **kw):
    return Scenario(target=parse_family(family), eps=0.5, config=DESK, trials=trials, **kw)


class TestRunTrials:
    def test_seeds_and_order(self):
        stats = run_trials(_scenario(seed_base=0b1100, trials=6))
        assert [r["trial"] for r in stats.per_trial] == list(range(6))
        assert [r["seed"] for r in stats.per_trial] == [0b1100 ^ i for i in range(6)]

    def test_byte_identical_csv(self):
        a = trials_csv(run_trials(_scenario(seed_base=42)))
        b = trials_csv(run_trials(_scenario(seed_base=42)))
        assert a == b
        assert a.splitlines()[0] == ",".join(TEST_COLUMNS)
        assert a != trials_csv(run_trials(_scenario(seed_base=43)))

    def test_workers_invariant(self):
        s = _scenario(trials=9, seed_base=5)
        one = run_trials(s, workers=1)
        three = run_trials(s, workers=3)
        assert trials_csv(one) == trials_csv(three)
        assert summary_json(one) == summary_json(three)

    def test_accept_rate_counts_verdicts(self):
        stats = run_trials(_scenario("bilevel:n=1000,f=0.01,t=30", trials=25))
        accepts = sum(r["decision"] == "accept" for r in stats.per_trial)
        assert stats.accept_rate * stats.trials == pytest.approx(accepts, abs=1e-9)
        assert stats.rate_stderr == pytest.approx(
            np.sqrt(stats.accept_rate * (1 - stats.accept_rate) / 25))

    def test_uniform100_accepts(self):
        stats = run_trials(_scenario("uniform:n=100", trials=100, seed_base=2024))
        assert stats.accept_rate >= 0.7
        assert stats.failures == 0

    def test_point_mass_estimate(self, tmp_path):
        path = tmp_path / "point.txt"
        path.write_text("x,1.0\n", encoding="utf-8")
        s = Scenario(target=str(path), procedure="estimate-l2", eps=0.3,
                     config=EstimatorConfig(k_override=10), trials=5)
        stats = run_trials(s)
        assert {(r["m"], r["gamma"]) for r in stats.per_trial} == {(5, 1.0)}
        assert stats.accept_rate == 1.0
        assert trials_csv(stats).splitlines()[0] == ",".join(ESTIMATE_COLUMNS)

    def test_failures_counted_not_raised(self):
        config = TesterConfig(estimator=EstimatorConfig(k_override=100), k3_override=10**6,
                              sample_budget=500)
        s = Scenario(target=parse_family("uniform:n=100"), eps=0.5, config=config, trials=4)
        stats = run_trials(s)
        assert stats.failures == 4
        assert {r["decision"] for r in stats.per_trial} == {"BudgetExceeded"}

    def test_summary_fields(self):
        summary = run_trials(_scenario(trials=3)).summary()
        assert set(summary) == {"trials", "accept_rate", "rate_stderr", "sample_quantiles", "failures"}
        assert len(summary["sample_quantiles"]) == 3

    def test_aggregate_reorders(self):
        rows = [
            {"trial": 1, "decision": "reject", "stage1_samples": 10, "stage2_samples": 5},
            {"trial": 0, "decision": "accept", "stage1_samples": 20, "stage2_samples": 5},
        ]
        stats = aggregate(rows)
        assert [r["trial"] for r in stats.per_trial] == [0, 1]
        assert stats.accept_rate == 0.5

    def test_scenario_validation(self):
        with pytest.raises(ValueError):
            Scenario(target=parse_family("uniform:n=3"), procedure="nope")
        with pytest.raises(ValueError):
            Scenario(target=parse_family("uniform:n=3"), trials=0)
        with pytest.raises(ValueError):
            Scenario(target=parse_family("uniform:n=3"), procedure="estimate-l2", config=DESK)


class TestScenarioFile:
    def test_parse(self):
        s = parse_scenario("""
            # desk-scale tester run
            family = uniform:n=100
            procedure = test
            eps = 0.5
            trials = 100
            seed_base = 2024
            k = 100
            k3 = 200
        """)
        assert s.target == parse_family("uniform:n=100")
        assert (s.eps, s.trials, s.seed_base) == (0.5, 100, 2024)
        assert s.config == DESK

    def test_estimate(self):
        s = parse_scenario("dist = d.txt\nprocedure = estimate-l2\neps = 0.25\nc = 100\nbudget = 5000\n")
        assert s.target == "d.txt"
        assert s.config == EstimatorConfig(c_constant=100.0, sample_budget=5000)

    def test_reuse_flag(self):
        s = parse_scenario("family = uniform:n=10\nfresh_stage2 = false\n")
        assert s.config.fresh_stage2 is False

    @pytest.mark.parametrize("text", ["eps = 0.5\n", "family = uniform:n=3\nbogus = 1\n",
                                      "family = uniform:n=3\nnot a pair\n"])
    def test_bad(self, text):
        with pytest.raises(ValueError):
            parse_scenario(text)


class TestFits:
    def test_exact_power_law(self):
        ns = [100, 1000, 10_000]
        fit = fit_loglog(ns, [n ** (2 / 3) for n in ns])
        assert fit.slope == pytest.approx(2 / 3, abs=1e-9)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_constant(self):
        fit = fit_loglog([10, 100, 1000], [7, 7, 7])
        assert fit.slope == pytest.approx(0.0, abs=1e-9)
        assert fit.intercept == pytest.approx(np.log(7))

    def test_degenerate(self):
        with pytest.raises(DegenerateFit):
            fit_loglog([5, 5, 5], [1, 2, 3])
        with pytest.raises(DegenerateFit):
            scaling_fit([100, 1000], _scenario())
        with pytest.raises(DegenerateFit):
            scaling_fit([100, 100, 100], _scenario())

    def test_scaling_fit_small(self):
        fit = scaling_fit([100, 400, 1600], _scenario(trials=15))
        assert fit.n_values == (100, 400, 1600)
        assert 0.4 <= fit.slope <= 0.9


class TestLemmaSweep:
    def test_zero_violations(self):
        report = lemma_sweep(500, 64, seed=99)
        assert report.ok, report.violations[:3]
        assert report.count == 500
        assert report.lemma_instances > 0

    def test_regenerate_instance(self):
        a = sweep_instance(7, 3, 20)
        b = sweep_instance(7, 3, 20)
        assert a == b and len(a) <= 20

    def test_max_points_limit(self):
        with pytest.raises(ValueError):
            lemma_sweep(1, 65, 0)

    @pytest.mark.parametrize("n", [1, 2, 17, 64])
    def test_uniform_equality_regime(self, n):
        p = uniform(n)
        assert check_holder(p, p.probs * 3.0) == []
        assert check_gap_equivalence(p) is None
        applicable, bad = check_distance_bound(p)
        assert applicable and bad == []

    def test_crafted_bilevel(self):
        p = realize("bilevel:n=1000,f=0.5,t=0.19")
        applicable, bad = check_distance_bound(p)
        assert applicable and bad == []
        for _, eps, delta in lemma_parameters(p):
            assert eps < 0.039 and delta < 0.039
        assert tv_to_uniform_class(p).distance <= norms_to_distance_bound(0.039, 0.039)

    def test_detects_broken_bound(self, monkeypatch):
        import uniformity.core as core

        monkeypatch.setattr(core, "norms_to_distance_bound", lambda eps, delta: -1.0)
        applicable, bad = check_distance_bound(uniform(5))
        assert applicable and bad

    def test_point_mass_vector(self):
        p = validate([("a", 1.0), ("b", 0.0)])
        assert check_holder(p, np.array([10.0, 0.0])) == []


def test_scenario_is_frozen():
    with pytest.raises(dataclasses.FrozenInstanceError):
        _scenario().eps = 0.1
