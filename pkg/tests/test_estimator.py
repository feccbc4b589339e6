import math

import numpy as np
import pytest

from conftest import dist, random_dist
from uniformity.collision import CollisionTracker
from uniformity.core import norms, tv_distance, uniform, validate
from uniformity.errors import BudgetExceeded, EpsOutOfRange, InsufficientSamples
from uniformity.estimator import (
    EstimatorConfig,
    build_l2_adversary,
    build_l2_adversary_details,
    estimate_l2_squared,
    run_until,
)
from uniformity.sampling import make_stream, make_synthetic, realize

POINT = validate([("x", 1.0)])


def test_point_mass_k1():
    est = estimate_l2_squared(make_synthetic(POINT, 1), 0.3, EstimatorConfig(k_override=1))
    assert (est.m, est.gamma) == (2, 1.0)


def test_point_mass_k10():
    est = estimate_l2_squared(make_synthetic(POINT, 1), 0.3, EstimatorConfig(k_override=10))
    assert (est.m, est.s2_final, est.gamma) == (5, 10, 1.0)


def test_default_target():
    assert EstimatorConfig().collision_target(0.25) == 1_664_000
    assert EstimatorConfig(c_constant=100).collision_target(0.5) == 1600


def test_gamma_identity_and_stopping(rng):
    for i in range(40):
        p = random_dist(rng, int(rng.integers(1, 30)))
        k = int(rng.integers(1, 200))
        est = estimate_l2_squared(make_synthetic(p, i), 0.2, EstimatorConfig(k_override=k))
        assert est.gamma * (est.m * (est.m - 1) // 2) == pytest.approx(k, rel=1e-12)
        # replay: k collisions first reached at sample m, not before
        tracker = CollisionTracker()
        for label in make_synthetic(p, i).take(est.m).tolist():
            tracker.observe(label)
            if tracker.m == est.m - 1:
                assert tracker.s2 < k
        assert tracker.s2 == est.s2_final >= k


def test_stream_source():
    est = estimate_l2_squared(make_stream(["a", "b", "a", "c", "a"]), 0.3, EstimatorConfig(k_override=3))
    assert (est.m, est.s2_final) == (5, 3)


def test_stream_runs_out():
    with pytest.raises(InsufficientSamples) as info:
        estimate_l2_squared(make_stream(["a", "b", "c"]), 0.3, EstimatorConfig(k_override=1))
    assert info.value.diagnostics["drawn"] == 3


def test_budget():
    with pytest.raises(BudgetExceeded) as info:
        estimate_l2_squared(make_synthetic(uniform(10**6), 3), 0.3,
                            EstimatorConfig(k_override=100, sample_budget=500))
    assert info.value.diagnostics["drawn"] == 500


@pytest.mark.parametrize("eps", [0.0, -0.1, 0.5, 0.7])
def test_eps_range(eps):
    with pytest.raises(EpsOutOfRange):
        estimate_l2_squared(make_synthetic(POINT, 1), eps)


def test_run_until_max_samples():
    oracle = make_synthetic(uniform(10**6), 9)
    tracker = CollisionTracker()
    assert run_until(oracle, tracker, s2_target=10**9, max_samples=1000) is False
    assert tracker.m == oracle.drawn == 1000


def test_bracket_rate_uniform100():
    p = uniform(100)
    config = EstimatorConfig(k_override=6500 * 16)  # eps = 0.5 at the full constant
    hits = 0
    for i in range(30):
        est = estimate_l2_squared(make_synthetic(p, 50 + i), 0.49, config)
        hits += 0.005 <= est.gamma <= 0.015
    assert hits >= 27


class TestAdversary:
    def test_case1_uniform4(self):
        adv = build_l2_adversary_details(uniform(4), 0.3)
        assert adv.case == 1 and adv.fresh_count == 1
        assert norms(adv.dist, 3).l2_sq / 0.25 == pytest.approx(1.9, rel=1e-9)
        assert tv_distance(uniform(4), adv.dist) == pytest.approx(adv.gamma * 0.5, abs=1e-12)

    @pytest.mark.parametrize("n, eps, fresh", [(4, 0.05, 1), (10, 0.05, 2), (2, 0.3, 18), (1, 0.3, 9)])
    def test_case2(self, n, eps, fresh):
        p = uniform(n)
        adv = build_l2_adversary_details(p, eps)
        assert adv.case == 2 and adv.fresh_count == fresh
        ratio = norms(adv.dist, 3).l2_sq / norms(p, 3).l2_sq
        assert abs(ratio - (1 - 3 * eps)) / (1 - 3 * eps) <= 2 / fresh
        assert tv_distance(p, adv.dist) == pytest.approx(3 * eps, abs=1e-12)

    def test_uniform400_is_case1(self):
        # eps = 0.05 >= ||p||_2^2 = 0.0025, so one fresh label carries the moved mass
        adv = build_l2_adversary_details(uniform(400), 0.05)
        assert adv.case == 1
        assert norms(adv.dist, 3).l2_sq == pytest.approx(1.15 * 0.0025, rel=1e-9)

    def test_random_inputs(self, rng):
        for _ in range(100):
            p = random_dist(rng, int(rng.integers(1, 40)))
            eps = float(rng.uniform(0.001, 0.33))
            adv = build_l2_adversary_details(p, eps)
            l2_sq = norms(p, 3).l2_sq
            q_sq = norms(adv.dist, 3).l2_sq
            assert math.fsum(adv.dist.probs.tolist()) == pytest.approx(1.0, abs=1e-12)
            assert tv_distance(p, adv.dist) == pytest.approx(adv.gamma * math.sqrt(l2_sq), abs=1e-12)
            if adv.case == 1:
                assert q_sq == pytest.approx((1 + 3 * eps) * l2_sq, rel=1e-9)
            else:
                assert abs(q_sq / l2_sq - (1 - 3 * eps)) <= 2 / adv.fresh_count * (1 - 3 * eps)

    def test_labels_fresh(self):
        p = dist(0.5, 0.5, labels=["_fresh0", "a"])
        q = build_l2_adversary(p, 0.3)
        assert len(set(q.labels)) == len(q.labels) == 20
        assert q.as_dict()["_fresh0"] == pytest.approx(0.05)

    def test_eps_range(self):
        with pytest.raises(EpsOutOfRange):
            build_l2_adversary(uniform(4), 1 / 3)

    def test_norm_separates_estimates(self):
        # the estimator tells p and its adversary apart by their norms
        p = realize("uniform:n=50")
        q = build_l2_adversary(p, 0.3)
        cfg = EstimatorConfig(k_override=20_000)
        a = np.mean([estimate_l2_squared(make_synthetic(p, s), 0.3, cfg).gamma for s in range(10)])
        b = np.mean([estimate_l2_squared(make_synthetic(q, s), 0.3, cfg).gamma for s in range(10)])
        assert a == pytest.approx(0.02, rel=0.03)
        assert b / a == pytest.approx(1.9, rel=0.08)
