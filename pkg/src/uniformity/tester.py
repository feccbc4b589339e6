"""Two-stage adaptive test for uniformity over an unknown support.

Stage 1 estimates ``||p||_2^2`` to accuracy ``delta = eps**3 / 5832`` and
takes ``N = 1 / gamma`` as a surrogate support size. Stage 2 counts 3-way
collisions in a fresh sample of at most ``M = floor(cbrt(3 (1 - 4 delta) k) * N**(2/3))``
draws and rejects as soon as more than ``k`` have been seen.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .collision import CollisionTracker
from .estimator import DEFAULT_BUDGET, EstimatorConfig, check_eps, estimate_with_tracker, run_until
from .errors import SamplingFailure
from .sampling import SampleOracle

DELTA_DIVISOR = 5832
ACCEPT = "accept"
REJECT = "reject"


@dataclass(frozen=True)
class TesterConfig:
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    k3_override: int | None = None
    fresh_stage2: bool = True
    sample_budget: int | None = None

    def __post_init__(self):
        for name in ("k3_override", "sample_budget"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")

    def k3(self, eps: float) -> int:
        if self.k3_override is not None:
            return int(self.k3_override)
        return math.ceil(eps**-18)


@dataclass(frozen=True)
class Verdict:
    decision: str
    n_estimate: float
    delta_used: float
    k3_used: int
    m_budget: int
    stage1_samples: int
    stage2_samples: int
    t3_final: int

    @property
    def accepted(self) -> bool:
        return self.decision == ACCEPT

    @property
    def total_samples(self) -> int:
        return self.stage1_samples + self.stage2_samples

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"{self.decision.upper()}: {self.t3_final} 3-way collisions "
            f"(limit {self.k3_used}) in {self.stage2_samples}/{self.m_budget} stage-2 samples; "
            f"N={self.n_estimate:.6g} from {self.stage1_samples} stage-1 samples"
        )


def delta_for(eps: float) -> float:
    return eps**3 / DELTA_DIVISOR


def _icbrt_floor(x: float) -> int:
    """Largest integer r with r**3 <= x, robust to rounding in the float cube root."""
    if x <= 0:
        return 0
    r = int(round(x ** (1.0 / 3.0)))
    while r**3 > x:
        r -= 1
    while (r + 1) ** 3 <= x:
        r += 1
    return r


def expected_stage2_budget(n_estimate: float, eps: float, k3: int, delta: float | None = None) -> int:
    """``floor(cbrt(3 (1 - 4 delta) k3) * N**(2/3))``, with ``delta`` derived from ``eps`` by default."""
    if not n_estimate > 0:
        raise ValueError(f"n_estimate must be positive, got {n_estimate}")
    if delta is None:
        delta = delta_for(eps)
    # M**3 <= 3 (1 - 4 delta) k N**2, evaluated as one cube root to avoid drift
    return _icbrt_floor(3.0 * (1.0 - 4.0 * delta) * k3 * n_estimate * n_estimate)


def test_uniformity(oracle: SampleOracle, eps: float, config: TesterConfig | None = None) -> Verdict:
    config = config or TesterConfig()
    check_eps(eps, closed=True)
    delta = delta_for(eps)
    k1 = config.estimator.collision_target(delta)
    k3 = config.k3(eps)
    budget = config.sample_budget
    if budget is None:
        budget = config.estimator.sample_budget or DEFAULT_BUDGET
    start = oracle.drawn

    est, stage1 = estimate_with_tracker(oracle, k1, budget, stage="stage 1")
    n_est = 1.0 / est.gamma
    m_budget = expected_stage2_budget(n_est, eps, k3, delta)
    partial = {"stage1_samples": est.m, "n_estimate": n_est, "m_budget": m_budget, "k3_used": k3}

    tracker = stage1 if not config.fresh_stage2 else CollisionTracker()
    before = tracker.m
    try:
        run_until(oracle, tracker, t3_limit=k3, max_samples=before + m_budget,
                  budget=start + budget, stage="stage 2")
    except SamplingFailure as exc:
        exc.diagnostics.update(partial)
        raise
    stage2 = tracker.m - before

    return Verdict(
        decision=REJECT if tracker.t3 > k3 else ACCEPT,
        n_estimate=n_est,
        delta_used=delta,
        k3_used=k3,
        m_budget=m_budget,
        stage1_samples=est.m,
        stage2_samples=stage2,
        t3_final=tracker.t3,
    )


# keep pytest from collecting the public names as tests
test_uniformity.__test__ = False
TesterConfig.__test__ = False
