"""Adaptive estimation of ``||p||_2^2`` by sampling until k pairwise collisions.

Also builds the matching hard instance: a distribution q that is close to p
in total variation while its squared l2 norm differs by a (1 +- 3 eps)
factor.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .collision import CollisionTracker
from .core import Distribution, fresh_labels, norms
from .errors import BudgetExceeded, EpsOutOfRange, InsufficientSamples, StreamExhausted
from .sampling import SampleOracle

PAPER_C = 6500.0
DEFAULT_BUDGET = 10**9
_MAX_CHUNK = 1 << 16


@dataclass(frozen=True)
class EstimatorConfig:
    c_constant: float = PAPER_C
    k_override: int | None = None
    sample_budget: int | None = None

    def __post_init__(self):
        if not self.c_constant > 0:
            raise ValueError(f"c_constant must be positive, got {self.c_constant}")
        for name in ("k_override", "sample_budget"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")

    def collision_target(self, eps: float) -> int:
        if self.k_override is not None:
            return int(self.k_override)
        return math.ceil(self.c_constant / eps**4)


@dataclass(frozen=True)
class L2Estimate:
    gamma: float
    m: int
    k: int
    s2_final: int

    def to_dict(self) -> dict:
        return asdict(self)


def check_eps(eps: float, upper: float = 0.5, closed: bool = False) -> None:
    if not (0 < eps <= upper if closed else 0 < eps < upper):
        bracket = "]" if closed else ")"
        raise EpsOutOfRange(f"eps must lie in (0, {upper:g}{bracket}, got {eps}")


def run_until(oracle: SampleOracle, tracker: CollisionTracker, *, s2_target=None,
              t3_limit=None, max_samples=None, budget=None, stage="") -> bool:
    """Feed ``tracker`` from ``oracle`` until a stopping rule fires.

    Returns True when the collision rule fired, False when ``max_samples``
    were consumed first. ``budget`` caps the oracle's total ``drawn`` count.
    """
    chunk = 256
    while True:
        want = chunk
        if max_samples is not None:
            if tracker.m >= max_samples:
                return False
            want = min(want, max_samples - tracker.m)
        if budget is not None:
            if oracle.drawn >= budget:
                raise BudgetExceeded(
                    f"sample budget of {budget} reached during {stage or 'sampling'}",
                    {"stage": stage, "drawn": oracle.drawn, **tracker.snapshot()},
                )
            want = min(want, budget - oracle.drawn)
        try:
            window = oracle.peek(want)
        except StreamExhausted as exc:
            raise InsufficientSamples(
                f"sample stream ended during {stage or 'sampling'} after {oracle.drawn} samples",
                {"stage": stage, "drawn": oracle.drawn, **tracker.snapshot()},
            ) from exc
        used = tracker.feed(window, s2_target=s2_target, t3_limit=t3_limit)
        oracle.advance(used)
        if used < window.size or (
            (s2_target is not None and tracker.s2 >= s2_target)
            or (t3_limit is not None and tracker.t3 > t3_limit)
        ):
            return True
        chunk = min(2 * chunk, _MAX_CHUNK)


def estimate_with_tracker(oracle: SampleOracle, k: int, budget: int | None,
                          stage: str = "l2-estimation") -> tuple[L2Estimate, CollisionTracker]:
    tracker = CollisionTracker()
    limit = None if budget is None else oracle.drawn + budget
    run_until(oracle, tracker, s2_target=k, budget=limit, stage=stage)
    # the paper's rule returns k / C(m, 2) even when s2 overshoots k
    pairs = tracker.m * (tracker.m - 1) // 2
    est = L2Estimate(gamma=k / pairs, m=tracker.m, k=k, s2_final=tracker.s2)
    return est, tracker


def estimate_l2_squared(oracle: SampleOracle, eps: float,
                        config: EstimatorConfig | None = None) -> L2Estimate:
    """Sample until ``k = ceil(C / eps**4)`` pairwise collisions, return ``k / C(m, 2)``.

    With the default constant the estimate is within a ``1 +- eps`` factor
    of ``||p||_2^2`` with probability at least 3/4.
    """
    config = config or EstimatorConfig()
    check_eps(eps)
    k = config.collision_target(eps)
    budget = config.sample_budget if config.sample_budget is not None else DEFAULT_BUDGET
    est, _ = estimate_with_tracker(oracle, k, budget)
    return est


def _ceil(x: float) -> int:
    # 0.9 / 0.1 evaluates to 9.000000000000002; don't let that round up to 10
    near = round(x)
    return near if abs(x - near) <= 1e-9 * max(1.0, abs(x)) else math.ceil(x)


@dataclass(frozen=True)
class Adversary:
    dist: Distribution
    gamma: float
    moved_mass: float  # equals the TV distance to the input
    fresh_count: int
    case: int


def build_l2_adversary_details(p: Distribution, eps: float) -> Adversary:
    check_eps(eps, 1.0 / 3.0)
    l2_sq = norms(p, 3).l2_sq
    l2 = math.sqrt(l2_sq)
    if eps >= l2_sq:
        gamma = (l2 + math.sqrt(3 * eps + (1 + 3 * eps) * l2_sq)) / (1 + l2_sq)
        moved = gamma * l2
        fresh = 1
        spread = np.array([moved])
        case = 1
    else:
        gamma = 3 * eps / l2
        moved = 3 * eps
        fresh = _ceil(3 * eps / ((1 - 3 * eps) * l2_sq))
        spread = np.full(fresh, moved / fresh)
        case = 2
    labels = p.labels + tuple(fresh_labels(p.labels, fresh))
    probs = np.concatenate(((1 - moved) * p.probs, spread))
    return Adversary(Distribution(labels, probs), gamma, moved, fresh, case)


def build_l2_adversary(p: Distribution, eps: float) -> Distribution:
    """Mix ``p`` with fresh labels so that ``||q||_2^2`` moves by a 3 eps factor.

    If ``eps >= ||p||_2^2`` the moved mass sits on one fresh label and
    ``||q||_2^2 = (1 + 3 eps) ||p||_2^2``; otherwise mass ``3 eps`` is spread
    over ``ceil(3 eps / ((1 - 3 eps) ||p||_2^2))`` fresh labels and
    ``||q||_2^2 ~ (1 - 3 eps) ||p||_2^2``.
    """
    return build_l2_adversary_details(p, eps).dist
