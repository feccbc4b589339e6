"""Moment-matching indistinguishability checks.

A "no" distribution q is paired with the uniform distribution on
``round(1 / ||q||_2^2)`` labels, which matches its first two moments. For a
sample budget k the two are certified indistinguishable when

* both sup-norms are at most ``1 / (500 k)``, and
* ``sum_{j>=2} |m_yes(j) - m_no(j)| / sqrt(1 + max(m_yes(j), m_no(j))) < 1/24``,

where ``m(j) = k**j * ||p||_j**j``. The infinite sum is truncated at an
adaptive ``j_max`` and both geometric tails ``sum_{j>j_max} (k ||p||_3)**j``
are added, so a passing verdict is never optimistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Distribution, fresh_labels, norms
from .errors import NoPassingK, TailDiverges

DISCREPANCY_LIMIT = 1.0 / 24.0
LINF_FACTOR = 500
TAIL_TARGET = 1e-6
J_CAP = 4096
# slack for sup-norm products that should equal 1 exactly, e.g. 500 * 20 * 1e-4
_LINF_SLACK = 1e-12


@dataclass(frozen=True)
class MomentProfile:
    k: int
    moments: dict[int, float]
    linf: float
    j_max: int
    tail_bound: float | None  # None when k * ||p||_3 >= 1

    @property
    def tail_available(self) -> bool:
        return self.tail_bound is not None


@dataclass(frozen=True)
class IndistinguishabilityReport:
    k: int
    linf_ok: bool
    discrepancy: float
    tail: float
    discrepancy_ok: bool
    passes: bool

    def as_row(self) -> dict:
        return {
            "k": self.k,
            "linf_ok": self.linf_ok,
            "discrepancy": self.discrepancy,
            "tail": self.tail,
            "passes": self.passes,
        }


def _moment(desc: np.ndarray, k: int, j: int) -> float:
    # sum (k p_i)^j keeps terms in range where k**j alone would overflow
    return math.fsum(((k * desc) ** j).tolist())


def _geometric_tail(ratio: float, j_max: int) -> float | None:
    if ratio >= 1:
        return None
    return ratio ** (j_max + 1) / (1 - ratio)


def k_moments(p: Distribution, k: int, j_max: int = 8) -> MomentProfile:
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if j_max < 3:
        raise ValueError(f"j_max must be at least 3, got {j_max}")
    desc = np.sort(p.probs[p.probs > 0])[::-1]
    moments = {j: _moment(desc, k, j) for j in range(2, j_max + 1)}
    l3 = norms(p, 3).l3_cubed ** (1 / 3)
    return MomentProfile(
        k=k,
        moments=moments,
        linf=float(desc[0]),
        j_max=j_max,
        tail_bound=_geometric_tail(k * l3, j_max),
    )


def _adaptive_j_max(ratio: float) -> int:
    """Smallest j_max >= 3 whose two tails together stay below ``TAIL_TARGET``."""
    j = 3
    while j < J_CAP and 2 * ratio ** (j + 1) / (1 - ratio) >= TAIL_TARGET:
        j += 1
    return j


def discrepancy_terms(yes: Distribution, no: Distribution, k: int,
                      j_max: int | None = None) -> tuple[float, float, int]:
    """Return ``(partial_sum, tail_bound, j_max)`` for the moment discrepancy.

    Raises :class:`TailDiverges` when ``k * ||.||_3 >= 1`` for either input.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    r_yes = k * norms(yes, 3).l3_cubed ** (1 / 3)
    r_no = k * norms(no, 3).l3_cubed ** (1 / 3)
    if r_yes >= 1 or r_no >= 1:
        raise TailDiverges(
            f"k*||p||_3 = {max(r_yes, r_no):.4g} >= 1; the moment tail has no geometric bound"
        )
    if j_max is None:
        j_max = _adaptive_j_max(max(r_yes, r_no))
    yes_desc = np.sort(yes.probs[yes.probs > 0])[::-1]
    no_desc = np.sort(no.probs[no.probs > 0])[::-1]
    terms = []
    for j in range(2, j_max + 1):
        m_yes = _moment(yes_desc, k, j)
        m_no = _moment(no_desc, k, j)
        terms.append(abs(m_yes - m_no) / math.sqrt(1 + max(m_yes, m_no)))
    tail = _geometric_tail(r_yes, j_max) + _geometric_tail(r_no, j_max)
    return math.fsum(terms), tail, j_max


def wishful_discrepancy(yes: Distribution, no: Distribution, k: int,
                        j_max: int | None = None) -> float:
    """Truncated discrepancy sum plus certified tails for both inputs."""
    partial, tail, _ = discrepancy_terms(yes, no, k, j_max)
    return partial + tail


def matched_support_size(q: Distribution) -> tuple[int, float]:
    """``round(1 / ||q||_2^2)`` and its relative rounding error."""
    target = 1.0 / norms(q, 3).l2_sq
    size = max(1, round(target))
    return size, abs(size - target) / target


def build_matched_uniform(q: Distribution) -> Distribution:
    """Uniform distribution on ``round(1 / ||q||_2^2)`` labels disjoint from q's."""
    size, _ = matched_support_size(q)
    labels = fresh_labels(q.labels, size, stem="_u")
    return Distribution(tuple(labels), np.full(size, 1.0 / size))


def evaluate_k(yes: Distribution, no: Distribution, k: int,
               j_max: int | None = None) -> IndistinguishabilityReport:
    linf = max(float(yes.probs.max()), float(no.probs.max()))
    linf_ok = LINF_FACTOR * k * linf <= 1 + _LINF_SLACK
    try:
        partial, tail, _ = discrepancy_terms(yes, no, k, j_max)
    except TailDiverges:
        # fail closed
        return IndistinguishabilityReport(k, linf_ok, math.inf, math.inf, False, False)
    disc_ok = partial + tail < DISCREPANCY_LIMIT
    return IndistinguishabilityReport(k, linf_ok, partial, tail, disc_ok, linf_ok and disc_ok)


def k_grid(k_cap: int) -> list[int]:
    """Powers of two up to ``k_cap``, with ``k_cap`` itself appended."""
    grid = []
    k = 1
    while k <= k_cap:
        grid.append(k)
        k *= 2
    if grid[-1] != k_cap:
        grid.append(k_cap)
    return grid


@dataclass(frozen=True)
class KSearch:
    best: IndistinguishabilityReport | None
    grid: list[IndistinguishabilityReport]
    monotone: bool  # no passing grid point above a failing one


def search_k(q: Distribution, k_cap: int, j_max: int | None = None) -> KSearch:
    """Scan a doubling grid of k, then bisect between the last pass and the next failure.

    Every grid point is evaluated (the discrepancy is not known to be
    monotone in k); whether the grid turned out monotone is reported.
    ``best`` is None when nothing passes.
    """
    if k_cap < 1:
        raise ValueError(f"k_cap must be at least 1, got {k_cap}")
    yes = build_matched_uniform(q)
    grid = [evaluate_k(yes, q, k, j_max) for k in k_grid(k_cap)]
    passing = [r for r in grid if r.passes]
    if not passing:
        return KSearch(best=None, grid=grid, monotone=True)
    best = max(passing, key=lambda r: r.k)
    first_fail = next((r.k for r in grid if not r.passes), None)
    monotone = first_fail is None or best.k < first_fail

    above = [r.k for r in grid if r.k > best.k]
    if above:
        lo, hi = best.k, above[0]
        while hi - lo > 1:
            mid = (lo + hi) // 2
            rep = evaluate_k(yes, q, mid, j_max)
            if rep.passes:
                lo, best = mid, rep
            else:
                hi = mid
    return KSearch(best=best, grid=grid, monotone=monotone)


def max_indistinguishable_k(q: Distribution, k_cap: int) -> IndistinguishabilityReport:
    """Largest k <= k_cap at which q and its matched uniform pass both conditions."""
    found = search_k(q, k_cap)
    if found.best is None:
        first = found.grid[0]
        raise NoPassingK(
            f"no k in [1, {k_cap}] passes: k=1 gives linf_ok={first.linf_ok}, "
            f"discrepancy+tail={first.discrepancy + first.tail:.4g}"
        )
    return found.best
