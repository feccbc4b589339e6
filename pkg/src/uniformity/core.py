"""Exact arithmetic on explicit finite distributions.

Everything here is a pure function of its inputs. Probabilities are 64-bit
floats; power sums go through :func:`math.fsum` over probabilities sorted in
descending order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .errors import (
    DuplicateLabel,
    HypothesisOutOfRange,
    InvalidDistribution,
    InvalidSMax,
    MassNotOne,
    NegativeMass,
)

# a sum within this distance of 1 is accepted untouched
MASS_TOLERANCE = 1e-9
# a sum within this distance of 1 is renormalized; anything further is rejected
RENORMALIZE_TOLERANCE = 1e-6
LEMMA_RANGE = 0.04


@dataclass(frozen=True, eq=False)
class Distribution:
    """An explicit probability mass function over opaque labels.

    Entries keep their construction order. Zero-mass entries are allowed.
    Build instances through :func:`validate` unless the invariants are
    already guaranteed by construction.
    """

    labels: tuple[Hashable, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.labels, self.probs.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.labels, self.probs.tobytes()))

    def __repr__(self) -> str:
        head = ", ".join(f"{lab!r}: {pr:.6g}" for lab, pr in list(self)[:6])
        more = ", ..." if len(self) > 6 else ""
        return f"Distribution({{{head}{more}}}, n={len(self)})"

    @property
    def entries(self) -> list[tuple[Hashable, float]]:
        return list(self)

    def as_dict(self) -> dict:
        return dict(self)

    def positive(self) -> Distribution:
        """The same distribution restricted to labels with positive mass."""
        keep = self.probs > 0
        return Distribution(
            tuple(lab for lab, k in zip(self.labels, keep) if k), self.probs[keep]
        )

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.probs > 0))


@dataclass(frozen=True)
class NormSummary:
    l1: float
    l2_sq: float
    l3_cubed: float
    j_norms: dict[int, float]
    linf: float

    def norm(self, j: int) -> float:
        """The plain l_j norm, ``j_norms[j] ** (1/j)``."""
        return self.j_norms[j] ** (1.0 / j)


@dataclass(frozen=True)
class UniformClassDistance:
    distance: float
    best_support_size: int
    best_support: tuple[Hashable, ...] = field(repr=False)


def validate(raw_entries: Iterable[tuple[Hashable, float]]) -> Distribution:
    labels = []
    probs = []
    seen = set()
    for label, prob in raw_entries:
        prob = float(prob)
        if math.isnan(prob) or math.isinf(prob):
            raise InvalidDistribution(f"probability of {label!r} is not finite: {prob}")
        if prob < 0:
            raise NegativeMass(f"label {label!r} has negative mass {prob}")
        if label in seen:
            raise DuplicateLabel(f"label {label!r} appears more than once")
        seen.add(label)
        labels.append(label)
        probs.append(prob)

    total = math.fsum(probs)
    if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
        raise MassNotOne(f"probabilities sum to {total!r}, expected 1")
    if abs(total - 1.0) > MASS_TOLERANCE:
        probs = [pr / total for pr in probs]
    return Distribution(tuple(labels), np.asarray(probs, dtype=np.float64))


def uniform(labels_or_n, *, prefix: str = "") -> Distribution:
    """Uniform distribution over the given labels, or over ``n`` labels "0".."n-1"."""
    if isinstance(labels_or_n, (int, np.integer)):
        labels = tuple(f"{prefix}{i}" for i in range(int(labels_or_n)))
    else:
        labels = tuple(labels_or_n)
    if not labels:
        raise InvalidDistribution("uniform distribution needs at least one label")
    return validate((lab, 1.0 / len(labels)) for lab in labels)


def fresh_labels(existing: Iterable[Hashable], count: int, stem: str = "_fresh") -> list[str]:
    """Return ``count`` string labels guaranteed absent from ``existing``."""
    taken = set(existing)
    out = []
    i = 0
    while len(out) < count:
        cand = f"{stem}{i}"
        if cand not in taken:
            out.append(cand)
        i += 1
    return out


def _descending(probs: np.ndarray) -> np.ndarray:
    return np.sort(probs)[::-1]


def power_sum(p: Distribution, j: int) -> float:
    """Exact-rounded ``sum_i p_i**j``."""
    return math.fsum((_descending(p.probs) ** j).tolist())


def norms(p: Distribution, j_max: int = 3) -> NormSummary:
    if j_max < 3:
        raise ValueError(f"j_max must be at least 3, got {j_max}")
    desc = _descending(p.probs)
    sums = {j: math.fsum((desc**j).tolist()) for j in range(1, j_max + 1)}
    linf = float(desc[0]) if desc.size else 0.0
    return NormSummary(l1=sums[1], l2_sq=sums[2], l3_cubed=sums[3], j_norms=sums, linf=linf)


def uniformity_gap(p: Distribution) -> float:
    """``||p||_3^3 - ||p||_2^4``; zero exactly for distributions uniform on their support."""
    summary = norms(p, 3)
    return summary.l3_cubed - summary.l2_sq**2


def tv_distance(p: Distribution, q: Distribution) -> float:
    qmap = q.as_dict()
    diffs = []
    for label, pr in p:
        diffs.append(abs(pr - qmap.pop(label, 0.0)))
    diffs.extend(qmap.values())
    return 0.5 * math.fsum(diffs)


def _class_distance_curve(desc: np.ndarray, s_max: int) -> np.ndarray:
    """Distance to the uniform distribution on the top-s labels, for s = 1..s_max.

    ``desc`` holds the positive probabilities in descending order. Sets larger
    than the positive support are padded with zero-mass labels.
    """
    n = desc.size
    prefix = np.concatenate(([0.0], np.cumsum(desc)))
    total = prefix[-1]
    s = np.arange(1, s_max + 1, dtype=np.float64)
    inv = 1.0 / s
    top = np.minimum(np.arange(1, s_max + 1), n)
    # labels among the top-s whose mass is at least 1/s
    above = np.searchsorted(-desc, -inv, side="right")
    t = np.minimum(above, top)
    inside = (prefix[t] - t * inv) + ((top - t) * inv - (prefix[top] - prefix[t]))
    padding = (s - top) * inv
    outside = total - prefix[top]
    return 0.5 * (inside + padding + outside)


def tv_to_uniform_class(p: Distribution, s_max: int | None = None) -> UniformClassDistance:
    """Exact TV distance from ``p`` to the closest distribution uniform on some set.

    For a fixed set size s the best set is the s heaviest labels, so only
    the sizes 1..s_max are scanned. ``s_max`` defaults to twice the positive
    support size.
    """
    order = np.argsort(-p.probs, kind="stable")
    positive = order[p.probs[order] > 0]
    n_pos = positive.size
    if s_max is None:
        s_max = 2 * n_pos
    if s_max < 1:
        raise InvalidSMax(f"s_max must be at least 1, got {s_max}")

    desc = p.probs[positive]
    curve = _class_distance_curve(desc, s_max)
    best = int(np.argmin(curve)) + 1

    support = [p.labels[i] for i in positive[:best]]
    if best > n_pos:
        support += fresh_labels(p.labels, best - n_pos)
    target = Distribution(tuple(support), np.full(best, 1.0 / best))
    return UniformClassDistance(
        distance=tv_distance(p, target),
        best_support_size=best,
        best_support=tuple(support),
    )


def norms_to_distance_bound(eps: float, delta: float) -> float:
    """Upper bound ``9 * cbrt(delta + 3*eps)`` on the distance to the uniform class.

    Valid when ``||p||_2^2`` is within a ``1 +- eps`` factor of ``1/N`` and
    ``||p||_3^3 <= (1 + delta)/N^2`` for some integer N. The value is returned
    unclamped and exceeds 1 for larger inputs.
    """
    if not 0 < eps < LEMMA_RANGE:
        raise HypothesisOutOfRange(f"eps must lie in (0, {LEMMA_RANGE}), got {eps}")
    if not 0 <= delta < LEMMA_RANGE:
        raise HypothesisOutOfRange(f"delta must lie in [0, {LEMMA_RANGE}), got {delta}")
    return 9.0 * (delta + 3.0 * eps) ** (1.0 / 3.0)


def lemma_parameters(p: Distribution) -> list[tuple[int, float, float]]:
    """Candidate ``(N, eps, delta)`` triples satisfying the norm hypotheses for ``p``.

    Only N in {floor, ceil} of ``1/||p||_2^2`` can make eps small, so those
    two are tried. Returned eps/delta are the smallest admissible values
    (eps bumped to a tiny positive number when the match is exact).
    """
    summary = norms(p, 3)
    guess = 1.0 / summary.l2_sq
    out = []
    for n_int in sorted({max(1, math.floor(guess)), max(1, math.ceil(guess))}):
        eps = max(abs(n_int * summary.l2_sq - 1.0), 1e-15)
        delta = max(n_int * n_int * summary.l3_cubed - 1.0, 0.0)
        if eps < LEMMA_RANGE and delta < LEMMA_RANGE:
            out.append((n_int, eps, delta))
    return out


def read_distribution(source: str | TextIO | Sequence[str]) -> Distribution:
    """Parse the ``label,prob`` text format; ``#`` lines and blank lines are skipped."""
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            return read_distribution(fh.readlines())
    entries = []
    for lineno, line in enumerate(source, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        label, sep, prob = line.rpartition(",")
        if not sep or not label:
            raise InvalidDistribution(f"line {lineno}: expected '<label>,<prob>', got {line!r}")
        try:
            value = float(prob)
        except ValueError:
            raise InvalidDistribution(f"line {lineno}: bad probability {prob!r}") from None
        entries.append((label.strip(), value))
    return validate(entries)


def write_distribution(p: Distribution, fh: TextIO, header: str | None = None) -> None:
    if header:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
    for label, prob in p:
        text = str(label)
        if "," in text or "\n" in text or not text.strip() or text.lstrip().startswith("#"):
            raise InvalidDistribution(f"label {label!r} cannot be written in the text format")
        fh.write(f"{text},{prob!r}\n")
