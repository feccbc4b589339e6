import itertools
import math
import sys

import numpy as np
import pytest

from uniformity.core import Distribution, validate


def dist(*probs, labels=None):
    labels = labels or [str(i) for i in range(len(probs))]
    return validate(zip(labels, probs))


def brute_pairs_triples(stream):
    """O(m^3) enumeration of colliding pairs and triples."""
    pairs = sum(1 for a, b in itertools.combinations(stream, 2) if a == b)
    triples = sum(1 for a, b, c in itertools.combinations(stream, 3) if a == b == c)
    return pairs, triples


def brute_class_distance(p: Distribution, pad: int):
    """Minimum TV distance over every subset of the positive support, each
    optionally padded with up to ``pad`` fresh zero-mass labels."""
    pos = [float(x) for x in p.probs if x > 0]
    n = len(pos)
    best = math.inf
    for r in range(0, n + 1):
        for subset in itertools.combinations(range(n), r):
            chosen = set(subset)
            for z in range(0, pad + 1):
                s = r + z
                if s == 0:
                    continue
                u = 1.0 / s
                inside = sum(abs(pos[i] - u) for i in chosen) + z * u
                outside = sum(pos[i] for i in range(n) if i not in chosen)
                best = min(best, 0.5 * (inside + outside))
    return best


def random_dist(rng: np.random.Generator, n: int) -> Distribution:
    kind = rng.integers(4)
    if kind == 0:
        probs = rng.dirichlet(np.ones(n))
    elif kind == 1:
        k = int(rng.integers(1, n + 1))
        probs = np.zeros(n)
        probs[:k] = 1.0 / k
        rng.shuffle(probs)
    elif kind == 2:
        probs = rng.integers(1, 4, n).astype(float)
    else:
        probs = rng.exponential(size=n) ** 3
    probs = probs / probs.sum()
    return validate((str(i), float(x)) for i, x in enumerate(probs))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=20240601))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    report = getattr(module, "REPORT", None)
    if report:
        terminalreporter.section("acceptance criteria")
        for number in sorted(report):
            terminalreporter.write_line(report[number])
