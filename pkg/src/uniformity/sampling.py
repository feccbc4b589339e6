"""Pull-based sample oracles and synthetic distribution families.

Synthetic sampling uses the Philox-4x64-10 counter-based generator keyed by
the 64-bit seed, read through ``random_raw`` so the output does not depend
on numpy's higher-level distribution code. Each sample consumes exactly two
raw 64-bit words: the first picks an alias-table column, the second the
biased coin. The label sequence is therefore fixed by (distribution, seed)
alone, whatever chunk sizes a consumer asks for.

Oracles hand out dense integer indices; ``oracle.labels[i]`` maps back to
the original token.
"""

from __future__ import annotations

import math
from collections.abc import Hashable, Iterable, Iterator
from dataclasses import dataclass, field

import numpy as np

from .core import Distribution, validate
from .errors import BadFamilyParams, StreamExhausted

_U53 = 1.0 / 9007199254740992.0  # 2**-53
_BLOCK = 8192
SEED_MASK = (1 << 64) - 1


class AliasTable:
    """Walker/Vose alias table: O(n) construction, O(1) per draw."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=np.float64)
        n = probs.size
        if n == 0:
            raise ValueError("cannot build an alias table over zero outcomes")
        scaled = (probs * (n / math.fsum(probs.tolist()))).tolist()
        threshold = [1.0] * n
        alias = list(range(n))
        small = [i for i, w in enumerate(scaled) if w < 1.0]
        large = [i for i, w in enumerate(scaled) if w >= 1.0]
        while small and large:
            lo = small.pop()
            hi = large.pop()
            threshold[lo] = scaled[lo]
            alias[lo] = hi
            scaled[hi] = (scaled[hi] + scaled[lo]) - 1.0
            if scaled[hi] < 1.0:
                small.append(hi)
            else:
                large.append(hi)
        # leftovers are 1 up to rounding, except true zeros stranded by it
        anchor = int(np.argmax(probs))
        for i in small + large:
            if probs[i] > 0:
                threshold[i] = 1.0
            else:
                threshold[i], alias[i] = 0.0, anchor
        self.n = n
        self.threshold = np.array(threshold)
        self.alias = np.array(alias, dtype=np.int64)

    def sample_raw(self, raw: np.ndarray) -> np.ndarray:
        """Map pairs of raw 64-bit words (shape ``(k, 2)``) to k outcome indices."""
        u_col = (raw[:, 0] >> np.uint64(11)).astype(np.float64) * _U53
        u_coin = (raw[:, 1] >> np.uint64(11)).astype(np.float64) * _U53
        col = np.minimum((u_col * self.n).astype(np.int64), self.n - 1)
        return np.where(u_coin < self.threshold[col], col, self.alias[col])


class SampleOracle:
    """A single-consumer source of sample indices with a lookahead buffer.

    Consumers may :meth:`peek` at upcoming samples and then :meth:`advance`
    past the ones they actually use, so adaptive procedures never lose
    samples they did not look at. ``drawn`` counts consumed samples only.
    """

    def __init__(self, labels):
        self.labels = labels
        self.drawn = 0
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self, need: int) -> None:
        raise NotImplementedError

    def peek(self, size: int) -> np.ndarray:
        """Up to ``size`` upcoming indices without consuming them.

        Raises :class:`StreamExhausted` when no sample at all is available.
        """
        avail = self._buf.size - self._pos
        if avail < size:
            self._refill(size - avail)
            avail = self._buf.size - self._pos
        if avail == 0:
            raise StreamExhausted(f"sample source exhausted after {self.drawn} samples")
        return self._buf[self._pos : self._pos + min(size, avail)]

    def advance(self, count: int) -> None:
        if count > self._buf.size - self._pos:
            raise ValueError("cannot advance past peeked samples")
        self._pos += count
        self.drawn += count

    def take(self, size: int) -> np.ndarray:
        """Consume exactly ``size`` indices.

        Raises :class:`StreamExhausted` without consuming anything when fewer
        than ``size`` samples remain.
        """
        if size <= 0:
            return np.empty(0, dtype=np.int64)
        chunk = self.peek(size)
        if chunk.size < size:
            raise StreamExhausted(
                f"sample source exhausted: wanted {size}, {chunk.size} left after {self.drawn}"
            )
        out = chunk.copy()
        self.advance(size)
        return out

    def pull_index(self) -> int:
        idx = int(self.peek(1)[0])
        self.advance(1)
        return idx

    def pull(self) -> Hashable:
        return self.labels[self.pull_index()]

    def _compact(self) -> None:
        if self._pos:
            self._buf = self._buf[self._pos :]
            self._pos = 0


class SyntheticOracle(SampleOracle):
    def __init__(self, dist: Distribution, seed: int, table: AliasTable | None = None):
        super().__init__(dist.labels)
        self.dist = dist
        self.seed = int(seed) & SEED_MASK
        self.table = table if table is not None else AliasTable(dist.probs)
        self._bitgen = np.random.Philox(key=self.seed)

    def _refill(self, need: int) -> None:
        self._compact()
        blocks = -(-need // _BLOCK)
        raw = self._bitgen.random_raw(2 * blocks * _BLOCK).reshape(-1, 2)
        self._buf = np.concatenate((self._buf, self.table.sample_raw(raw)))

    def __repr__(self) -> str:
        return f"SyntheticOracle(seed={self.seed}, drawn={self.drawn}, n={len(self.labels)})"


class StreamOracle(SampleOracle):
    """Oracle over a line-oriented source, one token per line.

    Tokens are interned into dense indices in order of first appearance.
    Blank lines are skipped.
    """

    def __init__(self, reader: Iterable[str], chunk: int = 4096):
        super().__init__([])
        self._lines: Iterator[str] = iter(reader)
        self._index: dict[str, int] = {}
        self._chunk = chunk
        self.exhausted = False

    def _refill(self, need: int) -> None:
        if self.exhausted:
            return
        self._compact()
        want = max(need, self._chunk)
        got = []
        index = self._index
        labels = self.labels
        for line in self._lines:
            token = line.strip()
            if not token:
                continue
            idx = index.get(token)
            if idx is None:
                idx = index[token] = len(labels)
                labels.append(token)
            got.append(idx)
            if len(got) >= want:
                break
        else:
            self.exhausted = True
        if got:
            self._buf = np.concatenate((self._buf, np.asarray(got, dtype=np.int64)))

    def __repr__(self) -> str:
        return f"StreamOracle(drawn={self.drawn}, distinct={len(self.labels)})"


def make_synthetic(p: Distribution, seed: int, table: AliasTable | None = None) -> SyntheticOracle:
    """Seeded i.i.d. oracle for ``p``. Pass a prebuilt ``table`` to skip the O(n) build."""
    return SyntheticOracle(p, seed, table)


def make_stream(reader: Iterable[str]) -> StreamOracle:
    return StreamOracle(reader)


def trial_seed(seed_base: int, trial: int) -> int:
    return (int(seed_base) ^ int(trial)) & SEED_MASK


# --- distribution families -------------------------------------------------

_ALIASES = {
    "uniform": {"n": "n"},
    "bilevel": {"n": "n", "f": "heavy_fraction", "heavy_fraction": "heavy_fraction",
                "t": "tilt", "tilt": "tilt"},
    "zipf": {"n": "n", "s": "exponent", "a": "exponent", "exponent": "exponent"},
    "pointmassmix": {"n": "n", "h": "head_mass", "head_mass": "head_mass"},
}
_SHORT = {
    "uniform": ("n",),
    "bilevel": ("n", "f", "t"),
    "zipf": ("n", "s"),
    "pointmassmix": ("n", "h"),
}
_DEFAULTS = {"zipf": {"exponent": 1.0}}


@dataclass(frozen=True)
class FamilySpec:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _ALIASES:
            raise BadFamilyParams(
                f"unknown family {self.family!r}; expected one of {sorted(_ALIASES)}"
            )

    @property
    def n(self) -> int:
        return int(self.params["n"])

    def with_n(self, n: int) -> FamilySpec:
        return FamilySpec(self.family, {**self.params, "n": int(n)})

    def __str__(self) -> str:
        names = dict(zip(_SHORT[self.family], self._canonical_names()))
        body = ",".join(f"{short}={_fmt(self.params[long])}" for short, long in names.items())
        return f"{self.family}:{body}"

    def _canonical_names(self):
        return [_ALIASES[self.family][s] for s in _SHORT[self.family]]


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def parse_family(text: str) -> FamilySpec:
    """Parse ``family:param=value,...``, e.g. ``bilevel:n=1000,f=0.1,t=0.9``."""
    family, _, body = text.strip().partition(":")
    family = family.strip().lower()
    if family not in _ALIASES:
        raise BadFamilyParams(f"unknown family {family!r} in {text!r}")
    aliases = _ALIASES[family]
    params = dict(_DEFAULTS.get(family, {}))
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in aliases:
            raise BadFamilyParams(
                f"bad parameter {item!r} for {family}; expected {'/'.join(_SHORT[family])}"
            )
        name = aliases[key]
        try:
            params[name] = int(value) if name == "n" else float(value)
        except ValueError:
            raise BadFamilyParams(f"parameter {key} needs a number, got {value!r}") from None
    missing = [s for s in _SHORT[family] if aliases[s] not in params]
    if missing:
        raise BadFamilyParams(f"{family} is missing parameter(s): {', '.join(missing)}")
    return FamilySpec(family, params)


@dataclass(frozen=True)
class Realized:
    """A family realized as an explicit distribution, with closed-form norms."""

    dist: Distribution
    l2_sq: float
    l3_cubed: float


def _labels(n: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(n))


def _bilevel_split(n: int, f: float, t: float) -> tuple[int, float, float]:
    heavy = round(f * n)
    if not 0 < f < 1 or abs(f * n - heavy) > 1e-9 or not 0 < heavy < n:
        raise BadFamilyParams(f"bilevel needs 0 < f < 1 with f*n a whole number, got f={f}, n={n}")
    if t <= -1 or f * (1 + t) >= 1:
        raise BadFamilyParams(f"bilevel needs t > -1 and f*(1+t) < 1, got f={f}, t={t}")
    hi = (1 + t) / n
    lo = (1 - heavy * hi) / (n - heavy)
    return heavy, hi, lo


def realize_with_norms(spec: FamilySpec) -> Realized:
    par = spec.params
    n = int(par["n"])
    if n < 1:
        raise BadFamilyParams(f"n must be positive, got {n}")

    if spec.family == "uniform":
        probs = np.full(n, 1.0 / n)
        l2, l3 = 1.0 / n, 1.0 / n**2

    elif spec.family == "bilevel":
        heavy, hi, lo = _bilevel_split(n, par["heavy_fraction"], par["tilt"])
        probs = np.concatenate((np.full(heavy, hi), np.full(n - heavy, lo)))
        l2 = heavy * hi**2 + (n - heavy) * lo**2
        l3 = heavy * hi**3 + (n - heavy) * lo**3

    elif spec.family == "zipf":
        s = float(par["exponent"])
        if not math.isfinite(s) or s < 0:
            raise BadFamilyParams(f"zipf exponent must be a finite number >= 0, got {s}")
        weights = np.arange(1, n + 1, dtype=np.float64) ** -s
        harmonic = math.fsum(weights.tolist())
        probs = weights / harmonic
        # generalized harmonic numbers H(n, js) / H(n, s)^j
        l2 = math.fsum((weights**2).tolist()) / harmonic**2
        l3 = math.fsum((weights**3).tolist()) / harmonic**3

    else:  # pointmassmix
        h = float(par["head_mass"])
        if n < 2 or not 0 <= h <= 1:
            raise BadFamilyParams(f"pointmassmix needs n >= 2 and 0 <= h <= 1, got n={n}, h={h}")
        rest = (1 - h) / (n - 1)
        probs = np.concatenate(([h], np.full(n - 1, rest)))
        l2 = h**2 + (n - 1) * rest**2
        l3 = h**3 + (n - 1) * rest**3

    return Realized(validate(zip(_labels(n), probs.tolist())), l2, l3)


def realize(spec: FamilySpec | str) -> Distribution:
    if isinstance(spec, str):
        spec = parse_family(spec)
    return realize_with_norms(spec).dist
