"""Reproducible Monte Carlo experiments over the estimator and the tester.

Trial ``i`` of a scenario always runs on seed ``seed_base ^ i``, and rows are
put back into trial order before aggregation, so a report depends only on
the scenario and never on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import TextIO

import numpy as np

from . import core
from .core import Distribution, norms, read_distribution, tv_to_uniform_class, uniformity_gap
from .errors import BudgetExceeded, DegenerateFit, InsufficientSamples
from .estimator import EstimatorConfig, estimate_l2_squared
from .sampling import AliasTable, FamilySpec, make_synthetic, parse_family, realize, trial_seed
from .tester import TesterConfig, test_uniformity

PROCEDURES = ("test", "estimate-l2")
TEST_COLUMNS = ("trial", "seed", "decision", "stage1_samples", "stage2_samples", "t3", "n_estimate")
ESTIMATE_COLUMNS = ("trial", "seed", "status", "m", "k", "s2_final", "gamma", "in_bracket")


@dataclass(frozen=True)
class Scenario:
    target: FamilySpec | str  # family spec, or a path to a distribution file
    procedure: str = "test"
    eps: float = 0.5
    config: TesterConfig | EstimatorConfig = field(default_factory=TesterConfig)
    trials: int = 100
    seed_base: int = 0

    def __post_init__(self):
        if self.procedure not in PROCEDURES:
            raise ValueError(f"procedure must be one of {PROCEDURES}, got {self.procedure!r}")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        want = TesterConfig if self.procedure == "test" else EstimatorConfig
        if not isinstance(self.config, want):
            raise ValueError(f"procedure {self.procedure!r} needs a {want.__name__}")

    def distribution(self) -> Distribution:
        if isinstance(self.target, FamilySpec):
            return realize(self.target)
        return read_distribution(self.target)


@dataclass
class TrialStats:
    trials: int
    accept_rate: float
    rate_stderr: float
    sample_quantiles: tuple[float, float, float]
    failures: int
    per_trial: list[dict] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("per_trial")
        out["sample_quantiles"] = list(self.sample_quantiles)
        return out


# --- scenario files ---------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}


def parse_scenario(text: str) -> Scenario:
    """Parse ``key = value`` lines (``#`` comments allowed).

    Keys: family | dist, procedure, eps, trials, seed_base, c, k, k3,
    budget, fresh_stage2.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"scenario line {lineno}: expected 'key = value', got {raw!r}")
        values[key.strip().lower()] = value.strip()

    if "family" in values:
        target = parse_family(values.pop("family"))
    elif "dist" in values:
        target = values.pop("dist")
    else:
        raise ValueError("scenario needs a 'family' or 'dist' entry")

    procedure = values.pop("procedure", "test")
    opt_int = lambda key: int(values.pop(key)) if key in values else None  # noqa: E731
    est = EstimatorConfig(
        c_constant=float(values.pop("c", 6500.0)),
        k_override=opt_int("k"),
        sample_budget=opt_int("budget") if procedure == "estimate-l2" else None,
    )
    if procedure == "test":
        config = TesterConfig(
            estimator=est,
            k3_override=opt_int("k3"),
            fresh_stage2=values.pop("fresh_stage2", "true").lower() in _TRUE,
            sample_budget=opt_int("budget"),
        )
    else:
        config = est
    scenario = Scenario(
        target=target,
        procedure=procedure,
        eps=float(values.pop("eps", 0.5)),
        config=config,
        trials=int(values.pop("trials", 100)),
        seed_base=int(values.pop("seed_base", 0)),
    )
    if values:
        raise ValueError(f"unknown scenario keys: {', '.join(sorted(values))}")
    return scenario


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# --- trial execution --------------------------------------------------------

_worker_state: dict = {}


def _prepare(scenario: Scenario) -> dict:
    dist = scenario.distribution()
    return {"scenario": scenario, "dist": dist, "table": AliasTable(dist.probs),
            "l2_sq": norms(dist, 3).l2_sq}


def _init_worker(scenario: Scenario) -> None:
    _worker_state.update(_prepare(scenario))


def _run_one(state: dict, trial: int) -> dict:
    s = state["scenario"]
    seed = trial_seed(s.seed_base, trial)
    oracle = make_synthetic(state["dist"], seed, state["table"])
    if s.procedure == "test":
        row = {"trial": trial, "seed": seed}
        try:
            v = test_uniformity(oracle, s.eps, s.config)
        except (BudgetExceeded, InsufficientSamples) as exc:
            d = exc.diagnostics
            stage1 = d.get("stage1_samples", d.get("m", 0))
            row.update(decision=type(exc).__name__, stage1_samples=stage1,
                       stage2_samples=oracle.drawn - stage1, t3=d.get("t3", 0),
                       n_estimate=d.get("n_estimate", math.nan))
            return row
        row.update(decision=v.decision, stage1_samples=v.stage1_samples,
                   stage2_samples=v.stage2_samples, t3=v.t3_final, n_estimate=v.n_estimate)
        return row

    row = {"trial": trial, "seed": seed}
    try:
        est = estimate_l2_squared(oracle, s.eps, s.config)
    except (BudgetExceeded, InsufficientSamples) as exc:
        d = exc.diagnostics
        row.update(status=type(exc).__name__, m=d.get("m", oracle.drawn), k=0,
                   s2_final=d.get("s2", 0), gamma=math.nan, in_bracket=False)
        return row
    l2 = state["l2_sq"]
    ok = (1 - s.eps) * l2 <= est.gamma <= (1 + s.eps) * l2
    row.update(status="ok", m=est.m, k=est.k, s2_final=est.s2_final, gamma=est.gamma,
               in_bracket=ok)
    return row


def _run_chunk(trials: list[int]) -> list[dict]:
    return [_run_one(_worker_state, t) for t in trials]


def _is_success(row: dict) -> bool:
    return row.get("decision") == "accept" or row.get("in_bracket") is True


def _is_failure(row: dict) -> bool:
    return row.get("decision", row.get("status")) in ("BudgetExceeded", "InsufficientSamples")


def _total_samples(row: dict) -> int:
    if "m" in row:
        return row["m"]
    return row["stage1_samples"] + row["stage2_samples"]


def aggregate(rows: list[dict]) -> TrialStats:
    rows = sorted(rows, key=lambda r: r["trial"])
    n = len(rows)
    successes = sum(_is_success(r) for r in rows)
    rate = successes / n
    totals = np.array([_total_samples(r) for r in rows], dtype=np.float64)
    q10, q50, q90 = (float(v) for v in np.percentile(totals, [10, 50, 90]))
    return TrialStats(
        trials=n,
        accept_rate=rate,
        rate_stderr=math.sqrt(rate * (1 - rate) / n),
        sample_quantiles=(q10, q50, q90),
        failures=sum(_is_failure(r) for r in rows),
        per_trial=rows,
    )


def run_trials(s: Scenario, workers: int = 1) -> TrialStats:
    """Run every trial of ``s``; per-trial failures are counted, never raised.

    For ``estimate-l2`` scenarios ``accept_rate`` is the fraction of
    estimates within ``(1 +- eps) ||p||_2^2``.
    """
    indices = list(range(s.trials))
    if workers <= 1 or s.trials == 1:
        state = _prepare(s)
        rows = [_run_one(state, t) for t in indices]
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(s,)) as pool:
            rows = [row for part in pool.map(_run_chunk, chunks) for row in part]
    return aggregate(rows)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trials_csv(stats: TrialStats, fh: TextIO) -> None:
    if not stats.per_trial:
        return
    columns = TEST_COLUMNS if "decision" in stats.per_trial[0] else ESTIMATE_COLUMNS
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in stats.per_trial:
        writer.writerow([_cell(row[c]) for c in columns])


def trials_csv(stats: TrialStats) -> str:
    buf = io.StringIO()
    write_trials_csv(stats, buf)
    return buf.getvalue()


def summary_json(stats: TrialStats) -> str:
    return json.dumps(stats.summary(), sort_keys=True)


# --- scaling fits -----------------------------------------------------------

@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float
    n_values: tuple[int, ...] = ()
    medians: tuple[float, ...] = ()


def fit_loglog(xs, ys) -> ScalingFit:
    """Least-squares line through ``(log x, log y)``."""
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    if lx.size < 2 or np.ptp(lx) == 0:
        raise DegenerateFit("need at least two distinct x values for a log-log fit")
    xc = lx - lx.mean()
    slope = float(np.dot(xc, ly - ly.mean()) / np.dot(xc, xc))
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.dot(ly - ly.mean(), ly - ly.mean()))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.dot(resid, resid)) / ss_tot
    return ScalingFit(slope, intercept, r2)


def scaling_fit(n_values, base: Scenario, workers: int = 1) -> ScalingFit:
    """Fit ``log(median total samples)`` against ``log(n)`` over a family sweep."""
    if len(n_values) < 3:
        raise DegenerateFit(f"need at least 3 values of n, got {len(n_values)}")
    if len(set(n_values)) < 2:
        raise DegenerateFit("all n values are equal")
    if not isinstance(base.target, FamilySpec):
        raise ValueError("scaling_fit needs a family target whose n can be varied")
    medians = []
    for n in n_values:
        stats = run_trials(replace(base, target=base.target.with_n(n)), workers)
        medians.append(stats.sample_quantiles[1])
    fit = fit_loglog(n_values, medians)
    return replace(fit, n_values=tuple(n_values), medians=tuple(medians))


# --- structural lemma sweep -------------------------------------------------

GAP_ZERO = 1e-12
HOLDER_TOL = 1e-12
SWEEP_KINDS = ("dirichlet", "subset_uniform", "near_uniform", "two_level", "heavy_tail")


@dataclass(frozen=True)
class Violation:
    check: str
    index: int
    seed: int
    kind: str
    detail: str


@dataclass
class SweepReport:
    count: int
    violations: list[Violation]
    lemma_instances: int  # distributions meeting the norm hypotheses for some N

    @property
    def ok(self) -> bool:
        return not self.violations


def random_distribution(rng: np.random.Generator, kind: str, max_points: int) -> Distribution:
    n = int(rng.integers(1, max_points + 1))
    if kind == "dirichlet":
        probs = rng.dirichlet(np.full(n, rng.uniform(0.2, 3.0)))
    elif kind == "subset_uniform":
        support = int(rng.integers(1, n + 1))
        probs = np.zeros(n)
        probs[rng.choice(n, support, replace=False)] = 1.0 / support
    elif kind == "near_uniform":
        eta = rng.uniform(1e-3, 0.3)
        probs = np.maximum(1.0 + eta * rng.uniform(-1, 1, n), 0.0)
    elif kind == "two_level":
        heavy = int(rng.integers(1, n + 1))
        probs = np.concatenate((np.full(heavy, rng.uniform(1.0, 4.0)), np.ones(n - heavy)))
    else:
        probs = rng.exponential(1.0, n) ** rng.uniform(1.0, 4.0)
    probs = probs / probs.sum()
    return core.validate((str(i), float(p)) for i, p in enumerate(probs))


def check_holder(p: Distribution, x: np.ndarray, j_top: int = 8) -> list[str]:
    """Failures of ``||x||_2^{2(j-1)} <= ||x||_1^{j-2} ||x||_j^j`` for j = 2..j_top."""
    bad = []
    summary = norms(p, j_top)
    for j in range(2, j_top + 1):
        lhs = summary.l2_sq ** (j - 1)
        if lhs > summary.j_norms[j] + HOLDER_TOL:
            bad.append(f"distribution j={j}: {lhs!r} > {summary.j_norms[j]!r}")
    desc = np.sort(x)[::-1]
    l1 = math.fsum(desc.tolist())
    l2 = math.fsum((desc**2).tolist())
    for j in range(2, j_top + 1):
        lhs = l2 ** (j - 1)
        rhs = l1 ** (j - 2) * math.fsum((desc**j).tolist())
        # both sides are homogeneous of degree 2(j-1) in x
        if lhs > rhs + HOLDER_TOL * max(1.0, l1 ** (2 * (j - 1))):
            bad.append(f"vector j={j}: {lhs!r} > {rhs!r}")
    return bad


def check_gap_equivalence(p: Distribution) -> str | None:
    gap = uniformity_gap(p)
    dist = tv_to_uniform_class(p).distance
    if (abs(gap) <= GAP_ZERO) != (dist <= GAP_ZERO) or gap < -GAP_ZERO:
        return f"gap={gap!r} distance={dist!r}"
    return None


def check_distance_bound(p: Distribution) -> tuple[bool, list[str]]:
    """Check the norm-closeness bound for every admissible N; returns (applicable, failures)."""
    params = core.lemma_parameters(p)
    dist = tv_to_uniform_class(p).distance
    bad = []
    for n_int, eps, delta in params:
        bound = core.norms_to_distance_bound(eps, delta)
        if dist > bound:
            bad.append(f"N={n_int} eps={eps!r} delta={delta!r}: distance {dist!r} > {bound!r}")
    return bool(params), bad


def lemma_sweep(count: int, max_points: int, seed: int) -> SweepReport:
    """Check the structural inequalities on ``count`` random distributions.

    Instance ``i`` is drawn from a Philox generator keyed by ``seed ^ i``, so
    any violation can be regenerated from its recorded seed and kind.
    """
    if not 1 <= max_points <= 64:
        raise ValueError(f"max_points must lie in [1, 64], got {max_points}")
    violations = []
    applicable = 0
    for i in range(count):
        inst_seed = trial_seed(seed, i)
        kind = SWEEP_KINDS[i % len(SWEEP_KINDS)]
        rng = np.random.Generator(np.random.Philox(key=inst_seed))
        p = random_distribution(rng, kind, max_points)
        x = p.probs * rng.uniform(0.1, 10.0)

        for detail in check_holder(p, x):
            violations.append(Violation("holder", i, inst_seed, kind, detail))
        detail = check_gap_equivalence(p)
        if detail:
            violations.append(Violation("gap_equivalence", i, inst_seed, kind, detail))
        used, bad = check_distance_bound(p)
        applicable += used
        for detail in bad:
            violations.append(Violation("distance_bound", i, inst_seed, kind, detail))
    return SweepReport(count=count, violations=violations, lemma_instances=applicable)


def sweep_instance(seed: int, index: int, max_points: int) -> Distribution:
    """Regenerate instance ``index`` of ``lemma_sweep(count, max_points, seed)``."""
    rng = np.random.Generator(np.random.Philox(key=trial_seed(seed, index)))
    return random_distribution(rng, SWEEP_KINDS[index % len(SWEEP_KINDS)], max_points)


__all__ = [
    "Scenario", "TrialStats", "ScalingFit", "SweepReport", "Violation",
    "parse_scenario", "load_scenario", "run_trials", "aggregate", "write_trials_csv",
    "trials_csv", "summary_json", "fit_loglog", "scaling_fit", "lemma_sweep", "sweep_instance",
]
