"""
Complexity tables, validation checks and independent oracles.

Tables report, per parameter cell, the anchors m* and m** and the expected
complexity A at both. Published values are stored alongside for comparison;
the competitor columns (Ahrens-Dieter for Poisson, Stadlober for Binomial)
are reference numbers only and are never recomputed here.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from cf_sampler.distributions import DistributionSpec, Family, InvalidParametersError, cf_eval
from cf_sampler.envelope import (
    NORMAL_LIMIT_COMPLEXITY,
    Envelope,
    MRule,
    compute_c,
    compute_k,
    envelope_for,
    hat,
    select_m_mean,
    select_m_star,
)
from cf_sampler.quadrature import DEFAULT_TOL, PfEvaluator, pf_inversion
from cf_sampler.sampler import SampleReport, UniformStream, sample_n

logger = logging.getLogger(__name__)

ORDERING_SLACK = 1e-9
MIN_GOF_SAMPLES = 1000
MIN_EXPECTED = 5.0
LEFT_TAIL_CUTOFF = 1e-14
MAX_TAIL_EXTENSION = 100_000

# ---------------------------------------------------------------------------
# published values
# ---------------------------------------------------------------------------

POISSON_LAMBDAS: Tuple[float, ...] = (1, 2, 5, 10, 20, 50, 100)

# lambda -> (A at m*, Ahrens-Dieter); the infinite row is the Normal limit
PUBLISHED_POISSON: Dict[float, Tuple[float, float]] = {
    1: (1.99, 2.21), 2: (1.83, 1.91), 5: (1.66, 1.70), 10: (1.61, 1.60),
    20: (1.59, 1.53), 50: (1.58, 1.46), 100: (1.58, 1.43), math.inf: (1.57, 1.37),
}

BINOMIAL_NS: Tuple[float, ...] = (10, 20, 40, 100, 200, 400, math.inf)
BINOMIAL_PS: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)

_BINOMIAL_STAR = {
    0.1: (1.94, 1.77, 1.71, 1.62, 1.59, 1.58, 1.57),
    0.2: (1.72, 1.71, 1.67, 1.59, 1.59, 1.58, 1.57),
    0.3: (1.61, 1.61, 1.61, 1.60, 1.57, 1.57, 1.57),
    0.4: (1.75, 1.59, 1.58, 1.58, 1.58, 1.58, 1.57),
    0.5: (1.73, 1.58, 1.58, 1.58, 1.57, 1.57, 1.57),
}
_BINOMIAL_STADLOBER = {
    0.1: (2.21, 1.86, 1.71, 1.60, 1.52, 1.48, 1.37),
    0.2: (1.80, 1.73, 1.62, 1.52, 1.47, 1.44, 1.37),
    0.3: (1.80, 1.64, 1.57, 1.49, 1.46, 1.43, 1.37),
    0.4: (1.74, 1.62, 1.54, 1.47, 1.44, 1.42, 1.37),
    0.5: (1.70, 1.60, 1.52, 1.47, 1.44, 1.42, 1.37),
}
# (n, p) -> (A at m*, Stadlober)
PUBLISHED_BINOMIAL: Dict[Tuple[float, float], Tuple[float, float]] = {
    (n, p): (_BINOMIAL_STAR[p][i], _BINOMIAL_STADLOBER[p][i])
    for p in BINOMIAL_PS for i, n in enumerate(BINOMIAL_NS)
}

PT_AS: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
PT_BS: Tuple[float, ...] = (1, 5)
PT_CS: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)

_PT_ROWS = {
    (1, 0.1): ((1.28, 1.28), (2.54, 2.54), (2.44, 2.44), (2.71, 3.08), (3.32, 4.73)),
    (1, 0.3): ((1.27, 1.27), (2.55, 2.55), (2.49, 2.49), (2.32, 3.32), (3.03, 4.71)),
    (1, 0.5): ((1.27, 1.27), (2.56, 2.56), (2.41, 2.56), (2.21, 2.21), (2.64, 3.74)),
    (1, 0.7): ((1.27, 1.27), (2.58, 2.58), (2.41, 2.63), (2.21, 2.21), (2.16, 3.07)),
    (1, 0.9): ((1.27, 1.27), (2.58, 2.58), (2.42, 2.71), (2.30, 2.30), (2.02, 2.02)),
    (5, 0.1): ((2.43, 2.69), (2.08, 2.08), (1.97, 2.11), (1.92, 1.93), (1.91, 1.97)),
    (5, 0.3): ((2.43, 2.70), (2.27, 2.27), (2.03, 2.03), (1.90, 1.95), (2.02, 2.15)),
    (5, 0.5): ((2.43, 2.71), (2.35, 2.35), (1.90, 2.23), (1.93, 1.93), (2.06, 2.15)),
    (5, 0.7): ((2.44, 2.73), (2.00, 2.44), (1.90, 1.90), (1.89, 1.89), (1.98, 2.10)),
    (5, 0.9): ((2.44, 2.74), (1.95, 2.54), (1.98, 2.04), (1.78, 1.78), (1.78, 1.94)),
}
# (a, b, c) -> (A at m*, A at m**)
PUBLISHED_POISSON_TWEEDIE: Dict[Tuple[float, float, float], Tuple[float, float]] = {
    (a, b, c): _PT_ROWS[(b, a)][j]
    for (b, a) in _PT_ROWS for j, c in enumerate(PT_CS)
}

PUBLISHED_GRIDS: Dict[Family, List[Tuple[float, ...]]] = {
    Family.POISSON: [(lam,) for lam in POISSON_LAMBDAS],
    Family.BINOMIAL: [(n, p) for p in BINOMIAL_PS for n in BINOMIAL_NS],
    Family.POISSON_TWEEDIE: [(a, b, c) for b in PT_BS for a in PT_AS for c in PT_CS],
}

TABLE_FAMILIES = tuple(PUBLISHED_GRIDS)


class InsufficientDataError(ValueError):
    """Too few samples or cells for a chi-square test."""


# ---------------------------------------------------------------------------
# complexity tables
# ---------------------------------------------------------------------------

@dataclass
class ComplexityRow:
    params: Dict[str, float]
    a_star: float
    a_mean: float
    m_star: Optional[int]
    m_mean: Optional[int]
    a_reference: Optional[float] = None
    published_star: Optional[float] = None
    published_mean: Optional[float] = None


@dataclass
class ComplexityTable:
    family: Family
    rows: List[ComplexityRow] = field(default_factory=list)
    reference_label: Optional[str] = None

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record = dict(row.params)
            record.update({
                "m_star": row.m_star, "m_mean": row.m_mean,
                "A_star": row.a_star, "A_mean": row.a_mean,
                "A_reference": row.a_reference,
                "A_star_published": row.published_star,
                "A_mean_published": row.published_mean,
            })
            records.append(record)
        frame = pd.DataFrame.from_records(records)
        if not frame.empty:
            frame["m_star"] = frame["m_star"].astype("Int64")
            frame["m_mean"] = frame["m_mean"].astype("Int64")
        return frame

    def to_csv(self, path: Optional[str] = None) -> Optional[str]:
        return self.to_frame().to_csv(path, index=False)

    def to_json(self, path: Optional[str] = None) -> Optional[str]:
        return self.to_frame().to_json(path, orient="records")

    def anchor_mismatches(self) -> List[ComplexityRow]:
        return [r for r in self.rows if r.m_star is not None and r.m_star != r.m_mean]

    def ordering_violations(self) -> List[ComplexityRow]:
        """Rows with A(m*) > A(m**) + slack; reported, not fatal."""
        bad = [r for r in self.rows if r.a_star > r.a_mean + ORDERING_SLACK]
        for r in bad:
            logger.warning(f"A(m*)={r.a_star:.6f} exceeds A(m**)={r.a_mean:.6f} at {r.params}")
        return bad

    def published_deviation(self) -> pd.Series:
        """|A_star - published| per row; NaN where nothing was published."""
        frame = self.to_frame()
        return (frame["A_star"] - frame["A_star_published"].astype(float)).abs()

    def __len__(self) -> int:
        return len(self.rows)


def worker_count(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.getenv("CFSAMPLER_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _map_cells(fn: Callable, cells: Sequence, threads: Optional[int]) -> List:
    workers = min(worker_count(threads), max(1, len(cells)))
    if workers == 1:
        return [fn(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, cells))


def complexity_row(spec: DistributionSpec, tol: float = DEFAULT_TOL) -> ComplexityRow:
    """Anchors and expected complexities at m* and m** for one distribution."""
    c = compute_c(spec, tol)
    m_star = select_m_star(spec, tol)
    m_mean = select_m_mean(spec)
    k_star = compute_k(spec, m_star, tol)
    k_mean = k_star if m_mean == m_star else compute_k(spec, m_mean, tol)
    a_star = Envelope.from_constants(m_star, c, k_star).big_a
    a_mean = Envelope.from_constants(m_mean, c, k_mean).big_a
    return ComplexityRow(params=dict(spec.params), a_star=a_star, a_mean=a_mean,
                         m_star=m_star, m_mean=m_mean)


def _limit_row(params: Dict[str, float], reference: Optional[float]) -> ComplexityRow:
    return ComplexityRow(params=params, a_star=NORMAL_LIMIT_COMPLEXITY, a_mean=NORMAL_LIMIT_COMPLEXITY,
                         m_star=None, m_mean=None, a_reference=reference,
                         published_star=1.57, published_mean=1.57)


def _finish(table: ComplexityTable) -> ComplexityTable:
    mismatches = table.anchor_mismatches()
    logger.info(f"{table.family.value} table: {len(table)} rows, {len(mismatches)} with m* != m**")
    table.ordering_violations()
    return table


def table_poisson(lambdas: Optional[Iterable[float]] = None, tol: float = DEFAULT_TOL,
                  threads: Optional[int] = None) -> ComplexityTable:
    lambdas = list(POISSON_LAMBDAS if lambdas is None else lambdas)

    def cell(lam: float) -> ComplexityRow:
        published = PUBLISHED_POISSON.get(lam)
        if math.isinf(lam):
            return _limit_row({"lambda": lam}, published[1] if published else None)
        row = complexity_row(DistributionSpec.poisson(lam), tol)
        if published:
            row.published_star, row.a_reference = published
        logger.info(f"poisson lambda={lam}: m*={row.m_star} A={row.a_star:.4f}")
        return row

    rows = _map_cells(cell, lambdas, threads)
    return _finish(ComplexityTable(Family.POISSON, rows, reference_label="Ahrens-Dieter (reference, not computed)"))


def table_binomial(grid: Optional[Iterable[Tuple[float, float]]] = None, tol: float = DEFAULT_TOL,
                   threads: Optional[int] = None) -> ComplexityTable:
    grid = list(PUBLISHED_GRIDS[Family.BINOMIAL] if grid is None else grid)

    def cell(np_pair: Tuple[float, float]) -> ComplexityRow:
        n, p = np_pair
        published = PUBLISHED_BINOMIAL.get((n, p))
        if math.isinf(n):
            return _limit_row({"n": n, "p": p}, published[1] if published else None)
        row = complexity_row(DistributionSpec.binomial(int(n), p), tol)
        if published:
            row.published_star, row.a_reference = published
        logger.info(f"binomial n={int(n)} p={p}: m*={row.m_star} A={row.a_star:.4f}")
        return row

    rows = _map_cells(cell, grid, threads)
    return _finish(ComplexityTable(Family.BINOMIAL, rows, reference_label="Stadlober (reference, not computed)"))


def table_poisson_tweedie(grid: Optional[Iterable[Tuple[float, float, float]]] = None,
                          tol: float = DEFAULT_TOL, threads: Optional[int] = None) -> ComplexityTable:
    grid = list(PUBLISHED_GRIDS[Family.POISSON_TWEEDIE] if grid is None else grid)

    def cell(abc: Tuple[float, float, float]) -> ComplexityRow:
        spec = DistributionSpec.poisson_tweedie(*abc)
        row = complexity_row(spec, tol)
        published = PUBLISHED_POISSON_TWEEDIE.get(tuple(abc))
        if published:
            row.published_star, row.published_mean = published
        logger.info(f"{spec}: m*={row.m_star} m**={row.m_mean} "
                    f"A*={row.a_star:.4f} A**={row.a_mean:.4f}")
        return row

    rows = _map_cells(cell, grid, threads)
    return _finish(ComplexityTable(Family.POISSON_TWEEDIE, rows))


TABLE_BUILDERS: Dict[Family, Callable[..., ComplexityTable]] = {
    Family.POISSON: table_poisson,
    Family.BINOMIAL: table_binomial,
    Family.POISSON_TWEEDIE: table_poisson_tweedie,
}


def build_table(family: Family, grid: Optional[Sequence] = None, tol: float = DEFAULT_TOL,
                threads: Optional[int] = None) -> ComplexityTable:
    if family not in TABLE_BUILDERS:
        raise InvalidParametersError(family.value, [f"no table for family {family.value!r}"])
    if grid is not None and family is Family.POISSON:
        grid = [g[0] if isinstance(g, (tuple, list)) else g for g in grid]
    return TABLE_BUILDERS[family](grid, tol=tol, threads=threads)


# ---------------------------------------------------------------------------
# Poisson-Tweedie oracles
# ---------------------------------------------------------------------------

def sample_pt_compound(a: float, b: float, c: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Poisson-Tweedie variates for a < 0 as a compound Poisson sum.

    N ~ Poisson(-(b/a)(1 - c)^a); given N, the sum of N Negative Binomial
    (-a, 1 - c) summands is one Negative Binomial with shape -a N.
    """
    problems = []
    if not a < 0:
        problems.append("a must be negative for the compound Poisson route")
    if not b > 0:
        problems.append("b must lie in (0, inf)")
    if not 0 < c < 1:
        problems.append("c must lie in (0, 1)")
    if problems:
        raise InvalidParametersError(Family.POISSON_TWEEDIE.value, problems)

    rate = -(b / a) * (1.0 - c) ** a
    counts = rng.poisson(rate, size=n)
    out = np.zeros(n, dtype=np.int64)
    drawn = counts > 0
    out[drawn] = rng.negative_binomial(-a * counts[drawn], 1.0 - c)
    return out


def tilted_stable_check(a: float, b: float, c: float, xs: Iterable[int] = range(31),
                        tol: float = DEFAULT_TOL) -> float:
    """max |p_X(x) - e^{(b/a)(1-c)^a} c^x p_Y(x)| with X Poisson-Tweedie(a, b, c), Y Discrete Stable.

    Both p.f.s are computed by inversion, independently of each other.
    """
    pt = DistributionSpec.poisson_tweedie(a, b, c)
    ds = DistributionSpec.discrete_stable(a, b)
    tilt = math.exp((b / a) * (1.0 - c) ** a)
    deviation = 0.0
    for x in xs:
        p_x = pf_inversion(pt, x, tol)
        p_y = pf_inversion(ds, x, tol)
        deviation = max(deviation, abs(p_x - tilt * c ** x * p_y))
    logger.info(f"tilted stable identity for {pt}: max deviation {deviation:.3g}")
    return deviation


# ---------------------------------------------------------------------------
# goodness of fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    cells: int


def _pool(expected: np.ndarray, threshold: float) -> List[Tuple[int, int]]:
    """Group consecutive cells left to right until each group reaches threshold."""
    groups: List[Tuple[int, int]] = []
    start, acc = 0, 0.0
    for i, e in enumerate(expected):
        acc += e
        if acc >= threshold:
            groups.append((start, i + 1))
            start, acc = i + 1, 0.0
    if start < len(expected):
        if groups:
            groups[-1] = (groups[-1][0], len(expected))
        else:
            groups.append((start, len(expected)))
    return groups


def gof_chi_square(samples: Sequence[int], pf: PfEvaluator, min_expected: float = MIN_EXPECTED) -> GofResult:
    """Pearson chi-square of samples against pf, tails pooled into the edge cells.

    The range runs from the smallest sample, extended left while p(x) is at
    least 1e-14, to the largest sample; the last cell takes the whole right
    tail as the complement of the others.
    """
    samples = np.asarray(samples, dtype=np.int64)
    n = samples.size
    if n < MIN_GOF_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_GOF_SAMPLES} samples, got {n}")

    lo, hi = int(samples.min()), int(samples.max())
    for _ in range(MAX_TAIL_EXTENSION):
        if pf(lo - 1) < LEFT_TAIL_CUTOFF:
            break
        lo -= 1
    probs = pf.many(range(lo, hi + 1))
    probs[-1] = max(1.0 - probs[:-1].sum(), 0.0)
    observed = np.bincount(samples - lo, minlength=hi - lo + 1).astype(float)

    groups = _pool(n * probs, min_expected)
    if len(groups) < 2:
        raise InsufficientDataError(f"only {len(groups)} cell(s) after pooling")
    obs = np.array([observed[s:e].sum() for s, e in groups])
    exp = np.array([probs[s:e].sum() for s, e in groups])
    exp = n * exp / exp.sum()
    statistic, p_value = stats.chisquare(obs, exp)
    result = GofResult(statistic=float(statistic), dof=len(groups) - 1, p_value=float(p_value), cells=len(groups))
    logger.debug(f"GOF for {pf.spec}: {result}")
    return result


def two_sample_chi_square(first: Sequence[int], second: Sequence[int],
                          min_expected: float = MIN_EXPECTED) -> GofResult:
    """Homogeneity test of two integer samples on a shared pooled 2 x K table."""
    first = np.asarray(first, dtype=np.int64)
    second = np.asarray(second, dtype=np.int64)
    if first.size == 0 or second.size == 0:
        raise InsufficientDataError("both samples must be non-empty")
    lo = int(min(first.min(), second.min()))
    hi = int(max(first.max(), second.max()))
    size = hi - lo + 1
    counts = np.vstack([np.bincount(first - lo, minlength=size), np.bincount(second - lo, minlength=size)])

    # each pooled column needs expected >= min_expected in both rows
    total = counts.sum()
    threshold = min_expected * total / min(first.size, second.size)
    groups = _pool(counts.sum(axis=0).astype(float), threshold)
    if len(groups) < 2:
        raise InsufficientDataError(f"only {len(groups)} cell(s) after pooling")
    table = np.array([[row[s:e].sum() for s, e in groups] for row in counts])
    statistic, p_value, dof, _ = stats.chi2_contingency(table, correction=False)
    return GofResult(statistic=float(statistic), dof=int(dof), p_value=float(p_value), cells=len(groups))


# ---------------------------------------------------------------------------
# empirical complexity and validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComplexityEstimate:
    mean_iterations: float
    standard_error: float
    z_score: float
    report: SampleReport


def empirical_complexity(env: Envelope, pf: PfEvaluator, stream: UniformStream, n: int) -> ComplexityEstimate:
    report = sample_n(env, pf, stream, n)
    se = report.iterations_standard_error(env.big_a)
    diff = report.mean_iterations - env.big_a
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.inf)
    return ComplexityEstimate(mean_iterations=report.mean_iterations, standard_error=se, z_score=z, report=report)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def as_dict(self) -> dict:
        return asdict(self)


def _check_cf(spec: DistributionSpec) -> CheckResult:
    grid = np.linspace(-np.pi, np.pi, 257)
    values = np.asarray(cf_eval(spec, grid))
    origin = abs(complex(cf_eval(spec, 0.0)) - 1.0)
    modulus = float(np.max(np.abs(values)))
    symmetry = float(np.max(np.abs(values - np.conj(values[::-1]))))
    passed = origin <= 1e-12 and modulus <= 1.0 + 1e-9 and symmetry <= 1e-9
    return CheckResult("characteristic-function", passed,
                       f"|phi(0) - 1|={origin:.3g} max|phi|={modulus:.12g} symmetry={symmetry:.3g}")


def _check_normalization(env: Envelope, pf: PfEvaluator, width: int) -> CheckResult:
    xs = range(env.m - width, env.m + width + 1)
    mass = float(pf.many(xs).sum())
    # hat-tail bound on the mass outside the window
    tail = 2.0 * env.k_m / (width + 0.5) if width > env.sigma else 1.0
    passed = 1.0 - tail - 1e-8 <= mass <= 1.0 + 1e-8
    return CheckResult("pf-normalization", passed,
                       f"mass on m +/- {width} = {mass:.12f} (tail bound {tail:.3g}, strategy={pf.strategy.value})")


def _check_domination(env: Envelope, pf: PfEvaluator, width: int, slack: float = 1e-12) -> CheckResult:
    xs = np.arange(env.m - width, env.m + width + 1)
    p = pf.many(xs)
    h = hat(env, xs)
    d = (xs - env.m).astype(float)
    with np.errstate(divide="ignore"):
        bound = np.where(d == 0, env.c, np.minimum(env.c, env.k_m / (d * d)))
    worst_hat = float(np.max(p - h))
    worst_bound = float(np.max(p - bound))
    passed = worst_hat <= slack and worst_bound <= slack
    return CheckResult("domination", passed,
                       f"max(p - h)={worst_hat:.3g} max(p - min(c, k/(x-m)^2))={worst_bound:.3g} on m +/- {width}")


def run_validation(spec: DistributionSpec, n: int = 100_000, seed: Optional[int] = 42, m_rule: MRule = "star",
                   tol: float = DEFAULT_TOL, level: float = 0.001, se_multiplier: float = 3.0,
                   domination_width: float = 12.0) -> List[CheckResult]:
    """c.f. sanity, normalization, domination, goodness of fit and acceptance rate."""
    results = [_check_cf(spec)]
    env = envelope_for(spec, m_rule, tol)
    pf = PfEvaluator(spec, tol)
    width = int(math.ceil(domination_width * env.sigma))
    results.append(_check_normalization(env, pf, width))
    results.append(_check_domination(env, pf, width))

    estimate = empirical_complexity(env, pf, UniformStream(seed), n)
    try:
        gof = gof_chi_square(estimate.report.samples, pf)
        results.append(CheckResult("goodness-of-fit", gof.p_value > level,
                                   f"chi2={gof.statistic:.4g} dof={gof.dof} p={gof.p_value:.4g} "
                                   f"strategy={pf.strategy.value}"))
    except InsufficientDataError as e:
        single = np.unique(estimate.report.samples).size == 1 and env.degenerate
        results.append(CheckResult("goodness-of-fit", single, f"skipped: {e}"))

    passed = abs(estimate.mean_iterations - env.big_a) <= se_multiplier * estimate.standard_error
    results.append(CheckResult("acceptance-rate", passed,
                               f"iterations/n={estimate.mean_iterations:.5f} A={env.big_a:.5f} "
                               f"se={estimate.standard_error:.3g} z={estimate.z_score:.3g}"))
    for r in results:
        logger.info(f"{spec} {r.name}: {'PASS' if r.passed else 'FAIL'} ({r.detail})")
    return results
