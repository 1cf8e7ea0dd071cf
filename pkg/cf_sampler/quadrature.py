"""
Adaptive quadrature on finite intervals and inversion of characteristic functions.

The integrator splits [lo, hi] into Gauss-Legendre panels of fixed order. A
panel is accepted when its estimate agrees with the sum over its two halves
to within the panel's share of the tolerance; otherwise the halves become
panels of the next level and their sums are reused as coarse estimates.
Integrands are evaluated on whole numpy batches of nodes at once.

Inversion (for integer-valued X):

    p_X(x) = (1/pi) * integral_0^pi Re(exp(-itx) phi_X(t)) dt
"""

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_legendre

from cf_sampler.distributions import DistributionSpec, Family, cf_derivs, cf_eval, pf_closed, pf_upper_bound

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
GAUSS_ORDER = 20
MAX_DEPTH = 60
MAX_EVALUATIONS = 20_000_000
BATCH_PANELS = 4096
NEGATIVE_PF_SLACK = 1e-9

_NODES, _WEIGHTS = roots_legendre(GAUSS_ORDER)
_ROUNDOFF = 64.0 * np.finfo(float).eps


class QuadratureError(RuntimeError):
    """Adaptive integration failed; `partial_value` holds the estimate so far."""

    def __init__(self, message: str, partial_value: float = float("nan")):
        self.partial_value = partial_value
        super().__init__(f"{message} (partial value {partial_value!r})")


class ConsistencyError(ValueError):
    """An inverted probability fell outside [0, 1] by more than roundoff."""


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def _panel_integrals(f: Callable[[np.ndarray], np.ndarray],
                     a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre estimates of the integral and of the absolute integral per panel."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    t = mid[:, None] + half[:, None] * _NODES[None, :]
    values = np.broadcast_to(np.asarray(f(t), dtype=float), t.shape)
    if not np.all(np.isfinite(values)):
        bad = t[~np.isfinite(values)][0]
        raise QuadratureError(f"integrand is not finite at t={bad!r}")
    return half * (values @ _WEIGHTS), half * (np.abs(values) @ _WEIGHTS)


def integrate(f: Callable, lo: float, hi: float, abs_tol: float = DEFAULT_TOL,
              rel_tol: float = 0.0, vectorized: bool = True,
              points: Optional[Sequence[float]] = None) -> QuadratureResult:
    """Integrate a bounded real function over [lo, hi].

    Args:
        f: integrand; receives numpy arrays of nodes unless vectorized=False
        lo, hi: finite bounds with lo < hi
        abs_tol, rel_tol: stop once the summed panel error estimates fall
            below max(abs_tol, rel_tol * |value|)
        points: optional interior breakpoints where f changes scale

    Raises:
        QuadratureError: subdivision deeper than MAX_DEPTH, more than
            MAX_EVALUATIONS integrand evaluations, or non-finite f
    """
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"integration bounds must be finite with lo < hi, got [{lo}, {hi}]")
    if abs_tol <= 0 and rel_tol <= 0:
        raise ValueError("at least one of abs_tol, rel_tol must be positive")
    if not vectorized:
        f = np.vectorize(f, otypes=[float])

    inner = sorted(p for p in (points or ()) if lo < p < hi)
    edges = np.unique(np.array([float(lo)] + [float(p) for p in inner] + [float(hi)]))
    a = edges[:-1]
    b = edges[1:]
    coarse, _ = _panel_integrals(f, a, b)
    evaluations = GAUSS_ORDER * a.size
    width = float(hi) - float(lo)

    stack: List[Tuple[np.ndarray, np.ndarray, np.ndarray, int]] = [(a, b, coarse, 0)]
    accepted: List[float] = []
    errors: List[float] = []
    density = None
    while stack:
        a, b, coarse, depth = stack.pop()
        if depth >= MAX_DEPTH or evaluations > MAX_EVALUATIONS:
            partial = float(np.sum(accepted) + sum(s[2].sum() for s in stack) + coarse.sum())
            if depth >= MAX_DEPTH:
                raise QuadratureError(f"maximum subdivision depth {MAX_DEPTH} exceeded", partial)
            raise QuadratureError(f"evaluation budget {MAX_EVALUATIONS} exhausted", partial)
        mid = 0.5 * (a + b)
        left, left_abs = _panel_integrals(f, a, mid)
        right, right_abs = _panel_integrals(f, mid, b)
        evaluations += 2 * GAUSS_ORDER * a.size
        fine = left + right
        if density is None:
            tol = max(abs_tol, rel_tol * abs(float(fine.sum())))
            density = tol / width
        panel_err = np.abs(fine - coarse)
        done = (panel_err <= density * (b - a)) | (panel_err <= _ROUNDOFF * (left_abs + right_abs))
        if done.any():
            accepted.append(float(fine[done].sum()))
            errors.append(float(panel_err[done].sum()))
        if not done.all():
            keep = ~done
            na = np.concatenate([a[keep], mid[keep]])
            nb = np.concatenate([mid[keep], b[keep]])
            nc = np.concatenate([left[keep], right[keep]])
            for start in range(0, na.size, BATCH_PANELS):
                stop = start + BATCH_PANELS
                stack.append((na[start:stop], nb[start:stop], nc[start:stop], depth + 1))

    value = float(np.sum(accepted))
    error = float(np.sum(errors))
    logger.debug(f"integrate [{lo:.6g}, {hi:.6g}]: value={value:.12g} err={error:.3g} evals={evaluations}")
    return QuadratureResult(value=value, abs_error_estimate=error, evaluations=evaluations)


# ---------------------------------------------------------------------------
# inversion
# ---------------------------------------------------------------------------

def _flat(fn: Callable[[np.ndarray], np.ndarray]) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluate fn on a flattened copy of t and restore the shape."""

    def wrapped(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(fn(t.ravel())).reshape(t.shape)

    return wrapped


def pf_inversion(spec: DistributionSpec, x: int, tol: float = DEFAULT_TOL) -> float:
    """p_X(x) from the inversion formula, clamped to [0, 1].

    Raises:
        ConsistencyError: value below -1e-9 or above 1 + 1e-9
        QuadratureError: propagated from integrate
    """
    x = int(x)

    def integrand(t):
        return np.real(np.exp(-1j * x * t) * cf_eval(spec, t)) / np.pi

    value = integrate(_flat(integrand), 0.0, np.pi, abs_tol=tol).value
    if value < -NEGATIVE_PF_SLACK or value > 1.0 + NEGATIVE_PF_SLACK:
        raise ConsistencyError(
            f"inverted p.f. of {spec} at x={x} is {value:.3g}; the characteristic function is inconsistent")
    return min(max(value, 0.0), 1.0)


class Strategy(str, Enum):
    CLOSED_FORM = "closed-form"
    INVERSION = "inversion"


class PfEvaluator:
    """Memoized p.f. lookups for one distribution.

    Uses the closed form when the family has one, otherwise inversion. Cache
    entries are written once; concurrent misses on the same x compute the
    same value and the first write wins.
    """

    def __init__(self, spec: DistributionSpec, tol: float = DEFAULT_TOL):
        self.spec = spec
        self.tol = tol
        self.strategy = Strategy.CLOSED_FORM if spec.has_closed_pf else Strategy.INVERSION
        self._cache: Dict[int, float] = {}
        self._lock = threading.Lock()
        self.evaluations = 0
        self.hits = 0

    def _compute(self, x: int) -> float:
        if self.strategy is Strategy.CLOSED_FORM:
            return pf_closed(self.spec, x)
        # built-in families live on the nonnegative integers
        if x < 0 and self.spec.family is not Family.CUSTOM:
            return 0.0
        logger.debug(f"inverting p.f. of {self.spec} at x={x}")
        return pf_inversion(self.spec, x, self.tol)

    def __call__(self, x: int) -> float:
        x = int(x)
        cached = self._cache.get(x)
        if cached is not None:
            with self._lock:
                self.hits += 1
            return cached
        value = self._compute(x)
        with self._lock:
            self.evaluations += 1
            return self._cache.setdefault(x, value)

    def upper_bound(self, x: int) -> Optional[float]:
        """A cheap bound p(x) <= bound, or None; only offered when p itself needs inversion."""
        if self.strategy is Strategy.CLOSED_FORM:
            return None
        return pf_upper_bound(self.spec, x)

    def many(self, xs: Iterable[int]) -> np.ndarray:
        return np.array([self(x) for x in xs], dtype=float)

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def __repr__(self) -> str:
        return (f"PfEvaluator({self.spec}, strategy={self.strategy.value}, "
                f"cached={self.cache_size}, evaluations={self.evaluations})")


def pf_evaluator(spec: DistributionSpec, tol: float = DEFAULT_TOL) -> PfEvaluator:
    return PfEvaluator(spec, tol)


def generalized_inversion_check(spec: DistributionSpec, m: int, x: int,
                                tol: float = DEFAULT_TOL) -> Tuple[float, float]:
    """Both sides of (x - m)^2 p_X(x) = (1/2pi) int_{-pi}^{pi} e^{-itx} E[(X - m)^2 e^{itX}] dt.

    E[(X - m)^2 e^{itX}] = -(phi'' - 2im phi' - m^2 phi), i.e. -e^{itm} phi''_Y for Y = X - m.
    """
    m, x = int(m), int(x)
    if x == m:
        raise ValueError("x must differ from m")
    spec.require_square_integrable()
    p = pf_closed(spec, x)
    if p is None:
        p = pf_inversion(spec, x, tol)
    lhs = (x - m) ** 2 * p

    def integrand(t):
        phi = cf_eval(spec, t)
        d1, d2 = cf_derivs(spec, t)
        moment = -(d2 - 2j * m * d1 - m * m * phi)
        return np.real(np.exp(-1j * x * t) * moment) / (2.0 * np.pi)

    rhs = integrate(_flat(integrand), -np.pi, np.pi, abs_tol=tol).value
    return float(lhs), float(rhs)
