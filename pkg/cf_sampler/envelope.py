"""
Envelope set-up for the universal rejection sampler.

For an anchor m and Y = X - m, the constants

    c   = (1/pi) int_0^pi |phi_X(t)| dt
    k_m = (1/pi) int_0^pi |phi''_X(t) - 2im phi'_X(t) - m^2 phi_X(t)| dt

bound the p.f. by p_X(x) <= min(c, k_m / (x - m)^2). Rounding a flat-centre,
inverse-square-tail mixture gives the dominating p.f. p_Z and the hat

    h(x) = c                        if |x - m| <= sigma
           k_m / ((x - m)^2 - 1/4)  otherwise

with sigma = Round(sqrt(k_m/c)) + 1/2, A = 2(sigma c + k_m/sigma) and
alpha = 2 sigma c / A, so that h = A p_Z.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar

from cf_sampler.distributions import DistributionSpec, cf_eval, mean_and_second_moment, shifted_d2_modulus
from cf_sampler.quadrature import DEFAULT_TOL, integrate

logger = logging.getLogger(__name__)

NORMAL_LIMIT_COMPLEXITY = (512.0 / (math.e * math.pi ** 3)) ** 0.25
REL_TOL_FLOOR = 1e-13
SEARCH_WIDTH_SD = 4.0
SEARCH_XATOL = 1e-4
FALLBACK_SCAN = 4
DEGENERATE_K = 1e-14

MRule = Union[str, int]


class DegenerateDistributionWarning(UserWarning):
    """The distribution is a point mass; the sampler is valid but unnecessary."""


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


@dataclass(frozen=True)
class Envelope:
    m: int
    c: float
    k_m: float
    sigma: float
    alpha: float
    big_a: float
    degenerate: bool = False

    @classmethod
    def from_constants(cls, m: int, c: float, k_m: float) -> "Envelope":
        if not 0 < c <= 1 + 1e-12:
            raise ValueError(f"c must lie in (0, 1], got {c!r}")
        if k_m < 0:
            raise ValueError(f"k_m must be nonnegative, got {k_m!r}")
        c = min(c, 1.0)
        j = round_half_away(math.sqrt(k_m / c))
        sigma = j + 0.5
        big_a = 2.0 * (sigma * c + k_m / sigma)
        alpha = 2.0 * sigma * c / big_a
        degenerate = k_m < DEGENERATE_K and abs(c - 1.0) < 1e-9
        return cls(m=int(m), c=c, k_m=k_m, sigma=sigma, alpha=alpha, big_a=big_a, degenerate=degenerate)

    @property
    def j(self) -> int:
        return int(self.sigma - 0.5)

    @property
    def heuristic_complexity(self) -> float:
        """4 sqrt(c k_m): the complexity with sigma unrounded; a lower bound for big_a."""
        return 4.0 * math.sqrt(self.c * self.k_m)

    def as_dict(self) -> dict:
        return {
            "m": self.m, "c": self.c, "k_m": self.k_m, "sigma": self.sigma,
            "alpha": self.alpha, "big_a": self.big_a,
        }


def _breakpoints(spec: DistributionSpec) -> Optional[List[float]]:
    """Split [0, pi] on the scale 1/sd where |phi| concentrates near t = 0."""
    if not spec.square_integrable:
        return None
    mean, second = mean_and_second_moment(spec)
    sd = math.sqrt(max(second - mean * mean, 0.0))
    if sd <= 1.0:
        return None
    return [s / sd for s in (1.0, 2.0, 4.0, 8.0, 16.0) if s / sd < math.pi]


def compute_c(spec: DistributionSpec, tol: float = DEFAULT_TOL) -> float:
    """c = (1/pi) int_0^pi |phi_X(t)| dt; shift invariant and independent of m."""

    def integrand(t):
        t = np.asarray(t)
        return np.abs(cf_eval(spec, t.ravel())).reshape(t.shape) / np.pi

    result = integrate(integrand, 0.0, np.pi, abs_tol=tol, rel_tol=REL_TOL_FLOOR, points=_breakpoints(spec))
    return min(result.value, 1.0)


def compute_k(spec: DistributionSpec, m: float, tol: float = DEFAULT_TOL) -> float:
    """k_m = (1/pi) int_0^pi |phi''_Y(t)| dt for Y = X - m; m may be real."""
    spec.require_square_integrable()
    m = float(m)

    def integrand(t):
        t = np.asarray(t)
        return (shifted_d2_modulus(spec, t.ravel(), m) / np.pi).reshape(t.shape)

    result = integrate(integrand, 0.0, np.pi, abs_tol=tol, rel_tol=REL_TOL_FLOOR, points=_breakpoints(spec))
    return max(result.value, 0.0)


def select_m_mean(spec: DistributionSpec) -> int:
    """m** = Round(E[X])."""
    mean, _ = mean_and_second_moment(spec)
    return round_half_away(mean)


def _best_integer(spec: DistributionSpec, candidates: List[int], tol: float, prefer: int) -> int:
    scored = [(compute_k(spec, m, tol), abs(m - prefer), m) for m in candidates]
    return min(scored)[2]


def select_m_star(spec: DistributionSpec, tol: float = DEFAULT_TOL) -> int:
    """m* = Round(argmin_m k_m), the argmin taken over real m.

    Golden-section search bracketed by (E[X] - 4 sd, E[X], E[X] + 4 sd). If
    k_m at E[X] does not lie below both ends, nine integers around m** are
    scanned instead. An integer neighbour with a smaller k_m is reported at
    debug level, not selected.
    """
    mean, second = mean_and_second_moment(spec)
    sd = math.sqrt(max(second - mean * mean, 0.0))
    m_mean = round_half_away(mean)
    if sd == 0.0:
        return m_mean

    lo, hi = mean - SEARCH_WIDTH_SD * sd, mean + SEARCH_WIDTH_SD * sd
    k_lo, k_mid, k_hi = (compute_k(spec, m, tol) for m in (lo, mean, hi))
    if k_mid >= min(k_lo, k_hi):
        logger.info(f"k_m search for {spec} has no interior bracket; scanning integers around m**={m_mean}")
        scan = list(range(m_mean - FALLBACK_SCAN, m_mean + FALLBACK_SCAN + 1))
        return _best_integer(spec, scan, tol, m_mean)

    # golden's xtol is relative to |m|
    xtol = SEARCH_XATOL / max(1.0, abs(mean) + SEARCH_WIDTH_SD * sd)
    result = minimize_scalar(lambda m: compute_k(spec, m, tol), bracket=(lo, mean, hi),
                             method="golden", options={"xtol": xtol})
    m_star = round_half_away(float(result.x))
    if logger.isEnabledFor(logging.DEBUG):
        best = _best_integer(spec, [m_star - 1, m_star, m_star + 1], tol, m_star)
        if best != m_star:
            logger.debug(f"{spec}: argmin k_m = {float(result.x):.4f} rounds to m*={m_star}; "
                         f"integer m={best} has the smaller k_m")
    return m_star


def build_envelope(spec: DistributionSpec, m: int, tol: float = DEFAULT_TOL,
                   c: Optional[float] = None, k_m: Optional[float] = None) -> Envelope:
    """Envelope at anchor m; c and k_m are computed unless already known."""
    spec.require_square_integrable()
    if c is None:
        c = compute_c(spec, tol)
    if k_m is None:
        k_m = compute_k(spec, m, tol)
    env = Envelope.from_constants(m, c, k_m)
    if env.degenerate:
        message = f"{spec} is a point mass at {m}; sampling is trivial (sigma = 1/2, A = 1)"
        logger.warning(message)
        warnings.warn(message, DegenerateDistributionWarning, stacklevel=2)
    logger.info(f"Envelope for {spec}: m={env.m} c={env.c:.6g} k_m={env.k_m:.6g} "
                f"sigma={env.sigma} alpha={env.alpha:.6g} A={env.big_a:.6g}")
    return env


def resolve_anchor(spec: DistributionSpec, m_rule: MRule = "star", tol: float = DEFAULT_TOL) -> int:
    if isinstance(m_rule, (int, np.integer)) and not isinstance(m_rule, bool):
        return int(m_rule)
    rule = str(m_rule).strip().lower()
    if rule == "star":
        return select_m_star(spec, tol)
    if rule == "mean":
        return select_m_mean(spec)
    try:
        return int(rule)
    except ValueError:
        raise ValueError(f"m rule must be 'star', 'mean' or an integer, got {m_rule!r}")


def envelope_for(spec: DistributionSpec, m_rule: MRule = "star", tol: float = DEFAULT_TOL) -> Envelope:
    return build_envelope(spec, resolve_anchor(spec, m_rule, tol), tol)


def hat(env: Envelope, x):
    """h(x): c inside |x - m| <= sigma, k_m / ((x - m)^2 - 1/4) outside."""
    d = np.asarray(x, dtype=float) - env.m
    with np.errstate(divide="ignore"):
        tail = env.k_m / (d * d - 0.25)
    out = np.where(np.abs(d) <= env.sigma, env.c, tail)
    return float(out) if out.ndim == 0 else out


def pz(env: Envelope, z):
    """p.f. of Z = Round(V), V the flat-centre / inverse-square-tail mixture."""
    d = np.asarray(z, dtype=float) - env.m
    with np.errstate(divide="ignore"):
        tail = (1.0 - env.alpha) * env.sigma / (2.0 * d * d - 0.5)
    out = np.where(np.abs(d) <= env.sigma, env.alpha / (2.0 * env.sigma), tail)
    return float(out) if out.ndim == 0 else out
