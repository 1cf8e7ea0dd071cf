"""
Characteristic-function algebra for integer-valued distributions.

Each built-in family is described by its characteristic function
phi(t) = E[exp(itX)] together with the first two derivatives, evaluated
as complex numpy values on scalars or arrays of t. Families:

    poisson            phi(t) = exp(lambda (e^{it} - 1))
    binomial           phi(t) = (1 - p + p e^{it})^n
    negative-binomial  phi(t) = (q / (1 - (1 - q) e^{it}))^r
    poisson-tweedie    phi(t) = exp((b/a) [(1 - c)^a - (1 - c e^{it})^a])
    discrete-stable    phi(t) = exp(-(b/a) (1 - e^{it})^a)
    custom             user supplied CfTriple

Complex powers use the principal branch. For c < 1 the base 1 - c e^{it}
has positive real part, so no branch cut is crossed.
"""

import importlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
ComplexValue = Union[complex, np.ndarray]

ARITHMETIC_TOL = 1e-12
IMAG_RESIDUE_TOL = 1e-10
FD_STEP = 1e-5


class InvalidParametersError(ValueError):
    """Raised when a distribution's parameters violate the family domain."""

    def __init__(self, family: str, violations: List[str]):
        self.family = family
        self.violations = list(violations)
        super().__init__(f"invalid {family} parameters: " + "; ".join(self.violations))


class MissingDerivativesError(ValueError):
    """Raised when a custom spec lacks phi', phi'' and the fallback is disabled."""


class NotSquareIntegrableError(ValueError):
    """Raised when an operation needs E[X^2] < inf and the spec does not have it."""


class Family(str, Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"
    NEGATIVE_BINOMIAL = "negative-binomial"
    DISCRETE_STABLE = "discrete-stable"
    POISSON_TWEEDIE = "poisson-tweedie"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = str(name).strip().lower().replace("_", "").replace("-", "").replace(" ", "")
        for member in cls:
            if member.value.replace("-", "") == key:
                return member
        raise InvalidParametersError(str(name), [f"unknown family {name!r}"])


PARAM_NAMES: Dict[Family, Tuple[str, ...]] = {
    Family.POISSON: ("lambda",),
    Family.BINOMIAL: ("n", "p"),
    Family.NEGATIVE_BINOMIAL: ("r", "q"),
    Family.DISCRETE_STABLE: ("a", "b"),
    Family.POISSON_TWEEDIE: ("a", "b", "c"),
    Family.CUSTOM: (),
}


@dataclass(frozen=True)
class CfTriple:
    """phi, phi' and phi'' of a distribution, each mapping t to complex values.

    `approximate` marks triples whose derivatives come from finite differences.
    """

    phi: Callable[[ArrayLike], ComplexValue]
    dphi: Optional[Callable[[ArrayLike], ComplexValue]] = None
    d2phi: Optional[Callable[[ArrayLike], ComplexValue]] = None
    approximate: bool = False

    @property
    def has_derivatives(self) -> bool:
        return self.dphi is not None and self.d2phi is not None


def finite_difference_triple(phi: Callable[[ArrayLike], ComplexValue],
                             step: float = FD_STEP) -> CfTriple:
    """Central-difference derivatives of phi, flagged approximate."""

    def dphi(t):
        t = np.asarray(t, dtype=float)
        return (phi(t + step) - phi(t - step)) / (2.0 * step)

    def d2phi(t):
        t = np.asarray(t, dtype=float)
        return (phi(t + step) - 2.0 * phi(t) + phi(t - step)) / (step * step)

    return CfTriple(phi=phi, dphi=dphi, d2phi=d2phi, approximate=True)


def point_mass_triple(k: int = 0) -> CfTriple:
    """c.f. triple of the distribution putting all its mass on integer k."""
    k = int(k)

    def phi(t):
        return np.exp(1j * k * np.asarray(t, dtype=float))

    def dphi(t):
        return 1j * k * phi(t)

    def d2phi(t):
        return -(k * k) * phi(t)

    return CfTriple(phi=phi, dphi=dphi, d2phi=d2phi)


POINT_MASS_AT_ZERO = point_mass_triple(0)


def _resolve_attr(path: str) -> Any:
    """Import `package.module:attr` (or dotted `package.module.attr`)."""
    if ":" in path:
        module_name, attr = path.split(":", 1)
    else:
        module_name, _, attr = path.rpartition(".")
    if not module_name or not attr:
        raise InvalidParametersError("custom", [f"cannot resolve {path!r}; expected 'module:attr'"])
    try:
        target = importlib.import_module(module_name)
    except ImportError as e:
        raise InvalidParametersError("custom", [f"cannot import {module_name!r}: {e}"])
    for part in attr.split("."):
        try:
            target = getattr(target, part)
        except AttributeError:
            raise InvalidParametersError("custom", [f"{module_name!r} has no attribute {attr!r}"])
    return target


@dataclass(frozen=True)
class DistributionSpec:
    """A distribution identified by family and parameters.

    Built-in families validate their parameter domain at construction; custom
    specs are checked for phi(0) = 1, |phi| <= 1 and conjugate symmetry.
    """

    family: Family
    params: Mapping[str, float] = field(default_factory=dict)
    custom: Optional[CfTriple] = None
    custom_pf: Optional[Callable[[int], float]] = field(default=None, compare=False)
    allow_fd: bool = True

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family)
                           if not isinstance(self.family, Family) else self.family)
        object.__setattr__(self, "params", dict(self.params))
        if self.family is Family.CUSTOM:
            _check_custom(self)
        else:
            _check_params(self.family, self.params)

    # -- constructors ------------------------------------------------------

    @classmethod
    def poisson(cls, lam: float) -> "DistributionSpec":
        return cls(Family.POISSON, {"lambda": lam})

    @classmethod
    def binomial(cls, n: int, p: float) -> "DistributionSpec":
        return cls(Family.BINOMIAL, {"n": n, "p": p})

    @classmethod
    def negative_binomial(cls, r: float, q: float) -> "DistributionSpec":
        return cls(Family.NEGATIVE_BINOMIAL, {"r": r, "q": q})

    @classmethod
    def discrete_stable(cls, a: float, b: float) -> "DistributionSpec":
        return cls(Family.DISCRETE_STABLE, {"a": a, "b": b})

    @classmethod
    def poisson_tweedie(cls, a: float, b: float, c: float) -> "DistributionSpec":
        return cls(Family.POISSON_TWEEDIE, {"a": a, "b": b, "c": c})

    @classmethod
    def from_triple(cls, triple: Union[CfTriple, Callable], pf: Optional[Callable[[int], float]] = None,
                    allow_fd: bool = True) -> "DistributionSpec":
        if not isinstance(triple, CfTriple):
            triple = CfTriple(phi=triple)
        return cls(Family.CUSTOM, {}, custom=triple, custom_pf=pf, allow_fd=allow_fd)

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "DistributionSpec":
        """Build a spec from {"family": ..., "params": {...}}.

        Custom distributions reference importable objects:
        {"family": "custom", "cf": "module:attr", "pf": "module:attr"}.
        """
        if not isinstance(obj, Mapping) or "family" not in obj:
            raise InvalidParametersError("?", ["expected a JSON object with a 'family' field"])
        family = Family.parse(obj["family"])
        if family is Family.CUSTOM:
            if "cf" not in obj:
                raise InvalidParametersError("custom", ["custom distributions need a 'cf' reference"])
            triple = _resolve_attr(obj["cf"])
            pf = _resolve_attr(obj["pf"]) if obj.get("pf") else None
            if not isinstance(triple, CfTriple) and not callable(triple):
                raise InvalidParametersError("custom", [f"{obj['cf']!r} is neither a CfTriple nor callable"])
            return cls.from_triple(triple, pf=pf)

        params = obj.get("params", {})
        if not isinstance(params, Mapping):
            raise InvalidParametersError(family.value, ["'params' must be an object"])
        expected = PARAM_NAMES[family]
        problems = [f"missing parameter {name!r}" for name in expected if name not in params]
        problems += [f"unexpected parameter {name!r}" for name in params if name not in expected]
        if problems:
            raise InvalidParametersError(family.value, problems)
        try:
            values = {name: float(params[name]) for name in expected}
        except (TypeError, ValueError):
            raise InvalidParametersError(family.value, ["parameters must be numbers"])
        return cls(family, values)

    @classmethod
    def from_json_text(cls, text: str) -> "DistributionSpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidParametersError("?", [f"malformed JSON: {e}"])
        return cls.from_json(obj)

    def to_json(self) -> Dict[str, Any]:
        return {"family": self.family.value, "params": dict(self.params)}

    # -- properties --------------------------------------------------------

    @property
    def has_closed_pf(self) -> bool:
        return _closed_form_kind(self) is not None

    @property
    def square_integrable(self) -> bool:
        if self.family in (Family.POISSON_TWEEDIE, Family.DISCRETE_STABLE):
            a = self.params["a"]
            c = self.params.get("c", 1.0)
            return c < 1.0 or a == 1.0
        return True

    def require_square_integrable(self) -> None:
        if not self.square_integrable:
            raise NotSquareIntegrableError(
                f"{self.label()} has E[X^2] = inf; the envelope needs c < 1 (or a = 1)")

    def label(self) -> str:
        if self.family is Family.CUSTOM:
            return "custom"
        args = ", ".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.family.value}({args})"

    def __str__(self) -> str:
        return self.label()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _check_params(family: Family, params: Mapping[str, float]) -> None:
    problems = []
    for name in PARAM_NAMES[family]:
        if name not in params:
            problems.append(f"missing parameter {name!r}")
        elif not np.isfinite(params[name]):
            problems.append(f"{name} must be finite")
    if problems:
        raise InvalidParametersError(family.value, problems)

    if family is Family.POISSON:
        if not params["lambda"] > 0:
            problems.append("lambda must lie in (0, inf)")
    elif family is Family.BINOMIAL:
        n, p = params["n"], params["p"]
        if not (float(n).is_integer() and n >= 1):
            problems.append("n must be an integer >= 1")
        if not 0 < p < 1:
            problems.append("p must lie in (0, 1)")
    elif family is Family.NEGATIVE_BINOMIAL:
        if not params["r"] > 0:
            problems.append("r must lie in (0, inf)")
        if not 0 < params["q"] <= 1:
            problems.append("q must lie in (0, 1]")
    elif family is Family.DISCRETE_STABLE:
        if not 0 < params["a"] <= 1:
            problems.append("a must lie in (0, 1]")
        if not params["b"] > 0:
            problems.append("b must lie in (0, inf)")
    elif family is Family.POISSON_TWEEDIE:
        a, b, c = params["a"], params["b"], params["c"]
        if not b > 0:
            problems.append("b must lie in (0, inf)")
        if a > 1:
            problems.append("a must lie in (-inf, 1]")
        elif a <= 0 and not 0 <= c < 1:
            problems.append("c must lie in [0, 1) when a <= 0")
        elif a > 0 and not 0 <= c <= 1:
            problems.append("c must lie in [0, 1] when a in (0, 1]")
    if problems:
        raise InvalidParametersError(family.value, problems)


def _check_custom(spec: DistributionSpec) -> None:
    triple = spec.custom
    if triple is None:
        raise InvalidParametersError("custom", ["custom distributions need a CfTriple"])
    if not triple.has_derivatives and not spec.allow_fd:
        raise MissingDerivativesError("custom c.f. supplied without phi', phi'' and finite differences disabled")

    grid = np.linspace(-np.pi, np.pi, 65)
    values = np.asarray(triple.phi(grid), dtype=complex)
    problems = []
    origin = complex(np.asarray(triple.phi(np.array([0.0])), dtype=complex)[0])
    if abs(origin - 1.0) > ARITHMETIC_TOL:
        problems.append(f"phi(0) = {origin:.6g} differs from 1")
    if not np.all(np.isfinite(values)):
        problems.append("phi is not finite on [-pi, pi]")
    elif np.max(np.abs(values)) > 1.0 + 1e-9:
        problems.append(f"|phi(t)| > 1 (max {np.max(np.abs(values)):.6g})")
    elif np.max(np.abs(values - np.conj(values[::-1]))) > 1e-9:
        problems.append("phi(-t) != conj(phi(t))")
    if problems:
        raise InvalidParametersError("custom", problems)


# ---------------------------------------------------------------------------
# phi, phi', phi''
# ---------------------------------------------------------------------------

def _expm1_it(t: np.ndarray) -> np.ndarray:
    """e^{it} - 1 without cancellation near t = 0."""
    return -2.0 * np.sin(0.5 * t) ** 2 + 1j * np.sin(t)


def _pt_exponent(a: float, b: float, c: float, t: np.ndarray) -> np.ndarray:
    """(b/a)[(1-c)^a - (1 - c e^{it})^a], with the a -> 0 limit b log((1-c)/(1-ce^{it}))."""
    w = 1.0 - c * np.exp(1j * t)
    if a == 0.0:
        return b * (np.log(1.0 - c) - np.log(w))
    return (b / a) * ((1.0 - c) ** a - w ** a)


def _pt_psi_derivs(a: float, b: float, c: float, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    e = np.exp(1j * t)
    w = 1.0 - c * e
    if a == 1.0:
        d1 = 1j * b * c * e
        d2 = -b * c * e
    else:
        d1 = 1j * b * c * e * w ** (a - 1.0)
        d2 = -b * c * e * w ** (a - 2.0) * (1.0 - a * c * e)
    return d1, d2


def _builtin_phi(spec: DistributionSpec, t: np.ndarray) -> np.ndarray:
    p = spec.params
    fam = spec.family
    if fam is Family.POISSON:
        return np.exp(p["lambda"] * _expm1_it(t))
    if fam is Family.BINOMIAL:
        n = int(p["n"])
        return (1.0 + p["p"] * _expm1_it(t)) ** n
    if fam is Family.NEGATIVE_BINOMIAL:
        r, q = p["r"], p["q"]
        w = 1.0 - (1.0 - q) * np.exp(1j * t)
        return np.exp(r * (np.log(q) - np.log(w)))
    if fam is Family.POISSON_TWEEDIE:
        return np.exp(_pt_exponent(p["a"], p["b"], p["c"], t))
    if fam is Family.DISCRETE_STABLE:
        return np.exp(_pt_exponent(p["a"], p["b"], 1.0, t))
    raise AssertionError(fam)


def _log_derivs(spec: DistributionSpec, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(psi', psi'') for psi = log phi; Poisson, Negative Binomial and the Tweedie families."""
    p = spec.params
    fam = spec.family
    e = np.exp(1j * t)
    if fam is Family.POISSON:
        lam = p["lambda"]
        return 1j * lam * e, -lam * e
    if fam is Family.NEGATIVE_BINOMIAL:
        r, s = p["r"], 1.0 - p["q"]
        w = 1.0 - s * e
        return 1j * r * s * e / w, -r * s * e / w ** 2
    if fam in (Family.POISSON_TWEEDIE, Family.DISCRETE_STABLE):
        return _pt_psi_derivs(p["a"], p["b"], p.get("c", 1.0), t)
    raise AssertionError(fam)


def _builtin_derivs(spec: DistributionSpec, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    p = spec.params
    if spec.family is Family.BINOMIAL:
        n, pp = int(p["n"]), p["p"]
        e = np.exp(1j * t)
        base = 1.0 + pp * _expm1_it(t)
        d1 = n * base ** (n - 1) * 1j * pp * e
        d2 = -n * base ** (n - 1) * pp * e
        if n >= 2:
            d2 = d2 - n * (n - 1) * base ** (n - 2) * (pp * e) ** 2
        return d1, d2
    phi = _builtin_phi(spec, t)
    d1, d2 = _log_derivs(spec, t)
    return phi * d1, phi * (d1 * d1 + d2)


def _shifted_binomial_d2_modulus(n: int, pp: float, t: np.ndarray, m: float) -> np.ndarray:
    """|phi''_{X-m}| = |base|^{n-2} |(i((np - m) + p(n - m)(e^{it} - 1)))^2 - np(1-p)e^{it}|."""
    em1 = _expm1_it(t)
    base = 1.0 + pp * em1
    shifted = 1j * ((n * pp - m) + pp * (n - m) * em1)
    return np.abs(base) ** (n - 2) * np.abs(shifted ** 2 - n * pp * (1.0 - pp) * (1.0 + em1))


def shifted_d2_modulus(spec: DistributionSpec, t: ArrayLike, m: float) -> np.ndarray:
    """|phi''_Y(t)| for Y = X - m.

    phi''_Y = e^{-imt} (phi'' - 2im phi' - m^2 phi). For built-in families this
    is evaluated as |phi| |(psi' - im)^2 + psi''| so that the terms of size
    m^2 |phi| never cancel; custom triples use the direct combination.
    """
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    m = float(m)
    fam = spec.family
    if fam is Family.CUSTOM or (fam is Family.BINOMIAL and int(spec.params["n"]) < 2):
        phi = np.asarray(cf_eval(spec, tt))
        d1, d2 = cf_derivs(spec, tt)
        return np.abs(d2 - 2j * m * d1 - m * m * phi)
    if fam is Family.BINOMIAL:
        return _shifted_binomial_d2_modulus(int(spec.params["n"]), spec.params["p"], tt, m)
    psi1, psi2 = _log_derivs(spec, tt)
    if fam is Family.POISSON:
        lam = spec.params["lambda"]
        centred = 1j * ((lam - m) + lam * _expm1_it(tt))
    else:
        centred = psi1 - 1j * m
    return np.abs(_builtin_phi(spec, tt)) * np.abs(centred ** 2 + psi2)


def _custom_triple(spec: DistributionSpec) -> CfTriple:
    triple = spec.custom
    if triple.has_derivatives:
        return triple
    if not spec.allow_fd:
        raise MissingDerivativesError("custom c.f. supplied without phi', phi''")
    logger.warning("Using finite-difference derivatives for a custom c.f. (approximate)")
    return finite_difference_triple(triple.phi)


def _as_output(values: np.ndarray, scalar: bool) -> ComplexValue:
    return complex(values.reshape(-1)[0]) if scalar else values


def cf_eval(spec: DistributionSpec, t: ArrayLike) -> ComplexValue:
    """phi_X(t) for scalar or array t."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if spec.family is Family.CUSTOM:
        values = np.asarray(spec.custom.phi(tt), dtype=complex)
    else:
        values = _builtin_phi(spec, tt)
    return _as_output(np.broadcast_to(values, tt.shape).astype(complex), scalar)


def cf_derivs(spec: DistributionSpec, t: ArrayLike) -> Tuple[ComplexValue, ComplexValue]:
    """(phi'_X(t), phi''_X(t)) for scalar or array t."""
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if spec.family is Family.CUSTOM:
        triple = _custom_triple(spec)
        d1 = np.asarray(triple.dphi(tt), dtype=complex)
        d2 = np.asarray(triple.d2phi(tt), dtype=complex)
    else:
        d1, d2 = _builtin_derivs(spec, tt)
    d1 = np.broadcast_to(d1, tt.shape).astype(complex)
    d2 = np.broadcast_to(d2, tt.shape).astype(complex)
    return _as_output(d1, scalar), _as_output(d2, scalar)


def cf_triple(spec: DistributionSpec) -> CfTriple:
    """The spec's (phi, phi', phi'') as a CfTriple of vectorized callables."""
    return CfTriple(
        phi=lambda t: cf_eval(spec, t),
        dphi=lambda t: cf_derivs(spec, t)[0],
        d2phi=lambda t: cf_derivs(spec, t)[1],
        approximate=spec.family is Family.CUSTOM and not spec.custom.has_derivatives,
    )


def mean_and_second_moment(spec: DistributionSpec) -> Tuple[float, float]:
    """(E[X], E[X^2]) read off phi'(0) = i E[X] and phi''(0) = -E[X^2]."""
    spec.require_square_integrable()
    d1, d2 = cf_derivs(spec, 0.0)
    mean, second = d1.imag, -d2.real
    if abs(d1.real) > IMAG_RESIDUE_TOL * max(1.0, abs(mean)):
        logger.warning(f"phi'(0) has a real residue {d1.real:.3g} for {spec}")
    if abs(d2.imag) > IMAG_RESIDUE_TOL * max(1.0, abs(second)):
        logger.warning(f"phi''(0) has an imaginary residue {d2.imag:.3g} for {spec}")
    return float(mean), float(second)


def variance(spec: DistributionSpec) -> float:
    mean, second = mean_and_second_moment(spec)
    return max(second - mean * mean, 0.0)


# ---------------------------------------------------------------------------
# closed-form probability functions
# ---------------------------------------------------------------------------

def _closed_form_kind(spec: DistributionSpec) -> Optional[Tuple[str, Tuple[float, ...]]]:
    p = spec.params
    fam = spec.family
    if fam is Family.POISSON:
        return "poisson", (p["lambda"],)
    if fam is Family.BINOMIAL:
        return "binomial", (int(p["n"]), p["p"])
    if fam is Family.NEGATIVE_BINOMIAL:
        return "nbinom", (p["r"], p["q"])
    if fam is Family.POISSON_TWEEDIE:
        a, b, c = p["a"], p["b"], p["c"]
        if a == 0.0:
            return "nbinom", (b, 1.0 - c)
        if a == 1.0:
            return "poisson", (b * c,)
    if fam is Family.DISCRETE_STABLE and p["a"] == 1.0:
        return "poisson", (p["b"],)
    if fam is Family.CUSTOM and spec.custom_pf is not None:
        return "custom", ()
    return None


def pf_upper_bound(spec: DistributionSpec, x: int) -> Optional[float]:
    """Chernoff bound p_X(x) <= e^{-sx} E[e^{sX}] for Poisson-Tweedie, s = -log(c)/2.

    None where no moment generating function is available; 0 off the support.
    """
    if spec.family is not Family.POISSON_TWEEDIE:
        return None
    if int(x) < 0:
        return 0.0
    a, b, c = spec.params["a"], spec.params["b"], spec.params["c"]
    if not 0.0 < c < 1.0:
        return None
    s = -0.5 * np.log(c)
    w = 1.0 - np.sqrt(c)
    if a == 0.0:
        log_mgf = b * (np.log(1.0 - c) - np.log(w))
    else:
        log_mgf = (b / a) * ((1.0 - c) ** a - w ** a)
    return float(min(1.0, np.exp(log_mgf - s * int(x))))


def pf_closed(spec: DistributionSpec, x: int) -> Optional[float]:
    """Exact p.f. where the family has one (log-space), else None."""
    kind = _closed_form_kind(spec)
    if kind is None:
        return None
    name, args = kind
    x = int(x)
    if name == "custom":
        return float(spec.custom_pf(x))
    if x < 0:
        return 0.0
    if name == "poisson":
        (lam,) = args
        if lam == 0.0:
            return 1.0 if x == 0 else 0.0
        return float(np.exp(stats.poisson.logpmf(x, lam)))
    if name == "binomial":
        n, pp = args
        return float(np.exp(stats.binom.logpmf(x, n, pp)))
    r, q = args
    if q == 1.0:
        return 1.0 if x == 0 else 0.0
    return float(np.exp(stats.nbinom.logpmf(x, r, q)))
