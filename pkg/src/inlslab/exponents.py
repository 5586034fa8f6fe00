"""Exact exponent bookkeeping for the cubic INLS in three dimensions.

Everything here is done with :class:`fractions.Fraction`; no float ever
enters a comparison. The only non-rational value is :data:`INFINITY`, which
may appear as the time exponent ``q`` of an L2-admissible pair.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import EmptyRange, InfeasibleTheta, OutOfRange

HALF = Fraction(1, 2)


class _Infinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __str__(self):
        return "inf"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()

Exponent = Union[Fraction, _Infinity]
RationalLike = Union[Fraction, int, str]


def parse_rational(value: RationalLike) -> Fraction:
    """Parse ``"p/q"`` or an integer into a Fraction; decimals are rejected."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    text = str(value).strip()
    if text in ("inf", "infinity"):
        raise ValueError("infinity is not a rational")
    if any(c in text for c in ".eE"):
        raise ValueError(f"decimal notation is not accepted for exact values: {text!r}")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {text!r}") from exc


def format_rational(x: Exponent) -> str:
    if x is INFINITY:
        return "inf"
    return f"{x.numerator}/{x.denominator}"


def critical_index(b: RationalLike) -> Fraction:
    """s_c = (1 + b)/2, the exponent of the scale-invariant Sobolev space."""
    b = parse_rational(b)
    # b = 0 is the cubic NLS endpoint; kept so the INLS family can be compared with it.
    if b < 0 or b >= HALF:
        raise OutOfRange(f"b = {b} outside [0, 1/2)")
    return (1 + b) / 2


@dataclass(frozen=True)
class InlsParams:
    b: Fraction

    def __post_init__(self):
        b = parse_rational(self.b)
        critical_index(b)
        object.__setattr__(self, "b", b)

    @property
    def s_c(self) -> Fraction:
        return (1 + self.b) / 2

    @property
    def b_float(self) -> float:
        return float(self.b)

    @property
    def s_c_float(self) -> float:
        return float(self.s_c)

    def __str__(self):
        return format_rational(self.b)


def as_params(value) -> InlsParams:
    if isinstance(value, InlsParams):
        return value
    return InlsParams(parse_rational(value))


class PairClass(enum.Enum):
    L2 = "L2"
    HS_DOT = "HsDot"
    HS_DOT_DUAL = "HsDotDual"


@dataclass(frozen=True)
class ExponentPair:
    q: Exponent
    r: Fraction
    cls: PairClass

    def __post_init__(self):
        if self.q is not INFINITY:
            object.__setattr__(self, "q", parse_rational(self.q))
        object.__setattr__(self, "r", parse_rational(self.r))

    def as_floats(self) -> tuple[float, float]:
        q = float("inf") if self.q is INFINITY else float(self.q)
        return q, float(self.r)


def check_admissible(pair: ExponentPair, params: InlsParams) -> bool:
    """Exact scaling relation and range test for the pair's class."""
    q, r = pair.q, pair.r
    if r <= 0:
        return False
    if q is INFINITY:
        if pair.cls is not PairClass.L2:
            return False
        two_over_q = Fraction(0)
    else:
        if q <= 0:
            return False
        two_over_q = 2 / q
    s = params.s_c
    base = Fraction(3, 2) - 3 / r
    if pair.cls is PairClass.L2:
        return two_over_q == base and 2 <= r <= 6
    r_low = 6 / (3 - 2 * s)
    if pair.cls is PairClass.HS_DOT:
        return two_over_q == base - s and r_low <= r < 6
    return two_over_q == base + s and r_low < r < 6


@dataclass(frozen=True)
class WorkingExponents:
    theta: Fraction
    q_hat: Fraction
    r_hat: Fraction
    a_tilde: Fraction
    a_hat: Fraction

    def pairs(self) -> list[ExponentPair]:
        return [
            ExponentPair(self.q_hat, self.r_hat, PairClass.L2),
            ExponentPair(self.a_hat, self.r_hat, PairClass.HS_DOT),
            ExponentPair(self.a_tilde, self.r_hat, PairClass.HS_DOT_DUAL),
        ]


def working_exponents(params: InlsParams, theta: RationalLike) -> WorkingExponents:
    """Evaluate q_hat, r_hat, a_tilde, a_hat and verify their admissibility.

    Raises InfeasibleTheta when theta is outside (0, 2) or any of the three
    memberships fails. Membership is checked directly, so values of theta
    above the interpolation bound of :func:`theta_range` are accepted as long
    as the pairs themselves are admissible.
    """
    params = as_params(params)
    theta = parse_rational(theta)
    b = params.b
    if not 0 < theta < 2:
        raise InfeasibleTheta(f"theta = {theta} outside (0, 2)")
    q_hat = 4 * (4 - theta) / (6 + 2 * b - theta * (1 + b))
    r_hat = 6 * (4 - theta) / (2 * (3 - b) - theta * (2 - b))
    a_tilde = 2 * (4 - theta) / ((7 + 2 * b - 3 * theta) - (2 - b) * (1 - theta))
    a_hat = 2 * (4 - theta) / (1 - b)
    exps = WorkingExponents(theta, q_hat, r_hat, a_tilde, a_hat)
    for pair in exps.pairs():
        if not check_admissible(pair, params):
            raise InfeasibleTheta(
                f"({format_rational(pair.q)}, {format_rational(pair.r)}) is not "
                f"{pair.cls.value}-admissible at b = {b}, theta = {theta}"
            )
    return exps


@dataclass(frozen=True)
class ThetaRange:
    """Open interval (lower, upper) of feasible theta.

    ``bounds`` maps each upper-bound constraint to its value; ``binding`` names
    the one that attains the minimum.
    """

    lower: Fraction
    upper: Fraction
    binding: str
    bounds: dict

    def __contains__(self, theta) -> bool:
        theta = parse_rational(theta)
        return self.lower < theta < self.upper

    def midpoint(self) -> Fraction:
        return (self.lower + self.upper) / 2

    def samples(self, count: int) -> list[Fraction]:
        """``count`` equally spaced interior rationals."""
        width = self.upper - self.lower
        return [self.lower + width * Fraction(j, count + 1) for j in range(1, count + 1)]


def theta_range(params) -> ThetaRange:
    """Feasible theta for the nonlinear estimates.

    Accepts an :class:`InlsParams` or a bare rational b, so that b >= 1/2 can
    be probed (it yields EmptyRange rather than OutOfRange).
    """
    if isinstance(params, InlsParams):
        b = params.b
    else:
        b = parse_rational(params)
    if b < 0:
        raise OutOfRange(f"b = {b} is negative")
    bounds = {
        "theta<2": Fraction(2),
        # r_bar < 6  <=>  theta (2 - 2b) < 1 - 2b
        "r_bar<6": (1 - 2 * b) / (2 - 2 * b) if b < 1 else Fraction(-1),
        "interpolation p<6": Fraction(2, 3),
    }
    binding = min(bounds, key=bounds.__getitem__)
    upper = bounds[binding]
    if upper <= 0:
        raise EmptyRange(f"no feasible theta at b = {b} (binding: {binding})")
    return ThetaRange(Fraction(0), upper, binding, bounds)


def r_bar(params: InlsParams, theta: RationalLike) -> Fraction:
    theta = parse_rational(theta)
    b = params.b
    return 12 * (1 - theta) / (3 - 2 * b - theta * (4 - 2 * b))


def endpoint_pairs(params: InlsParams, fraction: Fraction = Fraction(1, 20)) -> list[ExponentPair]:
    """Two HsDot-admissible pairs a ``fraction`` of the r-range inside each end."""
    s = params.s_c
    lo, hi = 6 / (3 - 2 * s), Fraction(6)
    pairs = []
    for r in (lo + fraction * (hi - lo), hi - fraction * (hi - lo)):
        q = 2 / (Fraction(3, 2) - 3 / r - s)
        pairs.append(ExponentPair(q, r, PairClass.HS_DOT))
    return pairs


def strichartz_panel(params: InlsParams) -> list[ExponentPair]:
    """Finite stand-in for the sup over all HsDot-admissible pairs."""
    mid = theta_range(params).midpoint()
    exps = working_exponents(params, mid)
    return [exps.pairs()[1], *endpoint_pairs(params)]
