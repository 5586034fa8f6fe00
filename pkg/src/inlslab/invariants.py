"""Conserved quantities, scale-invariant products and threshold classification."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import HypothesisViolated, SupportOverflow
from .exponents import InlsParams, as_params
from .radial import ComplexRadialField, RadialGrid, integrate, integrate_cusp, origin_value, sine_interpolate

# "finite variance": the outer 10% of the grid carries less than this share of it.
VARIANCE_TAIL_LIMIT = 1e-4
# rescale() refuses fields pushing more than this share of mass into the outer 10%.
RESCALE_TAIL_LIMIT = 1e-8


def mass(field: ComplexRadialField) -> float:
    grid = field.grid
    return float(4 * np.pi * grid.dr * np.sum(np.abs(field.v) ** 2))


def grad_sq(field: ComplexRadialField, vhat: np.ndarray | None = None) -> float:
    """||grad u||^2 = -Re<u, Laplacian u>, evaluated in sine space."""
    grid = field.grid
    if vhat is None:
        vhat = field.spectrum()
    return float(4 * np.pi * grid.dr * np.sum(grid.k2 * np.abs(vhat) ** 2))


def potential(field: ComplexRadialField, b=None) -> float:
    """|| |x|^-b |u|^4 ||_{L^1}, with the origin cusp corrected."""
    grid = field.grid
    b = grid.b if b is None else b
    return integrate_cusp(grid, np.abs(field.u) ** 4, b, abs(origin_value(field)) ** 4)


def variance(field: ComplexRadialField) -> float:
    grid = field.grid
    return integrate(grid, grid.r**2 * np.abs(field.u) ** 2)


def outer_fraction(field: ComplexRadialField, density: np.ndarray | None = None) -> float:
    """Share of sum(density) held in the outer 10% of the grid (default |v|^2)."""
    if density is None:
        density = np.abs(field.v) ** 2
    total = float(np.sum(density))
    if total == 0:
        return 0.0
    return float(np.sum(density[field.grid.outer_mask]) / total)


def h1_norm(field: ComplexRadialField) -> float:
    return math.sqrt(mass(field) + grad_sq(field))


def scale_products(energy: float, mass_: float, grad: float, s_c: float) -> tuple[float, float]:
    """(E^s M^(1-s), ||grad u||^s ||u||^(1-s)); negative E gives a signed product."""
    me = math.copysign(abs(energy) ** s_c, energy) * mass_ ** (1 - s_c)
    gp = grad ** (s_c / 2) * mass_ ** ((1 - s_c) / 2)
    return me, gp


@dataclass(frozen=True)
class InvariantReport:
    mass: float
    grad_sq: float
    potential: float
    energy: float
    me_product: float
    grad_product: float
    variance: float
    variance_outer_fraction: float
    negative_energy: bool

    @property
    def finite_variance(self) -> bool:
        return self.variance_outer_fraction < VARIANCE_TAIL_LIMIT

    def as_dict(self) -> dict:
        d = asdict(self)
        d["finite_variance"] = self.finite_variance
        return d


def report(field: ComplexRadialField, params=None) -> InvariantReport:
    params = as_params(params if params is not None else field.grid.b)
    if params.b != field.grid.b:
        field = ComplexRadialField(field.grid.with_b(params.b), field.v)
    m = mass(field)
    g = grad_sq(field)
    p = potential(field)
    e = g / 2 - p / 4
    me, gp = scale_products(e, m, g, params.s_c_float)
    r2u2 = field.grid.r**2 * np.abs(field.v) ** 2
    return InvariantReport(
        mass=m,
        grad_sq=g,
        potential=p,
        energy=e,
        me_product=me,
        grad_product=gp,
        variance=variance(field),
        variance_outer_fraction=outer_fraction(field, r2u2),
        negative_energy=e < 0,
    )


def rescale(field: ComplexRadialField, delta: float) -> ComplexRadialField:
    """u_delta(x) = delta^((2-b)/2) u(delta x), resampled on the same grid."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = field.grid
    if delta == 1:
        return field.replace(field.v.copy())
    b = float(grid.b)
    # v_delta(r) = r u_delta(r) = delta^((2-b)/2 - 1) v(delta r)
    v = delta ** ((2 - b) / 2 - 1) * sine_interpolate(field, delta * grid.r)
    out = field.replace(v)
    frac = outer_fraction(out)
    if frac > RESCALE_TAIL_LIMIT:
        raise SupportOverflow(f"rescaled field holds {frac:.3g} of its mass in the outer 10% of the grid")
    return out


class VerdictTag(str, enum.Enum):
    GLOBAL_SCATTERING = "GlobalScattering"
    BLOWUP_CANDIDATE = "BlowupCandidate"
    INDETERMINATE = "Indeterminate"
    NEGATIVE_ENERGY_BLOWUP_CANDIDATE = "NegativeEnergyBlowupCandidate"


@dataclass(frozen=True)
class Verdict:
    tag: VerdictTag
    me_ratio: float
    grad_ratio: float
    finite_variance: bool
    negative_energy: bool = False

    def as_dict(self) -> dict:
        return {
            "tag": self.tag.value,
            "me_ratio": self.me_ratio,
            "grad_ratio": self.grad_ratio,
            "finite_variance": self.finite_variance,
            "negative_energy": self.negative_energy,
        }


def classify_report(rep: InvariantReport, profile, boundary_tol: float = 1e-5) -> Verdict:
    me_ratio = rep.me_product / profile.threshold_me
    grad_ratio = rep.grad_product / profile.threshold_grad
    fv = rep.finite_variance

    def verdict(tag):
        return Verdict(tag, me_ratio, grad_ratio, fv, rep.negative_energy)

    if rep.negative_energy:
        return verdict(VerdictTag.NEGATIVE_ENERGY_BLOWUP_CANDIDATE if fv else VerdictTag.INDETERMINATE)
    # Ratios within boundary_tol of 1 are on the threshold itself, where neither
    # the scattering theorem nor the blowup criterion says anything.
    if me_ratio >= 1 - boundary_tol or abs(grad_ratio - 1) <= boundary_tol:
        return verdict(VerdictTag.INDETERMINATE)
    if grad_ratio < 1:
        return verdict(VerdictTag.GLOBAL_SCATTERING)
    if fv:
        return verdict(VerdictTag.BLOWUP_CANDIDATE)
    return verdict(VerdictTag.INDETERMINATE)


def classify(field: ComplexRadialField, profile, boundary_tol: float = 1e-5) -> Verdict:
    """Compare a datum against the thresholds carried by ``profile``."""
    params = profile.params
    return classify_report(report(field, params), profile, boundary_tol)


@dataclass(frozen=True)
class CoercivityReport:
    w: float
    lower_energy_slack: float  # E - s_c/(3+b) |grad v|^2
    upper_energy_slack: float  # |grad v|^2/2 - E
    gradient_slack: float  # w^(1/2) threshold_grad - grad_product
    virial_slack: float  # 8|grad v|^2 - 2(3+b) P - 8(1-w)|grad v|^2
    virial_chain_slack: float  # 8(1-w)|grad v|^2 - 16(1-w) E

    def slacks(self) -> dict:
        d = asdict(self)
        d.pop("w")
        return d

    def min_relative_slack(self, scale: float) -> float:
        return min(self.slacks().values()) / scale if scale > 0 else 0.0


def coercivity_check(field: ComplexRadialField, profile, rtol: float = 1e-10) -> CoercivityReport:
    """Evaluate the three coercivity bounds below the gradient threshold."""
    params: InlsParams = profile.params
    b = params.b_float
    s = params.s_c_float
    rep = report(field, params)
    if rep.grad_product > profile.threshold_grad * (1 + rtol):
        raise HypothesisViolated(
            f"grad product {rep.grad_product:.6g} exceeds threshold {profile.threshold_grad:.6g}"
        )
    g, e, p = rep.grad_sq, rep.energy, rep.potential
    w = rep.me_product / profile.threshold_me
    a = 1 - w
    return CoercivityReport(
        w=w,
        lower_energy_slack=e - s / (3 + b) * g,
        upper_energy_slack=g / 2 - e,
        gradient_slack=math.sqrt(max(w, 0.0)) * profile.threshold_grad - rep.grad_product,
        virial_slack=(8 * g - 2 * (3 + b) * p) - 8 * a * g,
        virial_chain_slack=8 * a * g - 16 * a * e,
    )


def gaussian(grid: RadialGrid, amplitude: float, width: float = 1.0) -> ComplexRadialField:
    return ComplexRadialField.from_function(grid, lambda r: amplitude * np.exp(-((r / width) ** 2)))
