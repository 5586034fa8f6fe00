"""Virial identity, localization and scattering diagnostics over traces."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial

from .dynamics import Termination, lr_monitor_key
from .errors import NotConverged, StrideTooCoarse, WeightOverflowsGrid
from .exponents import ExponentPair, as_params, strichartz_panel
from .invariants import coercivity_check, grad_sq, potential, report
from .radial import ComplexRadialField, RadialGrid, dst, integrate, integrate_cusp, origin_value, radial_derivative

# C^4 blend on [1, 2] joining rho^2 to 0; positive on (1, 2).
# Kept factored as (2 - rho)^5 g(rho): the expanded form cancels badly near 2.
_BLEND_G = Polynomial([105, -455, 746, -550, 155])


def _blend_deriv(x: np.ndarray, j: int) -> np.ndarray:
    out = np.zeros_like(x)
    for i in range(min(j, 5) + 1):
        fall = math.factorial(5) // math.factorial(5 - i)
        out += math.comb(j, i) * (-1) ** i * fall * (2 - x) ** (5 - i) * _BLEND_G.deriv(j - i)(x)
    return out


def _blend_derivs(rho: np.ndarray) -> tuple:
    """phi, phi', phi'', Laplacian phi, bi-Laplacian phi, phi'/rho at rho."""
    rho = np.asarray(rho, dtype=float)
    inner = rho <= 1
    mid = (rho > 1) & (rho < 2)
    out = [np.zeros_like(rho) for _ in range(6)]
    out[0][inner] = rho[inner] ** 2
    out[1][inner] = 2 * rho[inner]
    out[2][inner] = 2
    out[3][inner] = 6
    out[5][inner] = 2
    x = rho[mid]
    d = [_blend_deriv(x, j) for j in range(5)]
    out[0][mid], out[1][mid], out[2][mid] = d[0], d[1], d[2]
    out[3][mid] = d[2] + 2 * d[1] / x
    # radial bi-Laplacian: phi'''' + 4 phi'''/rho
    out[4][mid] = d[4] + 4 * d[3] / x
    out[5][mid] = d[1] / x
    return tuple(out)


@dataclass(frozen=True, eq=False)
class VirialWeight:
    """phi(x/R) with phi = |x|^2 on the unit ball and 0 outside radius 2."""

    R: float
    grid: RadialGrid

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if 2 * self.R >= self.grid.r_max:
            raise WeightOverflowsGrid(f"2R = {2 * self.R} does not fit in r_max = {self.grid.r_max}")

    @cached_property
    def _samples(self):
        return _blend_derivs(self.grid.r / self.R)

    phi = property(lambda self: self._samples[0])
    dphi = property(lambda self: self._samples[1])
    d2phi = property(lambda self: self._samples[2])
    lap_phi = property(lambda self: self._samples[3])
    bilap_phi = property(lambda self: self._samples[4])
    dphi_over_rho = property(lambda self: self._samples[5])


def _profile_sup(fn, lo: float = 1.0, hi: float = 2.0, num: int = 20001) -> float:
    rho = np.linspace(lo, hi, num)
    return float(np.max(np.abs(fn(_blend_derivs(rho)))))


def remainder_constant(b) -> float:
    """Constant c with |z''_R - (8 G - 2(3+b) P)| <= c * tail_sum.

    Read off the sup norms of the weight's derivative profiles on 1 <= rho <= 2
    (outside that annulus the remainder integrand vanishes or is constant).
    """
    b = float(as_params(b).b)
    c_grad = 4 * _profile_sup(lambda d: d[2] - 2)
    c_mass = _profile_sup(lambda d: d[4])
    c_quartic = _profile_sup(lambda d: d[3] - 6) + b * _profile_sup(lambda d: d[5] - 2)
    # for rho >= 2 the quartic coefficient is 6 + 2b and the gradient one 8
    c_quartic = max(c_quartic, 6 + 2 * b)
    c_grad = max(c_grad, 8.0)
    return max(c_grad, c_mass, c_quartic)


def _weight(field: ComplexRadialField, weight) -> VirialWeight:
    if isinstance(weight, VirialWeight):
        if weight.grid.r_max != field.grid.r_max or weight.grid.n != field.grid.n:
            raise ValueError("weight sampled on a different grid")
        return weight
    return VirialWeight(float(weight), field.grid)


def virial_z(field: ComplexRadialField, weight) -> float:
    """z_R = int R^2 phi(x/R) |u|^2 dx."""
    wt = _weight(field, weight)
    return integrate(field.grid, wt.R**2 * wt.phi * np.abs(field.u) ** 2)


def virial_z_prime(field: ComplexRadialField, weight) -> float:
    """z'_R = 2R Im int phi'(r/R) u_r conj(u) dx."""
    wt = _weight(field, weight)
    ur = radial_derivative(field)
    return 2 * wt.R * integrate(field.grid, wt.dphi * (ur * np.conj(field.u)).imag)


def virial_terms(field: ComplexRadialField, weight, params=None, nonlinear: bool = True) -> dict:
    """The four terms of the localized second-derivative identity."""
    wt = _weight(field, weight)
    grid = field.grid
    b = float(as_params(params if params is not None else grid.b).b)
    u2 = np.abs(field.u) ** 2
    ur2 = np.abs(radial_derivative(field)) ** 2
    terms = {
        "hessian": 4 * integrate(grid, wt.d2phi * ur2),
        "bilaplacian": -integrate(grid, wt.bilap_phi * u2) / wt.R**2,
        "laplacian": 0.0,
        "weight_gradient": 0.0,
    }
    if nonlinear:
        u0_4 = abs(origin_value(field)) ** 4
        # lap phi -> 6 and phi'/rho -> 2 at the origin
        terms["laplacian"] = -integrate_cusp(grid, u2**2 * wt.lap_phi, b, 6 * u0_4)
        # R grad(|x|^-b) . grad phi(x/R) = -b r^-b phi'(rho)/rho
        terms["weight_gradient"] = -b * integrate_cusp(grid, u2**2 * wt.dphi_over_rho, b, 2 * u0_4)
    return terms


def virial_z_doubleprime(field: ComplexRadialField, weight, params=None, nonlinear: bool = True) -> float:
    return float(sum(virial_terms(field, weight, params, nonlinear).values()))


def untruncated_virial(field: ComplexRadialField, params=None, nonlinear: bool = True) -> float:
    """8 ||grad u||^2 - 2(3+b) || |x|^-b |u|^4 ||_1."""
    b = float(as_params(params if params is not None else field.grid.b).b)
    g = grad_sq(field)
    return 8 * g - (2 * (3 + b) * potential(field, b) if nonlinear else 0.0)


def tail_sum(field: ComplexRadialField, R: float, b=None) -> float:
    """int_{|x|>R} |grad u|^2 + R^-2 |u|^2 + R^-b |u|^4 dx."""
    grid = field.grid
    b = float(grid.b if b is None else b)
    outside = grid.r > R
    u2 = np.abs(field.u) ** 2
    ur2 = np.abs(radial_derivative(field)) ** 2
    dens = ur2 + u2 / R**2 + R ** (-b) * u2**2
    return integrate(grid, np.where(outside, dens, 0.0))


def gradient_tail(field: ComplexRadialField, R: float) -> float:
    """int_{|x|>R} |grad u|^2 dx with the spectral radial derivative."""
    grid = field.grid
    if R >= grid.r_max:
        raise ValueError("R must be below r_max")
    ur2 = np.abs(radial_derivative(field)) ** 2
    return integrate(grid, np.where(grid.r > R, ur2, 0.0))


@dataclass(frozen=True)
class VirialConsistency:
    R: float
    times: np.ndarray
    z: np.ndarray
    z_fd: np.ndarray  # 4th-order finite-difference d^2 z/dt^2 (nan at the ends)
    z_formula: np.ndarray
    z_untruncated: np.ndarray
    max_residual: float

    def rows(self):
        return zip(self.times, self.z, self.z_fd, self.z_formula, self.z_untruncated)


def virial_consistency(trace, R: float, fd_agreement: float = 0.1) -> VirialConsistency:
    """Finite-difference d^2 z_R/dt^2 along the trace against the identity.

    Raises StrideTooCoarse when fewer than five equally spaced snapshots are
    available or when 2nd- and 4th-order differences disagree by more than
    ``fd_agreement`` relative to max |z''|.
    """
    t = np.asarray(trace.snapshot_times)
    if t.size >= 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=1e-12):
        # final snapshot may be off-stride after an early stop
        t = t[:-1]
    if t.size < 5:
        raise StrideTooCoarse("need at least five equally spaced snapshots")
    h = t[1] - t[0]
    weight = VirialWeight(R, trace.grid)
    nonlinear = trace.config.nonlinear
    fields = [trace.snapshot(i) for i in range(t.size)]
    z = np.array([virial_z(f, weight) for f in fields])
    zpp = np.array([virial_z_doubleprime(f, weight, trace.params, nonlinear) for f in fields])
    zfull = np.array([untruncated_virial(f, trace.params, nonlinear) for f in fields])
    fd4 = np.full_like(z, np.nan)
    fd4[2:-2] = (-z[:-4] + 16 * z[1:-3] - 30 * z[2:-2] + 16 * z[3:-1] - z[4:]) / (12 * h**2)
    fd2 = (z[1:-3] - 2 * z[2:-2] + z[3:-1]) / h**2
    scale = np.max(np.abs(zpp))
    if scale > 0 and np.max(np.abs(fd2 - fd4[2:-2])) > fd_agreement * scale:
        raise StrideTooCoarse("finite differences unresolved at this snapshot stride")
    resid = np.max(np.abs(fd4[2:-2] - zpp[2:-2])) / scale if scale > 0 else 0.0
    return VirialConsistency(R, t, z, fd4, zpp, zfull, float(resid))


@dataclass(frozen=True)
class RemainderCheck:
    times: np.ndarray
    remainder: np.ndarray
    tail: np.ndarray
    lower_bound_slack: np.ndarray  # z''_R - (16(1-w)E - c tail)
    constant: float


def remainder_check(trace, R: float, profile) -> RemainderCheck:
    """Remainder of the localized identity against c * tail_sum per snapshot."""
    params = trace.params
    weight = VirialWeight(R, trace.grid)
    c = remainder_constant(params)
    rem, tails, slack = [], [], []
    for f in trace.fields():
        zpp = virial_z_doubleprime(f, weight, params)
        rep = report(f, params)
        full = 8 * rep.grad_sq - 2 * (3 + params.b_float) * rep.potential
        tl = tail_sum(f, R, params.b)
        w = rep.me_product / profile.threshold_me
        rem.append(zpp - full)
        tails.append(tl)
        slack.append(zpp - (16 * (1 - w) * rep.energy - c * tl))
    return RemainderCheck(np.asarray(trace.snapshot_times), np.array(rem), np.array(tails), np.array(slack), c)


# -- Strichartz panel and scattering state -----------------------------------


def lr_norm(field: ComplexRadialField, r: float) -> float:
    return integrate(field.grid, np.abs(field.u) ** r) ** (1 / r)


@dataclass(frozen=True)
class StrichartzSeries:
    times: np.ndarray
    pairs: tuple
    series: tuple  # one cumulative array per pair

    def last_decade_fraction(self) -> list[float]:
        """Share of each total accumulated over t in [0.9 T, T]."""
        t = np.abs(self.times)
        t_end = t[-1]
        fracs = []
        for s in self.series:
            i = int(np.searchsorted(t, 0.9 * t_end))
            before = np.interp(0.9 * t_end, t, s) if i > 0 else 0.0
            fracs.append(float((s[-1] - before) / s[-1]) if s[-1] > 0 else 0.0)
        return fracs

    def rates(self) -> list[np.ndarray]:
        """Per-unit-time increments between consecutive samples."""
        dt = np.diff(np.abs(self.times))
        return [np.diff(s) / dt for s in self.series]


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.abs(np.diff(t)))
    return out


def strichartz_accumulator(trace, pairs: list[ExponentPair] | None = None) -> StrichartzSeries:
    """Cumulative int_0^t ||u(s)||_{L^r}^q ds for each pair.

    Uses per-step L^r monitors when the trace recorded them, snapshots otherwise.
    """
    if pairs is None:
        pairs = strichartz_panel(trace.params)
    qr = [p.as_floats() for p in pairs]
    keys = [lr_monitor_key(r) for _, r in qr]
    if all(k in trace.monitors for k in keys):
        t = np.asarray(trace.times)
        norms = [np.asarray(trace.monitors[k]) for k in keys]
    else:
        t = np.asarray(trace.snapshot_times)
        fields = list(trace.fields())
        norms = [np.array([lr_norm(f, r) for f in fields]) for _, r in qr]
    series = tuple(_cumtrapz(nv**q, t) for nv, (q, _) in zip(norms, qr))
    return StrichartzSeries(t, tuple(pairs), series)


@dataclass(frozen=True, eq=False)
class ScatteringReport:
    phi_plus: ComplexRadialField
    times: np.ndarray
    h1_distance: np.ndarray
    strichartz_partials: StrichartzSeries
    duhamel_tail: float
    phi_norm: float
    u0_norm: float

    def rows(self):
        cols = [self.times, self.h1_distance, *self.strichartz_partials_at_snapshots()]
        return zip(*cols)

    def strichartz_partials_at_snapshots(self) -> list[np.ndarray]:
        sp = self.strichartz_partials
        t = np.abs(self.times)
        return [np.interp(t, np.abs(sp.times), s) for s in sp.series]


def _h1_from_spectrum(grid: RadialGrid, what: np.ndarray) -> float:
    return math.sqrt(4 * math.pi * grid.dr * float(np.sum((1 + grid.k2) * np.abs(what) ** 2)))


def _filon_weights(k2: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights (a, b) with int_0^h e^{i k^2 s} [(1 - s/h) f0 + (s/h) f1] ds = a f0 + b f1."""
    z = 1j * k2 * h
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    e0 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, np.expm1(zs) / zs)
    e1 = np.where(small, 0.5 + z / 3 + z**2 / 8 + z**3 / 30, (np.exp(zs) * (zs - 1) + 1) / zs**2)
    return h * (e0 - e1), h * e1


def scattering_state(
    trace,
    direction: str = "forward",
    tail_tol: float | None = 1e-4,
    pairs: list[ExponentPair] | None = None,
) -> ScatteringReport:
    """phi = u0 + i int_0^T U(-s) (|x|^-b |u|^2 u)(s) ds over the snapshots.

    Trapezoid rule in the nonlinearity with the free phase e^{i k^2 s}
    integrated exactly per sine mode (Filon). Plain trapezoid on the full
    integrand needs k^2 h << 1 for every populated mode, which the r^-b cusp
    at the origin rules out at any practical snapshot spacing.

    ``direction`` must match the trace (forward traces have increasing times,
    backward ones decreasing). Raises NotConverged when the H^1 norm of the
    last quadrature increment exceeds ``tail_tol * ||phi||_{H^1}``.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if trace.termination is not Termination.REACHED_T:
        raise NotConverged(f"trace ended with {trace.termination.value}")
    t = np.asarray(trace.snapshot_times)
    if t.size < 2:
        raise ValueError("need at least two snapshots")
    forward = t[-1] > t[0]
    if forward != (direction == "forward"):
        raise ValueError(f"trace runs {'forward' if forward else 'backward'}, not {direction}")
    grid = trace.grid
    k2 = grid.k2
    nonlinear = trace.config.nonlinear

    def nonlin_hat(i):
        v = trace.snapshots[i]
        return dst(grid.weight * (np.abs(v) ** 2 / grid.r**2) * v)

    u0hat = dst(trace.snapshots[0])
    phi_hat = u0hat.astype(complex)
    last_inc = np.zeros_like(phi_hat)
    if nonlinear:
        n_prev = nonlin_hat(0)
        for i in range(1, t.size):
            n_next = nonlin_hat(i)
            a, b = _filon_weights(k2, t[i] - t[i - 1])
            last_inc = 1j * np.exp(1j * k2 * t[i - 1]) * (a * n_prev + b * n_next)
            phi_hat = phi_hat + last_inc
            n_prev = n_next
    tail = _h1_from_spectrum(grid, last_inc)
    phi_norm = _h1_from_spectrum(grid, phi_hat)
    dist = np.empty(t.size)
    for i in range(t.size):
        diff = dst(trace.snapshots[i]) - np.exp(-1j * k2 * t[i]) * phi_hat
        dist[i] = _h1_from_spectrum(grid, diff)
    if tail_tol is not None and tail > tail_tol * phi_norm:
        raise NotConverged(f"Duhamel tail {tail:.3g} exceeds {tail_tol:g} of ||phi||_H1 = {phi_norm:.3g}")
    return ScatteringReport(
        phi_plus=ComplexRadialField(grid, dst(phi_hat)),
        times=t,
        h1_distance=dist,
        strichartz_partials=strichartz_accumulator(trace, pairs),
        duhamel_tail=tail,
        phi_norm=phi_norm,
        u0_norm=_h1_from_spectrum(grid, u0hat),
    )


def lemma_chain_slack(trace, profile) -> np.ndarray:
    """Minimum coercivity slack over snapshots, relative to 8 ||grad u||^2."""
    out = []
    for f in trace.fields():
        rep = coercivity_check(f, profile)
        g = grad_sq(f)
        out.append(min(rep.virial_slack, rep.virial_chain_slack) / (8 * g) if g > 0 else 0.0)
    return np.array(out)
