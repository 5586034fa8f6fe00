"""Strang split-step evolution of i u_t + Laplacian u + |x|^-b |u|^2 u = 0.

Sign convention, used by every module: i u_t = -Laplacian u - |x|^-b |u|^2 u,
so the free flow multiplies sine mode m by exp(-i k_m^2 t) and the nonlinear
substep multiplies u_j by exp(+i r_j^-b |u_j|^2 t).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .exponents import InlsParams, as_params
from .radial import ComplexRadialField, RadialGrid, dst

log = logging.getLogger(__name__)

DYNAMICS_GRID = (64.0, 8191)
MONITOR_COLUMNS = ("t", "mass", "energy", "grad_sq", "potential", "grad_product", "sup_u", "boundary_frac")


def lr_monitor_key(r: float) -> str:
    return f"lr:{float(r)!r}"


class Termination(str, enum.Enum):
    REACHED_T = "ReachedT"
    BLOWUP_DETECTED = "BlowupDetected"
    BOUNDARY_CONTAMINATED = "BoundaryContaminated"


@dataclass(frozen=True)
class EvolveConfig:
    """Run controls.

    blowup_factor: stop once ||grad u|| exceeds this multiple of the gradient
        norm a field of the same mass has at the threshold.
    sup_limit: stop once max|u| exceeds this; None means 0.1 * pi/(2 dr).
    boundary_limit: stop once the outer 10% of the grid holds more than this
        share of the mass; None disables the check.
    threshold_grad: ||grad Q||^s ||Q||^(1-s); None looks it up from the cached
        ground state at the run's b.
    lr_exponents: Lebesgue exponents r whose ||u||_{L^r} is recorded every
        step (feeds the Strichartz accumulator at full time resolution).
    """

    snap_stride: int = 100
    blowup_factor: float = 20.0
    sup_limit: float | None = None
    boundary_limit: float | None = None
    threshold_grad: float | None = None
    nonlinear: bool = True
    lr_exponents: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lr_exponents", tuple(float(r) for r in self.lr_exponents))
        if any(not r >= 1 for r in self.lr_exponents):
            raise ValueError("lr_exponents must be >= 1")
        if self.snap_stride < 1:
            raise ValueError("snap_stride must be >= 1")
        if not self.blowup_factor > 0:
            raise ValueError("blowup_factor must be positive")
        if self.boundary_limit is not None and not 0 < self.boundary_limit <= 1:
            raise ValueError("boundary_limit must be in (0, 1]")


@dataclass(eq=False)
class EvolutionTrace:
    params: InlsParams
    grid: RadialGrid
    dt: float
    times: np.ndarray
    monitors: dict
    snapshot_times: np.ndarray
    snapshots: list
    termination: Termination
    config: EvolveConfig = dc_field(default_factory=EvolveConfig)
    blowup_reason: str | None = None

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def snapshot(self, i: int) -> ComplexRadialField:
        return ComplexRadialField(self.grid, self.snapshots[i])

    def fields(self):
        for v in self.snapshots:
            yield ComplexRadialField(self.grid, v)

    def monitor_rows(self):
        cols = [self.times] + [self.monitors[c] for c in MONITOR_COLUMNS[1:]]
        return zip(*cols)

    def metadata(self) -> dict:
        return {
            "b": str(self.params),
            "r_max": self.grid.r_max,
            "n": self.grid.n,
            "dt": self.dt,
            "t_final": self.t_final,
            "steps": int(self.times.size - 1),
            "termination": self.termination.value,
            "blowup_reason": self.blowup_reason,
            "config": asdict(self.config),
        }


def nonlinear_phase(v: np.ndarray, grid: RadialGrid, dt: float) -> np.ndarray:
    """Exact flow of i u_t + |x|^-b |u|^2 u = 0 over dt (|u| is conserved)."""
    u2 = (v.real**2 + v.imag**2) / grid.r**2
    return v * np.exp(1j * dt * grid.weight * u2)


def step(field: ComplexRadialField, dt: float, params=None, nonlinear: bool = True) -> ComplexRadialField:
    """One Strang step: half free flow, nonlinear phase, half free flow."""
    grid = field.grid
    if params is not None and as_params(params).b != grid.b:
        grid = grid.with_b(as_params(params).b)
    half = np.exp(-0.5j * dt * grid.k2)
    v = dst(half * dst(field.v))
    if nonlinear:
        v = nonlinear_phase(v, grid, dt)
    return ComplexRadialField(grid, dst(half * dst(v)))


def _threshold_grad(params: InlsParams) -> float:
    from .ground_state import ground_state

    return ground_state(params.b).threshold_grad


def evolve(
    u0: ComplexRadialField,
    T: float,
    dt: float,
    params=None,
    config: EvolveConfig | None = None,
    backward: bool = False,
) -> EvolutionTrace:
    """Iterate :func:`step` up to time T, monitoring every step.

    ``backward=True`` integrates towards -T with step -dt; recorded times are
    then negative and decreasing.
    """
    params = as_params(params if params is not None else u0.grid.b)
    config = config or EvolveConfig()
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    grid = u0.grid if u0.grid.b == params.b else u0.grid.with_b(params.b)
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * T:
        raise ValueError(f"T = {T} is not a whole number of steps of {dt}")
    h = -dt if backward else dt
    s = params.s_c_float
    thr = config.threshold_grad
    if config.nonlinear and thr is None:
        thr = _threshold_grad(params)
    sup_limit = config.sup_limit if config.sup_limit is not None else 0.1 * math.pi / (2 * grid.dr)

    r, w, k2 = grid.r, grid.weight, grid.k2
    c = 4 * math.pi * grid.dr
    half = np.exp(-0.5j * h * k2)
    outer = grid.outer_mask

    mon = {name: np.empty(steps + 1) for name in MONITOR_COLUMNS}
    lr_keys = [(lr_monitor_key(q), q) for q in config.lr_exponents]
    for key, _ in lr_keys:
        mon[key] = np.empty(steps + 1)
    r2 = r**2

    def record(i, v, vhat):
        a2 = v.real**2 + v.imag**2
        m = c * np.sum(a2)
        g = c * np.dot(k2, vhat.real**2 + vhat.imag**2)
        # plain node sum: the Hamiltonian the semi-discrete flow conserves exactly
        p = c * np.dot(w, a2**2 / r**2) if config.nonlinear else 0.0
        mon["t"][i] = i * h
        mon["mass"][i] = m
        mon["grad_sq"][i] = g
        mon["potential"][i] = p
        mon["energy"][i] = g / 2 - p / 4
        mon["grad_product"][i] = g ** (s / 2) * m ** ((1 - s) / 2)
        mon["sup_u"][i] = math.sqrt(np.max(a2 / r**2))
        mon["boundary_frac"][i] = np.sum(a2[outer]) / np.sum(a2) if m > 0 else 0.0
        if lr_keys:
            absu = np.sqrt(a2) / r
            for key, q in lr_keys:
                mon[key][i] = (c * np.dot(absu**q, r2)) ** (1 / q)

    v = u0.v.copy()
    vhat = dst(v)
    record(0, v, vhat)
    snap_t = [0.0]
    snaps = [v.copy()]
    termination = Termination.REACHED_T
    reason = None
    last = steps
    for i in range(1, steps + 1):
        v = dst(half * vhat)
        if config.nonlinear:
            v = nonlinear_phase(v, grid, h)
        vhat = half * dst(v)
        v = dst(vhat)
        record(i, v, vhat)
        if i % config.snap_stride == 0 or i == steps:
            snap_t.append(i * h)
            snaps.append(v.copy())
        if not config.nonlinear:
            continue
        m, g = mon["mass"][i], mon["grad_sq"][i]
        if m > 0:
            # gradient norm at which a field of mass m sits exactly on the threshold
            g_scale = (thr / m ** ((1 - s) / 2)) ** (1 / s)
            if g > (config.blowup_factor * g_scale) ** 2:
                termination, reason = Termination.BLOWUP_DETECTED, "gradient"
        if mon["sup_u"][i] > sup_limit:
            termination, reason = Termination.BLOWUP_DETECTED, "resolution"
        if config.boundary_limit is not None and mon["boundary_frac"][i] > config.boundary_limit:
            termination = Termination.BOUNDARY_CONTAMINATED
        if termination is not Termination.REACHED_T:
            last = i
            if snap_t[-1] != i * h:
                snap_t.append(i * h)
                snaps.append(v.copy())
            break
    mon = {name: arr[: last + 1] for name, arr in mon.items()}
    times = mon.pop("t")
    log.debug("evolve b=%s: %s at t=%g", params, termination.value, times[-1])
    return EvolutionTrace(
        params=params,
        grid=grid,
        dt=h,
        times=times,
        monitors=mon,
        snapshot_times=np.array(snap_t),
        snapshots=snaps,
        termination=termination,
        config=config,
        blowup_reason=reason,
    )
