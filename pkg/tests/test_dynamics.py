from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from inlslab.dynamics import MONITOR_COLUMNS, EvolveConfig, Termination, evolve, lr_monitor_key, step
from inlslab.invariants import gaussian, mass, report
from inlslab.radial import ComplexRadialField, RadialGrid, dst, free_propagate, integrate
from inlslab.traceio import load_trace, save_trace

QUARTER = Fraction(1, 4)


def test_step_zero_amplitude_is_free_flow(small_grid):
    f = ComplexRadialField.zeros(small_grid)
    np.testing.assert_array_equal(step(f, 0.01).v, free_propagate(f, 0.01).v)
    # a tiny field is still a free flow up to the cubic phase
    g = gaussian(small_grid, 1e-8)
    np.testing.assert_allclose(step(g, 0.01).v, free_propagate(g, 0.01).v, atol=1e-20)


def test_step_conserves_mass(small_grid):
    f = gaussian(small_grid, 2.0)
    assert mass(step(f, 1e-2)) == pytest.approx(mass(f), rel=1e-12)


def test_step_order_against_reference():
    g = RadialGrid(10.0, 63, QUARTER)
    f = ComplexRadialField(g, 0.3 * np.sin(np.pi * g.r / g.r_max))

    def rhs(t, y):
        vh = y[: g.n] + 1j * y[g.n :]
        v = dst(vh)
        d = -1j * g.k2 * vh + 1j * dst(g.weight * np.abs(v) ** 2 / g.r**2 * v)
        return np.concatenate([d.real, d.imag])

    dts = np.array([1e-2, 1e-3, 1e-4])
    errs = []
    for dt in dts:
        vh0 = dst(f.v)
        sol = solve_ivp(rhs, (0, dt), np.concatenate([vh0.real, vh0.imag]), method="DOP853", rtol=1e-13, atol=1e-16)
        ref = dst(sol.y[: g.n, -1] + 1j * sol.y[g.n :, -1])
        errs.append(np.max(np.abs(step(f, dt).v - ref)))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert order >= 2.9


def test_config_validation(small_grid):
    f = gaussian(small_grid, 0.1)
    with pytest.raises(ValueError):
        evolve(f, 1.0, -1e-3)
    with pytest.raises(ValueError):
        evolve(f, 1.0, 0.3)
    with pytest.raises(ValueError):
        EvolveConfig(snap_stride=0)
    with pytest.raises(ValueError):
        EvolveConfig(boundary_limit=2.0)


def test_linear_run_is_free_propagation(dyn_grid):
    f = gaussian(dyn_grid, 0.8)
    tr = evolve(f, 1.0, 1e-3, QUARTER, EvolveConfig(nonlinear=False))
    ref = free_propagate(f, 1.0)
    assert np.max(np.abs(tr.snapshots[-1] - ref.v)) <= 1e-12 * np.max(np.abs(ref.v))
    assert tr.termination is Termination.REACHED_T


def test_trace_layout(small_grid):
    tr = evolve(gaussian(small_grid, 0.5), 0.5, 1e-3, QUARTER, EvolveConfig(snap_stride=100))
    assert tr.times.size == 501
    assert np.all(np.diff(tr.times) > 0)
    assert np.allclose(np.diff(tr.times), 1e-3)
    assert all(tr.monitors[c].size == tr.times.size for c in MONITOR_COLUMNS[1:])
    np.testing.assert_allclose(tr.snapshot_times, [0, 0.1, 0.2, 0.3, 0.4, 0.5], atol=1e-12)
    assert len(list(tr.monitor_rows())) == tr.times.size


def test_time_reversal(dyn_grid):
    f = gaussian(dyn_grid, 1.0)
    fwd = evolve(f, 1.0, 1e-3, QUARTER)
    back = evolve(fwd.snapshot(-1), 1.0, 1e-3, QUARTER, backward=True)
    assert back.times[-1] == pytest.approx(-1.0)
    err = np.max(np.abs(back.snapshots[-1] - f.v)) / np.max(np.abs(f.v))
    assert err < 1e-6


def test_sub_threshold_trapping(dyn_grid, profile_quarter):
    tr = evolve(gaussian(dyn_grid, 2.0), 2.0, 1e-3, QUARTER)
    assert tr.termination is Termination.REACHED_T
    assert np.all(tr.monitors["grad_product"] < profile_quarter.threshold_grad)
    m = tr.monitors["mass"]
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-10


def test_blowup_candidate_detected(dyn_grid):
    tr = evolve(gaussian(dyn_grid, 3.6), 1.0, 1e-3, QUARTER)
    assert tr.termination is Termination.BLOWUP_DETECTED
    assert tr.blowup_reason in ("gradient", "resolution")
    assert tr.t_final < 1.0
    g = tr.monitors["grad_sq"]
    assert np.all(np.diff(g[-51:]) > 0)
    assert tr.snapshot_times[-1] == pytest.approx(tr.t_final)
    # the guard that fired is exceeded at the final step
    if tr.blowup_reason == "resolution":
        assert tr.monitors["sup_u"][-1] > 0.1 * np.pi / (2 * dyn_grid.dr)


def test_gradient_guard(dyn_grid):
    tr = evolve(gaussian(dyn_grid, 3.6), 1.0, 1e-3, QUARTER, EvolveConfig(blowup_factor=1.2, sup_limit=1e9))
    assert tr.termination is Termination.BLOWUP_DETECTED
    assert tr.blowup_reason == "gradient"


def test_boundary_contamination():
    g = RadialGrid(12.0, 1023, QUARTER)
    tr = evolve(gaussian(g, 0.1), 4.0, 1e-3, QUARTER, EvolveConfig(boundary_limit=1e-3))
    assert tr.termination is Termination.BOUNDARY_CONTAMINATED
    assert tr.monitors["boundary_frac"][-1] > 1e-3


def test_energy_drift_second_order(dyn_grid):
    drifts = []
    for dt in (2e-3, 1e-3):
        tr = evolve(gaussian(dyn_grid, 0.1), 2.0, dt, QUARTER)
        e = tr.monitors["energy"]
        drifts.append(np.max(np.abs(e - e[0])) / abs(e[0]))
    assert drifts[1] < 1e-6
    assert 3.5 <= drifts[0] / drifts[1] <= 4.5


def test_lr_monitors_match_snapshots(small_grid):
    cfg = EvolveConfig(snap_stride=50, lr_exponents=(3.0, 4.5))
    tr = evolve(gaussian(small_grid, 1.0), 0.2, 1e-3, QUARTER, cfg)
    for q in (3.0, 4.5):
        series = tr.monitors[lr_monitor_key(q)]
        for t, f in zip(tr.snapshot_times, tr.fields()):
            i = int(round(t / 1e-3))
            direct = integrate(small_grid, np.abs(f.u) ** q) ** (1 / q)
            assert series[i] == pytest.approx(direct, rel=1e-12)


def test_monitors_match_report(small_grid):
    tr = evolve(gaussian(small_grid, 1.5), 0.1, 1e-3, QUARTER, EvolveConfig(snap_stride=50))
    f = tr.snapshot(-1)
    rep = report(f, QUARTER)
    assert tr.monitors["grad_product"][-1] == pytest.approx(rep.grad_product, rel=1e-12)
    # monitors keep the uncorrected node sum, the discrete Hamiltonian's potential
    raw = integrate(small_grid, small_grid.weight * np.abs(f.u) ** 4)
    assert tr.monitors["potential"][-1] == pytest.approx(raw, rel=1e-12)
    assert tr.monitors["energy"][-1] == pytest.approx(rep.energy, rel=1e-4)


def test_trace_round_trip(tmp_path, small_grid):
    cfg = EvolveConfig(snap_stride=20, lr_exponents=(4.0,))
    tr = evolve(gaussian(small_grid, 1.0), 0.1, 1e-3, QUARTER, cfg)
    written = save_trace(tr, tmp_path / "tr")
    assert "monitors.csv" in written and "snapshots.json" in written
    header = (tmp_path / "tr" / "monitors.csv").read_text().splitlines()[0]
    assert header == ",".join(MONITOR_COLUMNS)
    back = load_trace(tmp_path / "tr")
    assert back.params == tr.params and back.grid == tr.grid
    assert back.termination is tr.termination
    np.testing.assert_array_equal(back.times, tr.times)
    for key in tr.monitors:
        np.testing.assert_array_equal(back.monitors[key], tr.monitors[key])
    np.testing.assert_array_equal(back.snapshot_times, tr.snapshot_times)
    for a, b in zip(back.snapshots, tr.snapshots):
        np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-300)


def test_load_trace_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_trace(tmp_path)
