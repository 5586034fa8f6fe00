from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from inlslab.diagnostics import (
    VirialWeight,
    _blend_derivs,
    _filon_weights,
    gradient_tail,
    lemma_chain_slack,
    remainder_check,
    remainder_constant,
    scattering_state,
    strichartz_accumulator,
    tail_sum,
    untruncated_virial,
    virial_consistency,
    virial_terms,
    virial_z,
    virial_z_doubleprime,
    virial_z_prime,
)
from inlslab.dynamics import EvolveConfig, Termination, evolve
from inlslab.errors import NotConverged, StrideTooCoarse, WeightOverflowsGrid
from inlslab.exponents import ExponentPair, PairClass
from inlslab.invariants import gaussian, grad_sq, report, rescale
from inlslab.radial import ComplexRadialField, RadialGrid, free_propagate

QUARTER = Fraction(1, 4)


@pytest.fixture(scope="module")
def grid():
    return RadialGrid(16.0, 1023, QUARTER)


@pytest.fixture(scope="module")
def short_run(grid):
    return evolve(gaussian(grid, 1.0), 0.5, 1e-3, QUARTER, EvolveConfig(snap_stride=10))


@pytest.fixture(scope="module")
def linear_run(grid):
    return evolve(gaussian(grid, 1.0), 0.5, 1e-3, QUARTER, EvolveConfig(snap_stride=10, nonlinear=False))


# -- weight ------------------------------------------------------------------


def test_weight_joins_smoothly():
    # C^4 but not C^5: the fifth derivative is about 4e4 on the joins
    eps = 1e-9
    inner = [d[0] for d in _blend_derivs(np.array([1 - eps]))]
    outer = [d[0] for d in _blend_derivs(np.array([1 + eps]))]
    np.testing.assert_allclose(outer, inner, atol=1e-4)
    at_two = [d[0] for d in _blend_derivs(np.array([2 - eps]))]
    np.testing.assert_allclose(at_two, 0, atol=1e-4)


def test_weight_profile_shape():
    rho = np.linspace(0.01, 3, 3001)
    phi, dphi, d2phi, lap, bilap, dor = _blend_derivs(rho)
    assert np.all(phi >= 0) and np.all(phi[rho < 1.99] > 0)
    assert np.all(phi[rho >= 2] == 0) and np.all(bilap[rho <= 1] == 0)
    np.testing.assert_allclose(lap, d2phi + 2 * dphi / rho, atol=1e-12)
    np.testing.assert_allclose(dor, dphi / rho, atol=1e-12)
    # derivative columns are consistent with finite differences of phi
    h = rho[1] - rho[0]
    np.testing.assert_allclose(np.gradient(phi, h)[1:-1], dphi[1:-1], atol=1e-3)


def test_weight_overflow(grid):
    with pytest.raises(WeightOverflowsGrid):
        VirialWeight(8.0, grid)
    with pytest.raises(ValueError):
        VirialWeight(0.0, grid)
    VirialWeight(7.9, grid)


def test_remainder_constant_value():
    # regression value of the frozen construction
    assert remainder_constant(QUARTER) == pytest.approx(1543.4144059280914, rel=1e-9)
    assert remainder_constant(0) >= 8


# -- z, z', z'' ----------------------------------------------------------------


def test_virial_z_large_r_is_variance(grid):
    f = gaussian(grid, 1.0)
    ref = 4 * np.pi * quad(lambda r: r**4 * np.exp(-2 * r**2), 0, np.inf, epsrel=1e-13)[0]
    assert virial_z(f, 7.0) == pytest.approx(ref, rel=1e-10)


def test_virial_z_truncated_against_quad(grid):
    f = gaussian(grid, 1.0)
    R = 1.0

    def integrand(r):
        return R**2 * _blend_derivs(np.array([r / R]))[0][0] * np.exp(-2 * r**2) * 4 * np.pi * r**2

    ref = quad(integrand, 0, 1, epsrel=1e-13)[0] + quad(integrand, 1, 2, epsrel=1e-13)[0]
    assert virial_z(f, R) == pytest.approx(ref, rel=1e-9)


def test_virial_z_prime(grid):
    assert virial_z_prime(gaussian(grid, 1.0), 5.0) == pytest.approx(0, abs=1e-14)
    chirp = ComplexRadialField.from_function(grid, lambda r: np.exp(-(r**2) + 1j * r**2))
    ref = 8 * 4 * np.pi * quad(lambda r: r**4 * np.exp(-2 * r**2), 0, np.inf, epsrel=1e-13)[0]
    assert virial_z_prime(chirp, 5.0) == pytest.approx(ref, rel=1e-9)


def test_virial_z_prime_matches_free_flow_derivative(grid):
    f = gaussian(grid, 1.0)
    t, h = 0.1, 1e-4
    zp = virial_z_prime(free_propagate(f, t), 3.0)
    fd = (virial_z(free_propagate(f, t + h), 3.0) - virial_z(free_propagate(f, t - h), 3.0)) / (2 * h)
    assert zp == pytest.approx(fd, abs=1e-4)


def test_doubleprime_large_r_is_untruncated(grid):
    for amp in (0.5, 2.0, 3.6):
        f = gaussian(grid, amp)
        full = untruncated_virial(f)
        assert virial_z_doubleprime(f, 7.5) == pytest.approx(full, abs=1e-6 * 8 * grad_sq(f))


def test_doubleprime_zero_field(grid):
    z = ComplexRadialField.zeros(grid)
    assert virial_z_doubleprime(z, 2.0) == 0.0
    assert set(virial_terms(z, 2.0)) == {"hessian", "bilaplacian", "laplacian", "weight_gradient"}


def test_doubleprime_vanishes_at_ground_state(profile_quarter):
    q = profile_quarter.field
    scale = 8 * profile_quarter.grad_q_sq
    assert abs(virial_z_doubleprime(q, 15.0)) < 1e-5 * scale
    assert abs(untruncated_virial(q)) < 1e-5 * scale


def test_blowup_datum_has_negative_virial(grid):
    assert untruncated_virial(gaussian(grid, 3.6)) < 0
    assert virial_z_doubleprime(gaussian(grid, 3.6), 5.0) < 0


def test_linear_virial_is_eight_gradient(grid):
    f = gaussian(grid, 1.0)
    assert virial_z_doubleprime(f, 7.5, nonlinear=False) == pytest.approx(8 * grad_sq(f), rel=1e-10)


# -- consistency along traces --------------------------------------------------


def test_virial_consistency_nonlinear(short_run):
    vc = virial_consistency(short_run, 4.0)
    assert vc.max_residual < 1e-3
    assert vc.times.size == 51
    assert np.isnan(vc.z_fd[0]) and np.isnan(vc.z_fd[-1])
    assert len(list(vc.rows())) == 51


def test_virial_consistency_linear(linear_run, grid):
    vc = virial_consistency(linear_run, 7.5)
    g0 = grad_sq(gaussian(grid, 1.0))
    assert np.max(np.abs(vc.z_fd[2:-2] - 8 * g0)) < 1e-4 * 8 * g0
    assert vc.max_residual < 1e-4


def test_stride_too_coarse(grid):
    few = evolve(gaussian(grid, 1.0), 0.02, 1e-3, QUARTER, EvolveConfig(snap_stride=10))
    with pytest.raises(StrideTooCoarse):
        virial_consistency(few, 4.0)
    # a narrow sub-threshold datum evolves on a 1/16 time scale
    coarse = evolve(rescale(gaussian(grid, 2.2), 4.0), 1.0, 1e-3, QUARTER, EvolveConfig(snap_stride=200))
    assert coarse.termination is Termination.REACHED_T
    with pytest.raises(StrideTooCoarse):
        virial_consistency(coarse, 4.0)


def test_remainder_bounded_by_tail(short_run, profile_quarter):
    out = remainder_check(short_run, 2.0, profile_quarter)
    assert np.all(np.abs(out.remainder) <= out.constant * out.tail + 1e-12)
    assert np.all(out.tail > 0)


def test_lemma_chain_slack_nonnegative(short_run, profile_quarter):
    assert np.all(lemma_chain_slack(short_run, profile_quarter) > 0)


@settings(max_examples=20, deadline=None)
@given(amp=st.floats(0.1, 3.0), width=st.floats(0.5, 2.0), R=st.floats(0.5, 7.0))
def test_remainder_bound_random(amp, width, R):
    g = RadialGrid(16.0, 1023, QUARTER)
    f = gaussian(g, amp, width)
    rem = virial_z_doubleprime(f, R) - untruncated_virial(f)
    assert abs(rem) <= remainder_constant(QUARTER) * tail_sum(f, R) + 1e-10 * grad_sq(f)


# -- tails -----------------------------------------------------------------------


def test_gradient_tail(grid):
    f = gaussian(grid, 1.0)
    assert gradient_tail(f, 0.0) == pytest.approx(grad_sq(f), rel=1e-12)
    assert gradient_tail(f, 12.0) < 1e-10
    tails = [gradient_tail(f, R) for R in np.linspace(0, 10, 21)]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    with pytest.raises(ValueError):
        gradient_tail(f, 16.0)


# -- Strichartz and scattering ---------------------------------------------------


def test_filon_weights():
    h = 0.05
    a, b = _filon_weights(np.array([0.0]), h)
    assert a[0] == pytest.approx(h / 2) and b[0] == pytest.approx(h / 2)
    for k2 in (1e-3, 0.5, 30.0, 4000.0):
        re_a = quad(lambda s: np.cos(k2 * s) * (1 - s / h), 0, h, limit=400)[0]
        im_a = quad(lambda s: np.sin(k2 * s) * (1 - s / h), 0, h, limit=400)[0]
        re_b = quad(lambda s: np.cos(k2 * s) * s / h, 0, h, limit=400)[0]
        im_b = quad(lambda s: np.sin(k2 * s) * s / h, 0, h, limit=400)[0]
        wa, wb = _filon_weights(np.array([k2]), h)
        assert wa[0] == pytest.approx(re_a + 1j * im_a, rel=1e-9, abs=1e-15)
        assert wb[0] == pytest.approx(re_b + 1j * im_b, rel=1e-9, abs=1e-15)


def test_strichartz_zero_and_monotone(grid, short_run):
    zero = evolve(ComplexRadialField.zeros(grid), 0.1, 1e-3, QUARTER)
    s0 = strichartz_accumulator(zero)
    assert all(np.all(s == 0) for s in s0.series)
    assert s0.last_decade_fraction() == [0.0, 0.0, 0.0]
    s = strichartz_accumulator(short_run)
    assert len(s.series) == 3
    assert all(np.all(np.diff(x) >= 0) for x in s.series)
    assert all(np.all(r >= 0) for r in s.rates())


def test_strichartz_uses_step_monitors(grid):
    pair = ExponentPair(Fraction(8, 3), Fraction(4), PairClass.L2)
    cfg = EvolveConfig(snap_stride=50, lr_exponents=(4.0,))
    tr = evolve(gaussian(grid, 0.5), 0.2, 1e-3, QUARTER, cfg)
    fine = strichartz_accumulator(tr, [pair])
    assert fine.times.size == tr.times.size
    coarse = strichartz_accumulator(evolve(gaussian(grid, 0.5), 0.2, 1e-3, QUARTER, EvolveConfig(snap_stride=50)), [pair])
    assert coarse.times.size == 5
    assert fine.series[0][-1] == pytest.approx(coarse.series[0][-1], rel=1e-2)


def test_scattering_zero_data(grid):
    tr = evolve(ComplexRadialField.zeros(grid), 0.1, 1e-3, QUARTER, EvolveConfig(snap_stride=10))
    rep = scattering_state(tr)
    assert np.all(rep.phi_plus.v == 0) and np.all(rep.h1_distance == 0)


def test_scattering_linear_is_identity(linear_run):
    rep = scattering_state(linear_run)
    u0 = linear_run.snapshot(0)
    assert np.max(np.abs(rep.phi_plus.v - u0.v)) <= 1e-10 * np.max(np.abs(u0.v))
    assert np.max(rep.h1_distance) <= 1e-10 * rep.u0_norm


def test_scattering_nonlinear_distance_shrinks(dyn_grid):
    tr = evolve(gaussian(dyn_grid, 1.0), 5.0, 1e-3, QUARTER, EvolveConfig(snap_stride=10))
    rep = scattering_state(tr, tail_tol=None)
    assert rep.h1_distance[-1] < 0.01 * rep.u0_norm
    assert rep.h1_distance[-1] < rep.h1_distance[0]
    assert rep.duhamel_tail < 1e-3 * rep.phi_norm
    assert len(list(rep.rows())) == tr.snapshot_times.size


def test_scattering_backward(grid):
    tr = evolve(gaussian(grid, 0.5), 0.3, 1e-3, QUARTER, EvolveConfig(snap_stride=10), backward=True)
    rep = scattering_state(tr, direction="backward", tail_tol=None)
    assert rep.h1_distance[-1] < 1e-3 * rep.u0_norm
    with pytest.raises(ValueError):
        scattering_state(tr, direction="forward")


def test_scattering_refuses(grid, short_run):
    with pytest.raises(ValueError):
        scattering_state(short_run, direction="sideways")
    with pytest.raises(NotConverged):
        scattering_state(short_run, tail_tol=1e-12)
    blow = evolve(gaussian(grid, 3.6), 1.0, 1e-3, QUARTER)
    assert blow.termination is Termination.BLOWUP_DETECTED
    with pytest.raises(NotConverged):
        scattering_state(blow)


def test_report_energy_matches_virial_split(grid):
    # 8G - 2(3+b)P written through the energy: 16E - (2(3+b) - 4) P
    f = gaussian(grid, 1.7)
    rep = report(f)
    assert untruncated_virial(f) == pytest.approx(16 * rep.energy - (2 * 3.25 - 4) * rep.potential, rel=1e-12)
