import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opencarnot import paths as P
from opencarnot.cycles import build_cycle, clausius_sum, run_cycle
from opencarnot.errors import DomainError, RefinementError, StepSizeError
from opencarnot.fluid import SystemState


def ellipse(T=400.0, m=(1.0, 1.0)):
    n = 2 + len(m)
    a = np.zeros((n, 1))
    b = np.zeros((n, 1))
    a[2, 0] = 0.4
    b[0, 0] = 0.25
    return P.FourierLoop((T, 1.0) + tuple(m), a, b, "ellipse")


def test_diathermal_form_pure_directions(roster2, ss):
    st0 = SystemState(400.0, 2.0, (1.0, 0.5))
    Cv = 250.0 + 0.5 * 500.0
    p = (100.0 + 0.5 * 200.0) * 400.0 / 2.0
    assert P.diathermal_heat_form(st0, (1.0, 0, 0, 0), roster2, ss).dQ_dia == pytest.approx(Cv)
    assert P.diathermal_heat_form(st0, (0, 1.0, 0, 0), roster2, ss).dQ_dia == pytest.approx(p)
    q = P.diathermal_heat_form(st0, (0, 0, 0, 1.0), roster2, ss)
    # fixed T, V: energy carried in is u dm, enthalpy in is h dm, so the wall rejects Rs T dm
    assert q.dQ_dia == pytest.approx(-200.0 * 400.0)
    assert q.dQ_inj == pytest.approx((0.0, -200.0 * 400.0))
    assert q.dQ_sys == pytest.approx(0.0, abs=1e-9)


def test_diathermal_form_bad_velocity(roster2, ss):
    with pytest.raises(DomainError):
        P.diathermal_heat_form(SystemState(400.0, 1.0, (1.0, 1.0)), (1.0, 0.0), roster2, ss)


def test_fourier_loop_is_closed_and_positive():
    lp = ellipse()
    x0, dx0 = lp.point(0.0)
    x1, dx1 = lp.point(1.0)
    assert np.allclose(x0, x1) and np.allclose(dx0, dx1)
    assert all(np.all(lp.point(s)[0] > 0) for s in np.linspace(0, 1, 50))


def test_fourier_loop_tangent_matches_difference():
    lp = ellipse()
    s, h = 0.37, 1e-6
    fd = (lp.point(s + h)[0] - lp.point(s - h)[0]) / (2 * h)
    assert np.allclose(lp.point(s)[1], fd, rtol=1e-7, atol=1e-9)


def test_fourier_loop_amplitude_guard():
    with pytest.raises(DomainError):
        P.FourierLoop((400.0, 1.0, 1.0), np.array([[0.6], [0], [0]]),
                      np.array([[0.5], [0], [0]]))


def test_total_entropy_exact_on_random_loops(roster2, ss):
    rng = np.random.default_rng(7)
    for _ in range(3):
        lp = P.random_fourier_loop(rng, SystemState(400.0, 1.0, (1.0, 1.0)))
        F = P.loop_functionals(lp, roster2, ss)
        assert abs(F.I_tot) <= 1e-8 * F.abs_tot
        assert abs(F.decomposition_gap) <= 10 * F.quad_error + 1e-12 * F.abs_tot
        assert abs(F.product_gap) <= 10 * F.quad_error + 1e-12 * F.abs_tot


def test_diathermal_entropy_not_closed_on_ellipse(roster2, ss):
    F = P.loop_functionals(ellipse(), roster2, ss)
    assert abs(F.I_dia) > 1e3 * F.bound
    assert F.I_gd == pytest.approx(F.I_dia, rel=1e-8)


@pytest.mark.parametrize("c,d", [((), ()), ((0.2,), (0.1,)), ((0.0, 0.3), (0.1, 0.0))])
def test_green_oracle(roster2, ss, c, d):
    lp = P.PlanarPolarLoop(SystemState(400.0, 1.0, (1.0, 1.0)), 0, 120.0, 0.3, c, d)
    F = P.loop_functionals(lp, roster2, ss)
    oracle, err = P.green_area_oracle(lp, roster2)
    assert F.I_dia == pytest.approx(oracle, rel=1e-6)


def test_green_oracle_circle_small_amplitude(roster1, ss):
    # for a thin loop, cv/T is nearly constant: -cv * pi * aT * am / Tc
    lp = P.PlanarPolarLoop(SystemState(400.0, 1.0, (1.0,)), 0, 1.0, 0.01)
    oracle, _ = P.green_area_oracle(lp, roster1)
    assert oracle == pytest.approx(-250.0 * math.pi * 1.0 * 0.01 / 400.0, rel=1e-5)


def test_planar_loop_guards():
    c = SystemState(400.0, 1.0, (1.0,))
    with pytest.raises(DomainError):
        P.PlanarPolarLoop(c, 0, 500.0, 0.1)
    with pytest.raises(DomainError):
        P.PlanarPolarLoop(c, 0, 10.0, 2.0)
    with pytest.raises(DomainError):
        P.PlanarPolarLoop(c, 0, 10.0, 0.1, (0.6,), (0.5,))


@pytest.mark.parametrize("amp", [1.0, 2.5])
def test_scaling_loop_functionals_vanish(roster2, ss, amp):
    F = P.loop_functionals(P.ScalingLoop(SystemState(500.0, 0.7, (1.0, 0.4)), amp), roster2, ss)
    assert abs(F.I_dia) <= F.bound
    assert abs(F.I_gd) <= F.bound


def test_convected_entropy_reference_state(roster1, ss):
    st0 = SystemState(600.0, 2.0, (1.0,))        # p = 30 kPa
    oracle = 350.0 * math.log(2.0) - 100.0 * math.log(0.3)
    direct, scaled = P.convected_entropy(st0, roster1, ss)
    assert direct == pytest.approx(oracle, rel=1e-13)
    assert scaled == pytest.approx(direct, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(T=st.floats(200.0, 1200.0), V=st.floats(0.1, 10.0),
       mA=st.floats(0.05, 5.0), mB=st.floats(0.05, 5.0))
def test_convected_entropy_growth_route(T, V, mA, mB):
    from opencarnot.fluid import SpeciesSpec, StandardState
    roster = (SpeciesSpec("A", 100.0, 250.0), SpeciesSpec("B", 200.0, 500.0))
    direct, scaled = P.convected_entropy(SystemState(T, V, (mA, mB)), roster, StandardState())
    assert scaled == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_staircase_lattice_and_mass_bookkeeping(roster2, ss):
    spec = P.build_staircase(ellipse(), 8)
    assert len(spec.steps) == 8 and len(spec.nodes) == 9
    assert spec.nodes[0] == spec.nodes[-1]
    incs = {round(abs(s.dm), 14) for s in spec.steps}
    assert len(incs) == 1                        # uniform mass lattice
    sf = P.staircase_functionals(spec, roster2, ss)
    assert max(abs(x) for x in sf.mass_reconstruction) <= 1e-12
    assert abs(sf.I_tot) <= 1e-8 * (abs(sf.I_dia) + abs(sf.I_conv))


@pytest.mark.parametrize("N", [1, 7, 0])
def test_staircase_rejects_bad_N(N):
    with pytest.raises(RefinementError):
        P.build_staircase(ellipse(), N)


def test_staircase_needs_single_varying_species():
    a = np.zeros((4, 1))
    b = np.zeros((4, 1))
    a[2, 0] = a[3, 0] = 0.2
    with pytest.raises(RefinementError):
        P.build_staircase(P.FourierLoop((400.0, 1.0, 1.0, 1.0), a, b), 8)


def test_staircase_converges(roster2, ss):
    _, rows = P.staircase_refine(ellipse(), [8, 16, 32], roster2, ss)
    errs = [r.err_dia for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert all(r.ratio_dia >= 1.7 for r in rows[1:])


def test_single_elementary_cycle_staircase(roster1, ss):
    L = run_cycle(build_cycle("C_comb", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0, 0, 1e-3),
                  roster1, ss)
    sf = P.staircase_from_legs(L.legs)
    assert sf.N == 1
    assert sf.I_tot == pytest.approx(clausius_sum(L), abs=1e-12 * abs(L.Q1_tot / 400.0))


def test_partials_readings(roster2, ss):
    st0 = SystemState(450.0, 1.3, (0.8, 0.4))
    rows = P.partials_report(st0, roster2, ss, h=1e-3)
    assert [r.species for r in rows] == ["A", "B"]
    for r, sp in zip(rows, roster2):
        assert r.residual_a == pytest.approx(-sp.Rs, rel=1e-5)
        assert abs(r.residual_b) <= 1e-6 * abs(r.dS_dm)


def test_partials_h_squared(roster1, ss):
    st0 = SystemState(450.0, 1.3, (0.8,))
    big = P.partials_report(st0, roster1, ss, h=2e-2)[0].residual_b
    small = P.partials_report(st0, roster1, ss, h=1e-2)[0].residual_b
    assert 3.0 <= big / small <= 5.0


def test_partials_bad_step(roster1, ss):
    with pytest.raises(StepSizeError):
        P.partials_report(SystemState(450.0, 1.0, (0.8,)), roster1, ss, h=2.0)


def test_chemical_potential_minus_enthalpy(roster2, ss):
    st0 = SystemState(450.0, 1.3, (0.8, 0.4))
    disp = 1e-6 * st0.as_array()
    fw = P.local_energy_report(st0, roster2, ss, disp, "flow-work")
    zero = P.local_energy_report(st0, roster2, ss, disp, "zero")
    assert fw.mu_minus_h == pytest.approx((100.0 * 300.0, 200.0 * 300.0), rel=1e-10)
    assert zero.mu_minus_h == pytest.approx((0.0, 0.0), abs=1e-8)
    expected = sum(sp.Rs * ss.T0 * dm for sp, dm in zip(roster2, disp[2:]))
    assert fw.residual - zero.residual == pytest.approx(expected, rel=1e-8)
    # zero mode only leaves the second-order remainder of the finite displacement
    half = P.local_energy_report(st0, roster2, ss, disp / 2, "zero")
    assert 3.5 <= zero.residual / half.residual <= 4.5
