import dataclasses
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opencarnot.cycles import (
    CycleKind,
    CycleSpec,
    SegmentKind,
    SegmentSpec,
    build_cycle,
    carnot_residual,
    carnot_sharing_adiabat,
    clausius_sum,
    concatenate,
    corrupt_ledger,
    integrate_path,
    integrate_segment,
    reverse_cycle,
    run_cycle,
    virtual_work,
    virtual_work_family,
)
from opencarnot.errors import (
    BoundaryMismatchError,
    ClosureError,
    DomainError,
    EmptySpeciesError,
)
from opencarnot.fluid import SystemState
from opencarnot.harness import build_open_family, run_open_family

K = SegmentKind


def test_isotherm_matches_closed_form(roster1, ss):
    a = SystemState(400.0, 1.0, (1.0,))
    end, rec = integrate_segment(a, SegmentSpec(K.ISOTHERM, V=2.0), roster1, ss)
    oracle = 1.0 * 100.0 * 400.0 * math.log(2.0)
    assert end.T == 400.0 and end.V == pytest.approx(2.0, rel=1e-14)
    assert rec.q_dia == pytest.approx(oracle, rel=1e-9)
    assert rec.w_bnd == pytest.approx(-oracle, rel=1e-9)
    assert rec.du_conv == pytest.approx(0.0, abs=1e-9 * oracle)


def test_adiabat_invariant(roster1, ss):
    a = SystemState(400.0, 1.0, (1.0,))
    end, rec = integrate_segment(a, SegmentSpec(K.ADIABAT, T=300.0), roster1, ss)
    inv = lambda s: s.T * s.V ** (100.0 / 250.0)
    assert inv(end) == pytest.approx(inv(a), rel=1e-8)
    assert abs(rec.q_dia) <= 1e-10 * abs(rec.w_bnd)
    # work on the system equals the internal-energy change
    assert rec.w_bnd == pytest.approx(250.0 * (300.0 - 400.0), rel=1e-9)


def test_adiabat_by_volume(roster1, ss):
    a = SystemState(400.0, 1.0, (1.0,))
    end, _ = integrate_segment(a, SegmentSpec(K.ADIABAT, V=2.0), roster1, ss)
    assert end.T == pytest.approx(400.0 * 2.0 ** -0.4, rel=1e-9)


def test_zero_length_leg_is_identity(roster1, ss):
    a = SystemState(400.0, 1.0, (1.0,))
    end, rec = integrate_segment(a, SegmentSpec(K.ISOTHERM, V=1.0), roster1, ss)
    assert end == a
    assert rec.q_dia == 0.0 and rec.w_bnd == 0.0


def test_iso_exchange_injection_terms(roster2, ss):
    a = SystemState(400.0, 1.0, (1.0, 0.5))
    dm = 1e-3
    end, rec = integrate_segment(
        a, SegmentSpec(K.ISO_EXCHANGE, V=1.0, species=1, dm=dm), roster2, ss)
    assert end.m == pytest.approx((1.0, 0.5 + dm), rel=1e-14)
    # at fixed T and V the membrane work is Rs T dm, and the injection heat mirrors it
    assert rec.w_mem == pytest.approx(200.0 * 400.0 * dm, rel=1e-9)
    assert rec.q_inj == pytest.approx(-rec.w_mem, rel=1e-12)


def test_extraction_into_empty_species(roster2, ss):
    a = SystemState(400.0, 1.0, (1.0, 1e-4))
    with pytest.raises(EmptySpeciesError):
        integrate_segment(a, SegmentSpec(K.ISO_EXCHANGE, V=1.0, species=1, dm=-1e-3),
                          roster2, ss)


def test_segment_validation():
    with pytest.raises(ValueError):
        SegmentSpec(K.ISOTHERM)
    with pytest.raises(DomainError):
        SegmentSpec(K.ISOTHERM, V=-1.0)


@pytest.mark.parametrize("T1,T2,r", [(400.0, 300.0, 2.0), (600.0, 280.0, 4.0)])
def test_closed_carnot_efficiency(roster1, ss, T1, T2, r):
    spec = build_cycle("C_iso", roster1, 1.0, (1.0,), T1, T2, r)
    L = run_cycle(spec, roster1, ss)
    Q1 = 1.0 * 100.0 * T1 * math.log(r)
    assert L.Q1_tot == pytest.approx(Q1, rel=1e-9)
    assert L.W_tot == pytest.approx(Q1 * (1 - T2 / T1), rel=1e-8)
    assert abs(carnot_residual(L)) <= 1e-8 * Q1 / T1
    assert L.E_supply == 0.0


@pytest.mark.parametrize("kind", ["C_iso", "C_adia", "C_comb"])
@pytest.mark.parametrize("dm", [1e-3, -1e-3])
def test_open_cycles_satisfy_carnot_and_first_law(roster2, ss, kind, dm):
    spec = build_cycle(kind, roster2, 1.0, (1.0, 0.5), 400.0, 300.0, 2.0, species=1, dm=dm)
    L = run_cycle(spec, roster2, ss)
    assert abs(carnot_residual(L)) <= 1e-8 * abs(L.Q1_tot / L.T1)
    assert abs(L.first_law_residual) <= 1e-9 * L.first_law_scale
    assert abs(L.hyper_first_law_residual) <= 1e-9 * L.first_law_scale
    assert abs(clausius_sum(L)) <= 1e-8 * abs(L.Q1_tot / L.T1)
    vw = virtual_work(L)
    assert abs(vw.residual) <= 1e-8 * abs(vw.W_vir)


def test_cycle_kind_checks_exchange_layout(roster1):
    a = SystemState(400.0, 1.0, (1.0,))
    segs = (SegmentSpec(K.ADIA_EXCHANGE, species=0, dm=1e-3),)
    with pytest.raises(ValueError):
        CycleSpec(CycleKind.C_ISO, a, segs, 400.0, 300.0)


def test_open_path_is_reported_as_unclosed(roster1, ss):
    spec = build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0)
    broken = dataclasses.replace(spec, segments=spec.segments[:-1])
    with pytest.raises(ClosureError):
        run_cycle(broken, roster1, ss)


def test_isotherm_off_reservoir_rejected(roster1, ss):
    a = SystemState(350.0, 1.0, (1.0,))
    spec = CycleSpec(CycleKind.C_ISO, a, (SegmentSpec(K.ISOTHERM, V=2.0),), 400.0, 300.0)
    with pytest.raises(DomainError):
        run_cycle(spec, roster1, ss)


@pytest.mark.parametrize("kind", ["C_iso", "C_adia", "C_comb"])
def test_reversal_negates_ledger(roster2, ss, kind):
    spec = build_cycle(kind, roster2, 1.0, (1.0, 0.5), 400.0, 300.0, 2.0, species=0, dm=1e-3)
    fwd = run_cycle(spec, roster2, ss)
    bwd = run_cycle(reverse_cycle(spec, roster2, ss), roster2, ss)
    scale = max(abs(v) for v in fwd.terms.values())
    assert bwd.W_tot == pytest.approx(-fwd.W_tot, abs=1e-9 * scale)
    assert bwd.Q1_tot == pytest.approx(-fwd.Q1_tot, abs=1e-9 * scale)
    assert bwd.Q2_tot == pytest.approx(-fwd.Q2_tot, abs=1e-9 * scale)
    for k, v in fwd.terms.items():
        label, name = k.split(".", 1)
        assert bwd.terms[f"{label[::-1]}.{name}"] == pytest.approx(-v, abs=1e-9 * scale)


def test_corrupted_ledger_breaks_carnot(roster1, ss):
    L = run_cycle(build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0), roster1, ss)
    bad = corrupt_ledger(L, 1.01)
    assert abs(carnot_residual(bad)) > 1e-3 * abs(L.Q1_tot / L.T1)


def test_concatenate_with_reverse_cancels(roster1, ss):
    spec = build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0)
    fwd = run_cycle(spec, roster1, ss)
    bwd = run_cycle(reverse_cycle(spec, roster1, ss), roster1, ss)
    labels = [l.label for l in fwd.legs]
    shared = [((0, lab), (1, lab[::-1])) for lab in labels]
    comp = concatenate([fwd, bwd], shared)
    scale = abs(fwd.Q1_tot)
    assert abs(comp.ledger.W_tot) <= 1e-9 * scale
    assert comp.shared_cancellation <= 1e-9 * scale


def test_concatenate_sharing_adiabat(roster1, ss):
    base = run_cycle(build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0), roster1, ss)
    bc = next(l for l in base.legs if l.label == "bc")
    other = run_cycle(carnot_sharing_adiabat(bc.start, bc.end, 400.0, 300.0, 1.5, "right"),
                      roster1, ss)
    comp = concatenate([base, other], [((0, "bc"), (1, "ch"))])
    assert comp.ledger.W_tot == pytest.approx(base.W_tot + other.W_tot, rel=1e-12)
    assert abs(carnot_residual(comp.ledger)) <= 1e-8 * comp.ledger.Q1_tot / 400.0


def test_concatenate_mismatch(roster1, ss):
    L = run_cycle(build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0), roster1, ss)
    with pytest.raises(BoundaryMismatchError):
        concatenate([L, L], [((0, "bc"), (1, "bc"))])
    with pytest.raises(BoundaryMismatchError):
        concatenate([L, L], [((0, "bc"), (1, "nope"))])


def test_virtual_work_closed_cycle_is_actual_work(roster1, ss):
    L = run_cycle(build_cycle("C_iso", roster1, 1.0, (1.0,), 400.0, 300.0, 2.0), roster1, ss)
    vw = virtual_work(L)
    assert vw.W_vir == pytest.approx(L.W_tot, rel=1e-8)
    assert vw.dU == 0.0


def test_open_family_virtual_work(roster2, ss):
    fam = build_open_family(roster2, ss, dm=1e-3, species=0)
    ledgers = run_open_family(fam, roster2, ss)
    agg = virtual_work_family(ledgers)
    assert abs(agg.residual + agg.sum_dU) <= 1e-7 * agg.sum_abs_W_vir


def test_open_family_requires_head_to_tail(roster2, ss):
    fam = build_open_family(roster2, ss, dm=1e-3, species=0)
    with pytest.raises(ClosureError):
        run_open_family(fam[:1], roster2, ss)


def test_wss_mode_zero_also_balances(roster2, ss):
    spec = build_cycle("C_iso", roster2, 1.0, (1.0, 0.5), 400.0, 300.0, 2.0, species=1, dm=1e-3)
    L = run_cycle(spec, roster2, ss, wss_mode="zero")
    assert abs(carnot_residual(L)) <= 1e-8 * abs(L.Q1_tot / L.T1)


@settings(max_examples=15, deadline=None)
@given(T1=st.floats(330.0, 900.0), dT=st.floats(20.0, 300.0), r=st.floats(1.2, 5.0),
       dm=st.floats(-5e-3, 5e-3), kind=st.sampled_from(["C_iso", "C_adia", "C_comb"]))
def test_carnot_condition_property(T1, dT, r, dm, kind):
    from opencarnot.fluid import SpeciesSpec, StandardState
    roster = (SpeciesSpec("A", 100.0, 250.0), SpeciesSpec("B", 200.0, 500.0, Uss=1000.0))
    ss = StandardState()
    T2 = max(T1 - dT, 50.0)
    spec = build_cycle(kind, roster, 1.0, (1.0, 0.5), T1, T2, r, species=1, dm=dm)
    L = run_cycle(spec, roster, ss)
    assert abs(carnot_residual(L)) <= 1e-8 * abs(L.Q1_tot / T1)
    assert abs(L.hyper_first_law_residual) <= 1e-9 * L.first_law_scale
