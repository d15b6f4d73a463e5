"""Elementary open Carnot cycles: leg integration, ledgers, composition.

A cycle is an ordered list of reversible legs. Each leg is integrated over a
normalised parameter s in [0, 1] with an adaptive Runge-Kutta scheme that
carries every heat/work integral as an extra ODE component, so state
evolution and bookkeeping share one error control.

Ledger sign conventions
-----------------------
* ``w_bnd``, ``w_mem``: work done on the system (boundary, membrane).
* ``q_dia``: heat absorbed by the system through its diathermal wall.
* ``q_pump``: heat drawn from the pump's reservoir.
* ``w_form``: work done on the conditioned elements.
* ``v_pump``: work delivered to the environment by the pumps.
* ``CycleLedger.W_tot``: net work delivered to the environment by the
  system and its transfer machinery.
* ``Q1_tot`` is heat lost by the hot reservoir, ``Q2_tot`` heat gained by
  the cold one.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    BoundaryMismatchError,
    ClosureError,
    DomainError,
    EmptySpeciesError,
    IntegratorError,
)
from .fluid import (
    SpeciesSpec,
    StandardState,
    SystemState,
    gas_constant,
    heat_capacity,
    mixture_energy,
)
from .transfer import CanonicalPath, WssMode, formation_work, path_heat, supply_cell_work_per_mass

DEFAULT_RTOL = 1e-10
DEFAULT_CLOSURE_RTOL = 1e-9


class SegmentKind(str, enum.Enum):
    ISOTHERM = "isotherm"
    ADIABAT = "adiabat"
    ISO_EXCHANGE = "isothermal-mass-exchange"
    ADIA_EXCHANGE = "adiabatic-mass-exchange"

    @property
    def isothermal(self) -> bool:
        return self in (SegmentKind.ISOTHERM, SegmentKind.ISO_EXCHANGE)

    @property
    def exchanges_mass(self) -> bool:
        return self in (SegmentKind.ISO_EXCHANGE, SegmentKind.ADIA_EXCHANGE)


class CycleKind(str, enum.Enum):
    C_ISO = "C_iso"
    C_ADIA = "C_adia"
    C_COMB = "C_comb"


@dataclass(frozen=True)
class SegmentSpec:
    """One reversible leg.

    ``V`` is the end volume; for adiabats ``T`` may be given instead.
    Mass-exchange legs default to constant volume when ``V`` is omitted.
    ``reservoir`` ("hot" or "cold") pins which reservoir feeds the pumps of
    an adiabatic exchange leg; by default the one nearest the start
    temperature is used.
    """

    kind: SegmentKind
    V: float | None = None
    T: float | None = None
    species: int | None = None
    dm: float = 0.0
    label: str = ""
    reservoir: Literal["hot", "cold"] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SegmentKind(self.kind))
        k = self.kind
        if k.exchanges_mass:
            if self.species is None:
                raise ValueError(f"{k.value} leg {self.label!r} must name a species")
            if not math.isfinite(self.dm):
                raise ValueError("dm must be finite")
        elif self.dm != 0.0 or self.species is not None:
            raise ValueError(f"{k.value} leg {self.label!r} cannot carry a mass exchange")
        if k is SegmentKind.ISOTHERM and self.V is None:
            raise ValueError(f"isotherm {self.label!r} needs a target volume")
        if k is SegmentKind.ADIABAT and (self.V is None) == (self.T is None):
            raise ValueError(f"adiabat {self.label!r} needs exactly one of V or T")
        if k is not SegmentKind.ADIABAT and self.T is not None:
            raise ValueError(f"{k.value} leg {self.label!r} cannot target a temperature")
        for name in ("V", "T"):
            val = getattr(self, name)
            if val is not None and not (math.isfinite(val) and val > 0):
                raise DomainError(f"segment target {name}={val!r} must be positive")


@dataclass(frozen=True)
class LegRecord:
    label: str
    kind: SegmentKind
    start: SystemState
    end: SystemState
    species: int | None = None
    dm: float = 0.0
    T_res: float | None = None          # reservoir feeding the pumps
    w_bnd: float = 0.0
    q_dia: float = 0.0
    q_inj: float = 0.0
    w_mem: float = 0.0
    du_conv: float = 0.0                # internal energy carried in by the stream
    s_conv: float = 0.0                 # integral of ds_i dm_i
    s_dia: float = 0.0                  # integral of dq_dia / T
    s_gd: float = 0.0                   # integral of sum m_i d(ds_i)
    q_pump: float = 0.0
    w_form: float = 0.0
    q_path: float = 0.0
    v_pump: float = 0.0
    w_cp: float = 0.0
    e_supply: float = 0.0               # internal energy drawn from supply cells
    dU_sys: float = 0.0                 # integrated energy change of the system

    @property
    def q_sys(self) -> float:
        return self.q_dia - self.q_inj

    @property
    def q_tot_over_T(self) -> float:
        """Contribution to the loop integral of dQ_tot / T."""
        return self.s_dia + self.s_conv


_FIELDS = (
    "w_bnd", "q_dia", "q_inj", "w_mem", "du_conv", "s_conv", "s_dia", "s_gd",
    "w_form", "q_path", "w_cp", "e_supply", "dU_sys",
)


@dataclass(frozen=True)
class _LegSetup:
    T_of: object
    V_of: object
    free: str | None  # "T", "V" or None


def _leg_rhs_factory(roster: Sequence[SpeciesSpec], ss: StandardState, m0: np.ndarray,
                     dmv: np.ndarray, mode: str, T0: float, T1: float, V0: float, V1: float,
                     path: CanonicalPath, wss_mode: WssMode, E_ref: float, S_ref: float):
    Rs = np.array([sp.Rs for sp in roster])
    cv = np.array([sp.cv for sp in roster])
    exch = [j for j in range(len(roster)) if dmv[j] != 0.0]
    wss = [supply_cell_work_per_mass(sp, ss, wss_mode) for sp in roster]

    def integrands(s, T, V, dT, dV):
        m = m0 + s * dmv
        R = float(m @ Rs)
        Cv = float(m @ cv)
        p = R * T / V
        w_bnd = -p * dV
        q_inj = 0.0
        w_mem = 0.0
        du = 0.0
        s_conv = 0.0
        w_form = 0.0
        q_path = 0.0
        w_cp = 0.0
        e_sup = 0.0
        for j in exch:
            sp = roster[j]
            dmj = dmv[j]
            pj = m[j] * sp.Rs * T / V
            ds = sp.cp * math.log(T / ss.T0) - sp.Rs * math.log(pj / ss.p0)
            q_inj -= sp.Rs * T * dmj
            w_mem += sp.Rs * T * dmj
            du += (sp.Uss + sp.cv * (T - ss.T0)) * dmj
            s_conv += ds * dmj
            w_form += formation_work(sp, ss, T, pj, path) * dmj
            q_path += path_heat(sp, ss, T, pj, path) * dmj
            w_cp += wss[j] * dmj
            e_sup += sp.Uss * dmj
        q_dia = Cv * dT + p * dV + q_inj
        s_gd = 0.0
        for j in range(len(roster)):
            if m[j] > 0.0:
                s_gd += m[j] * (cv[j] * dT / T + Rs[j] * dV / V) - Rs[j] * dmv[j]
        dU = Cv * dT + du
        return (
            w_bnd / E_ref, q_dia / E_ref, q_inj / E_ref, w_mem / E_ref, du / E_ref,
            s_conv / S_ref, q_dia / T / S_ref, s_gd / S_ref, w_form / E_ref,
            q_path / E_ref, w_cp / E_ref, e_sup / E_ref, dU / E_ref,
        )

    def rhs(s, y):
        m = m0 + s * dmv
        R = float(m @ Rs)
        Cv = float(m @ cv)
        if mode == "iso":
            T, V, dT, dV = T0, V0 + s * (V1 - V0), 0.0, V1 - V0
            head = ()
        elif mode == "adia_T":
            # temperature prescribed, volume follows Cv dT = -p dV
            T, V = T0 + s * (T1 - T0), y[0]
            dT = T1 - T0
            p = R * T / V
            dV = -Cv * dT / p
            head = (dV,)
        else:
            # volume prescribed, temperature follows Cv dT = sum Rs T dm - p dV
            T, V = y[0], V0 + s * (V1 - V0)
            dV = V1 - V0
            p = R * T / V
            dT = (T * float(dmv @ Rs) - p * dV) / Cv
            head = (dT,)
        if not (T > 0.0 and V > 0.0):
            raise DomainError(f"leg left the positive domain at s={s:.6g}: T={T!r}, V={V!r}")
        return (*head, *integrands(s, T, V, dT, dV))

    return rhs


def integrate_segment(state: SystemState, seg: SegmentSpec, roster: Sequence[SpeciesSpec],
                      ss: StandardState, *, T_res: float | None = None,
                      path: CanonicalPath = CanonicalPath.PT,
                      wss_mode: WssMode = "flow-work",
                      rtol: float = DEFAULT_RTOL) -> tuple[SystemState, LegRecord]:
    """Integrate one leg from ``state``; return the end state and its ledger."""
    n = len(roster)
    if len(state.m) != n:
        raise DomainError("state and roster sizes differ")
    m0 = np.array(state.m, dtype=float)
    dmv = np.zeros(n)
    kind = seg.kind
    if kind.exchanges_mass:
        i = seg.species
        if not 0 <= i < n:
            raise DomainError(f"species index {i} outside roster")
        dmv[i] = seg.dm
        if seg.dm != 0.0 and (m0[i] <= 0.0 or m0[i] + seg.dm <= 0.0):
            raise EmptySpeciesError(
                f"leg {seg.label!r}: species {roster[i].id!r} would touch zero mass "
                f"({m0[i]!r} -> {m0[i] + seg.dm!r})"
            )
    m_end = m0 + dmv

    T0, V0 = state.T, state.V
    if kind.isothermal:
        mode, T1 = "iso", T0
        V1 = seg.V if seg.V is not None else V0
    elif kind is SegmentKind.ADIABAT and seg.T is not None:
        mode, T1, V1 = "adia_T", seg.T, None
    else:
        mode, T1 = "adia_V", None
        V1 = seg.V if seg.V is not None else V0

    T_res_eff = T0 if T_res is None else T_res
    if kind.exchanges_mass and seg.dm != 0.0 and kind.isothermal:
        T_res_eff = T0

    zero_length = (not np.any(dmv)) and (
        (mode == "iso" and V1 == V0) or (mode == "adia_T" and T1 == T0)
        or (mode == "adia_V" and V1 == V0)
    )
    if zero_length:
        return state, LegRecord(seg.label, kind, state, state, seg.species, seg.dm,
                                T_res_eff if kind.exchanges_mass else None)

    R0 = gas_constant(state, roster)
    E_ref = R0 * T0
    S_ref = R0
    rhs = _leg_rhs_factory(roster, ss, m0, dmv, mode, T0, T1 if T1 is not None else T0,
                           V0, V1 if V1 is not None else V0, path, wss_mode, E_ref, S_ref)
    nI = len(_FIELDS)
    if mode == "iso":
        y0 = np.zeros(nI)
        atol = np.full(nI, 1e-14)
    elif mode == "adia_T":
        y0 = np.concatenate([[V0], np.zeros(nI)])
        atol = np.concatenate([[1e-13 * V0], np.full(nI, 1e-14)])
    else:
        y0 = np.concatenate([[T0], np.zeros(nI)])
        atol = np.concatenate([[1e-13 * T0], np.full(nI, 1e-14)])

    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegratorError(f"leg {seg.label!r} ({kind.value}) failed: {sol.message}")
    y = sol.y[:, -1]
    if mode == "iso":
        T_end, V_end, ints = T0, V1, y
    elif mode == "adia_T":
        T_end, V_end, ints = T1, float(y[0]), y[1:]
    else:
        T_end, V_end, ints = float(y[0]), V1, y[1:]
    if not (T_end > 0.0 and V_end > 0.0):
        raise DomainError(f"leg {seg.label!r} ended outside the positive domain")
    end = SystemState(T_end, V_end, tuple(m_end))

    vals = dict(zip(_FIELDS, ints))
    for k in vals:
        vals[k] = float(vals[k]) * (S_ref if k in ("s_conv", "s_dia", "s_gd") else E_ref)
    q_pump = T_res_eff * vals["s_conv"]
    rec = LegRecord(
        label=seg.label, kind=kind, start=state, end=end, species=seg.species, dm=seg.dm,
        T_res=T_res_eff if kind.exchanges_mass else None,
        q_pump=q_pump, v_pump=q_pump - vals["q_path"], **vals,
    )
    return end, rec


# --- cycles ---------------------------------------------------------------

@dataclass(frozen=True)
class CycleSpec:
    kind: CycleKind
    start: SystemState
    segments: tuple[SegmentSpec, ...]
    T1: float
    T2: float
    id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CycleKind(self.kind))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not (self.T1 > self.T2 > 0.0):
            raise DomainError(f"reservoirs need T1 > T2 > 0, got {self.T1!r}, {self.T2!r}")
        if not self.segments:
            raise ValueError("cycle has no segments")
        iso_ex = any(s.kind is SegmentKind.ISO_EXCHANGE and s.dm != 0 for s in self.segments)
        adia_ex = any(s.kind is SegmentKind.ADIA_EXCHANGE and s.dm != 0 for s in self.segments)
        if self.kind is CycleKind.C_ISO and adia_ex:
            raise ValueError("C_iso cycles exchange mass on isothermal legs only")
        if self.kind is CycleKind.C_ADIA and iso_ex:
            raise ValueError("C_adia cycles exchange mass on adiabatic legs only")
        if self.kind is CycleKind.C_COMB and not (iso_ex and adia_ex):
            if iso_ex or adia_ex:
                raise ValueError("C_comb cycles exchange mass on both leg types")


@dataclass(frozen=True)
class CycleLedger:
    kind: str
    T1: float
    T2: float
    W_tot: float
    Q1_tot: float
    Q2_tot: float
    terms: dict[str, float]
    dU_conv: float
    E_supply: float
    Q1_dia: float
    Q2_dia: float
    reservoir_heat: dict[float, float]
    legs: tuple[LegRecord, ...] = ()
    closure_gap: float = 0.0
    id: str = ""

    @property
    def W_on_system(self) -> float:
        return math.fsum(l.w_bnd + l.w_mem for l in self.legs)

    @property
    def Q_absorbed(self) -> float:
        return math.fsum(l.q_dia for l in self.legs)

    @property
    def first_law_residual(self) -> float:
        """Net diathermal heat + work on system + convected energy (zero on a closed loop)."""
        return self.Q_absorbed + self.W_on_system + self.dU_conv

    @property
    def hyper_first_law_residual(self) -> float:
        """W_tot - (Q1 - Q2) - E_supply: energy balance of system plus machinery."""
        return self.W_tot - (self.Q1_tot - self.Q2_tot) - self.E_supply

    @property
    def first_law_scale(self) -> float:
        return abs(self.Q1_tot) + abs(self.Q2_tot) + abs(self.W_tot) + 1.0

    def negated(self) -> "CycleLedger":
        return dataclasses.replace(
            self,
            W_tot=-self.W_tot, Q1_tot=-self.Q1_tot, Q2_tot=-self.Q2_tot,
            terms={k: -v for k, v in self.terms.items()},
            dU_conv=-self.dU_conv, E_supply=-self.E_supply,
            Q1_dia=-self.Q1_dia, Q2_dia=-self.Q2_dia,
            reservoir_heat={k: -v for k, v in self.reservoir_heat.items()},
        )


def _reservoir_of(T: float, T1: float, T2: float, rtol: float = 1e-9) -> str | None:
    if abs(T - T1) <= rtol * T1:
        return "hot"
    if abs(T - T2) <= rtol * T2:
        return "cold"
    return None


def _closure_gap(a: SystemState, b: SystemState) -> tuple[float, dict[str, float]]:
    gaps = {"T": abs(a.T - b.T) / a.T, "V": abs(a.V - b.V) / a.V}
    scale = max(a.m)
    for j, (x, y) in enumerate(zip(a.m, b.m)):
        gaps[f"m[{j}]"] = abs(x - y) / max(abs(x), 1e-12 * scale, 1e-300)
    return max(gaps.values()), gaps


def leg_terms(rec: LegRecord) -> dict[str, float]:
    """Itemised ledger entries contributed by one leg."""
    L = rec.label or rec.kind.value
    out = {f"{L}.boundary_work": rec.w_bnd}
    if rec.kind.isothermal:
        out[f"{L}.system_heat"] = rec.q_sys
    if rec.kind.exchanges_mass and rec.dm != 0.0:
        if rec.kind.isothermal:
            out[f"{L}.injection_heat"] = rec.q_inj
        out[f"{L}.membrane_work"] = rec.w_mem
        out[f"{L}.pump_heat"] = rec.q_pump
        out[f"{L}.pump_work"] = rec.v_pump
        out[f"{L}.formation_work"] = rec.w_form
        out[f"{L}.supply_work"] = rec.w_cp
    return out


def ledger_from_legs(legs: Sequence[LegRecord], T1: float, T2: float, kind: str = "",
                     closure_gap: float = 0.0, id: str = "") -> CycleLedger:
    """Assemble totals from leg records. Heat is grouped by reservoir temperature."""
    res_heat: dict[float, list[float]] = {}
    hot_dia, cold_dia = [], []
    terms: dict[str, float] = {}
    for rec in legs:
        if rec.kind.isothermal:
            T = rec.start.T
            which = _reservoir_of(T, T1, T2)
            key = T1 if which == "hot" else T2 if which == "cold" else T
            res_heat.setdefault(key, []).append(rec.q_dia)
            if which == "hot":
                hot_dia.append(rec.q_dia)
            elif which == "cold":
                cold_dia.append(rec.q_dia)
        if rec.kind.exchanges_mass and rec.dm != 0.0:
            which = _reservoir_of(rec.T_res, T1, T2)
            key = T1 if which == "hot" else T2 if which == "cold" else rec.T_res
            res_heat.setdefault(key, []).append(rec.q_pump)
        for k, v in leg_terms(rec).items():
            if k in terms:
                raise ValueError(f"duplicate ledger term {k!r}; give legs distinct labels")
            terms[k] = v
    reservoir_heat = {T: math.fsum(v) for T, v in sorted(res_heat.items())}
    W_tot = math.fsum(
        x for rec in legs for x in (-rec.w_bnd, -rec.w_mem, -rec.w_form, rec.v_pump)
    )
    return CycleLedger(
        kind=kind, T1=T1, T2=T2, W_tot=W_tot,
        Q1_tot=reservoir_heat.get(T1, 0.0),
        Q2_tot=-reservoir_heat.get(T2, 0.0),
        terms=terms,
        dU_conv=math.fsum(r.du_conv for r in legs),
        E_supply=math.fsum(r.e_supply for r in legs),
        Q1_dia=math.fsum(hot_dia), Q2_dia=-math.fsum(cold_dia),
        reservoir_heat=reservoir_heat, legs=tuple(legs),
        closure_gap=closure_gap, id=id,
    )


def integrate_path(start: SystemState, segments: Iterable[SegmentSpec],
                   roster: Sequence[SpeciesSpec], ss: StandardState,
                   T_res_for=None, **opts) -> list[LegRecord]:
    """Integrate consecutive legs; ``T_res_for(seg, state)`` picks pump reservoirs."""
    state = start
    legs = []
    for seg in segments:
        T_res = T_res_for(seg, state) if T_res_for is not None else None
        state, rec = integrate_segment(state, seg, roster, ss, T_res=T_res, **opts)
        legs.append(rec)
    return legs


def run_cycle(spec: CycleSpec, roster: Sequence[SpeciesSpec], ss: StandardState, *,
              path: CanonicalPath = CanonicalPath.PT, wss_mode: WssMode = "flow-work",
              rtol: float = DEFAULT_RTOL,
              closure_rtol: float = DEFAULT_CLOSURE_RTOL) -> CycleLedger:
    """Integrate every leg of ``spec`` and assemble its ledger.

    Raises :class:`ClosureError` if the loop does not return to its start.
    """
    T1, T2 = spec.T1, spec.T2

    def T_res_for(seg: SegmentSpec, state: SystemState) -> float | None:
        if seg.kind.isothermal:
            if _reservoir_of(state.T, T1, T2) is None:
                raise DomainError(
                    f"isothermal leg {seg.label!r} at T={state.T!r} touches neither reservoir"
                )
            return None
        if seg.kind is SegmentKind.ADIA_EXCHANGE:
            if seg.reservoir == "hot":
                return T1
            if seg.reservoir == "cold":
                return T2
            return T1 if abs(state.T - T1) <= abs(state.T - T2) else T2
        return None

    legs = integrate_path(spec.start, spec.segments, roster, ss, T_res_for,
                          path=path, wss_mode=wss_mode, rtol=rtol)
    gap, per = _closure_gap(spec.start, legs[-1].end)
    if gap > closure_rtol:
        worst = ", ".join(f"{k}={v:.3e}" for k, v in per.items())
        raise ClosureError(f"cycle {spec.id!r} does not close within {closure_rtol:g}: {worst}")
    return ledger_from_legs(legs, T1, T2, spec.kind.value, gap, spec.id)


def carnot_residual(ledger: CycleLedger, T1: float | None = None,
                    T2: float | None = None) -> float:
    """Q1_tot/T1 - Q2_tot/T2, in J/K."""
    T1 = ledger.T1 if T1 is None else T1
    T2 = ledger.T2 if T2 is None else T2
    return ledger.Q1_tot / T1 - ledger.Q2_tot / T2


def carnot_ratios(ledger: CycleLedger) -> tuple[float, float]:
    """(Q1/Q2, T1/T2); equal for a reversible two-reservoir cycle."""
    return ledger.Q1_tot / ledger.Q2_tot, ledger.T1 / ledger.T2


def clausius_sum(ledger: CycleLedger) -> float:
    """sum over reservoirs of heat drawn / T; reduces to the Carnot residual."""
    return math.fsum(q / T for T, q in ledger.reservoir_heat.items())


def corrupt_ledger(ledger: CycleLedger, q2_scale: float) -> CycleLedger:
    """Fault injection: scale the cold-reservoir heat."""
    rh = dict(ledger.reservoir_heat)
    if ledger.T2 in rh:
        rh[ledger.T2] *= q2_scale
    return dataclasses.replace(ledger, Q2_tot=ledger.Q2_tot * q2_scale, reservoir_heat=rh)


# --- reversal -------------------------------------------------------------

def reverse_cycle(spec: CycleSpec, roster: Sequence[SpeciesSpec], ss: StandardState,
                  rtol: float = DEFAULT_RTOL) -> CycleSpec:
    """The same loop traversed backwards, with targets taken from a forward run."""
    legs = integrate_path(spec.start, spec.segments, roster, ss, rtol=rtol)
    rev = []
    for seg, rec in zip(reversed(spec.segments), reversed(legs)):
        label = seg.label[::-1] if seg.label else ""
        a = rec.start
        if seg.kind is SegmentKind.ADIABAT:
            new = SegmentSpec(seg.kind, T=a.T, label=label) if seg.T is not None \
                else SegmentSpec(seg.kind, V=a.V, label=label)
        elif seg.kind is SegmentKind.ISOTHERM:
            new = SegmentSpec(seg.kind, V=a.V, label=label)
        else:
            new = SegmentSpec(seg.kind, V=a.V, species=seg.species, dm=-seg.dm,
                              label=label, reservoir=seg.reservoir)
        rev.append(new)
    return dataclasses.replace(spec, segments=tuple(rev), id=f"{spec.id}~rev" if spec.id else "")


# --- builders -------------------------------------------------------------

def _adiabat_volume(V: float, T_from: float, T_to: float, Cv: float, R: float) -> float:
    # T V^(R/Cv) = const at fixed composition
    return V * (T_from / T_to) ** (Cv / R)


def _adiabatic_exchange_temperature(T: float, Cv: float, sp: SpeciesSpec, dm: float) -> float:
    # constant-volume adiabatic exchange: Cv(m) dT = Rs T dm
    return T * ((Cv + sp.cv * dm) / Cv) ** (sp.Rs / sp.cv)


def build_cycle(kind: CycleKind | str, roster: Sequence[SpeciesSpec], start_V: float,
                m: Sequence[float], T1: float, T2: float, ratio: float,
                species: int = 0, dm: float = 0.0, port_fraction: float = 0.5,
                id: str = "") -> CycleSpec:
    """Construct a closing C_iso / C_adia / C_comb cycle starting at (T1, start_V, m).

    ``ratio`` is the hot-isotherm expansion ratio. Target volumes that make
    the loop close are computed from closed-form ideal-gas relations; the
    cycle engine then integrates numerically, so closure doubles as a check
    of the integrator.
    """
    kind = CycleKind(kind)
    if not ratio > 1.0:
        raise DomainError("compression ratio must exceed 1")
    if not 0.0 < port_fraction < 1.0:
        raise DomainError("port_fraction must lie in (0, 1)")
    m = tuple(float(x) for x in m)
    sp = roster[species]
    m_ex = list(m)
    m_ex[species] += dm
    st_a = SystemState(T1, start_V, m)
    st_x = SystemState(T1, start_V, tuple(m_ex))
    Cv_a, R_a = heat_capacity(st_a, roster), gas_constant(st_a, roster)
    Cv_x, R_x = heat_capacity(st_x, roster), gas_constant(st_x, roster)
    Va = start_V
    Vb = Va * ratio
    f = port_fraction
    Seg, K = SegmentSpec, SegmentKind

    if kind is CycleKind.C_ISO:
        Vd = _adiabat_volume(Va, T1, T2, Cv_a, R_a)
        Vc = _adiabat_volume(Vb, T1, T2, Cv_x, R_x)
        Vc_port = Vc * (Vd / Vc) ** f
        segs = [
            Seg(K.ISOTHERM, V=Va * ratio ** f, label="aa'"),
            Seg(K.ISO_EXCHANGE, V=Vb, species=species, dm=dm, label="a'b"),
            Seg(K.ADIABAT, T=T2, label="bc"),
            Seg(K.ISOTHERM, V=Vc_port, label="cc'"),
            Seg(K.ISO_EXCHANGE, V=Vd, species=species, dm=-dm, label="c'd"),
            Seg(K.ADIABAT, T=T1, label="da"),
        ]
    elif kind is CycleKind.C_ADIA:
        Td_port = _adiabatic_exchange_temperature(T2, Cv_x, sp, -dm)
        Vd = _adiabat_volume(Va, T1, Td_port, Cv_a, R_a)
        segs = [
            Seg(K.ISOTHERM, V=Vb, label="ab"),
            Seg(K.ADIA_EXCHANGE, species=species, dm=dm, label="bb'", reservoir="hot"),
            Seg(K.ADIABAT, T=T2, label="b'c"),
            Seg(K.ISOTHERM, V=Vd, label="cd"),
            Seg(K.ADIA_EXCHANGE, species=species, dm=-dm, label="dd'", reservoir="cold"),
            Seg(K.ADIABAT, T=T1, label="d'a"),
        ]
    else:
        Td_port = _adiabatic_exchange_temperature(T2, Cv_x, sp, -dm)
        Vd = _adiabat_volume(Va, T1, Td_port, Cv_a, R_a)
        segs = [
            Seg(K.ISOTHERM, V=Va * ratio ** f, label="aa'"),
            Seg(K.ISO_EXCHANGE, V=Vb, species=species, dm=dm, label="a'b"),
            Seg(K.ADIABAT, T=T2, label="bc"),
            Seg(K.ISOTHERM, V=Vd, label="cd"),
            Seg(K.ADIA_EXCHANGE, species=species, dm=-dm, label="dd'", reservoir="cold"),
            Seg(K.ADIABAT, T=T1, label="d'a"),
        ]
    if dm == 0.0:
        # degenerate closed Carnot cycle: keep the leg layout, drop the species tag
        segs = [
            Seg(K.ISOTHERM, V=s.V, label=s.label) if s.kind is K.ISO_EXCHANGE else s
            for s in segs if s.kind is not K.ADIA_EXCHANGE
        ]
    return CycleSpec(kind, st_a, tuple(segs), T1, T2, id)


def carnot_sharing_adiabat(hot_end: SystemState, cold_end: SystemState, T1: float, T2: float,
                           ratio: float, side: Literal["left", "right"], id: str = "",
                           prefix: str = "") -> CycleSpec:
    """Closed Carnot cycle that traverses a given adiabat in the opposite direction.

    ``hot_end`` and ``cold_end`` are the endpoints of an adiabat belonging to
    another cycle. ``side="right"`` places the new cycle at larger volumes
    (it climbs the adiabat cold -> hot); ``side="left"`` at smaller volumes
    (it descends hot -> cold).
    """
    if hot_end.m != cold_end.m:
        raise BoundaryMismatchError("adiabat endpoints carry different masses")
    Seg, K = SegmentSpec, SegmentKind
    p = prefix
    if side == "right":
        segs = (
            Seg(K.ISOTHERM, V=hot_end.V * ratio, label=f"{p}he"),
            Seg(K.ADIABAT, T=T2, label=f"{p}ef"),
            Seg(K.ISOTHERM, V=cold_end.V, label=f"{p}fc"),
            Seg(K.ADIABAT, T=T1, label=f"{p}ch"),
        )
    elif side == "left":
        segs = (
            Seg(K.ADIABAT, T=T2, label=f"{p}hc"),
            Seg(K.ISOTHERM, V=cold_end.V / ratio, label=f"{p}cg"),
            Seg(K.ADIABAT, T=T1, label=f"{p}gk"),
            Seg(K.ISOTHERM, V=hot_end.V, label=f"{p}kh"),
        )
    else:
        raise ValueError("side must be 'left' or 'right'")
    return CycleSpec(CycleKind.C_ISO, hot_end, segs, T1, T2, id)


# --- concatenation --------------------------------------------------------

@dataclass(frozen=True)
class CompositeLedger:
    ledger: CycleLedger
    shared_cancellation: float      # largest |sum| over matched shared-leg pairs
    component_residual_sum: float   # sum of the parts' Clausius sums


def _states_close(a: SystemState, b: SystemState, rtol: float) -> bool:
    return _closure_gap(a, b)[0] <= rtol


def concatenate(ledgers: Sequence[CycleLedger],
                shared: Sequence[tuple[tuple[int, str], tuple[int, str]]] = (),
                rtol: float = 1e-8) -> CompositeLedger:
    """Sum cycle ledgers whose declared shared legs are traversed in opposite senses."""
    used: set[tuple[int, str]] = set()
    cancel = 0.0
    for (ia, la), (ib, lb) in shared:
        try:
            A = next(l for l in ledgers[ia].legs if l.label == la)
            B = next(l for l in ledgers[ib].legs if l.label == lb)
        except (StopIteration, IndexError):
            raise BoundaryMismatchError(f"shared leg ({ia},{la!r})/({ib},{lb!r}) not found")
        if A.kind is not B.kind:
            raise BoundaryMismatchError(f"shared legs {la!r}/{lb!r} differ in kind")
        if not (_states_close(A.start, B.end, rtol) and _states_close(A.end, B.start, rtol)):
            raise BoundaryMismatchError(
                f"shared legs {la!r}/{lb!r} are not the same path in opposite directions"
            )
        for key in ((ia, la), (ib, lb)):
            if key in used:
                raise BoundaryMismatchError(f"leg {key} declared shared twice")
            used.add(key)
        scale = max(abs(A.w_bnd), abs(A.q_dia), 1.0)
        cancel = max(cancel, abs(A.w_bnd + B.w_bnd) / scale, abs(A.q_dia + B.q_dia) / scale)

    T1 = max(l.T1 for l in ledgers)
    T2 = min(l.T2 for l in ledgers)
    res: dict[float, list[float]] = {}
    for l in ledgers:
        for T, q in l.reservoir_heat.items():
            res.setdefault(T, []).append(q)
    reservoir_heat = {T: math.fsum(v) for T, v in sorted(res.items())}
    terms = {f"{i}/{k}": v for i, l in enumerate(ledgers) for k, v in l.terms.items()}
    legs = tuple(
        rec for i, l in enumerate(ledgers) for rec in l.legs if (i, rec.label) not in used
    )
    comp = CycleLedger(
        kind="composite", T1=T1, T2=T2,
        W_tot=math.fsum(l.W_tot for l in ledgers),
        Q1_tot=reservoir_heat.get(T1, 0.0), Q2_tot=-reservoir_heat.get(T2, 0.0),
        terms=terms,
        dU_conv=math.fsum(l.dU_conv for l in ledgers),
        E_supply=math.fsum(l.E_supply for l in ledgers),
        Q1_dia=math.fsum(l.Q1_dia for l in ledgers if l.T1 == T1),
        Q2_dia=math.fsum(l.Q2_dia for l in ledgers if l.T2 == T2),
        reservoir_heat=reservoir_heat, legs=legs,
        closure_gap=max(l.closure_gap for l in ledgers),
    )
    return CompositeLedger(comp, cancel, math.fsum(clausius_sum(l) for l in ledgers))


# --- virtual work ---------------------------------------------------------

@dataclass(frozen=True)
class VirtualWork:
    W_vir: float
    W_ext: float
    dU: float
    residual: float            # W_ext - dU - W_vir
    # system-only reading: diathermal heats, boundary+membrane work, stream energy
    W_vir_dia: float
    W_ext_sys: float
    dU_conv: float
    residual_sys: float        # measured, not asserted


def virtual_work(ledger: CycleLedger, T1: float | None = None,
                 T2: float | None = None) -> VirtualWork:
    """Compare the work of an equivalent closed Carnot engine with the actual work.

    The asserted relation treats the system together with its reversible
    transfer machinery: W_ext is ``W_tot`` and the convected energy is what
    the supply cells gave up. The system-only reading (diathermal heats and
    the energy carried in by the streams) is returned alongside, unasserted.
    """
    T1 = ledger.T1 if T1 is None else T1
    T2 = ledger.T2 if T2 is None else T2
    W_vir = ledger.Q1_tot * (T1 - T2) / T1
    W_vir_dia = ledger.Q1_dia * (T1 - T2) / T1
    W_ext_sys = -ledger.W_on_system
    return VirtualWork(
        W_vir=W_vir, W_ext=ledger.W_tot, dU=ledger.E_supply,
        residual=ledger.W_tot - ledger.E_supply - W_vir,
        W_vir_dia=W_vir_dia, W_ext_sys=W_ext_sys, dU_conv=ledger.dU_conv,
        residual_sys=W_ext_sys - ledger.dU_conv - W_vir_dia,
    )


@dataclass(frozen=True)
class FamilyVirtualWork:
    sum_W_vir: float
    sum_W_ext: float
    sum_dU: float
    sum_abs_W_vir: float
    residual: float            # sum W_vir - sum W_ext


def virtual_work_family(ledgers: Sequence[CycleLedger]) -> FamilyVirtualWork:
    vws = [virtual_work(l) for l in ledgers]
    sv = math.fsum(v.W_vir for v in vws)
    se = math.fsum(v.W_ext for v in vws)
    return FamilyVirtualWork(
        sum_W_vir=sv, sum_W_ext=se, sum_dU=math.fsum(v.dU for v in vws),
        sum_abs_W_vir=math.fsum(abs(v.W_vir) for v in vws), residual=sv - se,
    )
