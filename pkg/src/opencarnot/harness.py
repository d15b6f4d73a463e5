"""Suite orchestration and residual reports.

Which checks are asserted and which are only measured is fixed here, not in
the configuration, so a config file can neither silence an exactness check
nor promote a contested claim to a passing one.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from . import paths as P
from .config import SUITES, ExperimentConfig, LoopConfig, SweepConfig
from .cycles import (
    CycleKind,
    CycleLedger,
    CycleSpec,
    SegmentKind,
    SegmentSpec,
    _adiabat_volume,
    _closure_gap,
    build_cycle,
    carnot_residual,
    carnot_sharing_adiabat,
    clausius_sum,
    concatenate,
    corrupt_ledger,
    integrate_path,
    ledger_from_legs,
    reverse_cycle,
    run_cycle,
    virtual_work,
    virtual_work_family,
)
from .errors import ClosureError, ConfigError, ThermoError
from .fluid import SystemState, gas_constant, heat_capacity
from .transfer import WSS_MODES, CanonicalPath, formation_work, reciprocity_check, work_state_function_by_path

Kind = Literal["asserted", "report-only"]
Verdict = Literal["pass", "fail", "measured"]


@dataclass(frozen=True)
class ResidualReport:
    id: str
    kind: Kind
    tag: str
    value: float
    bound: float
    verdict: Verdict

    @property
    def failed(self) -> bool:
        return self.kind == "asserted" and self.verdict == "fail"


def _le(id: str, tag: str, value: float, bound: float) -> ResidualReport:
    value, bound = float(value), float(bound)
    ok = math.isfinite(value) and value <= bound
    return ResidualReport(id, "asserted", tag, value, bound, "pass" if ok else "fail")


def _ge(id: str, tag: str, value: float, bound: float) -> ResidualReport:
    value, bound = float(value), float(bound)
    ok = math.isfinite(value) and value >= bound
    return ResidualReport(id, "asserted", tag, value, bound, "pass" if ok else "fail")


def _measured(id: str, tag: str, value: float, bound: float = math.nan) -> ResidualReport:
    return ResidualReport(id, "report-only", tag, float(value), float(bound), "measured")


def _rel(x: float, scale: float) -> float:
    return abs(x) / scale if scale != 0.0 else abs(x)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


# --- built-in experiments --------------------------------------------------

def builtin_sweep(cfg: ExperimentConfig) -> SweepConfig:
    m = tuple(1.0 if i == 0 else 0.0 for i in range(len(cfg.species)))
    return SweepConfig("sweep", tuple(k.value for k in CycleKind), (350.0, 400.0, 600.0),
                       (280.0, 300.0), (1.5, 2.0, 4.0), (0.0, 1e-3, -1e-3), 0, 1.0, m)


def builtin_loops(cfg: ExperimentConfig) -> list[LoopConfig]:
    n = len(cfg.species)
    ones = SystemState(400.0, 1.0, tuple(1.0 for _ in range(n)))
    out = [
        LoopConfig("random", "random", ones, {"count": 20, "harmonics": 3, "amplitude": 0.3}),
        LoopConfig("ellipse", "fourier", ones,
                   {"cos": {cfg.species[0].id: (0.4,)}, "sin": {"T": (0.25,)}}),
        LoopConfig("scaling-1", "scaling", ones, {"amp": 1.0}),
        LoopConfig("scaling-2", "scaling", SystemState(700.0, 0.3, ones.m), {"amp": 2.5}),
    ]
    shapes = [((), ()), ((0.2,), (0.1,)), ((0.0, 0.3), (0.1, 0.0)),
              ((0.1, 0.1, 0.1), (0.0, 0.2, 0.0)), ((0.25,), (-0.15,))]
    for k, (c, d) in enumerate(shapes):
        out.append(LoopConfig(f"planar-{k}", "planar", ones,
                              {"species": 0, "aT": 120.0 + 20 * k, "am": 0.3 + 0.05 * k,
                               "c": c, "d": d}))
    return out


def expand_loop(lc: LoopConfig, cfg: ExperimentConfig) -> list:
    p = lc.params
    if lc.type == "random":
        rng = _rng(cfg.seed, f"loop:{lc.id}")
        width = max(2, len(str(p["count"] - 1)))
        return [P.random_fourier_loop(rng, lc.center, p["harmonics"], p["amplitude"],
                                      id=f"{lc.id}-{k:0{width}d}") for k in range(p["count"])]
    if lc.type == "scaling":
        return [P.ScalingLoop(lc.center, p["amp"], lc.id)]
    if lc.type == "planar":
        return [P.PlanarPolarLoop(lc.center, p["species"], p["aT"], p["am"],
                                  tuple(p["c"]), tuple(p["d"]), lc.id)]
    names = ["T", "V"] + [sp.id for sp in cfg.species]
    K = max([len(v) for tbl in (p["cos"], p["sin"]) for v in tbl.values()] or [1])
    a = np.zeros((len(names), K))
    b = np.zeros((len(names), K))
    for arr, key in ((a, "cos"), (b, "sin")):
        for coord, coeffs in p[key].items():
            arr[names.index(coord), :len(coeffs)] = coeffs
    return [P.FourierLoop(tuple(lc.center.as_array()), a, b, lc.id)]


def sweep_specs(sw: SweepConfig, cfg: ExperimentConfig) -> list[CycleSpec]:
    out = []
    for kind, T1, T2, r, dm in itertools.product(sw.kinds, sw.T1, sw.T2, sw.ratio, sw.dm):
        cid = f"{sw.id}/{kind}/T1={T1:g}/T2={T2:g}/r={r:g}/dm={dm:+g}"
        out.append(build_cycle(kind, cfg.species, sw.V, sw.m, T1, T2, r, sw.species, dm,
                               sw.port_fraction, cid))
    return out


class Runner:
    """Evaluates experiments once and serves every suite that needs them."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.ss = cfg.standard_state
        self.roster = cfg.species
        self.tol = cfg.tolerances
        self._ledgers: dict[str, CycleLedger | Exception] = {}
        self._loopf: dict[str, object] = {}
        self.convergence: list[tuple[str, P.ConvergenceRow]] = []
        self.errors: list[str] = []

    # experiments
    @cached_property
    def cycle_specs(self) -> list[CycleSpec]:
        specs = list(self.cfg.cycles.values())
        sweeps = list(self.cfg.sweeps.values())
        if self.cfg.builtin_experiments:
            sweeps.insert(0, builtin_sweep(self.cfg))
        for sw in sweeps:
            specs.extend(sweep_specs(sw, self.cfg))
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise ConfigError("cycle ids clash (declared cycles vs sweep members)")
        return specs

    @cached_property
    def loops(self) -> list:
        lcs = list(self.cfg.loops.values())
        if self.cfg.builtin_experiments:
            lcs = builtin_loops(self.cfg) + lcs
        out = [lp for lc in lcs for lp in expand_loop(lc, self.cfg)]
        seen = set()
        for lp in out:
            if lp.id in seen:
                raise ConfigError(f"loop id {lp.id!r} clashes with another loop or a built-in one")
            seen.add(lp.id)
        return out

    @cached_property
    def staircases(self) -> list[tuple[str, P.FourierLoop, tuple[int, ...]]]:
        by_id = {lp.id: lp for lp in self.loops}
        out = []
        if self.cfg.builtin_experiments:
            out.append(("ellipse", by_id["ellipse"], (8, 16, 32, 64)))
        for sc in self.cfg.staircases.values():
            out.append((sc.id, by_id[sc.loop], sc.N))
        return out

    def ledger(self, spec: CycleSpec) -> CycleLedger:
        if spec.id not in self._ledgers:
            try:
                self._ledgers[spec.id] = run_cycle(
                    spec, self.roster, self.ss, wss_mode=self.cfg.wss_mode,
                    closure_rtol=self.tol["closure"])
            except ThermoError as exc:
                self._ledgers[spec.id] = exc
        res = self._ledgers[spec.id]
        if isinstance(res, Exception):
            raise res
        return res

    def functionals(self, loop) -> P.LoopFunctionals:
        if loop.id not in self._loopf:
            try:
                self._loopf[loop.id] = P.loop_functionals(loop, self.roster, self.ss)
            except ThermoError as exc:
                self._loopf[loop.id] = exc
        res = self._loopf[loop.id]
        if isinstance(res, Exception):
            raise res
        return res

    def guarded(self, rid: str, fn: Callable[[], Iterable[ResidualReport]]) -> list[ResidualReport]:
        try:
            return list(fn())
        except ThermoError as exc:
            msg = f"{rid}: {type(exc).__name__}: {exc}"
            self.errors.append(msg)
            return [ResidualReport(f"{rid}/error", "asserted", "execution", math.nan, math.nan,
                                   "fail")]

    # suites
    def suite_carnot(self) -> list[ResidualReport]:
        rows = []
        q2 = self.cfg.corrupt_q2
        for spec in self.cycle_specs:
            def one(spec=spec):
                L = self.ledger(spec)
                if q2 is not None:
                    L = corrupt_ledger(L, q2)
                base = f"carnot/{spec.id}"
                scale = abs(L.Q1_tot / L.T1)
                yield _le(f"{base}/carnot_residual", "carnot_condition",
                          _rel(carnot_residual(L), scale), self.tol["carnot"])
                yield _le(f"{base}/first_law", "first_law_closure",
                          _rel(L.first_law_residual, L.first_law_scale), self.tol["first_law"])
                yield _le(f"{base}/hypersystem_balance", "hypersystem_energy_balance",
                          _rel(L.hyper_first_law_residual, L.first_law_scale),
                          self.tol["first_law"])
                yield _le(f"{base}/closure_gap", "cycle_closure", L.closure_gap,
                          self.tol["closure"])
            rows += self.guarded(f"carnot/{spec.id}", one)
        for spec in self.cfg.cycles.values():
            rows += self.guarded(f"carnot/{spec.id}/reversal", lambda spec=spec: self._reversal(spec))
        rows += self.guarded("carnot/composite", self._composite)
        return rows

    def _reversal(self, spec: CycleSpec):
        fwd = self.ledger(spec)
        rev = run_cycle(reverse_cycle(spec, self.roster, self.ss), self.roster, self.ss,
                        wss_mode=self.cfg.wss_mode, closure_rtol=self.tol["closure"])
        pairs = [(fwd.W_tot, rev.W_tot), (fwd.Q1_tot, rev.Q1_tot), (fwd.Q2_tot, rev.Q2_tot),
                 (fwd.dU_conv, rev.dU_conv), (fwd.E_supply, rev.E_supply)]
        worst = max(abs(a + b) for a, b in pairs)
        yield _le(f"carnot/{spec.id}/reversal", "reversal_symmetry",
                  _rel(worst, fwd.first_law_scale), self.tol["reversal"])

    def composite_parts(self) -> tuple[list[CycleLedger], list]:
        """A C_iso cycle flanked by two closed Carnot cycles on its adiabats."""
        roster, ss = self.roster, self.ss
        m = tuple(1.0 if i == 0 else 0.0 for i in range(len(roster)))
        S = build_cycle("C_iso", roster, 1.0, m, 400.0, 300.0, 2.0, 0, 1e-3, id="S")
        LS = self.ledger(S)
        legs = {l.label: l for l in LS.legs}
        bc, da = legs["bc"], legs["da"]
        S1 = carnot_sharing_adiabat(bc.start, bc.end, 400.0, 300.0, 1.5, "right", "S1", "r:")
        S2 = carnot_sharing_adiabat(da.end, da.start, 400.0, 300.0, 1.5, "left", "S2", "l:")
        ledgers = [LS, self.ledger(S1), self.ledger(S2)]
        shared = [((0, "bc"), (1, "r:ch")), ((0, "da"), (2, "l:hc"))]
        return ledgers, shared

    def _composite(self):
        ledgers, shared = self.composite_parts()
        comp = concatenate(ledgers, shared)
        L = comp.ledger
        scale = abs(L.Q1_tot / L.T1)
        yield _le("carnot/composite/carnot_residual", "concatenation_carnot",
                  _rel(carnot_residual(L), scale), len(ledgers) * self.tol["carnot"])
        yield _le("carnot/composite/additivity", "concatenation_additivity",
                  _rel(clausius_sum(L) - comp.component_residual_sum, scale),
                  self.tol["concatenation"])
        yield _le("carnot/composite/shared_leg_cancellation", "concatenation_shared_legs",
                  comp.shared_cancellation, self.tol["concatenation"])

    def suite_virtual_work(self) -> list[ResidualReport]:
        rows = []
        for spec in self.cycle_specs:
            def one(spec=spec):
                L = self.ledger(spec)
                vw = virtual_work(L)
                base = f"virtual-work/{spec.id}"
                yield _le(f"{base}/per_cycle", "virtual_work_cycle",
                          _rel(vw.residual, abs(vw.W_vir)), self.tol["virtual_work"])
                yield _measured(f"{base}/system_reading", "virtual_work_system_reading",
                                vw.residual_sys)
            rows += self.guarded(f"virtual-work/{spec.id}", one)
        rows += self.guarded("virtual-work/family", self._family)
        return rows

    def family_specs(self) -> list[list[CycleSpec]]:
        return [build_open_family(self.roster, self.ss, dm=dm, species=0,
                                  fid=f"family/dm={dm:+g}")
                for dm in (1e-3, -1e-3, 1e-2)]

    def _family(self):
        for fam in self.family_specs():
            fid = fam[0].id.rsplit("/", 1)[0]
            ledgers = run_open_family(fam, self.roster, self.ss, self.cfg.wss_mode,
                                      self.tol["closure"])
            for L in ledgers:
                vw = virtual_work(L)
                yield _measured(f"virtual-work/{L.id}/per_cycle", "virtual_work_cycle",
                                _rel(vw.residual, abs(vw.W_vir)))
            agg = virtual_work_family(ledgers)
            yield _le(f"virtual-work/{fid}/aggregate", "virtual_work_family",
                      _rel(agg.residual + agg.sum_dU, agg.sum_abs_W_vir),
                      self.tol["virtual_work_family"])

    def suite_loops(self) -> list[ResidualReport]:
        rows = []
        k_id = self.tol["identity_factor"]
        for loop in self.loops:
            def one(loop=loop):
                F = self.functionals(loop)
                base = f"loops/{loop.id}"
                yield _le(f"{base}/total_entropy", "loop_total_entropy",
                          _rel(F.I_tot, F.abs_tot), self.tol["loop_exactness"])
                yield _le(f"{base}/decomposition", "entropy_decomposition",
                          abs(F.decomposition_gap), k_id * F.bound)
                yield _le(f"{base}/product_rule", "convected_product_rule",
                          abs(F.product_gap), k_id * F.bound)
                if isinstance(loop, P.ScalingLoop):
                    yield _le(f"{base}/scaling_diathermal", "scaling_loop", abs(F.I_dia), F.bound)
                    yield _le(f"{base}/scaling_gibbs_duhem", "scaling_loop", abs(F.I_gd), F.bound)
                else:
                    yield _measured(f"{base}/diathermal_entropy", "diathermal_entropy_claim",
                                    F.I_dia, F.bound)
                    yield _measured(f"{base}/gibbs_duhem", "gibbs_duhem_claim", F.I_gd, F.bound)
                if isinstance(loop, P.PlanarPolarLoop):
                    area, _ = P.green_area_oracle(loop, self.roster)
                    yield _le(f"{base}/green_oracle", "green_area_oracle",
                              _rel(F.I_dia - area, abs(area)), self.tol["green"])
            rows += self.guarded(f"loops/{loop.id}", one)
        return rows

    def suite_work_function(self) -> list[ResidualReport]:
        rows = []
        Ts = (150.0, 300.0, 600.0, 900.0, 1200.0)
        ps = (1e4, 3e4, 1e5, 3e5, 1e6)
        for sp in self.roster:
            def one(sp=sp):
                gaps = []
                for T, p in itertools.product(Ts, ps):
                    w_pt = work_state_function_by_path(sp, self.ss, T, p, CanonicalPath.PT)
                    w_tp = work_state_function_by_path(sp, self.ss, T, p, CanonicalPath.TP)
                    yield _le(f"work-function/{sp.id}/T={T:g}/p={p:g}/work_function",
                              "work_state_function", abs(w_pt - w_tp) / max(1.0, abs(w_pt)),
                              self.tol["work_function"])
                    if T != self.ss.T0 and p != self.ss.p0:
                        gaps.append(abs(formation_work(sp, self.ss, T, p, CanonicalPath.PT)
                                        - formation_work(sp, self.ss, T, p, CanonicalPath.TP)))
                yield _ge(f"work-function/{sp.id}/formation_path_dependence", "formation_work_inexact",
                          min(gaps), self.tol["formation_gap_min"])
            rows += self.guarded(f"work-function/{sp.id}", one)
        return rows

    def reciprocity_states(self) -> list[SystemState]:
        n = len(self.roster)
        rng = _rng(self.cfg.seed, "reciprocity")
        out = [SystemState(400.0, 1.0, tuple(1.0 for _ in range(n)))]
        for _ in range(3):
            out.append(SystemState(float(rng.uniform(250, 900)), float(rng.uniform(0.3, 3)),
                                   tuple(float(x) for x in rng.uniform(0.2, 2.0, n))))
        return out

    def suite_reciprocity(self) -> list[ResidualReport]:
        rows = []
        for k, st in enumerate(self.reciprocity_states()):
            def one(st=st, k=k):
                for which in ("heat", "work"):
                    base = f"reciprocity/state{k}/{which}"
                    r = reciprocity_check(st, self.roster, self.ss, which)
                    yield _le(f"{base}/asymmetry", f"reciprocity_{which}", r.max_relative,
                              self.tol["reciprocity"])
                    coarse = reciprocity_check(st, self.roster, self.ss, which, rel_step=1e-2)
                    fine = reciprocity_check(st, self.roster, self.ss, which, rel_step=5e-3)
                    yield _ge(f"{base}/step_halving_ratio", "reciprocity_convergence",
                              coarse.max_asymmetry / fine.max_asymmetry
                              if fine.max_asymmetry > 0 else math.inf,
                              self.tol["reciprocity_shrink"])
            rows += self.guarded(f"reciprocity/state{k}", one)
        return rows

    def suite_staircase(self) -> list[ResidualReport]:
        rows = []
        for sid, loop, Ns in self.staircases:
            def one(sid=sid, loop=loop, Ns=Ns):
                smooth = self.functionals(loop)
                results, table = P.staircase_refine(loop, Ns, self.roster, self.ss, smooth)
                base = f"staircase/{sid}"
                for st, row in zip(results, table):
                    self.convergence.append((sid, row))
                    nb = f"{base}/N={row.N:04d}"
                    yield _measured(f"{nb}/error_diathermal", "staircase_error", row.err_dia)
                    yield _le(f"{nb}/total_entropy", "staircase_total_entropy",
                              _rel(st.I_tot, abs(st.I_dia) + abs(st.I_conv)),
                              self.tol["loop_exactness"])
                    mscale = max(loop.center[2:])
                    yield _le(f"{nb}/mass_reconstruction", "staircase_mass_steps",
                              max(abs(x) for x in st.mass_reconstruction) / mscale, 1e-12)
                    if math.isfinite(row.ratio_dia):
                        yield _ge(f"{nb}/refinement_ratio", "staircase_convergence",
                                  row.ratio_dia, self.tol["staircase_ratio"])
            rows += self.guarded(f"staircase/{sid}", one)
        rows += self.guarded("staircase/single-cycle", self._single_cycle)
        return rows

    def _single_cycle(self):
        m = tuple(1.0 if i == 0 else 0.0 for i in range(len(self.roster)))
        spec = build_cycle("C_comb", self.roster, 1.0, m, 400.0, 300.0, 2.0, 0, 1e-3,
                           id="staircase/single-cycle")
        L = self.ledger(spec)
        st = P.staircase_from_legs(L.legs)
        scale = abs(L.Q1_tot / L.T1)
        yield _le("staircase/single-cycle/ledger_match", "staircase_single_cycle",
                  _rel(st.I_tot - clausius_sum(L), scale), 1e-12)

    def scaling_states(self) -> list[SystemState]:
        n = len(self.roster)
        rng = _rng(self.cfg.seed, "scaling")
        return [SystemState(float(rng.uniform(200, 1200)), float(rng.uniform(0.1, 10)),
                            tuple(float(x) for x in rng.uniform(0.05, 5.0, n)))
                for _ in range(10)]

    def suite_scaling(self) -> list[ResidualReport]:
        rows = []
        for k, st in enumerate(self.scaling_states()):
            def one(st=st, k=k):
                direct, scaled = P.convected_entropy(st, self.roster, self.ss)
                base = f"scaling/state{k:02d}"
                yield _le(f"{base}/growth_route", "convected_entropy_scaling",
                          _rel(direct - scaled, abs(direct)), self.tol["scaling_entropy"])
                big, _ = P.convected_entropy(st.scaled(2.5), self.roster, self.ss)
                yield _le(f"{base}/extensivity", "convected_entropy_extensive",
                          _rel(big - 2.5 * direct, abs(big)), self.tol["scaling_entropy"])
            rows += self.guarded(f"scaling/state{k:02d}", one)
        for loop in self.loops:
            if not isinstance(loop, P.ScalingLoop):
                continue
            def two(loop=loop):
                F = self.functionals(loop)
                yield _le(f"scaling/{loop.id}/diathermal", "scaling_loop", abs(F.I_dia), F.bound)
                yield _le(f"scaling/{loop.id}/gibbs_duhem", "scaling_loop", abs(F.I_gd), F.bound)
            rows += self.guarded(f"scaling/{loop.id}", two)
        return rows

    def suite_adjudication(self) -> list[ResidualReport]:
        rows = []
        for loop in self.loops:
            if isinstance(loop, P.ScalingLoop):
                continue
            def one(loop=loop):
                F = self.functionals(loop)
                yield _measured(f"adjudication/{loop.id}/diathermal_entropy",
                                "diathermal_entropy_claim", F.I_dia, F.bound)
                yield _measured(f"adjudication/{loop.id}/gibbs_duhem", "gibbs_duhem_claim",
                                F.I_gd, F.bound)
            rows += self.guarded(f"adjudication/{loop.id}", one)
        for k, st in enumerate(self.reciprocity_states()):
            def two(st=st, k=k):
                for h in (1e-3, 5e-4):
                    for r in P.partials_report(st, self.roster, self.ss, h=h):
                        base = f"adjudication/state{k}/h={h:g}/{r.species}"
                        yield _measured(f"{base}/mass_partial_as_printed",
                                        "entropy_mass_partial", r.residual_a)
                        yield _measured(f"{base}/mass_partial_with_injection_heat",
                                        "entropy_mass_partial", r.residual_b)
                disp = 1e-6 * st.as_array()
                for mode in WSS_MODES:
                    rep = P.local_energy_report(st, self.roster, self.ss, disp, mode)
                    base = f"adjudication/state{k}/{mode}"
                    yield _measured(f"{base}/local_energy_residual", "local_energy_differential",
                                    rep.residual)
                    for sp, d in zip(self.roster, rep.mu_minus_h):
                        yield _measured(f"{base}/{sp.id}/mu_minus_h", "chemical_potential", d)
            rows += self.guarded(f"adjudication/state{k}", two)
        return rows

    def run(self, suite: str) -> list[ResidualReport]:
        names = resolve_suite(self.cfg, suite)
        rows: list[ResidualReport] = []
        for name in names:
            rows += getattr(self, "suite_" + name.replace("-", "_"))()
        return sorted(rows, key=lambda r: r.id)


def build_open_family(roster, ss, T1: float = 400.0, T2: float = 300.0, r: float = 2.0,
                      dm: float = 1e-3, species: int = 0, fid: str = "family") -> list[CycleSpec]:
    """Two open cycles that together form a closed loop.

    The first injects ``dm`` on its hot isotherm and returns to T1 at a new
    state; the second extracts ``dm`` on its cold isotherm and lands back on
    the first cycle's start. Neither is closed on its own.
    """
    K = SegmentKind
    m0 = tuple(1.0 if i == species else 0.5 for i in range(len(roster)))
    a = SystemState(T1, 1.0, m0)
    Vd = _adiabat_volume(1.0, T1, T2, heat_capacity(a, roster), gas_constant(a, roster))
    first = CycleSpec(CycleKind.C_ISO, a, (
        SegmentSpec(K.ISOTHERM, V=r ** 0.5, label="aa'"),
        SegmentSpec(K.ISO_EXCHANGE, V=r, species=species, dm=dm, label="a'b"),
        SegmentSpec(K.ADIABAT, T=T2, label="bc"),
        SegmentSpec(K.ISOTHERM, V=1.2 * Vd, label="cd"),
        SegmentSpec(K.ADIABAT, T=T1, label="da"),
    ), T1, T2, f"{fid}/inject")
    a1 = integrate_path(a, first.segments, roster, ss)[-1].end
    second = CycleSpec(CycleKind.C_ISO, a1, (
        SegmentSpec(K.ISOTHERM, V=r * a1.V, label="ab"),
        SegmentSpec(K.ADIABAT, T=T2, label="bc"),
        SegmentSpec(K.ISOTHERM, V=1.1 * Vd, label="cc'"),
        SegmentSpec(K.ISO_EXCHANGE, V=Vd, species=species, dm=-dm, label="c'd"),
        SegmentSpec(K.ADIABAT, T=T1, label="da"),
    ), T1, T2, f"{fid}/extract")
    return [first, second]


def run_open_family(family: Sequence[CycleSpec], roster, ss, wss_mode: str = "flow-work",
                    closure_rtol: float = 1e-9) -> list[CycleLedger]:
    """Run cycles head to tail; only the family as a whole must close."""
    out = []
    for spec in family:
        legs = integrate_path(spec.start, spec.segments, roster, ss, wss_mode=wss_mode)
        out.append(ledger_from_legs(legs, spec.T1, spec.T2, spec.kind.value, 0.0, spec.id))
    for prev, nxt in zip(out, out[1:] + out[:1]):
        gap, _ = _closure_gap(prev.legs[-1].end, nxt.legs[0].start)
        if gap > closure_rtol:
            raise ClosureError(f"family {prev.id!r} -> {nxt.id!r} is not head-to-tail "
                               f"within {closure_rtol:g}: gap {gap:.3e}")
    return out


def resolve_suite(cfg: ExperimentConfig, suite: str) -> list[str]:
    if suite == "all":
        return [s for s in SUITES if s != "all"]
    if suite in SUITES:
        return [suite]
    if suite in cfg.suites:
        names = []
        for s in cfg.suites[suite]:
            for n in resolve_suite(cfg, s):
                if n not in names:
                    names.append(n)
        return names
    raise ConfigError(f"unknown suite {suite!r}; built-in suites: {', '.join(SUITES)}")


def run_suite(cfg: ExperimentConfig, suite: str) -> list[ResidualReport]:
    return Runner(cfg).run(suite)


# --- report emission -----------------------------------------------------

COLUMNS = ("id", "kind", "tag", "value", "bound", "verdict")


def to_csv(rows: Sequence[ResidualReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r.id, r.kind, r.tag, _fmt(r.value), _fmt(r.bound), r.verdict])
    return buf.getvalue()


def _json_num(x: float) -> str:
    return _fmt(x) if math.isfinite(x) else "null"


def to_jsonl(rows: Sequence[ResidualReport]) -> str:
    lines = []
    for r in rows:
        lines.append(
            "{" + ", ".join([
                f'"id": {json.dumps(r.id)}', f'"kind": {json.dumps(r.kind)}',
                f'"tag": {json.dumps(r.tag)}', f'"value": {_json_num(r.value)}',
                f'"bound": {_json_num(r.bound)}', f'"verdict": {json.dumps(r.verdict)}',
            ]) + "}"
        )
    return "".join(line + "\n" for line in lines)


def to_table(rows: Sequence[ResidualReport]) -> str:
    width = max([len(r.id) for r in rows] + [2])
    out = [f"{'id':<{width}}  {'kind':<11}  {'tag':<30}  {'value':>12}  {'bound':>12}  verdict"]
    for r in rows:
        out.append(f"{r.id:<{width}}  {r.kind:<11}  {r.tag:<30}  {r.value:>12.4e}  "
                   f"{r.bound:>12.4e}  {r.verdict}")
    n_fail = sum(r.failed for r in rows)
    n_meas = sum(r.verdict == "measured" for r in rows)
    out.append(f"{len(rows)} rows: {len(rows) - n_fail - n_meas} pass, {n_fail} fail, "
               f"{n_meas} measured")
    return "\n".join(out) + "\n"


def convergence_csv(rows: Sequence[tuple[str, P.ConvergenceRow]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["staircase", "N", "I_dia", "I_conv", "I_tot", "err_dia", "err_conv", "err_tot",
                "ratio_dia"])
    for sid, r in sorted(rows, key=lambda x: (x[0], x[1].N)):
        w.writerow([sid, r.N] + [_fmt(v) for v in (r.I_dia, r.I_conv, r.I_tot, r.err_dia,
                                                  r.err_conv, r.err_tot, r.ratio_dia)])
    return buf.getvalue()


def write_reports(out: str | Path, rows: Sequence[ResidualReport],
                  convergence: Sequence[tuple[str, P.ConvergenceRow]] = ()) -> list[Path]:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    written = [d / "report.csv", d / "report.jsonl"]
    written[0].write_text(to_csv(rows), encoding="utf-8")
    written[1].write_text(to_jsonl(rows), encoding="utf-8")
    if convergence:
        p = d / "convergence.csv"
        p.write_text(convergence_csv(convergence), encoding="utf-8")
        written.append(p)
    return written


def exit_code(rows: Sequence[ResidualReport]) -> int:
    return 1 if any(r.failed for r in rows) else 0
