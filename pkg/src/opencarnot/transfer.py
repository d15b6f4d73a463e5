"""Heat pumps, membranes and supply cells: per-mass transfer ledger.

Sign convention: every heat is *absorbed by* and every work is *done on* the
body named in the function's docstring. Negative values flow the other way.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import EmptySpeciesError, InvariantViolation, RosterError, StepSizeError
from .fluid import (
    SpeciesSpec,
    StandardState,
    SystemState,
    partial_pressure,
    pure_specific_energy,
    specific_convected_entropy,
)

WssMode = Literal["flow-work", "zero"]
WSS_MODES: tuple[str, ...] = ("flow-work", "zero")


class CanonicalPath(enum.Enum):
    """Reversible route from the standard state to (T, p)."""

    PT = "PT"  # isobaric at p0 from T0 to T, then isothermal at T from p0 to p
    TP = "TP"  # isothermal at T0 from p0 to p, then isobaric at p from T0 to T


def _species_index(roster: Sequence[SpeciesSpec], i: int) -> SpeciesSpec:
    if not 0 <= i < len(roster):
        raise RosterError(f"species index {i} outside roster of size {len(roster)}")
    return roster[i]


def membrane_injection_work(state: SystemState, roster: Sequence[SpeciesSpec],
                            i: int, dm: float) -> float:
    """Flow work done on the system pushing ``dm`` of species i through its membrane."""
    sp = _species_index(roster, i)
    if dm < 0.0 and state.m[i] <= 0.0:
        raise EmptySpeciesError(f"cannot extract species {sp.id!r}: none present")
    return sp.Rs * state.T * dm


def membrane_injection_heat(state: SystemState, roster: Sequence[SpeciesSpec],
                            i: int, dm: float) -> float:
    """Heat absorbed by the system during isothermal, constant-volume injection.

    First-law closure at fixed T and V: the system gains u dm, the stream
    brings u dm plus flow work Rs T dm, so Rs T dm must leave as heat.
    """
    sp = _species_index(roster, i)
    if dm < 0.0 and state.m[i] <= 0.0:
        raise EmptySpeciesError(f"cannot extract species {sp.id!r}: none present")
    return -sp.Rs * state.T * dm


def supply_cell_work_per_mass(spec: SpeciesSpec, ss: StandardState,
                              wss_mode: WssMode = "flow-work") -> float:
    if wss_mode == "flow-work":
        return spec.Rs * ss.T0
    if wss_mode == "zero":
        return 0.0
    raise ValueError(f"unknown wss_mode {wss_mode!r}; expected one of {WSS_MODES}")


def supply_cell_extraction_work(spec: SpeciesSpec, ss: StandardState, dm: float,
                                wss_mode: WssMode = "flow-work") -> float:
    """Work done by the environment to withdraw ``dm`` from the supply cell."""
    return supply_cell_work_per_mass(spec, ss, wss_mode) * dm


def pump_heat(spec: SpeciesSpec, ss: StandardState, T: float, p: float, dm: float,
              T_res: float | None = None) -> float:
    """Heat given up by the reservoir to condition ``dm`` from ss to (T, p).

    The pump draws from the reservoir at ``T_res`` (defaults to T, the
    isothermal case); reversibility fixes the drawn heat at T_res * ds * dm.
    """
    T_res = T if T_res is None else T_res
    return T_res * specific_convected_entropy(spec, ss, T, p) * dm


def _legs(ss: StandardState, T: float, p: float, path: CanonicalPath):
    if path is CanonicalPath.PT:
        return [("isobar", ss.p0, ss.T0, T), ("isotherm", T, ss.p0, p)]
    if path is CanonicalPath.TP:
        return [("isotherm", ss.T0, ss.p0, p), ("isobar", p, ss.T0, T)]
    raise ValueError(f"unknown canonical path {path!r}")


def _leg_work_heat(spec: SpeciesSpec, leg) -> tuple[float, float]:
    kind, fixed, a, b = leg
    if kind == "isobar":
        # w = -p (v_b - v_a); q = cp (T_b - T_a)
        return -spec.Rs * (b - a), spec.cp * (b - a)
    w = spec.Rs * fixed * math.log(b / a)
    return w, -w


def formation_work(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
                   path: CanonicalPath = CanonicalPath.PT) -> float:
    """Work per unit mass done on an element taken from ss to (T, p) along ``path``."""
    specific_convected_entropy(spec, ss, T, p)  # domain check
    return math.fsum(_leg_work_heat(spec, leg)[0] for leg in _legs(ss, T, p, path))


def path_heat(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
              path: CanonicalPath = CanonicalPath.PT) -> float:
    """Heat per unit mass absorbed by the element along ``path``."""
    specific_convected_entropy(spec, ss, T, p)
    return math.fsum(_leg_work_heat(spec, leg)[1] for leg in _legs(ss, T, p, path))


def pump_work(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
              path: CanonicalPath = CanonicalPath.PT, T_res: float | None = None) -> float:
    """Work per unit mass delivered to the environment by the pumping machinery."""
    T_res = T if T_res is None else T_res
    ds = specific_convected_entropy(spec, ss, T, p)
    return T_res * ds - path_heat(spec, ss, T, p, path)


def work_state_function_by_path(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
                                path: CanonicalPath) -> float:
    return formation_work(spec, ss, T, p, path) - pump_work(spec, ss, T, p, path)


def work_state_function(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
                        rtol: float = 1e-10) -> float:
    """Formation work minus pump work, per unit mass; must not depend on the path.

    Raises :class:`InvariantViolation` when the PT and TP routes disagree.
    """
    w_pt = work_state_function_by_path(spec, ss, T, p, CanonicalPath.PT)
    w_tp = work_state_function_by_path(spec, ss, T, p, CanonicalPath.TP)
    if abs(w_pt - w_tp) > rtol * max(1.0, abs(w_pt)):
        raise InvariantViolation(
            f"work state function is path dependent: PT={w_pt!r} TP={w_tp!r}"
        )
    return w_pt


def total_heat_state_function(state: SystemState, roster: Sequence[SpeciesSpec],
                              ss: StandardState) -> float:
    """sum_i T m_i ds_i(T, p_i): heat drawn by pumps to assemble the whole charge."""
    terms = []
    for i, sp in enumerate(roster):
        if state.m[i] > 0.0:
            p_i = partial_pressure(state, roster, i)
            terms.append(state.T * state.m[i] * specific_convected_entropy(sp, ss, state.T, p_i))
    return math.fsum(terms)


def total_work_state_function(state: SystemState, roster: Sequence[SpeciesSpec],
                              ss: StandardState) -> float:
    terms = []
    for i, sp in enumerate(roster):
        if state.m[i] > 0.0:
            p_i = partial_pressure(state, roster, i)
            terms.append(state.m[i] * work_state_function(sp, ss, state.T, p_i))
    return math.fsum(terms)


@dataclass(frozen=True)
class TransferLedgerEntry:
    species: str
    dm: float
    w_inj: float   # on the system, at the membrane
    q_inj: float   # absorbed by the system
    w_cp: float    # by the environment, at the supply cell
    q_pump: float  # drawn from the reservoir
    w_form: float  # on the element
    v_pump: float  # delivered to the environment by the pumps


def transfer_entry(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                   i: int, dm: float, path: CanonicalPath = CanonicalPath.PT,
                   wss_mode: WssMode = "flow-work",
                   T_res: float | None = None) -> TransferLedgerEntry:
    """All transfer terms for moving ``dm`` of species i at the current state."""
    sp = _species_index(roster, i)
    T = state.T
    p_i = partial_pressure(state, roster, i)
    if p_i <= 0.0:
        # an empty species is injected against a vanishing partial pressure;
        # the entropy of the first element diverges, so refuse.
        raise EmptySpeciesError(f"species {sp.id!r} has zero partial pressure")
    return TransferLedgerEntry(
        species=sp.id,
        dm=dm,
        w_inj=membrane_injection_work(state, roster, i, dm),
        q_inj=membrane_injection_heat(state, roster, i, dm),
        w_cp=supply_cell_extraction_work(sp, ss, dm, wss_mode),
        q_pump=pump_heat(sp, ss, T, p_i, dm, T_res),
        w_form=formation_work(sp, ss, T, p_i, path) * dm,
        v_pump=pump_work(sp, ss, T, p_i, path, T_res) * dm,
    )


# --- reciprocity ----------------------------------------------------------

def _central(f: Callable[[np.ndarray], float], x: np.ndarray, k: int, h: float) -> float:
    xp, xm = x.copy(), x.copy()
    xp[k] += h
    xm[k] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def staggered_mixed_partials(f: Callable[[np.ndarray], float], x: np.ndarray,
                             i: int, j: int, hi: float, hj: float) -> tuple[float, float]:
    """Mixed partial estimated in both differentiation orders.

    The outer difference uses twice the inner step, so the two orders use
    different stencils and their disagreement is a genuine O(h^2) measure.
    """
    x = np.asarray(x, dtype=float)
    for k, h in ((i, hi), (j, hj)):
        if not (h > 0.0) or x[k] + h == x[k] or x[k] - h == x[k]:
            raise StepSizeError(f"step {h!r} unresolvable at coordinate {k} = {x[k]!r}")
    d_ij = _central(lambda y: _central(f, y, j, hj), x, i, 2.0 * hi)
    d_ji = _central(lambda y: _central(f, y, i, hi), x, j, 2.0 * hj)
    return d_ij, d_ji


@dataclass(frozen=True)
class ReciprocityResult:
    max_asymmetry: float          # max over pairs of |d_ij - d_ji|
    max_relative: float           # max scaled asymmetry / largest scaled mixed partial
    pairs: dict[tuple[str, str], tuple[float, float]]


def reciprocity_check(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                      which: str = "heat", rel_step: float = 1e-4,
                      h: Sequence[float] | None = None,
                      pairs: Sequence[tuple[int, int]] | None = None) -> ReciprocityResult:
    """Compare both orders of every mixed partial of a state function.

    ``which`` selects the total heat function ("heat") or the total work
    function ("work"); a callable of (T, V, m...) -> float is also accepted.
    Coordinates are ordered (T, V, m_1, ..., m_n).
    """
    if callable(which):
        def F(x):
            return which(SystemState(x[0], x[1], tuple(x[2:])))
    elif which == "heat":
        def F(x):
            return total_heat_state_function(SystemState(x[0], x[1], tuple(x[2:])), roster, ss)
    elif which == "work":
        def F(x):
            return total_work_state_function(SystemState(x[0], x[1], tuple(x[2:])), roster, ss)
    else:
        raise ValueError(f"unknown state function {which!r}")

    x = state.as_array()
    names = ["T", "V"] + [f"m_{sp.id}" for sp in roster]
    steps = np.asarray(h, dtype=float) if h is not None else rel_step * np.abs(x)
    if pairs is None:
        pairs = [(a, b) for a in range(len(x)) for b in range(a + 1, len(x)) if x[a] > 0 and x[b] > 0]
    out: dict[tuple[str, str], tuple[float, float]] = {}
    asym: dict[tuple[int, int], float] = {}
    size: dict[tuple[int, int], float] = {}
    for a, b in pairs:
        d_ab, d_ba = staggered_mixed_partials(F, x, a, b, steps[a], steps[b])
        out[(names[a], names[b])] = (d_ab, d_ba)
        asym[(a, b)] = abs(d_ab - d_ba)
        # in coordinates scaled by the state, so pairs are comparable
        size[(a, b)] = max(abs(d_ab), abs(d_ba)) * abs(x[a] * x[b])
    max_abs = max(asym.values(), default=0.0)
    scale = max(size.values(), default=0.0)
    max_rel = max((asym[k] * abs(x[k[0]] * x[k[1]]) / scale for k in asym), default=0.0) \
        if scale > 0.0 else 0.0
    return ReciprocityResult(max_abs, max_rel, out)
