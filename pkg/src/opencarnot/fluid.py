"""Ideal-gas mixture property model.

Every species is a calorically perfect ideal gas. The mixture is ideal
(Dalton partial pressures, additive energies), so each species behaves as if
it alone occupied the full volume at the mixture temperature.

Entropies are "convected" entropies: entropy per unit mass of the pure
species at (T, p) measured from the standard state (T0, p0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError, InvariantViolation, RosterError

__all__ = [
    "StandardState",
    "SpeciesSpec",
    "SystemState",
    "PropertyBundle",
    "SPEC_A",
    "DEFAULT_STANDARD_STATE",
    "partial_pressure",
    "partial_pressures",
    "total_pressure",
    "specific_convected_entropy",
    "convected_entropy_by_quadrature",
    "mixture_specific_entropy",
    "pure_specific_energy",
    "mixture_energy",
    "heat_capacity",
    "gas_constant",
    "properties",
]


def _positive_finite(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class StandardState:
    T0: float = 300.0
    p0: float = 1.0e5

    def __post_init__(self) -> None:
        _positive_finite("T0", self.T0)
        _positive_finite("p0", self.p0)


@dataclass(frozen=True)
class SpeciesSpec:
    """Constants of one pure substance.

    ``cp`` is always derived from the Mayer relation; passing an inconsistent
    value is an error rather than being silently overwritten.
    """

    id: str
    Rs: float
    cv: float
    Uss: float = 0.0
    cp: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        _positive_finite("Rs", self.Rs)
        _positive_finite("cv", self.cv)
        if not math.isfinite(self.Uss):
            raise DomainError(f"Uss must be finite, got {self.Uss!r}")
        cp = self.cv + self.Rs
        if math.isnan(self.cp):
            object.__setattr__(self, "cp", cp)
        elif self.cp != cp:
            raise DomainError(
                f"species {self.id!r}: cp={self.cp} violates cp = cv + Rs = {cp}"
            )

    def specific_volume(self, T: float, p: float) -> float:
        return self.Rs * T / p


SPEC_A = SpeciesSpec("A", Rs=100.0, cv=250.0, Uss=0.0)
DEFAULT_STANDARD_STATE = StandardState(300.0, 1.0e5)


@dataclass(frozen=True)
class SystemState:
    """Thermodynamic state (T, V, m_1..m_n) of the open system."""

    T: float
    V: float
    m: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "m", tuple(float(x) for x in self.m))
        _positive_finite("T", self.T)
        _positive_finite("V", self.V)
        if not self.m:
            raise DomainError("state needs at least one species mass")
        for i, mi in enumerate(self.m):
            if not (math.isfinite(mi) and mi >= 0.0):
                raise DomainError(f"m[{i}] must be finite and >= 0, got {mi!r}")
        if not any(mi > 0.0 for mi in self.m):
            raise DomainError("at least one species mass must be positive")

    def scaled(self, k: float) -> "SystemState":
        """Same intensive state with every extensive coordinate scaled by k."""
        _positive_finite("k", k)
        return SystemState(self.T, k * self.V, tuple(k * mi for mi in self.m))

    def replace(self, T: float | None = None, V: float | None = None,
                m: Sequence[float] | None = None) -> "SystemState":
        return SystemState(
            self.T if T is None else T,
            self.V if V is None else V,
            self.m if m is None else tuple(m),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.T, self.V, *self.m])


@dataclass(frozen=True)
class PropertyBundle:
    p_total: float
    p_i: tuple[float, ...]
    u_i: tuple[float, ...]
    h_i: tuple[float, ...]
    s_i: tuple[float, ...]
    U: float


def _check_roster(state: SystemState, roster: Sequence[SpeciesSpec]) -> None:
    if len(state.m) != len(roster):
        raise RosterError(
            f"state has {len(state.m)} masses but roster has {len(roster)} species"
        )


def partial_pressure(state: SystemState, roster: Sequence[SpeciesSpec], i: int) -> float:
    _check_roster(state, roster)
    if not 0 <= i < len(roster):
        raise RosterError(f"species index {i} outside roster of size {len(roster)}")
    return state.m[i] * roster[i].Rs * state.T / state.V


def partial_pressures(state: SystemState, roster: Sequence[SpeciesSpec]) -> tuple[float, ...]:
    _check_roster(state, roster)
    return tuple(mi * sp.Rs * state.T / state.V for mi, sp in zip(state.m, roster))


def total_pressure(state: SystemState, roster: Sequence[SpeciesSpec]) -> float:
    return math.fsum(partial_pressures(state, roster))


def gas_constant(state: SystemState, roster: Sequence[SpeciesSpec]) -> float:
    """Extensive gas constant sum(m_i Rs_i), J/K."""
    return math.fsum(mi * sp.Rs for mi, sp in zip(state.m, roster))


def heat_capacity(state: SystemState, roster: Sequence[SpeciesSpec]) -> float:
    """Constant-volume heat capacity sum(m_i cv_i), J/K."""
    return math.fsum(mi * sp.cv for mi, sp in zip(state.m, roster))


def specific_convected_entropy(spec: SpeciesSpec, ss: StandardState, T: float, p: float,
                               verify: bool = False) -> float:
    """Entropy per unit mass of pure ``spec`` at (T, p) relative to (T0, p0).

    With ``verify=True`` the closed form is checked against
    :func:`convected_entropy_by_quadrature` and an :class:`InvariantViolation`
    is raised on disagreement beyond 1e-8 relative.
    """
    _positive_finite("T", T)
    _positive_finite("p", p)
    thermal = spec.cp * math.log(T / ss.T0)
    mechanical = -spec.Rs * math.log(p / ss.p0)
    value = thermal + mechanical
    if verify:
        quad = convected_entropy_by_quadrature(spec, ss, T, p)
        scale = abs(thermal) + abs(mechanical)
        if abs(quad - value) > 1e-8 * scale:
            raise InvariantViolation(
                f"convected entropy routes disagree: closed={value!r} quadrature={quad!r}"
            )
    return value


def _reversible_heat_over_T(spec: SpeciesSpec, p: float, v: float,
                            dp: float, dv: float) -> float:
    # delta q = (cp/Rs) p dv + (cv/Rs) v dp, per unit mass; T = p v / Rs
    dq = (spec.cp / spec.Rs) * p * dv + (spec.cv / spec.Rs) * v * dp
    return dq / (p * v / spec.Rs)


def convected_entropy_by_quadrature(spec: SpeciesSpec, ss: StandardState,
                                    T: float, p: float) -> float:
    """Integrate dq/T along isobar (p0, T0 -> T) then isotherm (T, p0 -> p).

    Both legs are parametrised in the log of the moving coordinate so wide
    ranges stay well conditioned for the adaptive rule.
    """
    _positive_finite("T", T)
    _positive_finite("p", p)
    v0 = spec.specific_volume(ss.T0, ss.p0)
    v1 = spec.specific_volume(T, ss.p0)
    lv0, lv1 = math.log(v0), math.log(v1)

    def isobar(lam: float) -> float:
        v = math.exp(lv0 + lam * (lv1 - lv0))
        return _reversible_heat_over_T(spec, ss.p0, v, 0.0, v * (lv1 - lv0))

    lp0, lp1 = math.log(ss.p0), math.log(p)

    def isotherm(lam: float) -> float:
        pp = math.exp(lp0 + lam * (lp1 - lp0))
        dp = pp * (lp1 - lp0)
        v = spec.Rs * T / pp
        dv = -v / pp * dp
        return _reversible_heat_over_T(spec, pp, v, dp, dv)

    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    leg1 = integrate.quad(isobar, 0.0, 1.0, **opts)[0] if v1 != v0 else 0.0
    leg2 = integrate.quad(isotherm, 0.0, 1.0, **opts)[0] if p != ss.p0 else 0.0
    return leg1 + leg2


def mixture_specific_entropy(state: SystemState, roster: Sequence[SpeciesSpec],
                             ss: StandardState, i: int) -> float:
    """Specific entropy of species i written in (T, specific volume) form."""
    _check_roster(state, roster)
    sp = roster[i]
    if state.m[i] <= 0.0:
        raise DomainError(f"species {sp.id!r} absent: specific entropy undefined")
    v_i = state.V / state.m[i]
    v0 = sp.Rs * ss.T0 / ss.p0
    return sp.cv * math.log(state.T / ss.T0) + sp.Rs * math.log(v_i / v0)


def pure_specific_energy(spec: SpeciesSpec, ss: StandardState, T: float) -> tuple[float, float]:
    """Return (u, h) per unit mass at temperature T."""
    _positive_finite("T", T)
    u = spec.Uss + spec.cv * (T - ss.T0)
    return u, u + spec.Rs * T


def mixture_energy(state: SystemState, roster: Sequence[SpeciesSpec],
                   ss: StandardState) -> float:
    _check_roster(state, roster)
    return math.fsum(
        mi * pure_specific_energy(sp, ss, state.T)[0] for mi, sp in zip(state.m, roster)
    )


def properties(state: SystemState, roster: Sequence[SpeciesSpec],
               ss: StandardState) -> PropertyBundle:
    p_i = partial_pressures(state, roster)
    u_i, h_i, s_i = [], [], []
    for mi, sp, pi in zip(state.m, roster, p_i):
        u, h = pure_specific_energy(sp, ss, state.T)
        u_i.append(u)
        h_i.append(h)
        s_i.append(specific_convected_entropy(sp, ss, state.T, pi) if mi > 0 else math.nan)
    U = math.fsum(mi * u for mi, u in zip(state.m, u_i))
    return PropertyBundle(math.fsum(p_i), p_i, tuple(u_i), tuple(h_i), tuple(s_i), U)
