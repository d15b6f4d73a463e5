"""Closed-path functionals over state space.

Loops are smooth periodic maps s in [0, 1] -> (T, V, m_1..m_n). Their
entropy-like line integrals are evaluated by vector adaptive quadrature so
that all integrands share the same nodes; identities that hold pointwise
between integrands then hold in the quadrature results to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy import integrate, optimize

from .cycles import (
    DEFAULT_RTOL,
    LegRecord,
    SegmentKind,
    SegmentSpec,
    integrate_segment,
)
from .errors import DomainError, IntegratorError, RefinementError, StepSizeError
from .fluid import (
    SpeciesSpec,
    StandardState,
    SystemState,
    gas_constant,
    heat_capacity,
    mixture_energy,
    partial_pressure,
    pure_specific_energy,
    specific_convected_entropy,
)
from .transfer import (
    CanonicalPath,
    WssMode,
    formation_work,
    path_heat,
    supply_cell_work_per_mass,
)

TWO_PI = 2.0 * math.pi


# --- loops ----------------------------------------------------------------

class Curve(Protocol):
    id: str

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """State vector (T, V, m...) and its derivative d/ds at parameter s."""


@dataclass(frozen=True)
class FourierLoop:
    """x_c(s) = center_c * (1 + sum_k a_ck cos(2 pi k s) + b_ck sin(2 pi k s)).

    Coefficients are relative, so bounding sum |a| + |b| below 1 keeps every
    coordinate positive. Rows of ``a``/``b`` follow (T, V, m_1, ...).
    """

    center: tuple[float, ...]
    a: np.ndarray
    b: np.ndarray
    id: str = ""

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float)
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape or a.shape[0] != c.size:
            raise DomainError("Fourier coefficient arrays must be (n_coords, n_harmonics)")
        if c.size < 3 or c[0] <= 0 or c[1] <= 0 or np.any(c[2:] < 0):
            raise DomainError("loop center must have T, V > 0 and masses >= 0")
        bound = np.abs(a).sum(axis=1) + np.abs(b).sum(axis=1)
        if np.any(bound >= 1.0):
            raise DomainError("relative Fourier amplitudes must sum below 1 per coordinate")
        object.__setattr__(self, "center", tuple(c))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "_k", np.arange(1, a.shape[1] + 1))

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        k = self._k
        th = TWO_PI * k * s
        cos, sin = np.cos(th), np.sin(th)
        c = np.asarray(self.center)
        x = c * (1.0 + self.a @ cos + self.b @ sin)
        dx = c * (TWO_PI * (self.b @ (k * cos) - self.a @ (k * sin)))
        return x, dx


@dataclass(frozen=True)
class ScalingLoop:
    """Extensive scaling at frozen intensive state: (V, m) -> k (V, m), T fixed.

    k(s) = 1 + amp (1 - cos 2 pi s) / 2 runs 1 -> 1 + amp -> 1.
    """

    base: SystemState
    amp: float = 1.0
    id: str = ""

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        k = 1.0 + 0.5 * self.amp * (1.0 - math.cos(TWO_PI * s))
        dk = 0.5 * self.amp * TWO_PI * math.sin(TWO_PI * s)
        x0 = self.base.as_array()
        x = x0 * k
        x[0] = x0[0]
        dx = x0 * dk
        dx[0] = 0.0
        return x, dx


@dataclass(frozen=True)
class PlanarPolarLoop:
    """Star-shaped loop in the (T, m_j) plane, other coordinates frozen.

    T = T_c + aT r(phi) cos phi, m_j = m_c + am r(phi) sin phi, phi = 2 pi s,
    with r(phi) = 1 + sum_k (c_k cos k phi + d_k sin k phi). Traversal is
    counter-clockwise with T on the horizontal axis.
    """

    center: SystemState
    species: int
    aT: float
    am: float
    c: tuple[float, ...] = ()
    d: tuple[float, ...] = ()
    id: str = ""

    def __post_init__(self) -> None:
        if len(self.c) != len(self.d):
            raise DomainError("radial harmonic lists must have equal length")
        if sum(abs(x) for x in self.c + self.d) >= 1.0:
            raise DomainError("radial harmonics must keep r(phi) > 0")
        rmax = 1.0 + sum(abs(x) for x in self.c + self.d)
        if self.center.T - self.aT * rmax <= 0.0:
            raise DomainError("loop would reach T <= 0")
        if self.center.m[self.species] - self.am * rmax <= 0.0:
            raise DomainError("loop would reach zero mass")

    def radius(self, phi: float) -> tuple[float, float]:
        r, dr = 1.0, 0.0
        for k, (ck, dk) in enumerate(zip(self.c, self.d), start=1):
            r += ck * math.cos(k * phi) + dk * math.sin(k * phi)
            dr += k * (dk * math.cos(k * phi) - ck * math.sin(k * phi))
        return r, dr

    def point(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        phi = TWO_PI * s
        r, dr = self.radius(phi)
        x = self.center.as_array()
        dx = np.zeros_like(x)
        j = 2 + self.species
        cph, sph = math.cos(phi), math.sin(phi)
        x[0] += self.aT * r * cph
        x[j] += self.am * r * sph
        dx[0] = self.aT * TWO_PI * (dr * cph - r * sph)
        dx[j] = self.am * TWO_PI * (dr * sph + r * cph)
        return x, dx


def random_fourier_loop(rng: np.random.Generator, center: SystemState, n_harmonics: int = 3,
                        amplitude: float = 0.3, vary: Sequence[bool] | None = None,
                        id: str = "") -> FourierLoop:
    """Seeded random smooth loop; per-coordinate relative amplitude <= ``amplitude``."""
    if not 0.0 < amplitude < 1.0:
        raise DomainError("amplitude must lie in (0, 1)")
    c = center.as_array()
    n = c.size
    vary = np.ones(n, bool) if vary is None else np.asarray(vary, bool)
    vary = vary & (c > 0)
    a = rng.uniform(-1.0, 1.0, (n, n_harmonics)) / np.arange(1, n_harmonics + 1)
    b = rng.uniform(-1.0, 1.0, (n, n_harmonics)) / np.arange(1, n_harmonics + 1)
    total = np.abs(a).sum(1) + np.abs(b).sum(1)
    scale = amplitude * rng.uniform(0.3, 1.0, n) / total
    a *= (scale * vary)[:, None]
    b *= (scale * vary)[:, None]
    return FourierLoop(tuple(c), a, b, id)


# --- integrands -----------------------------------------------------------

@dataclass(frozen=True)
class DiathermalHeat:
    dQ_dia: float
    dQ_sys: float
    dQ_inj: tuple[float, ...]


def diathermal_heat_form(state: SystemState, velocity: Sequence[float],
                         roster: Sequence[SpeciesSpec], ss: StandardState) -> DiathermalHeat:
    """dQ_dia = dU + p dV - sum h_i dm_i along a state-space tangent (dT, dV, dm...)."""
    v = np.asarray(velocity, dtype=float)
    if v.size != 2 + len(roster):
        raise DomainError("velocity must be (dT, dV, dm_1..dm_n)")
    dT, dV, dm = v[0], v[1], v[2:]
    T = state.T
    p = gas_constant(state, roster) * T / state.V
    dU = heat_capacity(state, roster) * dT
    enth = []
    for sp, dmi in zip(roster, dm):
        u, h = pure_specific_energy(sp, ss, T)
        dU += u * dmi
        enth.append(h * dmi)
    dQ = dU + p * dV - math.fsum(enth)
    inj = tuple(-sp.Rs * T * dmi for sp, dmi in zip(roster, dm))
    return DiathermalHeat(dQ, dQ - math.fsum(inj), inj)


def _integrand_factory(roster: Sequence[SpeciesSpec], ss: StandardState, curve: Curve):
    Rs = np.array([sp.Rs for sp in roster])
    cv = np.array([sp.cv for sp in roster])
    cp = np.array([sp.cp for sp in roster])

    def f(s: float) -> np.ndarray:
        x, dx = curve.point(s)
        T, V, m = x[0], x[1], x[2:]
        dT, dV, dm = dx[0], dx[1], dx[2:]
        if T <= 0.0 or V <= 0.0 or np.any(m < 0.0):
            raise DomainError(f"loop {curve.id!r} leaves the positive domain at s={s!r}")
        present = m > 0.0
        R = float(m @ Rs)
        Cv = float(m @ cv)
        # dQ_dia / T for an ideal mixture: Cv dT/T + R dV/V - sum Rs_i dm_i
        dia = Cv * dT / T + R * dV / V - float(dm @ Rs)
        p_i = np.where(present, m * Rs * T / V, 1.0)
        ds = np.where(present, cp * np.log(T / ss.T0) - Rs * np.log(p_i / ss.p0), 0.0)
        conv = float(ds @ dm)
        # d(ds_i) = cp dT/T - Rs dp_i/p_i with dp_i/p_i = dm_i/m_i + dT/T - dV/V
        safe_m = np.where(present, m, 1.0)
        dlogp = np.where(present, dm / safe_m + dT / T - dV / V, 0.0)
        gd = float(np.where(present, m * (cp * dT / T - Rs * dlogp), 0.0).sum())
        tot = dia + conv
        return np.array([tot, dia, conv, gd, abs(tot), abs(dia) + abs(conv) + abs(gd)])

    return f


@dataclass(frozen=True)
class LoopFunctionals:
    I_tot: float
    I_dia: float
    I_conv: float
    I_gd: float
    decomposition_gap: float   # I_tot - I_dia - I_conv
    product_gap: float         # I_conv + I_gd
    abs_tot: float             # loop integral of |dQ_tot| / T
    quad_error: float          # quadrature error estimate (max norm)
    bound: float               # quad_error plus a round-off floor
    n_intervals: int = 0
    id: str = ""


def loop_functionals(curve: Curve, roster: Sequence[SpeciesSpec], ss: StandardState, *,
                     epsabs_scale: float = 1e-12, epsrel: float = 1e-12,
                     limit: int = 4000) -> LoopFunctionals:
    """Adaptive quadrature of the entropy functionals around one traversal."""
    f = _integrand_factory(roster, ss, curve)
    x0, _ = curve.point(0.0)
    scale = float(np.asarray(x0[2:]) @ np.array([sp.Rs for sp in roster]))
    res, err, info = integrate.quad_vec(
        f, 0.0, 1.0, epsabs=epsabs_scale * scale, epsrel=epsrel, limit=limit,
        norm="max", full_output=True,
    )
    if not info.success:
        worst = info.intervals[int(np.argmax(info.errors))] if len(info.intervals) else None
        raise IntegratorError(
            f"loop {curve.id!r}: quadrature did not converge (status {info.status}, "
            f"err {err:.3e}, worst interval near {worst})"
        )
    tot, dia, conv, gd, abs_tot, abs_all = (float(v) for v in res)
    floor = 64.0 * np.finfo(float).eps * abs_all
    return LoopFunctionals(
        I_tot=tot, I_dia=dia, I_conv=conv, I_gd=gd,
        decomposition_gap=tot - dia - conv, product_gap=conv + gd,
        abs_tot=abs_tot, quad_error=float(err), bound=float(err) + floor,
        n_intervals=len(info.intervals), id=curve.id,
    )


def green_area_oracle(loop: PlanarPolarLoop, roster: Sequence[SpeciesSpec],
                      epsabs: float = 0.0, epsrel: float = 1e-11) -> tuple[float, float]:
    """-double integral of (d s_j / dT) dT dm_j over the region enclosed by ``loop``.

    At fixed V and fixed other masses, d s_j/dT = cv_j / T; the result is
    what Green's theorem says the loop integral of dQ_dia/T must equal.
    Returns (value, error estimate).
    """
    sp = roster[loop.species]
    Tc = loop.center.T

    def integrand(rho: float, phi: float) -> float:
        T = Tc + loop.aT * rho * math.cos(phi)
        return -(sp.cv / T) * loop.aT * loop.am * rho

    val, err = integrate.dblquad(
        integrand, 0.0, TWO_PI, 0.0, lambda phi: loop.radius(phi)[0],
        epsabs=epsabs, epsrel=epsrel,
    )
    return val, err


# --- staircase ------------------------------------------------------------

@dataclass(frozen=True)
class StaircaseStep:
    species: int
    f: int          # -1, 0 or +1
    dm: float       # f * delta_m


@dataclass(frozen=True)
class StaircaseSpec:
    base: FourierLoop
    N: int
    steps: tuple[StaircaseStep, ...] = ()
    nodes: tuple[SystemState, ...] = ()


@dataclass(frozen=True)
class StaircaseFunctionals:
    N: int
    I_tot: float
    I_dia: float
    I_conv: float
    legs: tuple[LegRecord, ...] = ()
    mass_reconstruction: tuple[float, ...] = ()   # m_j(start) + sum f delta_m - m_j(end)


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    I_dia: float
    I_conv: float
    I_tot: float
    err_dia: float
    err_conv: float
    err_tot: float
    ratio_dia: float   # previous err_dia / this err_dia (nan for the first row)


def _varying_species(loop: FourierLoop) -> int:
    rows = [j for j in range(loop.a.shape[0] - 2)
            if np.any(loop.a[2 + j]) or np.any(loop.b[2 + j])]
    if len(rows) != 1:
        raise RefinementError(
            f"staircase needs exactly one species whose mass varies, found {len(rows)}"
        )
    return rows[0]


def build_staircase(loop: FourierLoop, N: int) -> StaircaseSpec:
    """Place N + 1 nodes on ``loop`` at uniform mass increments.

    Nodes sit where the varying mass hits a uniform lattice between its
    extremes, so every step moves that mass by exactly +-delta_m (f = +-1).
    Requires one varying species with a single maximum and minimum per
    traversal and N even.
    """
    if N < 2 or N % 2:
        raise RefinementError(f"N must be an even integer >= 2, got {N!r}")
    j = _varying_species(loop)
    col = 2 + j

    def mass(s):
        return loop.point(s)[0][col]

    def dmass(s):
        return loop.point(s)[1][col]

    grid = np.linspace(0.0, 1.0, 2049)
    d = np.array([dmass(s) for s in grid])
    roots = []
    for k in range(len(grid) - 1):
        if d[k] == 0.0:
            roots.append(grid[k])
        elif d[k] * d[k + 1] < 0.0:
            roots.append(optimize.brentq(dmass, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15))
    if len(roots) != 2:
        raise RefinementError(
            f"varying mass must have one maximum and one minimum per loop, found {len(roots)} turning points"
        )
    s_max, s_min = sorted(roots, key=mass, reverse=True)
    m_hi, m_lo = mass(s_max), mass(s_min)
    half = N // 2
    dm_step = (m_hi - m_lo) / half

    def solve_branch(s_a, s_b, target):
        if s_b < s_a:
            s_b += 1.0
        return optimize.brentq(lambda s: mass(s % 1.0) - target, s_a, s_b,
                               xtol=1e-15, rtol=1e-15) % 1.0

    s_nodes = [s_max]
    for k in range(1, half):
        s_nodes.append(solve_branch(s_max, s_min, m_hi - k * dm_step))
    s_nodes.append(s_min)
    for k in range(1, half):
        s_nodes.append(solve_branch(s_min, s_max, m_lo + k * dm_step))
    s_nodes.append(s_max)

    nodes = []
    for k, s in enumerate(s_nodes):
        x, _ = loop.point(s)
        m = list(x[2:])
        # snap the varying mass onto the lattice so increments are exact
        lattice = m_hi - k * dm_step if k <= half else m_lo + (k - half) * dm_step
        m[j] = lattice
        nodes.append(SystemState(float(x[0]), float(x[1]), tuple(m)))
    steps = tuple(StaircaseStep(j, -1 if k < half else 1, (-1 if k < half else 1) * dm_step)
                  for k in range(N))
    return StaircaseSpec(loop, N, steps, tuple(nodes))


def staircase_functionals(spec: StaircaseSpec, roster: Sequence[SpeciesSpec],
                          ss: StandardState, rtol: float = DEFAULT_RTOL) -> StaircaseFunctionals:
    """Integrate the staircase: each step is an adiabat to the next node's T,
    then an isothermal mass exchange of one increment ending at the node's V."""
    legs: list[LegRecord] = []
    state = spec.nodes[0]
    try:
        for k, step in enumerate(spec.steps):
            nxt = spec.nodes[k + 1]
            state, rec = integrate_segment(
                state, SegmentSpec(SegmentKind.ADIABAT, T=nxt.T, label=f"{k}:adiabat"),
                roster, ss, rtol=rtol)
            legs.append(rec)
            seg = SegmentSpec(SegmentKind.ISO_EXCHANGE, V=nxt.V, species=step.species,
                              dm=step.dm, label=f"{k}:exchange")
            state, rec = integrate_segment(state, seg, roster, ss, rtol=rtol)
            legs.append(rec)
    except DomainError as exc:
        raise RefinementError(f"staircase N={spec.N} left the domain ({exc}); try a larger N")
    n = len(roster)
    recon = tuple(
        spec.nodes[0].m[i] + math.fsum(st.dm for st in spec.steps if st.species == i)
        - spec.nodes[-1].m[i] for i in range(n)
    )
    dia = math.fsum(r.s_dia for r in legs)
    conv = math.fsum(r.s_conv for r in legs)
    return StaircaseFunctionals(spec.N, dia + conv, dia, conv, tuple(legs), recon)


def staircase_from_legs(legs: Sequence[LegRecord]) -> StaircaseFunctionals:
    """Staircase sums over an existing leg list, e.g. a single elementary cycle."""
    dia = math.fsum(r.s_dia for r in legs)
    conv = math.fsum(r.s_conv for r in legs)
    return StaircaseFunctionals(1, dia + conv, dia, conv, tuple(legs), ())


def staircase_refine(loop: FourierLoop, Ns: Sequence[int], roster: Sequence[SpeciesSpec],
                     ss: StandardState, smooth: LoopFunctionals | None = None
                     ) -> tuple[list[StaircaseFunctionals], list[ConvergenceRow]]:
    """Staircase functionals on a refinement ladder and their errors against the smooth loop."""
    if smooth is None:
        smooth = loop_functionals(loop, roster, ss)
    results, rows = [], []
    prev = math.nan
    for N in Ns:
        st = staircase_functionals(build_staircase(loop, N), roster, ss)
        e_dia = abs(st.I_dia - smooth.I_dia)
        rows.append(ConvergenceRow(
            N, st.I_dia, st.I_conv, st.I_tot, e_dia,
            abs(st.I_conv - smooth.I_conv), abs(st.I_tot - smooth.I_tot),
            prev / e_dia if e_dia > 0 and math.isfinite(prev) else math.nan,
        ))
        prev = e_dia
        results.append(st)
    return results, rows


# --- convected entropy and scaling ---------------------------------------

def convected_entropy(state: SystemState, roster: Sequence[SpeciesSpec],
                      ss: StandardState) -> tuple[float, float]:
    """(sum m_i ds_i, same value built by growing the system from k = 0 to 1).

    The growth route scales V and every m_i by k with T fixed, so partial
    pressures and hence every ds_i stay frozen; the quadrature integrates
    sum ds_i(k state) m_i dk.
    """
    present = [i for i, mi in enumerate(state.m) if mi > 0.0]
    ds = {i: specific_convected_entropy(roster[i], ss, state.T,
                                        partial_pressure(state, roster, i)) for i in present}
    direct = math.fsum(state.m[i] * ds[i] for i in present)

    def integrand(k: float) -> float:
        if k <= 0.0:
            k = np.finfo(float).tiny
        sc = state.scaled(k)
        return math.fsum(
            specific_convected_entropy(roster[i], ss, sc.T, partial_pressure(sc, roster, i))
            * state.m[i] for i in present
        )

    scaled, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-13)
    return direct, scaled


# --- entropy partials ----------------------------------------------------

def _entropy_by_route(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                      V_ref: float) -> float:
    """S(state) from integrating dQ_tot/T along a fixed route.

    Base: (T0, V_ref) with each present species at p_i = p0, where S = 0.
    Route: isothermal constant-volume exchange to the target masses, then
    constant-volume heating to T, then an isotherm to V.
    """
    present = [i for i, mi in enumerate(state.m) if mi > 0.0]
    m_base = np.array([ss.p0 * V_ref / (roster[i].Rs * ss.T0) if i in present else 0.0
                       for i in range(len(roster))])
    m_tgt = np.array(state.m)
    Rs = np.array([sp.Rs for sp in roster])
    cp = np.array([sp.cp for sp in roster])
    cv = np.array([sp.cv for sp in roster])
    dm = m_tgt - m_base
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)

    def leg1(lam: float) -> float:
        m = m_base + lam * dm
        p = m[present] * Rs[present] * ss.T0 / V_ref
        ds = -Rs[present] * np.log(p / ss.p0)   # T = T0, so no thermal part
        # dQ_dia/T = -sum Rs dm at fixed T, V; plus convected part
        return float((ds - Rs[present]) @ dm[present])

    S1 = integrate.quad(leg1, 0.0, 1.0, **opts)[0]
    Cv = float(m_tgt @ cv)
    R = float(m_tgt @ Rs)
    S2 = integrate.quad(lambda T: Cv / T, ss.T0, state.T, **opts)[0]
    S3 = integrate.quad(lambda V: R / V, V_ref, state.V, **opts)[0]
    return S1 + S2 + S3


@dataclass(frozen=True)
class PartialsRow:
    species: str
    dS_dm: float
    ds: float              # convected specific entropy at the state
    phi_over_T: float      # injection heat per unit mass over T
    residual_a: float      # dS/dm - ds
    residual_b: float      # dS/dm - (ds + phi/T)


def partials_report(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                    h: float | Sequence[float] = 1e-3, V_ref: float | None = None
                    ) -> list[PartialsRow]:
    """Mass partials of the route-built entropy at fixed T, V against two readings.

    ``h`` is a relative step (scalar) or per-species absolute steps.
    """
    V_ref = state.V if V_ref is None else V_ref
    n = len(roster)
    steps = [h * state.m[i] for i in range(n)] if np.isscalar(h) else list(h)
    rows = []
    for i, sp in enumerate(roster):
        if state.m[i] <= 0.0:
            continue
        hi = steps[i]
        if not hi > 0.0 or state.m[i] - hi <= 0.0 or state.m[i] + hi == state.m[i]:
            raise StepSizeError(f"step {hi!r} unusable for species {sp.id!r}")
        mp, mm = list(state.m), list(state.m)
        mp[i] += hi
        mm[i] -= hi
        Sp = _entropy_by_route(state.replace(m=mp), roster, ss, V_ref)
        Sm = _entropy_by_route(state.replace(m=mm), roster, ss, V_ref)
        dS = (Sp - Sm) / (2.0 * hi)
        ds = specific_convected_entropy(sp, ss, state.T, partial_pressure(state, roster, i))
        phi_T = -sp.Rs
        rows.append(PartialsRow(sp.id, dS, ds, phi_T, dS - ds, dS - (ds + phi_T)))
    return rows


# --- local energy differential -------------------------------------------

@dataclass(frozen=True)
class LocalEnergyReport:
    residual: float                  # dU_pred - dU_actual
    dU_pred: float
    dU_actual: float
    mu: tuple[float, ...]
    mu_minus_h: tuple[float, ...]
    wss_mode: str


def chemical_potential(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                       i: int, wss_mode: WssMode = "flow-work",
                       path: CanonicalPath = CanonicalPath.PT) -> float:
    """Formation work + supply work + path heat + membrane work + Uss for species i."""
    sp = roster[i]
    T = state.T
    p = partial_pressure(state, roster, i)
    if p <= 0.0:
        raise DomainError(f"species {sp.id!r} absent: potential undefined")
    return (formation_work(sp, ss, T, p, path) + supply_cell_work_per_mass(sp, ss, wss_mode)
            + path_heat(sp, ss, T, p, path) + sp.Rs * T + sp.Uss)


def local_energy_report(state: SystemState, roster: Sequence[SpeciesSpec], ss: StandardState,
                        displacement: Sequence[float], wss_mode: WssMode = "flow-work"
                        ) -> LocalEnergyReport:
    """Compare T dS_dia - p dV + sum mu_i dm_i with the actual energy change."""
    d = np.asarray(displacement, dtype=float)
    T, V = state.T, state.V
    p = gas_constant(state, roster) * T / V
    heat = diathermal_heat_form(state, d, roster, ss).dQ_dia
    mu = tuple(chemical_potential(state, roster, ss, i, wss_mode) if state.m[i] > 0 else math.nan
               for i in range(len(roster)))
    dm = d[2:]
    dU_pred = heat - p * d[1] + math.fsum(
        mu_i * dmi for mu_i, dmi in zip(mu, dm) if dmi != 0.0
    )
    moved = SystemState(T + d[0], V + d[1], tuple(np.array(state.m) + dm))
    dU_act = mixture_energy(moved, roster, ss) - mixture_energy(state, roster, ss)
    mh = tuple(mu_i - pure_specific_energy(sp, ss, T)[1] for mu_i, sp in zip(mu, roster))
    return LocalEnergyReport(dU_pred - dU_act, dU_pred, dU_act, mu, mh, wss_mode)
