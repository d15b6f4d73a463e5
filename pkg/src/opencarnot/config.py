"""Experiment configuration: TOML parsing, validation and default injection."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cycles import CycleKind, CycleSpec, SegmentKind, SegmentSpec, build_cycle
from .errors import ConfigError, ThermoError
from .fluid import DEFAULT_STANDARD_STATE, SPEC_A, SpeciesSpec, StandardState, SystemState
from .transfer import WSS_MODES

DEFAULT_TOLERANCES: dict[str, float] = {
    "carnot": 1e-8,            # |Q1/T1 - Q2/T2| relative to |Q1/T1|
    "closure": 1e-9,           # per-coordinate loop closure
    "first_law": 1e-8,         # ledger closure relative to |Q1|+|Q2|+|W|+1
    "reversal": 1e-9,          # reversed ledger + forward ledger, relative
    "concatenation": 1e-8,     # composite minus sum of parts, relative
    "virtual_work": 1e-8,      # per-cycle, relative to |W_vir|
    "virtual_work_family": 1e-7,
    "loop_exactness": 1e-8,    # |I_tot| relative to loop integral of |dQ_tot|/T
    "identity_factor": 10.0,   # identities within this multiple of the quadrature bound
    "green": 1e-6,
    "staircase_ratio": 1.7,
    "scaling_entropy": 1e-10,
    "work_function": 1e-10,
    "formation_gap_min": 100.0,
    "reciprocity": 1e-6,
    "reciprocity_shrink": 3.0,  # asymmetry ratio when the step is halved
}

SUITES = ("carnot", "loops", "work-function", "reciprocity", "staircase", "virtual-work",
          "scaling", "adjudication", "all")

LOOP_TYPES = ("fourier", "random", "scaling", "planar")


@dataclass(frozen=True)
class LoopConfig:
    id: str
    type: str
    center: SystemState
    params: dict[str, Any]


@dataclass(frozen=True)
class StaircaseConfig:
    id: str
    loop: str
    N: tuple[int, ...]


@dataclass(frozen=True)
class SweepConfig:
    id: str
    kinds: tuple[str, ...]
    T1: tuple[float, ...]
    T2: tuple[float, ...]
    ratio: tuple[float, ...]
    dm: tuple[float, ...]
    species: int
    V: float
    m: tuple[float, ...]
    port_fraction: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    wss_mode: str
    standard_state: StandardState
    species: tuple[SpeciesSpec, ...]
    tolerances: dict[str, float]
    cycles: dict[str, CycleSpec]
    loops: dict[str, LoopConfig]
    staircases: dict[str, StaircaseConfig]
    sweeps: dict[str, SweepConfig]
    suites: dict[str, tuple[str, ...]]
    builtin_experiments: bool = True
    corrupt_q2: float | None = None
    source: str = ""

    def species_index(self, label: str) -> int:
        for i, sp in enumerate(self.species):
            if sp.id == label:
                return i
        raise ConfigError(f"undeclared species {label!r}")


def _err(where: str, msg: str) -> ConfigError:
    return ConfigError(f"{where}: {msg}")


def _num(tbl: dict, key: str, where: str, default: Any = ..., positive: bool = False) -> float:
    if key not in tbl:
        if default is ...:
            raise _err(where, f"missing required key {key!r}")
        return default
    v = tbl[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise _err(f"{where}.{key}", f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise _err(f"{where}.{key}", f"must be positive, got {v!r}")
    return float(v)


def _num_list(tbl: dict, key: str, where: str, default: Any = ...) -> tuple[float, ...]:
    v = tbl.get(key, default)
    if v is ...:
        raise _err(where, f"missing required key {key!r}")
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise _err(f"{where}.{key}", "expected a non-empty list of numbers")
    return tuple(_num({key: x}, key, where) for x in v)


def _check_keys(tbl: dict, allowed: set[str], where: str) -> None:
    extra = set(tbl) - allowed
    if extra:
        raise _err(where, f"unknown key(s) {sorted(extra)}")


def _masses(raw: Any, species: tuple[SpeciesSpec, ...], where: str) -> tuple[float, ...]:
    if not isinstance(raw, dict):
        raise _err(where, "masses must be a table {species = kg}")
    ids = [sp.id for sp in species]
    for k in raw:
        if k not in ids:
            raise _err(where, f"undeclared species {k!r}")
    return tuple(_num(raw, sp.id, where, 0.0) for sp in species)


def _state(raw: Any, species, where: str) -> SystemState:
    if not isinstance(raw, dict):
        raise _err(where, "state must be a table with T, V, m")
    _check_keys(raw, {"T", "V", "m"}, where)
    try:
        return SystemState(_num(raw, "T", where), _num(raw, "V", where),
                           _masses(raw.get("m", {}), species, f"{where}.m"))
    except ThermoError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _err(where, str(exc)) from exc


def _species_ref(label: Any, species, where: str) -> int:
    for i, sp in enumerate(species):
        if sp.id == label:
            return i
    raise _err(where, f"undeclared species {label!r}")


def _parse_segment(raw: dict, species, where: str) -> SegmentSpec:
    _check_keys(raw, {"kind", "V", "T", "species", "dm", "label", "reservoir"}, where)
    kind = raw.get("kind")
    if kind not in [k.value for k in SegmentKind]:
        raise _err(f"{where}.kind", f"unknown segment kind {kind!r}")
    sp = _species_ref(raw["species"], species, f"{where}.species") if "species" in raw else None
    try:
        return SegmentSpec(
            SegmentKind(kind),
            V=_num(raw, "V", where, None), T=_num(raw, "T", where, None),
            species=sp, dm=_num(raw, "dm", where, 0.0), label=str(raw.get("label", "")),
            reservoir=raw.get("reservoir"),
        )
    except (ValueError, ThermoError) as exc:
        raise _err(where, str(exc)) from exc


def _parse_cycle(raw: dict, species, where: str) -> CycleSpec:
    cid = raw.get("id")
    if not isinstance(cid, str) or not cid:
        raise _err(where, "cycle needs a string id")
    kind = raw.get("kind")
    if kind not in [k.value for k in CycleKind]:
        raise _err(f"{where}.kind", f"unknown cycle kind {kind!r}")
    T1 = _num(raw, "T1", where, positive=True)
    T2 = _num(raw, "T2", where, positive=True)
    try:
        if "segments" in raw:
            _check_keys(raw, {"id", "kind", "T1", "T2", "start", "segments"}, where)
            segs = [_parse_segment(s, species, f"{where}.segments[{k}]")
                    for k, s in enumerate(raw["segments"])]
            return CycleSpec(CycleKind(kind), _state(raw.get("start"), species, f"{where}.start"),
                             tuple(segs), T1, T2, cid)
        _check_keys(raw, {"id", "kind", "T1", "T2", "V", "m", "ratio", "species", "dm",
                          "port_fraction"}, where)
        sp = _species_ref(raw.get("species", species[0].id), species, f"{where}.species")
        return build_cycle(
            kind, species, _num(raw, "V", where, 1.0, positive=True),
            _masses(raw.get("m", {species[0].id: 1.0}), species, f"{where}.m"),
            T1, T2, _num(raw, "ratio", where, 2.0), sp, _num(raw, "dm", where, 0.0),
            _num(raw, "port_fraction", where, 0.5), cid,
        )
    except ConfigError:
        raise
    except (ValueError, ThermoError) as exc:
        raise _err(where, str(exc)) from exc


def _parse_loop(raw: dict, species, where: str) -> LoopConfig:
    lid = raw.get("id")
    if not isinstance(lid, str) or not lid:
        raise _err(where, "loop needs a string id")
    typ = raw.get("type")
    if typ not in LOOP_TYPES:
        raise _err(f"{where}.type", f"unknown loop type {typ!r}; expected one of {LOOP_TYPES}")
    center = _state(raw.get("center"), species, f"{where}.center")
    params: dict[str, Any] = {}
    coord_names = ["T", "V"] + [sp.id for sp in species]
    if typ == "fourier":
        _check_keys(raw, {"id", "type", "center", "cos", "sin"}, where)
        for key in ("cos", "sin"):
            tbl = raw.get(key, {})
            if not isinstance(tbl, dict):
                raise _err(f"{where}.{key}", "expected a table {coordinate = [coefficients]}")
            for k in tbl:
                if k not in coord_names:
                    raise _err(f"{where}.{key}", f"unknown coordinate or undeclared species {k!r}")
            params[key] = {k: _num_list(tbl, k, f"{where}.{key}") for k in tbl}
    elif typ == "random":
        _check_keys(raw, {"id", "type", "center", "count", "harmonics", "amplitude"}, where)
        params["count"] = int(_num(raw, "count", where, 1, positive=True))
        params["harmonics"] = int(_num(raw, "harmonics", where, 3, positive=True))
        params["amplitude"] = _num(raw, "amplitude", where, 0.3, positive=True)
        if params["amplitude"] >= 1.0:
            raise _err(f"{where}.amplitude", "must be below 1")
    elif typ == "scaling":
        _check_keys(raw, {"id", "type", "center", "amp"}, where)
        params["amp"] = _num(raw, "amp", where, 1.0, positive=True)
    else:
        _check_keys(raw, {"id", "type", "center", "species", "aT", "am", "c", "d"}, where)
        params["species"] = _species_ref(raw.get("species", species[0].id), species,
                                         f"{where}.species")
        params["aT"] = _num(raw, "aT", where, positive=True)
        params["am"] = _num(raw, "am", where, positive=True)
        params["c"] = _num_list(raw, "c", where, []) if raw.get("c") else ()
        params["d"] = _num_list(raw, "d", where, []) if raw.get("d") else ()
        if len(params["c"]) != len(params["d"]):
            raise _err(where, "c and d must have equal length")
    return LoopConfig(lid, typ, center, params)


def _parse_sweep(raw: dict, species, where: str) -> SweepConfig:
    _check_keys(raw, {"id", "kinds", "T1", "T2", "ratio", "dm", "species", "V", "m",
                      "port_fraction"}, where)
    sid = raw.get("id")
    if not isinstance(sid, str) or not sid:
        raise _err(where, "sweep needs a string id")
    kinds = raw.get("kinds", [k.value for k in CycleKind])
    for k in kinds:
        if k not in [c.value for c in CycleKind]:
            raise _err(f"{where}.kinds", f"unknown cycle kind {k!r}")
    T1, T2 = _num_list(raw, "T1", where), _num_list(raw, "T2", where)
    if min(T1) <= max(T2):
        raise _err(where, "every T1 must exceed every T2")
    return SweepConfig(
        sid, tuple(kinds), T1, T2, _num_list(raw, "ratio", where), _num_list(raw, "dm", where, [0.0]),
        _species_ref(raw.get("species", species[0].id), species, f"{where}.species"),
        _num(raw, "V", where, 1.0, positive=True),
        _masses(raw.get("m", {species[0].id: 1.0}), species, f"{where}.m"),
        _num(raw, "port_fraction", where, 0.5),
    )


def _unique(items, kind: str) -> dict:
    out = {}
    for it in items:
        if it.id in out:
            raise ConfigError(f"duplicate {kind} id {it.id!r}")
        out[it.id] = it
    return out


def parse_config(data: dict, source: str = "") -> ExperimentConfig:
    """Validate a parsed TOML document and resolve every cross-reference."""
    _check_keys(data, {"seed", "wss_mode", "standard_state", "species", "tolerances", "cycles",
                       "loops", "staircases", "sweeps", "suites", "debug",
                       "builtin_experiments"}, "config")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed: expected an unsigned 64-bit integer, got {seed!r}")
    wss = data.get("wss_mode", "flow-work")
    if wss not in WSS_MODES:
        raise ConfigError(f"wss_mode: expected one of {WSS_MODES}, got {wss!r}")

    sst = data.get("standard_state", {})
    _check_keys(sst, {"T0", "p0"}, "standard_state")
    ss = StandardState(_num(sst, "T0", "standard_state", DEFAULT_STANDARD_STATE.T0, True),
                       _num(sst, "p0", "standard_state", DEFAULT_STANDARD_STATE.p0, True))

    species = []
    for k, raw in enumerate(data.get("species", [])):
        where = f"species[{k}]"
        _check_keys(raw, {"id", "Rs", "cv", "cp", "Uss"}, where)
        if not isinstance(raw.get("id"), str):
            raise _err(where, "species needs a string id")
        try:
            species.append(SpeciesSpec(
                raw["id"], _num(raw, "Rs", where), _num(raw, "cv", where),
                _num(raw, "Uss", where, 0.0), _num(raw, "cp", where, float("nan")),
            ))
        except ThermoError as exc:
            raise _err(where, str(exc)) from exc
    species = tuple(species) or (SPEC_A,)
    if len({sp.id for sp in species}) != len(species):
        raise ConfigError("species: duplicate id")

    tol = dict(DEFAULT_TOLERANCES)
    for k, v in data.get("tolerances", {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError(f"tolerances.{k}: unknown tolerance")
        tol[k] = _num({k: v}, k, "tolerances", positive=True)

    cycles = _unique((_parse_cycle(c, species, f"cycles[{k}]")
                      for k, c in enumerate(data.get("cycles", []))), "cycle")
    loops = _unique((_parse_loop(c, species, f"loops[{k}]")
                     for k, c in enumerate(data.get("loops", []))), "loop")
    sweeps = _unique((_parse_sweep(c, species, f"sweeps[{k}]")
                      for k, c in enumerate(data.get("sweeps", []))), "sweep")
    stairs = []
    for k, raw in enumerate(data.get("staircases", [])):
        where = f"staircases[{k}]"
        _check_keys(raw, {"id", "loop", "N"}, where)
        if raw.get("loop") not in loops:
            raise _err(f"{where}.loop", f"unknown loop {raw.get('loop')!r}")
        if loops[raw["loop"]].type != "fourier":
            raise _err(f"{where}.loop", "staircases need a fourier loop")
        Ns = raw.get("N", [8, 16, 32, 64])
        if not isinstance(Ns, list) or not all(isinstance(n, int) and n >= 2 and n % 2 == 0
                                               for n in Ns):
            raise _err(f"{where}.N", "expected a list of even integers >= 2")
        stairs.append(StaircaseConfig(str(raw.get("id", raw["loop"])), raw["loop"], tuple(Ns)))
    staircases = _unique(stairs, "staircase")

    suites: dict[str, tuple[str, ...]] = {}
    for name, members in data.get("suites", {}).items():
        if name in SUITES:
            raise ConfigError(f"suites.{name}: clashes with a built-in suite")
        if not isinstance(members, list):
            raise ConfigError(f"suites.{name}: expected a list of suite names")
        for mbr in members:
            if mbr not in SUITES:
                raise ConfigError(f"suites.{name}: unknown built-in suite {mbr!r}")
        suites[name] = tuple(members)

    dbg = data.get("debug", {})
    _check_keys(dbg, {"corrupt_q2"}, "debug")
    corrupt = _num(dbg, "corrupt_q2", "debug", None, positive=True)
    builtin = data.get("builtin_experiments", True)
    if not isinstance(builtin, bool):
        raise ConfigError("builtin_experiments: expected true or false")

    return ExperimentConfig(seed, wss, ss, species, tol, cycles, loops, staircases, sweeps,
                            suites, builtin, corrupt, source)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a TOML experiment file. Errors raise :class:`ConfigError`."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read ({exc.strerror})") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: parse error: {exc}") from exc
    return parse_config(data, str(p))
