"""Domain model for coordinated transmission/distribution dispatch scenarios.

A ``Scenario`` bundles one transmission grid (TG), any number of radial
distribution networks (DNs) attached at distinct TG boundary buses, and the
shared optimization horizon / penalty coefficients.  All quantities are in
MW / MWh / hours / degrees Celsius; time series are tuples with exactly one
entry per horizon period.  Instances are frozen and safe to share across
workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import InvariantError, ParseError, SchemaError

__all__ = [
    "Horizon",
    "Generator",
    "RenewableDG",
    "EnergyStorage",
    "ThermalLoad",
    "TransmissionLine",
    "BoundaryBus",
    "TransmissionGrid",
    "DnLine",
    "DistributionNetwork",
    "Penalties",
    "Scenario",
    "ValidationIssue",
    "ValidationReport",
    "validate_scenario",
    "load_scenario",
    "save_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
]

Profile = tuple[float, ...]


@dataclass(frozen=True)
class Horizon:
    t_hor: int          # number of dispatch periods
    delta_t: float      # hours per period


@dataclass(frozen=True)
class Generator:
    bus: str
    a2: float           # $/MW^2
    a1: float           # $/MW
    a0: float           # $
    p_min: float
    p_max: float
    ramp_up: float      # MW/h
    ramp_down: float    # MW/h


@dataclass(frozen=True)
class RenewableDG:
    bus: str
    p_min: float
    p_max: Profile      # available output per period; strictly positive


@dataclass(frozen=True)
class EnergyStorage:
    bus: str
    eta_ch: float
    eta_dc: float
    e0: float           # MWh at the start of the horizon
    e_min: float
    e_max: float
    pch_max: float
    pdc_max: float


@dataclass(frozen=True)
class ThermalLoad:
    id: str
    bus: str
    m: float            # heat-exchange coefficient per period, 0 < m < 1
    i_coef: float       # degC per MW; sign selects heating (+) or cooling (-)
    t_in0: float
    t_in_min: float
    t_in_max: float
    p_max: float


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    limit: float
    sf: Profile         # shift-factor row, one entry per TG bus (bus order)


@dataclass(frozen=True)
class BoundaryBus:
    bus: str
    p_min: Optional[Profile] = None   # per-period bounds on exported power
    p_max: Optional[Profile] = None


@dataclass(frozen=True)
class TransmissionGrid:
    buses: tuple[str, ...]
    generators: tuple[Generator, ...]
    dgs: tuple[RenewableDG, ...]
    storages: tuple[EnergyStorage, ...]
    loads: dict[str, Profile]         # bus -> demand profile
    lines: tuple[TransmissionLine, ...]
    reserve_up: Profile               # system spinning-reserve requirement
    reserve_down: Profile
    boundary_buses: tuple[BoundaryBus, ...] = ()


@dataclass(frozen=True)
class DnLine:
    from_bus: str
    to_bus: str
    r: float            # resistance in the network's per-MW loss units
    limit: float
    p_base: Profile     # active-power base point for the loss linearization
    q_base: Profile
    v_base: Profile     # from-bus voltage base point, > 0


@dataclass(frozen=True)
class DistributionNetwork:
    id: str
    root_bus: str
    buses: tuple[str, ...]
    lines: tuple[DnLine, ...]
    dgs: tuple[RenewableDG, ...]
    storages: tuple[EnergyStorage, ...]
    thermal_loads: tuple[ThermalLoad, ...]
    loads: dict[str, Profile]
    t_out: Profile      # outdoor temperature
    price: Profile      # $/MWh paid for power imported from the TG


@dataclass(frozen=True)
class Penalties:
    sigma_dg: float
    sigma_ess: float
    c_pen: float        # boundary-slack penalty in the soft DN problem


@dataclass(frozen=True)
class Scenario:
    horizon: Horizon
    tg: TransmissionGrid
    dns: tuple[DistributionNetwork, ...]
    penalties: Penalties


@dataclass(frozen=True)
class ValidationIssue:
    entity: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()

    def __bool__(self) -> bool:
        return not self.issues

    def raise_if_invalid(self) -> None:
        if self.issues:
            raise InvariantError(str(self.issues[0]))


# ---------------------------------------------------------------------------
# validation


def _check_profile(issues, entity, name, profile, t_hor):
    if len(profile) != t_hor:
        issues.append(ValidationIssue(entity, f"{name} has {len(profile)} entries, expected {t_hor}"))
        return False
    return True


def validate_scenario(s: Scenario) -> ValidationReport:
    """Collect every violated invariant; an empty report means the scenario is valid."""
    issues: list[ValidationIssue] = []
    t_hor = s.horizon.t_hor

    if s.horizon.t_hor < 2:
        issues.append(ValidationIssue("horizon", "t_hor must be >= 2"))
    if s.horizon.delta_t <= 0:
        issues.append(ValidationIssue("horizon", "delta_t must be > 0"))

    if s.penalties.sigma_dg <= 0:
        issues.append(ValidationIssue("penalties", "sigma_dg must be > 0"))
    if s.penalties.sigma_ess <= 0:
        issues.append(ValidationIssue("penalties", "sigma_ess must be > 0"))
    if s.penalties.c_pen <= 0:
        issues.append(ValidationIssue("penalties", "c_pen must be > 0"))

    _validate_grid_side(issues, "tg", s.tg, t_hor)

    roots = set()
    for dn in s.dns:
        _validate_dn(issues, dn, t_hor)
        ent = f"dn {dn.id}"
        if dn.root_bus not in s.tg.buses:
            issues.append(ValidationIssue(ent, f"root bus {dn.root_bus} is not a TG bus"))
        if dn.root_bus in roots:
            issues.append(ValidationIssue(ent, f"root bus {dn.root_bus} shared with another DN"))
        roots.add(dn.root_bus)
        if dn.root_bus not in {b.bus for b in s.tg.boundary_buses}:
            issues.append(ValidationIssue(ent, f"root bus {dn.root_bus} is not a TG boundary bus"))

    return ValidationReport(tuple(issues))


def _validate_grid_side(issues, prefix, tg: TransmissionGrid, t_hor):
    bus_set = set(tg.buses)
    for g in tg.generators:
        ent = f"{prefix} generator@{g.bus}"
        if g.a2 < 0:
            issues.append(ValidationIssue(ent, "a2 must be >= 0 for convexity"))
        if g.p_min > g.p_max:
            issues.append(ValidationIssue(ent, "p_min > p_max"))
        if g.ramp_up < 0 or g.ramp_down < 0:
            issues.append(ValidationIssue(ent, "ramp rates must be >= 0"))
        if g.bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {g.bus}"))
    _validate_dg_list(issues, prefix, tg.dgs, bus_set, t_hor)
    _validate_ess_list(issues, prefix, tg.storages, bus_set)
    for bus, prof in tg.loads.items():
        ent = f"{prefix} load@{bus}"
        _check_profile(issues, ent, "profile", prof, t_hor)
        if bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {bus}"))
    for ln in tg.lines:
        ent = f"{prefix} line {ln.id}"
        if len(ln.sf) != len(tg.buses):
            issues.append(ValidationIssue(ent, f"shift-factor row has {len(ln.sf)} entries, expected {len(tg.buses)}"))
        if ln.limit < 0:
            issues.append(ValidationIssue(ent, "limit must be >= 0"))
    _check_profile(issues, f"{prefix} reserve_up", "profile", tg.reserve_up, t_hor)
    _check_profile(issues, f"{prefix} reserve_down", "profile", tg.reserve_down, t_hor)
    if any(v < 0 for v in tg.reserve_up) or any(v < 0 for v in tg.reserve_down):
        issues.append(ValidationIssue(f"{prefix} reserves", "requirements must be >= 0"))
    for bb in tg.boundary_buses:
        ent = f"{prefix} boundary@{bb.bus}"
        if bb.bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {bb.bus}"))
        for name, prof in (("p_min", bb.p_min), ("p_max", bb.p_max)):
            if prof is not None:
                _check_profile(issues, ent, name, prof, t_hor)
        if bb.p_min is not None and bb.p_max is not None and len(bb.p_min) == len(bb.p_max):
            if any(lo > hi for lo, hi in zip(bb.p_min, bb.p_max)):
                issues.append(ValidationIssue(ent, "p_min > p_max in some period"))


def _validate_dg_list(issues, prefix, dgs, bus_set, t_hor):
    for d in dgs:
        ent = f"{prefix} dg@{d.bus}"
        if not _check_profile(issues, ent, "p_max", d.p_max, t_hor):
            continue
        if d.p_min < 0:
            issues.append(ValidationIssue(ent, "p_min must be >= 0"))
        if any(v <= 0 for v in d.p_max):
            issues.append(ValidationIssue(ent, "p_max must be > 0 every period (it divides the curtailment penalty)"))
        if any(d.p_min > v for v in d.p_max):
            issues.append(ValidationIssue(ent, "p_min exceeds p_max in some period"))
        if d.bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {d.bus}"))


def _validate_ess_list(issues, prefix, storages, bus_set):
    for e in storages:
        ent = f"{prefix} ess@{e.bus}"
        if not (0 < e.eta_ch <= 1):
            issues.append(ValidationIssue(ent, "eta_ch must satisfy 0 < eta_ch <= 1"))
        if not (0 < e.eta_dc <= 1):
            issues.append(ValidationIssue(ent, "eta_dc must satisfy 0 < eta_dc <= 1"))
        if not (e.e_min <= e.e0 <= e.e_max):
            issues.append(ValidationIssue(ent, "initial SOC outside [e_min, e_max]"))
        if e.pch_max < 0 or e.pdc_max < 0:
            issues.append(ValidationIssue(ent, "power limits must be >= 0"))
        if e.bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {e.bus}"))


def _validate_dn(issues, dn: DistributionNetwork, t_hor):
    prefix = f"dn {dn.id}"
    bus_set = set(dn.buses)
    if dn.root_bus not in bus_set:
        issues.append(ValidationIssue(prefix, f"root bus {dn.root_bus} not in bus list"))

    # rooted tree: every non-root bus is the target of exactly one line
    targets = [ln.to_bus for ln in dn.lines]
    if len(dn.lines) != len(dn.buses) - 1 or len(set(targets)) != len(targets) \
            or dn.root_bus in targets or not _connected(dn):
        issues.append(ValidationIssue(prefix, "line set is not radial (not a tree rooted at the root bus)"))

    for ln in dn.lines:
        ent = f"{prefix} line {ln.from_bus}->{ln.to_bus}"
        if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
            issues.append(ValidationIssue(ent, "endpoint is not a DN bus"))
        if ln.r < 0:
            issues.append(ValidationIssue(ent, "resistance must be >= 0"))
        if ln.limit < 0:
            issues.append(ValidationIssue(ent, "limit must be >= 0"))
        for name, prof in (("p_base", ln.p_base), ("q_base", ln.q_base), ("v_base", ln.v_base)):
            _check_profile(issues, ent, name, prof, t_hor)
        if any(v <= 0 for v in ln.v_base):
            issues.append(ValidationIssue(ent, "v_base must be > 0 (it divides the loss expression)"))

    _validate_dg_list(issues, prefix, dn.dgs, bus_set, t_hor)
    _validate_ess_list(issues, prefix, dn.storages, bus_set)
    for tl in dn.thermal_loads:
        ent = f"{prefix} thermal {tl.id}"
        if not (0 < tl.m < 1):
            issues.append(ValidationIssue(ent, "m must satisfy 0 < m < 1"))
        if not (tl.t_in_min <= tl.t_in0 <= tl.t_in_max):
            issues.append(ValidationIssue(ent, "t_in0 outside the comfort band"))
        if tl.p_max < 0:
            issues.append(ValidationIssue(ent, "p_max must be >= 0"))
        if tl.bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {tl.bus}"))
    for bus, prof in dn.loads.items():
        ent = f"{prefix} load@{bus}"
        _check_profile(issues, ent, "profile", prof, t_hor)
        if bus not in bus_set:
            issues.append(ValidationIssue(ent, f"unknown bus {bus}"))
    _check_profile(issues, f"{prefix} t_out", "profile", dn.t_out, t_hor)
    _check_profile(issues, f"{prefix} price", "profile", dn.price, t_hor)


def _connected(dn: DistributionNetwork) -> bool:
    adj: dict[str, list[str]] = {b: [] for b in dn.buses}
    for ln in dn.lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
    seen = {dn.root_bus} if dn.root_bus in adj else set()
    stack = list(seen)
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == len(dn.buses)


# ---------------------------------------------------------------------------
# serialization (JSON; schema documented in the README)


def _profile(values) -> Profile:
    return tuple(float(v) for v in values)


def _opt_profile(values) -> Optional[Profile]:
    return None if values is None else _profile(values)


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "horizon": {"t_hor": s.horizon.t_hor, "delta_t": s.horizon.delta_t},
        "tg": {
            "buses": list(s.tg.buses),
            "generators": [vars(g).copy() for g in s.tg.generators],
            "dgs": [{"bus": d.bus, "p_min": d.p_min, "p_max": list(d.p_max)} for d in s.tg.dgs],
            "storages": [vars(e).copy() for e in s.tg.storages],
            "loads": {b: list(p) for b, p in sorted(s.tg.loads.items())},
            "lines": [{"id": ln.id, "limit": ln.limit, "sf": list(ln.sf)} for ln in s.tg.lines],
            "reserve_up": list(s.tg.reserve_up),
            "reserve_down": list(s.tg.reserve_down),
            "boundary_buses": [
                {
                    "bus": bb.bus,
                    "p_min": None if bb.p_min is None else list(bb.p_min),
                    "p_max": None if bb.p_max is None else list(bb.p_max),
                }
                for bb in s.tg.boundary_buses
            ],
        },
        "dns": [
            {
                "id": dn.id,
                "root_bus": dn.root_bus,
                "buses": list(dn.buses),
                "lines": [
                    {
                        "from": ln.from_bus,
                        "to": ln.to_bus,
                        "r": ln.r,
                        "limit": ln.limit,
                        "p_base": list(ln.p_base),
                        "q_base": list(ln.q_base),
                        "v_base": list(ln.v_base),
                    }
                    for ln in dn.lines
                ],
                "dgs": [{"bus": d.bus, "p_min": d.p_min, "p_max": list(d.p_max)} for d in dn.dgs],
                "storages": [vars(e).copy() for e in dn.storages],
                "thermal_loads": [vars(tl).copy() for tl in dn.thermal_loads],
                "loads": {b: list(p) for b, p in sorted(dn.loads.items())},
                "t_out": list(dn.t_out),
                "price": list(dn.price),
            }
            for dn in s.dns
        ],
        "penalties": vars(s.penalties).copy(),
    }


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SchemaError(f"missing key '{key}' in {where}")
    return d[key]


def scenario_from_dict(data: dict) -> Scenario:
    try:
        hor = _require(data, "horizon", "scenario")
        tg_d = _require(data, "tg", "scenario")
        dns_d = _require(data, "dns", "scenario")
        pen_d = _require(data, "penalties", "scenario")

        horizon = Horizon(int(_require(hor, "t_hor", "horizon")), float(_require(hor, "delta_t", "horizon")))
        tg = TransmissionGrid(
            buses=tuple(str(b) for b in _require(tg_d, "buses", "tg")),
            generators=tuple(
                Generator(
                    bus=str(g["bus"]), a2=float(g["a2"]), a1=float(g["a1"]), a0=float(g["a0"]),
                    p_min=float(g["p_min"]), p_max=float(g["p_max"]),
                    ramp_up=float(g["ramp_up"]), ramp_down=float(g["ramp_down"]),
                )
                for g in _require(tg_d, "generators", "tg")
            ),
            dgs=tuple(
                RenewableDG(bus=str(d["bus"]), p_min=float(d["p_min"]), p_max=_profile(d["p_max"]))
                for d in _require(tg_d, "dgs", "tg")
            ),
            storages=tuple(_ess_from_dict(e) for e in _require(tg_d, "storages", "tg")),
            loads={str(b): _profile(p) for b, p in _require(tg_d, "loads", "tg").items()},
            lines=tuple(
                TransmissionLine(id=str(ln["id"]), limit=float(ln["limit"]), sf=_profile(ln["sf"]))
                for ln in _require(tg_d, "lines", "tg")
            ),
            reserve_up=_profile(_require(tg_d, "reserve_up", "tg")),
            reserve_down=_profile(_require(tg_d, "reserve_down", "tg")),
            boundary_buses=tuple(
                BoundaryBus(bus=str(bb["bus"]), p_min=_opt_profile(bb.get("p_min")), p_max=_opt_profile(bb.get("p_max")))
                for bb in tg_d.get("boundary_buses", [])
            ),
        )
        dns = tuple(
            DistributionNetwork(
                id=str(_require(dn, "id", "dn")),
                root_bus=str(_require(dn, "root_bus", "dn")),
                buses=tuple(str(b) for b in _require(dn, "buses", "dn")),
                lines=tuple(
                    DnLine(
                        from_bus=str(ln["from"]), to_bus=str(ln["to"]), r=float(ln["r"]),
                        limit=float(ln["limit"]), p_base=_profile(ln["p_base"]),
                        q_base=_profile(ln["q_base"]), v_base=_profile(ln["v_base"]),
                    )
                    for ln in _require(dn, "lines", "dn")
                ),
                dgs=tuple(
                    RenewableDG(bus=str(d["bus"]), p_min=float(d["p_min"]), p_max=_profile(d["p_max"]))
                    for d in _require(dn, "dgs", "dn")
                ),
                storages=tuple(_ess_from_dict(e) for e in _require(dn, "storages", "dn")),
                thermal_loads=tuple(
                    ThermalLoad(
                        id=str(t["id"]), bus=str(t["bus"]), m=float(t["m"]), i_coef=float(t["i_coef"]),
                        t_in0=float(t["t_in0"]), t_in_min=float(t["t_in_min"]),
                        t_in_max=float(t["t_in_max"]), p_max=float(t["p_max"]),
                    )
                    for t in _require(dn, "thermal_loads", "dn")
                ),
                loads={str(b): _profile(p) for b, p in _require(dn, "loads", "dn").items()},
                t_out=_profile(_require(dn, "t_out", "dn")),
                price=_profile(_require(dn, "price", "dn")),
            )
            for dn in dns_d
        )
        penalties = Penalties(
            sigma_dg=float(_require(pen_d, "sigma_dg", "penalties")),
            sigma_ess=float(_require(pen_d, "sigma_ess", "penalties")),
            c_pen=float(_require(pen_d, "c_pen", "penalties")),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SchemaError(f"scenario document malformed: {exc}") from exc
    return Scenario(horizon=horizon, tg=tg, dns=dns, penalties=penalties)


def _ess_from_dict(e: dict) -> EnergyStorage:
    return EnergyStorage(
        bus=str(e["bus"]), eta_ch=float(e["eta_ch"]), eta_dc=float(e["eta_dc"]),
        e0=float(e["e0"]), e_min=float(e["e_min"]), e_max=float(e["e_max"]),
        pch_max=float(e["pch_max"]), pdc_max=float(e["pdc_max"]),
    )


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_scenario(path) -> Scenario:
    """Parse, schema-check and invariant-check a scenario file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"{p}: top level must be an object")
    scenario = scenario_from_dict(data)
    validate_scenario(scenario).raise_if_invalid()
    return scenario
