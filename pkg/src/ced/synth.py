"""Seeded synthetic scenario generation.

Scenarios are sized to be comfortably feasible: generation capacity covers at
least 1.4x the worst-period system load (leaving reserve headroom above the
1.3x floor), transmission limits are set around a feasible proportional
dispatch, storage starts mid-band with a do-nothing option, and thermal loads
get enough device power to hold their comfort band from the initial
temperature.  The same (spec, seed) pair always yields an identical scenario.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SynthesisError
from .model import (
    BoundaryBus,
    DistributionNetwork,
    DnLine,
    EnergyStorage,
    Generator,
    Horizon,
    Penalties,
    RenewableDG,
    Scenario,
    ThermalLoad,
    TransmissionGrid,
    TransmissionLine,
    validate_scenario,
)

__all__ = ["SynthSpec", "synthesize_scenario"]


@dataclass(frozen=True)
class SynthSpec:
    tg_buses: int
    gens: int
    dns: int
    dn_buses: int
    ders_per_dn: int
    t_hor: int
    delta_t: float | None = None        # defaults to a 24 h horizon

    @staticmethod
    def from_dict(d: dict) -> "SynthSpec":
        t_hor = d.get("t_hor", d.get("T_hor"))
        if t_hor is None:
            raise SynthesisError("spec needs t_hor")
        return SynthSpec(
            tg_buses=int(d["tg_buses"]), gens=int(d["gens"]), dns=int(d["dns"]),
            dn_buses=int(d["dn_buses"]), ders_per_dn=int(d["ders_per_dn"]),
            t_hor=int(t_hor), delta_t=d.get("delta_t"),
        )


def _tuple(a) -> tuple[float, ...]:
    return tuple(float(x) for x in np.asarray(a, dtype=float))


def _daily_shape(rng: np.random.Generator, t_hor: int, swing: float) -> np.ndarray:
    """Smooth positive daily profile with unit mean and bounded swing."""
    tau = (np.arange(t_hor) + 0.5) / t_hor
    p1, p2 = rng.uniform(0.0, 1.0, size=2)
    a1 = rng.uniform(0.6, 1.0) * swing
    a2 = rng.uniform(0.1, 0.4) * swing
    prof = 1.0 + a1 * np.sin(2 * np.pi * (tau - p1)) + a2 * np.sin(4 * np.pi * (tau - p2))
    return np.maximum(prof, 0.15)


def _solar_shape(rng: np.random.Generator, t_hor: int) -> np.ndarray:
    tau = (np.arange(t_hor) + 0.5) / t_hor
    mid = rng.uniform(0.48, 0.56)
    width = rng.uniform(0.16, 0.22)
    prof = np.maximum(np.cos((tau - mid) * np.pi / width), 0.0) ** 1.5
    return prof


def _tree_edges(rng: np.random.Generator, n: int) -> list[tuple[int, int]]:
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def _tg_network(rng: np.random.Generator, n: int):
    edges = _tree_edges(rng, n)
    existing = {tuple(sorted(e)) for e in edges}
    n_extra = max(0, int(round(0.3 * n)) - 1)
    tries = 0
    while n_extra > 0 and tries < 50 * n:
        i, j = sorted(rng.integers(0, n, size=2).tolist())
        tries += 1
        if i != j and (i, j) not in existing:
            existing.add((i, j))
            edges.append((i, j))
            n_extra -= 1
    x = rng.uniform(0.05, 0.25, size=len(edges))
    # DC shift factors with bus 0 as the reference
    bbus = np.zeros((n, n))
    for (i, j), xe in zip(edges, x):
        b = 1.0 / xe
        bbus[i, i] += b
        bbus[j, j] += b
        bbus[i, j] -= b
        bbus[j, i] -= b
    xmat = np.linalg.inv(bbus[1:, 1:])
    sf = np.zeros((len(edges), n))
    for l, ((i, j), xe) in enumerate(zip(edges, x)):
        row = np.zeros(n)
        if i > 0:
            row += np.concatenate(([0.0], xmat[i - 1])) / xe
        if j > 0:
            row -= np.concatenate(([0.0], xmat[j - 1])) / xe
        sf[l] = row
    return edges, sf


def synthesize_scenario(spec: SynthSpec | dict, seed: int) -> Scenario:
    if isinstance(spec, dict):
        spec = SynthSpec.from_dict(spec)
    if min(spec.tg_buses, spec.gens, spec.t_hor) < 1 or spec.t_hor < 2:
        raise SynthesisError("spec counts must be >= 1 and t_hor >= 2")
    if spec.dns > 0 and spec.dn_buses < 2:
        raise SynthesisError("DNs need at least 2 buses")
    if spec.dns > spec.tg_buses - 1:
        raise SynthesisError("more DNs than available boundary buses")

    rng = np.random.default_rng(seed)
    T = spec.t_hor
    dt = spec.delta_t if spec.delta_t is not None else 24.0 / T
    n = spec.tg_buses
    buses = tuple(f"B{i+1}" for i in range(n))

    # --- TG loads -----------------------------------------------------------
    n_load = max(1, int(round(0.6 * n)))
    load_buses = sorted(rng.choice(n, size=n_load, replace=False).tolist())
    loads: dict[str, tuple[float, ...]] = {}
    load_mat = np.zeros((n, T))
    for b in load_buses:
        prof = rng.uniform(2.0, 5.0) * _daily_shape(rng, T, swing=0.25)
        load_mat[b] = prof
        loads[buses[b]] = _tuple(prof)
    tg_load = load_mat.sum(axis=0)

    # --- DN skeletons (loads sized first so TG capacity can cover them) -----
    dn_root_pos = sorted(rng.choice(np.arange(1, n), size=spec.dns, replace=False).tolist()) if spec.dns else []
    dn_seeds = [rng.integers(0, 2**31 - 1) for _ in range(spec.dns)]
    dn_descs = []
    total_dn_peak = 0.0
    for k in range(spec.dns):
        drng = np.random.default_rng(dn_seeds[k])
        m = spec.dn_buses
        dload = np.zeros((m, T))
        for j in range(1, m):
            dload[j] = drng.uniform(0.3, 1.0) * _daily_shape(drng, T, swing=0.3)
        dn_descs.append({"rng": drng, "load": dload})
        total_dn_peak += float(dload.sum(axis=0).max())

    # --- generators ---------------------------------------------------------
    g = spec.gens
    need = float(tg_load.max()) + total_dn_peak
    if need > 0 and g == 0:
        raise SynthesisError("nonzero load with zero generators")
    total_cap = 1.5 * need + 1.0
    shares = rng.uniform(0.5, 1.5, size=g)
    shares /= shares.sum()
    gen_buses = rng.integers(0, n, size=g)
    generators = []
    for i in range(g):
        cap = float(total_cap * shares[i])
        ramp = float(rng.uniform(0.3, 0.6) * cap)
        generators.append(Generator(
            bus=buses[gen_buses[i]],
            a2=float(rng.uniform(0.004, 0.02)), a1=float(rng.uniform(18.0, 45.0)),
            a0=float(rng.uniform(0.0, 20.0)),
            p_min=0.0, p_max=cap, ramp_up=ramp, ramp_down=ramp,
        ))

    # --- TG renewables and storage ------------------------------------------
    n_tg_dg = max(1, int(round(0.5 * g)))
    n_tg_ess = max(1, int(round(0.3 * g)))
    tg_dgs = []
    for i in range(n_tg_dg):
        cap = float(rng.uniform(0.05, 0.12) * max(need, 1.0))
        shape = _solar_shape(rng, T) if rng.uniform() < 0.5 else _daily_shape(rng, T, swing=0.5)
        prof = np.maximum(cap * shape, 0.03 * cap)
        tg_dgs.append(RenewableDG(bus=buses[int(rng.integers(0, n))], p_min=0.0, p_max=_tuple(prof)))
    tg_ess = [_make_ess(rng, buses[int(rng.integers(0, n))], scale=max(need, 1.0) * 0.05)
              for _ in range(n_tg_ess)]

    dn_load_total = sum(d["load"].sum(axis=0) for d in dn_descs) if dn_descs else np.zeros(T)
    reserve = 0.03 * (tg_load + dn_load_total)

    # --- transmission lines around a feasible proportional dispatch ----------
    edges, sf = _tg_network(rng, n)
    inj = np.zeros((n, T))
    gshare = np.array([gen.p_max for gen in generators])
    gshare = gshare / gshare.sum()
    dn_import = np.zeros((n, T))
    for k, pos in enumerate(dn_root_pos):
        dn_import[pos] += dn_descs[k]["load"].sum(axis=0)
    sys_load = tg_load + dn_import.sum(axis=0)
    for i, gen in enumerate(generators):
        inj[int(gen_buses[i])] += gshare[i] * sys_load
    dgmat = np.zeros((n, T))
    for dg in tg_dgs:
        dgmat[buses.index(dg.bus)] += np.asarray(dg.p_max)
    # renewables at 70% with generators backed off proportionally
    inj_n = inj * (1.0 - 0.7 * dgmat.sum(axis=0) / np.maximum(sys_load, 1e-9)) + 0.7 * dgmat
    flows = sf @ (inj_n - load_mat - dn_import)
    limits = 1.3 * np.abs(flows).max(axis=1) + 1.0
    lines = tuple(
        TransmissionLine(id=f"L{l+1}", limit=float(limits[l]), sf=_tuple(sf[l]))
        for l in range(len(edges))
    )

    # --- distribution networks ----------------------------------------------
    dns = []
    boundary = []
    for k in range(spec.dns):
        dn = _make_dn(dn_descs[k], f"dn{k+1}", buses[dn_root_pos[k]], spec, T, dt)
        dns.append(dn)
        dn_dg_cap = sum(max(d.p_max) for d in dn.dgs)
        dn_ess_ch = sum(e.pch_max for e in dn.storages)
        dn_ess_dc = sum(e.pdc_max for e in dn.storages)
        dn_tl = sum(t.p_max for t in dn.thermal_loads)
        peak = float(dn_descs[k]["load"].sum(axis=0).max())
        hi = 1.3 * (peak + dn_tl + dn_ess_ch) + 1.0
        lo = -1.3 * (dn_dg_cap + dn_ess_dc) - 1.0
        boundary.append(BoundaryBus(bus=buses[dn_root_pos[k]],
                                    p_min=_tuple(np.full(T, lo)),
                                    p_max=_tuple(np.full(T, hi))))

    tg = TransmissionGrid(
        buses=buses, generators=tuple(generators), dgs=tuple(tg_dgs),
        storages=tuple(tg_ess), loads=loads, lines=lines,
        reserve_up=_tuple(reserve), reserve_down=_tuple(reserve),
        boundary_buses=tuple(boundary),
    )
    scenario = Scenario(
        horizon=Horizon(t_hor=T, delta_t=float(dt)),
        tg=tg, dns=tuple(dns),
        penalties=Penalties(sigma_dg=100.0, sigma_ess=0.01, c_pen=1e5),
    )

    # constructor-level feasibility sizing checks
    cap = sum(gen.p_max for gen in generators)
    if cap < 1.3 * sys_load.max():
        raise SynthesisError("generation capacity below 1.3x peak system load")
    report = validate_scenario(scenario)
    if not report:
        raise SynthesisError(f"synthesized scenario invalid: {report.issues[0]}")
    return scenario


def _make_ess(rng: np.random.Generator, bus: str, scale: float) -> EnergyStorage:
    power = float(rng.uniform(0.6, 1.4) * scale)
    hours = float(rng.uniform(2.0, 4.0))
    e_max = power * hours
    e0 = float(rng.uniform(0.45, 0.6) * e_max)
    return EnergyStorage(
        bus=bus, eta_ch=float(rng.uniform(0.9, 0.97)), eta_dc=float(rng.uniform(0.9, 0.97)),
        e0=e0, e_min=float(0.1 * e_max), e_max=float(e_max),
        pch_max=power, pdc_max=power,
    )


def _make_dn(desc: dict, dn_id: str, root_bus: str, spec: SynthSpec, T: int, dt: float) -> DistributionNetwork:
    rng: np.random.Generator = desc["rng"]
    m = spec.dn_buses
    dn_buses = tuple([root_bus] + [f"{dn_id}.N{j}" for j in range(1, m)])
    edges = _tree_edges(rng, m)
    load = desc["load"]

    # downstream load served through each line sets base points and limits
    children: dict[int, list[int]] = {}
    for (i, j) in edges:
        children.setdefault(i, []).append(j)

    def downstream(j: int) -> np.ndarray:
        total = load[j].copy()
        for c in children.get(j, []):
            total += downstream(c)
        return total

    peak = float(load.sum(axis=0).max())
    der_kinds = [("dg", "ess", "tl")[i % 3] for i in range(spec.ders_per_dn)]
    dgs, storages, thermal = [], [], []
    t_out = 27.0 + 5.0 * _daily_shape(rng, T, swing=0.35)
    for i, kind in enumerate(der_kinds):
        bus = dn_buses[int(rng.integers(1, m))] if m > 1 else dn_buses[0]
        if kind == "dg":
            cap = float(rng.uniform(0.4, 0.9) * max(peak, 0.5))
            shape = _solar_shape(rng, T) if rng.uniform() < 0.6 else _daily_shape(rng, T, swing=0.5)
            prof = np.maximum(cap * shape, 0.03 * cap)
            dgs.append(RenewableDG(bus=bus, p_min=0.0, p_max=_tuple(prof)))
        elif kind == "ess":
            storages.append(_make_ess(rng, bus, scale=max(peak, 0.5) * 0.25))
        else:
            m_coef = float(rng.uniform(0.06, 0.18))
            i_coef = float(-rng.uniform(1.5, 3.0))
            band = (21.0, 24.0)
            t_mid = 22.5
            p_ss = m_coef * (t_out - t_mid) / (-i_coef)
            thermal.append(ThermalLoad(
                id=f"{dn_id}.TL{i}", bus=bus, m=m_coef, i_coef=i_coef,
                t_in0=t_mid, t_in_min=band[0], t_in_max=band[1],
                p_max=float(2.2 * p_ss.max() + 0.05),
            ))

    tl_extra = np.zeros(T)
    for tl in thermal:
        tl_extra += tl.p_max
    dg_cap = np.zeros(T)
    for dg in dgs:
        dg_cap += np.asarray(dg.p_max)
    ess_p = sum(e.pdc_max for e in storages)

    dn_lines = []
    for (i, j) in edges:
        flow0 = downstream(j)
        cap_import = flow0.max() + tl_extra.max() + ess_p
        cap_export = dg_cap.max() + ess_p
        limit = float(1.4 * max(cap_import, cap_export) + 0.3)
        p_base = flow0
        q_base = 0.35 * flow0
        v_base = np.ones(T)
        r = float(rng.uniform(0.002, 0.008))
        dn_lines.append(DnLine(
            from_bus=dn_buses[i], to_bus=dn_buses[j], r=r, limit=limit,
            p_base=_tuple(p_base), q_base=_tuple(q_base), v_base=_tuple(v_base),
        ))

    price = 28.0 + 26.0 * (_daily_shape(rng, T, swing=0.45) - 0.55)
    return DistributionNetwork(
        id=dn_id, root_bus=root_bus, buses=dn_buses, lines=tuple(dn_lines),
        dgs=tuple(dgs), storages=tuple(storages), thermal_loads=tuple(thermal),
        loads={dn_buses[j]: _tuple(load[j]) for j in range(1, m)},
        t_out=_tuple(t_out), price=_tuple(price),
    )
