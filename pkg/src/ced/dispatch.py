"""Dispatch solution containers and objective evaluation.

Cost model, per period:
  * generator: ``a2 p^2 + a1 p + a0``
  * renewable curtailment: ``sigma_dg (p - p_avail)^2 / p_avail``
  * storage round-trip penalty: ``sigma_ess (p_dc (1/eta_dc - 1) + p_ch (1 - eta_ch))``
  * DN electricity fee: ``price(t) * p_boundary(t)``
  * soft boundary slack (DN subproblems only): ``c_pen * (s_plus + s_minus)``

The breakdown keeps every component per period and per network so surrogate
values can be split across horizon windows without re-solving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch
from .model import DistributionNetwork, Scenario

__all__ = ["TgDispatch", "DnDispatch", "DispatchSolution", "ObjectiveBreakdown", "eval_objective"]


@dataclass
class TgDispatch:
    p_g: np.ndarray      # (n_gen, T)
    ru: np.ndarray
    rd: np.ndarray
    p_dg: np.ndarray     # (n_dg, T)
    p_ch: np.ndarray     # (n_ess, T)
    p_dc: np.ndarray
    soc: np.ndarray
    p_b: np.ndarray      # (n_boundary, T), power sent to each DN


@dataclass
class DnDispatch:
    p_dg: np.ndarray
    p_ch: np.ndarray
    p_dc: np.ndarray
    soc: np.ndarray
    p_tl: np.ndarray     # (n_thermal, T)
    t_in: np.ndarray
    flows: np.ndarray    # (n_lines, T)
    losses: np.ndarray
    p_b: np.ndarray      # (T,), power received from the TG
    slack_pos: Optional[np.ndarray] = None   # soft boundary slack, if used
    slack_neg: Optional[np.ndarray] = None


@dataclass
class DispatchSolution:
    tg: TgDispatch
    dns: dict[str, DnDispatch] = field(default_factory=dict)


@dataclass
class ObjectiveBreakdown:
    """Per-period cost components; ``dn_*`` map DN id -> (T,) array."""

    tg_gen_cost: np.ndarray
    tg_dg_curtail_pen: np.ndarray
    tg_ess_pen: np.ndarray
    dn_electricity_fee: dict[str, np.ndarray]
    dn_dg_curtail_pen: dict[str, np.ndarray]
    dn_ess_pen: dict[str, np.ndarray]
    dn_boundary_slack_pen: dict[str, np.ndarray]

    @property
    def tg_total(self) -> float:
        return float(self.tg_gen_cost.sum() + self.tg_dg_curtail_pen.sum() + self.tg_ess_pen.sum())

    def dn_period_costs(self, k: str) -> np.ndarray:
        return (self.dn_electricity_fee[k] + self.dn_dg_curtail_pen[k]
                + self.dn_ess_pen[k] + self.dn_boundary_slack_pen[k])

    def dn_total(self, k: str) -> float:
        return float(self.dn_period_costs(k).sum())

    @property
    def total(self) -> float:
        return self.tg_total + sum(self.dn_total(k) for k in self.dn_electricity_fee)


def _gen_cost(scen_gens, p_g: np.ndarray) -> np.ndarray:
    if not scen_gens:
        return np.zeros(p_g.shape[1] if p_g.ndim == 2 else 0)
    a2 = np.array([g.a2 for g in scen_gens])[:, None]
    a1 = np.array([g.a1 for g in scen_gens])[:, None]
    a0 = np.array([g.a0 for g in scen_gens])[:, None]
    return (a2 * p_g**2 + a1 * p_g + a0).sum(axis=0)


def _curtail_pen(sigma_dg: float, dgs, p_dg: np.ndarray) -> np.ndarray:
    if not dgs:
        return np.zeros(p_dg.shape[1] if p_dg.ndim == 2 else 0)
    p_avail = np.array([d.p_max for d in dgs])
    return (sigma_dg * (p_dg - p_avail) ** 2 / p_avail).sum(axis=0)


def _ess_pen(sigma_ess: float, storages, p_ch: np.ndarray, p_dc: np.ndarray) -> np.ndarray:
    if not storages:
        return np.zeros(p_ch.shape[1] if p_ch.ndim == 2 else 0)
    dc_w = np.array([1.0 / e.eta_dc - 1.0 for e in storages])[:, None]
    ch_w = np.array([1.0 - e.eta_ch for e in storages])[:, None]
    return (sigma_ess * (dc_w * p_dc + ch_w * p_ch)).sum(axis=0)


def dn_period_costs(s: Scenario, dn: DistributionNetwork, d: DnDispatch) -> np.ndarray:
    """One DN's objective, one value per period (fee + curtailment + storage
    penalty + any boundary-slack penalty)."""
    t_hor = s.horizon.t_hor
    out = np.asarray(dn.price, dtype=float) * d.p_b
    out = out + _curtail_pen(s.penalties.sigma_dg, dn.dgs, d.p_dg) if dn.dgs else out
    out = out + _ess_pen(s.penalties.sigma_ess, dn.storages, d.p_ch, d.p_dc) if dn.storages else out
    if d.slack_pos is not None:
        out = out + s.penalties.c_pen * (d.slack_pos + d.slack_neg)
    if out.shape != (t_hor,):
        raise DimensionMismatch(f"dn {dn.id} period costs have shape {out.shape}")
    return out


def eval_objective(s: Scenario, d: DispatchSolution) -> ObjectiveBreakdown:
    """Recompute the full cost breakdown from dispatch values."""
    t_hor = s.horizon.t_hor
    tg = s.tg
    zeros = np.zeros(t_hor)

    def _shape(name, arr, n_rows):
        expected = (n_rows, t_hor)
        if arr.shape != expected:
            raise DimensionMismatch(f"{name}: expected shape {expected}, got {arr.shape}")

    _shape("tg.p_g", d.tg.p_g, len(tg.generators))
    _shape("tg.p_dg", d.tg.p_dg, len(tg.dgs))
    _shape("tg.p_ch", d.tg.p_ch, len(tg.storages))
    _shape("tg.p_b", d.tg.p_b, len(tg.boundary_buses))

    gen = _gen_cost(tg.generators, d.tg.p_g) if tg.generators else zeros.copy()
    curt = _curtail_pen(s.penalties.sigma_dg, tg.dgs, d.tg.p_dg) if tg.dgs else zeros.copy()
    ess = _ess_pen(s.penalties.sigma_ess, tg.storages, d.tg.p_ch, d.tg.p_dc) if tg.storages else zeros.copy()

    fee: dict[str, np.ndarray] = {}
    dn_curt: dict[str, np.ndarray] = {}
    dn_ess: dict[str, np.ndarray] = {}
    dn_slack: dict[str, np.ndarray] = {}
    for dn in s.dns:
        dd = d.dns.get(dn.id)
        if dd is None:
            raise DimensionMismatch(f"missing dispatch for dn {dn.id}")
        if dd.p_b.shape != (t_hor,):
            raise DimensionMismatch(f"dn {dn.id} boundary has shape {dd.p_b.shape}")
        _shape(f"dn {dn.id} p_dg", dd.p_dg, len(dn.dgs))
        fee[dn.id] = np.asarray(dn.price, dtype=float) * dd.p_b
        dn_curt[dn.id] = _curtail_pen(s.penalties.sigma_dg, dn.dgs, dd.p_dg) if dn.dgs else zeros.copy()
        dn_ess[dn.id] = _ess_pen(s.penalties.sigma_ess, dn.storages, dd.p_ch, dd.p_dc) if dn.storages else zeros.copy()
        if dd.slack_pos is not None:
            dn_slack[dn.id] = s.penalties.c_pen * (dd.slack_pos + dd.slack_neg)
        else:
            dn_slack[dn.id] = zeros.copy()

    return ObjectiveBreakdown(
        tg_gen_cost=gen, tg_dg_curtail_pen=curt, tg_ess_pen=ess,
        dn_electricity_fee=fee, dn_dg_curtail_pen=dn_curt, dn_ess_pen=dn_ess,
        dn_boundary_slack_pen=dn_slack,
    )
