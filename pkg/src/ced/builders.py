"""Assembly of the dispatch QPs.

Four program families share the same vectorized block builders:

  * ``build_centralized``     -- the monolithic TG + all-DN program (oracle).
  * ``build_dn_problem``      -- one DN with its boundary power fixed per
                                 period (optionally softly, via priced slack).
  * ``build_tg_coordinated``  -- the TG master with per-DN epigraph variables
                                 over the accumulated affine under-estimators,
                                 plus the quadratic curvature of the latest
                                 value-function model in the objective.
  * ``build_tg_subproblem``   -- the TG restricted to one horizon window
                                 (owned periods plus the duplicated seam
                                 period), with windowed surrogates and
                                 consensus penalty terms.

Boundary convention: ``pb`` is the power a DN imports from the TG (positive =
TG injects into the DN's root).  TG-side rows treat it as a withdrawal; the
DN root-bus balance treats it as an injection.

Surrogate convention: per DN the master minimizes ``theta + 0.5 (l-a)'Q(l-a)``
with ``theta`` lower-bounded by every stored affine cut.  The quadratic tail
is anchored at the most recent proposal, so the enforced model dominates both
the plain cut pile and the latest second-order model, and coincides with them
at the anchor.  This keeps every program a plain QP (linear constraints only).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dispatch import DispatchSolution, DnDispatch, TgDispatch
from .errors import InvariantError
from .horizon import CouplingLayout, HorizonPartition
from .model import DistributionNetwork, Scenario, validate_scenario
from .qp import QpSolution, QuadraticProgram

__all__ = [
    "build_centralized",
    "build_dn_problem",
    "build_tg_coordinated",
    "build_tg_subproblem",
    "ConsensusTerms",
    "extract_centralized",
    "extract_dn",
    "extract_tg_window",
    "boundary_of",
    "check_tg_physics",
]

_BIG = 1e30


# ---------------------------------------------------------------------------
# numpy views of scenario entities


class _TgView:
    def __init__(self, s: Scenario):
        tg = s.tg
        self.t_hor = s.horizon.t_hor
        self.dt = s.horizon.delta_t
        self.bus_pos = {b: i for i, b in enumerate(tg.buses)}
        g = tg.generators
        self.n_gen = len(g)
        self.g_bus = np.array([self.bus_pos[x.bus] for x in g], dtype=np.int64)
        self.a2 = np.array([x.a2 for x in g])
        self.a1 = np.array([x.a1 for x in g])
        self.a0 = np.array([x.a0 for x in g])
        self.g_lo = np.array([x.p_min for x in g])
        self.g_hi = np.array([x.p_max for x in g])
        self.r_up = np.array([x.ramp_up for x in g])
        self.r_dn = np.array([x.ramp_down for x in g])
        d = tg.dgs
        self.n_dg = len(d)
        self.dg_bus = np.array([self.bus_pos[x.bus] for x in d], dtype=np.int64)
        self.dg_lo = np.array([x.p_min for x in d])
        self.dg_hi = np.array([x.p_max for x in d]).reshape(self.n_dg, self.t_hor)
        e = tg.storages
        self.n_ess = len(e)
        self.e_bus = np.array([self.bus_pos[x.bus] for x in e], dtype=np.int64)
        self.eta_ch = np.array([x.eta_ch for x in e])
        self.eta_dc = np.array([x.eta_dc for x in e])
        self.e0 = np.array([x.e0 for x in e])
        self.e_lo = np.array([x.e_min for x in e])
        self.e_hi = np.array([x.e_max for x in e])
        self.pch_hi = np.array([x.pch_max for x in e])
        self.pdc_hi = np.array([x.pdc_max for x in e])
        self.load = np.zeros((len(tg.buses), self.t_hor))
        for b, prof in tg.loads.items():
            self.load[self.bus_pos[b]] += np.asarray(prof)
        self.load_sum = self.load.sum(axis=0)
        self.n_line = len(tg.lines)
        self.sf = np.array([ln.sf for ln in tg.lines]).reshape(self.n_line, len(tg.buses))
        self.line_hi = np.array([ln.limit for ln in tg.lines])
        self.sf_load = self.sf @ self.load if self.n_line else np.zeros((0, self.t_hor))
        self.sru = np.asarray(tg.reserve_up)
        self.srd = np.asarray(tg.reserve_down)
        bb = tg.boundary_buses
        self.n_bnd = len(bb)
        self.b_bus = np.array([self.bus_pos[x.bus] for x in bb], dtype=np.int64)
        self.b_lo = np.full((self.n_bnd, self.t_hor), -_BIG)
        self.b_hi = np.full((self.n_bnd, self.t_hor), _BIG)
        for i, x in enumerate(bb):
            if x.p_min is not None:
                self.b_lo[i] = np.asarray(x.p_min)
            if x.p_max is not None:
                self.b_hi[i] = np.asarray(x.p_max)
        self.bnd_row = {x.bus: i for i, x in enumerate(bb)}


class _DnView:
    def __init__(self, s: Scenario, dn: DistributionNetwork):
        self.t_hor = s.horizon.t_hor
        self.dt = s.horizon.delta_t
        self.bus_pos = {b: i for i, b in enumerate(dn.buses)}
        self.root = self.bus_pos[dn.root_bus]
        self.n_bus = len(dn.buses)
        self.n_line = len(dn.lines)
        self.l_from = np.array([self.bus_pos[ln.from_bus] for ln in dn.lines], dtype=np.int64)
        self.l_to = np.array([self.bus_pos[ln.to_bus] for ln in dn.lines], dtype=np.int64)
        self.l_hi = np.array([ln.limit for ln in dn.lines])
        r = np.array([ln.r for ln in dn.lines])[:, None]
        pb_ = np.array([ln.p_base for ln in dn.lines]).reshape(self.n_line, self.t_hor)
        qb_ = np.array([ln.q_base for ln in dn.lines]).reshape(self.n_line, self.t_hor)
        vb_ = np.array([ln.v_base for ln in dn.lines]).reshape(self.n_line, self.t_hor)
        # linearized loss J = a_const + beta * (flow - p_base)
        self.beta = 2.0 * pb_ * r / vb_**2
        self.a_const = (pb_**2 + qb_**2) * r / vb_**2
        self.p_base = pb_
        d = dn.dgs
        self.n_dg = len(d)
        self.dg_bus = np.array([self.bus_pos[x.bus] for x in d], dtype=np.int64)
        self.dg_lo = np.array([x.p_min for x in d])
        self.dg_hi = np.array([x.p_max for x in d]).reshape(self.n_dg, self.t_hor)
        e = dn.storages
        self.n_ess = len(e)
        self.e_bus = np.array([self.bus_pos[x.bus] for x in e], dtype=np.int64)
        self.eta_ch = np.array([x.eta_ch for x in e])
        self.eta_dc = np.array([x.eta_dc for x in e])
        self.e0 = np.array([x.e0 for x in e])
        self.e_lo = np.array([x.e_min for x in e])
        self.e_hi = np.array([x.e_max for x in e])
        self.pch_hi = np.array([x.pch_max for x in e])
        self.pdc_hi = np.array([x.pdc_max for x in e])
        tl = dn.thermal_loads
        self.n_tl = len(tl)
        self.tl_bus = np.array([self.bus_pos[x.bus] for x in tl], dtype=np.int64)
        self.tl_m = np.array([x.m for x in tl])
        self.tl_i = np.array([x.i_coef for x in tl])
        self.tl_t0 = np.array([x.t_in0 for x in tl])
        self.tl_lo = np.array([x.t_in_min for x in tl])
        self.tl_hi = np.array([x.t_in_max for x in tl])
        self.tl_p = np.array([x.p_max for x in tl])
        self.load = np.zeros((self.n_bus, self.t_hor))
        for b, prof in dn.loads.items():
            self.load[self.bus_pos[b]] += np.asarray(prof)
        self.t_out = np.asarray(dn.t_out)
        self.price = np.asarray(dn.price)


# ---------------------------------------------------------------------------
# block index bundles


@dataclass
class TgBlock:
    window: np.ndarray          # global zero-based periods covered
    owned: np.ndarray           # boolean mask over the window
    pg: np.ndarray
    ru: np.ndarray
    rd: np.ndarray
    pdg: np.ndarray
    pch: np.ndarray
    pdc: np.ndarray
    soc: np.ndarray
    pb: np.ndarray
    soc_prev: Optional[np.ndarray]
    view: _TgView

    def coupling_indices(self, layout: CouplingLayout, seam: int, side: str) -> np.ndarray:
        """Flat variable indices of the seam vector.  ``seam`` is the zero-based
        owned period just left of the cut; ``side`` is 'left' (this block sits
        right of the seam) or 'right' (this block owns the seam period)."""
        w0 = int(self.window[0])
        arrays = {"pg": self.pg, "soc": self.soc, "pdc": self.pdc,
                  "pch": self.pch, "pdg": self.pdg, "pb": self.pb}
        out = np.empty(layout.size, dtype=np.int64)
        for i, (kind, ent, off) in enumerate(layout.entries):
            period = seam + off
            if side == "left" and kind == "soc" and off == 0:
                out[i] = self.soc_prev[ent]
            else:
                out[i] = arrays[kind][ent, period - w0]
        return out


@dataclass
class DnBlock:
    prefix: str
    flow: np.ndarray
    pdg: np.ndarray
    pch: np.ndarray
    pdc: np.ndarray
    soc: np.ndarray
    ptl: np.ndarray
    tin: np.ndarray
    pb: np.ndarray
    bound_rows: Optional[np.ndarray]
    slack_pos: Optional[np.ndarray]
    slack_neg: Optional[np.ndarray]
    view: _DnView


@dataclass
class SurrogateInfo:
    theta: Optional[int]                 # epigraph variable index, if any
    q: Optional[np.ndarray]              # quadratic tail (dense) over l indices
    anchor: Optional[np.ndarray]
    l_idx: np.ndarray                    # boundary variable indices it applies to
    cut_rows: Optional[np.ndarray]


# ---------------------------------------------------------------------------
# TG block assembly


def _add_tg_block(qp: QuadraticProgram, v: _TgView, window: np.ndarray,
                  owned: np.ndarray) -> TgBlock:
    W = len(window)
    dt = v.dt
    pg = qp.add_vars("pg", (v.n_gen, W), lb=v.g_lo[:, None], ub=v.g_hi[:, None])
    ru = qp.add_vars("ru", (v.n_gen, W), lb=0.0, ub=(v.r_up * dt)[:, None])
    rd = qp.add_vars("rd", (v.n_gen, W), lb=0.0, ub=(v.r_dn * dt)[:, None])
    pdg = qp.add_vars("pdg", (v.n_dg, W), lb=v.dg_lo[:, None], ub=v.dg_hi[:, window])
    pch = qp.add_vars("pch", (v.n_ess, W), lb=0.0, ub=v.pch_hi[:, None])
    pdc = qp.add_vars("pdc", (v.n_ess, W), lb=0.0, ub=v.pdc_hi[:, None])
    soc = qp.add_vars("soc", (v.n_ess, W), lb=v.e_lo[:, None], ub=v.e_hi[:, None])
    pb = qp.add_vars("pb", (v.n_bnd, W), lb=v.b_lo[:, window], ub=v.b_hi[:, window])
    soc_prev = None
    if window[0] > 0 and v.n_ess:
        soc_prev = qp.add_vars("soc_prev", (v.n_ess,), lb=v.e_lo, ub=v.e_hi)

    # power balance per window period
    rows, cols, vals = [], [], []
    for mat, sign in ((pg, 1.0), (pdg, 1.0), (pdc, 1.0), (pch, -1.0), (pb, -1.0)):
        if mat.size == 0:
            continue
        n_ent = mat.shape[0]
        rows.append(np.repeat(np.arange(W), n_ent))
        cols.append(mat.T.ravel())
        vals.append(np.full(n_ent * W, sign))
    qp.add_cons("balance", (W,),
                np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64),
                np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64),
                np.concatenate(vals) if vals else np.zeros(0),
                "==", v.load_sum[window])

    # branch limits via shift factors (power moved to each line by every device)
    if v.n_line:
        rows, cols, vals = [], [], []
        for mat, buses, sign in ((pg, v.g_bus, 1.0), (pdg, v.dg_bus, 1.0),
                                 (pdc, v.e_bus, 1.0), (pch, v.e_bus, -1.0),
                                 (pb, v.b_bus, -1.0)):
            if mat.size == 0:
                continue
            C = v.sf[:, buses] * sign           # (L, n_ent)
            jj, ee = np.nonzero(np.abs(C) > 1e-12)
            if jj.size == 0:
                continue
            rows.append((jj[:, None] * W + np.arange(W)[None, :]).ravel())
            cols.append(mat[ee].ravel())
            vals.append(np.repeat(C[jj, ee], W))
        trip_rows = np.concatenate(rows)
        trip_cols = np.concatenate(cols)
        trip_vals = np.concatenate(vals)
        rhs_hi = (v.line_hi[:, None] + v.sf_load[:, window]).ravel()
        rhs_lo = (-v.line_hi[:, None] + v.sf_load[:, window]).ravel()
        qp.add_cons("line_hi", (v.n_line, W), trip_rows, trip_cols, trip_vals, "<=", rhs_hi)
        qp.add_cons("line_lo", (v.n_line, W), trip_rows, trip_cols, trip_vals, ">=", rhs_lo)

    # reserve headroom and system reserve requirements
    if v.n_gen:
        nv = v.n_gen * W
        local = np.arange(nv)
        qp.add_cons("ru_cap", (v.n_gen, W), np.concatenate([local, local]),
                    np.concatenate([ru.ravel(), pg.ravel()]), np.ones(2 * nv),
                    "<=", np.repeat(v.g_hi, W))
        qp.add_cons("rd_cap", (v.n_gen, W), np.concatenate([local, local]),
                    np.concatenate([rd.ravel(), pg.ravel()]),
                    np.concatenate([np.ones(nv), -np.ones(nv)]),
                    "<=", np.repeat(-v.g_lo, W))
        qp.add_cons("sru", (W,), np.repeat(np.arange(W), v.n_gen), ru.T.ravel(),
                    np.ones(nv), ">=", v.sru[window])
        qp.add_cons("srd", (W,), np.repeat(np.arange(W), v.n_gen), rd.T.ravel(),
                    np.ones(nv), ">=", v.srd[window])

        # ramping between consecutive window periods (the seam link to the
        # period left of the window belongs to the left neighbour)
        if W > 1:
            nl = v.n_gen * (W - 1)
            local = np.arange(nl)
            cur = pg[:, 1:].ravel()
            prev = pg[:, :-1].ravel()
            trip = (np.concatenate([local, local]), np.concatenate([cur, prev]),
                    np.concatenate([np.ones(nl), -np.ones(nl)]))
            qp.add_cons("ramp_up", (v.n_gen, W - 1), *trip, "<=", np.repeat(v.r_up * dt, W - 1))
            qp.add_cons("ramp_dn", (v.n_gen, W - 1), *trip, ">=", np.repeat(-v.r_dn * dt, W - 1))

    # storage SOC chaining; the first window period chains to soc_prev (seam)
    # or to the initial SOC constant
    if v.n_ess:
        _add_soc_chain(qp, "soc_bal", pch, pdc, soc, soc_prev, v.eta_ch, v.eta_dc,
                       v.e0, dt, first_global=int(window[0]))
        if window[-1] == v.t_hor - 1:
            qp.add_cons("soc_final", (v.n_ess,), np.arange(v.n_ess), soc[:, -1],
                        np.ones(v.n_ess), "==", v.e0)

    # physical costs, owned periods only
    oc = np.flatnonzero(owned)
    if v.n_gen and oc.size:
        qp.add_quad_diag(pg[:, oc], np.broadcast_to(v.a2[:, None], (v.n_gen, oc.size)))
        qp.add_lin(pg[:, oc], np.broadcast_to(v.a1[:, None], (v.n_gen, oc.size)))
        qp.obj_const += float(v.a0.sum() * oc.size)
    if v.n_dg and oc.size:
        avail = v.dg_hi[:, window[oc]]
        sig = qp.sigma_dg
        qp.add_quad_diag(pdg[:, oc], sig / avail)
        qp.add_lin(pdg[:, oc], np.full((v.n_dg, oc.size), -2.0 * sig))
        qp.obj_const += float(sig * avail.sum())
    if v.n_ess and oc.size:
        se = qp.sigma_ess
        qp.add_lin(pdc[:, oc], np.broadcast_to((se * (1.0 / v.eta_dc - 1.0))[:, None], (v.n_ess, oc.size)))
        qp.add_lin(pch[:, oc], np.broadcast_to((se * (1.0 - v.eta_ch))[:, None], (v.n_ess, oc.size)))

    return TgBlock(window=window, owned=owned, pg=pg, ru=ru, rd=rd, pdg=pdg,
                   pch=pch, pdc=pdc, soc=soc, pb=pb, soc_prev=soc_prev, view=v)


def _add_soc_chain(qp, name, pch, pdc, soc, soc_prev, eta_ch, eta_dc, e0, dt, first_global):
    n_ess, W = soc.shape
    rows, cols, vals = [], [], []
    nv = n_ess * W
    local = np.arange(nv)
    rows += [local, local, local]
    cols += [soc.ravel(), pch.ravel(), pdc.ravel()]
    vals += [np.ones(nv),
             np.repeat(-eta_ch * dt, W),
             np.repeat(dt / eta_dc, W)]
    if W > 1:
        prev_rows = local.reshape(n_ess, W)[:, 1:].ravel()
        rows.append(prev_rows)
        cols.append(soc[:, :-1].ravel())
        vals.append(-np.ones(n_ess * (W - 1)))
    rhs = np.zeros((n_ess, W))
    first_rows = local.reshape(n_ess, W)[:, 0]
    if first_global > 0:
        rows.append(first_rows)
        cols.append(soc_prev)
        vals.append(-np.ones(n_ess))
    else:
        rhs[:, 0] = e0
    qp.add_cons(name, (n_ess, W), np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals), "==", rhs.ravel())


# ---------------------------------------------------------------------------
# DN block assembly


def _add_dn_block(qp: QuadraticProgram, v: _DnView, prefix: str,
                  boundary_fix=None, slack: bool = False,
                  with_cost: bool = True) -> DnBlock:
    T = v.t_hor
    p = prefix
    flow = qp.add_vars(p + "flow", (v.n_line, T), lb=-v.l_hi[:, None], ub=v.l_hi[:, None])
    pdg = qp.add_vars(p + "pdg", (v.n_dg, T), lb=v.dg_lo[:, None], ub=v.dg_hi)
    pch = qp.add_vars(p + "pch", (v.n_ess, T), lb=0.0, ub=v.pch_hi[:, None])
    pdc = qp.add_vars(p + "pdc", (v.n_ess, T), lb=0.0, ub=v.pdc_hi[:, None])
    soc = qp.add_vars(p + "soc", (v.n_ess, T), lb=v.e_lo[:, None], ub=v.e_hi[:, None])
    ptl = qp.add_vars(p + "ptl", (v.n_tl, T), lb=0.0, ub=v.tl_p[:, None])
    tin = qp.add_vars(p + "tin", (v.n_tl, T), lb=v.tl_lo[:, None], ub=v.tl_hi[:, None])
    pb = qp.add_vars(p + "pb", (T,))

    # nodal balance with linearized line losses folded in:
    # sum_in (1-beta) flow - sum_out flow + local injection = load + sum_in (a_const - beta p_base)
    rows, cols, vals = [], [], []
    rhs = v.load.copy()
    if v.n_line:
        tt = np.arange(T)
        to_rows = (v.l_to[:, None] * T + tt[None, :]).ravel()
        rows.append(to_rows)
        cols.append(flow.ravel())
        vals.append((1.0 - v.beta).ravel())
        from_rows = (v.l_from[:, None] * T + tt[None, :]).ravel()
        rows.append(from_rows)
        cols.append(flow.ravel())
        vals.append(np.full(v.n_line * T, -1.0))
        np.add.at(rhs, v.l_to, v.a_const - v.beta * v.p_base)
    for mat, buses, sign in ((pdg, v.dg_bus, 1.0), (pdc, v.e_bus, 1.0),
                             (pch, v.e_bus, -1.0), (ptl, v.tl_bus, -1.0)):
        if mat.size == 0:
            continue
        n_ent = mat.shape[0]
        rows.append((buses[:, None] * T + np.arange(T)[None, :]).ravel())
        cols.append(mat.ravel())
        vals.append(np.full(n_ent * T, sign))
    rows.append(v.root * T + np.arange(T))
    cols.append(pb)
    vals.append(np.ones(T))
    qp.add_cons(p + "nodal", (v.n_bus, T), np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals), "==", rhs.ravel())

    if v.n_ess:
        _add_soc_chain(qp, p + "soc_bal", pch, pdc, soc, None, v.eta_ch, v.eta_dc,
                       v.e0, v.dt, first_global=0)
        qp.add_cons(p + "soc_final", (v.n_ess,), np.arange(v.n_ess), soc[:, -1],
                    np.ones(v.n_ess), "==", v.e0)

    # indoor temperature chain, anchored at the initial temperature:
    # tin[t] - (1-m) tin[t-1] - i_coef ptl[t] = m t_out[t]
    if v.n_tl:
        nv = v.n_tl * T
        local = np.arange(nv)
        rows = [local, local]
        cols = [tin.ravel(), ptl.ravel()]
        vals = [np.ones(nv), np.repeat(-v.tl_i, T)]
        prev_rows = local.reshape(v.n_tl, T)[:, 1:].ravel()
        rows.append(prev_rows)
        cols.append(tin[:, :-1].ravel())
        vals.append(np.repeat(-(1.0 - v.tl_m), T - 1))
        rhs = v.tl_m[:, None] * v.t_out[None, :] * np.ones((v.n_tl, T))
        rhs[:, 0] += (1.0 - v.tl_m) * v.tl_t0
        qp.add_cons(p + "tin_bal", (v.n_tl, T), np.concatenate(rows),
                    np.concatenate(cols), np.concatenate(vals), "==", rhs.ravel())

    bound_rows = None
    slack_pos = slack_neg = None
    if boundary_fix is not None:
        l = np.asarray(boundary_fix, dtype=float)
        if l.shape != (T,):
            raise InvariantError(f"boundary_fix must have length {T}")
        if slack:
            slack_pos = qp.add_vars(p + "slack_pos", (T,), lb=0.0)
            slack_neg = qp.add_vars(p + "slack_neg", (T,), lb=0.0)
            local = np.arange(T)
            bound_rows = qp.add_cons(p + "bound", (T,),
                                     np.concatenate([local, local, local]),
                                     np.concatenate([pb, slack_pos, slack_neg]),
                                     np.concatenate([np.ones(T), -np.ones(T), np.ones(T)]),
                                     "==", l)
            if with_cost:
                qp.add_lin(slack_pos, qp.c_pen)
                qp.add_lin(slack_neg, qp.c_pen)
        else:
            bound_rows = qp.add_cons(p + "bound", (T,), np.arange(T), pb, np.ones(T), "==", l)

    if with_cost:
        qp.add_lin(pb, v.price)
        if v.n_dg:
            sig = qp.sigma_dg
            qp.add_quad_diag(pdg, sig / v.dg_hi)
            qp.add_lin(pdg, np.full((v.n_dg, T), -2.0 * sig))
            qp.obj_const += float(sig * v.dg_hi.sum())
        if v.n_ess:
            se = qp.sigma_ess
            qp.add_lin(pdc, np.broadcast_to((se * (1.0 / v.eta_dc - 1.0))[:, None], (v.n_ess, T)))
            qp.add_lin(pch, np.broadcast_to((se * (1.0 - v.eta_ch))[:, None], (v.n_ess, T)))

    return DnBlock(prefix=p, flow=flow, pdg=pdg, pch=pch, pdc=pdc, soc=soc,
                   ptl=ptl, tin=tin, pb=pb, bound_rows=bound_rows,
                   slack_pos=slack_pos, slack_neg=slack_neg, view=v)


# ---------------------------------------------------------------------------
# surrogate attachment


def _attach_surrogates(qp: QuadraticProgram, name: str, l_idx: np.ndarray,
                       owned_cols: np.ndarray, cut_list, proj) -> SurrogateInfo:
    """Add one DN's epigraph variable, its affine cut rows (over owned
    periods) and the quadratic tail (over the whole window).

    Cut-like objects expose ``value`` (scalar, already restricted to the owned
    share), ``slope`` and ``anchor`` (arrays aligned with ``l_idx``); only the
    ``owned_cols`` positions of slope/anchor enter the row.
    """
    if not cut_list and proj is None:
        return SurrogateInfo(theta=None, q=None, anchor=None, l_idx=l_idx, cut_rows=None)
    if not cut_list:
        if not hasattr(proj, "value"):
            raise InvariantError(f"{name}: quadratic tail supplied without any cut")
        cut_list = [proj]  # the second-order model carries its own base cut
    theta = qp.add_vars(name + ":theta")
    qp.add_lin(theta, 1.0)
    n_cuts = len(cut_list)
    n_owned = owned_cols.size
    l_owned = l_idx[owned_cols]
    rows = np.repeat(np.arange(n_cuts), n_owned + 1)
    cols = np.concatenate([np.concatenate(([theta], l_owned)) for _ in range(n_cuts)])
    vals = np.concatenate([np.concatenate(([1.0], -np.asarray(c.slope)[owned_cols]))
                           for c in cut_list])
    rhs = np.array([
        c.value - float(np.asarray(c.slope)[owned_cols] @ np.asarray(c.anchor)[owned_cols])
        for c in cut_list
    ])
    cut_rows = qp.add_cons(name + ":cut", (n_cuts,), rows, cols, vals, ">=", rhs)
    q_mat = anchor = None
    if proj is not None and getattr(proj, "q", None) is not None:
        q_mat = np.asarray(proj.q, dtype=float)
        anchor = np.asarray(proj.anchor, dtype=float)
        if np.any(q_mat):
            qp.add_quad_form(l_idx, q_mat, anchor=anchor)
    return SurrogateInfo(theta=theta, q=q_mat, anchor=anchor, l_idx=l_idx, cut_rows=cut_rows)


# ---------------------------------------------------------------------------
# public builders


def _fresh_qp(s: Scenario, name: str) -> QuadraticProgram:
    qp = QuadraticProgram(name)
    qp.sigma_dg = s.penalties.sigma_dg
    qp.sigma_ess = s.penalties.sigma_ess
    qp.c_pen = s.penalties.c_pen
    return qp


def build_centralized(s: Scenario) -> QuadraticProgram:
    """The monolithic program over the TG and every DN, with hard per-period
    boundary equalities linking the two sides."""
    validate_scenario(s).raise_if_invalid()
    qp = _fresh_qp(s, "centralized")
    v = _TgView(s)
    window = np.arange(s.horizon.t_hor)
    owned = np.ones(s.horizon.t_hor, dtype=bool)
    tg_block = _add_tg_block(qp, v, window, owned)
    dn_blocks: dict[str, DnBlock] = {}
    link_rows: dict[str, np.ndarray] = {}
    T = s.horizon.t_hor
    for dn in s.dns:
        dv = _DnView(s, dn)
        blk = _add_dn_block(qp, dv, prefix=f"dn{dn.id}:")
        dn_blocks[dn.id] = blk
        row = v.bnd_row[dn.root_bus]
        local = np.arange(T)
        link_rows[dn.id] = qp.add_cons(
            f"dn{dn.id}:link", (T,), np.concatenate([local, local]),
            np.concatenate([tg_block.pb[row], blk.pb]),
            np.concatenate([np.ones(T), -np.ones(T)]), "==", np.zeros(T))
    qp.meta = {"kind": "centralized", "tg": tg_block, "dns": dn_blocks,
               "links": link_rows, "scenario": s}
    return qp


def build_dn_problem(s: Scenario, k: str, boundary_fix=None, slack: bool = False) -> QuadraticProgram:
    """One DN's program.  With ``boundary_fix`` the per-period import is pinned
    by named equalities ``bound[t]`` (duals = boundary multipliers); with
    ``slack`` the equality is relaxed by two nonnegative slacks priced at
    ``c_pen`` so any proposal yields a bounded response."""
    dn = _dn_by_id(s, k)
    qp = _fresh_qp(s, f"dn-{k}")
    dv = _DnView(s, dn)
    blk = _add_dn_block(qp, dv, prefix="", boundary_fix=boundary_fix, slack=slack)
    qp.meta = {"kind": "dn", "dn": blk, "scenario": s, "dn_id": k}
    return qp


def _dn_by_id(s: Scenario, k: str) -> DistributionNetwork:
    for dn in s.dns:
        if dn.id == k:
            return dn
    raise InvariantError(f"unknown DN id {k!r}")


def build_tg_coordinated(s: Scenario, cuts: dict, projections: dict) -> QuadraticProgram:
    """The TG master: TG physics over the full horizon plus, per DN, an
    epigraph over its affine cuts and the latest quadratic tail."""
    qp = _fresh_qp(s, "tg-master")
    v = _TgView(s)
    T = s.horizon.t_hor
    window = np.arange(T)
    owned = np.ones(T, dtype=bool)
    tg_block = _add_tg_block(qp, v, window, owned)
    surrogates: dict[str, SurrogateInfo] = {}
    all_cols = np.arange(T)
    for dn in s.dns:
        row = v.bnd_row[dn.root_bus]
        surrogates[dn.id] = _attach_surrogates(
            qp, f"dn{dn.id}", tg_block.pb[row], all_cols,
            list(cuts.get(dn.id, ())), projections.get(dn.id))
    qp.meta = {"kind": "tg-master", "tg": tg_block, "surrogates": surrogates, "scenario": s}
    return qp


@dataclass
class ConsensusTerms:
    """Augmented-Lagrangian data for one subproblem's seams (scaled-dual form).

    ``left``/``right`` are ``(z, u)`` pairs aligned with the coupling layout;
    the x-update minimizes ``f + (rho/2) ||y - z + u||^2`` per present side.
    """
    rho: float
    left: Optional[tuple[np.ndarray, np.ndarray]] = None
    right: Optional[tuple[np.ndarray, np.ndarray]] = None


def build_tg_subproblem(s: Scenario, part: HorizonPartition, n: int,
                        cuts_n: dict, proj_n: dict,
                        consensus: Optional[ConsensusTerms] = None) -> QuadraticProgram:
    """TG subproblem ``n`` (1-based): physics over its window, physical and
    surrogate costs over owned periods only, quadratic tails over the window,
    and consensus penalties on both seam vectors."""
    qp = _fresh_qp(s, f"tg-sub{n}")
    v = _TgView(s)
    window = part.window(n)
    owned_range = part.owned(n)
    owned = np.isin(window, owned_range)
    tg_block = _add_tg_block(qp, v, window, owned)
    owned_cols = np.flatnonzero(owned)
    surrogates: dict[str, SurrogateInfo] = {}
    for dn in s.dns:
        row = v.bnd_row[dn.root_bus]
        surrogates[dn.id] = _attach_surrogates(
            qp, f"dn{dn.id}", tg_block.pb[row], owned_cols,
            list(cuts_n.get(dn.id, ())), proj_n.get(dn.id))

    layout = CouplingLayout(s)
    coupling: dict[str, np.ndarray] = {}
    if n > 1:
        coupling["left"] = tg_block.coupling_indices(layout, seam=int(window[0]) - 1, side="left")
    if n < part.n_sub:
        coupling["right"] = tg_block.coupling_indices(layout, seam=int(owned_range[-1]), side="right")
    if consensus is not None:
        for side in ("left", "right"):
            zu = getattr(consensus, side)
            if zu is None:
                continue
            z, u = zu
            c = np.asarray(z) - np.asarray(u)
            y = coupling[side]
            qp.add_quad_diag(y, consensus.rho / 2.0)
            qp.add_lin(y, -consensus.rho * c)
            qp.obj_const += float(consensus.rho / 2.0 * (c @ c))
    qp.meta = {"kind": "tg-sub", "n": n, "tg": tg_block, "surrogates": surrogates,
               "coupling": coupling, "scenario": s, "part": part}
    return qp


# ---------------------------------------------------------------------------
# extraction


def extract_tg_window(sol: QpSolution, block: TgBlock) -> TgDispatch:
    x = sol.x
    return TgDispatch(p_g=x[block.pg], ru=x[block.ru], rd=x[block.rd],
                      p_dg=x[block.pdg], p_ch=x[block.pch], p_dc=x[block.pdc],
                      soc=x[block.soc], p_b=x[block.pb])


def extract_dn(sol: QpSolution, block: DnBlock) -> DnDispatch:
    x = sol.x
    flows = x[block.flow]
    losses = block.view.a_const + block.view.beta * (flows - block.view.p_base) \
        if block.view.n_line else flows.copy()
    return DnDispatch(p_dg=x[block.pdg], p_ch=x[block.pch], p_dc=x[block.pdc],
                      soc=x[block.soc], p_tl=x[block.ptl], t_in=x[block.tin],
                      flows=flows, losses=losses, p_b=x[block.pb],
                      slack_pos=None if block.slack_pos is None else x[block.slack_pos],
                      slack_neg=None if block.slack_neg is None else x[block.slack_neg])


def extract_centralized(qp: QuadraticProgram, sol: QpSolution) -> DispatchSolution:
    meta = qp.meta
    tg = extract_tg_window(sol, meta["tg"])
    dns = {k: extract_dn(sol, blk) for k, blk in meta["dns"].items()}
    return DispatchSolution(tg=tg, dns=dns)


def boundary_of(sol: QpSolution, qp: QuadraticProgram, k: str) -> np.ndarray:
    """Boundary trajectory for DN ``k`` from a master/centralized solution."""
    meta = qp.meta
    s: Scenario = meta["scenario"]
    v: _TgView = meta["tg"].view
    dn = _dn_by_id(s, k)
    return sol.x[meta["tg"].pb[v.bnd_row[dn.root_bus]]]


# ---------------------------------------------------------------------------
# audits


def check_tg_physics(s: Scenario, d: TgDispatch, tol: float) -> dict[str, float]:
    """Residuals of full-horizon TG couplings on a stitched dispatch: ramping,
    SOC chaining, cyclic SOC and power balance."""
    v = _TgView(s)
    out = {"ramp": 0.0, "soc": 0.0, "soc_final": 0.0, "balance": 0.0}
    if v.n_gen:
        step = np.diff(d.p_g, axis=1)
        up = step - (v.r_up * v.dt)[:, None]
        dn_ = -step - (v.r_dn * v.dt)[:, None]
        out["ramp"] = float(max(up.max(initial=0.0), dn_.max(initial=0.0), 0.0))
    if v.n_ess:
        prev = np.concatenate([v.e0[:, None], d.soc[:, :-1]], axis=1)
        resid = d.soc - prev - (d.p_ch * v.eta_ch[:, None] - d.p_dc / v.eta_dc[:, None]) * v.dt
        out["soc"] = float(np.abs(resid).max())
        out["soc_final"] = float(np.abs(d.soc[:, -1] - v.e0).max())
    inj = d.p_g.sum(axis=0) + d.p_dg.sum(axis=0) + d.p_dc.sum(axis=0) - d.p_ch.sum(axis=0)
    out["balance"] = float(np.abs(inj - d.p_b.sum(axis=0) - v.load_sum).max())
    return out
