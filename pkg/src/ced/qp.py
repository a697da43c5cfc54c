"""Sparse convex quadratic programs with named variable/constraint handles.

The objective is ``0.5 x'Px + q'x + c`` with P symmetric PSD; constraints are
named linear equalities and inequalities plus variable box bounds.  Solving is
delegated to the Clarabel interior-point engine; a solve is single-threaded
and deterministic for a fixed program.

Dual sign conventions (reported per constraint handle):
  * equality ``a.x = b``: multiplier ``lam`` with stationarity
    ``Px + q + A'lam = 0``; the optimal value satisfies ``dV/db = -lam``.
  * inequality ``a.x <= b``: multiplier ``mu >= 0`` and ``dV/db = -mu``.
  * inequality ``a.x >= b``: multiplier ``mu >= 0`` and ``dV/db = +mu``
    (the multiplier of the normalized ``-a.x <= -b`` row).

Variables and constraints are registered in blocks; an entry of a block named
``pg`` with shape (3, 24) answers to the handle ``"pg[1,7]"``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

import clarabel

__all__ = ["QpStatus", "QuadraticProgram", "QpSolution", "solve_qp"]

_INF = float("inf")


class QpStatus(enum.Enum):
    Optimal = "Optimal"
    Infeasible = "Infeasible"
    Unbounded = "Unbounded"
    NumericalFailure = "NumericalFailure"


@dataclass
class _Block:
    prefix: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def names(self) -> list[str]:
        if self.shape == ():
            return [self.prefix]
        idx = np.indices(self.shape).reshape(len(self.shape), -1).T
        return [f"{self.prefix}[{','.join(str(i) for i in ix)}]" for ix in idx]

    def index_of(self, key: str) -> int:
        if self.shape == ():
            if key:
                raise KeyError(key)
            return self.start
        parts = tuple(int(p) for p in key.split(","))
        if len(parts) != len(self.shape) or any(not 0 <= p < s for p, s in zip(parts, self.shape)):
            raise KeyError(key)
        return self.start + int(np.ravel_multi_index(parts, self.shape))


class _Registry:
    """Name -> flat index resolution over blocks, without materializing names."""

    def __init__(self):
        self.blocks: dict[str, _Block] = {}
        self.count = 0

    def add(self, prefix: str, shape: tuple[int, ...]) -> _Block:
        if prefix in self.blocks:
            raise ValueError(f"duplicate block name {prefix!r}")
        blk = _Block(prefix, self.count, shape)
        self.blocks[prefix] = blk
        self.count += blk.size
        return blk

    def resolve(self, name: str) -> int:
        if name.endswith("]") and "[" in name:
            prefix, _, rest = name.partition("[")
            blk = self.blocks.get(prefix)
            if blk is None:
                raise KeyError(name)
            return blk.index_of(rest[:-1])
        blk = self.blocks.get(name)
        if blk is None:
            raise KeyError(name)
        return blk.index_of("")

    def all_names(self) -> list[str]:
        out: list[str] = []
        for blk in self.blocks.values():
            out.extend(blk.names())
        return out


class QuadraticProgram:
    def __init__(self, name: str = "qp"):
        self.name = name
        self._vars = _Registry()
        self._cons = _Registry()
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        # objective accumulators: 0.5 x'Px + q'x + const
        self._pi: list[np.ndarray] = []
        self._pj: list[np.ndarray] = []
        self._pv: list[np.ndarray] = []
        self._qi: list[np.ndarray] = []
        self._qv: list[np.ndarray] = []
        self.obj_const = 0.0
        # constraint rows: triplets in user row order plus sense/rhs
        self._ci: list[np.ndarray] = []
        self._cj: list[np.ndarray] = []
        self._cv: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []   # 0: '=', 1: '<=', 2: '>='
        self._rhs: list[np.ndarray] = []

    # -- variables ----------------------------------------------------------

    @property
    def num_vars(self) -> int:
        return self._vars.count

    @property
    def num_cons(self) -> int:
        return self._cons.count

    def add_vars(self, prefix: str, shape=(), lb=-_INF, ub=_INF) -> np.ndarray:
        """Register a block of scalar variables; returns their flat indices
        shaped like ``shape`` (a scalar index for shape=())."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        blk = self._vars.add(prefix, shape)
        n = blk.size
        bshape = shape if shape else (1,)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), bshape).ravel().astype(float))
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), bshape).ravel().astype(float))
        idx = np.arange(blk.start, blk.start + n)
        return idx.reshape(shape) if shape else idx[0]

    def var_index(self, name: str) -> int:
        return self._vars.resolve(name)

    # -- objective ----------------------------------------------------------

    def add_quad_diag(self, idx, coefs) -> None:
        """Add ``sum coefs[i] * x[idx[i]]^2`` to the objective."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), idx.shape).ravel()
        self._pi.append(idx.ravel())
        self._pj.append(idx.ravel())
        self._pv.append(2.0 * coefs)

    def add_quad_form(self, idx, Q, anchor=None, weight: float = 1.0) -> None:
        """Add ``weight * 0.5 (x-anchor)' Q (x-anchor)`` for a dense PSD Q."""
        idx = np.asarray(idx, dtype=np.int64).ravel()
        Q = np.asarray(Q, dtype=float)
        ii, jj = np.nonzero(Q)
        self._pi.append(idx[ii])
        self._pj.append(idx[jj])
        self._pv.append(weight * Q[ii, jj])
        if anchor is not None:
            a = np.asarray(anchor, dtype=float).ravel()
            qa = Q @ a
            self.add_lin(idx, -weight * qa)
            self.obj_const += weight * 0.5 * float(a @ qa)

    def add_lin(self, idx, coefs) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), idx.shape).ravel()
        self._qi.append(idx.ravel())
        self._qv.append(coefs)

    # -- constraints --------------------------------------------------------

    _SENSES = {"==": 0, "<=": 1, ">=": 2}

    def add_cons(self, prefix: str, shape, rows, cols, vals, sense, rhs) -> np.ndarray:
        """Register a block of linear constraints.

        ``rows`` holds block-local row numbers (0 .. size-1) per nonzero,
        ``cols`` variable indices and ``vals`` coefficients.  ``sense`` is one
        of '==', '<=', '>=' (scalar per block) and ``rhs`` broadcasts over the
        block.  Returns global row indices shaped like ``shape``.
        """
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        blk = self._cons.add(prefix, shape)
        n = blk.size
        rows = np.asarray(rows, dtype=np.int64).ravel()
        self._ci.append(rows + blk.start)
        self._cj.append(np.asarray(cols, dtype=np.int64).ravel())
        self._cv.append(np.asarray(vals, dtype=float).ravel())
        self._sense.append(np.full(n, self._SENSES[sense], dtype=np.int8))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (n,)).ravel().astype(float))
        idx = np.arange(blk.start, blk.start + n)
        return idx.reshape(shape) if shape else idx[0]

    def add_con(self, name: str, idx, coefs, sense: str, rhs: float):
        """Register one named constraint row; returns its handle (the name)."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64)).ravel()
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), idx.shape).ravel()
        self.add_cons(name, (), np.zeros(idx.size, dtype=np.int64), idx, coefs, sense, rhs)
        return name

    def con_index(self, name: str) -> int:
        return self._cons.resolve(name)

    # -- assembly ------------------------------------------------------------

    def _assemble(self):
        n = self.num_vars
        m = self.num_cons
        if self._pi:
            P = sparse.coo_matrix(
                (np.concatenate(self._pv), (np.concatenate(self._pi), np.concatenate(self._pj))),
                shape=(n, n),
            ).tocsr()
            P = (P + P.T) * 0.5
        else:
            P = sparse.csr_matrix((n, n))
        q = np.zeros(n)
        if self._qi:
            np.add.at(q, np.concatenate(self._qi), np.concatenate(self._qv))
        if self._ci:
            A = sparse.coo_matrix(
                (np.concatenate(self._cv), (np.concatenate(self._ci), np.concatenate(self._cj))),
                shape=(m, n),
            ).tocsr()
        else:
            A = sparse.csr_matrix((m, n))
        sense = np.concatenate(self._sense) if self._sense else np.zeros(0, dtype=np.int8)
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        lb = np.concatenate(self._lb) if self._lb else np.zeros(0)
        ub = np.concatenate(self._ub) if self._ub else np.zeros(0)
        return P, q, A, sense, rhs, lb, ub

    # -- solving -------------------------------------------------------------

    def solve(self, feas_tol: float = 1e-8, dual_tol: float = 1e-8,
              max_iter: int = 200) -> "QpSolution":
        P, q, A, sense, rhs, lb, ub = self._assemble()
        n = self.num_vars

        eq_rows = np.flatnonzero(sense == 0)
        le_rows = np.flatnonzero(sense == 1)
        ge_rows = np.flatnonzero(sense == 2)
        fin_lb = np.flatnonzero(np.isfinite(lb))
        fin_ub = np.flatnonzero(np.isfinite(ub))

        eye = sparse.eye(n, format="csr")
        A_eq = A[eq_rows]
        A_in = sparse.vstack(
            [A[le_rows], -A[ge_rows], eye[fin_ub], -eye[fin_lb]], format="csr"
        ) if (len(le_rows) + len(ge_rows) + len(fin_ub) + len(fin_lb)) else sparse.csr_matrix((0, n))
        b_eq = rhs[eq_rows]
        b_in = np.concatenate([rhs[le_rows], -rhs[ge_rows], ub[fin_ub], -lb[fin_lb]])

        A_full = sparse.vstack([A_eq, A_in], format="csc")
        b_full = np.concatenate([b_eq, b_in])
        cones = []
        if len(eq_rows):
            cones.append(clarabel.ZeroConeT(len(eq_rows)))
        if A_in.shape[0]:
            cones.append(clarabel.NonnegativeConeT(A_in.shape[0]))

        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = max_iter
        tol = min(feas_tol, dual_tol)
        settings.tol_feas = tol * 0.1
        settings.tol_gap_abs = tol * 0.1
        settings.tol_gap_rel = tol * 0.1

        solver = clarabel.DefaultSolver(sparse.triu(P, format="csc"), q, A_full, b_full, cones, settings)
        raw = solver.solve()
        status_name = str(raw.status)

        if status_name in ("Solved", "AlmostSolved"):
            status = QpStatus.Optimal
        elif status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            status = QpStatus.Infeasible
        elif status_name in ("DualInfeasible", "AlmostDualInfeasible"):
            status = QpStatus.Unbounded
        else:
            status = QpStatus.NumericalFailure

        if status is not QpStatus.Optimal:
            return QpSolution(program=self, status=status, x=np.full(n, np.nan),
                              objective=np.nan, _row_duals=np.full(self.num_cons, np.nan),
                              lb_duals=np.full(n, np.nan), ub_duals=np.full(n, np.nan))

        x = np.asarray(raw.x)
        z = np.asarray(raw.z)
        row_duals = np.zeros(self.num_cons)
        pos = 0
        row_duals[eq_rows] = z[pos:pos + len(eq_rows)]
        pos += len(eq_rows)
        row_duals[le_rows] = z[pos:pos + len(le_rows)]
        pos += len(le_rows)
        row_duals[ge_rows] = z[pos:pos + len(ge_rows)]
        pos += len(ge_rows)
        ub_duals = np.zeros(n)
        ub_duals[fin_ub] = z[pos:pos + len(fin_ub)]
        pos += len(fin_ub)
        lb_duals = np.zeros(n)
        lb_duals[fin_lb] = z[pos:pos + len(fin_lb)]

        objective = 0.5 * float(x @ (P @ x)) + float(q @ x) + self.obj_const
        return QpSolution(program=self, status=QpStatus.Optimal, x=x, objective=objective,
                          _row_duals=row_duals, lb_duals=lb_duals, ub_duals=ub_duals)

    # -- diagnostics ----------------------------------------------------------

    def kkt_residuals(self, sol: "QpSolution") -> dict[str, float]:
        """Primal/stationarity/complementarity residuals of an Optimal solution."""
        P, q, A, sense, rhs, lb, ub = self._assemble()
        x = sol.x
        ax = A @ x if self.num_cons else np.zeros(0)
        eq = sense == 0
        le = sense == 1
        ge = sense == 2
        primal = 0.0
        comp = 0.0
        if eq.any():
            primal = max(primal, float(np.max(np.abs(ax[eq] - rhs[eq]))))
        if le.any():
            viol = ax[le] - rhs[le]
            primal = max(primal, float(np.max(viol, initial=-np.inf)))
            comp = max(comp, float(np.max(np.abs(sol._row_duals[le] * viol))))
        if ge.any():
            viol = rhs[ge] - ax[ge]
            primal = max(primal, float(np.max(viol, initial=-np.inf)))
            comp = max(comp, float(np.max(np.abs(sol._row_duals[ge] * viol))))
        primal = max(primal, float(np.max(x - ub, initial=0.0)), float(np.max(lb - x, initial=0.0)))
        comp = max(comp,
                   float(np.max(np.abs(sol.ub_duals * np.minimum(ub - x, 1e30)), initial=0.0)),
                   float(np.max(np.abs(sol.lb_duals * np.minimum(x - lb, 1e30)), initial=0.0)))

        lam = sol._row_duals.copy()
        lam[ge] = -lam[ge]
        grad = P @ x + q
        if self.num_cons:
            grad = grad + A.T @ lam
        grad = grad + sol.ub_duals - sol.lb_duals
        station = float(np.max(np.abs(grad), initial=0.0))
        return {"primal": max(primal, 0.0), "stationarity": station, "complementarity": comp}

    # -- debug dump ------------------------------------------------------------

    def write_lp(self, path) -> None:
        """Dump the program in CPLEX-LP text format for external cross-checking."""
        P, q, A, sense, rhs, lb, ub = self._assemble()
        vnames = self._vars.all_names()
        cnames = self._cons.all_names()
        safe = [v.replace("[", "(").replace("]", ")").replace(",", "_") for v in vnames]
        csafe = [c.replace("[", "(").replace("]", ")").replace(",", "_") for c in cnames]
        lines = [f"\\ {self.name}", "Minimize", " obj:"]
        terms = [f" {'+' if c >= 0 else '-'} {abs(c):.17g} {safe[i]}" for i, c in enumerate(q) if c]
        if not terms:
            terms = [" 0"]
        lines.extend(terms)
        Pc = sparse.coo_matrix(P)
        quad = [f" {'+' if v >= 0 else '-'} {abs(2 * v if i != j else v):.17g} {safe[i]} {'*' if i != j else '^2'}{' ' + safe[j] if i != j else ''}"
                for i, j, v in zip(Pc.row, Pc.col, Pc.data) if i <= j and v]
        if quad:
            lines.append(" + [")
            lines.extend(quad)
            lines.append(" ] / 2")
        lines.append("Subject To")
        Ac = A.tocsr()
        op = {0: "=", 1: "<=", 2: ">="}
        for r in range(self.num_cons):
            lo, hi = Ac.indptr[r], Ac.indptr[r + 1]
            body = " ".join(f"{'+' if v >= 0 else '-'} {abs(v):.17g} {safe[c]}"
                            for c, v in zip(Ac.indices[lo:hi], Ac.data[lo:hi])) or "0"
            lines.append(f" {csafe[r]}: {body} {op[int(sense[r])]} {rhs[r]:.17g}")
        lines.append("Bounds")
        for i in range(self.num_vars):
            lo = "-inf" if not np.isfinite(lb[i]) else f"{lb[i]:.17g}"
            hi = "+inf" if not np.isfinite(ub[i]) else f"{ub[i]:.17g}"
            lines.append(f" {lo} <= {safe[i]} <= {hi}")
        lines.append("End")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class QpSolution:
    program: QuadraticProgram
    status: QpStatus
    x: np.ndarray
    objective: float
    _row_duals: np.ndarray
    lb_duals: np.ndarray
    ub_duals: np.ndarray

    @property
    def primal(self) -> dict[str, float]:
        names = self.program._vars.all_names()
        return dict(zip(names, self.x.tolist()))

    @property
    def duals(self) -> dict[str, float]:
        names = self.program._cons.all_names()
        return dict(zip(names, self._row_duals.tolist()))

    def value(self, ref) -> np.ndarray | float:
        """Primal value(s) by handle name or by index array."""
        if isinstance(ref, str):
            return float(self.x[self.program.var_index(ref)])
        return self.x[np.asarray(ref, dtype=np.int64)]

    def dual(self, ref) -> np.ndarray | float:
        """Constraint multiplier(s) by handle name or row-index array."""
        if isinstance(ref, str):
            return float(self._row_duals[self.program.con_index(ref)])
        return self._row_duals[np.asarray(ref, dtype=np.int64)]


def solve_qp(qp: QuadraticProgram, feas_tol: float = 1e-8, dual_tol: float = 1e-8) -> QpSolution:
    """Functional wrapper around :meth:`QuadraticProgram.solve`."""
    return qp.solve(feas_tol=feas_tol, dual_tol=dual_tol)
