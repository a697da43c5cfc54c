"""Active-set sensitivity of QP optima with respect to equality right-hand sides.

At a non-degenerate optimum the active set is locally constant, so the primal
point solves the reduced KKT system; differentiating it in the right-hand side
of a parameter equality gives the Jacobian directly:

    [ P   A_act' ] [ dx  ]   [ 0  ]
    [ A_act  0   ] [ dlam] = [ de ]

where ``de`` selects the perturbed parameter rows.  Strict complementarity is
required (every active inequality must carry a clearly positive multiplier);
otherwise the active set is ambiguous and ``DegenerateActiveSet`` is raised so
callers can fall back to finite differences.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import DegenerateActiveSet
from .qp import QpSolution, QpStatus, QuadraticProgram

__all__ = ["kkt_sensitivity"]


def kkt_sensitivity(qp: QuadraticProgram, sol: QpSolution, params,
                    act_tol: float = 1e-6) -> np.ndarray:
    """Jacobian d(x*)/d(rhs) for the parameter equalities named in ``params``.

    Returns an ``(n_vars, len(params))`` array.  ``params`` are handles of
    equality constraints; column j differentiates with respect to the
    right-hand side of ``params[j]``.
    """
    if sol.status is not QpStatus.Optimal:
        raise ValueError("sensitivity requires an Optimal solution")

    P, q, A, sense, rhs, lb, ub = qp._assemble()
    n = qp.num_vars
    x = sol.x

    param_rows = np.array([qp.con_index(h) for h in params], dtype=np.int64)
    if np.any(sense[param_rows] != 0):
        raise ValueError("parameter handles must reference equality constraints")

    ax = A @ x if qp.num_cons else np.zeros(0)

    act_rows = [np.flatnonzero(sense == 0)]
    le = np.flatnonzero(sense == 1)
    ge = np.flatnonzero(sense == 2)
    slack_le = rhs[le] - ax[le]
    slack_ge = ax[ge] - rhs[ge]
    dual_le = np.abs(sol._row_duals[le])
    dual_ge = np.abs(sol._row_duals[ge])
    for rows, slack, dual in ((le, slack_le, dual_le), (ge, slack_ge, dual_ge)):
        tight = slack <= act_tol
        if np.any(tight & (dual <= act_tol)):
            raise DegenerateActiveSet("active inequality with ~zero multiplier")
        act_rows.append(rows[tight])

    A_parts = [A[np.concatenate(act_rows)]]

    eye = sparse.eye(n, format="csr")
    for bound, duals, slack in ((ub, sol.ub_duals, ub - x), (lb, sol.lb_duals, x - lb)):
        fin = np.isfinite(bound)
        tight = fin & (slack <= act_tol)
        if np.any(tight & (np.abs(duals) <= act_tol)):
            raise DegenerateActiveSet("active variable bound with ~zero multiplier")
        A_parts.append(eye[np.flatnonzero(tight)])

    A_act = sparse.vstack(A_parts, format="csr")
    m_act = A_act.shape[0]

    kkt = sparse.bmat([[P.tocsr(), A_act.T], [A_act, None]], format="csc")
    n_p = len(param_rows)
    rhs_mat = np.zeros((n + m_act, n_p))
    # parameter rows sit inside the leading equality segment of A_act
    eq_rows = act_rows[0]
    pos_in_eq = np.searchsorted(eq_rows, param_rows)
    if np.any(eq_rows[pos_in_eq] != param_rows):
        raise ValueError("parameter row not found among equalities")
    rhs_mat[n + pos_in_eq, np.arange(n_p)] = 1.0

    try:
        lu = spla.splu(kkt)
        out = lu.solve(rhs_mat)
    except RuntimeError as exc:
        raise DegenerateActiveSet(f"singular reduced KKT system: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise DegenerateActiveSet("reduced KKT solve produced non-finite values")
    resid = kkt @ out - rhs_mat
    if np.max(np.abs(resid)) > 1e-6:
        raise DegenerateActiveSet("reduced KKT system is numerically singular")
    return out[:n]
