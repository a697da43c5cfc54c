"""Horizon partitioning into overlapping windows and the coupling-variable layout.

A partition splits the horizon into N contiguous owned ranges of near-equal
length.  Every subproblem except the last additionally duplicates the first
period of its right neighbour; ramping and storage chaining across the seam
are written inside the left subproblem using that duplicated period, and a
consensus step forces the two copies of the seam variables to agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadPartition, PartitionMismatch
from .model import Scenario

__all__ = ["HorizonPartition", "make_partition", "choose_subproblem_count", "CouplingLayout"]


@dataclass(frozen=True)
class HorizonPartition:
    t_hor: int
    bounds: tuple[int, ...]   # 1-based last owned period per subproblem; bounds[-1] == t_hor

    @property
    def n_sub(self) -> int:
        return len(self.bounds)

    def _check(self, n: int) -> None:
        if not 1 <= n <= self.n_sub:
            raise PartitionMismatch(f"subproblem {n} outside 1..{self.n_sub}")

    def owned(self, n: int) -> np.ndarray:
        """Zero-based periods owned by subproblem n (1-based)."""
        self._check(n)
        start = 0 if n == 1 else self.bounds[n - 2]
        return np.arange(start, self.bounds[n - 1])

    def window(self, n: int) -> np.ndarray:
        """Owned periods plus the duplicated seam period (absent for n = N)."""
        self._check(n)
        start = 0 if n == 1 else self.bounds[n - 2]
        stop = self.bounds[n - 1] + (1 if n < self.n_sub else 0)
        return np.arange(start, stop)


def make_partition(t_hor: int, n_sub: int) -> HorizonPartition:
    """Split ``t_hor`` periods into ``n_sub`` owned ranges differing in length
    by at most one (longer ranges first)."""
    if not 1 <= n_sub <= t_hor // 2:
        raise BadPartition(f"need 1 <= N <= floor(T/2) = {t_hor // 2}, got N={n_sub}")
    base, rem = divmod(t_hor, n_sub)
    lengths = [base + 1] * rem + [base] * (n_sub - rem)
    return HorizonPartition(t_hor, tuple(np.cumsum(lengths).tolist()))


def choose_subproblem_count(s: Scenario, cap: int, factor: float = 1.0) -> int:
    """Heuristic subproblem count: one window per ~24 periods, scaled by
    ``factor`` and clamped to the partition validity range and ``cap``."""
    if cap < 1:
        raise BadPartition("cap must be >= 1")
    t_hor = s.horizon.t_hor
    raw = int(round(t_hor * factor / 24.0))
    return max(1, min(raw, cap, t_hor // 2))


class CouplingLayout:
    """Ordered seam variables shared by two adjacent subproblems.

    For the seam after owned period ``b`` (zero-based; the duplicated period is
    ``b + 1``) the vector is, in order: generator output at ``b+1``; storage
    SOC at ``b`` and at ``b+1``; storage discharge then charge power at
    ``b+1``; renewable output at ``b+1``; boundary power at ``b+1``.  The left
    owner and the right owner expose copies with identical layout.
    """

    def __init__(self, s: Scenario):
        self.n_gen = len(s.tg.generators)
        self.n_ess = len(s.tg.storages)
        self.n_dg = len(s.tg.dgs)
        self.n_bnd = len(s.tg.boundary_buses)
        # (kind, entity, period offset relative to the seam's owned period b)
        entries: list[tuple[str, int, int]] = []
        entries += [("pg", g, 1) for g in range(self.n_gen)]
        entries += [("soc", e, 0) for e in range(self.n_ess)]
        entries += [("soc", e, 1) for e in range(self.n_ess)]
        entries += [("pdc", e, 1) for e in range(self.n_ess)]
        entries += [("pch", e, 1) for e in range(self.n_ess)]
        entries += [("pdg", d, 1) for d in range(self.n_dg)]
        entries += [("pb", b, 1) for b in range(self.n_bnd)]
        self.entries = tuple(entries)

    @property
    def size(self) -> int:
        return len(self.entries)
