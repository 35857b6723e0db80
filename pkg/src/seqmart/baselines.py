"""Fisher's exact test on the stimulus-by-choice table.

Used as the naive foil: it assumes independent trials, so serial
dependence through the block structure produces tiny p-values even for a
subject who cannot see the stimulus.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .simulators import IblSession

__all__ = ["ContingencyTable2x2", "contingency_from_session", "fisher_exact_two_sided", "TIE_SLACK"]

#: relative slack when deciding that a table is "as or less probable" than the observed one
TIE_SLACK = 1e-12


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Rows: stimulus +1, -1. Columns: choice +1, -1."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for k in ("a", "b", "c", "d"):
            v = getattr(self, k)
            if int(v) != v or v < 0:
                raise ValueError(f"count {k} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, k, int(v))
        if self.total < 1:
            raise ValueError("table is empty")

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    def transpose(self) -> "ContingencyTable2x2":
        return ContingencyTable2x2(self.a, self.c, self.b, self.d)


def contingency_from_session(session: IblSession) -> ContingencyTable2x2:
    a_pos = session.stimulus > 0
    c_pos = session.choice > 0
    return ContingencyTable2x2(
        int(np.sum(a_pos & c_pos)),
        int(np.sum(a_pos & ~c_pos)),
        int(np.sum(~a_pos & c_pos)),
        int(np.sum(~a_pos & ~c_pos)),
    )


def _log_hypergeom(k: np.ndarray, row1: int, col1: int, n: int) -> np.ndarray:
    # log P(top-left = k) with fixed margins, via log-gamma factorials
    row2, col2 = n - row1, n - col1
    return (gammaln(row1 + 1) + gammaln(row2 + 1) + gammaln(col1 + 1) + gammaln(col2 + 1) - gammaln(n + 1)
            - gammaln(k + 1) - gammaln(row1 - k + 1) - gammaln(col1 - k + 1) - gammaln(row2 - col1 + k + 1))


def fisher_exact_two_sided(table: ContingencyTable2x2) -> float:
    """Two-sided Fisher p: total probability of tables no more likely than the observed one.

    Works in log space, so p-values down to about 1e-300 are representable.
    A table with an all-zero row or column has p = 1.
    """
    row1, col1, n = table.a + table.b, table.a + table.c, table.total
    if min(row1, n - row1, col1, n - col1) == 0:
        return 1.0
    k = np.arange(max(0, row1 + col1 - n), min(row1, col1) + 1)
    logp = _log_hypergeom(k, row1, col1, n)
    observed = logp[table.a - k[0]]
    keep = logp <= observed + np.log1p(TIE_SLACK)
    if keep.all():
        return 1.0
    return float(min(1.0, np.exp(logsumexp(logp[keep]))))
