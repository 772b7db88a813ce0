"""Row-wise stabilized log-sum-exp reductions used by the Sinkhorn solvers.

For each row ``i`` the reducer evaluates

    out_i = log sum_j exp(lw_j + (g_j - C_ij) / eta)

shifted by the exact row maximum.  Terms more than
``CUTOFF`` below the maximum are skipped; each contributes less than
``exp(-60)`` relative to the sum, far below float64 resolution.

At small ``eta`` almost every term is skipped, so the reducer keeps per-row
candidate lists (entries within ``CUTOFF + MARGIN`` of the row max at scan
time).  The lists stay exact while the accumulated potential drift ``D``
satisfies ``2 D / eta <= MARGIN``; past that the rows are rescanned.

Rows are split into fixed-size chunks.  Each row is reduced by the same
serial code whatever the thread count, so results are bit-identical for any
``threads``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

CUTOFF = 60.0
MARGIN = 40.0
CHUNK_ROWS = 256
DENSE_FRACTION = 0.5


@njit(nogil=True, cache=True)
def _lse_dense(C, lw, g, inv_eta, out, start, stop):
    m = C.shape[1]
    buf = np.empty(m)
    for i in range(start, stop):
        mx = -np.inf
        for j in range(m):
            a = lw[j] + (g[j] - C[i, j]) * inv_eta
            buf[j] = a
            if a > mx:
                mx = a
        s = 0.0
        for j in range(m):
            if buf[j] > mx - CUTOFF:
                s += np.exp(buf[j] - mx)
        out[i] = mx + np.log(s)


@njit(nogil=True, cache=True)
def _lse_sparse(indptr, idx, val, lw, g, inv_eta, out, start):
    rows = indptr.shape[0] - 1
    width = 0
    for r in range(rows):
        width = max(width, indptr[r + 1] - indptr[r])
    buf = np.empty(width)
    for r in range(rows):
        lo = indptr[r]
        hi = indptr[r + 1]
        mx = -np.inf
        for p in range(lo, hi):
            j = idx[p]
            a = lw[j] + (g[j] - val[p]) * inv_eta
            buf[p - lo] = a
            if a > mx:
                mx = a
        s = 0.0
        for q in range(hi - lo):
            if buf[q] > mx - CUTOFF:
                s += np.exp(buf[q] - mx)
        out[start + r] = mx + np.log(s)


@njit(nogil=True, cache=True)
def _scan(C, lw, g, inv_eta, keep, start, stop):
    m = C.shape[1]
    rows = stop - start
    row_max = np.empty(rows)
    indptr = np.zeros(rows + 1, dtype=np.int64)
    for r in range(rows):
        i = start + r
        mx = -np.inf
        for j in range(m):
            a = lw[j] + (g[j] - C[i, j]) * inv_eta
            if a > mx:
                mx = a
        row_max[r] = mx
        cnt = 0
        for j in range(m):
            if lw[j] + (g[j] - C[i, j]) * inv_eta > mx - keep:
                cnt += 1
        indptr[r + 1] = indptr[r] + cnt
    idx = np.empty(indptr[rows], dtype=np.int32)
    val = np.empty(indptr[rows])
    for r in range(rows):
        i = start + r
        p = indptr[r]
        for j in range(m):
            if lw[j] + (g[j] - C[i, j]) * inv_eta > row_max[r] - keep:
                idx[p] = j
                val[p] = C[i, j]
                p += 1
    return indptr, idx, val


class RowLogSumExp:
    """Cached row reducer over a fixed C-contiguous matrix.

    Call :meth:`rescan` whenever ``eta`` changes; track potential drift with
    :meth:`note_drift` so that candidate lists are refreshed in time.
    """

    def __init__(self, C: np.ndarray, pool: ThreadPoolExecutor | None = None, sparse: bool = True):
        self.C = np.ascontiguousarray(C, dtype=np.float64)
        self.pool = pool
        self.sparse = sparse
        n = self.C.shape[0]
        self.bounds = [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]
        self._lists: list | None = None
        self._eta = None
        self._drift = 0.0
        self.scans = 0

    def _map(self, fn):
        if self.pool is None:
            return [fn(b) for b in self.bounds]
        return list(self.pool.map(fn, self.bounds))

    def rescan(self, lw, g, eta: float) -> None:
        self._eta = eta
        self._drift = 0.0
        if not self.sparse:
            self._lists = None
            return
        inv_eta = 1.0 / eta
        keep = CUTOFF + MARGIN
        m = self.C.shape[1]

        def work(b):
            indptr, idx, val = _scan(self.C, lw, g, inv_eta, keep, b[0], b[1])
            if indptr[-1] > DENSE_FRACTION * (b[1] - b[0]) * m:
                return None
            return indptr, idx, val

        self._lists = self._map(work)
        self.scans += 1

    def note_drift(self, max_abs_change: float) -> None:
        self._drift += max_abs_change

    def __call__(self, lw, g, eta: float) -> np.ndarray:
        if eta != self._eta or 2.0 * self._drift > MARGIN * eta:
            self.rescan(lw, g, eta)
        inv_eta = 1.0 / eta
        out = np.empty(self.C.shape[0])
        lists = self._lists

        def work(k):
            start, stop = self.bounds[k]
            entry = None if lists is None else lists[k]
            if entry is None:
                _lse_dense(self.C, lw, g, inv_eta, out, start, stop)
            else:
                _lse_sparse(entry[0], entry[1], entry[2], lw, g, inv_eta, out, start)

        if self.pool is None:
            for k in range(len(self.bounds)):
                work(k)
        else:
            list(self.pool.map(work, range(len(self.bounds))))
        return out
