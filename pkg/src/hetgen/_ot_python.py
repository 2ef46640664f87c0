"""Pure-Python transportation simplex; fallback when the compiled kernel is absent.

Same algorithm as the Cython twin: northwest-corner start, then primal
simplex pivots on the transportation polytope. The reduced-cost scan is
vectorized with numpy; tree operations are plain Python.
"""

from __future__ import annotations

import numpy as np


class SimplexIterationError(RuntimeError):
    """Pivot cap exceeded; indicates degenerate cycling or a malformed problem."""


def _northwest_corner(a, b, m, n):
    bi = np.empty(m + n - 1, dtype=np.int64)
    bj = np.empty(m + n - 1, dtype=np.int64)
    flow = np.empty(m + n - 1, dtype=np.float64)
    ra = a.copy()
    rb = b.copy()
    i = j = 0
    for k in range(m + n - 1):
        x = min(ra[i], rb[j])
        bi[k], bj[k], flow[k] = i, j, x
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if ra[i] == 0.0 and i < m - 1:
            i += 1
        elif rb[j] == 0.0 and j < n - 1:
            j += 1
        elif i < m - 1:
            i += 1
        else:
            j += 1
    return bi, bj, flow


def _compute_duals(bi, bj, M, m, n):
    # The basis forms a spanning tree on rows+cols; propagate u_i + v_j = c_ij
    # from row 0 outward.
    rows_adj = [[] for _ in range(m)]
    cols_adj = [[] for _ in range(n)]
    for k in range(len(bi)):
        rows_adj[bi[k]].append(k)
        cols_adj[bj[k]].append(k)
    u = np.zeros(m)
    v = np.zeros(n)
    row_done = np.zeros(m, dtype=bool)
    col_done = np.zeros(n, dtype=bool)
    row_done[0] = True
    stack = [(True, 0)]
    while stack:
        is_row, idx = stack.pop()
        if is_row:
            for k in rows_adj[idx]:
                j = bj[k]
                if not col_done[j]:
                    v[j] = M[idx, j] - u[idx]
                    col_done[j] = True
                    stack.append((False, j))
        else:
            for k in cols_adj[idx]:
                i = bi[k]
                if not row_done[i]:
                    u[i] = M[i, idx] - v[idx]
                    row_done[i] = True
                    stack.append((True, i))
    return u, v, rows_adj, cols_adj


def _find_cycle(bi, bj, rows_adj, cols_adj, ei, ej, m):
    # Path from row ei to col ej through the basis tree. Nodes: rows are
    # 0..m-1, cols are m..m+n-1. Returns basis-cell indices along the path.
    start = ei
    goal = m + ej
    parent = {start: (-1, -1)}
    frontier = [start]
    while frontier:
        nxt = []
        for node in frontier:
            if node < m:
                for k in rows_adj[node]:
                    other = m + bj[k]
                    if other not in parent:
                        parent[other] = (node, k)
                        nxt.append(other)
            else:
                for k in cols_adj[node - m]:
                    other = bi[k]
                    if other not in parent:
                        parent[other] = (node, k)
                        nxt.append(other)
        if goal in parent:
            break
        frontier = nxt
    path = []
    node = goal
    while node != start:
        prev, k = parent[node]
        path.append(k)
        node = prev
    path.reverse()
    return path


def transport_simplex(a, b, M, max_iter=0):
    """Exact optimal transport plan for marginals a, b and cost matrix M."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    M = np.ascontiguousarray(M, dtype=np.float64)
    m, n = M.shape
    plan = np.zeros((m, n), dtype=np.float64)
    if m == 1:
        plan[0, :] = b
        return plan
    if n == 1:
        plan[:, 0] = a
        return plan
    if max_iter <= 0:
        max_iter = 200 * (m + n) ** 2

    bi, bj, flow = _northwest_corner(a, b, m, n)
    tol = 1e-11 * max(1.0, float(np.abs(M).max()))
    # Degenerate ties can in principle cycle with a most-negative entering
    # rule; switch to Bland's rule after a while.
    bland_after = 20 * (m + n)

    for it in range(max_iter):
        u, v, rows_adj, cols_adj = _compute_duals(bi, bj, M, m, n)
        red = M - u[:, None] - v[None, :]
        if it < bland_after:
            flat = int(np.argmin(red))
            ei, ej = divmod(flat, n)
            if red[ei, ej] >= -tol:
                break
        else:
            neg = np.argwhere(red < -tol)
            if len(neg) == 0:
                break
            ei, ej = int(neg[0, 0]), int(neg[0, 1])

        path = _find_cycle(bi, bj, rows_adj, cols_adj, ei, ej, m)
        # Entering cell gets +theta; signs alternate -,+,-,... along the path.
        minus = path[0::2]
        theta = flow[minus].min()
        leave_pos = minus[int(np.argmin(flow[minus]))]
        for pos, k in enumerate(path):
            flow[k] += theta if pos % 2 else -theta
        bi[leave_pos], bj[leave_pos], flow[leave_pos] = ei, ej, theta
    else:
        raise SimplexIterationError(
            f"transportation simplex did not converge within {max_iter} pivots"
        )

    plan[bi, bj] += flow
    return plan
