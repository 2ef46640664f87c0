# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython transportation simplex; the hot kernel behind solve_ot.

Mirrors _ot_python.transport_simplex step for step. Runs without the GIL so
cost matrices assembled from many small transport problems can be filled by
a thread pool.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef int _pivot_loop(double[:, ::1] M, long[::1] bi, long[::1] bj,
                     double[::1] flow, long m, long n, long max_iter,
                     double tol, long bland_after,
                     double[::1] u, double[::1] v,
                     char[::1] row_done, char[::1] col_done,
                     long[::1] row_head, long[::1] col_head,
                     long[::1] row_nxt, long[::1] col_nxt,
                     long[::1] stack, long[::1] parent_node,
                     long[::1] parent_cell, long[::1] queue,
                     long[::1] path) noexcept nogil:
    cdef long nb = m + n - 1
    cdef long it, k, i, j, top, node, qh, qt, ei, ej, goal, plen, pos, leave
    cdef double best, r, theta
    cdef char found

    for it in range(max_iter):
        # --- duals: u[i] + v[j] = M[i,j] on the basis tree ---
        for i in range(m):
            row_head[i] = -1
            row_done[i] = 0
        for j in range(n):
            col_head[j] = -1
            col_done[j] = 0
        for k in range(nb):
            row_nxt[k] = row_head[bi[k]]
            row_head[bi[k]] = k
            col_nxt[k] = col_head[bj[k]]
            col_head[bj[k]] = k
        u[0] = 0.0
        row_done[0] = 1
        top = 0
        stack[top] = 0  # encoded: row r -> r, col c -> m + c
        while top >= 0:
            node = stack[top]
            top -= 1
            if node < m:
                k = row_head[node]
                while k != -1:
                    j = bj[k]
                    if not col_done[j]:
                        v[j] = M[node, j] - u[node]
                        col_done[j] = 1
                        top += 1
                        stack[top] = m + j
                    k = row_nxt[k]
            else:
                k = col_head[node - m]
                while k != -1:
                    i = bi[k]
                    if not row_done[i]:
                        u[i] = M[i, node - m] - v[node - m]
                        row_done[i] = 1
                        top += 1
                        stack[top] = i
                    k = col_nxt[k]

        # --- entering cell ---
        ei = -1
        ej = -1
        if it < bland_after:
            best = -tol
            for i in range(m):
                for j in range(n):
                    r = M[i, j] - u[i] - v[j]
                    if r < best:
                        best = r
                        ei = i
                        ej = j
        else:
            found = 0
            for i in range(m):
                if found:
                    break
                for j in range(n):
                    if M[i, j] - u[i] - v[j] < -tol:
                        ei = i
                        ej = j
                        found = 1
                        break
        if ei < 0:
            return 0  # optimal

        # --- cycle: BFS path through the tree from row ei to col ej ---
        for i in range(m):
            parent_node[i] = -2
        for j in range(n):
            parent_node[m + j] = -2
        parent_node[ei] = -1
        qh = 0
        qt = 0
        queue[qt] = ei
        qt += 1
        goal = m + ej
        while qh < qt and parent_node[goal] == -2:
            node = queue[qh]
            qh += 1
            if node < m:
                k = row_head[node]
                while k != -1:
                    if parent_node[m + bj[k]] == -2:
                        parent_node[m + bj[k]] = node
                        parent_cell[m + bj[k]] = k
                        queue[qt] = m + bj[k]
                        qt += 1
                    k = row_nxt[k]
            else:
                k = col_head[node - m]
                while k != -1:
                    if parent_node[bi[k]] == -2:
                        parent_node[bi[k]] = node
                        parent_cell[bi[k]] = k
                        queue[qt] = bi[k]
                        qt += 1
                    k = col_nxt[k]
        plen = 0
        node = goal
        while node != ei:
            path[plen] = parent_cell[node]
            plen += 1
            node = parent_node[node]
        # reverse in place so the path starts at the entering row
        for pos in range(plen / 2):
            k = path[pos]
            path[pos] = path[plen - 1 - pos]
            path[plen - 1 - pos] = k

        # --- theta and leaving cell: minus positions are 0,2,4,... ---
        theta = flow[path[0]]
        leave = path[0]
        pos = 2
        while pos < plen:
            if flow[path[pos]] < theta:
                theta = flow[path[pos]]
                leave = path[pos]
            pos += 2
        for pos in range(plen):
            if pos % 2:
                flow[path[pos]] += theta
            else:
                flow[path[pos]] -= theta
        bi[leave] = ei
        bj[leave] = ej
        flow[leave] = theta
    return 1  # pivot cap exceeded


def transport_simplex(a, b, M, long max_iter=0):
    """Exact optimal transport plan for marginals a, b and cost matrix M."""
    a_np = np.ascontiguousarray(a, dtype=np.float64)
    b_np = np.ascontiguousarray(b, dtype=np.float64)
    M_np = np.ascontiguousarray(M, dtype=np.float64)
    # inputs may be frozen (read-only); memoryviews below need writable buffers
    if not M_np.flags.writeable:
        M_np = M_np.copy()
    cdef cnp.ndarray[double, ndim=1] a_ = a_np.copy() if not a_np.flags.writeable else a_np
    cdef cnp.ndarray[double, ndim=1] b_ = b_np.copy() if not b_np.flags.writeable else b_np
    cdef cnp.ndarray[double, ndim=2, mode="c"] M_ = M_np
    cdef long m = M_.shape[0]
    cdef long n = M_.shape[1]
    plan = np.zeros((m, n), dtype=np.float64)
    if m == 1:
        plan[0, :] = b_
        return plan
    if n == 1:
        plan[:, 0] = a_
        return plan
    if max_iter <= 0:
        max_iter = 200 * (m + n) * (m + n)

    cdef long nb = m + n - 1
    cdef cnp.ndarray[long, ndim=1] bi = np.empty(nb, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1] bj = np.empty(nb, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] flow = np.empty(nb, dtype=np.float64)

    # northwest-corner start
    cdef cnp.ndarray[double, ndim=1] ra = a_.copy()
    cdef cnp.ndarray[double, ndim=1] rb = b_.copy()
    cdef long i = 0, j = 0, k
    cdef double x
    for k in range(nb):
        x = ra[i] if ra[i] < rb[j] else rb[j]
        bi[k] = i
        bj[k] = j
        flow[k] = x
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

    cdef double tol = 1e-11 * max(1.0, float(np.abs(M_).max()))
    cdef long bland_after = 20 * (m + n)

    cdef double[::1] u = np.zeros(m, dtype=np.float64)
    cdef double[::1] v = np.zeros(n, dtype=np.float64)
    cdef char[::1] row_done = np.zeros(m, dtype=np.int8)
    cdef char[::1] col_done = np.zeros(n, dtype=np.int8)
    cdef long[::1] row_head = np.empty(m, dtype=np.int64)
    cdef long[::1] col_head = np.empty(n, dtype=np.int64)
    cdef long[::1] row_nxt = np.empty(nb, dtype=np.int64)
    cdef long[::1] col_nxt = np.empty(nb, dtype=np.int64)
    cdef long[::1] stack = np.empty(m + n, dtype=np.int64)
    cdef long[::1] parent_node = np.empty(m + n, dtype=np.int64)
    cdef long[::1] parent_cell = np.empty(m + n, dtype=np.int64)
    cdef long[::1] queue = np.empty(m + n, dtype=np.int64)
    cdef long[::1] path = np.empty(m + n, dtype=np.int64)
    cdef double[:, ::1] Mv = M_
    cdef long[::1] biv = bi
    cdef long[::1] bjv = bj
    cdef double[::1] flowv = flow

    cdef int status
    with nogil:
        status = _pivot_loop(Mv, biv, bjv, flowv, m, n, max_iter, tol, bland_after,
                             u, v, row_done, col_done,
                             row_head, col_head, row_nxt, col_nxt,
                             stack, parent_node, parent_cell, queue, path)
    if status != 0:
        from ._ot_python import SimplexIterationError
        raise SimplexIterationError(
            f"transportation simplex did not converge within {max_iter} pivots"
        )
    np.add.at(plan, (bi, bj), flow)
    return plan
