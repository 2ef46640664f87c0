"""Exact discrete optimal transport.

`solve_ot` runs a transportation simplex to optimality and returns both the
plan and its cost. Two interchangeable backends implement the identical
algorithm: a Cython kernel (built by setup.py) and a pure-Python fallback.
The fastest available one is selected at import time; see
`benchmarks/bench_ot.py` for a comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._ot_python import SimplexIterationError, transport_simplex as _py_simplex

try:
    from ._ot_simplex import transport_simplex as _cy_simplex

    BACKEND = "cython"
    _simplex = _cy_simplex
except ImportError:  # pragma: no cover - depends on the build
    BACKEND = "python"
    _simplex = _py_simplex

__all__ = ["TransportProblem", "solve_ot", "emd_cost", "BACKEND", "SimplexIterationError"]

_MARGINAL_TOL = 1e-10


@dataclass(frozen=True)
class TransportProblem:
    """Source weights a, sink weights b (each summing to 1) and a cost matrix."""

    a: np.ndarray
    b: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.a, dtype=np.float64)
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        M = np.ascontiguousarray(self.M, dtype=np.float64)
        if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
            raise ValueError("transport marginals must be non-empty vectors")
        if M.shape != (a.size, b.size):
            raise ValueError(f"cost matrix shape {M.shape} != ({a.size}, {b.size})")
        if abs(a.sum() - 1.0) > 1e-12 or abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("marginals must each sum to 1 within 1e-12")
        if (a < 0).any() or (b < 0).any():
            raise ValueError("marginals must be non-negative")
        if not np.isfinite(M).all() or (M < 0).any():
            raise ValueError("cost matrix must be non-negative and finite")
        for name, arr in (("a", a), ("b", b), ("M", M)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def solve_ot(problem: TransportProblem, backend: str | None = None) -> tuple[np.ndarray, float]:
    """Return (plan, cost) with plan marginals matching a and b to 1e-10."""
    if backend is None:
        simplex = _simplex
    elif backend == "python":
        simplex = _py_simplex
    elif backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("cython backend requested but the extension is not built")
        simplex = _cy_simplex
    else:
        raise ValueError(f"unknown backend {backend!r}")
    plan = np.asarray(simplex(problem.a, problem.b, problem.M))
    row_err = np.abs(plan.sum(axis=1) - problem.a).max()
    col_err = np.abs(plan.sum(axis=0) - problem.b).max()
    if max(row_err, col_err) > _MARGINAL_TOL:
        raise SimplexIterationError(
            f"plan marginals off by {max(row_err, col_err):.3e} (> {_MARGINAL_TOL})"
        )
    cost = float((plan * problem.M).sum())
    return plan, cost


def emd_cost(a, b, M, backend: str | None = None) -> float:
    """Optimal transport cost between weight vectors a and b under costs M."""
    _, cost = solve_ot(TransportProblem(np.asarray(a), np.asarray(b), np.asarray(M)), backend)
    return cost
