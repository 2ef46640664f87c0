"""Evaluation metrics: exact feature-distribution EMD and the MMD suite.

The graph-to-graph distance solves one exact transport problem per shared
node type under that type's ground metric (Jaccard for binary bag-of-words,
Euclidean otherwise) and weights the per-type costs by both graphs' node
fractions. Lifting to sets of graphs is a second transport problem over the
pairwise distance matrix. MMD metrics compare per-graph descriptor
histograms with a Gaussian kernel (biased V-statistic).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import HeteroGraph, SkeletonGraph, TypeTable
from .ot import TransportProblem, solve_ot

DEFAULT_SIGMA = 1.0
CLUSTERING_BINS = 100
SPECTRAL_BINS = 64


@dataclass(frozen=True)
class MetricReport:
    """One metric value with enough context to reproduce it."""

    name: str
    value: float
    n_real: int
    n_gen: int
    seed: int | None = None
    config: dict = field(default_factory=dict)
    std: float | None = None

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "n_real": self.n_real,
            "n_gen": self.n_gen,
            "seed": self.seed,
            "config": {k: self.config[k] for k in sorted(self.config)},
        }
        if self.std is not None:
            out["std"] = self.std
        return out


# --- ground distances -------------------------------------------------------


def jaccard_distance(u, v) -> float:
    """1 - |u & v| / |u | v| for binary vectors; 0 when both are all-zero."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch {u.shape} vs {v.shape}")
    inter = float(np.minimum(u, v).sum())
    union = float(np.maximum(u, v).sum())
    if union == 0.0:
        return 0.0
    return 1.0 - inter / union


def euclidean_distance(u, v) -> float:
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"length mismatch {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def _pairwise_jaccard(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    inter = A @ B.T
    union = A.sum(axis=1)[:, None] + B.sum(axis=1)[None, :] - inter
    with np.errstate(invalid="ignore"):
        d = 1.0 - inter / union
    d[union == 0.0] = 0.0
    return d


def _pairwise_euclidean(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.sqrt(np.maximum(sq, 0.0))


def pairwise_distances(A: np.ndarray, B: np.ndarray, metric: str) -> np.ndarray:
    if metric == "jaccard":
        return _pairwise_jaccard(A, B)
    return _pairwise_euclidean(A, B)


# --- feature-distribution EMD ------------------------------------------------


def _features_by_type(g: HeteroGraph, K: int) -> list[np.ndarray | None]:
    if g.features is None:
        raise ValueError("feature_dist_emd needs featured graphs")
    out: list[np.ndarray | None] = [None] * K
    for k in range(K):
        rows = [g.features[u] for u in range(g.n) if g.types[u] == k]
        if rows:
            out[k] = np.stack(rows)
    return out


def default_penalties(table: TypeTable) -> np.ndarray:
    """Per-type distance charged for a type present in only one graph.

    1.0 is exact for Jaccard (its diameter); for Euclidean types pass the
    training feature-space diameter instead (see corpus.feature_space_diameters).
    """
    return np.ones(table.K, dtype=np.float64)


def feature_dist_emd(
    p: HeteroGraph,
    q: HeteroGraph,
    table: TypeTable,
    penalty: np.ndarray | None = None,
) -> float:
    """Feature-distribution distance between two featured graphs.

    Per type, the exact EMD between uniform distributions over the two
    graphs' feature vectors; the per-type costs are averaged under both
    graphs' node-fraction weightings. Symmetric by construction. A type
    present in exactly one graph contributes `penalty[type]`.
    """
    if penalty is None:
        penalty = default_penalties(table)
    fp = _features_by_type(p, table.K)
    fq = _features_by_type(q, table.K)
    total1 = 0.0
    total2 = 0.0
    for k in range(table.K):
        if fp[k] is None and fq[k] is None:
            continue
        if fp[k] is None or fq[k] is None:
            emd = float(penalty[k])
            cp = 0 if fp[k] is None else len(fp[k])
            cq = 0 if fq[k] is None else len(fq[k])
        else:
            M = pairwise_distances(fp[k], fq[k], table.ground_metric[k])
            cp, cq = len(fp[k]), len(fq[k])
            a = np.full(cp, 1.0 / cp)
            b = np.full(cq, 1.0 / cq)
            _, emd = solve_ot(TransportProblem(a, b, M))
        total1 += cq / q.n * emd
        total2 += cp / p.n * emd
    return (total1 + total2) / 2.0


def graph_set_emd(
    P: list[HeteroGraph],
    Q: list[HeteroGraph],
    table: TypeTable,
    penalty: np.ndarray | None = None,
    n_jobs: int = 1,
) -> float:
    """EMD between two graph sets under the graph-to-graph feature distance.

    The pairwise cost matrix is filled from pure per-pair calls, so parallel
    assembly (n_jobs > 1) cannot change the result.
    """
    if not P or not Q:
        raise ValueError("graph sets must be non-empty")
    M = np.zeros((len(P), len(Q)), dtype=np.float64)
    if n_jobs > 1:
        def fill_row(r):
            for c in range(len(Q)):
                M[r, c] = feature_dist_emd(P[r], Q[c], table, penalty)
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            list(ex.map(fill_row, range(len(P))))
    else:
        for r in range(len(P)):
            for c in range(len(Q)):
                M[r, c] = feature_dist_emd(P[r], Q[c], table, penalty)
    a = np.full(len(P), 1.0 / len(P))
    b = np.full(len(Q), 1.0 / len(Q))
    _, cost = solve_ot(TransportProblem(a, b, M))
    return cost


# --- typed degrees ------------------------------------------------------------


def type_degree_vectors(g: HeteroGraph | SkeletonGraph, K: int) -> np.ndarray:
    """Row u, column i: how many neighbors of u have type i."""
    out = np.zeros((g.n, K), dtype=np.int64)
    for u, v in g.edges:
        out[u, g.types[v]] += 1
        out[v, g.types[u]] += 1
    return out


# --- MMD machinery ------------------------------------------------------------


def mmd(X, Y, sigma: float = DEFAULT_SIGMA) -> float:
    """Biased (V-statistic) MMD with Gaussian kernel exp(-||x-y||^2 / 2 sigma^2)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("MMD needs non-empty samples")

    def gram(A, B):
        sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma**2))

    val = gram(X, X).mean() + gram(Y, Y).mean() - 2.0 * gram(X, Y).mean()
    return max(0.0, float(val))


def _degree_histograms(graphs, max_deg: int) -> np.ndarray:
    out = np.zeros((len(graphs), max_deg + 1))
    for i, g in enumerate(graphs):
        h = np.bincount(g.degrees(), minlength=max_deg + 1).astype(np.float64)
        out[i] = h / g.n
    return out


def degree_mmd(A, B, sigma: float = DEFAULT_SIGMA) -> float:
    """MMD over per-graph degree histograms (shared support 0..max degree)."""
    max_deg = 0
    for g in list(A) + list(B):
        if g.n:
            max_deg = max(max_deg, int(g.degrees().max()))
    return mmd(_degree_histograms(A, max_deg), _degree_histograms(B, max_deg), sigma)


def local_clustering(g) -> np.ndarray:
    """Per-node clustering coefficient; 0 for nodes of degree < 2."""
    adj = [set(ns) for ns in g.neighbors()]
    out = np.zeros(g.n)
    for u in range(g.n):
        d = len(adj[u])
        if d < 2:
            continue
        links = sum(len(adj[u] & adj[v]) for v in adj[u]) // 2
        out[u] = 2.0 * links / (d * (d - 1))
    return out


def _clustering_histograms(graphs) -> np.ndarray:
    out = np.zeros((len(graphs), CLUSTERING_BINS))
    for i, g in enumerate(graphs):
        h, _ = np.histogram(local_clustering(g), bins=CLUSTERING_BINS, range=(0.0, 1.0))
        out[i] = h / g.n
    return out


def clustering_mmd(A, B, sigma: float = DEFAULT_SIGMA) -> float:
    """MMD over local-clustering-coefficient histograms (100 bins on [0,1])."""
    return mmd(_clustering_histograms(A), _clustering_histograms(B), sigma)


def normalized_laplacian_eigenvalues(g) -> np.ndarray:
    """Eigenvalues of I - D^-1/2 A D^-1/2; zero rows for isolated nodes."""
    deg = g.degrees().astype(np.float64)
    L = np.zeros((g.n, g.n))
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    for u, v in g.edges:
        w = inv_sqrt[u] * inv_sqrt[v]
        L[u, v] -= w
        L[v, u] -= w
    L[np.diag_indices(g.n)] = (deg > 0).astype(np.float64)
    return np.linalg.eigvalsh(L)


def _spectral_histograms(graphs) -> np.ndarray:
    out = np.zeros((len(graphs), SPECTRAL_BINS))
    for i, g in enumerate(graphs):
        ev = np.clip(normalized_laplacian_eigenvalues(g), 0.0, 2.0)
        h, _ = np.histogram(ev, bins=SPECTRAL_BINS, range=(0.0, 2.0))
        out[i] = h / g.n
    return out


def spectral_mmd(A, B, sigma: float = DEFAULT_SIGMA) -> float:
    """MMD over normalized-Laplacian eigenvalue histograms (64 bins on [0,2])."""
    return mmd(_spectral_histograms(A), _spectral_histograms(B), sigma)


def _type_degree_histograms(graphs, K: int, max_by_type: np.ndarray) -> list[np.ndarray]:
    per_type = [np.zeros((len(graphs), max_by_type[k] + 1)) for k in range(K)]
    for i, g in enumerate(graphs):
        tdv = type_degree_vectors(g, K)
        for k in range(K):
            h = np.bincount(tdv[:, k], minlength=max_by_type[k] + 1).astype(np.float64)
            per_type[k][i] = h / g.n
    return per_type


def type_degree_mmd(A, B, K: int, sigma: float = DEFAULT_SIGMA) -> float:
    """Mean over types of the MMD between per-type degree histograms."""
    max_by_type = np.zeros(K, dtype=np.int64)
    for g in list(A) + list(B):
        tdv = type_degree_vectors(g, K)
        if tdv.size:
            max_by_type = np.maximum(max_by_type, tdv.max(axis=0))
    ha = _type_degree_histograms(A, K, max_by_type)
    hb = _type_degree_histograms(B, K, max_by_type)
    return float(np.mean([mmd(ha[k], hb[k], sigma) for k in range(K)]))
