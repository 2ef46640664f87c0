"""Typed heterogeneous-graph data model, validation, permutations and corpus I/O.

A heterogeneous graph carries one type id per node and, optionally, one
feature vector per node whose length is fixed by the node's type. Graphs are
simple and undirected: edges are unordered pairs, no self-loops, no
multi-edges. All types here are immutable after construction and all
operations are pure functions, so values can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

JACCARD = "jaccard"
EUCLIDEAN = "euclidean"
_GROUND_METRICS = (JACCARD, EUCLIDEAN)

CORPUS_VERSION = 1


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files; the message names the bad record."""


def _freeze_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"feature vector must be 1-D, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TypeTable:
    """Schema for the node types of a corpus: K types with per-type feature dims."""

    dims: tuple[int, ...]
    ground_metric: tuple[str, ...]
    type_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "ground_metric", tuple(self.ground_metric))
        object.__setattr__(self, "type_names", tuple(self.type_names))
        if len(self.dims) < 1:
            raise ValueError("a type table needs at least one type")
        if not (len(self.dims) == len(self.ground_metric) == len(self.type_names)):
            raise ValueError("dims, ground_metric and type_names must have equal length")
        if any(d < 1 for d in self.dims):
            raise ValueError("every feature dimension must be >= 1")
        for m in self.ground_metric:
            if m not in _GROUND_METRICS:
                raise ValueError(f"unknown ground metric {m!r}")

    @property
    def K(self) -> int:
        return len(self.dims)


def _canonical_edges(edges) -> tuple[tuple[int, int], ...]:
    # Unordered pairs: store (min,max), drop duplicates, keep self-loops so
    # validate() can report them.
    seen = set()
    for e in edges:
        u, v = int(e[0]), int(e[1])
        seen.add((u, v) if u <= v else (v, u))
    return tuple(sorted(seen))


class _GraphOps:
    """Degree/adjacency helpers shared by both graph kinds."""

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            if u != v and 0 <= u < self.n and 0 <= v < self.n:
                deg[u] += 1
                deg[v] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            if u != v and 0 <= u < self.n and 0 <= v < self.n:
                adj[u].append(v)
                adj[v].append(u)
        return adj


@dataclass(frozen=True)
class SkeletonGraph(_GraphOps):
    """Types and edges only; what phase 1 produces and phase 2 consumes."""

    n: int
    types: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "types", tuple(int(t) for t in self.types))
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))


@dataclass(frozen=True)
class HeteroGraph(_GraphOps):
    """A typed graph with optional per-node feature vectors."""

    n: int
    types: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    features: tuple[np.ndarray, ...] | None = None
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "types", tuple(int(t) for t in self.types))
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        if self.features is not None:
            object.__setattr__(
                self, "features", tuple(_freeze_vector(f) for f in self.features)
            )
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))


@dataclass(frozen=True)
class LabeledPermutation:
    """A bijection on node ids; position u holds p(u)."""

    perm: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(p) for p in self.perm))
        n = len(self.perm)
        if sorted(self.perm) != list(range(n)):
            raise ValueError("perm is not a bijection on [0, n)")

    def __len__(self) -> int:
        return len(self.perm)

    def inverse(self) -> "LabeledPermutation":
        inv = [0] * len(self.perm)
        for u, pu in enumerate(self.perm):
            inv[pu] = u
        return LabeledPermutation(tuple(inv))


@dataclass(frozen=True)
class EdgeLabeledGraph:
    """Input to reify_edge_labels: edges may carry a string label (None = plain)."""

    n: int
    types: tuple[int, ...]
    edges: tuple[tuple[int, int, str | None], ...]

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "types", tuple(int(t) for t in self.types))
        canon = []
        for u, v, lab in self.edges:
            u, v = int(u), int(v)
            if u > v:
                u, v = v, u
            canon.append((u, v, lab))
        object.__setattr__(self, "edges", tuple(sorted(canon, key=lambda e: (e[0], e[1], e[2] or ""))))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(graph: HeteroGraph | SkeletonGraph, table: TypeTable) -> ValidationReport:
    """Check a graph against the structural and feature invariants.

    Violations are returned as data, never raised: a graph that fails here is
    bad input, not a programming error.
    """
    bad: list[str] = []
    n, K = graph.n, table.K
    if len(graph.types) != n:
        bad.append(f"types length {len(graph.types)} != n {n}")
    for u, t in enumerate(graph.types):
        if not 0 <= t < K:
            bad.append(f"node {u} has type {t} outside [0, {K})")
    for u, v in graph.edges:
        if u == v:
            bad.append(f"self-loop at node {u}")
        if not 0 <= u < n or not 0 <= v < n:
            bad.append(f"edge ({u},{v}) has endpoint outside [0, {n})")
    features = getattr(graph, "features", None)
    if features is not None:
        if len(features) != n:
            bad.append(f"features length {len(features)} != n {n}")
        for u, f in enumerate(features):
            if u >= len(graph.types):
                break
            t = graph.types[u]
            if not 0 <= t < K:
                continue
            want = table.dims[t]
            if f.shape != (want,):
                bad.append(
                    f"dimension mismatch at node {u}: got {f.shape[0] if f.ndim == 1 else f.shape}, type {t} wants {want}"
                )
            elif table.ground_metric[t] == JACCARD and not np.isin(f, (0.0, 1.0)).all():
                bad.append(f"non-binary feature component at node {u} (jaccard type {t})")
    return ValidationReport(tuple(bad))


def labeled_permute(graph, p: LabeledPermutation):
    """Relabel nodes by the bijection p; returns a graph of the same kind.

    Node u's type (and feature) move to position p(u) and every edge (u,v)
    becomes (p(u),p(v)), so the output is isomorphic to the input as a
    labeled graph.
    """
    if len(p) != graph.n:
        raise ValueError(f"permutation length {len(p)} != node count {graph.n}")
    perm = p.perm
    types = [0] * graph.n
    for u, t in enumerate(graph.types):
        types[perm[u]] = t
    edges = [(perm[u], perm[v]) for u, v in graph.edges]
    if isinstance(graph, HeteroGraph):
        features = None
        if graph.features is not None:
            feats: list = [None] * graph.n
            for u, f in enumerate(graph.features):
                feats[perm[u]] = f
            features = tuple(feats)
        return HeteroGraph(graph.n, tuple(types), tuple(edges), features, dict(graph.meta))
    return SkeletonGraph(graph.n, tuple(types), tuple(edges), dict(graph.meta))


def reify_edge_labels(
    graph: EdgeLabeledGraph, table: TypeTable
) -> tuple[HeteroGraph, TypeTable]:
    """Replace each labeled edge (v,u) by a fresh node wired as v - n_e - u.

    One fresh node type is created per distinct edge label; fresh types are
    appended after the existing ones in label-sorted order so the output
    table is deterministic. Unlabeled edges pass through unchanged.
    """
    labels = sorted({lab for _, _, lab in graph.edges if lab is not None})
    for lab in labels:
        if lab in table.type_names:
            raise ValueError(f"edge label {lab!r} collides with an existing type name")
    label_type = {lab: table.K + i for i, lab in enumerate(labels)}
    new_table = TypeTable(
        table.dims + (1,) * len(labels),
        table.ground_metric + (JACCARD,) * len(labels),
        table.type_names + tuple(labels),
    )
    types = list(graph.types)
    edges: list[tuple[int, int]] = []
    next_id = graph.n
    for u, v, lab in graph.edges:
        if lab is None:
            edges.append((u, v))
        else:
            types.append(label_type[lab])
            edges.append((u, next_id))
            edges.append((next_id, v))
            next_id += 1
    return HeteroGraph(next_id, tuple(types), tuple(edges)), new_table


def to_skeleton(graph: HeteroGraph) -> SkeletonGraph:
    return SkeletonGraph(graph.n, graph.types, graph.edges, dict(graph.meta))


def with_features(
    skeleton: SkeletonGraph, features: Sequence[np.ndarray], meta: Mapping[str, str] | None = None
) -> HeteroGraph:
    return HeteroGraph(
        skeleton.n,
        skeleton.types,
        skeleton.edges,
        tuple(features),
        dict(skeleton.meta) if meta is None else dict(meta),
    )


def one_hot_encode(s: SkeletonGraph, table: TypeTable) -> tuple[np.ndarray, np.ndarray]:
    """Encode a skeleton as (X, E): one-hot type rows and a symmetric 0/1 adjacency."""
    X = np.zeros((s.n, table.K), dtype=np.float64)
    X[np.arange(s.n), list(s.types)] = 1.0
    E = np.zeros((s.n, s.n), dtype=np.float64)
    for u, v in s.edges:
        E[u, v] = 1.0
        E[v, u] = 1.0
    return X, E


def one_hot_decode(X: np.ndarray, E: np.ndarray) -> SkeletonGraph:
    n = X.shape[0]
    types = tuple(int(t) for t in X.argmax(axis=1))
    edges = tuple(
        (u, v) for u in range(n) for v in range(u + 1, n) if E[u, v] != 0.0
    )
    return SkeletonGraph(n, types, edges)


# ---------------------------------------------------------------------------
# Corpus file format: one JSON object per line, header first. Serialization is
# canonical (sorted edges, fixed key order, shortest round-trip floats) so a
# corpus written twice from equal inputs is byte-identical.
# ---------------------------------------------------------------------------


def _encode_feature(f: np.ndarray) -> object:
    nz = np.flatnonzero(f)
    if 3 * len(nz) < len(f):
        return {"nz": [[int(i), float(f[i])] for i in nz]}
    return [float(x) for x in f]


def _decode_feature(obj, dim: int, where: str) -> np.ndarray:
    if isinstance(obj, dict):
        if set(obj) != {"nz"}:
            raise CorpusFormatError(f"{where}: sparse feature must have a single 'nz' key")
        f = np.zeros(dim, dtype=np.float64)
        for pair in obj["nz"]:
            i, val = int(pair[0]), float(pair[1])
            if not 0 <= i < dim:
                raise CorpusFormatError(f"{where}: sparse index {i} outside [0, {dim})")
            f[i] = val
        return f
    if not isinstance(obj, list):
        raise CorpusFormatError(f"{where}: feature must be a list or a sparse object")
    if len(obj) != dim:
        raise CorpusFormatError(f"{where}: feature length {len(obj)} != dim {dim}")
    return np.asarray(obj, dtype=np.float64)


def _graph_record(g: HeteroGraph) -> dict:
    rec: dict = {"n": g.n, "types": list(g.types), "edges": [[u, v] for u, v in g.edges]}
    if g.features is None:
        rec["features"] = None
    else:
        rec["features"] = [_encode_feature(f) for f in g.features]
    rec["meta"] = {k: g.meta[k] for k in sorted(g.meta)}
    return rec


def dumps_corpus(table: TypeTable, graphs: Iterable[HeteroGraph]) -> str:
    header = {
        "K": table.K,
        "dims": list(table.dims),
        "ground_metric": list(table.ground_metric),
        "type_names": list(table.type_names),
        "version": CORPUS_VERSION,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for idx, g in enumerate(graphs):
        report = validate(g, table)
        if not report.ok:
            raise CorpusFormatError(f"record {idx}: invalid graph: {report.violations[0]}")
        lines.append(json.dumps(_graph_record(g), separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_corpus(path, table: TypeTable, graphs: Iterable[HeteroGraph]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_corpus(table, graphs))


def _parse_header(line: str) -> TypeTable:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"header: not valid JSON ({e})") from e
    if not isinstance(obj, dict):
        raise CorpusFormatError("header: expected a JSON object")
    for key in ("K", "dims", "ground_metric", "type_names", "version"):
        if key not in obj:
            raise CorpusFormatError(f"header: missing field {key!r}")
    if obj["version"] != CORPUS_VERSION:
        raise CorpusFormatError(f"header: unsupported version {obj['version']!r}")
    try:
        table = TypeTable(obj["dims"], obj["ground_metric"], obj["type_names"])
    except ValueError as e:
        raise CorpusFormatError(f"header: {e}") from e
    if obj["K"] != table.K:
        raise CorpusFormatError(f"header: K={obj['K']} but {table.K} types are listed")
    return table


def _parse_record(line: str, idx: int, table: TypeTable) -> HeteroGraph:
    where = f"record {idx}"
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusFormatError(f"{where}: not valid JSON ({e})") from e
    for key in ("n", "types", "edges", "features", "meta"):
        if key not in obj:
            raise CorpusFormatError(f"{where}: missing field {key!r}")
    n = obj["n"]
    if not isinstance(n, int) or n < 0:
        raise CorpusFormatError(f"{where}: n must be a non-negative integer")
    types = obj["types"]
    if len(types) != n:
        raise CorpusFormatError(f"{where}: {len(types)} types for n={n}")
    for u, t in enumerate(types):
        if not isinstance(t, int) or not 0 <= t < table.K:
            raise CorpusFormatError(f"{where}: node {u} has type {t!r} outside [0, {table.K})")
    prev = None
    for e in obj["edges"]:
        if len(e) != 2:
            raise CorpusFormatError(f"{where}: edge {e!r} is not a pair")
        u, v = e
        if not 0 <= u < v < n:
            raise CorpusFormatError(f"{where}: edge [{u},{v}] violates 0 <= u < v < n")
        if prev is not None and (u, v) <= prev:
            raise CorpusFormatError(f"{where}: edges not strictly sorted at [{u},{v}]")
        prev = (u, v)
    features = None
    if obj["features"] is not None:
        if len(obj["features"]) != n:
            raise CorpusFormatError(f"{where}: {len(obj['features'])} features for n={n}")
        features = tuple(
            _decode_feature(fobj, table.dims[types[u]], f"{where} node {u}")
            for u, fobj in enumerate(obj["features"])
        )
    meta = obj["meta"]
    if not isinstance(meta, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
    ):
        raise CorpusFormatError(f"{where}: meta must map strings to strings")
    return HeteroGraph(n, tuple(types), tuple((e[0], e[1]) for e in obj["edges"]), features, meta)


def loads_corpus(text: str) -> tuple[TypeTable, list[HeteroGraph]]:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise CorpusFormatError("empty corpus file")
    table = _parse_header(lines[0])
    graphs = [_parse_record(ln, i, table) for i, ln in enumerate(lines[1:])]
    return table, graphs


def read_corpus(path) -> tuple[TypeTable, list[HeteroGraph]]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_corpus(fh.read())
