"""Corpus construction: categorical splitting, train/val/test assignment,
feature pools and empirical statistics.

A corpus is a type table plus a list of validated graphs, each tagged train,
val or test. Pools collect the distinct feature vectors seen per type in the
training split; the phase-2 generator picks among pool entries rather than
synthesizing vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HeteroGraph, SkeletonGraph, TypeTable, validate

SPLITS = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.72, 0.08, 0.20)


@dataclass(frozen=True)
class Corpus:
    table: TypeTable
    graphs: tuple[HeteroGraph, ...]
    split: tuple[str, ...]
    seed: int
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "split", tuple(self.split))
        if len(self.graphs) != len(self.split):
            raise ValueError("one split tag per graph required")
        for tag in self.split:
            if tag not in SPLITS:
                raise ValueError(f"unknown split tag {tag!r}")
        for i, g in enumerate(self.graphs):
            report = validate(g, self.table)
            if not report.ok:
                raise ValueError(f"graph {i} fails validation: {report.violations[0]}")

    def subset(self, tag: str) -> list[HeteroGraph]:
        return [g for g, s in zip(self.graphs, self.split) if s == tag]

    @property
    def train(self) -> list[HeteroGraph]:
        return self.subset("train")

    @property
    def val(self) -> list[HeteroGraph]:
        return self.subset("val")

    @property
    def test(self) -> list[HeteroGraph]:
        return self.subset("test")


@dataclass(frozen=True)
class FeaturePool:
    """Per type: the distinct training feature vectors and their multiplicities."""

    entries: tuple[np.ndarray, ...]  # one (P_k, d_k) matrix per type
    multiplicities: tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen_e, frozen_m = [], []
        for e, m in zip(self.entries, self.multiplicities):
            e = np.asarray(e, dtype=np.float64)
            m = np.asarray(m, dtype=np.int64)
            if len(e) != len(m):
                raise ValueError("one multiplicity per pool entry required")
            if (m < 1).any():
                raise ValueError("multiplicities must be >= 1")
            e.setflags(write=False)
            m.setflags(write=False)
            frozen_e.append(e)
            frozen_m.append(m)
        object.__setattr__(self, "entries", tuple(frozen_e))
        object.__setattr__(self, "multiplicities", tuple(frozen_m))

    @property
    def K(self) -> int:
        return len(self.entries)

    def size(self, k: int) -> int:
        return len(self.entries[k])


@dataclass(frozen=True)
class TypeDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("type distribution must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class SizeDistribution:
    """Empirical distribution over training-graph node counts."""

    sizes: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if abs(p.sum() - 1.0) > 1e-12 or (p < 0).any():
            raise ValueError("size probabilities must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "probs", p)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.sizes, p=self.probs))


def split_by_categories(
    big: HeteroGraph,
    categories: dict[int, dict[str, str]],
    keys: list[str],
    max_nodes: int,
) -> list[HeteroGraph]:
    """Break a large graph into induced subgraphs, one per key-value combination.

    `categories` maps anchor node ids to their attribute values (movies and
    papers in the source datasets). Non-anchor nodes inherit the combination
    of their anchor neighbors; a node whose anchors disagree is replicated
    into each matching component, so shared actors/authors keep every
    component self-contained. Components larger than max_nodes are dropped.
    """
    known = set()
    for values in categories.values():
        known.update(values)
    for key in keys:
        if key not in known:
            raise ValueError(f"unknown category key {key!r}")

    combo_of_anchor: dict[int, tuple[str, ...]] = {}
    for node, values in categories.items():
        if not 0 <= node < big.n:
            raise ValueError(f"category entry for unknown node {node}")
        if all(k in values for k in keys):
            combo_of_anchor[node] = tuple(values[k] for k in keys)

    adj = big.neighbors()
    members: dict[tuple[str, ...], set[int]] = {}
    for node, combo in combo_of_anchor.items():
        members.setdefault(combo, set()).add(node)
    for u in range(big.n):
        if u in combo_of_anchor:
            continue
        inherited = {combo_of_anchor[v] for v in adj[u] if v in combo_of_anchor}
        for combo in inherited:
            members[combo].add(u)

    out = []
    for combo in sorted(members):
        nodes = sorted(members[combo])
        if len(nodes) > max_nodes:
            continue
        index = {orig: i for i, orig in enumerate(nodes)}
        types = tuple(big.types[u] for u in nodes)
        edges = tuple(
            (index[u], index[v]) for u, v in big.edges if u in index and v in index
        )
        features = None
        if big.features is not None:
            features = tuple(big.features[u] for u in nodes)
        meta = dict(big.meta)
        meta.update({k: val for k, val in zip(keys, combo)})
        out.append(HeteroGraph(len(nodes), types, edges, features, meta))
    return out


def split_counts(m: int, fractions=DEFAULT_FRACTIONS) -> tuple[int, int, int]:
    """Floor each split, then hand leftovers to val, test, train in that order."""
    floors = [int(np.floor(f * m)) for f in fractions]
    leftover = m - sum(floors)
    order = (1, 2, 0)  # val, test, train
    for i in range(leftover):
        floors[order[i % 3]] += 1
    return floors[0], floors[1], floors[2]


def assign_splits(
    table: TypeTable,
    graphs: list[HeteroGraph],
    seed: int,
    fractions=DEFAULT_FRACTIONS,
) -> Corpus:
    """Shuffle with a seeded RNG and tag graphs train/val/test.

    Counts are floor-rounded with the leftovers going to val, then test, then
    train, which keeps val and test non-empty for small corpora.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    m = len(graphs)
    if m < 5:
        raise ValueError(f"need at least 5 graphs to populate all splits, got {m}")
    n_train, n_val, n_test = split_counts(m, fractions)
    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    tags = [""] * m
    for pos, gi in enumerate(order):
        if pos < n_train:
            tags[gi] = "train"
        elif pos < n_train + n_val:
            tags[gi] = "val"
        else:
            tags[gi] = "test"
    tagged = []
    for g, tag in zip(graphs, tags):
        meta = dict(g.meta)
        meta["split"] = tag
        tagged.append(HeteroGraph(g.n, g.types, g.edges, g.features, meta))
    return Corpus(table, tuple(tagged), tuple(tags), seed, tuple(fractions))


def corpus_from_tagged(table: TypeTable, graphs: list[HeteroGraph], seed: int = 0) -> Corpus:
    """Rebuild a Corpus from graphs whose meta already carries split tags."""
    tags = []
    for i, g in enumerate(graphs):
        tag = g.meta.get("split")
        if tag not in SPLITS:
            raise ValueError(f"graph {i} has no valid split tag in meta")
        tags.append(tag)
    return Corpus(table, tuple(graphs), tuple(tags), seed)


def build_pools(corpus: Corpus) -> FeaturePool:
    """Collect distinct feature vectors per type from the training split.

    Exact duplicates are merged; multiplicities are kept for diagnostics only
    (the generator softmax ranges over unique entries).
    """
    K = corpus.table.K
    seen: list[dict[bytes, int]] = [dict() for _ in range(K)]
    entries: list[list[np.ndarray]] = [[] for _ in range(K)]
    counts: list[list[int]] = [[] for _ in range(K)]
    for g in corpus.train:
        if g.features is None:
            raise ValueError("training graphs must carry features to build pools")
        for u in range(g.n):
            k = g.types[u]
            key = g.features[u].tobytes()
            slot = seen[k].get(key)
            if slot is None:
                seen[k][key] = len(entries[k])
                entries[k].append(g.features[u])
                counts[k].append(1)
            else:
                counts[k][slot] += 1
    for k in range(K):
        if not entries[k]:
            raise ValueError(
                f"type {k} ({corpus.table.type_names[k]}) has no training nodes; "
                "its generator would have empty support"
            )
    return FeaturePool(
        tuple(np.stack(e) for e in entries),
        tuple(np.asarray(c, dtype=np.int64) for c in counts),
    )


def type_distribution(g: HeteroGraph | SkeletonGraph, K: int) -> TypeDistribution:
    if g.n < 1:
        raise ValueError("type distribution of an empty graph is undefined")
    counts = np.bincount(np.asarray(g.types), minlength=K).astype(np.float64)
    return TypeDistribution(counts / g.n)


def corpus_type_distribution(corpus: Corpus) -> TypeDistribution:
    """Node-type marginal over all training nodes (the diffusion target)."""
    K = corpus.table.K
    counts = np.zeros(K)
    for g in corpus.train:
        counts += np.bincount(np.asarray(g.types), minlength=K)
    if counts.sum() == 0:
        raise ValueError("empty training split")
    return TypeDistribution(counts / counts.sum())


def corpus_edge_density(corpus: Corpus) -> float:
    """Fraction of unordered node pairs that are edges, over training graphs."""
    edges = 0
    pairs = 0
    for g in corpus.train:
        edges += len(g.edges)
        pairs += g.n * (g.n - 1) // 2
    if pairs == 0:
        return 0.0
    return edges / pairs


def size_distribution(corpus: Corpus) -> SizeDistribution:
    sizes = sorted({g.n for g in corpus.train})
    if not sizes:
        raise ValueError("empty training split")
    counts = {s: 0 for s in sizes}
    for g in corpus.train:
        counts[g.n] += 1
    total = sum(counts.values())
    return SizeDistribution(tuple(sizes), np.array([counts[s] / total for s in sizes]))


def feature_space_diameters(pool: FeaturePool, table: TypeTable) -> np.ndarray:
    """Per-type penalty distances for the feature EMD.

    Jaccard types use 1.0 (the metric's diameter); Euclidean types use the
    exact diameter of the training pool entries.
    """
    out = np.ones(table.K, dtype=np.float64)
    for k in range(table.K):
        if table.ground_metric[k] == "euclidean":
            E = pool.entries[k]
            sq = (E**2).sum(axis=1)[:, None] + (E**2).sum(axis=1)[None, :] - 2.0 * E @ E.T
            out[k] = float(np.sqrt(np.maximum(sq, 0.0)).max())
    return out
