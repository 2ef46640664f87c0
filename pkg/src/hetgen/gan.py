"""Phase 2: adversarial assignment of pool features onto skeleton graphs.

The generator message-passes over a skeleton's one-hot type vectors, then a
per-type head turns each node's (type, neighborhood) pair into logits over
that type's feature pool; straight-through Gumbel sampling keeps the path to
the head weights differentiable. The discriminator embeds a featured graph
through typed attention layers, averages node latents per type, concatenates
the averages in type order and classifies real vs generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .core import HeteroGraph, SkeletonGraph, with_features
from .corpus import Corpus, FeaturePool

TypedArrays = dict[int, np.ndarray]
TypedTensors = dict[int, ad.Tensor]


def typed_node_ids(types, K: int) -> dict[int, np.ndarray]:
    t = np.asarray(types)
    return {k: np.flatnonzero(t == k) for k in range(K) if (t == k).any()}


@dataclass
class GeneratorConfig:
    hidden: int = 16
    mp_layers: int = 2
    head_hidden: int = 32
    slope: float = 0.2
    no_mp: bool = False
    no_pool: bool = False


class GeneratorParams:
    """Message-passing stack plus one conditional head per node type.

    With pools, head k emits logits over pool k's entries (output layer
    zero-initialized, so logits start uniform). The no-pool ablation replaces
    the logits head by a direct sigmoid feature head; the no-MP ablation
    feeds heads the one-hot type vector alone.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        K: int,
        pool_sizes: list[int],
        feature_dims: list[int],
        config: GeneratorConfig,
    ):
        self.K = K
        self.config = config
        self.pool_sizes = list(pool_sizes)
        self.feature_dims = list(feature_dims)
        H = config.hidden
        self.w_in = ad.Tensor(ad.glorot(rng, (K, H)), requires_grad=True)
        self.b_in = ad.Tensor(np.zeros(H), requires_grad=True)
        self.gats = [ad.GATParams(rng, H, H, config.slope) for _ in range(config.mp_layers)]
        d_head_in = K if config.no_mp else K + H
        out_widths = feature_dims if config.no_pool else pool_sizes
        self.head_w1 = []
        self.head_b1 = []
        self.head_w2 = []
        self.head_b2 = []
        for k in range(K):
            self.head_w1.append(ad.Tensor(ad.glorot(rng, (d_head_in, config.head_hidden)), requires_grad=True))
            self.head_b1.append(ad.Tensor(np.zeros(config.head_hidden), requires_grad=True))
            self.head_w2.append(ad.Tensor(np.zeros((config.head_hidden, out_widths[k])), requires_grad=True))
            self.head_b2.append(ad.Tensor(np.zeros(out_widths[k]), requires_grad=True))

    def tensors(self) -> list[ad.Tensor]:
        out = [self.w_in, self.b_in]
        for g in self.gats:
            out.extend(g.tensors())
        out.extend(self.head_w1)
        out.extend(self.head_b1)
        out.extend(self.head_w2)
        out.extend(self.head_b2)
        return out


def mp_update(s: SkeletonGraph, params: GeneratorParams) -> ad.Tensor:
    """Neighborhood-aware node vectors h_u from the one-hot type matrix."""
    X = np.zeros((s.n, params.K))
    X[np.arange(s.n), list(s.types)] = 1.0
    h = ad.dense(params.w_in, params.b_in, ad.Tensor(X))
    src, dst = ad.directed_with_self_loops(s.n, s.edges)
    for gat in params.gats:
        h = ad.add(h, ad.leaky_relu(ad.gat_layer(h, src, dst, s.n, gat), params.config.slope))
    return h


def _head(params: GeneratorParams, k: int, inputs: ad.Tensor) -> ad.Tensor:
    hidden = ad.leaky_relu(
        ad.dense(params.head_w1[k], params.head_b1[k], inputs), params.config.slope
    )
    return ad.dense(params.head_w2[k], params.head_b2[k], hidden)


def _head_inputs(s: SkeletonGraph, params: GeneratorParams) -> tuple[ad.Tensor, dict[int, np.ndarray]]:
    X = np.zeros((s.n, params.K))
    X[np.arange(s.n), list(s.types)] = 1.0
    ids = typed_node_ids(s.types, params.K)
    if params.config.no_mp:
        return ad.Tensor(X), ids
    return ad.concat_cols(ad.Tensor(X), mp_update(s, params)), ids


def generator_logits(x_u: np.ndarray, h_u, params: GeneratorParams) -> ad.Tensor:
    """Logits over the pool of the type selected by the one-hot x_u."""
    k = int(np.argmax(x_u))
    if params.config.no_mp:
        row = ad.Tensor(np.asarray(x_u, dtype=np.float64)[None, :])
    else:
        h_row = h_u if isinstance(h_u, ad.Tensor) else ad.Tensor(np.asarray(h_u))
        row = ad.concat_cols(ad.Tensor(np.asarray(x_u, dtype=np.float64)[None, :]), ad.reshape(h_row, (1, -1)))
    return ad.reshape(_head(params, k, row), (-1,))


def skeleton_logits(s: SkeletonGraph, params: GeneratorParams) -> tuple[dict[int, ad.Tensor], dict[int, np.ndarray]]:
    """Per-type logit matrices for all nodes of a skeleton at once."""
    inputs, ids = _head_inputs(s, params)
    return {k: _head(params, k, ad.gather_rows(inputs, ids[k])) for k in ids}, ids


def generate_typed_features(
    s: SkeletonGraph,
    params: GeneratorParams,
    pools: FeaturePool | None,
    rng: np.random.Generator,
    mode: str = "train",
    temperature: float = 1.0,
) -> tuple[TypedTensors, dict[int, np.ndarray]]:
    """Differentiable per-type feature matrices for a skeleton.

    Pool path: train mode picks entries by hard straight-through Gumbel
    samples, sample mode draws from the categorical softmax directly. No-pool
    path: features are the sigmoid output of the head.
    """
    logits_by_type, ids = skeleton_logits(s, params)
    feats: TypedTensors = {}
    for k, logits in logits_by_type.items():
        if params.config.no_pool:
            feats[k] = ad.sigmoid(logits)
            continue
        if pools is None or pools.size(k) == 0:
            raise ValueError(f"type {k} present in skeleton but absent from pools")
        pool_matrix = ad.Tensor(np.asarray(pools.entries[k]))
        if mode == "train":
            onehot = ad.gumbel_softmax(logits, temperature, rng=rng, hard=True)
        elif mode == "sample":
            probs = ad.softmax(logits).value
            cdf = probs.cumsum(axis=1)
            u = rng.random((probs.shape[0], 1))
            picks = np.minimum((u > cdf).sum(axis=1), probs.shape[1] - 1)
            oh = np.zeros_like(probs)
            oh[np.arange(len(picks)), picks] = 1.0
            onehot = ad.Tensor(oh)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        feats[k] = ad.matmul(onehot, pool_matrix)
    return feats, ids


def assign_features(
    s: SkeletonGraph,
    params: GeneratorParams,
    pools: FeaturePool | None,
    rng: np.random.Generator,
    mode: str = "sample",
    temperature: float = 1.0,
    jaccard_types: set[int] | None = None,
) -> HeteroGraph:
    """Materialize a featured graph from a skeleton.

    Pool features are bit-exact copies of pool entries. No-pool features are
    continuous; components of Jaccard-metric types are thresholded at 0.5 so
    the output still validates.
    """
    feats, ids = generate_typed_features(s, params, pools, rng, mode, temperature)
    rows: list[np.ndarray | None] = [None] * s.n
    for k, tensor in feats.items():
        block = tensor.value
        if params.config.no_pool and jaccard_types and k in jaccard_types:
            block = (block >= 0.5).astype(np.float64)
        for local, node in enumerate(ids[k]):
            rows[node] = block[local]
    return with_features(s, rows)


@dataclass
class DiscriminatorConfig:
    latent: int = 16
    hgt_layers: int = 2
    classifier_hidden: int = 32
    slope: float = 0.2


class DiscriminatorParams:
    """Typed-attention embedding stack plus a sigmoid classifier.

    The classifier's final layer starts at zero so the initial output is
    exactly 0.5 for any graph.
    """

    def __init__(self, rng: np.random.Generator, feature_dims: list[int], config: DiscriminatorConfig):
        self.K = len(feature_dims)
        self.config = config
        L = config.latent
        dims = list(feature_dims)
        self.hgts = []
        for layer in range(config.hgt_layers):
            dims_in = dims if layer == 0 else [L] * self.K
            self.hgts.append(ad.HGTParams(rng, dims_in, d_hidden=L, d_out=L))
        self.w1 = ad.Tensor(ad.glorot(rng, (self.K * L, config.classifier_hidden)), requires_grad=True)
        self.b1 = ad.Tensor(np.zeros(config.classifier_hidden), requires_grad=True)
        self.w2 = ad.Tensor(np.zeros((config.classifier_hidden, 1)), requires_grad=True)
        self.b2 = ad.Tensor(np.zeros(1), requires_grad=True)

    def tensors(self) -> list[ad.Tensor]:
        out = []
        for h in self.hgts:
            out.extend(h.tensors())
        out.extend([self.w1, self.b1, self.w2, self.b2])
        return out


def typed_features_of(g: HeteroGraph, K: int) -> tuple[TypedTensors, dict[int, np.ndarray]]:
    if g.features is None:
        raise ValueError("discriminator needs featured graphs")
    ids = typed_node_ids(g.types, K)
    feats = {k: ad.Tensor(np.stack([g.features[u] for u in idx])) for k, idx in ids.items()}
    return feats, ids


def discriminator_embed(
    feats: TypedTensors,
    ids: dict[int, np.ndarray],
    n: int,
    edges,
    params: DiscriminatorParams,
) -> ad.Tensor:
    """Per-type means of the typed-attention latents, concatenated in type order.

    Types with no nodes contribute a zero block, which keeps the embedding
    total and preserves labeled-permutation invariance.
    """
    src, dst = ad.directed_with_self_loops(n, edges)
    h = ad.hgt_layer(feats, ids, src, dst, n, params.hgts[0])
    for layer in params.hgts[1:]:
        uniform = {k: ad.gather_rows(h, ids[k]) for k in ids}
        h = ad.hgt_layer(uniform, ids, src, dst, n, layer)
    parts = []
    for k in range(params.K):
        if k in ids:
            parts.append(ad.scale(ad.sum_rows(ad.gather_rows(h, ids[k])), 1.0 / len(ids[k])))
        else:
            parts.append(ad.Tensor(np.zeros(params.config.latent)))
    return ad.concat_vec(parts)


def discriminate_graph(g: HeteroGraph, params: DiscriminatorParams) -> ad.Tensor:
    feats, ids = typed_features_of(g, params.K)
    return discriminate_typed(feats, ids, g.n, g.edges, params)


def discriminate_typed(
    feats: TypedTensors,
    ids: dict[int, np.ndarray],
    n: int,
    edges,
    params: DiscriminatorParams,
) -> ad.Tensor:
    """Probability (0,1) that the graph is real."""
    embed = ad.reshape(discriminator_embed(feats, ids, n, edges, params), (1, -1))
    hidden = ad.leaky_relu(ad.dense(params.w1, params.b1, embed), params.config.slope)
    out = ad.sigmoid(ad.dense(params.w2, params.b2, hidden))
    return ad.reshape(out, ())


def discriminate(g: HeteroGraph, params: DiscriminatorParams) -> float:
    return float(discriminate_graph(g, params).value)


# --- training -----------------------------------------------------------------


@dataclass
class GANConfig:
    steps: int = 300
    batch: int = 8
    optimizer: str = "sgd"
    d_lr: float = 0.05
    g_lr: float = 0.05
    tau_start: float = 1.0
    tau_end: float = 0.5
    nonsaturating: bool = False
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)


def temperature_at(step: int, total: int, tau_start: float, tau_end: float) -> float:
    if total <= 1:
        return tau_end
    frac = step / (total - 1)
    return float(tau_start * (tau_end / tau_start) ** frac)


def train_gan(
    corpus: Corpus,
    skeletons: list[SkeletonGraph],
    pools: FeaturePool | None,
    config: GANConfig,
    rng: np.random.Generator,
) -> tuple[GeneratorParams, DiscriminatorParams, list[dict]]:
    """Alternating discriminator/generator updates; deterministic per seed.

    The discriminator minimizes BCE on balanced real/generated batches; the
    generator minimizes log(1 - D(fake)) (or -log D with the non-saturating
    flag). Returns both parameter sets and a per-step loss trace.
    """
    real = corpus.train
    if not real:
        raise ValueError("empty training split")
    if not skeletons:
        raise ValueError("no skeletons to assign features to")
    table = corpus.table
    K = table.K
    if config.generator.no_pool:
        pool_sizes = [0] * K
    else:
        if pools is None:
            raise ValueError("pools required unless no_pool is set")
        pool_sizes = [pools.size(k) for k in range(K)]
    gen = GeneratorParams(rng, K, pool_sizes, list(table.dims), config.generator)
    disc = DiscriminatorParams(rng, list(table.dims), config.discriminator)
    opt_d = ad.make_optimizer(config.optimizer, disc.tensors(), lr=config.d_lr)
    opt_g = ad.make_optimizer(config.optimizer, gen.tensors(), lr=config.g_lr)
    jaccard = {k for k in range(K) if table.ground_metric[k] == "jaccard"}
    trace = []

    for step in range(config.steps):
        tau = temperature_at(step, config.steps, config.tau_start, config.tau_end)

        # discriminator step: real vs detached generated graphs
        real_batch = [real[int(i)] for i in rng.integers(0, len(real), config.batch)]
        skel_batch = [skeletons[int(i)] for i in rng.integers(0, len(skeletons), config.batch)]
        outputs = []
        labels = []
        for g in real_batch:
            outputs.append(discriminate_graph(g, disc))
            labels.append(1.0)
        for s in skel_batch:
            fake = assign_features(s, gen, pools, rng, "train", tau, jaccard_types=None)
            outputs.append(discriminate_graph(fake, disc))
            labels.append(0.0)
        d_loss = ad.bce_loss(ad.concat_vec([ad.reshape(o, (1,)) for o in outputs]), np.asarray(labels))
        opt_d.zero_grad()
        opt_g.zero_grad()
        d_loss.backward()
        opt_d.step()

        # generator step: differentiable path through straight-through samples
        skel_batch = [skeletons[int(i)] for i in rng.integers(0, len(skeletons), config.batch)]
        terms = []
        for s in skel_batch:
            feats, ids = generate_typed_features(s, gen, pools, rng, "train", tau)
            d_out = discriminate_typed(feats, ids, s.n, s.edges, disc)
            one = ad.Tensor(np.asarray(1.0))
            if config.nonsaturating:
                terms.append(ad.scale(ad.log_clamped(ad.reshape(d_out, ())), -1.0))
            else:
                terms.append(ad.log_clamped(ad.sub(one, ad.reshape(d_out, ()))))
        g_loss = ad.scale(terms[0], 1.0 / len(terms))
        for t in terms[1:]:
            g_loss = ad.add(g_loss, ad.scale(t, 1.0 / len(terms)))
        opt_d.zero_grad()
        opt_g.zero_grad()
        g_loss.backward()
        opt_g.step()

        trace.append(
            {
                "step": step,
                "d_loss": float(d_loss.value),
                "g_loss": float(g_loss.value),
                "tau": tau,
            }
        )
    return gen, disc, trace


# --- serialization --------------------------------------------------------------


def generator_to_json(gen: GeneratorParams) -> dict:
    c = gen.config
    return {
        "K": gen.K,
        "pool_sizes": gen.pool_sizes,
        "feature_dims": gen.feature_dims,
        "hidden": c.hidden,
        "mp_layers": c.mp_layers,
        "head_hidden": c.head_hidden,
        "slope": c.slope,
        "no_mp": c.no_mp,
        "no_pool": c.no_pool,
        "arrays": [t.value.tolist() for t in gen.tensors()],
    }


def generator_from_json(obj: dict) -> GeneratorParams:
    config = GeneratorConfig(
        obj["hidden"], obj["mp_layers"], obj["head_hidden"], obj["slope"], obj["no_mp"], obj["no_pool"]
    )
    gen = GeneratorParams(
        np.random.default_rng(0), obj["K"], obj["pool_sizes"], obj["feature_dims"], config
    )
    for t, arr in zip(gen.tensors(), obj["arrays"]):
        t.value = np.asarray(arr, dtype=np.float64).reshape(t.value.shape)
    return gen


def discriminator_to_json(disc: DiscriminatorParams) -> dict:
    c = disc.config
    return {
        "feature_dims": [int(h.shape[0]) for h in disc.hgts[0].query],
        "latent": c.latent,
        "hgt_layers": c.hgt_layers,
        "classifier_hidden": c.classifier_hidden,
        "slope": c.slope,
        "arrays": [t.value.tolist() for t in disc.tensors()],
    }


def discriminator_from_json(obj: dict) -> DiscriminatorParams:
    config = DiscriminatorConfig(
        obj["latent"], obj["hgt_layers"], obj["classifier_hidden"], obj["slope"]
    )
    disc = DiscriminatorParams(np.random.default_rng(0), obj["feature_dims"], config)
    for t, arr in zip(disc.tensors(), obj["arrays"]):
        t.value = np.asarray(arr, dtype=np.float64).reshape(t.value.shape)
    return disc
