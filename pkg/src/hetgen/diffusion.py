"""Phase 1: discrete denoising diffusion over skeleton graphs.

Node types and edge states are noised by categorical transition matrices that
interpolate between the identity and the training marginals; a small
attention-based message-passing network learns to predict the clean graph
from a noisy one, and reverse sampling walks the posterior from pure
marginal noise back to a skeleton.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import SkeletonGraph
from .corpus import SizeDistribution

ROW_SUM_TOL = 1e-12


def cosine_beta(T: int, s: float = 0.008) -> np.ndarray:
    """Per-step noise weights from the squared-cosine decay, clipped to [0,1]."""
    t = np.arange(1, T + 1, dtype=np.float64)
    num = np.cos(0.5 * np.pi * (t / T + s) / (1.0 + s)) ** 2
    den = np.cos(0.5 * np.pi * s / (1.0 + s)) ** 2
    return np.clip(1.0 - num / den, 0.0, 1.0)


def _interp_matrix(beta_t: float, marginal: np.ndarray) -> np.ndarray:
    K = len(marginal)
    return (1.0 - beta_t) * np.eye(K) + beta_t * np.ones((K, 1)) @ marginal[None, :]


@dataclass(frozen=True)
class TransitionSchedule:
    """Per-step and cumulative transition matrices for types and edge states."""

    T: int
    QX: np.ndarray  # (T, K, K)
    QE: np.ndarray  # (T, 2, 2)
    QXbar: np.ndarray
    QEbar: np.ndarray
    node_marginal: np.ndarray
    edge_marginal: float
    beta: np.ndarray

    def __post_init__(self):
        for stack in (self.QX, self.QE, self.QXbar, self.QEbar):
            if (stack < 0).any():
                raise ValueError("transition matrices must be non-negative")
            drift = np.abs(stack.sum(axis=-1) - 1.0).max()
            if drift > ROW_SUM_TOL:
                raise ValueError(f"row sums drifted by {drift:.2e} (> {ROW_SUM_TOL})")

    @property
    def K(self) -> int:
        return self.QX.shape[1]

    def qx(self, t: int) -> np.ndarray:
        return self.QX[t - 1]

    def qe(self, t: int) -> np.ndarray:
        return self.QE[t - 1]

    def qxbar(self, t: int) -> np.ndarray:
        return np.eye(self.K) if t == 0 else self.QXbar[t - 1]

    def qebar(self, t: int) -> np.ndarray:
        return np.eye(2) if t == 0 else self.QEbar[t - 1]


def build_schedule(
    T: int,
    node_marginal: np.ndarray,
    edge_marginal: float,
    beta: np.ndarray | None = None,
) -> TransitionSchedule:
    """Schedule whose step-t rows interpolate identity and the marginals.

    With the default cosine beta the final cumulative matrices collapse onto
    the marginals exactly (beta[T] = 1).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    node_marginal = np.asarray(node_marginal, dtype=np.float64)
    if (node_marginal < 0).any() or abs(node_marginal.sum() - 1.0) > 1e-9:
        raise ValueError("node_marginal must be a probability vector")
    node_marginal = node_marginal / node_marginal.sum()
    if not 0.0 <= edge_marginal <= 1.0:
        raise ValueError("edge_marginal must be in [0, 1]")
    if beta is None:
        beta = cosine_beta(T)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (T,):
        raise ValueError(f"need {T} beta values, got shape {beta.shape}")
    if (beta < 0).any() or (beta > 1).any():
        raise ValueError("beta values must lie in [0, 1]")

    e_marg = np.array([1.0 - edge_marginal, edge_marginal])
    K = len(node_marginal)
    QX = np.empty((T, K, K))
    QE = np.empty((T, 2, 2))
    QXbar = np.empty((T, K, K))
    QEbar = np.empty((T, 2, 2))
    for idx in range(T):
        QX[idx] = _interp_matrix(beta[idx], node_marginal)
        QE[idx] = _interp_matrix(beta[idx], e_marg)
        QXbar[idx] = QX[idx] if idx == 0 else QXbar[idx - 1] @ QX[idx]
        QEbar[idx] = QE[idx] if idx == 0 else QEbar[idx - 1] @ QE[idx]
    return TransitionSchedule(T, QX, QE, QXbar, QEbar, node_marginal, float(edge_marginal), beta)


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    iu, iv = np.triu_indices(n, k=1)
    return iu, iv


def _edge_states(s: SkeletonGraph, iu: np.ndarray, iv: np.ndarray) -> np.ndarray:
    present = set(s.edges)
    return np.array(
        [1 if (int(u), int(v)) in present else 0 for u, v in zip(iu, iv)],
        dtype=np.int64,
    )


def _sample_rows(rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # one categorical draw per row of a stochastic matrix slice
    cdf = rows.cumsum(axis=1)
    u = rng.random((rows.shape[0], 1))
    return np.minimum((u > cdf).sum(axis=1), rows.shape[1] - 1)


def forward_noise(
    s: SkeletonGraph, t: int, schedule: TransitionSchedule, rng: np.random.Generator
) -> SkeletonGraph:
    """Sample a noisy skeleton at step t from the cumulative transitions."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t must be in [1, {schedule.T}]")
    qx = schedule.qxbar(t)
    types = _sample_rows(qx[np.asarray(s.types)], rng)
    iu, iv = _pairs(s.n)
    qe = schedule.qebar(t)
    states = _sample_rows(qe[_edge_states(s, iu, iv)], rng)
    edges = tuple(
        (int(u), int(v)) for u, v, st in zip(iu, iv, states) if st == 1
    )
    return SkeletonGraph(s.n, tuple(int(x) for x in types), edges)


@dataclass
class DenoiserConfig:
    hidden: int = 16
    layers: int = 2
    slope: float = 0.2


class DenoiserParams:
    """Weights of the denoising network.

    An input projection of one-hot types plus a learned per-step embedding,
    a stack of graph-attention layers over the noisy edges, and two
    zero-initialized output heads (node types, pair states) so predictions
    start uniform.
    """

    def __init__(self, rng: np.random.Generator, K: int, T: int, config: DenoiserConfig):
        H = config.hidden
        self.K = K
        self.T = T
        self.config = config
        self.w_in = ad.Tensor(ad.glorot(rng, (K, H)), requires_grad=True)
        self.b_in = ad.Tensor(np.zeros(H), requires_grad=True)
        self.time_emb = ad.Tensor(ad.glorot(rng, (T, H)), requires_grad=True)
        self.gats = [ad.GATParams(rng, H, H, config.slope) for _ in range(config.layers)]
        self.w_node = ad.Tensor(np.zeros((H, K)), requires_grad=True)
        self.b_node = ad.Tensor(np.zeros(K), requires_grad=True)
        # the pair head needs a hidden nonlinearity: a purely linear map on
        # h_u + h_v cannot separate edge patterns where the pair sums of two
        # present and two absent pairs coincide (they always do on 4 nodes)
        self.w_edge_h = ad.Tensor(ad.glorot(rng, (H, H)), requires_grad=True)
        self.b_edge_h = ad.Tensor(np.zeros(H), requires_grad=True)
        self.w_edge = ad.Tensor(np.zeros((H, 2)), requires_grad=True)
        self.b_edge = ad.Tensor(np.zeros(2), requires_grad=True)

    def tensors(self) -> list[ad.Tensor]:
        out = [self.w_in, self.b_in, self.time_emb]
        for g in self.gats:
            out.extend(g.tensors())
        out.extend(
            [self.w_node, self.b_node, self.w_edge_h, self.b_edge_h, self.w_edge, self.b_edge]
        )
        return out

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "T": self.T,
            "hidden": self.config.hidden,
            "layers": self.config.layers,
            "slope": self.config.slope,
            "arrays": [t.value.tolist() for t in self.tensors()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DenoiserParams":
        config = DenoiserConfig(obj["hidden"], obj["layers"], obj["slope"])
        phi = cls(np.random.default_rng(0), obj["K"], obj["T"], config)
        for t, arr in zip(phi.tensors(), obj["arrays"]):
            t.value = np.asarray(arr, dtype=np.float64).reshape(t.value.shape)
        return phi


def _forward(
    phi: DenoiserParams, s: SkeletonGraph, t: int
) -> tuple[ad.Tensor, ad.Tensor, np.ndarray, np.ndarray]:
    """Tensor-typed forward pass; returns node probs, pair probs and the pair index."""
    n = s.n
    X = np.zeros((n, phi.K))
    X[np.arange(n), list(s.types)] = 1.0
    h = ad.dense(phi.w_in, phi.b_in, ad.Tensor(X))
    time_row = ad.reshape(ad.gather_rows(phi.time_emb, [t - 1]), (phi.config.hidden,))
    h = ad.add_rowvec(h, time_row)
    src, dst = ad.directed_with_self_loops(n, s.edges)
    for gat in phi.gats:
        # residual keeps node identities distinct when attention saturates
        h = ad.add(h, ad.leaky_relu(ad.gat_layer(h, src, dst, n, gat), phi.config.slope))
    node_probs = ad.softmax(ad.dense(phi.w_node, phi.b_node, h))
    iu, iv = _pairs(n)
    if len(iu):
        pair_sums = ad.add(ad.gather_rows(h, iu), ad.gather_rows(h, iv))
        hidden = ad.leaky_relu(ad.dense(phi.w_edge_h, phi.b_edge_h, pair_sums), phi.config.slope)
        pair_probs = ad.softmax(ad.dense(phi.w_edge, phi.b_edge, hidden))
    else:
        pair_probs = ad.Tensor(np.zeros((0, 2)))
    return node_probs, pair_probs, iu, iv


def denoise_predict(
    noisy: SkeletonGraph, t: int, phi: DenoiserParams
) -> tuple[np.ndarray, np.ndarray]:
    """Clean-graph prediction: (n,K) type probabilities and (n(n-1)/2, 2)
    probabilities over {absent, present} for lexicographic unordered pairs."""
    if not 1 <= t <= phi.T:
        raise ValueError(f"t must be in [1, {phi.T}]")
    node_probs, pair_probs, _, _ = _forward(phi, noisy, t)
    return node_probs.value, pair_probs.value


def denoiser_loss(
    phi: DenoiserParams, clean: SkeletonGraph, noisy: SkeletonGraph, t: int
) -> ad.Tensor:
    """Summed cross entropy of clean types and clean pair states under the
    prediction from the noisy graph."""
    node_probs, pair_probs, iu, iv = _forward(phi, noisy, t)
    loss = ad.nll_loss(node_probs, np.asarray(clean.types))
    if len(iu):
        loss = ad.add(loss, ad.nll_loss(pair_probs, _edge_states(clean, iu, iv)))
    return loss


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 2e-3
    optimizer: str = "adam"
    hidden: int = 16
    layers: int = 2
    slope: float = 0.2


def train_denoiser(
    skeletons: list[SkeletonGraph],
    schedule: TransitionSchedule,
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[DenoiserParams, list[float]]:
    """Fit the denoiser on clean skeletons; returns params and per-epoch loss."""
    if not skeletons:
        raise ValueError("empty training set")
    phi = DenoiserParams(
        rng, schedule.K, schedule.T, DenoiserConfig(config.hidden, config.layers, config.slope)
    )
    opt = ad.make_optimizer(config.optimizer, phi.tensors(), lr=config.lr)
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(len(skeletons))
        total = 0.0
        for gi in order:
            clean = skeletons[gi]
            t = int(rng.integers(1, schedule.T + 1))
            noisy = forward_noise(clean, t, schedule, rng)
            opt.zero_grad()
            loss = denoiser_loss(phi, clean, noisy, t)
            loss.backward()
            opt.step()
            total += float(loss.value)
        trace.append(total / len(skeletons))
    return phi, trace


def _posterior(
    Q_t: np.ndarray, Qbar_prev: np.ndarray, pred: np.ndarray, current: np.ndarray
) -> np.ndarray:
    """Reverse-step distribution per item: rows proportional to
    Q_t[:, z_t] * (pred @ Qbar_{t-1}), the standard posterior with the clean
    state marginalized under the predicted distribution."""
    lik = Q_t[:, current].T  # (n, S)
    prior = pred @ Qbar_prev  # (n, S)
    w = lik * prior
    w_sum = w.sum(axis=1, keepdims=True)
    uniform = np.full_like(w, 1.0 / w.shape[1])
    with np.errstate(invalid="ignore"):
        out = np.where(w_sum > 0, w / np.maximum(w_sum, 1e-300), uniform)
    return out


def sample_skeleton(
    phi: DenoiserParams,
    schedule: TransitionSchedule,
    sizes: SizeDistribution,
    rng: np.random.Generator,
    n: int | None = None,
) -> SkeletonGraph:
    """Draw a skeleton: initialize from the marginals and denoise T..1."""
    if n is None:
        n = sizes.sample(rng)
    types = _sample_rows(
        np.tile(schedule.node_marginal, (n, 1)), rng
    )
    iu, iv = _pairs(n)
    states = (rng.random(len(iu)) < schedule.edge_marginal).astype(np.int64)

    for t in range(schedule.T, 0, -1):
        current = SkeletonGraph(
            n,
            tuple(int(x) for x in types),
            tuple((int(u), int(v)) for u, v, st in zip(iu, iv, states) if st == 1),
        )
        node_pred, pair_pred = denoise_predict(current, t, phi)
        types = _sample_rows(
            _posterior(schedule.qx(t), schedule.qxbar(t - 1), node_pred, types), rng
        )
        if len(iu):
            states = _sample_rows(
                _posterior(schedule.qe(t), schedule.qebar(t - 1), pair_pred, states), rng
            )
    return SkeletonGraph(
        n,
        tuple(int(x) for x in types),
        tuple((int(u), int(v)) for u, v, st in zip(iu, iv, states) if st == 1),
    )
