"""Minimal reverse-mode autodiff over float64 numpy arrays.

Holds every trainable parameter of the denoiser, generator and discriminator.
Deliberately small: only the operations those networks need, no general
broadcasting. All ops check their outputs for NaN/Inf and fail loudly.
"""

from __future__ import annotations

import numpy as np


class NumericalError(ArithmeticError):
    """A forward pass produced NaN or Inf."""


class Tensor:
    """A node in the computation graph: value, gradient and backward rule."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def detach(self) -> "Tensor":
        return Tensor(self.value.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self):
        if self.value.ndim != 0:
            raise ValueError("backward() expects a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def _op(value, parents, backward) -> Tensor:
    out = Tensor(value)
    if not np.isfinite(out.value).all():
        raise NumericalError("non-finite value in forward pass")
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = True
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --- elementwise and linear algebra ---------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    out_value = a.value + b.value

    def backward():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out = _op(out_value, (a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch {a.shape} vs {b.shape}")
    out_value = a.value - b.value

    def backward():
        a._accumulate(out.grad)
        b._accumulate(-out.grad)

    out = _op(out_value, (a, b), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch {a.shape} vs {b.shape}")
    out_value = a.value * b.value

    def backward():
        a._accumulate(out.grad * b.value)
        b._accumulate(out.grad * a.value)

    out = _op(out_value, (a, b), backward)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"div shape mismatch {a.shape} vs {b.shape}")
    out_value = a.value / b.value

    def backward():
        a._accumulate(out.grad / b.value)
        b._accumulate(-out.grad * a.value / (b.value * b.value))

    out = _op(out_value, (a, b), backward)
    return out


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    out_value = a.value * c

    def backward():
        a._accumulate(out.grad * c)

    out = _op(out_value, (a,), backward)
    return out


def add_rowvec(mat, vec) -> Tensor:
    """mat (n,d) plus vec (d,), broadcast over rows."""
    mat, vec = _as_tensor(mat), _as_tensor(vec)
    out_value = mat.value + vec.value[None, :]

    def backward():
        mat._accumulate(out.grad)
        vec._accumulate(out.grad.sum(axis=0))

    out = _op(out_value, (mat, vec), backward)
    return out


def mul_colvec(mat, col) -> Tensor:
    """mat (n,d) times col (n,1), broadcast over columns."""
    mat, col = _as_tensor(mat), _as_tensor(col)
    out_value = mat.value * col.value

    def backward():
        mat._accumulate(out.grad * col.value)
        col._accumulate((out.grad * mat.value).sum(axis=1, keepdims=True))

    out = _op(out_value, (mat, col), backward)
    return out


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_value = a.value @ b.value

    def backward():
        a._accumulate(out.grad @ b.value.T)
        b._accumulate(a.value.T @ out.grad)

    out = _op(out_value, (a, b), backward)
    return out


def rowdot(a, b) -> Tensor:
    """Row-wise dot product of two (n,d) matrices, returning (n,1)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"rowdot shape mismatch {a.shape} vs {b.shape}")
    out_value = (a.value * b.value).sum(axis=1, keepdims=True)

    def backward():
        a._accumulate(out.grad * b.value)
        b._accumulate(out.grad * a.value)

    out = _op(out_value, (a, b), backward)
    return out


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out_value = np.exp(a.value)

    def backward():
        a._accumulate(out.grad * out.value)

    out = _op(out_value, (a,), backward)
    return out


def log_clamped(a, eps: float = 1e-7) -> Tensor:
    """ln(max(x, eps)); the gradient is zero where the clamp is active."""
    a = _as_tensor(a)
    clamped = np.maximum(a.value, eps)
    out_value = np.log(clamped)

    def backward():
        a._accumulate(np.where(a.value > eps, out.grad / clamped, 0.0))

    out = _op(out_value, (a,), backward)
    return out


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError("leaky_relu slope must be in (0, 1)")
    a = _as_tensor(a)
    out_value = np.where(a.value > 0.0, a.value, slope * a.value)

    def backward():
        a._accumulate(out.grad * np.where(a.value > 0.0, 1.0, slope))

    out = _op(out_value, (a,), backward)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out_value = 1.0 / (1.0 + np.exp(-a.value))

    def backward():
        a._accumulate(out.grad * out.value * (1.0 - out.value))

    out = _op(out_value, (a,), backward)
    return out


def softmax(a) -> Tensor:
    """Softmax over the last axis (rows of a matrix, or a single vector)."""
    a = _as_tensor(a)
    shifted = a.value - a.value.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_value = e / e.sum(axis=-1, keepdims=True)

    def backward():
        inner = (out.grad * out.value).sum(axis=-1, keepdims=True)
        a._accumulate((out.grad - inner) * out.value)

    out = _op(out_value, (a,), backward)
    return out


def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    out_value = a.value.sum()

    def backward():
        a._accumulate(np.full_like(a.value, float(out.grad)))

    out = _op(out_value, (a,), backward)
    return out


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    out_value = a.value.mean()

    def backward():
        a._accumulate(np.full_like(a.value, float(out.grad) / a.value.size))

    out = _op(out_value, (a,), backward)
    return out


def sum_rows(a) -> Tensor:
    """Column sums of a (n,d) matrix, returning (d,)."""
    a = _as_tensor(a)
    out_value = a.value.sum(axis=0)

    def backward():
        a._accumulate(np.broadcast_to(out.grad, a.value.shape))

    out = _op(out_value, (a,), backward)
    return out


def concat_cols(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_value = np.hstack([a.value, b.value])
    split = a.value.shape[1]

    def backward():
        a._accumulate(out.grad[:, :split])
        b._accumulate(out.grad[:, split:])

    out = _op(out_value, (a, b), backward)
    return out


def concat_vec(parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out_value = np.concatenate([p.value for p in parts])
    offsets = np.cumsum([0] + [p.value.size for p in parts])

    def backward():
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p._accumulate(out.grad[lo:hi])

    out = _op(out_value, tuple(parts), backward)
    return out


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out_value = a.value.reshape(shape)

    def backward():
        a._accumulate(out.grad.reshape(a.value.shape))

    out = _op(out_value, (a,), backward)
    return out


def gather_rows(a, idx) -> Tensor:
    """Rows a[idx]; indices may repeat."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out_value = a.value[idx]

    def backward():
        g = np.zeros_like(a.value)
        np.add.at(g, idx, out.grad)
        a._accumulate(g)

    out = _op(out_value, (a,), backward)
    return out


def scatter_rows(a, idx, n_rows: int) -> Tensor:
    """Sum rows of a into an (n_rows, d) matrix at positions idx."""
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out_value = np.zeros((n_rows,) + a.value.shape[1:], dtype=np.float64)
    np.add.at(out_value, idx, a.value)

    def backward():
        a._accumulate(out.grad[idx])

    out = _op(out_value, (a,), backward)
    return out


# --- losses and sampling ----------------------------------------------------

BCE_EPS = 1e-7


def bce_loss(p, labels) -> Tensor:
    """Mean binary cross entropy; probabilities clamped to [eps, 1-eps]."""
    p = _as_tensor(p)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != p.shape:
        raise ValueError(f"bce shape mismatch {p.shape} vs {y.shape}")
    pc = np.clip(p.value, BCE_EPS, 1.0 - BCE_EPS)
    out_value = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean()
    inside = (p.value > BCE_EPS) & (p.value < 1.0 - BCE_EPS)

    def backward():
        g = np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0)
        p._accumulate(float(out.grad) * g / max(1, p.value.size))

    out = _op(out_value, (p,), backward)
    return out


def nll_loss(probs, targets) -> Tensor:
    """Summed negative log-likelihood of integer targets under (n,K) probabilities."""
    probs = _as_tensor(probs)
    t = np.asarray(targets, dtype=np.int64)
    rows = np.arange(len(t))
    picked = probs.value[rows, t]
    floored = np.maximum(picked, 1e-12)
    out_value = -np.log(floored).sum()

    def backward():
        g = np.zeros_like(probs.value)
        g[rows, t] = np.where(picked > 1e-12, -1.0 / floored, 0.0)
        probs._accumulate(float(out.grad) * g)

    out = _op(out_value, (probs,), backward)
    return out


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u))


def gumbel_softmax(logits, temperature: float, rng=None, hard=False, noise=None) -> Tensor:
    """Gumbel-softmax sample; hard mode is straight-through (one-hot forward,
    soft gradient backward). Pass `noise` to fix the perturbation."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    logits = _as_tensor(logits)
    if noise is None:
        noise = gumbel_noise(rng, logits.shape)
    soft = softmax(scale(add(logits, Tensor(noise)), 1.0 / temperature))
    if not hard:
        return soft
    onehot = np.zeros_like(soft.value)
    if soft.value.ndim == 1:
        onehot[soft.value.argmax()] = 1.0
    else:
        onehot[np.arange(soft.value.shape[0]), soft.value.argmax(axis=-1)] = 1.0
    return add(soft, Tensor(onehot - soft.value))


# --- layers -----------------------------------------------------------------


def dense(W, b, x) -> Tensor:
    """x (n,din) @ W (din,dout) + b (dout,)."""
    return add_rowvec(matmul(x, W), b)


def directed_with_self_loops(n: int, edges) -> tuple[np.ndarray, np.ndarray]:
    """Both directions of each undirected edge plus one self loop per node."""
    src = [u for u, v in edges] + [v for u, v in edges] + list(range(n))
    dst = [v for u, v in edges] + [u for u, v in edges] + list(range(n))
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def _segment_softmax(scores: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    # scores (E,1); softmax within each segment. The per-segment max is
    # detached: softmax is shift invariant, so the gradient stays exact.
    smax = np.full(n_segments, -np.inf)
    np.maximum.at(smax, seg, scores.value[:, 0])
    e = exp(add(scores, Tensor(-smax[seg][:, None])))
    denom = scatter_rows(e, seg, n_segments)
    return div(e, gather_rows(denom, seg))


def gat_layer(h: Tensor, src: np.ndarray, dst: np.ndarray, n: int, params) -> Tensor:
    """Graph-attention message passing over directed edges (src -> dst).

    Pair score is a^T leaky_relu(W [h_dst || h_src]); scores are normalized
    over each target's incoming edges (callers include self loops), and the
    output is the attention-weighted sum of value-transformed sources.
    """
    h_src = gather_rows(h, src)
    h_dst = gather_rows(h, dst)
    pre = matmul(concat_cols(h_dst, h_src), params.W)
    scores = matmul(leaky_relu(pre, params.slope), params.a)  # (E,1)
    alpha = _segment_softmax(scores, dst, n)
    msgs = mul_colvec(matmul(h_src, params.V), alpha)
    return scatter_rows(msgs, dst, n)


class GATParams:
    """Weights of one graph-attention layer."""

    def __init__(self, rng, d_in: int, d_out: int, slope: float = 0.2):
        self.W = Tensor(glorot(rng, (2 * d_in, d_out)), requires_grad=True)
        self.a = Tensor(glorot(rng, (d_out, 1)), requires_grad=True)
        self.V = Tensor(glorot(rng, (d_in, d_out)), requires_grad=True)
        self.slope = slope

    def tensors(self) -> list[Tensor]:
        return [self.W, self.a, self.V]


class HGTParams:
    """Weights of one typed-attention layer: per-type maps plus shared edge transforms."""

    def __init__(self, rng, dims_in, d_hidden: int, d_out: int):
        self.query = [Tensor(glorot(rng, (d, d_hidden)), requires_grad=True) for d in dims_in]
        self.key = [Tensor(glorot(rng, (d, d_hidden)), requires_grad=True) for d in dims_in]
        self.message = [Tensor(glorot(rng, (d, d_hidden)), requires_grad=True) for d in dims_in]
        self.w_att = Tensor(glorot(rng, (d_hidden, d_hidden)), requires_grad=True)
        self.w_msg = Tensor(glorot(rng, (d_hidden, d_hidden)), requires_grad=True)
        self.out = [Tensor(glorot(rng, (d_hidden, d_out)), requires_grad=True) for _ in dims_in]
        self.d_hidden = d_hidden

    def tensors(self) -> list[Tensor]:
        return [*self.query, *self.key, *self.message, self.w_att, self.w_msg, *self.out]


def hgt_layer(
    feats_by_type: dict[int, Tensor],
    ids_by_type: dict[int, np.ndarray],
    src: np.ndarray,
    dst: np.ndarray,
    n: int,
    params: HGTParams,
) -> Tensor:
    """Typed scaled-dot-product attention with a single shared edge transform.

    Per-type query/key/message maps bring differently sized inputs to one
    hidden width; attention runs over directed edges (self loops included by
    the caller) and per-type output maps produce the uniform-width result.
    """
    H = params.d_hidden
    q_parts, k_parts, m_parts = [], [], []
    present = sorted(feats_by_type)
    for k in present:
        ids = ids_by_type[k]
        q_parts.append(scatter_rows(matmul(feats_by_type[k], params.query[k]), ids, n))
        k_parts.append(scatter_rows(matmul(feats_by_type[k], params.key[k]), ids, n))
        m_parts.append(scatter_rows(matmul(feats_by_type[k], params.message[k]), ids, n))
    q = q_parts[0]
    kk = k_parts[0]
    mm = m_parts[0]
    for part in q_parts[1:]:
        q = add(q, part)
    for part in k_parts[1:]:
        kk = add(kk, part)
    for part in m_parts[1:]:
        mm = add(mm, part)

    scores = scale(rowdot(gather_rows(q, dst), matmul(gather_rows(kk, src), params.w_att)), 1.0 / np.sqrt(H))
    alpha = _segment_softmax(scores, dst, n)
    msgs = mul_colvec(matmul(gather_rows(mm, src), params.w_msg), alpha)
    agg = scatter_rows(msgs, dst, n)

    out_parts = []
    for k in present:
        ids = ids_by_type[k]
        out_parts.append(scatter_rows(matmul(gather_rows(agg, ids), params.out[k]), ids, n))
    out = out_parts[0]
    for part in out_parts[1:]:
        out = add(out, part)
    return out


# --- initialization, optimizers, gradient checking --------------------------


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in = shape[0] if len(shape) > 1 else shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


class SGD:
    def __init__(self, params: list[Tensor], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self._vel = [np.zeros_like(p.value) for p in params]

    def step(self):
        for p, v in zip(self.params, self._vel):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.value = p.value - self.lr * v

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = [np.zeros_like(p.value) for p in params]
        self._v = [np.zeros_like(p.value) for p in params]
        self._t = 0

    def step(self):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            mhat = m / (1 - b1**self._t)
            vhat = v / (1 - b2**self._t)
            p.value = p.value - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def make_optimizer(name: str, params: list[Tensor], lr: float) -> SGD | Adam:
    if name == "sgd":
        return SGD(params, lr=lr)
    if name == "adam":
        return Adam(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")


def grad_check(f, params: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `f` must be a deterministic closure over `params` returning a scalar
    Tensor. Relative error is |a-b| / max(1e-8, |a|+|b|) componentwise.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if not np.isfinite(out.value):
        raise NumericalError("grad_check: forward pass returned non-finite value")
    out.backward()
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().value)
            flat[i] = orig - h
            fm = float(f().value)
            flat[i] = orig
            fd = (fp - fm) / (2.0 * h)
            err = abs(gflat[i] - fd) / max(1e-8, abs(gflat[i]) + abs(fd))
            worst = max(worst, err)
    return worst
