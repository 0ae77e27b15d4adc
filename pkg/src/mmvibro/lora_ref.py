"""Desk-scale low-rank adaptation reference, numerically verified.

A frozen weight W gets a trainable rank-r update (alpha/r) * W_B @ W_A
injected in parallel; attention blocks adapt the query and value
projections only. Everything is float64 numpy so finite-difference
checks hold at tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, ShapeMismatch

INIT_STD = 0.02


@dataclass(eq=False)
class LoraLinear:
    """Frozen W plus trainable factors W_A (r x d_in), W_B (d_out x r)."""

    W: np.ndarray
    W_A: np.ndarray
    W_B: np.ndarray
    alpha: float
    r: int

    def __post_init__(self):
        d_out, d_in = self.W.shape
        if self.r < 1 or self.r > min(d_in, d_out):
            raise ShapeMismatch(f"rank {self.r} not in [1, {min(d_in, d_out)}]")
        if self.W_A.shape != (self.r, d_in):
            raise ShapeMismatch(f"W_A shape {self.W_A.shape} != ({self.r}, {d_in})")
        if self.W_B.shape != (d_out, self.r):
            raise ShapeMismatch(f"W_B shape {self.W_B.shape} != ({d_out}, {self.r})")

    @property
    def scaling(self) -> float:
        return self.alpha / self.r

    @classmethod
    def init(cls, W: np.ndarray, r: int, alpha: float,
             rng: np.random.Generator) -> "LoraLinear":
        """Standard init: W_A small Gaussian, W_B zero, so the adapter
        contributes exactly nothing until trained."""
        W = np.asarray(W, dtype=np.float64)
        d_out, d_in = W.shape
        return cls(W=W, W_A=rng.normal(0.0, INIT_STD, (r, d_in)),
                   W_B=np.zeros((d_out, r)), alpha=alpha, r=r)

    def merged_weight(self) -> np.ndarray:
        return self.W + self.scaling * self.W_B @ self.W_A


def lora_forward(layer: LoraLinear, x: np.ndarray) -> np.ndarray:
    """y = W x + (alpha/r) W_B (W_A x); x is [d_in] or [d_in, batch]."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != layer.W.shape[1]:
        raise ShapeMismatch(
            f"input dim {x.shape[0]} != d_in {layer.W.shape[1]}"
        )
    return layer.W @ x + layer.scaling * (layer.W_B @ (layer.W_A @ x))


@dataclass(frozen=True)
class LoraAttentionConfig:
    """Attention dimensions and adaptation targets. Rank 32 with
    alpha 64 gives the production-scale alpha/r = 2 multiplier."""

    d_model: int
    n_heads: int
    r: int = 32
    alpha: float = 64.0
    targets: tuple = ("q", "v")

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeMismatch(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if not self.targets:
            raise ShapeMismatch("targets must be non-empty")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def attention_forward(config: LoraAttentionConfig,
                      q_layer: LoraLinear,
                      k_weight: np.ndarray,
                      v_layer: LoraLinear,
                      x_q: np.ndarray,
                      x_kv: np.ndarray) -> np.ndarray:
    """Multi-head scaled dot-product attention with adapted Q and V.

    x_q is [d_model, L_q], x_kv is [d_model, L_kv]; self-attention
    passes the same tensor for both, cross-attention the encoder state
    for x_kv. The key projection is a plain frozen matrix.
    """
    k_weight = np.asarray(k_weight, dtype=np.float64)
    if k_weight.shape != (config.d_model, config.d_model):
        raise ShapeMismatch(f"W_K shape {k_weight.shape}")
    if x_q.shape[0] != config.d_model or x_kv.shape[0] != config.d_model:
        raise ShapeMismatch("inputs must have d_model rows")
    q = lora_forward(q_layer, x_q) if "q" in config.targets else q_layer.W @ x_q
    v = lora_forward(v_layer, x_kv) if "v" in config.targets else v_layer.W @ x_kv
    k = k_weight @ x_kv

    d_h, h = config.d_head, config.n_heads
    l_q, l_kv = x_q.shape[1], x_kv.shape[1]
    out = np.empty((config.d_model, l_q))
    for i in range(h):
        sl = slice(i * d_h, (i + 1) * d_h)
        logits = q[sl].T @ k[sl] / np.sqrt(d_h)  # [L_q, L_kv]
        weights = _softmax(logits)
        out[sl] = (weights @ v[sl].T).T
    return out


@dataclass(frozen=True)
class ModelInventory:
    """Every base tensor shape plus every adapted projection."""

    base_shapes: tuple            # ((d0, d1, ...), ...)
    adapted: tuple                # ((d_in, d_out, r), ...)

    @property
    def base_params(self) -> int:
        return int(sum(int(np.prod(s)) for s in self.base_shapes))

    @property
    def lora_params(self) -> int:
        return int(sum(r * (d_in + d_out) for d_in, d_out, r in self.adapted))


def trainable_fraction(inventory: ModelInventory) -> float:
    """LoRA parameters over base parameters; each adapted projection
    contributes r * (d_in + d_out)."""
    if inventory.base_params == 0:
        return 0.0
    return inventory.lora_params / inventory.base_params


def whisper_large_inventory(r: int = 32) -> ModelInventory:
    """Inventory shaped like a 1.5e9-parameter encoder-decoder ASR model:
    d_model 1280, 32 encoder layers (self-attention), 32 decoder layers
    (self + cross), Q and V adapted in every attention block."""
    d = 1280
    total_base = 1_543_000_000  # nominal large-v2 parameter count
    shapes = []
    blocks = 32 + 32 + 32  # encoder self, decoder self, decoder cross
    for _ in range(blocks):
        shapes.extend([(d, d)] * 4)  # q, k, v, out projections
    attn_params = sum(int(np.prod(s)) for s in shapes)
    shapes.append((total_base - attn_params,))  # mlps, embeddings, norms
    adapted = tuple((d, d, r) for _ in range(blocks) for _t in ("q", "v"))
    return ModelInventory(base_shapes=tuple(tuple(s) for s in shapes),
                          adapted=adapted)


# --- training-path verification ---

def _loss_and_grads(layer: LoraLinear, x: np.ndarray, target: np.ndarray):
    """Squared error ||y - target||^2 and gradients w.r.t. W_A, W_B."""
    ax = layer.W_A @ x
    y = layer.W @ x + layer.scaling * (layer.W_B @ ax)
    err = y - target
    loss = float(np.sum(err ** 2))
    g_b = 2.0 * layer.scaling * err @ ax.T
    g_a = 2.0 * layer.scaling * layer.W_B.T @ err @ x.T
    return loss, g_a, g_b


def grad_check(layer: LoraLinear, x: np.ndarray, target: np.ndarray,
               epsilon: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference
    gradients over every W_A and W_B entry. W is frozen and excluded."""
    if not (1e-6 <= epsilon <= 1e-3):
        raise ValueError(f"epsilon {epsilon} outside [1e-6, 1e-3]")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != layer.W.shape[1]:
        x = x.T
    target = np.asarray(target, dtype=np.float64).reshape(
        layer.W.shape[0], -1)
    _, g_a, g_b = _loss_and_grads(layer, x, target)

    def fd(mat, i, j):
        orig = mat[i, j]
        mat[i, j] = orig + epsilon
        lp, *_ = _loss_and_grads(layer, x, target)
        mat[i, j] = orig - epsilon
        lm, *_ = _loss_and_grads(layer, x, target)
        mat[i, j] = orig
        return (lp - lm) / (2.0 * epsilon)

    worst = 0.0
    for mat, grad in ((layer.W_A, g_a), (layer.W_B, g_b)):
        for i in range(mat.shape[0]):
            for j in range(mat.shape[1]):
                num = fd(mat, i, j)
                ana = grad[i, j]
                rel = abs(ana - num) / (abs(ana) + abs(num) + 1e-12)
                worst = max(worst, rel)
    return worst


def trainable_parameters(layer: LoraLinear) -> tuple[str, ...]:
    """Names of the tensors training may touch. W is never in here."""
    return ("W_A", "W_B")


@dataclass(eq=False)
class ToyFitResult:
    losses: np.ndarray
    layer: LoraLinear


def make_toy_dataset(d: int, true_rank: int, n_samples: int,
                     rng: np.random.Generator,
                     base_W: np.ndarray | None = None):
    """Random (x, y) pairs from a hidden low-rank perturbation of W."""
    W = base_W if base_W is not None else rng.normal(0.0, 1.0, (d, d))
    delta = (rng.normal(0.0, 1.0, (d, true_rank)) @
             rng.normal(0.0, 1.0, (true_rank, d))) / np.sqrt(d)
    x = rng.normal(0.0, 1.0, (d, n_samples))
    y = (W + delta) @ x
    return W, x, y


def fit_toy(d: int = 16, r: int = 4, steps: int = 2000, lr: float = 1e-2,
            n_samples: int = 256, true_rank: int | None = None,
            alpha: float | None = None, seed: int = 0) -> ToyFitResult:
    """Plain gradient descent on the factors; the base weight is frozen.

    Loss is mean squared error over the dataset. Defaults converge to
    well under 1% of the initial loss.
    """
    rng = np.random.default_rng(seed)
    if true_rank is None:
        true_rank = r
    if alpha is None:
        alpha = 2.0 * r  # keep the production alpha/r = 2 multiplier
    W, x, y = make_toy_dataset(d, true_rank, n_samples, rng)
    layer = LoraLinear.init(W, r, alpha, rng)
    scale = 1.0 / (y.size)
    losses = np.empty(steps + 1)
    for step in range(steps + 1):
        loss, g_a, g_b = _loss_and_grads(layer, x, y)
        loss *= scale
        losses[step] = loss
        if not np.isfinite(loss):
            raise Diverged(f"loss became {loss} at step {step}")
        if step == steps:
            break
        layer.W_A -= lr * scale * g_a
        layer.W_B -= lr * scale * g_b
    return ToyFitResult(losses=losses, layer=layer)
