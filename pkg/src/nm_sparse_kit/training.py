"""Sparse training loop with per-direction masks and gap instrumentation.

The loop keeps a dense weight matrix per layer and refreshes its masks from
the current magnitudes every iteration: the forward mask constrains row
blocks, and (for the bi-mask strategy) a separately generated backward mask
constrains column blocks of the row-permuted weights. Weight gradients flow
dense through the straight-through estimator; only the propagated input
gradient is approximated by the backward mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .masks import (
    BinarizationCriterion,
    Mask,
    TransposableMethod,
    backward_mask,
    forward_mask,
    transposable_mask,
)
from .permute import count_eligible_blocks, identity_permutation, search_permutation
from .tensorops import NmPattern, matrix


class Strategy(Enum):
    """Masking strategy of a layer: dense is the unmasked baseline path."""

    DENSE = "dense"
    VANILLA = "vanilla"
    TRANSPOSABLE = "transposable"
    BI_MASK = "bimask"


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, iteration: int):
        super().__init__(f"training diverged: non-finite loss at iteration {iteration}")
        self.iteration = iteration


class StaleMaskError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Schedule constants; defaults follow the reference training recipe."""

    epochs: int
    batch_size: int = 256
    delta_t: int = 100
    k: int = 100
    warmup_epochs: int = 5
    peak_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.delta_t < 1:
            raise ValueError(f"delta_t must be >= 1, got {self.delta_t}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.warmup_epochs < 0:
            raise ValueError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        if self.peak_lr <= 0:
            raise ValueError(f"peak_lr must be positive, got {self.peak_lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass
class StepMetrics:
    iteration: int
    loss: float
    grad_gap_l2: float
    eligible_block_ratio: float
    mask_flip_count: int


@dataclass
class RefreshStats:
    """Partial step metrics produced by one mask refresh."""

    mask_flip_count: int
    eligible_blocks: int
    total_blocks: int
    searched: bool = False
    search_seconds: float = 0.0

    @property
    def eligible_block_ratio(self) -> float:
        # strategies with an exact backward path report no blocks and lose nothing
        return self.eligible_blocks / self.total_blocks if self.total_blocks else 1.0


@dataclass
class TrainingTrace:
    """Per-iteration metrics plus aggregate permutation-search accounting."""

    steps: list[StepMetrics] = field(default_factory=list)
    search_seconds_total: float = 0.0
    searches: int = 0

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)


class SparseLinearLayer:
    """A bias-free linear layer (out x in weights) with strategy-owned masks.

    For the bi-mask strategy the layer also carries the current row
    permutation and the backward mask generated from it; the backward mask is
    indexed in the permuted row order.
    """

    def __init__(
        self,
        w,
        pattern: NmPattern,
        strategy: Strategy,
        transposable_method: TransposableMethod = TransposableMethod.TWO_APPROX,
        salt: int = 0,
    ):
        self.w = matrix(w)
        rows, cols = self.w.shape
        m = pattern.m
        if strategy in (Strategy.VANILLA, Strategy.BI_MASK, Strategy.TRANSPOSABLE) and cols % m:
            raise ValueError(f"{strategy.value} layer needs cols divisible by {m}, got {cols}")
        if strategy in (Strategy.BI_MASK, Strategy.TRANSPOSABLE) and rows % m:
            raise ValueError(f"{strategy.value} layer needs rows divisible by {m}, got {rows}")
        self.pattern = pattern
        self.strategy = strategy
        self.transposable_method = transposable_method
        self.salt = salt
        self.perm = identity_permutation(rows)
        self.prev_weight_grad: np.ndarray | None = None
        self.fwd_mask: Mask | None = None
        self.bwd_mask: Mask | None = None
        self._bwd_perm: np.ndarray | None = None
        if strategy is Strategy.VANILLA:
            self.fwd_mask = forward_mask(self.w, pattern)
        elif strategy is Strategy.TRANSPOSABLE:
            self.fwd_mask = transposable_mask(self.w, pattern, transposable_method)
        elif strategy is Strategy.BI_MASK:
            self.fwd_mask = forward_mask(self.w, pattern)
            self.bwd_mask = backward_mask(self.w, self.fwd_mask, self.perm, pattern)
            self._bwd_perm = self.perm.copy()

    @property
    def shape(self):
        return self.w.shape

    def masked_weights(self) -> np.ndarray:
        """The effective forward weights W (x) B (plain W on the dense path)."""
        if self.strategy is Strategy.DENSE:
            return self.w
        return self.fwd_mask.apply(self.w)


def sparse_forward(x: np.ndarray, layer: SparseLinearLayer) -> np.ndarray:
    """Forward product (B (x) W) @ x; x holds one column per sample."""
    if layer.w.shape[1] != x.shape[0]:
        raise ValueError(f"layer takes {layer.w.shape[1]}-dim inputs, got {x.shape[0]}")
    return layer.masked_weights() @ x


def backward_exact(g_y: np.ndarray, layer: SparseLinearLayer) -> np.ndarray:
    """Ideal input gradient (B (x) W)^T @ g_y; reference for gap measurement."""
    if layer.w.shape[0] != g_y.shape[0]:
        raise ValueError(f"layer emits {layer.w.shape[0]}-dim outputs, got gradient {g_y.shape[0]}")
    return layer.masked_weights().T @ g_y


def backward_bimask(g_y: np.ndarray, layer: SparseLinearLayer) -> np.ndarray:
    """Bi-mask input gradient via the permuted backward mask.

    Permuting the weight rows and the output-gradient entries by the same
    permutation leaves the product identical to the unpermuted form, so the
    only approximation is the backward mask itself.
    """
    if layer.strategy is not Strategy.BI_MASK:
        raise ValueError(f"backward_bimask needs a bimask layer, got {layer.strategy.value}")
    if layer.w.shape[0] != g_y.shape[0]:
        raise ValueError(f"layer emits {layer.w.shape[0]}-dim outputs, got gradient {g_y.shape[0]}")
    if layer._bwd_perm is None or not np.array_equal(layer.perm, layer._bwd_perm):
        raise StaleMaskError("backward mask is stale: permutation changed without a mask refresh")
    return (layer.bwd_mask.bits * layer.w[layer.perm]).T @ g_y[layer.perm]


def weight_gradient(g_y: np.ndarray, x: np.ndarray, layer: SparseLinearLayer) -> np.ndarray:
    """Dense straight-through weight gradient g_y @ x^T.

    The mask shapes the forward value, not the weight-gradient support, so
    masked-out weights keep receiving updates and can win back a slot.
    """
    if g_y.shape[0] != layer.w.shape[0] or x.shape[0] != layer.w.shape[1]:
        raise ValueError(
            f"gradient/input shapes {g_y.shape}/{x.shape} do not fit layer {layer.w.shape}"
        )
    if g_y.shape[1] != x.shape[1]:
        raise ValueError(f"batch mismatch: gradient has {g_y.shape[1]} columns, input {x.shape[1]}")
    return g_y @ x.T


_SAMPLING = (BinarizationCriterion.MULTINOMIAL_SAMPLING, BinarizationCriterion.RANDOM)


def refresh_masks(
    layer: SparseLinearLayer,
    iteration: int,
    config: TrainConfig,
    criterion: BinarizationCriterion = BinarizationCriterion.WEIGHT_MAGNITUDE,
) -> RefreshStats:
    """Recompute the layer's masks for one (1-based) training iteration.

    The forward (or transposable) mask is rebuilt every call. On the bi-mask
    strategy the row permutation is re-searched only when
    ``iteration % delta_t == 0``, while the backward mask is rebuilt every
    call from the incumbent permutation. Deterministic given
    (config.seed, iteration, layer.salt).
    """
    old_fwd = None if layer.fwd_mask is None else layer.fwd_mask.bits.copy()
    old_bwd = None if layer.bwd_mask is None else layer.bwd_mask.bits.copy()
    seeds = np.random.SeedSequence([config.seed, iteration, layer.salt]).generate_state(2)

    if layer.strategy in (Strategy.VANILLA, Strategy.BI_MASK):
        layer.fwd_mask = forward_mask(layer.w, layer.pattern)
    elif layer.strategy is Strategy.TRANSPOSABLE:
        layer.fwd_mask = transposable_mask(layer.w, layer.pattern, layer.transposable_method)

    stats = RefreshStats(mask_flip_count=0, eligible_blocks=0, total_blocks=0)
    if layer.strategy is Strategy.BI_MASK:
        masked = layer.fwd_mask.apply(layer.w)
        if iteration % config.delta_t == 0:
            report = search_permutation(
                masked, layer.pattern, config.k, current=layer.perm, seed=int(seeds[0])
            )
            layer.perm = report.chosen
            stats.searched = True
            stats.search_seconds = report.elapsed
        effective = criterion
        grad = None
        if criterion is BinarizationCriterion.GRADIENT_MAGNITUDE:
            if layer.prev_weight_grad is None:
                effective = BinarizationCriterion.WEIGHT_MAGNITUDE
            else:
                grad = layer.prev_weight_grad
        layer.bwd_mask = backward_mask(
            layer.w,
            layer.fwd_mask,
            layer.perm,
            layer.pattern,
            effective,
            gradient=grad,
            seed=int(seeds[1]) if effective in _SAMPLING else None,
        )
        layer._bwd_perm = layer.perm.copy()
        stats.eligible_blocks, stats.total_blocks = count_eligible_blocks(
            masked[layer.perm], layer.pattern
        )

    if old_fwd is not None:
        stats.mask_flip_count += int(np.sum(layer.fwd_mask.bits != old_fwd))
    if old_bwd is not None:
        stats.mask_flip_count += int(np.sum(layer.bwd_mask.bits != old_bwd))
    return stats


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    ``logits`` is (classes, batch); ``labels`` holds class indices.
    """
    shifted = logits - logits.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=0, keepdims=True)
    batch = logits.shape[1]
    loss = float(-np.mean(np.log(probs[labels, np.arange(batch)] + 1e-300)))
    grad = probs.copy()
    grad[labels, np.arange(batch)] -= 1.0
    return loss, grad / batch


def lr_at(iteration: int, total_iterations: int, warmup_iterations: int, peak_lr: float) -> float:
    """Linear warmup from zero to peak, then cosine annealing to zero."""
    if warmup_iterations > 0 and iteration <= warmup_iterations:
        return peak_lr * iteration / warmup_iterations
    span = total_iterations - warmup_iterations
    if span <= 0:
        return peak_lr
    progress = (iteration - warmup_iterations) / span
    return 0.5 * peak_lr * (1.0 + math.cos(math.pi * progress))


def init_layers(
    dims,
    pattern: NmPattern,
    strategy: Strategy,
    seed: int,
    transposable_method: TransposableMethod = TransposableMethod.TWO_APPROX,
) -> list[SparseLinearLayer]:
    """He-initialized layer chain for the dim sequence [in, hidden..., out]."""
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1417]))
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = rng.normal(size=(fan_out, fan_in)) * math.sqrt(2.0 / fan_in)
        layers.append(SparseLinearLayer(w, pattern, strategy, transposable_method, salt=i))
    return layers


def forward_pass(layers, x: np.ndarray) -> np.ndarray:
    """Masked forward through the chain, rectifier between layers."""
    h = x
    for i, layer in enumerate(layers):
        z = sparse_forward(h, layer)
        h = relu(z) if i < len(layers) - 1 else z
    return h


def evaluate_accuracy(layers, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of (n, dim) samples classified correctly by the masked model."""
    logits = forward_pass(layers, features.T)
    return float(np.mean(np.argmax(logits, axis=0) == labels))


def train(
    layers,
    data,
    config: TrainConfig,
    criterion: BinarizationCriterion = BinarizationCriterion.WEIGHT_MAGNITUDE,
) -> tuple[list, TrainingTrace]:
    """Run the masked training loop and return the model and its trace.

    Each iteration refreshes masks (forward every time, permutation every
    delta_t on the bi-mask path), runs the sparse forward, propagates the
    strategy's backward gradient, and applies an SGD-with-momentum update to
    the dense weights. Fully deterministic given config.seed; a non-finite
    loss aborts with the iteration index.
    """
    layers = list(layers)
    features = np.ascontiguousarray(data.x_train.T)
    labels = data.y_train
    n = labels.shape[0]
    if config.batch_size > n:
        raise ValueError(f"batch_size {config.batch_size} exceeds training set size {n}")
    batches_per_epoch = n // config.batch_size
    total_iterations = config.epochs * batches_per_epoch
    warmup_iterations = config.warmup_epochs * batches_per_epoch

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xDA7A]))
    velocities = [np.zeros_like(layer.w) for layer in layers]
    trace = TrainingTrace()

    t = 0
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for b in range(batches_per_epoch):
            t += 1
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            x0 = features[:, idx]
            y = labels[idx]

            flips = 0
            eligible = total = 0
            for layer in layers:
                stats = refresh_masks(layer, t, config, criterion)
                flips += stats.mask_flip_count
                eligible += stats.eligible_blocks
                total += stats.total_blocks
                if stats.searched:
                    trace.searches += 1
                    trace.search_seconds_total += stats.search_seconds

            # overflow here is the divergence guard's job, not a warning's
            with np.errstate(over="ignore", invalid="ignore"):
                inputs = [x0]
                zs = []
                h = x0
                for i, layer in enumerate(layers):
                    z = sparse_forward(h, layer)
                    zs.append(z)
                    h = relu(z) if i < len(layers) - 1 else z
                    if i < len(layers) - 1:
                        inputs.append(h)

                loss, g = softmax_cross_entropy(h, y)
            if not math.isfinite(loss):
                raise DivergenceError(t)

            gap_num = 0.0
            gap_den = 0.0
            grads = []
            with np.errstate(over="ignore", invalid="ignore"):
                for i in reversed(range(len(layers))):
                    layer = layers[i]
                    g_w = weight_gradient(g, inputs[i], layer)
                    grads.append(g_w)
                    if layer.strategy is Strategy.BI_MASK:
                        g_x = backward_bimask(g, layer)
                        g_ideal = backward_exact(g, layer)
                        gap_num += float(((g_x - g_ideal) ** 2).sum())
                        gap_den += float((g_ideal**2).sum())
                    else:
                        g_x = backward_exact(g, layer)
                    if i > 0:
                        g = g_x * (zs[i - 1] > 0)
                grads.reverse()

                lr = lr_at(t, total_iterations, warmup_iterations, config.peak_lr)
                for layer, v, g_w in zip(layers, velocities, grads):
                    layer.prev_weight_grad = g_w
                    step = g_w + config.weight_decay * layer.w
                    v *= config.momentum
                    v += step
                    layer.w = layer.w - lr * v

            gap = math.sqrt(gap_num) / math.sqrt(gap_den) if gap_den > 0 else 0.0
            trace.steps.append(
                StepMetrics(
                    iteration=t,
                    loss=loss,
                    grad_gap_l2=gap,
                    eligible_block_ratio=eligible / total if total else 1.0,
                    mask_flip_count=flips,
                )
            )
    return layers, trace
