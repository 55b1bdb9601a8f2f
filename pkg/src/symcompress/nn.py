"""Weighted two-layer perceptron and its training dynamics.

The net computes f(x) = sum_j c_j * v_j * act(w_j . x + b_j) with no output
bias; c_j is a nonnegative neuron multiplicity that is never trained.  A
neuron's parameter bundle (w_j, b_j, v_j) is one compressible object, so a
width-d net is a weighted set of d points in R^{in+1+out}.

Training supports plain SGD, SGD with momentum, and AdamW (decoupled decay,
torch-default hyperparameters), always with a cosine learning-rate schedule
annealed to zero.  With `grad_rescale` on, the gradient of every parameter of
neuron j is the raw gradient divided by c_j; this is computed directly (c_j
never enters and is never divided out), and c_j = 0 neurons are frozen.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .moments import WeightedSet
from .validation import as_float_array

__all__ = [
    "TwoLayerNet",
    "TrainConfig",
    "OptState",
    "init_net",
    "forward",
    "fold",
    "neuron_objects",
    "from_neuron_objects",
    "compress_width",
    "loss_and_grads",
    "train",
    "mse_eval",
    "finite_diff_grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

_ACTIVATIONS = ("relu", "sigmoid")


@dataclass
class TwoLayerNet:
    W1: np.ndarray  # (width, in_dim), row j = w_j
    b1: np.ndarray  # (width,)
    W2: np.ndarray  # (out_dim, width), column j = v_j
    c: np.ndarray  # (width,) nonnegative multiplicities
    activation: str = "relu"

    def __post_init__(self):
        self.W1 = as_float_array(self.W1, "W1")
        self.b1 = as_float_array(self.b1, "b1")
        self.W2 = as_float_array(self.W2, "W2")
        self.c = as_float_array(self.c, "c")
        if self.W1.ndim != 2 or self.b1.ndim != 1 or self.W2.ndim != 2 or self.c.ndim != 1:
            raise ValueError("bad parameter ranks")
        width = self.W1.shape[0]
        if self.b1.shape[0] != width or self.W2.shape[1] != width or self.c.shape[0] != width:
            raise ValueError("inconsistent widths across W1/b1/W2/c")
        if np.any(self.c < 0.0):
            raise ValueError("multiplicities c must be nonnegative")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def width(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    def copy(self) -> "TwoLayerNet":
        return TwoLayerNet(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.c.copy(), self.activation
        )


def init_net(
    in_dim: int, width: int, out_dim: int, activation: str = "relu", seed: int = 0
) -> TwoLayerNet:
    """Uniformly weighted net with U(-1/sqrt(fan_in), +1/sqrt(fan_in)) init."""
    rng = np.random.default_rng(seed)
    s1 = 1.0 / math.sqrt(in_dim)
    s2 = 1.0 / math.sqrt(width)
    W1 = rng.uniform(-s1, s1, size=(width, in_dim))
    b1 = rng.uniform(-s1, s1, size=width)
    W2 = rng.uniform(-s2, s2, size=(out_dim, width))
    return TwoLayerNet(W1, b1, W2, np.ones(width), activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _activation_grad(z: np.ndarray, h: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return h * (1.0 - h)


def forward(net: TwoLayerNet, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; x is (batch, in_dim), result (batch, out_dim)."""
    x = np.asarray(x, dtype=np.float64)
    z = x @ net.W1.T + net.b1
    h = _activate(z, net.activation)
    return (h * net.c) @ net.W2.T


def fold(net: TwoLayerNet) -> TwoLayerNet:
    """Absorb multiplicities into the outgoing weights: v_j <- c_j v_j, c_j <- 1.

    Forward-preserving and idempotent; zero-multiplicity neurons become dead.
    """
    return TwoLayerNet(
        net.W1.copy(), net.b1.copy(), net.W2 * net.c, np.ones(net.width), net.activation
    )


def neuron_objects(net: TwoLayerNet) -> WeightedSet:
    """One point per neuron: concat(w_j, b_j, v_j) in R^{in+1+out}, weight c_j."""
    points = np.hstack([net.W1, net.b1[:, None], net.W2.T])
    return WeightedSet(points, net.c.copy())


def from_neuron_objects(ws: WeightedSet, in_dim: int, out_dim: int, activation: str) -> TwoLayerNet:
    """Inverse of neuron_objects; exact round trip."""
    if ws.m != in_dim + 1 + out_dim:
        raise ValueError(f"point dimension {ws.m} != in+1+out = {in_dim + 1 + out_dim}")
    pts = ws.points
    return TwoLayerNet(
        pts[:, :in_dim].copy(),
        pts[:, in_dim].copy(),
        pts[:, in_dim + 1 :].T.copy(),
        ws.weights.copy(),
        activation,
    )


def compress_width(
    net: TwoLayerNet,
    k: int,
    target_width: int,
    tol: float = 1e-8,
    seed: int = 0,
    switch_factor: float = 4.0,
    exact_nn: bool = False,
) -> TwoLayerNet:
    """Compress the hidden width by moment matching on the neuron objects.

    A non-uniformly weighted net is folded first.  The returned net keeps
    only the supported neurons with their new multiplicities; the moments of
    the neuron objects up to order k are preserved per the compressor
    contract.  target_width >= width returns an identical copy.
    """
    from .compressor import CompressionConfig, compress

    if not np.all(net.c == 1.0):
        net = fold(net)
    if target_width >= net.width:
        return net.copy()
    cfg = CompressionConfig(
        k=k,
        target_size=target_width,
        tol=tol,
        seed=seed,
        switch_factor=switch_factor,
        exact_nn=exact_nn,
    )
    out, _ = compress(neuron_objects(net), cfg)
    keep = out.support
    return TwoLayerNet(
        net.W1[keep].copy(),
        net.b1[keep].copy(),
        net.W2[:, keep].copy(),
        out.weights[keep].copy(),
        net.activation,
    )


@dataclass
class TrainConfig:
    """Optimizer, schedule and trajectory settings.

    The learning rate follows eta_t = lr0 * (1 + cos(pi t / T)) / 2 with t
    the completed-step count and T = epochs * steps_per_epoch, so the first
    step sees the full lr0 and the schedule anneals to exactly zero at the
    end of training.  steps_per_epoch=None means ceil(n_data / batch_size).
    """

    optimizer: str = "sgd"  # sgd | sgd_momentum | adamw
    lr0: float = 1e-2
    epochs: int = 1
    batch_size: int = 32
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    momentum: float = 0.9
    grad_rescale: bool = False
    batch_seed: int = 0
    steps_per_epoch: int | None = None

    def __post_init__(self):
        if self.optimizer not in ("sgd", "sgd_momentum", "adamw"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (self.lr0 > 0.0):
            raise ValueError("lr0 must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class OptState:
    """Per-parameter accumulators; shapes mirror the parameter dict."""

    step: int = 0
    exp_avg: dict = field(default_factory=dict)  # adamw first moments
    exp_avg_sq: dict = field(default_factory=dict)  # adamw second moments
    velocity: dict = field(default_factory=dict)  # sgd momentum buffers

    @classmethod
    def for_net(cls, net: TwoLayerNet) -> "OptState":
        zeros = lambda: {
            "W1": np.zeros_like(net.W1),
            "b1": np.zeros_like(net.b1),
            "W2": np.zeros_like(net.W2),
        }
        return cls(step=0, exp_avg=zeros(), exp_avg_sq=zeros(), velocity=zeros())


def loss_and_grads(
    net: TwoLayerNet, x: np.ndarray, y: np.ndarray, grad_rescale: bool = False
) -> tuple[float, dict]:
    """MSE loss (mean over batch and output coordinates) and its gradients.

    With grad_rescale off these are the raw gradients of the weighted
    forward (each neuron-j gradient carries a factor c_j).  With it on, the
    c_j factor is dropped, which equals dividing the raw gradient by c_j for
    supported neurons; c_j = 0 neurons get exactly zero gradient (frozen).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]

    z = x @ net.W1.T + net.b1
    h = _activate(z, net.activation)
    pred = (h * net.c) @ net.W2.T
    err = pred - y
    loss = float(np.mean(err * err))

    g = (2.0 / err.size) * err  # (batch, out)
    if grad_rescale:
        d_w2 = g.T @ h
        dz = (g @ net.W2) * _activation_grad(z, h, net.activation)
        if np.any(net.c == 0.0):
            live = (net.c > 0.0).astype(np.float64)
            d_w2 = d_w2 * live
            dz = dz * live
    else:
        d_w2 = g.T @ (h * net.c)
        dz = ((g @ net.W2) * net.c) * _activation_grad(z, h, net.activation)
    d_w1 = dz.T @ x
    d_b1 = dz.sum(axis=0)
    return loss, {"W1": d_w1, "b1": d_b1, "W2": d_w2}


def _frozen_masks(net: TwoLayerNet) -> dict:
    frozen = net.c == 0.0
    return {
        "W1": frozen[:, None],
        "b1": frozen,
        "W2": frozen[None, :],
    }


def _apply_update(
    net: TwoLayerNet, grads: dict, state: OptState, lr: float, cfg: TrainConfig
) -> None:
    params = {"W1": net.W1, "b1": net.b1, "W2": net.W2}
    state.step += 1
    if cfg.optimizer == "sgd":
        for name, p in params.items():
            p -= lr * grads[name]
        return
    if cfg.optimizer == "sgd_momentum":
        for name, p in params.items():
            buf = state.velocity[name]
            buf *= cfg.momentum
            buf += grads[name]
            p -= lr * buf
        return
    # adamw, decoupled weight decay on every trained parameter
    beta1, beta2 = cfg.betas
    t = state.step
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    masks = _frozen_masks(net) if cfg.grad_rescale else None
    for name, p in params.items():
        g = grads[name]
        if masks is None:
            p *= 1.0 - lr * cfg.weight_decay
        else:
            decay = np.where(masks[name], 1.0, 1.0 - lr * cfg.weight_decay)
            p *= decay
        m = state.exp_avg[name]
        v = state.exp_avg_sq[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)


def train(net: TwoLayerNet, dataset, cfg: TrainConfig, eval_hook=None):
    """Train a copy of `net` on `dataset` (fields X, y, optional weights).

    Minibatches are drawn iid with probabilities proportional to the dataset
    weights (uniform when absent); the whole batch trajectory is determined
    by cfg.batch_seed.  Returns (trained net, per-step training-loss list).
    `eval_hook(epoch_index, net)`, if given, runs after every epoch.

    Raises RuntimeError with a diagnostic if the loss turns non-finite.
    """
    net = net.copy()
    x = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    n = x.shape[0]
    weights = getattr(dataset, "weights", None)
    if weights is None:
        weights = np.ones(n)
    prob = np.asarray(weights, dtype=np.float64)
    total = prob.sum()
    if total <= 0.0:
        raise ValueError("dataset weights sum to zero")
    prob = prob / total

    steps_per_epoch = cfg.steps_per_epoch
    if steps_per_epoch is None:
        steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch

    rng = np.random.default_rng(cfg.batch_seed)
    state = OptState.for_net(net)
    history: list[float] = []
    t = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps_per_epoch):
            idx = rng.choice(n, size=cfg.batch_size, replace=True, p=prob)
            lr = cfg.lr0 * 0.5 * (1.0 + math.cos(math.pi * t / total_steps))
            loss, grads = loss_and_grads(net, x[idx], y[idx], cfg.grad_rescale)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at step {t} (epoch {epoch}, lr {lr:.3e}); "
                    "try a smaller lr0"
                )
            _apply_update(net, grads, state, lr, cfg)
            history.append(loss)
            t += 1
        if eval_hook is not None:
            eval_hook(epoch, net)
    return net, history


def mse_eval(net: TwoLayerNet, x: np.ndarray, y: np.ndarray, chunk: int = 8192) -> float:
    """Test MSE evaluated in chunks to bound peak memory."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        err = forward(net, x[start : start + chunk]) - y[start : start + chunk]
        total += float(np.sum(err * err))
    return total / y.size


def finite_diff_grad_check(net: TwoLayerNet, x: np.ndarray, y: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative deviation between central differences and backprop.

    Deviation metric per entry: |fd - bp| / (1 + |fd| + |bp|).  eps must lie
    in [1e-7, 1e-4].  The loss is evaluated with the raw (unrescaled)
    gradients' convention, matching what training minimizes.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ValueError(f"eps must be in [1e-7, 1e-4], got {eps}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, grads = loss_and_grads(net, x, y, grad_rescale=False)

    def loss_of(candidate: TwoLayerNet) -> float:
        err = forward(candidate, x) - (y if y.ndim == 2 else y[:, None])
        return float(np.mean(err * err))

    worst = 0.0
    work = net.copy()
    for name in ("W1", "b1", "W2"):
        param = getattr(work, name)
        flat = param.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss_of(work)
            flat[i] = orig - eps
            minus = loss_of(work)
            flat[i] = orig
            fd = (plus - minus) / (2.0 * eps)
            dev = abs(fd - g_flat[i]) / (1.0 + abs(fd) + abs(g_flat[i]))
            worst = max(worst, dev)
    return worst


def save_checkpoint(net: TwoLayerNet, stem) -> None:
    """Write `<stem>.json` (header) and `<stem>.bin` (little-endian float64).

    The binary file is W1, b1, W2, c concatenated flat in row-major order.
    """
    header = {
        "in_dim": net.in_dim,
        "width": net.width,
        "out_dim": net.out_dim,
        "activation": net.activation,
    }
    with open(f"{stem}.json", "w", encoding="ascii") as fh:
        json.dump(header, fh)
        fh.write("\n")
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for arr in (net.W1, net.b1, net.W2, net.c)
    )
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(blob)


def load_checkpoint(stem) -> TwoLayerNet:
    with open(f"{stem}.json", "r", encoding="ascii") as fh:
        header = json.load(fh)
    in_dim = int(header["in_dim"])
    width = int(header["width"])
    out_dim = int(header["out_dim"])
    raw = np.fromfile(f"{stem}.bin", dtype="<f8")
    sizes = [width * in_dim, width, out_dim * width, width]
    if raw.size != sum(sizes):
        raise ValueError(f"checkpoint holds {raw.size} floats, expected {sum(sizes)}")
    parts = np.split(raw.astype(np.float64), np.cumsum(sizes)[:-1])
    return TwoLayerNet(
        parts[0].reshape(width, in_dim),
        parts[1],
        parts[2].reshape(out_dim, width),
        parts[3],
        str(header["activation"]),
    )
