"""Driving policy network: a small CNN with a Gaussian head.

Two conv+maxpool pairs, a 1000-node hidden layer, and a 4-value output:
squashed means and exp-parameterized variances of the look-ahead point.
Forward, loss, and reverse-mode gradients are implemented directly in
numpy so the whole pipeline stays deterministic and checkable against
finite differences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from udl.data import Dataset, Sample
from udl.grid import OccupancyGrid

CKPT_FORMAT = "udl-ckpt-1"

# the variance head is exp-parameterized; bounding its logit keeps float32
# training away from exp underflow once residuals get small
LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0

LAYER_SHAPES: tuple[tuple[str, tuple[int, ...]], ...] = (
    ("conv1_w", (8, 1, 3, 3)),
    ("conv1_b", (8,)),
    ("conv2_w", (16, 8, 3, 3)),
    ("conv2_b", (16,)),
    ("fc1_w", (1000, 576)),
    ("fc1_b", (1000,)),
    ("fc2_w", (4, 1000)),
    ("fc2_b", (4,)),
)


class NumericError(RuntimeError):
    """A non-finite activation appeared; names the offending layer."""


class CheckpointFormatError(ValueError):
    pass


@dataclass
class NetworkParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name, _ in LAYER_SHAPES}

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{k: v.copy() for k, v in self.as_dict().items()})

    def check_finite(self) -> None:
        for name, arr in self.as_dict().items():
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite parameters in {name}")


@dataclass
class NetOutput:
    mean: tuple[float, float]
    variance: tuple[float, float]


def init_params(seed: int, dtype=np.float32) -> NetworkParams:
    """He-uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    values = {}
    for name, shape in LAYER_SHAPES:
        if name.endswith("_b"):
            values[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = math.sqrt(6.0 / fan_in)
            values[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return NetworkParams(**values)


def zeros_like_params(params: NetworkParams) -> NetworkParams:
    return NetworkParams(
        **{k: np.zeros_like(v) for k, v in params.as_dict().items()}
    )


def _conv3x3(x: np.ndarray, w: np.ndarray, b: np.ndarray | None):
    """Same-size 3x3 convolution, stride 1, zero padding.

    Returns the output and the im2col matrix kept for the backward pass.
    """
    bsz, cin, h, wd = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # (B, C, H, W, 3, 3) -> (B*H*W, C*9)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, cin * 9)
    out = cols @ w.reshape(f, cin * 9).T
    if b is not None:
        out = out + b
    out = out.reshape(bsz, h, wd, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def _conv3x3_backward(g, cols, w, x_shape):
    """Gradients of a same-size 3x3 conv wrt weights, bias, and input."""
    bsz, cin, h, wd = x_shape
    f = w.shape[0]
    g_cols = g.transpose(0, 2, 3, 1).reshape(bsz * h * wd, f)
    dw = (g_cols.T @ cols).reshape(f, cin, 3, 3)
    db = g_cols.sum(axis=0)
    w_flip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dx, _ = _conv3x3(g, np.ascontiguousarray(w_flip), None)
    return dw, db, dx


def _maxpool2(x: np.ndarray):
    """2x2 max pooling with floor semantics (trailing row/col dropped)."""
    bsz, c, h, wd = x.shape
    h2, w2 = h // 2, wd // 2
    xc = x[:, :, : h2 * 2, : w2 * 2]
    r = xc.reshape(bsz, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    r = r.reshape(bsz, c, h2, w2, 4)
    idx = r.argmax(axis=4)
    out = np.take_along_axis(r, idx[..., None], axis=4)[..., 0]
    return out, idx


def _maxpool2_backward(g, idx, x_shape):
    bsz, c, h, wd = x_shape
    h2, w2 = h // 2, wd // 2
    scattered = np.zeros((bsz, c, h2, w2, 4), dtype=g.dtype)
    np.put_along_axis(scattered, idx[..., None], g[..., None], axis=4)
    scattered = scattered.reshape(bsz, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape, dtype=g.dtype)
    dx[:, :, : h2 * 2, : w2 * 2] = scattered.reshape(bsz, c, h2 * 2, w2 * 2)
    return dx


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite activation in {name}")


def _forward_batch(params: NetworkParams, x: np.ndarray, keep_cache: bool):
    """Forward pass on (B, 1, 25, 25); returns (mean, var, cache)."""
    z1, cols1 = _conv3x3(x, params.conv1_w, params.conv1_b)
    _check_finite("conv1", z1)
    a1 = np.maximum(z1, 0.0)
    p1, idx1 = _maxpool2(a1)

    z2, cols2 = _conv3x3(p1, params.conv2_w, params.conv2_b)
    _check_finite("conv2", z2)
    a2 = np.maximum(z2, 0.0)
    p2, idx2 = _maxpool2(a2)

    flat = p2.reshape(x.shape[0], -1)
    z3 = flat @ params.fc1_w.T + params.fc1_b
    _check_finite("fc1", z3)
    a3 = np.maximum(z3, 0.0)
    z4 = a3 @ params.fc2_w.T + params.fc2_b
    _check_finite("fc2", z4)

    mean = 1.0 / (1.0 + np.exp(-z4[:, :2]))
    u = np.clip(z4[:, 2:], LOGVAR_MIN, LOGVAR_MAX)
    var = np.exp(u)
    _check_finite("head", var)
    cache = None
    if keep_cache:
        var_open = (z4[:, 2:] > LOGVAR_MIN) & (z4[:, 2:] < LOGVAR_MAX)
        cache = (x, z1, idx1, p1.shape, cols1, z2, idx2, cols2,
                 flat, z3, a3, mean, var, var_open)
    return mean, var, cache


def forward_batch(params: NetworkParams, x: np.ndarray):
    """Means and variances for a batch of grids, shape (B, 2) each."""
    mean, var, _ = _forward_batch(params, x, keep_cache=False)
    return mean, var


def forward(params: NetworkParams, grid: OccupancyGrid) -> NetOutput:
    """Policy output for a single occupancy grid."""
    x = grid.cells.astype(params.fc1_w.dtype)[None, None, :, :]
    mean, var, _ = _forward_batch(params, x, keep_cache=False)
    return NetOutput(
        (float(mean[0, 0]), float(mean[0, 1])),
        (float(var[0, 0]), float(var[0, 1])),
    )


def _loss_terms(mean, var, actions, taus, alpha):
    """Per-sample Gaussian losses plus the residual pieces for backprop."""
    if (var <= 0).any():
        raise ValueError("variances must be strictly positive")
    gain = 1.0 + alpha * taus[:, None]
    diff = np.abs(actions - mean)
    r = gain * diff
    per = 0.5 * (0.5 * r**2 / var + 0.5 * np.log(var))
    return per.sum(axis=1), gain, diff, r


def loss(output: NetOutput, sample: Sample, alpha: float) -> float:
    """Weighted Gaussian log-likelihood loss for one sample."""
    mean = np.array([output.mean], dtype=float)
    var = np.array([output.variance], dtype=float)
    actions = np.array([[sample.ax, sample.ay]], dtype=float)
    taus = np.array([sample.tau], dtype=float)
    per, _, _, _ = _loss_terms(mean, var, actions, taus, alpha)
    return float(per[0])


def batch_loss(params: NetworkParams, x, actions, taus, alpha) -> float:
    mean, var, _ = _forward_batch(params, x, keep_cache=False)
    per, _, _, _ = _loss_terms(mean, var, actions, taus, alpha)
    return float(per.mean())


def gradients(
    params: NetworkParams, x: np.ndarray, actions: np.ndarray,
    taus: np.ndarray, alpha: float,
) -> tuple[float, NetworkParams]:
    """Mean batch loss and its exact gradient in parameter shapes.

    The absolute value in the residual uses the sign subgradient with
    sign(0) = 0.
    """
    if len(x) == 0:
        raise ValueError("batch must be non-empty")
    mean, var, cache = _forward_batch(params, x, keep_cache=True)
    (x_in, z1, idx1, p1_shape, cols1, z2, idx2, cols2,
     flat, z3, a3, _, _, var_open) = cache
    per, gain, diff, r = _loss_terms(mean, var, actions, taus, alpha)
    n = len(x)
    total = float(per.mean())

    # head gradients; loss already averages the two axes with factor 1/2
    sign = np.sign(actions - mean)
    dmean = (0.5 * r / var) * gain * (-sign) / n
    draw_var = 0.5 * (0.5 - 0.5 * r**2 / var) / n  # via d(sigma^2)=sigma^2 du
    draw_var = np.where(var_open, draw_var, 0.0)  # clamp is flat at the bounds
    dz4 = np.concatenate([dmean * mean * (1.0 - mean), draw_var], axis=1)
    dz4 = dz4.astype(x.dtype)

    dfc2_w = dz4.T @ a3
    dfc2_b = dz4.sum(axis=0)
    da3 = dz4 @ params.fc2_w
    dz3 = da3 * (z3 > 0)

    dfc1_w = dz3.T @ flat
    dfc1_b = dz3.sum(axis=0)
    dflat = dz3 @ params.fc1_w
    dp2 = dflat.reshape(len(x), 16, 6, 6)

    da2 = _maxpool2_backward(dp2, idx2, z2.shape)
    dz2 = da2 * (z2 > 0)
    dconv2_w, dconv2_b, dp1 = _conv3x3_backward(dz2, cols2, params.conv2_w, p1_shape)

    da1 = _maxpool2_backward(dp1, idx1, z1.shape)
    dz1 = da1 * (z1 > 0)
    dconv1_w, dconv1_b, _ = _conv3x3_backward(dz1, cols1, params.conv1_w, x_in.shape)

    grads = NetworkParams(
        conv1_w=dconv1_w, conv1_b=dconv1_b,
        conv2_w=dconv2_w, conv2_b=dconv2_b,
        fc1_w=dfc1_w, fc1_b=dfc1_b,
        fc2_w=dfc2_w, fc2_b=dfc2_b,
    )
    return total, grads


def gradients_from_samples(
    params: NetworkParams, batch: list[Sample], alpha: float
) -> tuple[float, NetworkParams]:
    ds = Dataset(list(batch))
    x, a, t = ds.to_arrays(dtype=params.fc1_w.dtype)
    return gradients(params, x, a, t, alpha)


@dataclass
class AdamState:
    m: NetworkParams
    v: NetworkParams
    t: int = 0

    @classmethod
    def zeros(cls, params: NetworkParams) -> "AdamState":
        return cls(zeros_like_params(params), zeros_like_params(params), 0)


def adam_step(
    params: NetworkParams, grads: NetworkParams, state: AdamState, lr: float,
    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update; inputs are not mutated."""
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for name, _ in LAYER_SHAPES:
        g = getattr(grads, name)
        m = beta1 * getattr(state.m, name) + (1.0 - beta1) * g
        v = beta2 * getattr(state.v, name) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_p[name] = getattr(params, name) - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    updated = NetworkParams(**new_p)
    updated.check_finite()
    return updated, AdamState(NetworkParams(**new_m), NetworkParams(**new_v), t)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-5
    alpha: float = 1.5
    batch_size: int = 512
    epochs: int = 5000
    rng_seed: int = 0
    val_fraction: float = 0.1
    patience: int | None = 200

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


def train(
    dataset: Dataset,
    config: TrainConfig,
    init: NetworkParams | None = None,
) -> tuple[NetworkParams, list[float]]:
    """Mini-batch Adam training; returns final params and per-epoch mean loss.

    Warm-starts from ``init`` when given.  With ``patience`` set, a seeded
    10% split is held out and training stops once its loss has not improved
    for that many epochs (the best-validation parameters are returned).
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    params = init.copy() if init is not None else init_params(config.rng_seed)
    dtype = params.fc1_w.dtype
    x, a, t = dataset.to_arrays(dtype=dtype)
    rng = np.random.default_rng(config.rng_seed)

    val = None
    n = len(x)
    if config.patience is not None and n >= 10:
        perm = rng.permutation(n)
        n_val = max(1, int(round(config.val_fraction * n)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        val = (x[val_idx], a[val_idx], t[val_idx])
        x, a, t = x[train_idx], a[train_idx], t[train_idx]
        n = len(x)

    state = AdamState.zeros(params)
    losses: list[float] = []
    best: tuple[float, NetworkParams] | None = None
    stall = 0
    batch = min(config.batch_size, n)

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for lo in range(0, n, batch):
            idx = perm[lo : lo + batch]
            try:
                bl, grads = gradients(params, x[idx], a[idx], t[idx], config.alpha)
                params, state = adam_step(params, grads, state, config.learning_rate)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}: {exc}") from exc
            epoch_losses.append(bl)
        losses.append(float(np.mean(epoch_losses)))

        if val is not None:
            vl = batch_loss(params, *val, config.alpha)
            if best is None or vl < best[0] - 1e-6:
                best = (vl, params.copy())
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    params = best[1]
                    break
    if val is not None and best is not None and config.epochs > 0:
        params = best[1] if best[0] < batch_loss(params, *val, config.alpha) else params
    return params, losses


def save_checkpoint(params: NetworkParams, seed: int = 0, epoch: int = 0) -> bytes:
    """Manifest line + concatenated little-endian float32 arrays."""
    manifest = {
        "format": CKPT_FORMAT,
        "layers": [[name, list(shape)] for name, shape in LAYER_SHAPES],
        "seed": seed,
        "epoch": epoch,
    }
    body = b"".join(
        np.ascontiguousarray(getattr(params, name), dtype="<f4").tobytes()
        for name, _ in LAYER_SHAPES
    )
    return json.dumps(manifest, separators=(",", ":")).encode() + b"\n" + body


def load_checkpoint(blob: bytes) -> NetworkParams:
    newline = blob.find(b"\n")
    if newline < 0:
        raise CheckpointFormatError("missing manifest line")
    try:
        manifest = json.loads(blob[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"bad manifest: {exc}") from None
    if manifest.get("format") != CKPT_FORMAT:
        raise CheckpointFormatError(f"wrong magic {manifest.get('format')!r}")
    layers = [(name, tuple(shape)) for name, shape in manifest.get("layers", [])]
    if layers != [(n, s) for n, s in LAYER_SHAPES]:
        raise CheckpointFormatError("layer manifest does not match udl-ckpt-1")
    body = blob[newline + 1 :]
    expected = sum(int(np.prod(s)) for _, s in LAYER_SHAPES) * 4
    if len(body) != expected:
        raise CheckpointFormatError(
            f"payload length {len(body)} does not match manifest ({expected})"
        )
    values = {}
    off = 0
    for name, shape in LAYER_SHAPES:
        count = int(np.prod(shape))
        arr = np.frombuffer(body, dtype="<f4", count=count, offset=off)
        values[name] = arr.reshape(shape).copy()
        off += count * 4
    return NetworkParams(**values)
