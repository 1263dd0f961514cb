"""Sliding-window disaggregation network, written out in plain NumPy.

Architecture: 1-D conv (ReLU) over the standardized aggregate window, two
bidirectional GRU layers (concat merge) with dropout between stages, a
ReLU dense layer, and a linear scalar head. Forward, backpropagation
through time, and the Adam loop are hand-derived; the test suite checks
them against an independent scalar implementation and finite differences.

float64 throughout. A compiled float32 low-latency path lives in
``serving.py`` and is verified against this reference.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DegenerateTarget,
    EmptyDataset,
    ModelFormatError,
    ShapeMismatch,
)

WEIGHT_MAGIC = b"WSM1"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetworkConfig:
    window: int = 100
    conv_filters: int = 16
    conv_kernel: int = 4
    conv_stride: int = 1
    gru1_units: int = 64
    gru2_units: int = 128
    merge: str = "concat"
    dropout_p: float = 0.5
    dense1_units: int = 128
    epochs: int = 50
    batch_size: int = 1024
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.window < self.conv_kernel:
            raise ShapeMismatch(f"window {self.window} < conv kernel {self.conv_kernel}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ShapeMismatch(f"dropout_p {self.dropout_p} outside [0,1)")
        if self.merge != "concat":
            raise ShapeMismatch(f"unsupported merge mode {self.merge!r}")
        if self.conv_stride < 1:
            raise ShapeMismatch("conv_stride must be >= 1")


def desk_config(seed: int = 0, **overrides) -> NetworkConfig:
    """Small configuration for tests and desk-scale experiments."""
    base = dict(
        window=20,
        conv_filters=8,
        gru1_units=16,
        gru2_units=32,
        epochs=10,
        batch_size=64,
        seed=seed,
    )
    base.update(overrides)
    return NetworkConfig(**base)


def param_slices(cfg: NetworkConfig) -> List[Tuple[str, Tuple[int, ...], int, int]]:
    """Ordered (name, shape, start, end) table for the flat weight vector."""
    K, F = cfg.conv_kernel, cfg.conv_filters
    H1, H2, D = cfg.gru1_units, cfg.gru2_units, cfg.dense1_units
    shapes = [("conv_w", (K, F)), ("conv_b", (F,))]
    for direction in ("fw", "bw"):
        shapes += [
            (f"gru1_{direction}_w", (F, 3 * H1)),
            (f"gru1_{direction}_u", (H1, 3 * H1)),
            (f"gru1_{direction}_bi", (3 * H1,)),
            (f"gru1_{direction}_br", (3 * H1,)),
        ]
    for direction in ("fw", "bw"):
        shapes += [
            (f"gru2_{direction}_w", (2 * H1, 3 * H2)),
            (f"gru2_{direction}_u", (H2, 3 * H2)),
            (f"gru2_{direction}_bi", (3 * H2,)),
            (f"gru2_{direction}_br", (3 * H2,)),
        ]
    shapes += [
        ("dense1_w", (2 * H2, D)),
        ("dense1_b", (D,)),
        ("dense2_w", (D, 1)),
        ("dense2_b", (1,)),
    ]
    table = []
    pos = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        table.append((name, shape, pos, pos + size))
        pos += size
    return table


def param_count(cfg: NetworkConfig) -> int:
    return param_slices(cfg)[-1][3]


def view_params(flat: np.ndarray, cfg: NetworkConfig) -> Dict[str, np.ndarray]:
    return {name: flat[a:b].reshape(shape) for name, shape, a, b in param_slices(cfg)}


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def init_params(cfg: NetworkConfig, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform kernels, orthogonal GRU recurrent blocks, zero biases."""
    flat = np.zeros(param_count(cfg))
    views = view_params(flat, cfg)
    for name, w in views.items():
        if name.endswith("_b") or name.endswith("_bi") or name.endswith("_br"):
            continue
        if name.endswith("_u"):
            h = w.shape[0]
            w[:] = np.concatenate([_orthogonal(rng, h) for _ in range(3)], axis=1)
        else:
            fan_in, fan_out = w.shape[0], w.shape[1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w[:] = rng.uniform(-limit, limit, size=w.shape)
    return flat


@dataclass
class TrainedModel:
    config: NetworkConfig
    weights: np.ndarray
    input_norm: Tuple[float, float]  # (mean, std) of the training aggregate
    target_scale: float
    key: Optional[object] = None
    epoch_losses: List[float] = field(default_factory=list)

    def views(self) -> Dict[str, np.ndarray]:
        return view_params(self.weights, self.config)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """'same' 1-D convolution over (B, T) input with zero padding, then ReLU."""
    B, T = x.shape
    K, F = w.shape
    pad_l = (K - 1) // 2
    pad_r = K - 1 - pad_l
    xpad = np.zeros((B, T + K - 1))
    xpad[:, pad_l : pad_l + T] = x
    pre = np.zeros((B, T, F))
    for k in range(K):
        pre += xpad[:, k : k + T, None] * w[k][None, None, :]
    pre = pre + b
    pre = pre[:, ::stride, :]
    out = np.maximum(pre, 0.0)
    return out, (x, xpad, pre)


def _conv_backward(dout: np.ndarray, cache, w: np.ndarray, stride: int):
    x, xpad, pre = cache
    B, T = x.shape
    K, F = w.shape
    dpre_s = dout * (pre > 0)
    if stride > 1:
        dpre = np.zeros((B, T, F))
        dpre[:, ::stride, :] = dpre_s
    else:
        dpre = dpre_s
    dw = np.empty_like(w)
    for k in range(K):
        dw[k] = np.einsum("bt,btf->f", xpad[:, k : k + T], dpre)
    db = dpre.sum(axis=(0, 1))
    return dw, db


def _gru_dir_forward(x_seq: np.ndarray, w, u, bi, br, reverse: bool):
    """One GRU direction over (B, T, In); returns states in original time order.

    Gate layout (z, r, candidate); the candidate's recurrent term is gated
    after the matmul: hc = tanh(x_h + r * (h_prev @ U_h + br_h)).
    """
    B, T, _ = x_seq.shape
    H = u.shape[0]
    xp = x_seq[:, ::-1, :] if reverse else x_seq
    xin = xp @ w + bi
    h = np.zeros((B, H))
    hs = np.empty((B, T, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    hcs = np.empty((T, B, H))
    hprevs = np.empty((T, B, H))
    rechs = np.empty((T, B, H))
    for t in range(T):
        rec = h @ u + br
        z = _sigmoid(xin[:, t, :H] + rec[:, :H])
        r = _sigmoid(xin[:, t, H : 2 * H] + rec[:, H : 2 * H])
        hc = np.tanh(xin[:, t, 2 * H :] + r * rec[:, 2 * H :])
        hprevs[t], zs[t], rs[t], hcs[t], rechs[t] = h, z, r, hc, rec[:, 2 * H :]
        h = z * h + (1.0 - z) * hc
        hs[:, t, :] = h
    if reverse:
        hs = hs[:, ::-1, :]
    cache = (xp, zs, rs, hcs, hprevs, rechs, w, u, reverse)
    return hs, cache


def _gru_dir_backward(cache, d_hs: Optional[np.ndarray], d_last: Optional[np.ndarray]):
    """Backprop through time for one direction.

    d_hs: gradient on the full state sequence in original time order (or None).
    d_last: gradient on the final state in processing order (or None).
    """
    xp, zs, rs, hcs, hprevs, rechs, w, u, reverse = cache
    B, T, _ = xp.shape
    H = u.shape[0]
    if d_hs is not None and reverse:
        d_hs = d_hs[:, ::-1, :]
    dxin = np.empty((B, T, 3 * H))
    drecs = np.empty((T, B, H))  # r-gated candidate part of the recurrent grads
    dh = np.zeros((B, H))
    if d_last is not None:
        dh = dh + d_last
    for t in range(T - 1, -1, -1):
        if d_hs is not None:
            dh = dh + d_hs[:, t, :]
        z, r, hc, hprev, rech = zs[t], rs[t], hcs[t], hprevs[t], rechs[t]
        dz = dh * (hprev - hc) * z * (1.0 - z)
        dhc = dh * (1.0 - z) * (1.0 - hc * hc)
        dr = dhc * rech * r * (1.0 - r)
        dxin[:, t, :H] = dz
        dxin[:, t, H : 2 * H] = dr
        dxin[:, t, 2 * H :] = dhc
        drecs[t] = dhc * r
        drec = np.concatenate([dz, dr, drecs[t]], axis=1)
        dh = dh * z + drec @ u.T
    dw = np.einsum("bti,btj->ij", xp, dxin)
    dbi = dxin.sum(axis=(0, 1))
    drec_full = np.concatenate([dxin[:, :, : 2 * H].transpose(1, 0, 2), drecs], axis=2)
    du = np.einsum("tbi,tbj->ij", hprevs, drec_full)
    dbr = drec_full.sum(axis=(0, 1))
    dxp = dxin @ w.T
    if reverse:
        dxp = dxp[:, ::-1, :]
    return dxp, dw, du, dbi, dbr


def _dropout_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    if p <= 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def forward_batch(
    flat: np.ndarray,
    cfg: NetworkConfig,
    x: np.ndarray,
    train: bool = False,
    masks: Optional[Tuple[np.ndarray, np.ndarray]] = None,
):
    """Network forward on standardized windows (B, w) -> scaled outputs (B,).

    In training mode the two dropout stages apply the supplied masks
    (already scaled by 1/(1-p)); at inference dropout is the identity.
    """
    v = view_params(flat, cfg)
    conv_out, conv_cache = _conv_forward(x, v["conv_w"], v["conv_b"], cfg.conv_stride)
    g1f, c1f = _gru_dir_forward(
        conv_out, v["gru1_fw_w"], v["gru1_fw_u"], v["gru1_fw_bi"], v["gru1_fw_br"], False
    )
    g1b, c1b = _gru_dir_forward(
        conv_out, v["gru1_bw_w"], v["gru1_bw_u"], v["gru1_bw_bi"], v["gru1_bw_br"], True
    )
    s1 = np.concatenate([g1f, g1b], axis=2)
    if train and masks is not None:
        s1 = s1 * masks[0]
    g2f, c2f = _gru_dir_forward(
        s1, v["gru2_fw_w"], v["gru2_fw_u"], v["gru2_fw_bi"], v["gru2_fw_br"], False
    )
    g2b, c2b = _gru_dir_forward(
        s1, v["gru2_bw_w"], v["gru2_bw_u"], v["gru2_bw_bi"], v["gru2_bw_br"], True
    )
    # concat of final states: forward direction's last is at t=T-1, backward's at t=0
    h = np.concatenate([g2f[:, -1, :], g2b[:, 0, :]], axis=1)
    if train and masks is not None:
        h = h * masks[1]
    a1 = h @ v["dense1_w"] + v["dense1_b"]
    d1 = np.maximum(a1, 0.0)
    y = (d1 @ v["dense2_w"] + v["dense2_b"])[:, 0]
    cache = (conv_cache, c1f, c1b, s1, c2f, c2b, h, a1, d1, masks if train else None, v)
    return y, cache


def backward_batch(flat: np.ndarray, cfg: NetworkConfig, cache, dy: np.ndarray) -> np.ndarray:
    """Gradient of the loss wrt every parameter, as a flat vector."""
    conv_cache, c1f, c1b, s1, c2f, c2b, h, a1, d1, masks, v = cache
    H1, H2 = cfg.gru1_units, cfg.gru2_units
    grads = np.zeros_like(flat)
    g = view_params(grads, cfg)

    g["dense2_w"][:] = d1.T @ dy[:, None]
    g["dense2_b"][:] = dy.sum()
    dd1 = dy[:, None] @ v["dense2_w"].T
    da1 = dd1 * (a1 > 0)
    g["dense1_w"][:] = h.T @ da1
    g["dense1_b"][:] = da1.sum(axis=0)
    dh = da1 @ v["dense1_w"].T
    if masks is not None:
        dh = dh * masks[1]

    ds1_f, dw, du, dbi, dbr = _gru_dir_backward(c2f, None, dh[:, :H2])
    g["gru2_fw_w"][:], g["gru2_fw_u"][:] = dw, du
    g["gru2_fw_bi"][:], g["gru2_fw_br"][:] = dbi, dbr
    ds1_b, dw, du, dbi, dbr = _gru_dir_backward(c2b, None, dh[:, H2:])
    g["gru2_bw_w"][:], g["gru2_bw_u"][:] = dw, du
    g["gru2_bw_bi"][:], g["gru2_bw_br"][:] = dbi, dbr
    ds1 = ds1_f + ds1_b
    if masks is not None:
        ds1 = ds1 * masks[0]

    dconv_f, dw, du, dbi, dbr = _gru_dir_backward(c1f, ds1[:, :, :H1], None)
    g["gru1_fw_w"][:], g["gru1_fw_u"][:] = dw, du
    g["gru1_fw_bi"][:], g["gru1_fw_br"][:] = dbi, dbr
    dconv_b, dw, du, dbi, dbr = _gru_dir_backward(c1b, ds1[:, :, H1:], None)
    g["gru1_bw_w"][:], g["gru1_bw_u"][:] = dw, du
    g["gru1_bw_bi"][:], g["gru1_bw_br"][:] = dbi, dbr
    dconv = dconv_f + dconv_b

    dw, db = _conv_backward(dconv, conv_cache, v["conv_w"], cfg.conv_stride)
    g["conv_w"][:], g["conv_b"][:] = dw, db
    return grads


def build_windows(series: np.ndarray, window: int) -> np.ndarray:
    """Sliding windows ending at each t, start-padded with the first value."""
    x = np.asarray(series, dtype=float)
    padded = np.concatenate([np.full(window - 1, x[0]), x])
    view = np.lib.stride_tricks.sliding_window_view(padded, window)
    return np.ascontiguousarray(view)


def forward(model: TrainedModel, window_vals: Sequence[float]) -> float:
    """One inference: w aggregate watts in, one job's watts out."""
    x = np.asarray(window_vals, dtype=float)
    if x.shape != (model.config.window,):
        raise ShapeMismatch(f"expected {model.config.window} values, got {x.shape}")
    mean, std = model.input_norm
    y, _ = forward_batch(model.weights, model.config, (x[None, :] - mean) / std)
    return float(np.clip(y[0] * model.target_scale, 0.0, model.target_scale))


def forward_series(model: TrainedModel, series: Sequence[float], chunk: int = 4096) -> np.ndarray:
    """Batched inference over every timestep of an aggregate series."""
    mean, std = model.input_norm
    windows = (build_windows(series, model.config.window) - mean) / std
    outs = []
    for lo in range(0, len(windows), chunk):
        y, _ = forward_batch(model.weights, model.config, windows[lo : lo + chunk])
        outs.append(y)
    y = np.concatenate(outs) * model.target_scale
    return np.clip(y, 0.0, model.target_scale)


def train(
    cfg: NetworkConfig,
    data: Sequence[Tuple[Sequence[float], Sequence[float]]],
    cap: float = 200.0,
    key=None,
) -> TrainedModel:
    """Fit the network on (aggregate, target) series pairs.

    Every timestep becomes one (window, target) pair via start-padded
    sliding windows; loss is MSE on cap-scaled targets; optimizer is Adam.
    Fully reproducible from cfg.seed.
    """
    if not data:
        raise EmptyDataset("no training pairs")
    xs, ys, raw = [], [], []
    for agg, tgt in data:
        agg = np.asarray(agg, dtype=float)
        tgt = np.asarray(tgt, dtype=float)
        if agg.shape != tgt.shape or agg.ndim != 1:
            raise ShapeMismatch(f"pair shapes differ: {agg.shape} vs {tgt.shape}")
        if len(agg) < cfg.window:
            raise ShapeMismatch(f"series length {len(agg)} < window {cfg.window}")
        if np.any(tgt < 0) or np.any(tgt > cap + 1e-9):
            raise DegenerateTarget("targets outside [0, cap]")
        xs.append(build_windows(agg, cfg.window))
        ys.append(tgt / cap)
        raw.append(agg)
    X = np.concatenate(xs, axis=0)
    Y = np.concatenate(ys)
    if np.all(Y == 0.0):
        raise DegenerateTarget("all targets are constant zero")
    allvals = np.concatenate(raw)
    mean = float(allvals.mean())
    std = float(max(allvals.std(), 1e-8))
    X = (X - mean) / std

    rng = np.random.default_rng(cfg.seed)
    flat = init_params(cfg, rng)
    m = np.zeros_like(flat)
    vv = np.zeros_like(flat)
    step = 0
    n = len(Y)
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            B = len(idx)
            masks = None
            if cfg.dropout_p > 0.0:
                T_out = (cfg.window + cfg.conv_stride - 1) // cfg.conv_stride
                masks = (
                    _dropout_mask(rng, (B, T_out, 2 * cfg.gru1_units), cfg.dropout_p),
                    _dropout_mask(rng, (B, 2 * cfg.gru2_units), cfg.dropout_p),
                )
            yhat, cache = forward_batch(flat, cfg, xb, train=True, masks=masks)
            err = yhat - yb
            epoch_loss += float(err @ err)
            dy = 2.0 * err / B
            grads = backward_batch(flat, cfg, cache, dy)
            step += 1
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * grads
            vv *= ADAM_BETA2
            vv += (1.0 - ADAM_BETA2) * grads * grads
            mhat = m / (1.0 - ADAM_BETA1**step)
            vhat = vv / (1.0 - ADAM_BETA2**step)
            flat -= cfg.learning_rate * mhat / (np.sqrt(vhat) + ADAM_EPS)
        losses.append(epoch_loss / n)
    return TrainedModel(
        config=cfg,
        weights=flat,
        input_norm=(mean, std),
        target_scale=cap,
        key=key,
        epoch_losses=losses,
    )


def grad_check(
    cfg: NetworkConfig,
    sample: Tuple[np.ndarray, np.ndarray],
    use_dropout: bool = False,
    linear_variant: bool = False,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences."""
    x, y = np.asarray(sample[0], dtype=float), np.asarray(sample[1], dtype=float)
    rng = np.random.default_rng(cfg.seed)
    if linear_variant:
        return _grad_check_linear(cfg, x, y, rng, h)
    flat = init_params(cfg, rng)
    # check at a generic point: freshly initialized biases are exactly 0,
    # which parks every dense ReLU on its corner whenever a dropout mask
    # zeroes a whole row, and central differences measure half-slopes there
    flat += rng.uniform(0.02, 0.06, flat.size) * np.where(
        rng.random(flat.size) < 0.5, -1.0, 1.0
    )
    if param_count(cfg) > 2000:
        raise ShapeMismatch(f"grad_check limited to 2000 parameters, got {param_count(cfg)}")
    masks = None
    if use_dropout and cfg.dropout_p > 0.0:
        T_out = (cfg.window + cfg.conv_stride - 1) // cfg.conv_stride
        masks = (
            _dropout_mask(rng, (len(x), T_out, 2 * cfg.gru1_units), cfg.dropout_p),
            _dropout_mask(rng, (len(x), 2 * cfg.gru2_units), cfg.dropout_p),
        )

    def loss_of(theta):
        yhat, _ = forward_batch(theta, cfg, x, train=masks is not None, masks=masks)
        return float(np.mean((yhat - y) ** 2))

    yhat, cache = forward_batch(flat, cfg, x, train=masks is not None, masks=masks)
    dy = 2.0 * (yhat - y) / len(y)
    analytic = backward_batch(flat, cfg, cache, dy)
    worst = 0.0
    for i in range(len(flat)):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_of(flat)
        flat[i] = orig - h
        lm = loss_of(flat)
        flat[i] = orig
        fd = (lp - lm) / (2.0 * h)
        rel = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst


def _grad_check_linear(cfg, x, y, rng, h):
    """Exact-quadratic control case: dense(identity) -> dense, no conv/GRU."""
    w, d = cfg.window, cfg.dense1_units
    n1 = w * d + d
    flat = rng.uniform(-0.1, 0.1, size=n1 + d + 1)

    def unpack(theta):
        w1 = theta[: w * d].reshape(w, d)
        b1 = theta[w * d : n1]
        w2 = theta[n1 : n1 + d].reshape(d, 1)
        b2 = theta[n1 + d :]
        return w1, b1, w2, b2

    def loss_of(theta):
        w1, b1, w2, b2 = unpack(theta)
        yhat = ((x @ w1 + b1) @ w2 + b2)[:, 0]
        return float(np.mean((yhat - y) ** 2))

    w1, b1, w2, b2 = unpack(flat)
    a1 = x @ w1 + b1
    yhat = (a1 @ w2 + b2)[:, 0]
    dy = 2.0 * (yhat - y) / len(y)
    grads = np.concatenate(
        [
            (x.T @ (dy[:, None] @ w2.T)).ravel(),
            (dy[:, None] @ w2.T).sum(axis=0),
            (a1.T @ dy[:, None]).ravel(),
            [dy.sum()],
        ]
    )
    worst = 0.0
    for i in range(len(flat)):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_of(flat)
        flat[i] = orig - h
        lm = loss_of(flat)
        flat[i] = orig
        fd = (lp - lm) / (2.0 * h)
        rel = abs(grads[i] - fd) / max(abs(grads[i]), abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst


def save_model(model: TrainedModel, out_dir: str, model_type: str = "SlidingWindow") -> None:
    """Write the model directory: metadata.json + magic-prefixed weight file."""
    os.makedirs(out_dir, exist_ok=True)
    weights = np.asarray(model.weights, dtype="<f8")
    with open(os.path.join(out_dir, "weights.bin"), "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(weights.tobytes())
    meta = {
        "format": WEIGHT_MAGIC.decode(),
        "model_type": model_type,
        "config": asdict(model.config),
        "input_norm": list(model.input_norm),
        "target_scale": model.target_scale,
        "key": model.key.to_dict() if model.key is not None else None,
        "slices": [
            {"name": name, "shape": list(shape), "start": a, "end": b}
            for name, shape, a, b in param_slices(model.config)
        ],
        "epoch_losses": model.epoch_losses,
    }
    with open(os.path.join(out_dir, "metadata.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)


def load_model(in_dir: str) -> TrainedModel:
    with open(os.path.join(in_dir, "metadata.json")) as f:
        meta = json.load(f)
    if meta.get("format") != WEIGHT_MAGIC.decode():
        raise ModelFormatError(f"unknown model format {meta.get('format')!r}")
    cfg = NetworkConfig(**meta["config"])
    with open(os.path.join(in_dir, "weights.bin"), "rb") as f:
        blob = f.read()
    if blob[:4] != WEIGHT_MAGIC:
        raise ModelFormatError("weight file missing WSM1 magic")
    weights = np.frombuffer(blob[4:], dtype="<f8").astype(float)
    expected = param_slices(cfg)
    if len(weights) != expected[-1][3]:
        raise ModelFormatError(
            f"weight count {len(weights)} does not match config ({expected[-1][3]})"
        )
    recorded = meta.get("slices", [])
    for (name, shape, a, b), rec in zip(expected, recorded):
        if rec["name"] != name or rec["start"] != a or rec["end"] != b:
            raise ModelFormatError(f"slice manifest mismatch at {rec.get('name')}")
    key = None
    if meta.get("key") is not None:
        from .library import ModelKey

        key = ModelKey.from_dict(meta["key"])
    return TrainedModel(
        config=cfg,
        weights=weights,
        input_norm=tuple(meta["input_norm"]),
        target_scale=meta["target_scale"],
        key=key,
        epoch_losses=meta.get("epoch_losses", []),
    )
