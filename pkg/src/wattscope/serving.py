"""Low-latency single-window inference engine.

Same network as the float64 reference in ``nn``, recompiled as fused
float32 numba kernels for the per-sample latency budget. All matmuls over
the recurrent matrices run as an 8-way unrolled broadcast-FMA pass (the
step is L2-bandwidth bound); sigmoid/tanh use a range-reduced polynomial
exp with the 2^k factor built by integer bit assembly. Inputs are never
reversed in memory: the backward direction walks indices in reverse,
because negative-stride GEMMs hit a pathological BLAS path.

Accuracy versus the reference is checked in the test suite (float32
rounding, not algorithmic differences).
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .errors import ShapeMismatch
from .nn import TrainedModel

f4 = np.float32


@njit(fastmath=True, cache=True)
def _gru_dir(xin, xofs, U, bzr, bh, seq, colofs, reverse, want_seq, last, rec, act, ibuf):
    # bzr: combined input+recurrent bias for the z/r gates, recurrent-only
    # bias for the candidate slot. bh: input-side candidate bias, which must
    # stay outside the reset-gated term.
    fbuf = ibuf.view(np.float32)  # same memory; the view is taken here so
    # the compiler sees the aliasing between the bit writes and float reads
    T = xin.shape[0]
    H = U.shape[0]
    H3 = 3 * H
    HH = 2 * H
    LOG2E = np.float32(1.4426950408889634)
    LN2HI = np.float32(0.6931471824645996)
    LN2LO = np.float32(1.9082149292705877e-09)
    ONE = np.float32(1.0)
    HALF = np.float32(0.5)
    T30 = np.float32(30.0)
    T15 = np.float32(15.0)
    h = last
    for i in range(H):
        h[i] = 0.0
    for step in range(T):
        t = T - 1 - step if reverse else step
        for j in range(H3):
            rec[j] = bzr[j]
        i = 0
        while i + 8 <= H:
            h0 = h[i]; h1 = h[i + 1]; h2 = h[i + 2]; h3 = h[i + 3]
            h4 = h[i + 4]; h5 = h[i + 5]; h6 = h[i + 6]; h7 = h[i + 7]
            for j in range(H3):
                rec[j] += ((h0 * U[i, j] + h1 * U[i + 1, j]) + (h2 * U[i + 2, j] + h3 * U[i + 3, j])) \
                        + ((h4 * U[i + 4, j] + h5 * U[i + 5, j]) + (h6 * U[i + 6, j] + h7 * U[i + 7, j]))
            i += 8
        while i < H:
            hi = h[i]
            for j in range(H3):
                rec[j] += hi * U[i, j]
            i += 1
        for j in range(HH):
            act[j] = -min(max(xin[t, xofs + j] + rec[j], -T30), T30)
        for j in range(HH):
            x = act[j]
            xx = x * LOG2E
            xr = xx + (HALF if xx >= 0.0 else -HALF)
            k = np.int32(xr)
            kf = np.float32(k)
            r = x - kf * LN2HI - kf * LN2LO
            p = np.float32(0.00019841270)
            p = p * r + np.float32(0.0013888889)
            p = p * r + np.float32(0.0083333333)
            p = p * r + np.float32(0.041666667)
            p = p * r + np.float32(0.16666667)
            p = p * r + HALF
            p = p * r + ONE
            p = p * r + ONE
            ibuf[j] = (k + np.int32(127)) << np.int32(23)
            act[j] = p
        for j in range(HH):
            act[j] = ONE / (ONE + act[j] * fbuf[j])
        for i in range(H):
            u = xin[t, xofs + HH + i] + bh[i] + act[H + i] * rec[HH + i]
            act[HH + i] = np.float32(-2.0) * min(max(u, -T15), T15)
        for j in range(HH, H3):
            x = act[j]
            xx = x * LOG2E
            xr = xx + (HALF if xx >= 0.0 else -HALF)
            k = np.int32(xr)
            kf = np.float32(k)
            r = x - kf * LN2HI - kf * LN2LO
            p = np.float32(0.00019841270)
            p = p * r + np.float32(0.0013888889)
            p = p * r + np.float32(0.0083333333)
            p = p * r + np.float32(0.041666667)
            p = p * r + np.float32(0.16666667)
            p = p * r + HALF
            p = p * r + ONE
            p = p * r + ONE
            ibuf[j] = (k + np.int32(127)) << np.int32(23)
            act[j] = p
        for i in range(H):
            j = HH + i
            e2u = act[j] * fbuf[j]
            th = (ONE - e2u) / (ONE + e2u)
            z = act[i]
            h[i] = z * h[i] + (ONE - z) * th
        if want_seq:
            for i in range(H):
                seq[t, colofs + i] = h[i]


@njit(fastmath=True, cache=True)
def _forward_driver(w, mean, std, cap, Wc, bc, W1, U1f, U1b, b1f, b1b, bh1f, bh1b,
                    W2, U2f, U2b, b2f, b2b, bh2f, bh2b, Wd1T, bd1, Wd2, bd2,
                    xbuf, conv, xin1, xin2, s1, l1f, l1b, l2f, l2b, rec, act, ibuf, dummy):
    T = w.shape[0]
    K = Wc.shape[0]
    F = Wc.shape[1]
    H1 = U1f.shape[0]
    H2 = U2f.shape[0]
    D = Wd1T.shape[0]
    for t in range(T):
        xbuf[t] = (w[t] - mean) / std
    padl = (K - 1) // 2
    for t in range(T):
        lo = -padl if t - padl >= 0 else -t
        hi = K - padl if t + K - 1 - padl < T else T - t
        for f in range(F):
            acc = bc[f]
            for k in range(lo, hi):
                acc += xbuf[t + k] * Wc[k + padl, f]
            conv[t, f] = acc if acc > 0.0 else 0.0
    np.dot(conv, W1, xin1)
    _gru_dir(xin1, 0, U1f, b1f, bh1f, s1, 0, False, True, l1f, rec, act, ibuf)
    _gru_dir(xin1, 3 * H1, U1b, b1b, bh1b, s1, H1, True, True, l1b, rec, act, ibuf)
    np.dot(s1, W2, xin2)
    _gru_dir(xin2, 0, U2f, b2f, bh2f, dummy, 0, False, False, l2f, rec, act, ibuf)
    _gru_dir(xin2, 3 * H2, U2b, b2b, bh2b, dummy, 0, True, False, l2b, rec, act, ibuf)
    out = bd2
    for d in range(D):
        acc = bd1[d]
        for i in range(H2):
            acc += l2f[i] * Wd1T[d, i] + l2b[i] * Wd1T[d, H2 + i]
        if acc > 0.0:
            out += acc * Wd2[d]
    y = out * cap
    if y < 0.0:
        y = np.float32(0.0)
    if y > cap:
        y = cap
    return y


def _aligned(shape, dtype=f4, align: int = 64) -> np.ndarray:
    """Allocation with cache-line-aligned base: the recurrent matvec streams
    these arrays from L2 every step and pays ~25% for a misaligned base."""
    dtype = np.dtype(dtype)
    n = int(np.prod(shape))
    raw = np.empty(n * dtype.itemsize + align, np.uint8)
    ofs = (-raw.ctypes.data) % align
    return raw[ofs : ofs + n * dtype.itemsize].view(dtype).reshape(shape)


def _aligned_copy(values: np.ndarray) -> np.ndarray:
    out = _aligned(values.shape)
    out[:] = values
    return out


def _pack_gate_biases(bi: np.ndarray, br: np.ndarray):
    """(combined z/r bias + recurrent-only candidate bias, input candidate bias)."""
    h = len(bi) // 3
    bzr = np.concatenate([bi[: 2 * h] + br[: 2 * h], br[2 * h :]]).astype(f4)
    return _aligned_copy(bzr), _aligned_copy(bi[2 * h :].astype(f4))


class ServingEngine:
    """One engine per stream: the scratch buffers are reused across calls,
    so instances are not thread-safe. Models themselves stay immutable."""

    def __init__(self, model: TrainedModel):
        cfg = model.config
        if cfg.conv_stride != 1:
            raise ShapeMismatch("serving engine supports conv_stride 1 only")
        v = model.views()
        self.window = cfg.window
        self.cap = f4(model.target_scale)
        self.mean = f4(model.input_norm[0])
        self.std = f4(model.input_norm[1])
        T, F = cfg.window, cfg.conv_filters
        H1, H2, D = cfg.gru1_units, cfg.gru2_units, cfg.dense1_units
        self.Wc = _aligned_copy(v["conv_w"].astype(f4))
        self.bc = _aligned_copy(v["conv_b"].astype(f4))
        self.W1 = _aligned_copy(
            np.concatenate([v["gru1_fw_w"], v["gru1_bw_w"]], axis=1).astype(f4)
        )
        self.U1f = _aligned_copy(v["gru1_fw_u"].astype(f4))
        self.U1b = _aligned_copy(v["gru1_bw_u"].astype(f4))
        self.b1f, self.bh1f = _pack_gate_biases(v["gru1_fw_bi"], v["gru1_fw_br"])
        self.b1b, self.bh1b = _pack_gate_biases(v["gru1_bw_bi"], v["gru1_bw_br"])
        self.W2 = _aligned_copy(
            np.concatenate([v["gru2_fw_w"], v["gru2_bw_w"]], axis=1).astype(f4)
        )
        self.U2f = _aligned_copy(v["gru2_fw_u"].astype(f4))
        self.U2b = _aligned_copy(v["gru2_bw_u"].astype(f4))
        self.b2f, self.bh2f = _pack_gate_biases(v["gru2_fw_bi"], v["gru2_fw_br"])
        self.b2b, self.bh2b = _pack_gate_biases(v["gru2_bw_bi"], v["gru2_bw_br"])
        # transposed so the dense head reads contiguous rows
        self.Wd1T = _aligned_copy(v["dense1_w"].T.astype(f4))
        self.bd1 = _aligned_copy(v["dense1_b"].astype(f4))
        self.Wd2 = _aligned_copy(v["dense2_w"][:, 0].astype(f4))
        self.bd2 = f4(v["dense2_b"][0])
        self._xbuf = _aligned(T)
        self._conv = _aligned((T, F))
        self._xin1 = _aligned((T, 6 * H1))
        self._xin2 = _aligned((T, 6 * H2))
        self._s1 = _aligned((T, 2 * H1))
        self._l1f = _aligned(H1)
        self._l1b = _aligned(H1)
        self._l2f = _aligned(H2)
        self._l2b = _aligned(H2)
        m = 3 * max(H1, H2)
        self._rec = _aligned(m)
        self._act = _aligned(m)
        self._ibuf = _aligned(m, np.int32)
        self._dummy = np.empty((1, 1), f4)
        self._win = _aligned(T)
        self.predict(np.zeros(T))  # trigger JIT once at construction

    def predict(self, window_vals) -> float:
        w = self._win
        src = np.asarray(window_vals)
        if src.shape != (self.window,):
            raise ShapeMismatch(f"expected {self.window} values, got {src.shape}")
        w[:] = src
        return float(
            _forward_driver(
                w, self.mean, self.std, self.cap,
                self.Wc, self.bc,
                self.W1, self.U1f, self.U1b, self.b1f, self.b1b, self.bh1f, self.bh1b,
                self.W2, self.U2f, self.U2b, self.b2f, self.b2b, self.bh2f, self.bh2b,
                self.Wd1T, self.bd1, self.Wd2, self.bd2,
                self._xbuf, self._conv, self._xin1, self._xin2, self._s1,
                self._l1f, self._l1b, self._l2f, self._l2b,
                self._rec, self._act, self._ibuf, self._dummy,
            )
        )
