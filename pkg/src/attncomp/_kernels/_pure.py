"""Numpy implementations of the hot kernels.

This is the fallback backend; attncomp._kernels._core provides the same
functions as a compiled extension.  The raw PCG stream is bit-identical
between backends (integer arithmetic only).  Gaussian generation and the
attention kernels invoke transcendental functions, so the two backends may
differ in the last few ulps; tests compare them at 1e-12 relative.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"

# PCG-XSH-RR with 64-bit state and 32-bit output.
_PCG_MULT = 0x5851F42D4C957F2D
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Per-block jump tables for the vectorized LCG: state_k = A[k]*s0 + C[k].
_BLOCK = 4096


def _jump_tables(inc: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.empty(_BLOCK + 1, dtype=np.uint64)
    c = np.empty(_BLOCK + 1, dtype=np.uint64)
    ak, ck = 1, 0
    for k in range(_BLOCK + 1):
        a[k] = ak
        c[k] = ck
        ak = (ak * _PCG_MULT) & _MASK64
        ck = (ck * _PCG_MULT + inc) & _MASK64
    return a, c


_JUMP_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def pcg_raw32(state: int, inc: int, count: int) -> tuple[np.ndarray, int]:
    """Produce `count` 32-bit outputs; returns (values, advanced state)."""
    if inc not in _JUMP_CACHE:
        if len(_JUMP_CACHE) > 64:
            _JUMP_CACHE.clear()
        _JUMP_CACHE[inc] = _jump_tables(inc)
    a_tab, c_tab = _JUMP_CACHE[inc]

    out = np.empty(count, dtype=np.uint32)
    filled = 0
    s = state
    while filled < count:
        take = min(_BLOCK, count - filled)
        states = a_tab[:take] * np.uint64(s) + c_tab[:take]
        xorshifted = (((states >> np.uint64(18)) ^ states) >> np.uint64(27)).astype(
            np.uint32
        )
        rot = (states >> np.uint64(59)).astype(np.uint32)
        out[filled : filled + take] = (xorshifted >> rot) | (
            xorshifted << ((np.uint32(32) - rot) & np.uint32(31))
        )
        s = (int(a_tab[take]) * s + int(c_tab[take])) & _MASK64
        filled += take
    return out, s


def pcg_uniforms(state: int, inc: int, count: int) -> tuple[np.ndarray, int]:
    """Doubles in [0, 1) with 53-bit resolution; two 32-bit draws each."""
    raw, state = pcg_raw32(state, inc, 2 * count)
    raw = raw.astype(np.uint64)
    hi64 = (raw[0::2] << np.uint64(32)) | raw[1::2]
    return (hi64 >> np.uint64(11)).astype(np.float64) * 2.0**-53, state


def pcg_gaussians(state: int, inc: int, count: int) -> tuple[np.ndarray, int]:
    """Standard normals via Box-Muller over consecutive uniform pairs.

    Each pair of outputs consumes two uniforms (four 32-bit draws); for odd
    `count` the trailing sine value of the final pair is discarded.
    """
    pairs = (count + 1) // 2
    u, state = pcg_uniforms(state, inc, 2 * pairs)
    # radius draw shifted into (0, 1] so log() stays finite
    u1 = u[0::2] + 2.0**-53
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count], state


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def attention_forward(
    x_q: np.ndarray, x_c: np.ndarray, w_q: np.ndarray, w_k: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product attention weights, averaged over heads.

    x_q: (m, d_model), x_c: (n, d_model), w_q/w_k: (H, d_model, d_a).
    Returns (A, probs) where probs is the (H, m, n) per-head softmax stack
    and A its head mean.  Softmax rows are max-shifted for stability.
    """
    d_a = w_q.shape[2]
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.einsum("md,hdk->hmk", x_q, w_q)
        k = np.einsum("nd,hdk->hnk", x_c, w_k)
        logits = np.einsum("hmk,hnk->hmn", q, k) / np.sqrt(d_a)
        logits -= logits.max(axis=2, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=2, keepdims=True)
    return probs.mean(axis=0), probs


def attention_backward(
    x_q: np.ndarray,
    x_c: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    probs: np.ndarray,
    col_grads: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of a column-aggregated loss w.r.t. the projection weights.

    col_grads[j] is dL/d(segment score of the segment owning column j); the
    chain back through the (1/m)-row average, the head mean, the row softmax
    and the projections is applied here.  Returns (dW_q, dW_k).
    """
    h_count = w_q.shape[0]
    m = x_q.shape[0]
    d_a = w_q.shape[2]
    scale = np.sqrt(d_a)

    q = np.einsum("md,hdk->hmk", x_q, w_q)
    k = np.einsum("nd,hdk->hnk", x_c, w_k)

    g_row = col_grads / (m * h_count)  # dL/dP[h,i,:], identical for all h,i
    dot = np.einsum("hmn,n->hm", probs, g_row)
    g_logits = probs * (g_row[None, None, :] - dot[:, :, None])

    g_q = np.einsum("hmn,hnk->hmk", g_logits, k) / scale
    g_k = np.einsum("hmn,hmk->hnk", g_logits, q) / scale
    d_wq = np.einsum("md,hmk->hdk", x_q, g_q)
    d_wk = np.einsum("nd,hnk->hdk", x_c, g_k)
    return d_wq, d_wk
