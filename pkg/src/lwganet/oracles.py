"""Slow, literal reference implementations.

Each function here is written as plain loops in float64 and shares no code
with the fast kernels it checks. Used by the test-suite and ``selftest``.
"""

from __future__ import annotations

import math

import numpy as np

# four line directions as (dy, dx): vertical, main diagonal, horizontal, anti-diagonal
DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 1))


def naive_conv2d(x, w, b, stride=1, padding=0, dilation=1, groups=1):
    x = np.asarray(x, np.float64)
    w = np.asarray(w, np.float64)
    n, cin, h, wd = x.shape
    cout, cin_g, kh, kw = w.shape
    cout_g = cout // groups
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (wd + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((n, cout, oh, ow))
    for bi in range(n):
        for oc in range(cout):
            g = oc // cout_g
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0 if b is None else float(b[oc])
                    for ic in range(cin_g):
                        for ky in range(kh):
                            iy = oy * stride - padding + ky * dilation
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * stride - padding + kx * dilation
                                if 0 <= ix < wd:
                                    acc += x[bi, g * cin_g + ic, iy, ix] * w[oc, ic, ky, kx]
                    out[bi, oc, oy, ox] = acc
    return out


def naive_attention(tokens, heads, wq, wk, wv, wo):
    x = np.asarray(tokens, np.float64)
    n, t, d = x.shape
    dh = d // heads
    wq, wk, wv, wo = (np.asarray(m, np.float64) for m in (wq, wk, wv, wo))
    out = np.zeros((n, t, d))
    for bi in range(n):
        q = [[sum(wq[o, i] * x[bi, r, i] for i in range(d)) for o in range(d)] for r in range(t)]
        k = [[sum(wk[o, i] * x[bi, r, i] for i in range(d)) for o in range(d)] for r in range(t)]
        v = [[sum(wv[o, i] * x[bi, r, i] for i in range(d)) for o in range(d)] for r in range(t)]
        ctx = np.zeros((t, d))
        for hd in range(heads):
            sl = range(hd * dh, (hd + 1) * dh)
            for r in range(t):
                scores = [sum(q[r][j] * k[s][j] for j in sl) / math.sqrt(dh) for s in range(t)]
                m = max(scores)
                e = [math.exp(sc - m) for sc in scores]
                z = sum(e)
                for j in sl:
                    ctx[r, j] = sum(e[s] / z * v[s][j] for s in range(t))
        for r in range(t):
            for o in range(d):
                out[bi, r, o] = sum(wo[o, i] * ctx[r, i] for i in range(d))
    return out


def naive_line_attention(x, alpha):
    """Four directional line sums with per-(direction, offset, channel) weights.

    ``alpha`` has shape (4, L, C); offset index ``k`` means displacement
    ``k - (L-1)//2`` along the direction. Out-of-range taps read zero.
    """
    x = np.asarray(x, np.float64)
    alpha = np.asarray(alpha, np.float64)
    n, c, h, w = x.shape
    L = alpha.shape[1]
    half = (L - 1) // 2
    out = np.zeros_like(x)
    for bi in range(n):
        for ch in range(c):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for di, (dy, dx) in enumerate(DIRECTIONS):
                        for step in range(-half, half + 1):
                            y, xx = i + step * dy, j + step * dx
                            if 0 <= y < h and 0 <= xx < w:
                                acc += alpha[di, step + half, ch] * x[bi, ch, y, xx]
                    out[bi, ch, i, j] = acc
    return out


def brute_force_topk(score, region):
    """Per region, coordinate of the largest score (first in row-major order on ties)."""
    score = np.asarray(score)
    n, h, w = score.shape
    rh, rw = region
    gh, gw = -(-h // rh), -(-w // rw)
    coords = np.zeros((n, gh, gw, 2), dtype=np.int64)
    for bi in range(n):
        for gi in range(gh):
            for gj in range(gw):
                best = None
                for y in range(gi * rh, min((gi + 1) * rh, h)):
                    for x in range(gj * rw, min((gj + 1) * rw, w)):
                        if best is None or score[bi, y, x] > score[bi, best[0], best[1]]:
                            best = (y, x)
                coords[bi, gi, gj] = best
    return coords


def naive_bilinear(x, out_h, out_w):
    x = np.asarray(x, np.float64)
    n, c, h, w = x.shape
    out = np.zeros((n, c, out_h, out_w))
    for oy in range(out_h):
        sy = min(max((oy + 0.5) * h / out_h - 0.5, 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        ly = sy - y0
        for ox in range(out_w):
            sx = min(max((ox + 0.5) * w / out_w - 0.5, 0.0), w - 1)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            lx = sx - x0
            out[:, :, oy, ox] = (
                (1 - ly) * (1 - lx) * x[:, :, y0, x0]
                + (1 - ly) * lx * x[:, :, y0, x1]
                + ly * (1 - lx) * x[:, :, y1, x0]
                + ly * lx * x[:, :, y1, x1]
            )
    return out


def naive_bn(x, gamma, beta, mean, var, eps):
    x = np.asarray(x, np.float64)
    out = np.empty_like(x)
    for ch in range(x.shape[1]):
        out[:, ch] = gamma[ch] * (x[:, ch] - mean[ch]) / math.sqrt(var[ch] + eps) + beta[ch]
    return out


def naive_gelu(x):
    return np.vectorize(lambda v: 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0))))(np.asarray(x, np.float64))
