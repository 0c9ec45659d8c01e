"""Oracle suites runnable outside pytest (``lwganet selftest``)."""

from __future__ import annotations

import itertools
import time
from typing import Callable

import numpy as np

from . import oracles, tgfi
from .lwga import GPAWeights, SGAWeights, SMAWeights, gpa_forward, sga_forward, sma_attention
from .tensor import BNParams, ConvSpec, conv2d, mhsa

# stride, padding, dilation, groups; 36 combinations
CONV_GRID = list(itertools.product((1, 2), (0, 1, 2), (1, 2), (1, 2, 4)))


def faulty_conv2d(x, w, b, spec):
    out = conv2d(x, w, b, spec)
    out.flat[0] += 1.0
    return out


def check_conv(conv=conv2d, seed=0, tol=1e-5) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for stride, pad, dil, groups in CONV_GRID:
        cin, cout = 8, 8
        k = 3
        x = rng.standard_normal((2, cin, 12, 12)).astype(np.float32)
        w = rng.standard_normal((cout, cin // groups, k, k)).astype(np.float32) * 0.3
        b = rng.standard_normal(cout).astype(np.float32)
        got = conv(x, w, b, ConvSpec(cin, cout, (k, k), stride, pad, dil, groups))
        ref = oracles.naive_conv2d(x, w, b, stride, pad, dil, groups)
        if got.shape != ref.shape:
            return False, f"shape {got.shape} != {ref.shape} for s={stride} p={pad} d={dil} g={groups}"
        err = float(np.max(np.abs(got - ref)))
        worst = max(worst, err)
        if err > tol:
            return False, f"max error {err:.2e} for s={stride} p={pad} d={dil} g={groups}"
    return True, f"{len(CONV_GRID)} configs, max error {worst:.1e}"


def check_attention(seed=0, tol=1e-5) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, d, heads in ((3, 2, 1), (5, 8, 4), (7, 8, 2)):
        x = rng.standard_normal((2, t, d)).astype(np.float32)
        ws = [rng.standard_normal((d, d)).astype(np.float32) * 0.5 for _ in range(4)]
        err = float(np.max(np.abs(mhsa(x, heads, *ws) - oracles.naive_attention(x, heads, *ws))))
        worst = max(worst, err)
        if err > tol:
            return False, f"max error {err:.2e} at t={t} d={d} heads={heads}"
    return True, f"max error {worst:.1e}"


def check_line_attention(seed=0, tol=1e-5) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for h, w in ((7, 7), (11, 11), (4, 9)):
        x = rng.standard_normal((1, 3, h, w)).astype(np.float32)
        alpha = rng.standard_normal((4, 11, 3)).astype(np.float32) * 0.2
        err = float(np.max(np.abs(sma_attention(x, SMAWeights(alpha)) - oracles.naive_line_attention(x, alpha))))
        worst = max(worst, err)
        if err > tol:
            return False, f"max error {err:.2e} on {h}x{w}"
    return True, f"max error {worst:.1e}"


def check_topk(seed=0, maps=200) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for i in range(maps):
        h, w = rng.integers(1, 9, size=2)
        region = (2, 2) if i % 2 else (3, 3)
        x = rng.standard_normal((1, 3, h, w)).astype(np.float32)
        s = tgfi.sample(x, tgfi.RegionGrid.for_tensor(x, region))
        ref = oracles.brute_force_topk(np.abs(x).sum(axis=1, dtype=np.float32), region)
        if not np.array_equal(s.p_loc, ref):
            return False, f"map {i} ({h}x{w}, region {region}) selected {s.p_loc.tolist()} != {ref.tolist()}"
    return True, f"{maps} maps"


def check_tgfi_roundtrip(seed=0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    for h, w, region in ((8, 8, (2, 2)), (9, 7, (3, 3)), (5, 5, (3, 3))):
        x = rng.standard_normal((2, 4, h, w)).astype(np.float32)
        s = tgfi.sample(x, tgfi.RegionGrid.for_tensor(x, region))
        interacted = rng.standard_normal(s.values.shape).astype(np.float32)
        out = tgfi.restore(s, interacted)
        for bi in range(2):
            for gi in range(s.p_loc.shape[1]):
                for gj in range(s.p_loc.shape[2]):
                    y, xx = s.p_loc[bi, gi, gj]
                    if not np.array_equal(out[bi, :, y, xx], interacted[bi, :, gi, gj]):
                        return False, f"restore mismatch at {(bi, y, xx)}"
                    if not np.array_equal(s.values[bi, :, gi, gj], x[bi, :, y, xx]):
                        return False, f"sample mismatch at {(bi, y, xx)}"
    const = np.full((1, 2, 6, 6), 3.0, np.float32)
    s = tgfi.sample(const, tgfi.RegionGrid.for_tensor(const, (3, 3)))
    if s.p_loc[0].tolist() != [[[0, 0], [0, 3]], [[3, 0], [3, 3]]]:
        return False, "constant input did not select region top-left corners"
    return True, "scatter exact, tie-break top-left"


def check_identities(seed=0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 4, 6, 6)).astype(np.float32)
    gpa = GPAWeights(
        np.zeros((16, 4, 1, 1), np.float32), np.zeros(16, np.float32), BNParams.identity(16),
        np.zeros((4, 16, 1, 1), np.float32), np.zeros(4, np.float32),
    )
    if np.max(np.abs(gpa_forward(x, gpa) - 1.5 * x)) > 1e-6:
        return False, "GPA zero-weight case != 1.5x"
    g5, d7 = SGAWeights.conv_layout(4)
    sga = SGAWeights(
        1, BNParams.identity(4),
        conv5_w=np.zeros(g5.weight_shape, np.float32), conv5_b=np.zeros(4, np.float32),
        conv7_w=np.zeros(d7.weight_shape, np.float32), conv7_b=np.zeros(4, np.float32),
    )
    if not np.array_equal(sga_forward(x, sga, 1), x):
        return False, "SGA stage-1 zero proxy is not the identity"
    return True, "GPA 1.5x, SGA zero-proxy identity"


def run_selftest(fault: str | None = None) -> list[tuple[str, bool, str, float]]:
    conv = faulty_conv2d if fault == "conv2d" else conv2d
    suites: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
        ("conv2d_vs_naive", lambda: check_conv(conv)),
        ("mhsa_vs_naive", check_attention),
        ("line_attention_vs_loop", check_line_attention),
        ("topk_vs_brute_force", check_topk),
        ("tgfi_roundtrip", check_tgfi_roundtrip),
        ("analytic_identities", check_identities),
    ]
    results = []
    for name, fn in suites:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing suite is a failing suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail, time.perf_counter() - t0))
    return results
