"""Command line entry point: describe, init, infer, bench, selftest.

Exit codes: 0 success, 1 usage error, 2 data or manifest error, 3 selftest failure.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import weights_io
from .accounting import count_macs
from .backbone import Model, classify, param_specs
from .config import PUBLISHED, VARIANTS, make_config
from .selftest import run_selftest
from .tensor import threads

EXIT_USAGE, EXIT_DATA, EXIT_SELFTEST = 1, 2, 3


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("LWGA_THREADS")
    return int(env) if env else None


# ---------------------------------------------------------------------------
# input readers
# ---------------------------------------------------------------------------


def read_ppm(path) -> np.ndarray:
    """Binary P6, maxval <= 255, to a (1, 3, H, W) float32 tensor in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise DataError(f"{path}: not a binary P6 PPM")
    w, h, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 255:
        raise DataError(f"{path}: only 8-bit PPM is supported (maxval={maxval})")
    pixels = data[pos + 1 : pos + 1 + 3 * w * h]
    if len(pixels) != 3 * w * h:
        raise DataError(f"{path}: PPM payload truncated")
    img = np.frombuffer(pixels, np.uint8).reshape(h, w, 3).transpose(2, 0, 1)
    return (img.astype(np.float32) / np.float32(maxval))[None]


def write_ppm(path, img: np.ndarray) -> None:
    """Inverse of :func:`read_ppm` for a (1, 3, H, W) tensor in [0, 1]."""
    arr = np.clip(np.rint(np.asarray(img)[0].transpose(1, 2, 0) * 255), 0, 255).astype(np.uint8)
    h, w = arr.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + arr.tobytes())


def read_input(path) -> np.ndarray:
    path = Path(path)
    try:
        head = path.read_bytes()[:4]
    except OSError as exc:
        raise DataError(f"cannot read input {path}: {exc}") from exc
    if head == weights_io.MAGIC:
        store = weights_io.load(path)
        name = "input" if "input" in store else store.names()[0]
        x = np.array(store[name], np.float32)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != 3:
            raise DataError(f"{path}: tensor {name!r} must be 3xHxW or Nx3xHxW, got {x.shape}")
        return x
    if head[:2] == b"P6":
        return read_ppm(path)
    raise DataError(f"{path}: unrecognised input format (expected P6 PPM or .lwga container)")


def _load_model(args) -> Model:
    cfg = make_config(args.variant, tgfi=not getattr(args, "no_tgfi", False))
    if getattr(args, "weights", None):
        store = weights_io.load(args.weights)
        weights_io.check_manifest(store, param_specs(cfg))
        return Model(cfg, store)
    return Model.seeded(cfg, args.seed)


def _emit(lines: dict, fmt: str) -> None:
    if fmt == "kv":
        sys.stdout.write("".join(f"{k}={v}\n" for k, v in lines.items()))
    else:
        w = max(len(k) for k in lines)
        sys.stdout.write("".join(f"{k:<{w}}  {v}\n" for k, v in lines.items()))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_describe(args) -> int:
    cfg = make_config(args.variant)
    rep = count_macs(cfg, (args.res, args.res))
    pub_p, pub_m = PUBLISHED[cfg.variant]
    if args.format == "text":
        print(f"LWGANet-{cfg.variant}  (input {args.res}x{args.res})")
        print(f"{'stage':<6}{'channels':>9}{'blocks':>8}{'feature map':>14}{'stride':>8}")
        for st in cfg.stages:
            side = args.res // st.stride
            print(f"{st.index:<6}{st.channels:>9}{st.blocks:>8}{f'{side}x{side}':>14}{st.stride:>8}")
    lines = {
        "variant": cfg.variant,
        "stem_channels": cfg.stem_channels,
        "channels": cfg.channels,
        "blocks": cfg.block_counts,
        "sma_window": [st.sma_window for st in cfg.stages],
        "activation": cfg.activation,
        "dropout": cfg.dropout,
        "cmlp_ratio": cfg.cmlp_ratio,
        "params_total": rep.params_total,
        "params_published": int(pub_p),
        "params_delta_pct": f"{100 * (rep.params_total / pub_p - 1):+.2f}",
        "macs_total": rep.macs_total,
        "flops_2x_total": rep.flops_total,
    }
    if args.res == 224:
        lines["macs_published"] = int(pub_m)
        lines["macs_delta_pct"] = f"{100 * (rep.macs_total / pub_m - 1):+.2f}"
    _emit(lines, args.format)
    if args.rows:
        sys.stdout.write(rep.to_text() if args.format == "text" else rep.to_kv(rows=True))
    return 0


def cmd_init(args) -> int:
    store = weights_io.init_seeded(make_config(args.variant), args.seed)
    weights_io.save(store, args.out)
    print(f"wrote {len(store)} tensors to {args.out} (sha256 {store.digest()})")
    return 0


def cmd_infer(args) -> int:
    model = _load_model(args)
    x = read_input(args.input)
    with threads(_threads(args)):
        logits = classify(x, model)
    n, _, h, w = x.shape
    ph, pw = Model.padded_dims(h, w)
    lines = {"variant": args.variant, "input": f"{n}x3x{h}x{w}", "padded": f"{ph}x{pw}"}
    for b in range(n):
        order = np.argsort(-logits[b], kind="stable")[: args.topk]
        lines[f"top{args.topk}.{b}"] = ",".join(str(int(i)) for i in order)
        for i, v in enumerate(logits[b]):
            lines[f"logit.{b}.{i}"] = repr(float(v))
    _emit(lines, args.format)
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args)
    rng = np.random.default_rng(args.seed)
    x = rng.random((1, 3, args.res, args.res), dtype=np.float32)
    times = []
    with threads(_threads(args)):
        for _ in range(args.warmup):
            classify(x, model)
        for _ in range(max(1, args.iterations)):
            t0 = time.perf_counter()
            classify(x, model)
            times.append(time.perf_counter() - t0)
    rep = count_macs(model.config, (args.res, args.res))
    mean = statistics.fmean(times)
    _emit(
        {
            "variant": args.variant,
            "res": args.res,
            "tgfi": model.config.tgfi,
            "iterations": len(times),
            "threads": _threads(args) or "default",
            "latency_mean_ms": f"{1e3 * mean:.3f}",
            "latency_median_ms": f"{1e3 * statistics.median(times):.3f}",
            "images_per_sec": f"{1.0 / mean:.2f}",
            "macs_total": rep.macs_total,
            "macs_g": f"{rep.macs_total / 1e9:.4f}",
            "params_total": rep.params_total,
        },
        args.format,
    )
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(fault=args.inject_fault)
    failed = 0
    for name, ok, detail, secs in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} {secs:6.2f}s  {detail}")
        failed += not ok
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return EXIT_SELFTEST if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lwganet", description="LWGANet inference engine and cost accounting")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, variant=True):
        if variant:
            p.add_argument("--variant", required=True, choices=VARIANTS)
        p.add_argument("--format", choices=("text", "kv"), default="kv")

    p = sub.add_parser("describe", help="architecture table and cost report")
    common(p)
    p.set_defaults(format="text")
    p.add_argument("--res", type=int, default=224)
    p.add_argument("--rows", action="store_true", help="include the per-layer table")
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("init", help="write seeded weights to a .lwga file")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True)
    p.set_defaults(fn=cmd_init)

    for name, fn in (("infer", cmd_infer), ("bench", cmd_bench)):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--weights", help=".lwga weight file (default: seeded init)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
        p.set_defaults(fn=fn)
    infer, bench = sub.choices["infer"], sub.choices["bench"]
    infer.add_argument("--input", required=True, help="P6 PPM image or .lwga tensor container")
    infer.add_argument("--topk", type=int, default=5)
    bench.add_argument("--res", type=int, default=224)
    bench.add_argument("--iterations", type=int, default=10)
    bench.add_argument("--warmup", type=int, default=1)
    bench.add_argument("--no-tgfi", action="store_true", help="dense interactions instead of sparse sampling")

    p = sub.add_parser("selftest", help="run the oracle suites")
    p.add_argument("--inject-fault", choices=("conv2d",), default=None, help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DataError, weights_io.WeightFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
