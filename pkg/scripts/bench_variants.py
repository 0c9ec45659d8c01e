"""Wall-clock latency of the NumPy forward pass for each variant.

Numbers describe this machine and this implementation only.
"""

import argparse
import statistics
import time

import numpy as np

from lwganet.backbone import Model, classify
from lwganet.config import VARIANTS, make_config
from lwganet.tensor import threads


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--res", type=int, default=224)
    ap.add_argument("--iterations", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--dense", action="store_true", help="disable TGFI sampling")
    args = ap.parse_args()

    x = np.random.default_rng(0).random((1, 3, args.res, args.res), dtype=np.float32)
    print(f"{'variant':<8}{'median ms':>11}{'img/s':>9}")
    with threads(args.threads):
        for v in VARIANTS:
            model = Model.seeded(make_config(v, tgfi=not args.dense), 0)
            classify(x, model)
            times = []
            for _ in range(args.iterations):
                t0 = time.perf_counter()
                classify(x, model)
                times.append(time.perf_counter() - t0)
            med = statistics.median(times)
            print(f"{v:<8}{1e3 * med:>11.1f}{1 / med:>9.2f}")


if __name__ == "__main__":
    main()
