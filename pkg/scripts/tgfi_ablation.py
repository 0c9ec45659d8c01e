"""MAC cost of sparse (TGFI) versus dense interactions across resolutions."""

import argparse

from lwganet.accounting import count_macs
from lwganet.config import PUBLISHED_ABLATION_L0, VARIANTS, make_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS), choices=VARIANTS)
    ap.add_argument("--res", type=int, nargs="+", default=[224, 512, 1024])
    args = ap.parse_args()

    ref = PUBLISHED_ABLATION_L0["tgfi"] / PUBLISHED_ABLATION_L0["dense"]
    print(f"published L0 ratio at 224: {ref:.4f}")
    print(f"{'variant':<8}{'res':>6}{'sparse (G)':>12}{'dense (G)':>12}{'ratio':>8}")
    for v in args.variants:
        for r in args.res:
            sparse = count_macs(make_config(v), (r, r)).macs_total
            dense = count_macs(make_config(v, tgfi=False), (r, r)).macs_total
            print(f"{v:<8}{r:>6}{sparse / 1e9:>12.4f}{dense / 1e9:>12.4f}{sparse / dense:>8.4f}")


if __name__ == "__main__":
    main()
