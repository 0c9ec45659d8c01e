"""Parameter and MAC totals for every variant next to the published figures."""

import argparse

from lwganet.accounting import count_macs
from lwganet.config import PUBLISHED, VARIANTS, make_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--res", type=int, default=224)
    ap.add_argument("--by-kind", action="store_true", help="break totals down by layer kind")
    args = ap.parse_args()

    print(f"{'variant':<8}{'params':>12}{'published':>12}{'delta':>9}{'MACs (G)':>11}{'published':>11}{'delta':>9}")
    for v in VARIANTS:
        rep = count_macs(make_config(v), (args.res, args.res))
        pp, pm = PUBLISHED[v]
        mac_pub = f"{pm / 1e9:>11.3f}" if args.res == 224 else f"{'-':>11}"
        mac_dev = f"{rep.macs_total / pm - 1:>+9.2%}" if args.res == 224 else f"{'-':>9}"
        print(
            f"{v:<8}{rep.params_total:>12,}{int(pp):>12,}{rep.params_total / pp - 1:>+9.2%}"
            f"{rep.macs_total / 1e9:>11.4f}{mac_pub}{mac_dev}"
        )
        if args.by_kind:
            for kind, (p, m) in sorted(rep.by_kind().items()):
                print(f"  {kind:<16}{p:>12,}{m / 1e6:>12.2f}M")


if __name__ == "__main__":
    main()
