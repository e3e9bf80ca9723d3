#!/usr/bin/env python3
"""Strong-scaling sweep of phase 1 + phase 2 on one generated matrix.

Thin wrapper over ``tilesel bench``; the defaults are the acceptance
configuration (n=20010, w=2000, t=10, b=120). Use ``--n`` etc. to shrink it.
"""

import argparse
import json
import os
import sys

from tilesel.cli import main as cli_main


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20010)
    ap.add_argument("--bandwidth", type=int, default=2000)
    ap.add_argument("--thickness", type=int, default=10)
    ap.add_argument("--density", type=float, default=0.1)
    ap.add_argument("--tile-size", type=int, default=120)
    ap.add_argument("--threads", default="1,2,4,8")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--out", default="bench_scaling.json")
    args = ap.parse_args(argv)

    rc = cli_main(["bench", "--n", str(args.n), "--bandwidth", str(args.bandwidth),
                   "--thickness", str(args.thickness), "--density", str(args.density),
                   "--tile-size", str(args.tile_size), "--threads", args.threads,
                   "--repeat", str(args.repeat), "--out", args.out])
    if rc:
        return rc
    doc = json.loads(open(args.out).read())
    print(f"cpu_count={os.cpu_count()}  n_tiles={doc['n_tiles']}  closure_tiles={doc['closure_tiles']}")
    print(f"{'threads':>8}{'median s':>11}{'speedup':>9}")
    for p in doc["points"]:
        print(f"{p['threads']:>8}{p['median_s']:>11.3f}{p['speedup']:>9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
