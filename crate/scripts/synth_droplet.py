#!/usr/bin/env python3
"""Generate the synthetic droplet fixture shipped in crates/fbst/data/droplet.csv.

The radius of an evaporating droplet follows r(t)^2 = r0^2 - k t. A noisy
mean fall velocity is simulated from Stokes' law, V = r^2 / Ks, and the
recorded radius is recovered from it as sqrt(Ks * V). Pictures are taken
every 0.5 s up to 7 s and the t = 0 frame is missing.
"""

import argparse
import math
import random

KS = 8.446


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=20240613)
    ap.add_argument("--r0", type=float, default=6.0)
    ap.add_argument("--k", type=float, default=3.0)
    ap.add_argument("--velocity-sd", type=float, default=0.05)
    ap.add_argument("--out", default="crates/fbst/data/droplet.csv")
    args = ap.parse_args()

    rng = random.Random(args.seed)
    rows = []
    for i in range(1, 15):
        t = 0.5 * i
        r2 = args.r0**2 - args.k * t
        v = round(r2 / KS + rng.gauss(0.0, args.velocity_sd), 4)
        radius = round(math.sqrt(KS * v), 4)
        rows.append((t, radius, v))

    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("t,radius,v_mean\n")
        for t, radius, v in rows:
            f.write(f"{t},{radius},{v}\n")


if __name__ == "__main__":
    main()
