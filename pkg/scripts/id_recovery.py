"""Recovery of known dimension for uniform hypercubes embedded in a larger space."""

import argparse
import time

import numpy as np

from imgcomplexity.intdim import estimate_id


def embedded_cube(n, d, ambient, rng):
    basis, _ = np.linalg.qr(rng.normal(size=(ambient, d)))
    return rng.uniform(size=(n, d)) @ basis.T


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="1,2,3,5,8,12,16")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--ambient", type=int, default=100)
    ap.add_argument("--k-range", default="10,20")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    k1, k2 = (int(v) for v in args.k_range.split(","))
    rng = np.random.default_rng(args.seed)

    print(f"{'d':>3s} {'pooled':>8s} {'rel_err':>8s} {'k1':>7s} {'k2':>7s} {'secs':>6s}")
    for d in (int(v) for v in args.dims.split(",")):
        x = embedded_cube(args.n, d, args.ambient, rng)
        t0 = time.perf_counter()
        est = estimate_id(x, k1, k2, threads=args.threads)
        secs = time.perf_counter() - t0
        print(f"{d:3d} {est.pooled:8.3f} {(est.pooled - d) / d:+8.3f} "
              f"{est.per_k[k1]:7.3f} {est.per_k[k2]:7.3f} {secs:6.2f}")


if __name__ == "__main__":
    main()
