"""Wall-clock timings of the filters at the default windows on square scenes."""

import argparse
import time

import numba

from polgnlm.baselines import boxcar_filter
from polgnlm.core import HermitianCov3
from polgnlm.pgnlm import pgnlm_filter
from polgnlm.simulate import generate_scene, homogeneous_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    sigma = HermitianCov3(1.0, 0.35, 1.0, 0, 0.15, 0)
    slc, opt, _ = generate_scene(homogeneous_scene(sigma, 16, 16))
    pgnlm_filter(slc, opt)  # jit warm-up
    for n in args.sizes:
        slc, opt, _ = generate_scene(homogeneous_scene(sigma, n, n, seed=n))
        t = time.perf_counter()
        boxcar_filter(slc, 5)
        tb = time.perf_counter() - t
        t = time.perf_counter()
        pgnlm_filter(slc, opt, threads=args.threads)
        tp = time.perf_counter() - t
        print(f"{n}x{n}: boxcar {tb:.3f} s, pgnlm {tp:.3f} s "
              f"({numba.get_num_threads()} threads)", flush=True)


if __name__ == "__main__":
    main()
