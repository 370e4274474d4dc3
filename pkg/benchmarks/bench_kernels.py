"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--points 2000] [--repeat 20]

The kernel rows call both backends in-process through their ``use_numba``
argument. The last row times whole training epochs in two subprocesses, one of
them with PIKAN_DISABLE_NUMBA=1, since that flag is read at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from pikan import _accel, bspline, kernels

EPOCH_SNIPPET = """
import time
from pikan import approximator as ap, pde
from pikan.config import ExperimentConfig
from pikan.trainer import train
cfg = ExperimentConfig(problem="helmholtz", model="kan", widths=[2, 10, 10, 1], grid_size=10,
                       n_r={n}, epochs={e}, eval_every=10**6)
P = pde.get_problem("helmholtz")
net = ap.init_params(ap.build_network("kan", cfg.widths, 10, 4, P.lo, P.hi), 0)
train(P, net, cfg.__class__(**{{**cfg.to_dict(), "epochs": 1}}))
t = time.perf_counter()
train(P, net, cfg)
print((time.perf_counter() - t) / {e})
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def epoch_time(disable, points, epochs):
    env = dict(os.environ, PIKAN_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET.format(n=points, e=epochs)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is unavailable or disabled; nothing to compare")

    rng = np.random.default_rng(0)
    kv = bspline.make_knots(-1.0, 1.0, 10, 4)
    x = rng.uniform(-1, 1, args.points * 10)
    xs = rng.uniform(-1, 1, (6, args.points, 10))
    C = rng.normal(size=(10, 10, kv.n_basis))
    A = rng.normal(size=(10, 10))
    g = rng.normal(size=(6, args.points, 10))
    out = kernels._fwd(xs, C, A, kv, True)

    cases = {
        "basis table, 2 derivatives": lambda nb: bspline.basis_table(kv, x, 2, use_numba=nb),
        "KAN layer forward (jet)": lambda nb: kernels._fwd(xs, C, A, kv, nb),
        "KAN layer vjp (jet)": lambda nb: kernels._vjp(g, out, xs, C, A, kv, nb),
    }
    print(f"{'case':<30}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for name, fn in cases.items():
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:<30}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")

    t_np = epoch_time(True, args.points, args.epochs)
    t_nb = epoch_time(False, args.points, args.epochs)
    print(f"{'training epoch':<30}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
