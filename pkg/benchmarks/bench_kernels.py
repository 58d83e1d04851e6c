"""Wall-clock comparison of the numba and numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 256]

Each kernel is warmed up once per backend (numba compiles on first call, or
loads from its cache) and then timed up to ``--repeat`` times, fewer once a
kernel has used five seconds.  The best time is reported, along with the
largest difference between the two results.
"""
import argparse
import time

import numpy as np

from mcflab import _accel
from mcflab.kernels import advance, gaussian_batch, mcf_update, redistance


def _blob(shape, h):
    X = np.stack(np.meshgrid(*[h * (np.arange(n) - n / 2 + 0.5) for n in shape], indexing="ij"), -1)
    return np.sqrt(np.sum(X * X, axis=-1)) - 0.6


def _cases(size):
    h2 = 2.0 / size
    phi2 = _blob((size, size), h2)
    n3 = max(size // 4, 16)
    h3 = 2.0 / n3
    phi3 = _blob((n3, n3, n3), h3)
    dt2 = 0.1 * h2 * h2
    inside = (phi2 < 0).ravel()

    def adv():
        u = np.zeros(phi2.size)
        reached = np.zeros(phi2.size, dtype=bool)
        return advance(phi2.copy(), u, reached, inside, 0.0, dt2, 20, h2, 1e-12 * h2 * h2, 8 * h2)[0]

    rng = np.random.default_rng(0)
    cent = rng.normal(size=(20000, 3))
    area = rng.random(20000)
    centers = rng.normal(size=(64, 3))
    lams = rng.random(64) + 0.1
    return {
        f"mcf_update 2-D {size}^2": lambda: mcf_update(phi2, h2, dt2, 1e-12, 8 * h2),
        f"mcf_update 3-D {n3}^3": lambda: mcf_update(phi3, h3, 0.1 * h3 * h3, 1e-12, 8 * h3),
        f"advance 2-D {size}^2 x20": adv,
        f"redistance 2-D {size}^2": lambda: redistance(1.5 * phi2, h2, 8 * h2, 1e-10)[0],
        f"redistance 3-D {n3}^3": lambda: redistance(1.5 * phi3, h3, 8 * h3, 1e-10)[0],
        "gaussian_batch 20000 x 64": lambda: gaussian_batch(cent, area, centers, lams, 2),
    }


def _best(fn, repeat, budget=5.0):
    out = fn()
    best = float("inf")
    spent = 0.0
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        dt = time.perf_counter() - t0
        best = min(best, dt)
        spent += dt
        if spent > budget:  # slow numpy fallbacks: one timed call is enough
            break
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=256, help="2-D grid cells per axis (3-D uses size/4)")
    args = ap.parse_args(argv)
    prev = _accel.backend()
    print(f"{'kernel':28s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s} {'max diff':>10s}")
    try:
        for name, fn in _cases(args.size).items():
            _accel.set_backend("numba")
            t_nb, a = _best(fn, args.repeat)
            _accel.set_backend("numpy")
            t_np, b = _best(fn, args.repeat)
            fin = np.isfinite(a) & np.isfinite(b)
            diff = float(np.max(np.abs(a[fin] - b[fin]))) if fin.any() else 0.0
            print(f"{name:28s} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:7.1f}x {diff:10.2e}")
    finally:
        _accel.set_backend(prev)


if __name__ == "__main__":
    main()
