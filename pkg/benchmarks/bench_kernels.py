"""Time the numba and numpy flavours of every hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Both flavours are imported directly, so the TOPICAST_DISABLE_NUMBA flag does
not matter here. The first numba call (compilation or cache load) is excluded.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from topicast import kernels


def _gibbs_inputs(rng, n_tokens=20000, n_docs=2000, k=16, V=320):
    words = rng.integers(0, V, n_tokens).astype(np.int64)
    docs = np.sort(rng.integers(0, n_docs, n_tokens)).astype(np.int64)
    z = rng.integers(0, k, n_tokens).astype(np.int64)
    ndk = np.zeros((n_docs, k), np.int64)
    nkw = np.zeros((k, V), np.int64)
    nk = np.zeros(k, np.int64)
    np.add.at(ndk, (docs, z), 1)
    np.add.at(nkw, (z, words), 1)
    np.add.at(nk, z, 1)
    alpha, beta = 50.0 / k, 0.01
    u = rng.random(n_tokens)

    def args():
        return (words, docs, z.copy(), ndk.copy(), nkw.copy(), nk.copy(), alpha, beta, V * beta, u)

    return args


def _fold_inputs(rng, n=8, k=16, V=320, iters=50):
    words = rng.integers(0, V, n).astype(np.int64)
    phi = rng.dirichlet(np.ones(V), size=k)
    z = rng.integers(0, k, n).astype(np.int64)
    u = rng.random((iters, n))
    return lambda: (words, phi, 50.0 / k, z.copy(), u, iters // 2)


def _conv_inputs(rng, n=192, cin=16, cout=16, hw=(4, 4), f=2, local=False):
    x = rng.standard_normal((n, cin) + hw)
    ro, co = hw[0] - f + 1, hw[1] - f + 1
    if local:
        w = rng.standard_normal((ro * co, cout, cin, f, f))
        b = rng.standard_normal((ro * co, cout))
    else:
        w = rng.standard_normal((cout, cin, f, f))
        b = rng.standard_normal(cout)
    dy = rng.standard_normal((n, cout, ro, co))
    return (lambda: (x, w, b)), (lambda: (x, w, dy))


def _time(fn, make_args, repeat):
    fn(*make_args())  # warm-up / compile
    best = float("inf")
    for _ in range(repeat):
        args = make_args()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat: int = 5, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    conv_f, conv_b = _conv_inputs(rng)
    loc_f, loc_b = _conv_inputs(rng, local=True)
    cases = {
        "gibbs_sweep": _gibbs_inputs(rng),
        "fold_in": _fold_inputs(rng),
        "conv_forward": conv_f,
        "conv_backward": conv_b,
        "local_forward": loc_f,
        "local_backward": loc_b,
    }
    rows = []
    for name, make_args in cases.items():
        t_nb = _time(kernels.NUMBA_KERNELS[name], make_args, repeat)
        t_np = _time(kernels.NUMPY_KERNELS[name], make_args, repeat)
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb})
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results to this file")
    a = ap.parse_args(argv)
    rows = run(a.repeat, a.seed)
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<16}{1e3 * r['numba_s']:>12.3f}{1e3 * r['numpy_s']:>12.3f}{r['speedup']:>9.1f}x")
    if a.json:
        with open(a.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
