"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once (so numba compile time is excluded), then timed
as the best of ``--repeat`` runs. Outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from dream.kernels import numba_impl, numpy_impl


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    n, nnz, d = 20_000, 400_000, 64
    row = rng.integers(0, n, nnz)
    col = rng.integers(0, n, nnz)
    keys = np.unique(row * n + col)
    row, col = keys // n, keys % n
    val = rng.random(len(keys)).astype(np.float32)
    dense = rng.normal(size=(n, d)).astype(np.float32)
    yield "spmm 20k x 20k, 400k nnz, d=64", "spmm_coo", (row, col, val, dense, n)

    scores = rng.normal(size=(2048, 10_000))
    yield "topk 2048 x 10k, k=20", "topk_rows", (scores, 20)

    n_users, n_items = 5_000, 8_000
    pairs = np.unique(np.stack([rng.integers(0, n_users, 200_000),
                                rng.integers(0, n_items, 200_000)], 1), axis=0)
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    np.add.at(indptr, pairs[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    q = 500_000
    yield ("membership 500k queries, 200k pairs", "pair_membership",
           (rng.integers(0, n_users, q), rng.integers(0, n_items, q), indptr, pairs[:, 1].copy()))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<38} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, name, params in cases(rng):
        a = getattr(numpy_impl, name)(*params)
        b = getattr(numba_impl, name)(*params)
        if a.dtype == bool or a.dtype.kind == "i":
            assert np.array_equal(a, b), name
        else:
            assert np.allclose(a, b, atol=1e-4), name
        t_np = _best(lambda: getattr(numpy_impl, name)(*params), args.repeat)
        t_nb = _best(lambda: getattr(numba_impl, name)(*params), args.repeat)
        print(f"{label:<38} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
