"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--docs 200] [--repeat 3]
"""
import argparse
import random
import time

import numpy as np

from corpusprep import _kernels_py

try:
    from corpusprep import _kernels as _ext
except ImportError:
    _ext = None

P61 = (1 << 61) - 1


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def minhash_case(n_docs, shingles_per_doc, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.integers(1, P61, size=128, dtype=np.uint64)
    b = rng.integers(0, P61, size=128, dtype=np.uint64)
    flat = rng.integers(0, 2**64 - 1, size=n_docs * shingles_per_doc, dtype=np.uint64)
    offsets = np.arange(0, len(flat) + 1, shingles_per_doc, dtype=np.int64)
    return flat, offsets, a, b


def bpe_case(n_pieces, seed=0):
    rng = random.Random(seed)
    # the kernel only sees ids, so merges may pair any earlier token with a letter
    merges = []
    for new_id in range(256, 556):
        left = rng.randrange(97, 107) if rng.random() < 0.6 or new_id == 256 else rng.randrange(256, new_id)
        merges.append((left, rng.randrange(97, 107), new_id))
    ranks = {}
    for i, (l, r, m) in enumerate(merges):
        ranks.setdefault((l << 32) | r, (i << 32) | m)
    pieces = [[rng.randrange(97, 107) for _ in range(rng.randint(2, 40))] for _ in range(n_pieces)]
    return pieces, ranks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=200)
    ap.add_argument("--shingles", type=int, default=200)
    ap.add_argument("--pieces", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    impls = [("python", _kernels_py)] + ([("cython", _ext)] if _ext is not None else [])
    if _ext is None:
        print("compiled extension not built; timing the fallback only")

    case = minhash_case(args.docs, args.shingles)
    print(f"minhash_batch: {args.docs} docs x {args.shingles} shingles x 128 hashes")
    results = {}
    for name, mod in impls:
        results[name] = _best(lambda: mod.minhash_batch(*case), args.repeat)
        print(f"  {name:<7} {results[name] * 1e3:10.1f} ms")
    if len(results) == 2:
        assert np.array_equal(np.asarray(_ext.minhash_batch(*case)), _kernels_py.minhash_batch(*case))
        print(f"  speedup {results['python'] / results['cython']:.1f}x")

    pieces, ranks = bpe_case(args.pieces)
    print(f"bpe_merge: {args.pieces} pieces, {len(ranks)} merges")
    results = {}
    for name, mod in impls:
        results[name] = _best(lambda: [mod.bpe_merge(list(p), ranks) for p in pieces], args.repeat)
        print(f"  {name:<7} {results[name] * 1e3:10.1f} ms")
    if len(results) == 2:
        assert all(_ext.bpe_merge(list(p), ranks) == _kernels_py.bpe_merge(list(p), ranks) for p in pieces)
        print(f"  speedup {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
