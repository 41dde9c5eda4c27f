"""Compare the numba and numpy kernel backends.

Two measurements:
  * raw push-forward throughput on a random sparse transition matrix;
  * end-to-end EPP runs, each in a fresh interpreter with EPP_BACKEND set,
    so the backend switch is exercised the way users select it.

Usage: python benchmarks/bench_kernels.py [--T 300] [--repeats 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np
import scipy.sparse as sp

from epp import _kernels

END_TO_END = r"""
import json, sys, time
from epp import _kernels, laplace_ehmm, epp_run, parse_scheme
T, reps = int(sys.argv[1]), int(sys.argv[2])
ehmm, preds = laplace_ehmm(T)
data = ["1" if (t // 25) % 2 == 0 else "0" for t in range(T)]
out = {"backend": _kernels.BACKEND}
for variant in ("freeze", "sleep"):
    epp_run(ehmm, parse_scheme("uniformpast:0.05"), variant, preds, data[:5])  # warm-up / JIT
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        tr = epp_run(ehmm, parse_scheme("uniformpast:0.05"), variant, preds, data)
        best = min(best, time.perf_counter() - t0)
    out[variant] = best
    out[variant + "_cumloss"] = tr.cumloss
print(json.dumps(out))
"""


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_push_forward(n_states=20_000, rows=8, density=5e-4, repeats=5, seed=0):
    rng = np.random.default_rng(seed)
    mat = sp.random(n_states, n_states, density=density, random_state=seed, format="csr")
    mat = mat + sp.identity(n_states, format="csr")
    mat = sp.csr_matrix(mat.multiply(1 / mat.sum(axis=1)))
    mat.sort_indices()
    indptr, indices, probs = (a.astype(np.int64) if a.dtype.kind == "i" else a for a in (mat.indptr, mat.indices, mat.data))
    keys = np.sort(rng.choice(rows * n_states, size=rows * n_states // 4, replace=False)).astype(np.int64)
    vals = rng.random(keys.size)
    results = {}
    for name in ("numpy", "numba"):
        fn = getattr(_kernels, f"push_forward_{name}", None)
        if fn is None:
            continue
        fn(keys, vals, n_states, indptr, indices, probs)  # compile
        results[name] = best_of(lambda: fn(keys, vals, n_states, indptr, indices, probs), repeats)
    k_np, v_np = _kernels.push_forward_numpy(keys, vals, n_states, indptr, indices, probs)
    if "numba" in results:
        k_nb, v_nb = _kernels.push_forward_numba(keys, vals, n_states, indptr, indices, probs)
        assert np.array_equal(k_np, k_nb) and np.allclose(v_np, v_nb, rtol=0, atol=1e-14)
    return results


def bench_end_to_end(T, repeats):
    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, EPP_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-c", END_TO_END, str(T), str(repeats)],
            env=env, capture_output=True, text=True, check=True,
        )
        results[backend] = json.loads(proc.stdout)
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=300)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    pf = bench_push_forward(repeats=args.repeats)
    print("push_forward (20000 states, 8 rows):")
    for name, sec in pf.items():
        print(f"  {name:6s} {sec * 1e3:9.2f} ms")
    if len(pf) == 2:
        print(f"  speedup {pf['numpy'] / pf['numba']:.1f}x")

    e2e = bench_end_to_end(args.T, args.repeats)
    print(f"EPP uniformpast:0.05 on the Laplace EHMM, T={args.T}:")
    for backend, res in e2e.items():
        print(f"  {backend:6s} freeze {res['freeze']:.3f} s   sleep {res['sleep']:.3f} s")
    a, b = e2e["numpy"], e2e["numba"]
    for variant in ("freeze", "sleep"):
        assert abs(a[variant + "_cumloss"] - b[variant + "_cumloss"]) <= 1e-9 * abs(a[variant + "_cumloss"])
        print(f"  {variant} speedup {a[variant] / b[variant]:.1f}x (cumloss agrees)")


if __name__ == "__main__":
    main()
