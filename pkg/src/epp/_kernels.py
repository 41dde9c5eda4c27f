"""Sparse mass-propagation kernels.

Distributions over EHMM states are carried as sorted ``(keys, vals)`` pairs.
A key encodes ``row * n_states + state`` so that a whole table of posteriors
can be pushed through the transition function in one call.

Two implementations exist for every kernel: a numba ``@njit`` version and a
pure numpy version.  The active one is chosen at import time from the
``EPP_BACKEND`` environment variable (``numba`` or ``numpy``; default
``numba``, falling back to numpy when numba cannot be imported).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BACKEND",
    "coalesce",
    "push_forward",
    "coalesce_numpy",
    "push_forward_numpy",
    "coalesce_numba",
    "push_forward_numba",
]


def coalesce_numpy(keys: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum values sharing a key; return sorted unique keys and their sums."""
    if keys.size == 0:
        return keys.astype(np.int64), vals.astype(np.float64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    return uniq, np.bincount(inverse.ravel(), weights=vals, minlength=uniq.size)


def push_forward_numpy(keys, vals, n_states, indptr, indices, probs):
    """Apply one transition step to every row encoded in ``keys``."""
    rows = keys // n_states
    states = keys - rows * n_states
    starts = indptr[states]
    counts = indptr[states + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.float64)
    owner = np.repeat(np.arange(keys.size), counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = starts[owner] + offsets
    out_keys = rows[owner] * n_states + indices[pos]
    out_vals = vals[owner] * probs[pos]
    return coalesce_numpy(out_keys, out_vals)


try:
    import numba as _nb

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @_nb.njit(cache=True)
    def _is_sorted(keys):
        for i in range(1, keys.size):
            if keys[i] < keys[i - 1]:
                return False
        return True

    @_nb.njit(cache=True)
    def _merge_sorted(keys, vals):
        m = keys.size
        out_k = np.empty(m, np.int64)
        out_v = np.empty(m, np.float64)
        k = -1
        for i in range(m):
            if k >= 0 and keys[i] == out_k[k]:
                out_v[k] += vals[i]
            else:
                k += 1
                out_k[k] = keys[i]
                out_v[k] = vals[i]
        return out_k[: k + 1].copy(), out_v[: k + 1].copy()

    @_nb.njit(cache=True)
    def _coalesce_dense(keys, vals, lo, span):
        acc = np.zeros(span, np.float64)
        hit = np.zeros(span, np.bool_)
        for i in range(keys.size):
            j = keys[i] - lo
            acc[j] += vals[i]
            hit[j] = True
        n = 0
        for j in range(span):
            if hit[j]:
                n += 1
        out_k = np.empty(n, np.int64)
        out_v = np.empty(n, np.float64)
        k = 0
        for j in range(span):
            if hit[j]:
                out_k[k] = lo + j
                out_v[k] = acc[j]
                k += 1
        return out_k, out_v

    @_nb.njit(cache=True)
    def coalesce_numba(keys, vals):
        if keys.size == 0:
            return np.empty(0, np.int64), np.empty(0, np.float64)
        if _is_sorted(keys):
            return _merge_sorted(keys, vals)
        lo = keys.min()
        span = keys.max() - lo + 1
        if span <= 8 * keys.size:
            return _coalesce_dense(keys, vals, lo, span)
        order = np.argsort(keys)
        return _merge_sorted(keys[order], vals[order])

    @_nb.njit(cache=True)
    def _push_sorted(keys, vals, n_states, indptr, indices, probs):
        # rows arrive in nondecreasing order: accumulate each row densely
        m = keys.size
        cap = 0
        for i in range(m):
            q = keys[i] % n_states
            cap += indptr[q + 1] - indptr[q]
        out_k = np.empty(cap, np.int64)
        out_v = np.empty(cap, np.float64)
        acc = np.zeros(n_states, np.float64)
        seen = np.zeros(n_states, np.bool_)
        touched = np.empty(n_states, np.int64)
        k = 0
        i = 0
        while i < m:
            row = keys[i] // n_states
            base = row * n_states
            nt = 0
            while i < m and keys[i] // n_states == row:
                q = keys[i] - base
                v = vals[i]
                for p in range(indptr[q], indptr[q + 1]):
                    r = indices[p]
                    if not seen[r]:
                        seen[r] = True
                        touched[nt] = r
                        nt += 1
                    acc[r] += v * probs[p]
                i += 1
            if 8 * nt >= n_states:
                for r in range(n_states):
                    if seen[r]:
                        out_k[k] = base + r
                        out_v[k] = acc[r]
                        k += 1
                        acc[r] = 0.0
                        seen[r] = False
            else:
                ts = np.sort(touched[:nt])
                for j in range(nt):
                    r = ts[j]
                    out_k[k] = base + r
                    out_v[k] = acc[r]
                    k += 1
                    acc[r] = 0.0
                    seen[r] = False
        return out_k[:k].copy(), out_v[:k].copy()

    @_nb.njit(cache=True)
    def push_forward_numba(keys, vals, n_states, indptr, indices, probs):
        if keys.size == 0:
            return np.empty(0, np.int64), np.empty(0, np.float64)
        if not _is_sorted(keys):
            keys, vals = coalesce_numba(keys, vals)
        return _push_sorted(keys, vals, n_states, indptr, indices, probs)

else:  # pragma: no cover
    coalesce_numba = coalesce_numpy
    push_forward_numba = push_forward_numpy


BACKEND = os.environ.get("EPP_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"EPP_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")
if BACKEND == "numba" and not _HAVE_NUMBA:  # pragma: no cover
    BACKEND = "numpy"

if BACKEND == "numba":
    _coalesce = coalesce_numba
    _push_forward = push_forward_numba
else:
    _coalesce = coalesce_numpy
    _push_forward = push_forward_numpy


def coalesce(keys: np.ndarray, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _coalesce(np.ascontiguousarray(keys, np.int64), np.ascontiguousarray(vals, np.float64))


def push_forward(keys, vals, n_states: int, indptr, indices, probs):
    return _push_forward(
        np.ascontiguousarray(keys, np.int64),
        np.ascontiguousarray(vals, np.float64),
        np.int64(n_states),
        indptr,
        indices,
        probs,
    )
