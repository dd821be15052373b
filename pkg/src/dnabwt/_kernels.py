"""Compiled hot loop for the bucket merge, with numba optional.

When numba is unavailable the store falls back to a vectorised numpy
implementation of the same contract (see ``buckets._splice_numpy``); the two
are exercised against each other in the tests.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def merge_stream(old, local, syms, want_ranks):  # pragma: no cover - compiled
        """Stream ``old`` into a new buffer with ``syms`` spliced in.

        Copies the input stream to the output, counting every written
        symbol; at each insert position the running count of the entry's
        own symbol is captured before the entry itself is written. The
        remainder after the last entry is copied without bookkeeping.
        """
        n0 = old.shape[0]
        k = local.shape[0]
        new = np.empty(n0 + k, np.uint8)
        captured = np.zeros(k, np.int64)
        counts = np.zeros(8, np.int64)  # symbol codes 0..4
        src = 0
        for i in range(k):
            p = local[i]
            if want_ranks:
                while src + i < p:
                    c = old[src]
                    new[src + i] = c
                    counts[c] += 1
                    src += 1
                s = syms[i]
                captured[i] = counts[s]
                counts[s] += 1
            else:
                while src + i < p:
                    new[src + i] = old[src]
                    src += 1
                s = syms[i]
            new[p] = s
        out = local[k - 1] + 1 if k else 0
        while src < n0:
            new[out] = old[src]
            out += 1
            src += 1
        return new, captured

else:
    merge_stream = None
