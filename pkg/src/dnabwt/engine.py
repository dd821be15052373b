"""Iterative construction of the multi-word transform.

Words are processed right-aligned: word j starts contributing symbols at
iteration ``M - |S_j|`` (M = longest word), so every word submits its first
character in iteration M-1 and its terminator in iteration M. Per
iteration, each active word's symbol is routed through the count trees to
its context bucket and spliced into the bucket stream; the bucket-level
rank captured during the write, the tree accumulators and the cumulative
prefix totals together yield the word's next insert position without ever
materialising a global position.

The active list is kept sorted by (context, tree-relative position). After
an iteration it is re-sorted for the next one by a single stable partition
on the symbol just inserted, and newly started words are prepended with
positions taken from a rank over the activation bitvector.
"""
from __future__ import annotations

import math
import os
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from io import BytesIO
from typing import Callable, Optional

import numpy as np

from .buckets import (
    ConsistencyError,
    ExternalBucketStore,
    MemoryBucketStore,
    context_symbols,
)
from .collection import DOLLAR, WordCollection
from .counttree import TreeArray

BACKENDS = ("external", "memory")


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    """Build parameters.

    ``kappa`` is the navigation-bit count (two per context symbol; odd
    values use only the first bit of the last symbol). ``threads`` caps the
    bucket-merge worker count and defaults to the processor count.
    """

    kappa: int = 5
    threads: Optional[int] = None
    tmp_dir: Optional[str] = None
    buffer_bytes: int = 1 << 20
    backend: str = "external"

    def __post_init__(self) -> None:
        if not isinstance(self.kappa, int) or not 3 <= self.kappa <= 28:
            raise ConfigError(f"kappa must be an integer in [3, 28], got {self.kappa}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.buffer_bytes < 1:
            raise ConfigError("buffer_bytes must be positive")
        cpus = os.cpu_count() or 1
        self.threads = cpus if self.threads is None else max(1, min(int(self.threads), cpus))


class StartBitvector:
    """Activation bits with rank support: bit j is set when word j starts."""

    def __init__(self, m: int):
        self.bits = np.zeros(m, dtype=np.uint8)

    def set_many(self, js: np.ndarray) -> None:
        self.bits[js] = 1

    def rank(self, j: int) -> int:
        """Number of set bits strictly below position j."""
        return int(self.bits[:j].sum())

    def ranks(self, js: np.ndarray) -> np.ndarray:
        csum = np.cumsum(self.bits, dtype=np.int64)
        return csum[js] - self.bits[js]


def sb_rank(sb: StartBitvector, j: int) -> int:
    return sb.rank(j)


def next_insert_position(
    first_context_symbol: int,
    insert_symbol: int,
    tree: TreeArray,
    r_c: int,
    rankk: int,
    alpha_next: int,
) -> int:
    """Tree-relative insert position of a word's next symbol.

    ``first_context_symbol`` selects the tree the current symbol went into
    (fixing the prefix-total base for the rank of ``insert_symbol``); the
    ``alpha_next`` term is owed whenever the *inserted* symbol is A, because
    the A tree also fronts the rows of the ``alpha_next`` word starts that
    the next round's coordinates must account for.
    """
    if insert_symbol == DOLLAR:
        raise ValueError("terminator has no next insert position; the word is finished")
    if not 0 <= insert_symbol <= 3 or not 0 <= first_context_symbol <= 3:
        raise ValueError("symbol codes must be in 0..3")
    base = tree.level1_base(first_context_symbol, insert_symbol)
    alpha_term = alpha_next if insert_symbol == 0 else 0
    return base + r_c + rankk + alpha_term


def plan_iteration(ordinals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Group a sorted ordinal array into contiguous bucket slices.

    Returns (unique ordinals, boundary indices); slice i of the active list
    is ``bounds[i]:bounds[i+1]``.
    """
    n = len(ordinals)
    if n == 0:
        return np.empty(0, dtype=np.int64), np.zeros(1, dtype=np.int64)
    cuts = np.flatnonzero(np.diff(ordinals)) + 1
    bounds = np.concatenate([[0], cuts, [n]])
    return ordinals[bounds[:-1]], bounds


def stable_radix_step(
    syms: np.ndarray, *arrays: np.ndarray
) -> tuple[np.ndarray, ...]:
    """Re-sort the active list for the next iteration.

    One stable partition of the entries into A, C, G, T groups keyed by the
    symbol each word just inserted; entries whose symbol was the terminator
    (final round) are dropped instead.
    """
    live = syms != DOLLAR
    if not live.all():
        syms = syms[live]
        arrays = tuple(a[live] for a in arrays)
    order = np.argsort(syms, kind="stable")
    return tuple(a[order] for a in arrays)


class BwtBuilder:
    """One construction run; keeps its tree and bucket store inspectable."""

    def __init__(self, collection: WordCollection, config: Config | None = None):
        self.collection = collection
        self.config = config or Config()
        kappa = self.config.kappa
        limit = 2 * math.log(max(collection.total_length, 2), 4)
        if kappa > 19 or kappa > limit:
            warnings.warn(
                f"kappa={kappa} is outside the well-tested range for this input "
                f"(suggested <= {max(3, int(limit))}, hard ceiling 19)",
                RuntimeWarning,
                stacklevel=3,
            )
        self.tree = TreeArray(kappa)
        self._own_tmp = None
        if self.config.backend == "memory":
            self.store = MemoryBucketStore(kappa)
        else:
            tmp_root = self.config.tmp_dir or tempfile.gettempdir()
            self._own_tmp = tempfile.mkdtemp(prefix="dnabwt_", dir=tmp_root)
            self.store = ExternalBucketStore(kappa, self._own_tmp, self.config.buffer_bytes)
        self._pool = None
        if self.config.backend == "external" and self.config.threads > 1:
            self._pool = ThreadPoolExecutor(max_workers=self.config.threads)
        self.t = -1
        self.alpha = 0

    # -- activation -----------------------------------------------------------

    def _prepare_starts(self) -> None:
        c = self.collection
        starts = (c.max_length - c.lengths).astype(np.int64)
        order = np.argsort(starts, kind="stable")  # ties resolved by word index
        self._starts_sorted = starts[order]
        self._start_order = order
        self._start_bounds = np.searchsorted(self._starts_sorted, np.arange(c.max_length + 2))

    def _starting_words(self, t: int) -> np.ndarray:
        if t > self.collection.max_length:
            return np.empty(0, dtype=np.int64)
        return self._start_order[self._start_bounds[t] : self._start_bounds[t + 1]]

    def activate_new_words(self, sb: StartBitvector, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Set activation bits for words starting at t; return (indices, positions)."""
        new_js = self._starting_words(t)
        if new_js.size:
            sb.set_many(new_js)
            positions = sb.ranks(new_js)
            self.alpha += len(new_js)
        else:
            positions = np.empty(0, dtype=np.int64)
        return new_js, positions

    # -- main loop --------------------------------------------------------------

    def run(self, inspect: Callable[["BwtBuilder"], None] | None = None) -> bytes:
        c = self.collection
        M = c.max_length
        n_sym = context_symbols(self.config.kappa)
        drop = 2 * n_sym - self.config.kappa
        top_shift = 2 * (n_sym - 1)
        per_tree_shift = self.config.kappa - 2

        self._prepare_starts()
        sb = StartBitvector(c.m)
        j_arr = np.empty(0, dtype=np.int64)
        pos = np.empty(0, dtype=np.int64)
        ctx = np.empty(0, dtype=np.int64)

        for t in range(M + 1):
            self.t = t
            new_js, new_pos = self.activate_new_words(sb, t)
            if new_js.size:
                j_arr = np.concatenate([new_js, j_arr])
                pos = np.concatenate([new_pos, pos])
                ctx = np.concatenate([np.zeros(len(new_js), dtype=np.int64), ctx])

            if t < M:
                syms = c.fetch_codes(j_arr, t)
            else:
                syms = np.full(len(j_arr), DOLLAR, dtype=np.uint8)
            alpha_next = self.alpha + len(self._starting_words(t + 1))
            self.active_state = (j_arr, pos, ctx)  # debug/inspection surface

            ordinals = ctx >> drop
            uniq, bounds = plan_iteration(ordinals)
            htree = np.bincount(
                (ordinals >> per_tree_shift) * 5 + syms, minlength=20
            ).reshape(4, 5)
            self.tree.update_prefix_totals(htree)
            self.tree.apply_left_increments(ordinals, syms)
            racc = self.tree.accumulators_for(uniq)
            bases = racc.sum(axis=1)

            batches = [
                (int(uniq[i]), pos[bounds[i] : bounds[i + 1]], syms[bounds[i] : bounds[i + 1]], int(bases[i]))
                for i in range(len(uniq))
            ]
            captured = self.store.merge_many(batches, want_ranks=(t < M), pool=self._pool)

            if inspect is not None:
                inspect(self)
            if t == M:
                break

            sizes = np.diff(bounds)
            r_per_entry = np.repeat(racc, sizes, axis=0)
            sel = (ctx >> top_shift).astype(np.int64)
            prefix_pad = np.vstack([np.zeros(5, dtype=np.int64), self.tree.counters[0:3]])
            base1 = prefix_pad[sel, syms]
            nxt = base1 + r_per_entry[np.arange(len(syms)), syms] + captured
            nxt += np.where(syms == 0, alpha_next, 0)
            ctx = (syms.astype(np.int64) << top_shift) | (ctx >> 2)
            j_arr, pos, ctx = stable_radix_step(syms, j_arr, nxt, ctx)

        out = BytesIO()
        written = self.store.assemble(out)
        if written != c.total_length:
            raise ConsistencyError(
                f"assembled {written} symbols, expected {c.total_length}"
            )
        return out.getvalue()

    def bucket_sizes(self) -> np.ndarray:
        return self.store.sizes.copy()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None
        self.store.close()

    def __enter__(self) -> "BwtBuilder":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def build(
    collection: WordCollection,
    config: Config | None = None,
    inspect: Callable[[BwtBuilder], None] | None = None,
) -> bytes:
    """Construct the transform of a collection; terminators emitted as '$'."""
    with BwtBuilder(collection, config) as builder:
        return builder.run(inspect=inspect)
