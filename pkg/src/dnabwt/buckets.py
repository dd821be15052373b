"""Storage of context buckets and the streamed merge insertion.

Each of the 2**kappa buckets holds one contiguous segment of the partial
transform. The external backend keeps a bucket as a pair of alternating
files: an insertion streams the current file into the scratch file with the
new symbols spliced in at their positions, then flips which file is live.
The in-memory backend replaces the file pair with an array and exists for
testing and for builds where disk traffic is unwanted.

File format (external): raw 2-bit packed symbols, four per byte, high bits
first. Terminators cannot be packed; they are only ever inserted in the
final round, so their positions go into a per-bucket side list and are
spliced in during assembly. A one-byte-per-symbol ASCII mode is kept for
debugging (``packed=False``).
"""
from __future__ import annotations

import os
import threading
from typing import BinaryIO

import numpy as np

from ._kernels import merge_stream
from .collection import DOLLAR, SYMBOL_BYTES, _unpack, _pack

_ASCII_TO_CODE = np.full(256, 255, dtype=np.uint8)
for _i, _ch in enumerate(SYMBOL_BYTES):
    _ASCII_TO_CODE[_ch] = _i


class ConsistencyError(RuntimeError):
    pass


class BucketIOError(RuntimeError):
    pass


def n_buckets(kappa: int) -> int:
    return 1 << kappa


def context_symbols(kappa: int) -> int:
    """Context symbols tracked per word (last one half-used when kappa is odd)."""
    return (kappa + 1) // 2


def bucket_id(context: str, kappa: int) -> int:
    """Leaf index of a context: start at the root row of its first symbol and
    take one child step (left -> 2i, right -> 2i+1) per navigation bit."""
    n_sym = context_symbols(kappa)
    if len(context) < n_sym:
        raise ValueError(f"context {context!r} too short for kappa={kappa}")
    codes = [b"ACGT".index(ch.encode()) for ch in context[:n_sym]]
    node = 4 + codes[0]
    bits = []
    for c in codes[1:]:
        bits.extend(((c >> 1) & 1, c & 1))
    for b in bits[: kappa - 2]:
        node = 2 * node + b
    return node


def leaf_ordinal(context: str, kappa: int) -> int:
    return bucket_id(context, kappa) - n_buckets(kappa)


def ordinal_context(ordinal: int, kappa: int) -> str:
    """Smallest context string mapping to the given leaf ordinal."""
    n_sym = context_symbols(kappa)
    bits = ordinal << (2 * n_sym - kappa)
    return "".join("ACGT"[(bits >> (2 * (n_sym - 1 - i))) & 3] for i in range(n_sym))


def local_position_base(r: np.ndarray) -> int:
    """Start of a bucket in tree-relative coordinates: the accumulator total."""
    return int(r.sum())


def _splice_numpy(old: np.ndarray, local: np.ndarray, syms: np.ndarray,
                  want_ranks: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Vectorised fallback for :func:`dnabwt._kernels.merge_stream`."""
    n0, k = len(old), len(local)
    new = np.empty(n0 + k, dtype=old.dtype)
    new[local] = syms
    mask = np.ones(n0 + k, dtype=bool)
    mask[local] = False
    new[mask] = old
    if not want_ranks:
        return new, None
    # count, per entry, equal symbols among the old content it was written
    # after: one bincount over (segment, symbol) pairs covers all entries
    old_before = local - np.arange(k)
    prefix = old[: old_before[-1]]
    seg_sizes = np.diff(old_before, prepend=0)
    seg_starts = np.repeat(np.arange(0, 5 * k, 5, dtype=np.int64), seg_sizes)
    seg_counts = np.bincount(seg_starts + prefix, minlength=5 * k).reshape(k, 5)
    cum = np.cumsum(seg_counts, axis=0)
    captured = cum[np.arange(k), syms]
    # plus equal symbols among earlier entries of the same batch
    for c in np.unique(syms):
        sel = syms == c
        captured[sel] += np.arange(int(sel.sum()))
    return new, captured


def _validate_positions(local: np.ndarray, n0: int, ordinal: int) -> None:
    k = len(local)
    if k and (local[0] < 0 or int(local[-1]) - (k - 1) > n0 or (k > 1 and np.any(np.diff(local) <= 0))):
        raise ConsistencyError(f"bucket {ordinal}: insert positions inconsistent with content")


def _splice(old: np.ndarray, local: np.ndarray, syms: np.ndarray, want_ranks: bool,
            ordinal: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Splice ``syms`` into ``old`` at post-insertion positions ``local``.

    When ``want_ranks`` is set, also captures, per entry, the number of equal
    symbols written before it (stream copies plus earlier batch entries),
    which is the bucket-level rank the next insert position needs.
    """
    _validate_positions(local, len(old), ordinal)
    if merge_stream is not None:
        new, captured = merge_stream(
            old, np.ascontiguousarray(local, dtype=np.int64), syms, want_ranks
        )
        return new, (captured if want_ranks else None)
    return _splice_numpy(old, local, syms, want_ranks)


class MemoryBucketStore:
    """Buckets as plain in-memory code arrays."""

    def __init__(self, kappa: int):
        self.kappa = kappa
        self.n = n_buckets(kappa)
        self._content = [np.empty(0, dtype=np.uint8)] * self.n
        self.sizes = np.zeros(self.n, dtype=np.int64)
        self.merge_counts = np.zeros(self.n, dtype=np.int64)
        self.symbols_read = 0
        self.symbols_written = 0

    def merge_insert(self, ordinal, tree_positions, syms, base, want_ranks=True):
        local = tree_positions - base
        old = self._content[ordinal]
        new, captured = _splice(old, local, syms, want_ranks, ordinal)
        self._content[ordinal] = new
        self.sizes[ordinal] = len(new)
        self.merge_counts[ordinal] += 1
        self.symbols_read += len(old)
        self.symbols_written += len(new)
        return captured

    def merge_many(self, batches, want_ranks=True, pool=None):
        chunks = [self.merge_insert(o, p, s, b, want_ranks) for o, p, s, b in batches]
        if not want_ranks:
            return None
        return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)

    def read(self, ordinal: int) -> np.ndarray:
        return self._content[ordinal].copy()

    def assemble(self, out: BinaryIO) -> int:
        lut = np.frombuffer(SYMBOL_BYTES, dtype=np.uint8)
        written = 0
        for o in range(self.n):
            data = lut[self._content[o]].tobytes()
            out.write(data)
            written += len(data)
        return written

    @property
    def io_stats(self) -> dict:
        return {"read": self.symbols_read, "written": self.symbols_written}

    def close(self) -> None:
        self._content = []


class ExternalBucketStore:
    """Buckets as alternating file pairs under a temp directory.

    ``active[o]`` is the index of the file the next merge writes to; the
    other file of the pair holds the current content. Files are created
    lazily on first write and removed by :meth:`close`. Untouched buckets are
    skipped entirely: no open, no read, no flip.
    """

    def __init__(self, kappa: int, tmp_dir: str, buffer_bytes: int = 1 << 20, packed: bool = True):
        self.kappa = kappa
        self.n = n_buckets(kappa)
        self.tmp_dir = tmp_dir
        self.buffer_bytes = max(int(buffer_bytes), 4096)
        self.packed = packed
        self.active = np.zeros(self.n, dtype=np.uint8)
        self.sizes = np.zeros(self.n, dtype=np.int64)
        self.merge_counts = np.zeros(self.n, dtype=np.int64)
        self._dollars: dict[int, np.ndarray] = {}
        self.bytes_read = 0
        self.bytes_written = 0
        self._stats_lock = threading.Lock()  # merges may run on pool workers
        os.makedirs(tmp_dir, exist_ok=True)

    def _path(self, ordinal: int, side: int) -> str:
        return os.path.join(self.tmp_dir, f"bucket_{ordinal}_{side}.bin")

    def _read_file(self, path: str) -> bytes:
        if not os.path.exists(path):
            return b""
        parts = []
        with open(path, "rb", buffering=0) as fh:
            while chunk := fh.read(self.buffer_bytes):
                parts.append(chunk)
        data = b"".join(parts)
        with self._stats_lock:
            self.bytes_read += len(data)
        return data

    def _write_file(self, path: str, data: bytes) -> None:
        with open(path, "wb", buffering=0) as fh:
            for i in range(0, len(data), self.buffer_bytes):
                fh.write(data[i : i + self.buffer_bytes])
        with self._stats_lock:
            self.bytes_written += len(data)

    def _load_codes(self, ordinal: int) -> np.ndarray:
        raw = self._read_file(self._path(ordinal, 1 - int(self.active[ordinal])))
        arr = np.frombuffer(raw, dtype=np.uint8)
        if self.packed:
            n_plain = int(self.sizes[ordinal]) - len(self._dollars.get(ordinal, ()))
            return _unpack(arr, n_plain)
        return _ASCII_TO_CODE[arr]

    def merge_insert(self, ordinal, tree_positions, syms, base, want_ranks=True):
        local = tree_positions - base
        if self.packed and syms.size and np.any(syms == DOLLAR):
            # terminators arrive as one pure batch in the last round and are
            # never packed; record their final positions for assembly
            if np.any(syms != DOLLAR) or want_ranks:
                raise ConsistencyError(f"bucket {ordinal}: mixed terminator batch")
            if ordinal in self._dollars:
                raise ConsistencyError(f"bucket {ordinal}: duplicate terminator batch")
            _validate_positions(local, int(self.sizes[ordinal]), ordinal)
            self._dollars[ordinal] = np.asarray(local, dtype=np.int64)
            self.sizes[ordinal] += len(local)
            self.merge_counts[ordinal] += 1
            return None
        try:
            old = self._load_codes(ordinal)
            new, captured = _splice(old, local, syms, want_ranks, ordinal)
            if self.packed:
                out = _pack(new).tobytes()
            else:
                out = np.frombuffer(SYMBOL_BYTES, dtype=np.uint8)[new].tobytes()
            self._write_file(self._path(ordinal, int(self.active[ordinal])), out)
        except OSError as exc:
            raise BucketIOError(f"bucket {ordinal}: {exc}") from exc
        self.active[ordinal] ^= 1
        self.sizes[ordinal] += len(local)
        self.merge_counts[ordinal] += 1
        return captured

    def merge_many(self, batches, want_ranks=True, pool=None):
        if pool is not None and len(batches) > 1:
            chunks = list(pool.map(lambda b: self.merge_insert(*b, want_ranks), batches))
        else:
            chunks = [self.merge_insert(o, p, s, b, want_ranks) for o, p, s, b in batches]
        if not want_ranks:
            return None
        return np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)

    def read(self, ordinal: int) -> np.ndarray:
        codes = self._load_codes(ordinal)
        dollars = self._dollars.get(ordinal)
        if dollars is None or not self.packed:
            return codes
        full = np.empty(len(codes) + len(dollars), dtype=np.uint8)
        full[dollars] = DOLLAR
        mask = np.ones(len(full), dtype=bool)
        mask[dollars] = False
        full[mask] = codes
        return full

    def assemble(self, out: BinaryIO) -> int:
        lut = np.frombuffer(SYMBOL_BYTES, dtype=np.uint8)
        written = 0
        for o in range(self.n):
            if self.sizes[o] == 0:
                continue
            data = lut[self.read(o)].tobytes()
            out.write(data)
            written += len(data)
        return written

    @property
    def io_stats(self) -> dict:
        return {"read": self.bytes_read, "written": self.bytes_written}

    def close(self) -> None:
        for o in range(self.n):
            for side in (0, 1):
                try:
                    os.unlink(self._path(o, side))
                except FileNotFoundError:
                    pass
        try:
            os.rmdir(self.tmp_dir)
        except OSError:
            pass
