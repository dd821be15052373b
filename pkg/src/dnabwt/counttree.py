"""Implicit-array count trees over the context buckets.

Four balanced binary trees (one per first context symbol) are stored in a
single array of 2**kappa rows using the implicit layout: roots at rows 4..7,
children of row i at 2i and 2i+1, leaf indices >= 2**kappa standing for the
context buckets, which are not stored here. Rows 0..3 hold running
cumulative per-symbol totals over the A-, A+C-, A+C+G- and all-tree leaves.

Each internal row carries five counters (A, C, G, T and terminator): the
number of symbols of that kind currently stored in the leaves of the row's
left subtree. The terminator slot is only ever touched in the final
iteration, when terminators are routed through the trees like any other
symbol so that simultaneous insertions still see each other.

``kappa`` is the number of navigation bits: each context symbol contributes
two (high bit then low bit, so A=00 < C=01 < G=10 < T=11 keeps leaves in
context order). An odd ``kappa`` consumes only the high bit of the last
context symbol, halving the final split ({A,C} left vs {G,T} right).
"""
from __future__ import annotations

import numpy as np

_STEPS = {0: ("left", "left"), 1: ("left", "right"), 2: ("right", "left"), 3: ("right", "right")}
_SYM_CODE = {"A": 0, "C": 1, "G": 2, "T": 3}


def nav_directions(sym: str) -> tuple[str, str]:
    """The (first, second) child steps taken for one context symbol."""
    code = _SYM_CODE.get(sym)
    if code is None:
        raise ValueError(f"{sym!r} is not a navigable context symbol")
    return _STEPS[code]


class TreeArray:
    def __init__(self, kappa: int):
        if kappa < 3:
            raise ValueError(f"kappa must be >= 3, got {kappa}")
        self.kappa = kappa
        self.n_leaves = 1 << kappa
        self.leaves_per_tree = self.n_leaves >> 2
        # extra all-zero row at index n_leaves pads the right-step gather
        self.counters = np.zeros((self.n_leaves + 1, 5), dtype=np.int64)
        self._node_lo = np.zeros(self.n_leaves, dtype=np.int64)
        self._node_mid = np.zeros(self.n_leaves, dtype=np.int64)
        self._fill_ranges()
        self._right_nodes = self._build_right_nodes()

    def _fill_ranges(self) -> None:
        stack = [(4 + x, x * self.leaves_per_tree, (x + 1) * self.leaves_per_tree) for x in range(4)]
        while stack:
            node, lo, hi = stack.pop()
            mid = (lo + hi) // 2
            self._node_lo[node] = lo
            self._node_mid[node] = mid
            if 2 * node < self.n_leaves:
                stack.append((2 * node, lo, mid))
                stack.append((2 * node + 1, mid, hi))

    def _build_right_nodes(self) -> np.ndarray:
        # unused slots point at the all-zero pad row so a flat gather-sum works
        depth = self.kappa - 2
        table = np.full((self.n_leaves, max(depth, 1)), self.n_leaves, dtype=np.int64)
        for o in range(self.n_leaves):
            node = 4 + (o >> depth)
            lo = (o >> depth) * self.leaves_per_tree
            hi = lo + self.leaves_per_tree
            col = 0
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if o < mid:
                    node, hi = 2 * node, mid
                else:
                    table[o, col] = node
                    col += 1
                    node, lo = 2 * node + 1, mid
        return table

    # -- per-iteration bulk operations ---------------------------------------

    def update_prefix_totals(self, per_tree_counts: np.ndarray) -> None:
        """Add one iteration's per-tree insertion counts to rows 0..3.

        ``per_tree_counts[x][c]`` is the number of symbols ``c`` inserted this
        iteration whose context starts with tree symbol ``x``. Row x receives
        the running sum over trees 0..x, restoring the cumulative invariant
        for the post-insertion state.
        """
        h = np.zeros(5, dtype=np.int64)
        for x in range(4):
            h += per_tree_counts[x]
            self.counters[x] += h

    def apply_left_increments(self, ordinals: np.ndarray, syms: np.ndarray) -> None:
        """Record one iteration's insertions in the internal-node counters.

        ``ordinals`` (sorted) are the target bucket ordinals, ``syms`` the
        inserted symbol codes. Every node whose left subtree contains a
        target bucket is incremented once per such insertion, which is
        exactly what per-entry left steps would do.
        """
        lo = self._node_lo[4:]
        mid = self._node_mid[4:]
        for c in np.unique(syms):
            oc = ordinals[syms == c]
            self.counters[4 : self.n_leaves, c] += np.searchsorted(oc, mid) - np.searchsorted(oc, lo)

    def accumulators_for(self, ordinals: np.ndarray) -> np.ndarray:
        """Per-bucket accumulators: counter sums over each path's right-step nodes.

        Must be called after :meth:`apply_left_increments` for the iteration;
        the counters then already include same-iteration insertions into
        buckets left of each queried one, which is the value a sequential
        left-before-right descent would read.
        """
        return self.counters[self._right_nodes[ordinals]].sum(axis=1)

    # -- sequential reference descent ----------------------------------------

    def descend(
        self,
        node: int,
        ordinals: np.ndarray,
        syms: np.ndarray,
        r: np.ndarray,
        lo_ord: int,
        hi_ord: int,
        base_idx: int = 0,
        out: list | None = None,
    ) -> list[tuple[int, int, int, np.ndarray]]:
        """Route one sorted group of insertions to its leaf buckets.

        Splits the group at each node by the next navigation bit, increments
        the node's counters for every left-bound entry *before* the
        right-bound branch reads them, and augments the right branch's
        accumulator by the node's counters. Returns
        ``(leaf_ordinal, start, end, accumulator)`` per reached leaf, where
        ``start:end`` index the original group. Equivalent to the bulk pair
        :meth:`apply_left_increments` + :meth:`accumulators_for`.
        """
        if out is None:
            out = []
        if hi_ord - lo_ord == 1:
            out.append((lo_ord, base_idx, base_idx + len(ordinals), r))
            return out
        mid = (lo_ord + hi_ord) // 2
        split = int(np.searchsorted(ordinals, mid))
        n = len(ordinals)
        if split:
            np.add.at(self.counters, (node, syms[:split]), 1)
        if split < n:
            r_right = r + self.counters[node]
            self.descend(2 * node + 1, ordinals[split:], syms[split:], r_right, mid, hi_ord, base_idx + split, out)
        if split:
            self.descend(2 * node, ordinals[:split], syms[:split], r, lo_ord, mid, base_idx, out)
        return out

    def descend_iteration(self, ordinals: np.ndarray, syms: np.ndarray) -> list[tuple[int, int, int, np.ndarray]]:
        """Reference descent of a whole iteration (all four trees)."""
        out: list[tuple[int, int, int, np.ndarray]] = []
        bounds = np.searchsorted(ordinals, np.arange(5) * self.leaves_per_tree)
        for x in range(4):
            s, e = int(bounds[x]), int(bounds[x + 1])
            if s < e:
                self.descend(
                    4 + x,
                    ordinals[s:e],
                    syms[s:e],
                    np.zeros(5, dtype=np.int64),
                    x * self.leaves_per_tree,
                    (x + 1) * self.leaves_per_tree,
                    s,
                    out,
                )
        return sorted(out, key=lambda item: item[0])

    # -- queries ---------------------------------------------------------------

    def level1_base(self, tree_sym: int, c: int) -> int:
        """Count of symbol ``c`` stored before the given tree's first bucket."""
        if not 0 <= tree_sym <= 3:
            raise ValueError(f"invalid tree symbol code {tree_sym}")
        if tree_sym == 0:
            return 0
        return int(self.counters[tree_sym - 1, c])

    def totals(self) -> np.ndarray:
        """Per-symbol totals over the whole stored content (row 3)."""
        return self.counters[3].copy()
