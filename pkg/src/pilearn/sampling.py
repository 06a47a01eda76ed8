"""Sum trees for weighted sampling and the generative sampling oracle."""

from __future__ import annotations

import numpy as np

from .mdp import MdpModel

_UNIFORM_BLOCK = 4096


class WeightTree:
    """Complete binary tree of partial sums over nonnegative weights.

    Leaves live at ``[size, size + n)`` of a flat list (root at index 1), so
    sampling and updates touch one root-to-leaf path. Parents are recomputed
    from their children on update rather than incremented, which keeps the
    stored sums free of accumulated drift.
    """

    __slots__ = ("_n", "_size", "_tree")

    def __init__(self, weights):
        weights = [float(w) for w in weights]
        n = len(weights)
        if n == 0:
            raise ValueError("WeightTree needs at least one weight")
        if any(not w >= 0.0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if not any(w > 0.0 for w in weights):
            raise ValueError("at least one weight must be positive")
        size = 1 << (n - 1).bit_length()
        self._n = n
        self._size = size
        self._tree = [0.0] * (2 * size)
        self._tree[size:size + n] = weights
        self._rebuild()

    def _rebuild(self):
        tree = self._tree
        for idx in range(self._size - 1, 0, -1):
            tree[idx] = tree[2 * idx] + tree[2 * idx + 1]

    def __len__(self):
        return self._n

    def total(self) -> float:
        return self._tree[1]

    def weight(self, k: int) -> float:
        if not 0 <= k < self._n:
            raise IndexError(f"index {k} out of range for {self._n} weights")
        return self._tree[self._size + k]

    def weights(self) -> list[float]:
        return self._tree[self._size:self._size + self._n]

    def update(self, k: int, w: float) -> None:
        if not 0 <= k < self._n:
            raise IndexError(f"index {k} out of range for {self._n} weights")
        if not w >= 0.0:
            raise ValueError(f"weight must be nonnegative, got {w}")
        tree = self._tree
        idx = k + self._size
        tree[idx] = w
        idx >>= 1
        while idx:
            tree[idx] = tree[2 * idx] + tree[2 * idx + 1]
            idx >>= 1

    def scale(self, factor: float) -> None:
        """Multiply every weight by ``factor`` (O(n) rebuild)."""
        tree = self._tree
        size = self._size
        for idx in range(size, size + self._n):
            tree[idx] *= factor
        self._rebuild()

    def sample(self, u: float) -> int:
        """Inverse-CDF lookup of ``u * total()`` with left-closed cells.

        Never descends into a zero-mass subtree, so a rounding error near a
        cell boundary cannot return an index of weight zero.
        """
        tree = self._tree
        if not tree[1] > 0.0:
            raise ValueError("cannot sample from a tree with zero total weight")
        target = u * tree[1]
        idx = 1
        size = self._size
        while idx < size:
            idx <<= 1
            left = tree[idx]
            if target >= left and tree[idx + 1] > 0.0:
                target -= left
                idx += 1
        return idx - size

    def draw(self, rng: np.random.Generator) -> int:
        return self.sample(rng.random())


def build_tables(model: MdpModel) -> tuple:
    """Oracle preprocessing: per-(a, i) prefix sums in one pass over the transition tensor."""
    S, A = model.n_states, model.n_actions
    cdf = np.cumsum(model.transition, axis=2).reshape(A * S, S)
    return cdf, cdf[:, -1].tolist(), model.reward.reshape(-1)


class SamplingOracle:
    """Generative model: ``query(i, a)`` returns ``(j, r_ij(a))`` with probability ``p_ij(a)``.

    Preprocessing builds one prefix-sum row per state-action pair (a single
    pass over the transition tensor); a query is a binary search over that
    row. ``fork`` creates an oracle with its own random stream and query
    counter that shares the preprocessed tables.
    """

    def __init__(self, model: MdpModel, seed=None):
        self.model = model
        self._tables = build_tables(model)
        self._init_stream(seed)

    def _init_stream(self, seed):
        self._rng = np.random.default_rng(seed)
        self._buf: list[float] = []
        self._pos = 0
        self._count = 0

    def fork(self, seed) -> "SamplingOracle":
        child = object.__new__(SamplingOracle)
        child.model = self.model
        child._tables = self._tables
        child._init_stream(seed)
        return child

    @property
    def query_count(self) -> int:
        """Number of ``query`` calls made on this oracle."""
        return self._count

    def _uniform(self) -> float:
        pos = self._pos
        if pos == len(self._buf):
            self._buf = self._rng.random(_UNIFORM_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def query(self, i: int, a: int) -> tuple[int, float]:
        S = self.model.n_states
        if not (0 <= i < S and 0 <= a < self.model.n_actions):
            raise IndexError(f"invalid state-action pair ({i}, {a})")
        cdf, totals, reward = self._tables
        row = a * S + i
        # side="right" never lands on a zero-probability cell; only u * total
        # rounding up to total can run past the end
        j = int(cdf[row].searchsorted(self._uniform() * totals[row], "right"))
        if j == S:
            j = int(np.flatnonzero(self.model.transition[a, i])[-1])
        self._count += 1
        return j, float(reward[row * S + j])
