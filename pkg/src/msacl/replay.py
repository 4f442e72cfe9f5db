"""Sliding-window n-step collection and the sequence replay buffer.

Interaction tuples enter a deque of length n.  Once the deque is full, every
further push emits a copy of the whole window, so consecutive windows overlap
in n-1 transitions.  Windows never span an episode boundary: the caller
clears the deque on reset, termination and truncation.

The buffer stores each window as one packed record of stacked arrays and
samples uniformly with replacement.  Only the generalized states are kept;
the raw simulator state is not needed once a window is packed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One interaction tuple, generalized-state view included."""
    x: np.ndarray               # raw simulator state at t
    u: np.ndarray
    reward: float               # scaled
    logp_behavior: float        # log-density of u under the policy that drew it
    x_next: np.ndarray
    s: np.ndarray               # generalized state at t
    s_next: np.ndarray
    terminated: bool

    def __post_init__(self):
        assert np.isfinite(self.logp_behavior)


@dataclass(frozen=True)
class SequenceBatch:
    """N windows stacked along the leading axis; shapes (N, n, ...)."""
    s: np.ndarray
    u: np.ndarray
    reward: np.ndarray          # (N, n)
    logp_behavior: np.ndarray   # (N, n)
    s_next: np.ndarray
    terminated: np.ndarray      # (N, n) bool

    @property
    def size(self) -> int:
        return self.s.shape[0]

    @property
    def n(self) -> int:
        return self.s.shape[1]

    def all_states(self) -> np.ndarray:
        """States s_t .. s_{t+n} per window, shape (N, n+1, ds)."""
        return np.concatenate([self.s, self.s_next[:, -1:, :]], axis=1)


def _pack(window) -> dict:
    return {
        "s": np.stack([d.s for d in window]),
        "u": np.stack([d.u for d in window]),
        "reward": np.array([d.reward for d in window]),
        "logp_behavior": np.array([d.logp_behavior for d in window]),
        "s_next": np.stack([d.s_next for d in window]),
        "terminated": np.array([d.terminated for d in window], dtype=bool),
    }


class NStepCollector:
    """Deque front-end that turns a transition stream into full windows."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("window length must be >= 1")
        self.n = n
        self._q = deque(maxlen=n)

    def __len__(self) -> int:
        return len(self._q)

    def push(self, d: Transition):
        """Append d; return the packed window when one is complete."""
        if self._q and not np.array_equal(self._q[-1].s_next, d.s):
            raise ValueError("transition does not chain onto the window")
        self._q.append(d)
        if len(self._q) == self.n:
            return _pack(self._q)
        return None

    def clear(self):
        self._q.clear()


class ReplayBuffer:
    """FIFO ring of packed windows with uniform with-replacement sampling."""

    def __init__(self, capacity: int = 1_000_000, warm_size: int = 5_000):
        assert capacity >= 1
        self.capacity = capacity
        self.warm_size = warm_size
        self._store: list = []
        self._head = 0              # next slot to overwrite once full

    def __len__(self) -> int:
        return len(self._store)

    @property
    def warm(self) -> bool:
        return len(self._store) >= self.warm_size

    def add(self, packed: dict):
        if len(self._store) < self.capacity:
            self._store.append(packed)
        else:
            self._store[self._head] = packed
            self._head = (self._head + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> SequenceBatch:
        if not self._store:
            raise RuntimeError("sampling from an empty replay buffer")
        if not self.warm:
            raise RuntimeError(
                f"buffer holds {len(self._store)} sequences, "
                f"warm-up needs {self.warm_size}")
        idx = rng.integers(0, len(self._store), size=batch_size)
        picked = [self._store[i] for i in idx]
        return SequenceBatch(**{key: np.stack([p[key] for p in picked])
                                for key in picked[0]})
