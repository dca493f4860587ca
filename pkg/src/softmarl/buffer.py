"""Fixed-capacity ring replay buffer with uniform sampling (with replacement)."""
from __future__ import annotations

import numpy as np

from .env import Transition
from .errors import ConfigurationError, InsufficientDataError


class ReplayBuffer:
    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ConfigurationError("capacity must be positive")
        self.capacity = int(capacity)
        self.storage: list[Transition | None] = []
        self.write_cursor = 0
        self.count = 0
        self._arrays = None

    def __len__(self) -> int:
        return self.count

    def push(self, transition: Transition) -> "ReplayBuffer":
        if self._arrays is None:
            self._allocate(transition)
        self._grow_if_needed()
        i = self.write_cursor
        if i < len(self.storage):
            self.storage[i] = transition
        else:
            self.storage.append(transition)
        s, a, r, s2 = self._arrays
        s[i] = transition.state
        a[i] = transition.joint_action
        r[i] = transition.reward
        s2[i] = transition.next_state
        self.write_cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)
        return self

    def _allocate(self, t: Transition):
        n = min(self.capacity, 1024)
        self._arrays = (
            np.zeros((n, len(t.state))),
            np.zeros((n, len(t.joint_action))),
            np.zeros(n),
            np.zeros((n, len(t.next_state))),
        )

    def _grow_if_needed(self):
        size = len(self._arrays[2])
        if self.write_cursor < size or size >= self.capacity:
            return
        new = min(self.capacity, 2 * size)
        grown = []
        for arr in self._arrays:
            out = np.zeros((new,) + arr.shape[1:])
            out[:size] = arr
            grown.append(out)
        self._arrays = tuple(grown)

    def _indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.count < batch_size:
            raise InsufficientDataError(f"buffer holds {self.count} transitions, {batch_size} requested")
        return rng.integers(0, self.count, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        return [self.storage[i] for i in self._indices(batch_size, rng)]

    def sample_arrays(self, batch_size: int, rng: np.random.Generator):
        """Same draw as :meth:`sample` but returned as stacked ``(states, actions, rewards, next_states)``."""
        idx = self._indices(batch_size, rng)
        return tuple(arr[idx] for arr in self._arrays)

    def ready(self, warmup: int) -> bool:
        return self.count >= warmup

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if self.count < self.capacity:
            return list(self.storage[: self.count])
        return self.storage[self.write_cursor:] + self.storage[: self.write_cursor]
