"""Experience replay with a safety-stratified sampler.

Unsafe proposals and crash terminals are rare but carry most of the learning
signal for the safety-shaped objective, so sampling guarantees a minimum
fraction of flagged transitions whenever any exist (drawn with replacement
if the flagged pool is smaller than the quota).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass
class Transition:
    state: Any
    action: int
    reward: float
    next_state: Any | None   # None for absorbing transitions
    terminal: bool
    flagged: bool = False    # unsafe proposal or crash terminal


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []

    def push(self, tr: Transition) -> None:
        self._items.append(tr)
        if len(self._items) > self.capacity:
            self._items.pop(0)

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, batch_size: int, rng: np.random.Generator,
               min_flagged_frac: float = 0.25) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        n = len(self._items)
        flagged = [i for i, tr in enumerate(self._items) if tr.flagged]
        quota = int(np.ceil(min_flagged_frac * batch_size)) if flagged else 0
        quota = min(quota, batch_size)
        idx = []
        if quota:
            idx.extend(rng.choice(len(flagged), size=quota,
                                  replace=len(flagged) < quota))
            idx = [flagged[i] for i in idx]
        idx.extend(rng.integers(0, n, size=batch_size - len(idx)))
        return [self._items[i] for i in idx]
