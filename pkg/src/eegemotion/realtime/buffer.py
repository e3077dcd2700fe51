from __future__ import annotations

import numpy as np


class RollingBuffer:
    """Per-channel ring holding the most recent ``capacity`` samples."""

    __slots__ = ("data", "capacity", "ptr", "fill")

    def __init__(self, n_channels: int, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.data = np.zeros((n_channels, capacity))
        self.capacity = capacity
        self.ptr = 0
        self.fill = 0

    @property
    def full(self) -> bool:
        return self.fill == self.capacity

    def reset(self) -> None:
        self.ptr = 0
        self.fill = 0

    def push(self, block: np.ndarray) -> None:
        block = np.asarray(block)
        if block.ndim == 1:
            block = block[:, None]
        n = block.shape[1]
        if n >= self.capacity:
            self.data[:] = block[:, -self.capacity :]
            self.ptr = 0
            self.fill = self.capacity
            return
        end = self.ptr + n
        if end <= self.capacity:
            self.data[:, self.ptr : end] = block
        else:
            split = self.capacity - self.ptr
            self.data[:, self.ptr :] = block[:, :split]
            self.data[:, : end - self.capacity] = block[:, split:]
        self.ptr = end % self.capacity
        self.fill = min(self.capacity, self.fill + n)

    def snapshot(self) -> np.ndarray:
        """Chronological copy of the buffered samples."""
        if self.fill < self.capacity:
            return self.data[:, : self.fill].copy()
        return np.concatenate((self.data[:, self.ptr :], self.data[:, : self.ptr]), axis=1)
