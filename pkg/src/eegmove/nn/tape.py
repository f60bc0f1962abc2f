"""A minimal reverse-mode tape.

Forward code stores named values with :meth:`Tape.put` and registers a
backward closure per primitive op with :meth:`Tape.record`. :meth:`Tape.backward`
seeds one adjoint and replays the closures in exact reverse order; closures
read the adjoints of their outputs and add into those of their inputs.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


class Tape:
    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.ops: list[tuple[str, Callable[["Tape"], None]]] = []
        self.adjoints: dict[str, np.ndarray] = {}
        self.replayed: list[str] = []

    def put(self, key: str, value: np.ndarray) -> np.ndarray:
        self.values[key] = value
        return value

    def record(self, name: str, backward: Callable[["Tape"], None]) -> None:
        self.ops.append((name, backward))

    def adjoint(self, key: str) -> np.ndarray:
        """Adjoint buffer of ``key``, zero-initialized on first access; add into it in place."""
        buf = self.adjoints.get(key)
        if buf is None:
            buf = self.adjoints[key] = np.zeros_like(self.values[key])
        return buf

    def backward(self, key: str, seed: np.ndarray) -> dict[str, np.ndarray]:
        if self.replayed:
            raise RuntimeError("tape has already been replayed")
        self.adjoint(key)[...] += seed
        for name, fn in reversed(self.ops):
            fn(self)
            self.replayed.append(name)
        return self.adjoints
