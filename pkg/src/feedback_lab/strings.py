"""Heap numbering of variable-length binary strings.

The empty string is 0; appending bit ``b`` to the string numbered ``i``
gives ``2*i + 1 + b``.  Within one length, heap order is lexicographic
order, so a run of consecutive same-length strings is an integer interval.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def heap_index(bits) -> int:
    """Heap number of a bit sequence (str of '0'/'1' or iterable of ints)."""
    idx = 0
    for b in bits:
        idx = 2 * idx + 1 + int(b)
    return idx


def length_of(idx: int) -> int:
    return (idx + 1).bit_length() - 1


def payload_of(idx: int) -> int:
    """Integer value of the bits (MSB first)."""
    return idx + 1 - (1 << length_of(idx))


def to_bits(idx: int) -> str:
    ell = length_of(idx)
    if ell == 0:
        return ""
    return format(payload_of(idx), f"0{ell}b")


def parent_of(idx: int) -> int:
    if idx <= 0:
        raise ValueError("the empty string has no parent")
    return (idx - 1) // 2


def first_index(length: int) -> int:
    """Heap number of the all-zeros string of the given length."""
    return (1 << length) - 1


def lengths_of(idx: np.ndarray) -> np.ndarray:
    """Vectorised ``length_of`` (exact for indices below 2**52)."""
    idx = np.asarray(idx, dtype=np.int64)
    return np.floor(np.log2(idx + 1.0)).astype(np.int64)


@dataclass(frozen=True, order=True)
class VarString:
    """A binary string of length >= 0 carried by its heap number."""

    heap_index: int

    @classmethod
    def from_bits(cls, bits) -> "VarString":
        return cls(heap_index(bits))

    @property
    def length(self) -> int:
        return length_of(self.heap_index)

    @property
    def payload(self) -> int:
        return payload_of(self.heap_index)

    @property
    def bits(self) -> str:
        return to_bits(self.heap_index)

    def append(self, bit: int) -> "VarString":
        return VarString(2 * self.heap_index + 1 + int(bit))

    def truncate(self) -> "VarString":
        return VarString(parent_of(self.heap_index))

    def prefix(self, n: int) -> "VarString":
        """First ``n`` bits; undefined (ValueError) for shorter strings."""
        if self.length < n:
            raise ValueError(f"string of length {self.length} has no {n}-bit prefix")
        return VarString.from_bits(self.bits[:n])

    def __str__(self) -> str:
        return self.bits
