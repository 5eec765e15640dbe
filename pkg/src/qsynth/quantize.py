"""AD quantization of the state rectangle into cells, and the DA action map.

Each state variable's range splits into 2^b equal cells, half-open below the
top so every in-range point lands in exactly one cell; the topmost cell is
closed at the upper bound. Actions are boolean input vectors and the DA
conversion is the identity on {0, 1}.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .models import Dtlhs

Cell = tuple[int, ...]
QuantAction = tuple[int, ...]


class OutOfRangeError(ValueError):
    """A sensor reading fell outside the quantized rectangle (fault path)."""


@dataclass(frozen=True)
class QuantSchema:
    """Per-variable ranges and bit counts for the state quantizer."""

    names: tuple[str, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]
    bits: tuple[int, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.lows) == len(self.highs) == len(self.bits)):
            raise ValueError("schema field lengths disagree")
        for name, lo, hi, b in zip(self.names, self.lows, self.highs, self.bits):
            if b < 1:
                raise ValueError(f"{name}: at least one bit required")
            if not lo < hi:
                raise ValueError(f"{name}: empty range [{lo}, {hi}]")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(1 << b for b in self.bits)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple((hi - lo) / k for lo, hi, k in zip(self.lows, self.highs, self.counts))

    @property
    def total_bits(self) -> int:
        return sum(self.bits)

    @property
    def cell_count(self) -> int:
        return 1 << self.total_bits

    def quantize(self, x: Sequence[float]) -> Cell:
        """Cell of an in-range point: index floor((x - lo)/w), clamped to the
        top cell at the upper bound. Out-of-range input raises
        :class:`OutOfRangeError` (the control loop's fault-detection path)."""
        if len(x) != len(self.names):
            raise ValueError(f"expected {len(self.names)} coordinates, got {len(x)}")
        idx = []
        for name, v, lo, hi, k, w in zip(self.names, x, self.lows, self.highs, self.counts, self.widths):
            if v < lo or v > hi:
                raise OutOfRangeError(f"{name} = {v} outside [{lo}, {hi}]")
            idx.append(min(int((v - lo) / w), k - 1))
        return tuple(idx)

    def cell_box(self, cell: Cell) -> list[tuple[float, float]]:
        """Geometric box of a cell; half-open above except the topmost cell."""
        out = []
        for name, k, lo, w, count in zip(self.names, cell, self.lows, self.widths, self.counts):
            if not 0 <= k < count:
                raise ValueError(f"{name}: cell index {k} outside [0, {count})")
            out.append((lo + k * w, lo + (k + 1) * w))
        return out

    def is_top(self, cell: Cell) -> tuple[bool, ...]:
        """Which coordinates of the cell are topmost (closed upper face)."""
        return tuple(k == count - 1 for k, count in zip(cell, self.counts))

    def cells(self) -> Iterator[Cell]:
        """All cells in lexicographic order."""
        return itertools.product(*(range(k) for k in self.counts))

    def linear_index(self, cell: Cell) -> int:
        return int(np.ravel_multi_index(cell, self.counts))

    def cell_of_index(self, idx: int) -> Cell:
        return tuple(int(v) for v in np.unravel_index(idx, self.counts))


def schema_for(model: Dtlhs, bits: int | Sequence[int]) -> QuantSchema:
    """Quantizer over the model's state safety rectangle with b bits per
    variable (or one bit count per variable)."""
    names = model.state_names
    if isinstance(bits, int):
        per_var = (bits,) * len(names)
    else:
        per_var = tuple(int(b) for b in bits)
        if len(per_var) != len(names):
            raise ValueError(f"expected {len(names)} bit counts, got {len(per_var)}")
    lows = tuple(d.lower for d in model.x)
    highs = tuple(d.upper for d in model.x)
    return QuantSchema(names, lows, highs, per_var)


def enumerate_actions(model: Dtlhs) -> tuple[QuantAction, ...]:
    """All boolean input vectors, in lexicographic order."""
    non_bool = [d.name for d in model.u if d.kind != "boolean"]
    if non_bool:
        raise ValueError(f"quantized actions need boolean inputs; non-boolean: {non_bool}")
    n = len(model.u)
    return tuple(itertools.product((0, 1), repeat=n))


def action_bits_string(action: QuantAction) -> str:
    return "".join(str(b) for b in action)


def action_from_string(s: str) -> QuantAction:
    return tuple(int(ch) for ch in s)
