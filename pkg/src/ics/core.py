"""Domain types: slices, volumes, masks, and the bounded support set.

All image data is stored as numpy arrays indexed ``[row, col]`` (row = y,
col = x), so an array of shape ``(height, width)`` backs a slice of
``width x height`` pixels.  Slice indices are 1-based throughout the engine
and converted at I/O boundaries.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DimMismatch, EmptyInitial, IcsError, OverCapacity


class Provenance(enum.Enum):
    GROUND_TRUTH = "ground_truth"
    PREDICTED = "predicted"


@dataclass(frozen=True, eq=False)
class Slice:
    """One 2-D intensity image at a 1-based position in its volume."""

    index: int
    data: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise IcsError(f"slice {self.index}: data must be a non-empty 2-D array")
        if not np.all(np.isfinite(arr)):
            raise IcsError(f"slice {self.index}: non-finite intensity values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary label image aligned to one slice."""

    data: np.ndarray  # shape (height, width), uint8 in {0, 1}

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise IcsError("mask must be a 2-D array")
        if not np.isin(arr, (0, 1)).all():
            raise IcsError("mask values must be strictly binary")
        object.__setattr__(self, "data", arr.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def is_empty(self) -> bool:
        return not self.data.any()


@dataclass(frozen=True, eq=False)
class ProbMask:
    """Per-pixel foreground probabilities, before thresholding."""

    data: np.ndarray  # shape (height, width), float64 in [0, 1]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise IcsError("probability mask must be a 2-D array")
        if np.isnan(arr).any() or arr.min() < 0.0 or arr.max() > 1.0:
            raise IcsError("probability values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Volume:
    """Ordered stack of equal-size slices with optional spacing metadata."""

    slices: tuple[Slice, ...]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    id: str = ""

    def __post_init__(self):
        slices = tuple(self.slices)
        if not slices:
            raise IcsError("volume must contain at least one slice")
        w, h = slices[0].width, slices[0].height
        for s in slices:
            if (s.width, s.height) != (w, h):
                raise DimMismatch(f"slice {s.index} is {s.width}x{s.height}, expected {w}x{h}")
        if [s.index for s in slices] != list(range(1, len(slices) + 1)):
            raise IcsError("slice indices must be exactly 1..n with no gaps")
        object.__setattr__(self, "slices", slices)

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    @property
    def width(self) -> int:
        return self.slices[0].width

    @property
    def height(self) -> int:
        return self.slices[0].height

    def slice_at(self, index: int) -> Slice:
        """Fetch a slice by its 1-based index."""
        return self.slices[index - 1]

    def to_array(self) -> np.ndarray:
        """Stack as (n, height, width)."""
        return np.stack([s.data for s in self.slices])


@dataclass(frozen=True, eq=False)
class SupportEntry:
    """One (image, label) pair in a support set."""

    image: Slice
    label: Mask
    provenance: Provenance
    source_index: int
    seq: int = 0

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.label.width, self.label.height):
            raise DimMismatch(
                f"support entry from slice {self.source_index}: image "
                f"{self.image.width}x{self.image.height} vs label "
                f"{self.label.width}x{self.label.height}"
            )


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Bounded, ordered support collection with oldest-first eviction.

    Value type: ``append`` returns a new set.  The ``seq`` counter keeps
    strictly increasing across the lifetime of a set, so "oldest" is
    defined by append order, not by slice index (backward passes append
    decreasing indices).
    """

    capacity: int
    entries: tuple[SupportEntry, ...]
    _next_seq: int = field(default=1, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: SupportEntry, pin_initial: bool = False) -> "SupportSet":
        """Append with the next seq; evict oldest entries down to capacity.

        With ``pin_initial``, only predicted entries are eviction
        candidates; ground-truth entries are skipped in oldest-first order.
        """
        ref = self.entries[0] if self.entries else entry
        if (entry.image.width, entry.image.height) != (ref.image.width, ref.image.height):
            raise DimMismatch("appended entry dimensions disagree with the set")
        stamped = replace(entry, seq=self._next_seq)
        entries = list(self.entries) + [stamped]
        while len(entries) > self.capacity:
            victim = None
            for e in entries:
                if pin_initial and e.provenance is Provenance.GROUND_TRUTH:
                    continue
                victim = e
                break
            if victim is None:
                # Every entry is pinned ground truth; fall back to plain FIFO
                # so the size bound always holds.
                victim = entries[0]
            entries.remove(victim)
        return SupportSet(self.capacity, tuple(entries), self._next_seq + 1)


def new_support_set(capacity: int, initial: Iterable[SupportEntry]) -> SupportSet:
    """Build a support set from ground-truth entries, seq = 1..len(initial)."""
    if capacity < 1:
        raise IcsError("capacity must be a positive integer")
    initial = list(initial)
    if not initial:
        raise EmptyInitial("support set needs at least one initial entry")
    if len(initial) > capacity:
        raise OverCapacity(f"{len(initial)} initial entries exceed capacity {capacity}")
    w, h = initial[0].image.width, initial[0].image.height
    stamped = []
    for i, e in enumerate(initial):
        if (e.image.width, e.image.height) != (w, h):
            raise DimMismatch("initial entries disagree on dimensions")
        stamped.append(replace(e, seq=i + 1))
    return SupportSet(capacity, tuple(stamped), len(stamped) + 1)


def append_entry(support: SupportSet, entry: SupportEntry, pin_initial: bool = False) -> SupportSet:
    """Functional alias for :meth:`SupportSet.append`."""
    return support.append(entry, pin_initial=pin_initial)


@dataclass(frozen=True)
class CascadeConfig:
    """Knobs shared by baseline and cascade runs."""

    capacity: int = 5
    prob_threshold: float = 0.5
    augment: bool = True
    pin_initial: bool = False
    faithful_loops: bool = False
    backend_id: str = "ref"

    def __post_init__(self):
        if self.capacity < 1:
            raise IcsError("capacity must be >= 1")
        if not (0.0 < self.prob_threshold < 1.0):
            raise IcsError("prob_threshold must lie strictly between 0 and 1")

    def as_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "prob_threshold": self.prob_threshold,
            "augment": self.augment,
            "pin_initial": self.pin_initial,
            "faithful_loops": self.faithful_loops,
            "backend_id": self.backend_id,
        }


def volume_from_array(data: np.ndarray, spacing=(1.0, 1.0, 1.0), vol_id: str = "") -> Volume:
    """Build a Volume from an (n, height, width) array."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    slices = tuple(Slice(index=i + 1, data=plane) for i, plane in enumerate(data))
    return Volume(slices=slices, spacing=tuple(spacing), id=vol_id)


def masks_from_array(data: np.ndarray) -> tuple[Mask, ...]:
    """Binarize an (n, height, width) label array into per-slice masks."""
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[None]
    return tuple(Mask((plane > 0).astype(np.uint8)) for plane in data)
