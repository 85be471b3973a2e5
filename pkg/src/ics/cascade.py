"""Bidirectional cascade segmentation and the fixed-support baseline.

Both runners share one inference pipeline: normalize the query, augment
the current support (rotations), resample everything to the backend's
required size if it has one, segment, resample the probabilities back,
and threshold.  The cascade additionally appends each thresholded
prediction to its directional support set, evicting oldest-first at
capacity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    CascadeConfig,
    Mask,
    ProbMask,
    Provenance,
    Slice,
    SupportEntry,
    SupportSet,
    new_support_set,
)
from .errors import BackendFailure, IcsError
from .segmenter import SegmenterBackend, normalize_slice, resample, threshold
from .volume_io import CaseBundle


class NonContiguousInitial(IcsError):
    pass


@dataclass(frozen=True)
class InitialSupportSpec:
    """The initially labeled slices: a contiguous, sorted index block."""

    indices: tuple[int, ...]
    bundle: CaseBundle

    def __post_init__(self):
        idx = tuple(self.indices)
        n = self.bundle.n_slices
        if not idx:
            raise NonContiguousInitial("initial support needs at least one slice")
        if list(idx) != sorted(set(idx)):
            raise NonContiguousInitial("initial indices must be sorted and unique")
        if idx[0] < 1 or idx[-1] > n:
            raise NonContiguousInitial(f"initial indices must lie in 1..{n}")
        if idx[-1] - idx[0] + 1 != len(idx):
            raise NonContiguousInitial("initial indices must form a contiguous block")
        object.__setattr__(self, "indices", idx)

    @property
    def start(self) -> int:
        return self.indices[0]

    @property
    def count(self) -> int:
        return len(self.indices)

    def entries(self) -> list[SupportEntry]:
        return [
            SupportEntry(
                image=self.bundle.image.slice_at(i),
                label=self.bundle.label_at(i),
                provenance=Provenance.GROUND_TRUTH,
                source_index=i,
            )
            for i in self.indices
        ]


@dataclass(eq=False)
class CascadeResult:
    masks: dict[int, Mask]
    direction_of: dict[int, str]  # "forward" | "backward"
    per_slice_prob: dict[int, ProbMask] = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _rot90(a: np.ndarray, quarter_turns: int) -> np.ndarray:
    return np.rot90(a, k=quarter_turns)


def _pad_square(a: np.ndarray) -> np.ndarray:
    h, w = a.shape
    if h == w:
        return a
    side = max(h, w)
    top = (side - h) // 2
    left = (side - w) // 2
    out = np.zeros((side, side), dtype=a.dtype)
    out[top : top + h, left : left + w] = a
    return out


def augment_support(entries: Sequence[SupportEntry]) -> list[SupportEntry]:
    """Originals followed by 90/180/270-degree rotations of each entry.

    Rotations are exact array transpose/flip; non-square entries are
    center-padded to square with zeros first so quarter turns keep the
    grid shape.
    """
    out = list(entries)
    for turns in (1, 2, 3):
        for e in entries:
            img = _pad_square(e.image.data)
            lab = _pad_square(e.label.data)
            out.append(
                SupportEntry(
                    image=Slice(index=e.image.index, data=_rot90(img, turns)),
                    label=Mask(_rot90(lab, turns)),
                    provenance=e.provenance,
                    source_index=e.source_index,
                    seq=e.seq,
                )
            )
    return out


def _predict_one(
    query: Slice,
    entries: Sequence[SupportEntry],
    backend: SegmenterBackend,
    cfg: CascadeConfig,
) -> tuple[Mask, ProbMask]:
    originals = list(entries)
    if cfg.augment:
        entries = augment_support(entries)
    max_support = getattr(backend, "max_support", 0) or 0
    if max_support and len(entries) > max_support:
        # Newest entries' augmented groups first, truncated to the limit.
        groups = []
        per = len(entries) // len(originals)
        for gi, e in enumerate(originals):
            groups.append([entries[gi + j * len(originals)] for j in range(per)])
        flat = [e for group in reversed(groups) for e in group]
        entries = flat[:max_support]
    q = normalize_slice(query)
    entries = [
        replace(e, image=normalize_slice(e.image)) for e in entries
    ]
    orig_wh = (query.width, query.height)
    target = backend.required_size
    if target is None and cfg.augment and query.width != query.height:
        # Rotation padding made the support square; present the query the
        # same way and crop the probabilities back afterwards.
        side = max(orig_wh)
        qdata = _pad_square(q.data)
        entries = [
            replace(
                e,
                image=Slice(index=e.image.index, data=_pad_square(e.image.data)),
                label=Mask(_pad_square(e.label.data)),
            )
            for e in entries
        ]
        prob = backend.segment(Slice(index=q.index, data=qdata), entries)
        top = (side - query.height) // 2
        left = (side - query.width) // 2
        prob = ProbMask(prob.data[top : top + query.height, left : left + query.width])
        return threshold(prob, cfg.prob_threshold), prob
    if target is not None and target != orig_wh:
        q = resample(q, target)
        entries = [
            replace(e, image=resample(e.image, target), label=resample(e.label, target))
            for e in entries
        ]
    prob = backend.segment(q, entries)
    if target is not None and target != orig_wh:
        prob = resample(prob, orig_wh)
    return threshold(prob, cfg.prob_threshold), prob


def run_baseline(
    bundle: CaseBundle,
    spec: InitialSupportSpec,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
    keep_probs: bool = False,
) -> CascadeResult:
    """Fixed-support sequential inference: the support set never updates."""
    entries = spec.entries()
    result = CascadeResult(masks={}, direction_of={})
    t0 = time.perf_counter()
    for i in range(1, bundle.n_slices + 1):
        if i in spec.indices:
            continue
        try:
            mask, prob = _predict_one(bundle.image.slice_at(i), entries, backend, cfg)
        except IcsError as exc:
            raise BackendFailure(i, exc) from exc
        result.masks[i] = mask
        result.direction_of[i] = "forward" if i > spec.indices[-1] else "backward"
        if keep_probs:
            result.per_slice_prob[i] = prob
    result.timings["total_s"] = time.perf_counter() - t0
    return result


def _directional_pass(
    bundle: CaseBundle,
    spec: InitialSupportSpec,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
    indices: list[int],
    direction: str,
    result: CascadeResult,
    keep_probs: bool,
) -> None:
    support = new_support_set(cfg.capacity, spec.entries())
    for i in indices:
        assert len(support) <= cfg.capacity
        try:
            mask, prob = _predict_one(bundle.image.slice_at(i), support.entries, backend, cfg)
        except IcsError as exc:
            raise BackendFailure(i, exc) from exc
        if i not in result.masks:
            result.masks[i] = mask
            result.direction_of[i] = direction
            if keep_probs:
                result.per_slice_prob[i] = prob
        entry = SupportEntry(
            image=bundle.image.slice_at(i),
            label=mask,
            provenance=Provenance.PREDICTED,
            source_index=i,
        )
        support = support.append(entry, pin_initial=cfg.pin_initial)


def run_ics(
    bundle: CaseBundle,
    spec: InitialSupportSpec,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
    keep_probs: bool = False,
) -> CascadeResult:
    """Bidirectional cascade: predictions feed back into the support set.

    Forward covers indices above the initial block in ascending order,
    backward covers indices below it in descending order, each starting
    from an independent copy of the initial support.  By default only
    unlabeled slices are predicted; ``cfg.faithful_loops`` starts each
    pass at the block edge itself (re-predicting a labeled slice), which
    mirrors the literal loop bounds of the cascade procedure.
    """
    n = bundle.n_slices
    hi, lo = spec.indices[-1], spec.indices[0]
    if cfg.faithful_loops:
        fwd = list(range(hi, n + 1))
        bwd = list(range(lo, 0, -1))
    else:
        fwd = list(range(hi + 1, n + 1))
        bwd = list(range(lo - 1, 0, -1))
    result = CascadeResult(masks={}, direction_of={})
    t0 = time.perf_counter()
    _directional_pass(bundle, spec, backend, cfg, fwd, "forward", result, keep_probs)
    _directional_pass(bundle, spec, backend, cfg, bwd, "backward", result, keep_probs)
    result.timings["total_s"] = time.perf_counter() - t0
    return result
