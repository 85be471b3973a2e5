"""Segmenter backend contract, preprocessing, and the reference backend.

The reference backend is patch-kNN label transfer: for every query pixel it
searches a Chebyshev window in each support image for the patches most
similar to the query patch and blends the support labels at the candidate
centers with Gaussian-of-SSD weights.  It is deterministic, training-free,
and genuinely in-context, which makes cascade behaviour testable without
neural weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import Mask, ProbMask, Slice, SupportEntry
from .errors import DimMismatch, IcsError


class EmptySupport(IcsError):
    """segment() was called with no support entries."""


@runtime_checkable
class SegmenterBackend(Protocol):
    """Contract every backend fulfils: (query, support) -> probabilities."""

    id: str
    required_size: tuple[int, int] | None  # (width, height); None = native

    def segment(self, query: Slice, support: Sequence[SupportEntry]) -> ProbMask:
        ...


@dataclass(frozen=True)
class RefSegParams:
    patch_size: int = 5
    search_radius: int = 4
    k: int = 7
    bandwidth: float = 0.5

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise IcsError("patch_size must be an odd integer >= 3")
        if self.search_radius < 0:
            raise IcsError("search_radius must be >= 0")
        if self.k < 1:
            raise IcsError("k must be >= 1")
        if self.bandwidth <= 0:
            raise IcsError("bandwidth must be positive")


def normalize_slice(s: Slice) -> Slice:
    """Min-max rescale intensities to [0, 1]; constant slices become zeros."""
    lo = s.data.min()
    hi = s.data.max()
    if hi == lo:
        return Slice(index=s.index, data=np.zeros_like(s.data))
    return Slice(index=s.index, data=(s.data - lo) / (hi - lo))


def _resample_array(a: np.ndarray, target_wh: tuple[int, int], mode: str) -> np.ndarray:
    tw, th = target_wh
    if tw < 1 or th < 1:
        raise IcsError("resample target must be at least 1x1")
    sh, sw = a.shape
    if (sw, sh) == (tw, th):
        return a.copy()
    # align-corners-false: src = (dst + 0.5) * scale - 0.5, clamped
    sy = (np.arange(th) + 0.5) * (sh / th) - 0.5
    sx = (np.arange(tw) + 0.5) * (sw / tw) - 0.5
    if mode == "nearest":
        iy = np.clip(np.round(sy).astype(int), 0, sh - 1)
        ix = np.clip(np.round(sx).astype(int), 0, sw - 1)
        return a[np.ix_(iy, ix)]
    if mode != "bilinear":
        raise IcsError(f"unknown resample mode {mode!r}")
    sy = np.clip(sy, 0.0, sh - 1.0)
    sx = np.clip(sx, 0.0, sw - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]
    a = a.astype(np.float64)
    top = a[np.ix_(y0, x0)] * (1 - wx) + a[np.ix_(y0, x1)] * wx
    bot = a[np.ix_(y1, x0)] * (1 - wx) + a[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def resample(image, target_wh: tuple[int, int], mode: str | None = None):
    """Resize a Slice/ProbMask (bilinear) or Mask (nearest) to (w, h)."""
    if isinstance(image, Mask):
        out = _resample_array(image.data, target_wh, mode or "nearest")
        return Mask(out.astype(np.uint8))
    if isinstance(image, ProbMask):
        return ProbMask(_resample_array(image.data, target_wh, mode or "bilinear"))
    if isinstance(image, Slice):
        return Slice(index=image.index, data=_resample_array(image.data, target_wh, mode or "bilinear"))
    raise IcsError(f"cannot resample {type(image).__name__}")


def threshold(prob: ProbMask, t: float) -> Mask:
    """Binarize at t with the >= convention."""
    if not (0.0 < t < 1.0):
        raise IcsError("threshold must lie strictly between 0 and 1")
    return Mask((prob.data >= t).astype(np.uint8))


def ref_segment(query: Slice, support: Sequence[SupportEntry], params: RefSegParams = RefSegParams()) -> ProbMask:
    """Patch-kNN label transfer from the support pairs onto the query.

    Candidates for pixel (x, y) are the support-image positions within
    Chebyshev distance r, every support entry; scores are patch SSDs
    (reflect-padded, row-major accumulation); the k best candidates are
    blended with weights exp(-ssd / (p^2 * sigma^2)).  Ties break by
    (entry position, dy, dx) ascending, making the output bit-reproducible.
    """
    support = list(support)
    if not support:
        raise EmptySupport("reference backend needs at least one support entry")
    h, w = query.data.shape
    for e in support:
        if e.image.data.shape != (h, w):
            raise DimMismatch("support entry dimensions differ from query")

    p = params.patch_size
    r = params.search_radius
    hp = p // 2
    qn = normalize_slice(query).data
    qpad = np.pad(qn, hp, mode="reflect")

    offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
    n_cand = len(support) * len(offsets)
    scores = np.empty((n_cand, h, w), dtype=np.float64)
    labels = np.empty((n_cand, h, w), dtype=np.float64)

    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    ci = 0
    for entry in support:
        sn = normalize_slice(entry.image).data
        spad = np.pad(sn, hp + r, mode="reflect")
        lab = entry.label.data.astype(np.float64)
        for dy, dx in offsets:
            # SSD accumulated in row-major patch order for reproducibility.
            diff2 = (qpad - spad[r + dy : r + dy + h + 2 * hp, r + dx : r + dx + w + 2 * hp]) ** 2
            ssd = np.zeros((h, w), dtype=np.float64)
            for u in range(p):
                for v in range(p):
                    ssd += diff2[u : u + h, v : v + w]
            cy = ys + dy
            cx = xs + dx
            valid = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
            ssd = np.where(valid, ssd, np.inf)
            cyc = np.clip(cy, 0, h - 1)
            cxc = np.clip(cx, 0, w - 1)
            scores[ci] = ssd
            labels[ci] = np.where(valid, lab[cyc, cxc], 0.0)
            ci += 1

    k = min(params.k, n_cand)
    flat_scores = scores.reshape(n_cand, -1)
    flat_labels = labels.reshape(n_cand, -1)
    # Stable sort keeps enumeration order (entry, dy, dx) on equal scores.
    order = np.argsort(flat_scores, axis=0, kind="stable")[:k]
    cols = np.arange(flat_scores.shape[1])[None, :]
    top_scores = flat_scores[order, cols]
    top_labels = flat_labels[order, cols]

    denom = p * p * params.bandwidth**2
    weights = np.where(np.isinf(top_scores), 0.0, np.exp(-top_scores / denom))
    # Sequential accumulation in ascending-score order (matches the
    # per-pixel reference evaluation order exactly).
    num = np.zeros(flat_scores.shape[1])
    den = np.zeros(flat_scores.shape[1])
    for i in range(k):
        num += weights[i] * top_labels[i]
        den += weights[i]
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return ProbMask(np.clip(out.reshape(h, w), 0.0, 1.0))


@dataclass
class ReferenceBackend:
    """Built-in deterministic backend wrapping :func:`ref_segment`."""

    params: RefSegParams = RefSegParams()
    id: str = "ref"
    required_size: tuple[int, int] | None = None

    def segment(self, query: Slice, support: Sequence[SupportEntry]) -> ProbMask:
        return ref_segment(query, support, self.params)

    def close(self):
        pass
