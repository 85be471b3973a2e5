"""Experiment drivers: synthetic phantoms, baseline-vs-cascade comparison,
support-count sweep, and seed-position sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cascade import CascadeResult, InitialSupportSpec, run_baseline, run_ics
from .core import CascadeConfig, Mask, Volume, volume_from_array
from .errors import IcsError
from .metrics import DscStats, PairedTestResult, TooFewPairs, aggregate, dsc, paired_test
from .segmenter import SegmenterBackend
from .volume_io import CaseBundle, RunReport


class ShapeOutOfBounds(IcsError):
    pass


class EmptySweep(IcsError):
    pass


@dataclass(frozen=True)
class PhantomConfig:
    n_slices: int = 40
    width: int = 64
    height: int = 64
    shape: str = "disk"  # "disk" | "tube-with-branch"
    radius: float = 12.0
    center: tuple[float, float] = (32.0, 32.0)  # (x, y) on slice 1
    drift_per_slice: tuple[float, float] = (0.0, 0.0)  # (dx, dy)
    radius_growth_per_slice: float = 0.0
    noise_std: float = 0.0
    rng_seed: int = 0
    mirrored: bool = False  # palindromic stack: slice k == slice n+1-k


def _disk(h: int, w: int, cx: float, cy: float, r: float) -> np.ndarray:
    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    return ((xs - cx) ** 2 + (ys - cy) ** 2 <= r * r).astype(np.uint8)


def _shape_mask(cfg: PhantomConfig, cx: float, cy: float, r: float) -> np.ndarray:
    mask = _disk(cfg.height, cfg.width, cx, cy, r)
    if cfg.shape == "tube-with-branch":
        # Side branch: a half-radius disk offset diagonally from the tube.
        mask |= _disk(cfg.height, cfg.width, cx + 1.2 * r, cy - 0.8 * r, r / 2.0)
    elif cfg.shape != "disk":
        raise IcsError(f"unknown phantom shape {cfg.shape!r}")
    return mask


def gen_phantom(cfg: PhantomConfig) -> CaseBundle:
    """Deterministic synthetic case: drifting/growing shape over noise.

    The shape centre must stay inside the image on every slice; the
    rendered shape is clipped at the borders.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    images = np.zeros((cfg.n_slices, cfg.height, cfg.width))
    labels = []
    n = cfg.n_slices
    for k in range(1, n + 1):
        step = min(k, n + 1 - k) - 1 if cfg.mirrored else k - 1
        cx = cfg.center[0] + step * cfg.drift_per_slice[0]
        cy = cfg.center[1] + step * cfg.drift_per_slice[1]
        r = cfg.radius + step * cfg.radius_growth_per_slice
        if not (0 <= cx < cfg.width and 0 <= cy < cfg.height) or r < 1:
            raise ShapeOutOfBounds(f"slice {k}: centre ({cx}, {cy}) radius {r} leaves the image")
        shape = _shape_mask(cfg, cx, cy, r)
        img = shape.astype(np.float64)
        if cfg.noise_std > 0:
            img = img + rng.normal(0.0, cfg.noise_std, size=img.shape)
        images[k - 1] = img
        labels.append(Mask(shape))
    volume = volume_from_array(images, vol_id=f"phantom-{cfg.shape}-{cfg.rng_seed}")
    return CaseBundle(image=volume, labels=tuple(labels), region=cfg.shape)


PRESETS = {
    "drifting-disk": PhantomConfig(drift_per_slice=(1.0, 0.0), center=(12.0, 32.0)),
    "constant": PhantomConfig(),
    "mirrored": PhantomConfig(
        n_slices=41, drift_per_slice=(1.0, 0.0), center=(12.0, 32.0), mirrored=True
    ),
}


def centered_block(n: int, m: int) -> tuple[int, ...]:
    """Initial block of m slices near the centre: start = floor((n-m)/2)+1."""
    start = (n - m) // 2 + 1
    return tuple(range(start, start + m))


def score_result(bundle: CaseBundle, result: CascadeResult) -> list[tuple[int, float]]:
    return [(i, dsc(mask, bundle.label_at(i))) for i, mask in sorted(result.masks.items())]


def merged_stack(bundle: CaseBundle, result: CascadeResult) -> Volume:
    """Predictions merged with ground truth at the labeled indices."""
    planes = []
    for i in range(1, bundle.n_slices + 1):
        mask = result.masks.get(i, bundle.label_at(i))
        planes.append(mask.data.astype(np.float64))
    return volume_from_array(np.stack(planes), spacing=bundle.image.spacing, vol_id=bundle.image.id)


def build_report(
    bundle: CaseBundle,
    spec: InitialSupportSpec,
    cfg: CascadeConfig,
    method: str,
    result: CascadeResult,
) -> RunReport:
    per_slice = score_result(bundle, result)
    stats = aggregate(per_slice) if per_slice else None
    aggregates = {}
    if stats is not None:
        aggregates = {"mean_dsc": stats.mean, "std_dsc": stats.std, "n_slices": stats.n}
    return RunReport(
        run_id=f"{bundle.image.id or 'case'}_{bundle.region}_{method}_m{spec.count}_s{spec.start}",
        case_id=bundle.image.id or "case",
        region=bundle.region,
        method=method,
        m=spec.count,
        seed_start=spec.start,
        config=cfg.as_dict(),
        per_slice=per_slice,
        masks=result.masks,
        full_stack=merged_stack(bundle, result),
        aggregates=aggregates,
        timings={k: float(v) for k, v in result.timings.items()},
    )


@dataclass(eq=False)
class ComparisonReport:
    baseline: RunReport
    ics: RunReport
    test: PairedTestResult | None
    note: str = ""


def run_compare(
    bundle: CaseBundle,
    start: int,
    m: int,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
) -> ComparisonReport:
    """Run baseline and cascade with the same initial block; pair the DSCs."""
    spec = InitialSupportSpec(indices=tuple(range(start, start + m)), bundle=bundle)
    if m >= bundle.n_slices:
        return ComparisonReport(
            baseline=build_report(bundle, spec, cfg, "baseline", CascadeResult({}, {})),
            ics=build_report(bundle, spec, cfg, "ics", CascadeResult({}, {})),
            test=None,
            note="NoQuerySlices",
        )
    base = run_baseline(bundle, spec, backend, cfg)
    casc = run_ics(bundle, spec, backend, cfg)
    base_report = build_report(bundle, spec, cfg, "baseline", base)
    ics_report = build_report(bundle, spec, cfg, "ics", casc)
    a = [v for _, v in ics_report.per_slice]
    b = [v for _, v in base_report.per_slice]
    try:
        test = paired_test(a, b)
        note = ""
    except TooFewPairs:
        test = None
        note = "identical"
    return ComparisonReport(baseline=base_report, ics=ics_report, test=test, note=note)


@dataclass(frozen=True)
class SweepSpec:
    m_values: tuple[int, ...] = (1, 2, 3, 4, 5)
    positions: tuple[int, ...] | str = "all"
    methods: tuple[str, ...] = ("baseline", "ics")

    def __post_init__(self):
        if any(m < 1 for m in self.m_values):
            raise IcsError("every m must be >= 1")


@dataclass(eq=False)
class SweepReport:
    rows: list[dict]  # plot-ready records
    reports: list[RunReport] = field(default_factory=list)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        keys = list(self.rows[0].keys())
        lines = [",".join(keys)]
        for row in self.rows:
            cells = []
            for k in keys:
                v = row[k]
                cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def sweep_m(
    bundle: CaseBundle,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
    m_values: Sequence[int] = (1, 2, 3, 4, 5),
) -> SweepReport:
    """Cascade runs with the initial block centred, one per support count."""
    if not m_values:
        raise EmptySweep("no m values to sweep")
    if max(m_values) > bundle.n_slices:
        raise IcsError(f"m={max(m_values)} exceeds the {bundle.n_slices}-slice volume")
    rows = []
    reports = []
    for m in m_values:
        indices = centered_block(bundle.n_slices, m)
        spec = InitialSupportSpec(indices=indices, bundle=bundle)
        run_cfg = CascadeConfig(**{**cfg.as_dict(), "capacity": m})
        result = run_ics(bundle, spec, backend, run_cfg)
        report = build_report(bundle, spec, run_cfg, "ics", result)
        reports.append(report)
        for idx, val in report.per_slice:
            rows.append(
                {
                    "case": report.case_id,
                    "region": report.region,
                    "method": "ics",
                    "m": m,
                    "seed_start": spec.start,
                    "slice": idx,
                    "dsc": val,
                }
            )
    return SweepReport(rows=rows, reports=reports)


def sweep_position(
    bundle: CaseBundle,
    backend: SegmenterBackend,
    cfg: CascadeConfig,
    m: int,
    positions: Sequence[int] | str = "all",
) -> SweepReport:
    """Baseline and cascade at each initial block start, m fixed."""
    n = bundle.n_slices
    if positions == "all":
        positions = list(range(1, n - m + 2))
    positions = list(positions)
    if not positions:
        raise EmptySweep("no positions to sweep")
    for s in positions:
        if s < 1 or s + m - 1 > n:
            raise IcsError(f"block start {s} with m={m} leaves 1..{n}")
    rows = []
    reports = []
    for s in positions:
        spec = InitialSupportSpec(indices=tuple(range(s, s + m)), bundle=bundle)
        for method, runner in (("baseline", run_baseline), ("ics", run_ics)):
            result = runner(bundle, spec, backend, cfg)
            report = build_report(bundle, spec, cfg, method, result)
            reports.append(report)
            mean = report.aggregates.get("mean_dsc", float("nan"))
            rows.append(
                {
                    "case": report.case_id,
                    "region": report.region,
                    "method": method,
                    "m": m,
                    "seed_start": s,
                    "mean_dsc": mean,
                    "std_dsc": report.aggregates.get("std_dsc", float("nan")),
                }
            )
    return SweepReport(rows=rows, reports=reports)


def write_sweep_csv(report: SweepReport, path) -> None:
    Path(path).write_text(report.to_csv(), newline="\n")
