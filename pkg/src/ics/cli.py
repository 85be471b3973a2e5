"""Command-line entry points.

Exit codes: 0 success, 2 input error, 3 backend failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .cascade import InitialSupportSpec, run_baseline, run_ics
from .core import CascadeConfig, volume_from_array
from .errors import BackendFailure, IcsError
from .harness import (
    PRESETS,
    build_report,
    gen_phantom,
    run_compare,
    sweep_m,
    sweep_position,
    write_sweep_csv,
)
from .bridge import bridge_spawn
from .metrics import dsc, drop_empty_slices
from .segmenter import ReferenceBackend
from .volume_io import CaseBundle, load_case, read_nifti, write_nifti, write_run_report
from .core import Mask, Volume


def _reorient(volume: Volume, axis: int) -> Volume:
    """Re-stack so propagation runs along the chosen stored axis (default 2)."""
    if axis == 2:
        return volume
    arr = volume.to_array()  # (slice, row, col) = stored axes (3, 2, 1)
    if axis == 1:
        arr = arr.transpose(1, 0, 2)
    elif axis == 0:
        arr = arr.transpose(2, 1, 0)
    else:
        raise IcsError("--axis must be 0, 1, or 2")
    return volume_from_array(arr, vol_id=volume.id)


def _load_bundle(image, label, region, axis, keep_empty):
    img = _reorient(read_nifti(image), axis)
    lab = _reorient(read_nifti(label), axis)
    if (lab.n_slices, lab.height, lab.width) != (img.n_slices, img.height, img.width):
        raise IcsError("image and label shapes disagree")
    masks = tuple(Mask((s.data > 0).astype(np.uint8)) for s in lab.slices)
    bundle = CaseBundle(image=img, labels=masks, region=region)
    if not keep_empty:
        bundle = drop_empty_slices(bundle)
    return bundle


def _make_backend(spec: str):
    if spec == "ref":
        return ReferenceBackend()
    if spec.startswith("bridge:"):
        return bridge_spawn(spec[len("bridge:"):])
    raise IcsError(f"unknown backend {spec!r}; use 'ref' or 'bridge:<command>'")


def _config(backend_spec, augment, pin_initial, faithful_loops, threshold, m):
    return CascadeConfig(
        capacity=m,
        prob_threshold=threshold,
        augment=augment,
        pin_initial=pin_initial,
        faithful_loops=faithful_loops,
        backend_id=backend_spec,
    )


def _parse_m_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


common_input = [
    click.option("--image", required=True, type=click.Path(exists=True)),
    click.option("--label", required=True, type=click.Path(exists=True)),
    click.option("--region", default="region"),
    click.option("--backend", "backend_spec", default="ref", show_default=True),
    click.option("--out", "out_dir", required=True, type=click.Path()),
    click.option("--no-augment", "augment", flag_value=False, default=True),
    click.option("--pin-initial", is_flag=True),
    click.option("--faithful-loops", is_flag=True),
    click.option("--threshold", default=0.5, show_default=True),
    click.option("--axis", default=2, show_default=True),
    click.option("--keep-empty-slices", is_flag=True, help="Skip the empty-slice removal step."),
]


def _with_options(options):
    def wrap(f):
        for opt in reversed(options):
            f = opt(f)
        return f

    return wrap


@click.group()
def cli():
    """Cascade segmentation engine."""


@cli.command("run")
@_with_options(common_input)
@click.option("--init-start", required=True, type=int)
@click.option("--init-count", "m", default=5, show_default=True)
@click.option("--method", type=click.Choice(["ics", "baseline"]), default="ics")
def run_cmd(image, label, region, backend_spec, out_dir, augment, pin_initial,
            faithful_loops, threshold, axis, keep_empty_slices, init_start, m, method):
    """Segment one case with a fixed or cascading support set."""
    bundle = _load_bundle(image, label, region, axis, keep_empty_slices)
    cfg = _config(backend_spec, augment, pin_initial, faithful_loops, threshold, m)
    spec = InitialSupportSpec(indices=tuple(range(init_start, init_start + m)), bundle=bundle)
    backend = _make_backend(backend_spec)
    try:
        runner = run_ics if method == "ics" else run_baseline
        result = runner(bundle, spec, backend, cfg)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()
    report = build_report(bundle, spec, cfg, method, result)
    path = write_run_report(report, out_dir)
    click.echo(f"wrote {path}")
    if "mean_dsc" in report.aggregates:
        click.echo(f"mean DSC: {report.aggregates['mean_dsc']:.6f}")


@cli.command("compare")
@_with_options(common_input)
@click.option("--init-start", required=True, type=int)
@click.option("--init-count", "m", default=5, show_default=True)
def compare_cmd(image, label, region, backend_spec, out_dir, augment, pin_initial,
                faithful_loops, threshold, axis, keep_empty_slices, init_start, m):
    """Run baseline and cascade on the same block; report the paired test."""
    bundle = _load_bundle(image, label, region, axis, keep_empty_slices)
    cfg = _config(backend_spec, augment, pin_initial, faithful_loops, threshold, m)
    backend = _make_backend(backend_spec)
    try:
        cmp_report = run_compare(bundle, init_start, m, backend, cfg)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()
    write_run_report(cmp_report.baseline, out_dir)
    write_run_report(cmp_report.ics, out_dir)
    if cmp_report.note:
        click.echo(f"paired test: {cmp_report.note}")
    elif cmp_report.test is not None:
        t = cmp_report.test
        click.echo(f"paired test ({t.method}): statistic={t.statistic:.6f} p={t.p_value:.6f}")
    for rep in (cmp_report.baseline, cmp_report.ics):
        if "mean_dsc" in rep.aggregates:
            click.echo(f"{rep.method}: mean DSC {rep.aggregates['mean_dsc']:.6f}")


@cli.command("sweep-m")
@_with_options(common_input)
@click.option("--m", "m_range", default="1..5", show_default=True)
def sweep_m_cmd(image, label, region, backend_spec, out_dir, augment, pin_initial,
                faithful_loops, threshold, axis, keep_empty_slices, m_range):
    """Cascade runs for each support-set size, centred initial block."""
    bundle = _load_bundle(image, label, region, axis, keep_empty_slices)
    m_values = _parse_m_range(m_range)
    cfg = _config(backend_spec, augment, pin_initial, faithful_loops, threshold, max(m_values))
    backend = _make_backend(backend_spec)
    try:
        report = sweep_m(bundle, backend, cfg, m_values)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(report, out / "sweep_m.csv")
    click.echo(f"wrote {out / 'sweep_m.csv'}")


@cli.command("sweep-pos")
@_with_options(common_input)
@click.option("--init-count", "m", default=5, show_default=True)
@click.option("--positions", default="all", show_default=True)
def sweep_pos_cmd(image, label, region, backend_spec, out_dir, augment, pin_initial,
                  faithful_loops, threshold, axis, keep_empty_slices, m, positions):
    """Baseline and cascade at each initial block position."""
    bundle = _load_bundle(image, label, region, axis, keep_empty_slices)
    cfg = _config(backend_spec, augment, pin_initial, faithful_loops, threshold, m)
    pos = "all" if positions == "all" else [int(x) for x in positions.split(",") if x]
    backend = _make_backend(backend_spec)
    try:
        report = sweep_position(bundle, backend, cfg, m, pos)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(report, out / "sweep_pos.csv")
    click.echo(f"wrote {out / 'sweep_pos.csv'}")


@cli.command("synth")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), required=True)
@click.option("--seed", default=0, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth_cmd(preset, seed, out_dir):
    """Generate a phantom case as an image/label NIfTI pair."""
    from dataclasses import replace

    cfg = replace(PRESETS[preset], rng_seed=seed)
    bundle = gen_phantom(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_nifti(bundle.image, out / "image.nii.gz")
    labels = volume_from_array(
        np.stack([m.data.astype(np.float64) for m in bundle.labels]), vol_id=bundle.image.id
    )
    write_nifti(labels, out / "label.nii.gz")
    click.echo(f"wrote {out / 'image.nii.gz'} and {out / 'label.nii.gz'}")


@cli.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--gt", required=True, type=click.Path(exists=True))
def eval_cmd(pred, gt):
    """Print per-slice and mean DSC between two mask volumes."""
    pv = read_nifti(pred)
    gv = read_nifti(gt)
    if (pv.n_slices, pv.height, pv.width) != (gv.n_slices, gv.height, gv.width):
        raise IcsError("prediction and ground-truth shapes disagree")
    vals = []
    for i in range(1, pv.n_slices + 1):
        p = Mask((pv.slice_at(i).data > 0).astype(np.uint8))
        g = Mask((gv.slice_at(i).data > 0).astype(np.uint8))
        v = dsc(p, g)
        vals.append(v)
        click.echo(f"slice {i}: {v:.6f}")
    click.echo(f"mean: {float(np.mean(vals)):.6f}")


def entrypoint(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 2
    except BackendFailure as exc:
        click.echo(f"backend failure: {exc}", err=True)
        return 3
    except IcsError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def main(argv=None):
    sys.exit(entrypoint(argv))


if __name__ == "__main__":
    main()
