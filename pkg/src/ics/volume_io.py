"""Disk I/O: minimal single-file NIfTI-1 reader/writer, case loading, and
deterministic run reports.

Only the subset of NIfTI-1 needed here is implemented: single-file
("n+1") layout, five datatype codes, pixdim spacing.  Orientation and
affine handling are out of scope.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Mask, Volume, volume_from_array
from .errors import IcsError

HEADER_SIZE = 348
VOX_OFFSET = 352

_DTYPES = {
    2: np.dtype("uint8"),
    4: np.dtype("int16"),
    8: np.dtype("int32"),
    16: np.dtype("float32"),
    64: np.dtype("float64"),
}


class BadMagic(IcsError):
    pass


class UnsupportedDatatype(IcsError):
    pass


class TruncatedFile(IcsError):
    pass


class IoFailure(IcsError):
    pass


class InvalidVolume(IcsError):
    pass


class ShapeMismatch(IcsError):
    pass


@dataclass
class NiftiHeader:
    dims: tuple[int, ...]
    datatype_code: int
    bitpix: int
    scl_slope: float
    scl_inter: float
    vox_offset: int
    pixdim: tuple[float, ...]
    magic: bytes


def _read_raw(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_header(raw: bytes) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"file is {len(raw)} bytes, shorter than the {HEADER_SIZE}-byte header")
    endian = "<"
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        endian = ">"
        (sizeof_hdr,) = struct.unpack_from(">i", raw, 0)
        if sizeof_hdr != HEADER_SIZE:
            raise BadMagic("sizeof_hdr is not 348 in either byte order")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise BadMagic(f"unsupported magic {magic!r}; only single-file 'n+1' is handled")
    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype, bitpix = struct.unpack_from(endian + "2h", raw, 70)
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", raw, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", raw, 112)
    if dim[0] not in (2, 3):
        raise BadMagic(f"dim[0] = {dim[0]}; only 2-D and 3-D files are handled")
    if datatype not in _DTYPES:
        raise UnsupportedDatatype(f"datatype code {datatype} not in supported subset")
    hdr = NiftiHeader(
        dims=tuple(dim),
        datatype_code=datatype,
        bitpix=bitpix,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        vox_offset=int(vox_offset),
        pixdim=tuple(pixdim),
        magic=magic,
    )
    hdr._endian = endian  # type: ignore[attr-defined]
    return hdr


def read_nifti(path) -> Volume:
    """Read a (possibly gzipped) single-file NIfTI-1 volume.

    Slice k is the k-th plane along the third stored axis; values are
    raw * scl_slope + scl_inter when scl_slope != 0.
    """
    raw = _read_raw(path)
    hdr = parse_header(raw)
    endian = getattr(hdr, "_endian", "<")
    w, h = hdr.dims[1], hdr.dims[2]
    n = hdr.dims[3] if hdr.dims[0] == 3 else 1
    dtype = _DTYPES[hdr.datatype_code].newbyteorder(endian)
    payload_len = w * h * n * dtype.itemsize
    if len(raw) < hdr.vox_offset + payload_len:
        raise TruncatedFile(
            f"file is {len(raw)} bytes; need {hdr.vox_offset + payload_len} for the declared dims"
        )
    data = np.frombuffer(raw, dtype=dtype, count=w * h * n, offset=hdr.vox_offset)
    data = data.reshape(n, h, w).astype(np.float64)
    if hdr.scl_slope != 0.0:
        data = data * hdr.scl_slope + hdr.scl_inter
    spacing = tuple(float(d) for d in hdr.pixdim[1:4])
    return volume_from_array(data, spacing=spacing, vol_id=Path(path).name.split(".")[0])


def write_nifti(volume: Volume, path) -> None:
    """Write a single-file NIfTI-1, datatype f32, vox_offset 352.

    ``read_nifti(write_nifti(v))`` is voxel-exact for f32 data.  A ``.gz``
    suffix selects gzip output (with mtime pinned for determinism).
    """
    if not isinstance(volume, Volume) or volume.n_slices < 1:
        raise InvalidVolume("cannot write an empty or invalid volume")
    n, h, w = volume.n_slices, volume.height, volume.width
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, w, h, n, 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, 16, 32)  # f32
    dx, dy, dz = volume.spacing
    struct.pack_into("<8f", header, 76, 1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", header, 108, float(VOX_OFFSET))
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope, scl_inter
    header[344:348] = b"n+1\x00"
    payload = volume.to_array().astype("<f4").tobytes()
    blob = bytes(header) + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + payload
    path = Path(path)
    try:
        if path.suffix == ".gz":
            blob = gzip.compress(blob, compresslevel=6, mtime=0)
        path.write_bytes(blob)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


@dataclass(eq=False)
class CaseBundle:
    """One case: intensity volume plus per-slice binary ground truth."""

    image: Volume
    labels: tuple[Mask, ...]
    region: str
    original_indices: tuple[int, ...] = ()  # set by drop_empty_slices

    def __post_init__(self):
        if len(self.labels) != self.image.n_slices:
            raise ShapeMismatch(
                f"{self.image.n_slices} image slices vs {len(self.labels)} label slices"
            )
        for m in self.labels:
            if (m.width, m.height) != (self.image.width, self.image.height):
                raise ShapeMismatch("label dimensions differ from image")
        if not self.original_indices:
            self.original_indices = tuple(range(1, self.image.n_slices + 1))

    @property
    def n_slices(self) -> int:
        return self.image.n_slices

    def label_at(self, index: int) -> Mask:
        return self.labels[index - 1]


def load_case(image_path, label_path, region: str) -> CaseBundle:
    """Load an image/label NIfTI pair; label values > 0 become foreground."""
    image = read_nifti(image_path)
    label = read_nifti(label_path)
    if (label.n_slices, label.height, label.width) != (image.n_slices, image.height, image.width):
        raise ShapeMismatch(
            f"image is {image.width}x{image.height}x{image.n_slices}, "
            f"label is {label.width}x{label.height}x{label.n_slices}"
        )
    masks = tuple(Mask((s.data > 0).astype(np.uint8)) for s in label.slices)
    return CaseBundle(image=image, labels=masks, region=region)


@dataclass(eq=False)
class RunReport:
    """Everything recorded about one cascade or baseline run."""

    run_id: str
    case_id: str
    region: str
    method: str  # "baseline" | "ics"
    m: int
    seed_start: int
    config: dict
    per_slice: list[tuple[int, float]]  # (slice index, dsc), predicted slices only
    masks: dict[int, Mask]  # slice index -> predicted mask
    full_stack: Volume | None = None  # predictions merged with ground truth
    aggregates: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def per_slice_csv(report: RunReport) -> str:
    lines = ["case,region,method,m,seed_start,slice,dsc"]
    for idx, dsc in sorted(report.per_slice):
        lines.append(
            f"{report.case_id},{report.region},{report.method},{report.m},"
            f"{report.seed_start},{idx},{_fmt(dsc)}"
        )
    return "\n".join(lines) + "\n"


def report_text(report: RunReport) -> str:
    lines = [f"run_id: {report.run_id}"]
    lines.append(f"case: {report.case_id}")
    lines.append(f"region: {report.region}")
    lines.append(f"method: {report.method}")
    lines.append(f"m: {report.m}")
    lines.append(f"seed_start: {report.seed_start}")
    lines.append("config:")
    for key in sorted(report.config):
        lines.append(f"  {key}: {report.config[key]}")
    lines.append("aggregates:")
    for key in sorted(report.aggregates):
        val = report.aggregates[key]
        lines.append(f"  {key}: {_fmt(val) if isinstance(val, float) else val}")
    lines.append("timings:")
    for key in sorted(report.timings):
        lines.append(f"  {key}: {_fmt(report.timings[key])}")
    return "\n".join(lines) + "\n"


def write_run_report(report: RunReport, out_dir) -> Path:
    """Write masks.nii.gz, per_slice.csv, and report.txt under <dir>/<run_id>/.

    Output is byte-deterministic given the report.
    """
    out = Path(out_dir) / report.run_id
    try:
        out.mkdir(parents=True, exist_ok=True)
        if report.full_stack is not None:
            write_nifti(report.full_stack, out / "masks.nii.gz")
        (out / "per_slice.csv").write_text(per_slice_csv(report), newline="\n")
        (out / "report.txt").write_text(report_text(report), newline="\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return out
