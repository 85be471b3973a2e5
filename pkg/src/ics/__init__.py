"""In-context cascade segmentation engine for sequential 2-D slices."""

from .core import (
    CascadeConfig,
    Mask,
    ProbMask,
    Provenance,
    Slice,
    SupportEntry,
    SupportSet,
    Volume,
    append_entry,
    new_support_set,
)
from .cascade import InitialSupportSpec, augment_support, run_baseline, run_ics
from .metrics import aggregate, dsc, drop_empty_slices, paired_test
from .segmenter import (
    ReferenceBackend,
    RefSegParams,
    normalize_slice,
    ref_segment,
    resample,
    threshold,
)
from .volume_io import CaseBundle, RunReport, load_case, read_nifti, write_nifti, write_run_report

__all__ = [
    "CascadeConfig",
    "CaseBundle",
    "InitialSupportSpec",
    "Mask",
    "ProbMask",
    "Provenance",
    "ReferenceBackend",
    "RefSegParams",
    "RunReport",
    "Slice",
    "SupportEntry",
    "SupportSet",
    "Volume",
    "aggregate",
    "append_entry",
    "augment_support",
    "drop_empty_slices",
    "dsc",
    "load_case",
    "new_support_set",
    "normalize_slice",
    "paired_test",
    "read_nifti",
    "ref_segment",
    "resample",
    "run_baseline",
    "run_ics",
    "threshold",
    "write_nifti",
    "write_run_report",
]

__version__ = "0.1.0"
