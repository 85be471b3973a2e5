import numpy as np
import pytest

from ics.core import Mask, Provenance, Slice, SupportEntry


def make_slice(data, index=1):
    return Slice(index=index, data=np.asarray(data, dtype=np.float64))


def make_mask(data):
    return Mask(np.asarray(data, dtype=np.uint8))


def make_entry(image, label, provenance=Provenance.GROUND_TRUTH, source_index=1, seq=0):
    return SupportEntry(
        image=image, label=label, provenance=provenance, source_index=source_index, seq=seq
    )


def random_entry(rng, h=4, w=4, provenance=Provenance.GROUND_TRUTH, source_index=1):
    return make_entry(
        make_slice(rng.random((h, w)), index=source_index),
        make_mask(rng.integers(0, 2, (h, w))),
        provenance=provenance,
        source_index=source_index,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
