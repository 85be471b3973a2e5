import numpy as np
import pytest

from ics.core import CascadeConfig
from ics.errors import IcsError
from ics.harness import (
    EmptySweep,
    PRESETS,
    PhantomConfig,
    ShapeOutOfBounds,
    centered_block,
    gen_phantom,
    run_compare,
    sweep_m,
    sweep_position,
)
from ics.segmenter import ReferenceBackend, RefSegParams


def fast_backend():
    return ReferenceBackend(params=RefSegParams(patch_size=3, search_radius=2, k=3))


def fast_cfg(m=1):
    return CascadeConfig(capacity=m)


class TestGenPhantom:
    def test_constant_when_no_drift(self):
        bundle = gen_phantom(PhantomConfig(n_slices=4, width=16, height=16, radius=4, center=(8, 8)))
        base = bundle.image.slice_at(1).data
        for i in range(2, 5):
            assert np.array_equal(bundle.image.slice_at(i).data, base)

    def test_deterministic_given_seed(self):
        cfg = PhantomConfig(n_slices=3, width=16, height=16, radius=4, center=(8, 8),
                            noise_std=0.1, rng_seed=99)
        a = gen_phantom(cfg)
        b = gen_phantom(cfg)
        assert np.array_equal(a.image.to_array(), b.image.to_array())

    def test_labels_are_noiseless(self):
        cfg = PhantomConfig(n_slices=2, width=16, height=16, radius=4, center=(8, 8), noise_std=0.5)
        bundle = gen_phantom(cfg)
        expected = gen_phantom(PhantomConfig(n_slices=2, width=16, height=16, radius=4, center=(8, 8)))
        for i in (1, 2):
            assert np.array_equal(bundle.label_at(i).data, expected.label_at(i).data)

    def test_drift_arithmetic_in_bounds(self):
        # centre travels from (14, 32) to (53, 32) and stays inside
        cfg = PhantomConfig(n_slices=40, width=64, height=64, radius=12,
                            center=(14, 32), drift_per_slice=(1.0, 0.0))
        bundle = gen_phantom(cfg)
        assert bundle.n_slices == 40

    def test_centre_leaving_image_rejected(self):
        cfg = PhantomConfig(n_slices=10, width=16, height=16, radius=4,
                            center=(8, 8), drift_per_slice=(2.0, 0.0))
        with pytest.raises(ShapeOutOfBounds):
            gen_phantom(cfg)

    def test_tube_with_branch_shape(self):
        cfg = PhantomConfig(n_slices=2, width=32, height=32, radius=6, center=(12, 18),
                            shape="tube-with-branch")
        bundle = gen_phantom(cfg)
        plain = gen_phantom(PhantomConfig(n_slices=2, width=32, height=32, radius=6, center=(12, 18)))
        assert bundle.label_at(1).data.sum() > plain.label_at(1).data.sum()

    def test_mirrored_is_palindromic(self):
        bundle = gen_phantom(PRESETS["mirrored"])
        n = bundle.n_slices
        for k in range(1, n + 1):
            assert np.array_equal(
                bundle.image.slice_at(k).data, bundle.image.slice_at(n + 1 - k).data
            )


class TestCenteredBlock:
    def test_formula(self):
        assert centered_block(40, 3) == (19, 20, 21)
        assert centered_block(10, 1) == (5,)
        assert centered_block(5, 5) == (1, 2, 3, 4, 5)


class TestRunCompare:
    def test_constant_phantom_is_degenerate(self):
        bundle = gen_phantom(PhantomConfig(n_slices=5, width=16, height=16, radius=4, center=(8, 8)))
        report = run_compare(bundle, start=3, m=1, backend=fast_backend(), cfg=fast_cfg())
        assert report.test is None
        assert report.note == "identical"
        assert all(v == 1.0 for _, v in report.ics.per_slice)
        assert all(v == 1.0 for _, v in report.baseline.per_slice)

    def test_everything_labeled(self):
        bundle = gen_phantom(PhantomConfig(n_slices=3, width=16, height=16, radius=4, center=(8, 8)))
        report = run_compare(bundle, start=1, m=3, backend=fast_backend(), cfg=fast_cfg(3))
        assert report.note == "NoQuerySlices"
        assert report.ics.per_slice == []

    def test_drifting_phantom_favors_cascade(self):
        cfg_phantom = PhantomConfig(n_slices=12, width=32, height=32, radius=6,
                                    center=(7, 16), drift_per_slice=(1.5, 0.0))
        bundle = gen_phantom(cfg_phantom)
        report = run_compare(bundle, start=6, m=2, backend=fast_backend(), cfg=fast_cfg(2))
        assert report.ics.aggregates["mean_dsc"] > report.baseline.aggregates["mean_dsc"]


class TestSweepM:
    def test_single_m_constant_phantom(self):
        bundle = gen_phantom(PhantomConfig(n_slices=5, width=16, height=16, radius=4, center=(8, 8)))
        report = sweep_m(bundle, fast_backend(), fast_cfg(), m_values=[1])
        assert all(row["dsc"] == 1.0 for row in report.rows)
        assert {row["m"] for row in report.rows} == {1}

    def test_m_exceeding_n_rejected(self):
        bundle = gen_phantom(PhantomConfig(n_slices=3, width=16, height=16, radius=4, center=(8, 8)))
        with pytest.raises(IcsError):
            sweep_m(bundle, fast_backend(), fast_cfg(), m_values=[4])

    def test_csv_shape(self):
        bundle = gen_phantom(PhantomConfig(n_slices=4, width=16, height=16, radius=4, center=(8, 8)))
        report = sweep_m(bundle, fast_backend(), fast_cfg(), m_values=[1, 2])
        csv = report.to_csv()
        header = csv.strip().split("\n")[0]
        assert header == "case,region,method,m,seed_start,slice,dsc"
        assert len(csv.strip().split("\n")) == 1 + 3 + 2


class TestSweepPosition:
    def test_block_at_start_covers_forward_only(self):
        bundle = gen_phantom(PhantomConfig(n_slices=5, width=16, height=16, radius=4, center=(8, 8)))
        report = sweep_position(bundle, fast_backend(), fast_cfg(2), m=2, positions=[1])
        ics_reports = [r for r in report.reports if r.method == "ics"]
        assert len(ics_reports) == 1
        assert set(i for i, _ in ics_reports[0].per_slice) == {3, 4, 5}

    def test_empty_positions_rejected(self):
        bundle = gen_phantom(PhantomConfig(n_slices=5, width=16, height=16, radius=4, center=(8, 8)))
        with pytest.raises(EmptySweep):
            sweep_position(bundle, fast_backend(), fast_cfg(), m=1, positions=[])

    def test_invalid_position_rejected(self):
        bundle = gen_phantom(PhantomConfig(n_slices=5, width=16, height=16, radius=4, center=(8, 8)))
        with pytest.raises(IcsError):
            sweep_position(bundle, fast_backend(), fast_cfg(), m=2, positions=[5])

    def test_mirrored_phantom_symmetric_directions(self):
        # palindromic volume + centred block: forward and backward passes see
        # identical slice sequences, so the per-direction means must agree
        cfg_phantom = PhantomConfig(n_slices=13, width=32, height=32, radius=5,
                                    center=(8, 16), drift_per_slice=(1.0, 0.0), mirrored=True)
        bundle = gen_phantom(cfg_phantom)
        from ics.cascade import InitialSupportSpec, run_ics
        from ics.metrics import dsc

        m = 1
        spec = InitialSupportSpec(indices=centered_block(13, m), bundle=bundle)
        result = run_ics(bundle, spec, fast_backend(), fast_cfg(m))
        fwd = [dsc(result.masks[i], bundle.label_at(i))
               for i in sorted(result.masks) if result.direction_of[i] == "forward"]
        bwd = [dsc(result.masks[i], bundle.label_at(i))
               for i in sorted(result.masks) if result.direction_of[i] == "backward"]
        assert abs(np.mean(fwd) - np.mean(bwd)) < 1e-9
