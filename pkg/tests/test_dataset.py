import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scanprune import (
    CLEAN,
    DUPLICATE,
    MISMATCHED,
    GenSpec,
    generate_paired_dataset,
    load_dataset,
    save_dataset,
)
from scanprune.dataset import (
    BadMagicError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
)


def _spec(**kw):
    base = dict(n=100, dim=16, num_classes=4, mismatch_frac=0.1,
                duplicate_frac=0.1, noise_sigma=0.1, seed=7)
    base.update(kw)
    return GenSpec(**base)


def _pair_cosines(ds):
    na = np.linalg.norm(ds.view_a, axis=1)
    nb = np.linalg.norm(ds.view_b, axis=1)
    return np.sum(ds.view_a * ds.view_b, axis=1) / (na * nb)


def test_corruption_counts_floor():
    ds = generate_paired_dataset(_spec())
    assert np.sum(ds.corruption == MISMATCHED) == 10
    assert np.sum(ds.corruption == DUPLICATE) == 10
    assert np.sum(ds.corruption == CLEAN) == 80


def test_zero_fractions_all_clean():
    ds = generate_paired_dataset(_spec(mismatch_frac=0.0, duplicate_frac=0.0))
    assert np.all(ds.corruption == CLEAN)


def test_mismatched_rows_have_lower_pair_cosine():
    ds = generate_paired_dataset(GenSpec(n=1000, dim=32, num_classes=8,
                                         mismatch_frac=0.1, duplicate_frac=0.0,
                                         noise_sigma=0.05, seed=1))
    cos = _pair_cosines(ds)
    gap = cos[ds.corruption == CLEAN].mean() - cos[ds.corruption == MISMATCHED].mean()
    assert gap > 0.2


def test_generation_deterministic_and_seed_sensitive():
    a = generate_paired_dataset(_spec())
    b = generate_paired_dataset(_spec())
    c = generate_paired_dataset(_spec(seed=8))
    assert a == b
    assert not np.array_equal(a.view_a, c.view_a)


def test_basic_shape_invariants():
    ds = generate_paired_dataset(_spec())
    assert ds.view_a.shape == ds.view_b.shape == (100, 16)
    assert np.isfinite(ds.view_a).all() and np.isfinite(ds.view_b).all()
    assert ds.labels.max() < 4
    assert ds.view_a.dtype == np.float32 and ds.view_b.dtype == np.float32


def test_duplicates_copy_earlier_clean_rows():
    ds = generate_paired_dataset(_spec(n=200))
    clean = np.where(ds.corruption == CLEAN)[0]
    for i in np.where(ds.corruption == DUPLICATE)[0]:
        earlier = clean[clean < i]
        assert earlier.size > 0
        dists = np.linalg.norm(ds.view_a[earlier] - ds.view_a[i], axis=1)
        j = earlier[np.argmin(dists)]
        # near-copy: residual noise has scale 0.1 * sigma per coordinate
        assert dists.min() < 10 * 0.1 * 0.1 * np.sqrt(16)
        assert ds.labels[i] == ds.labels[j]


def test_mismatched_label_differs_from_view_b_class():
    # mismatched view_b comes from a different class, so its cosine against
    # the row's own class prototype direction (via view_a) drops
    ds = generate_paired_dataset(_spec(n=500, noise_sigma=0.05))
    cos = _pair_cosines(ds)
    assert cos[ds.corruption == MISMATCHED].mean() < cos[ds.corruption == CLEAN].mean()


@pytest.mark.parametrize("seed", range(20))
def test_separability_across_seeds(seed):
    ds = generate_paired_dataset(_spec(n=300, noise_sigma=0.2, seed=seed))
    cos = _pair_cosines(ds)
    assert cos[ds.corruption == CLEAN].mean() > cos[ds.corruption == MISMATCHED].mean()


@pytest.mark.parametrize("kw", [
    dict(mismatch_frac=0.6, duplicate_frac=0.5),
    dict(n=3, num_classes=4),
    dict(dim=1),
    dict(num_classes=1),
    dict(noise_sigma=-0.1),
])
def test_genspec_validation_errors(kw):
    with pytest.raises(ValidationError):
        generate_paired_dataset(_spec(**kw))


def test_roundtrip_bit_exact(tmp_path):
    ds = generate_paired_dataset(_spec())
    path = tmp_path / "d.bin"
    save_dataset(ds, path)
    again = load_dataset(path)
    assert again == ds
    # saving the reload reproduces the file byte for byte
    path2 = tmp_path / "d2.bin"
    save_dataset(again, path2)
    assert path.read_bytes() == path2.read_bytes()


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 40), dim=st.integers(2, 12), nc=st.integers(2, 4),
       mf=st.floats(0, 0.4), df=st.floats(0, 0.4), seed=st.integers(0, 2**31))
def test_roundtrip_property(tmp_path_factory, n, dim, nc, mf, df, seed):
    if n < nc:
        n = nc
    ds = generate_paired_dataset(GenSpec(n=n, dim=dim, num_classes=nc,
                                         mismatch_frac=mf, duplicate_frac=df,
                                         noise_sigma=0.1, seed=seed))
    path = tmp_path_factory.mktemp("rt") / "d.bin"
    save_dataset(ds, path)
    assert load_dataset(path) == ds


def test_bad_magic(tmp_path):
    path = tmp_path / "d.bin"
    save_dataset(generate_paired_dataset(_spec()), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        load_dataset(path)


def test_version_mismatch(tmp_path):
    path = tmp_path / "d.bin"
    save_dataset(generate_paired_dataset(_spec()), path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_dataset(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "d.bin"
    save_dataset(generate_paired_dataset(_spec()), path)
    raw = path.read_bytes()
    path.write_bytes(raw[:20])  # header only
    with pytest.raises(TruncatedFileError):
        load_dataset(path)
