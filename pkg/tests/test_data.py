import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from bcsnet.data import (
    CTSlice,
    derive_boundary,
    load_dataset,
    load_mask,
    load_slice,
    make_record,
    resize_record,
    save_dataset,
    split_dataset,
    synth_blobs,
)


def brute_boundary(mask):
    """Foreground pixels with at least one in-image 4-neighbour in background."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            if not mask[i, j]:
                continue
            for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                y, x = i + di, j + dj
                if 0 <= y < h and 0 <= x < w and not mask[y, x]:
                    out[i, j] = 1
    return out


def write_png(path, arr, mode=None):
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode).save(path)
    return path


# ---------------------------------------------------------------- load_slice / mask

@pytest.mark.parametrize("raw, expected", [(0, 0.0), (255, 1.0), (128, 128 / 255)])
def test_load_slice_scaling(tmp_path, raw, expected):
    sl = load_slice(write_png(tmp_path / "a.png", np.full((16, 16), raw)))
    assert sl.pixels.shape == (3, 16, 16)
    np.testing.assert_allclose(sl.pixels, expected, rtol=0, atol=1e-7)


def test_load_slice_rgb_goes_through_luma(tmp_path):
    rgb = np.zeros((16, 16, 3), np.uint8)
    rgb[..., 0] = 200
    rgb[..., 2] = 40
    sl = load_slice(write_png(tmp_path / "c.png", rgb))
    expected = np.asarray(Image.fromarray(rgb).convert("L"), np.float32) / 255
    assert np.array_equal(sl.pixels[0], sl.pixels[1]) and np.array_equal(sl.pixels[1], sl.pixels[2])
    np.testing.assert_array_equal(sl.pixels[0], expected)


def test_load_slice_unreadable(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(OSError):
        load_slice(bad)
    with pytest.raises(OSError):
        load_slice(tmp_path / "missing.png")


def test_ctslice_rejects_bad_values():
    with pytest.raises(ValueError):
        CTSlice(np.full((3, 4, 4), 1.5, np.float32))
    with pytest.raises(ValueError):
        CTSlice(np.zeros((3, 0, 4), np.float32))


def test_load_mask_threshold(tmp_path):
    raw = np.array([[0, 127], [128, 255]] * 8).reshape(16, 2)
    m = load_mask(write_png(tmp_path / "m.png", raw))
    assert m.tolist() == [[0, 0], [1, 1]] * 8


def test_load_mask_checkerboard(tmp_path):
    board = (np.indices((16, 16)).sum(0) % 2) * 255
    m = load_mask(write_png(tmp_path / "m.png", board))
    np.testing.assert_array_equal(m, (board > 127).astype(np.uint8))
    assert load_mask(write_png(tmp_path / "z.png", np.zeros((8, 8)))).sum() == 0


# ----------------------------------------------------------------- derive_boundary

def test_boundary_trivial_cases():
    assert derive_boundary(np.zeros((8, 8), np.uint8)).sum() == 0
    single = np.zeros((8, 8), np.uint8)
    single[3, 4] = 1
    np.testing.assert_array_equal(derive_boundary(single), single)


def test_boundary_square_perimeter():
    m = np.zeros((8, 8), np.uint8)
    m[2:6, 2:6] = 1
    b = derive_boundary(m)
    np.testing.assert_array_equal(b, brute_boundary(m))
    assert b.sum() == 12
    assert b[3:5, 3:5].sum() == 0


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)))
def test_boundary_properties(mask):
    b = derive_boundary(mask)
    np.testing.assert_array_equal(b, brute_boundary(mask))
    assert not (b & ~mask.astype(bool)).any()
    np.testing.assert_array_equal(derive_boundary(b), b)


# ------------------------------------------------------------------- resize_record

def _disk_record(size=64, r=20):
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (((yy - size / 2 + 0.5) ** 2 + (xx - size / 2 + 0.5) ** 2) <= r * r).astype(np.uint8)
    img = np.clip(0.2 + 0.5 * mask + 0.01 * np.sin(yy), 0, 1).astype(np.float32)
    return make_record(CTSlice(np.repeat(img[None], 3, 0), "disk"), mask)


def test_resize_identity_is_bitwise():
    rec = _disk_record()
    out = resize_record(rec, (64, 64))
    assert np.array_equal(out.slice.pixels, rec.slice.pixels)
    assert np.array_equal(out.mask, rec.mask) and np.array_equal(out.boundary, rec.boundary)


def test_resize_paper_resolution():
    out = resize_record(_disk_record(), 352)
    assert out.slice.pixels.shape == (3, 352, 352)
    assert out.mask.shape == out.boundary.shape == (352, 352)
    assert np.array_equal(out.slice.pixels[0], out.slice.pixels[2])
    np.testing.assert_array_equal(out.boundary, derive_boundary(out.mask))


def test_resize_downsample_disk_area():
    rec = _disk_record()
    out = resize_record(rec, 32)
    quarter = rec.mask.sum() / 4
    assert abs(out.mask.sum() - quarter) <= 0.15 * quarter
    assert set(np.unique(out.mask)) <= {0, 1}


@pytest.mark.parametrize("size", [(60, 64), 0, (64, 8)])
def test_resize_rejects_bad_size(size):
    with pytest.raises(ValueError):
        resize_record(_disk_record(), size)


def test_record_shape_mismatch():
    rec = _disk_record()
    with pytest.raises(ValueError):
        make_record(rec.slice, np.zeros((32, 32), np.uint8))


# ------------------------------------------------------------------- split_dataset

def test_split_deterministic():
    recs = synth_blobs(10, (16, 16), 0)
    a = split_dataset(recs, 0.3, seed=5)
    b = split_dataset(recs, 0.3, seed=5)
    assert (len(a.train), len(a.test)) == (7, 3)
    assert [r.id for r in a.test] == [r.id for r in b.test]


def test_split_seeds_permute():
    ids = [str(i) for i in range(50)]
    a = split_dataset(ids, 0.3, 1)
    b = split_dataset(ids, 0.3, 2)
    assert (len(a.train), len(a.test)) == (len(b.train), len(b.test))
    assert a.test != b.test


def test_split_paper_ratio():
    s = split_dataset(range(1018), 300 / 1018, 0)
    assert len(s.test) == 300
    assert len(s.train) == 718


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 1000))
def test_split_partitions(n, frac, seed):
    s = split_dataset(range(n), frac, seed)
    assert sorted(s.train + s.test) == list(range(n))
    assert not set(s.train) & set(s.test)


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset([1], 0.5, 0)
    with pytest.raises(ValueError):
        split_dataset([1, 2, 3], 1.0, 0)


# --------------------------------------------------------------------- synth_blobs

def test_synth_single():
    (r,) = synth_blobs(1, (32, 48), 0)
    assert r.slice.pixels.shape == (3, 32, 48)
    assert r.mask.shape == r.boundary.shape == (32, 48)


def test_synth_deterministic():
    a, b = synth_blobs(3, (32, 32), 9), synth_blobs(3, (32, 32), 9)
    for x, y in zip(a, b):
        assert np.array_equal(x.slice.pixels, y.slice.pixels) and np.array_equal(x.mask, y.mask)
    c = synth_blobs(3, (32, 32), 10)
    assert not np.array_equal(a[0].mask, c[0].mask)


def test_synth_foreground_fraction_and_contrast():
    recs = synth_blobs(20, (64, 64), 0)
    for r in recs:
        assert 0.02 <= r.mask.mean() <= 0.5
        assert np.array_equal(r.slice.pixels[0], r.slice.pixels[1])
        assert not (r.boundary & (1 - r.mask)).any()
        fg = r.slice.pixels[0][r.mask == 1].mean()
        bg = r.slice.pixels[0][r.mask == 0].mean()
        assert fg > bg + 0.2


def test_synth_rejects_empty():
    with pytest.raises(ValueError):
        synth_blobs(0)


# ---------------------------------------------------------------- directory layout

def test_dataset_roundtrip(tmp_path):
    recs = synth_blobs(3, (32, 32), 1)
    save_dataset(recs, tmp_path)
    back = load_dataset(tmp_path)
    assert [r.id for r in back] == [r.id for r in recs]
    for a, b in zip(recs, back):
        assert np.array_equal(a.mask, b.mask)
        np.testing.assert_allclose(a.slice.pixels, b.slice.pixels, atol=0.5 / 255 + 1e-7)
    assert load_dataset(tmp_path, 16)[0].mask.shape == (16, 16)


def test_dataset_missing_masks(tmp_path):
    (tmp_path / "images").mkdir()
    with pytest.raises(FileNotFoundError, match="masks"):
        load_dataset(tmp_path)
