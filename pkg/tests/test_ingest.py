import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from imgcomplexity.ingest import (BadRootError, BadTargetError, DecodeError, TooSmallError,
                                  downsample, load_grayscale, scan_dataset)


def touch(path, data=b"x"):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def test_scan_empty_dir(tmp_path):
    m = scan_dataset(tmp_path, "empty")
    assert m.count == 0
    assert m.entries == []


def test_scan_filters_and_sorts(tmp_path):
    for name in ("b.png", "a.png", "c.txt"):
        touch(tmp_path / name)
    m = scan_dataset(tmp_path, "d")
    assert [p for p, _ in m.entries] == ["a.png", "b.png"]
    assert m.count == 2


def test_scan_nested_lexicographic(tmp_path):
    touch(tmp_path / "x" / "1.jpg")
    touch(tmp_path / "2.png")
    assert [p for p, _ in scan_dataset(tmp_path, "d").entries] == ["2.png", "x/1.jpg"]


def test_scan_accepts_case_insensitive_extensions(tmp_path):
    for name in ("A.JPEG", "b.Bmp", "c.gif", "d.tiff"):
        touch(tmp_path / name)
    assert [p for p, _ in scan_dataset(tmp_path, "d").entries] == ["A.JPEG", "b.Bmp"]


def test_scan_records_sizes_and_is_deterministic(tmp_path):
    touch(tmp_path / "a.png", b"12345")
    touch(tmp_path / "s" / "b.bmp", b"1")
    first = scan_dataset(tmp_path, "d")
    assert first.entries == [("a.png", 5), ("s/b.bmp", 1)]
    assert first.to_json() == scan_dataset(tmp_path, "d").to_json()
    doc = json.loads(first.to_json())
    assert list(doc) == ["dataset_id", "root", "skipped", "entries"]
    assert doc["entries"][0] == {"path": "a.png", "bytes": 5}


def test_scan_bad_root(tmp_path):
    with pytest.raises(BadRootError):
        scan_dataset(tmp_path / "missing", "d")
    touch(tmp_path / "file.png")
    with pytest.raises(BadRootError):
        scan_dataset(tmp_path / "file.png", "d")


def save(path, array, mode=None):
    Image.fromarray(array, mode=mode).save(path)
    return path


def test_load_white_rgb(tmp_path):
    p = save(tmp_path / "w.png", np.full((2, 2, 3), 255, np.uint8))
    assert (load_grayscale(p) == 255).all()


def test_load_red_luma(tmp_path):
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[..., 0] = 255
    assert (load_grayscale(save(tmp_path / "r.png", rgb)) == 76).all()


def test_load_gray_identity(tmp_path):
    g = np.array([[0, 128], [255, 0]], np.uint8)
    out = load_grayscale(save(tmp_path / "g.png", g))
    assert out.dtype == np.uint8
    assert np.array_equal(out, g)


def test_load_bmp_and_jpeg_roundtrip(tmp_path):
    g = np.full((4, 4), 77, np.uint8)
    assert np.array_equal(load_grayscale(save(tmp_path / "g.bmp", g)), g)
    # flat JPEG blocks decode exactly
    assert np.array_equal(load_grayscale(save(tmp_path / "g.jpg", g)), g)


def test_load_sixteen_bit_shifts(tmp_path):
    raw = np.array([[0, 256], [65535, 32768]], dtype=np.uint16)
    p = tmp_path / "g16.png"
    Image.fromarray(raw).save(p)
    assert load_grayscale(p).tolist() == [[0, 1], [255, 128]]


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError):
        load_grayscale(bad)
    with pytest.raises(TooSmallError):
        load_grayscale(save(tmp_path / "tiny.png", np.zeros((1, 5), np.uint8)))


@given(st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255)))
def test_luma_matches_rounded_bt601(rgb):
    from imgcomplexity.ingest import _luma

    arr = np.array([[rgb]], dtype=np.uint8)
    r, g, b = rgb
    expected = int(np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5 + 1e-9))
    assert int(_luma(arr)[0, 0]) == expected


def test_downsample_examples():
    assert (downsample(np.full((4, 4), 100, np.uint8), 2, 2) == 100).all()
    assert downsample(np.array([[0, 255], [0, 255]], np.uint8), 1, 1).tolist() == [[128]]
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert np.array_equal(downsample(img, 4, 3), img)


def test_downsample_bad_target():
    img = np.zeros((4, 4), np.uint8)
    for w, h in ((0, 2), (5, 2), (2, 5)):
        with pytest.raises(BadTargetError):
            downsample(img, w, h)


def test_downsample_uneven_blocks():
    img = np.array([[0, 10, 20], [30, 40, 50], [60, 70, 80]], np.uint8)
    # rows split [0:1], [1:3]; cols [0:1], [1:3]
    assert downsample(img, 2, 2).tolist() == [[0, 15], [45, 60]]


@settings(max_examples=60)
@given(arrays(np.uint8, st.tuples(st.integers(2, 20), st.integers(2, 20))),
       st.integers(1, 20), st.integers(1, 20))
def test_downsample_within_source_range(img, tw, th):
    tw, th = min(tw, img.shape[1]), min(th, img.shape[0])
    out = downsample(img, tw, th)
    assert out.shape == (th, tw)
    assert out.min() >= img.min() and out.max() <= img.max()
