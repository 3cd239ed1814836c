import numpy as np
import pytest

from conftest import write_png
from synthdetect.dataset import (DatasetSplit, ImageRecord, Label, grayscale_batch, ingest_cifake,
                                 resize_bilinear, stratified_subset, to_grayscale, write_manifest,
                                 write_png_tree)
from synthdetect.errors import ArgumentError, CapacityError, DecodeError, DimensionError, StructureError
from synthdetect.synthetic import synthetic_split

F, R = Label.FAKE, Label.REAL


def rec(px, label=R, path="x.png"):
    return ImageRecord(np.asarray(px, dtype=np.uint8), label, path)


def test_labels():
    assert (F.target, R.target) == (1, 0)
    assert (F.sign, R.sign) == (1, -1)


def test_ingest_counts_fixture_tree(png_tree):
    root = png_tree({("train", "FAKE"): 2, ("train", "REAL"): 3})
    split = ingest_cifake(root)
    c = split.counts()
    assert [c[("train", F)], c[("train", R)], c[("test", F)], c[("test", R)]] == [2, 3, 0, 0]
    assert [r.path for r in split.train] == sorted(r.path for r in split.train)
    assert all(r.label is F for r in split.train if "/FAKE/" in r.path)


def test_ingest_empty_tree(png_tree):
    split = ingest_cifake(png_tree({}))
    assert len(split) == 0 and set(split.counts().values()) == {0}


def test_ingest_is_deterministic_across_workers(png_tree):
    root = png_tree({("train", "FAKE"): 4, ("test", "REAL"): 3}, seed=5)
    a, b = ingest_cifake(root), ingest_cifake(root, workers=3)
    assert [r.path for r in a.train + a.test] == [r.path for r in b.train + b.test]
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a.train + a.test, b.train + b.test))


def test_ingest_errors(png_tree, tmp_path):
    root = png_tree({("train", "FAKE"): 1})
    (root / "test" / "REAL").rmdir()
    with pytest.raises(StructureError, match="REAL"):
        ingest_cifake(root)

    root = png_tree({("train", "FAKE"): 1})
    bad = root / "train" / "REAL" / "broken.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(DecodeError, match="broken.png"):
        ingest_cifake(root)
    bad.unlink()

    write_png(root / "train" / "REAL" / "big.png", np.zeros((40, 32, 3), np.uint8))
    with pytest.raises(DimensionError):
        ingest_cifake(root)


def test_grayscale_examples():
    assert to_grayscale(rec(np.full((2, 2, 3), 77))).pixels.ravel().tolist() == [77] * 4
    red = np.zeros((1, 1, 3))
    red[..., 0] = 255
    assert to_grayscale(rec(red)).pixels.item() == 76
    assert not to_grayscale(rec(np.zeros((3, 3, 3)))).pixels.any()
    img = rec(np.random.default_rng(0).integers(0, 256, (8, 8, 3)))
    once = to_grayscale(img)
    assert to_grayscale(once) is once


def test_resize_examples():
    img = rec(np.random.default_rng(1).integers(0, 256, (32, 32, 3)))
    np.testing.assert_array_equal(resize_bilinear(img, 32, 32).pixels, img.pixels)
    const = resize_bilinear(rec(np.full((5, 7, 3), 42)), 11, 3)
    assert const.pixels.shape == (11, 3, 3) and np.all(const.pixels == 42)
    with pytest.raises(ArgumentError):
        resize_bilinear(img, 0, 4)


def test_resize_two_by_two_hand_grid():
    # half-pixel centres put the source samples at 0, .25, .75, 1 along each
    # axis, and this input is the plane 100·(x + y)
    src = rec(np.array([[0, 100], [100, 200]])[:, :, None])
    a = np.array([0.0, 0.25, 0.75, 1.0])
    expected = 100 * (a[:, None] + a[None, :])
    np.testing.assert_array_equal(resize_bilinear(src, 4, 4).pixels[:, :, 0], expected)


def test_stratified_subset():
    full = synthetic_split(12, 5, seed=0)
    a = stratified_subset(full, 4, seed=7)
    b = stratified_subset(full, 4, seed=7)
    c = stratified_subset(full, 4, seed=8)
    paths = lambda s: [r.path for r in s.train]  # noqa: E731
    assert paths(a) == paths(b) and paths(a) != paths(c)
    for s in (a, c):
        assert s.counts()[("train", F)] == 4 and s.counts()[("train", R)] == 4
    assert a.test == full.test
    assert sorted(paths(stratified_subset(full, 12, seed=3))) == sorted(paths(full))
    assert stratified_subset(full, None, 0, test_per_class=2).counts()[("test", R)] == 2
    with pytest.raises(CapacityError, match="12"):
        stratified_subset(full, 13, seed=0)


def test_png_tree_roundtrip(tmp_path):
    data = synthetic_split(2, 1, seed=4)
    write_png_tree(data, tmp_path / "tree")
    back = ingest_cifake(tmp_path / "tree")
    assert [r.pixels.tobytes() for r in back.train] == [r.pixels.tobytes() for r in data.train]
    write_manifest(back, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "path,label,split" and len(lines) == 7


def test_record_validation_and_batch():
    with pytest.raises(DimensionError):
        rec(np.zeros((4, 4, 2)))
    with pytest.raises(ArgumentError):
        ImageRecord(np.zeros((4, 4, 3), np.float32), R, "x")
    batch = grayscale_batch([rec(np.full((32, 32, 3), 255))])
    assert batch.shape == (1, 1, 32, 32) and batch.dtype == np.float32 and np.all(batch == 1.0)
    assert grayscale_batch([]).shape == (0, 1, 32, 32)
    assert len(DatasetSplit()) == 0
