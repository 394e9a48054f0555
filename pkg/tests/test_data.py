import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from conda_cosod.data import (SHAPES, DataError, PairingError, load_dataset, load_group, save_group,
                              synth_dataset, synth_group)


def test_same_seed_same_group():
    a, b = synth_group(3, n=3, size=32), synth_group(3, n=3, size=32)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.masks, b.masks)
    c = synth_group(4, n=3, size=32)
    assert not np.array_equal(a.images, c.images)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 4), st.sampled_from([16, 32, 48]))
def test_shapes_and_ranges(seed, n, size):
    g = synth_group(seed, n=n, size=size)
    assert g.images.shape == (n, size, size, 3) and g.masks.shape == (n, size, size, 1)
    assert g.images.min() >= 0 and g.images.max() <= 1
    assert set(np.unique(g.masks)) <= {0.0, 1.0}
    assert all(g.masks[i].sum() > 0 for i in range(n))


def test_mask_is_the_painted_common_object_without_distractors():
    g = synth_group(11, n=4, size=64, category="star", max_distractors=0)
    for img, mask in zip(g.images, g.masks[..., 0] > 0):
        inside = img[mask]
        chroma = inside / inside.max(axis=-1, keepdims=True)
        # one flat hue with a per-pixel brightness factor
        assert np.ptp(chroma, axis=0).max() < 1e-9
        outside = img[~mask]
        assert np.abs(outside[:, None, :] / outside.max(-1)[:, None, None] - chroma[0]).max(-1).min() > 0


def test_dataset_cycles_categories():
    groups = synth_dataset(8, n=2, size=16, seed=0)
    assert [g.category for g in groups] == [k % len(SHAPES) for k in range(8)]
    assert [g.name for g in groups][:2] == ["group_000", "group_001"]


def test_contracts():
    with pytest.raises(DataError):
        synth_group(0, size=8)
    with pytest.raises(DataError):
        synth_group(0, n=1)


def test_round_trip(tmp_path):
    g = synth_group(5, n=3, size=32, name="g")
    save_group(g, tmp_path / "g")
    back = load_group(tmp_path / "g")
    assert back.stems == g.stems and back.category == g.category
    assert np.abs(back.images - g.images).max() <= 0.5 / 255 + 1e-12
    assert np.array_equal(back.masks, g.masks)
    assert len(load_dataset(tmp_path)) == 1


def test_missing_mask_names_the_stem(tmp_path):
    g = synth_group(5, n=3, size=16)
    save_group(g, tmp_path / "g")
    (tmp_path / "g" / "masks" / "001.png").unlink()
    with pytest.raises(PairingError, match="001"):
        load_group(tmp_path / "g")


def test_bad_directories(tmp_path):
    (tmp_path / "empty" / "images").mkdir(parents=True)
    with pytest.raises(DataError):
        load_group(tmp_path / "empty")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "missing")
    with pytest.raises(DataError):
        load_dataset(tmp_path / "empty" / "images")


def test_undecodable_file(tmp_path):
    g = synth_group(5, n=2, size=16)
    save_group(g, tmp_path / "g")
    (tmp_path / "g" / "images" / "000.png").write_bytes(b"not a png")
    with pytest.raises(DataError):
        load_group(tmp_path / "g")


def test_soft_mask_is_binarised(tmp_path):
    g = synth_group(5, n=2, size=16)
    save_group(g, tmp_path / "g")
    Image.fromarray(np.full((16, 16), 140, np.uint8), "L").save(tmp_path / "g" / "masks" / "000.png")
    assert np.all(load_group(tmp_path / "g").masks[0] == 1)


def test_at_stage_cached():
    g = synth_group(1, n=2, size=32)
    imgs, masks = g.at_stage(8)
    assert imgs.shape == (2, 8, 8, 3) and masks.shape == (2, 8, 8, 1)
    assert g.at_stage(8)[0] is imgs
