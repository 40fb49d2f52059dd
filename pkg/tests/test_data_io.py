"""Cube/PPM/PGM serialization, synthetic scenes, and patch geometry."""
import struct

import numpy as np
import pytest
from scipy.stats import chisquare

from hsicolor.data import (CUBE_MAGIC, MAX_CLASSES, PALETTE, CubeFormatError,
                           SceneSample, class_anchor, extract_patches,
                           load_dataset, normalize_cube, patch_origins,
                           random_crop_pair, read_cube, read_pgm, read_ppm,
                           save_dataset, scene_seed, scene_signatures,
                           synth_dataset, synth_scene, validate_sample,
                           write_cube, write_pgm, write_ppm)


# ---------------------------------------------------------------------------
# Cube files
# ---------------------------------------------------------------------------

def test_cube_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    for i in range(10):
        h, w, bands = rng.integers(1, 17, size=3)
        cube = rng.random((h, w, bands), dtype=np.float32)
        path = tmp_path / f"c{i}.cube"
        write_cube(cube, path)
        back = read_cube(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, cube)


def test_smallest_cube_layout(tmp_path):
    # 4-byte magic + four u32 header fields + one float32 value
    path = tmp_path / "one.cube"
    write_cube(np.full((1, 1, 1), 0.5, dtype=np.float32), path)
    raw = path.read_bytes()
    assert len(raw) == 24
    assert raw[:4] == CUBE_MAGIC
    assert struct.unpack("<f", raw[20:])[0] == 0.5


def test_cube_header_layout(tmp_path):
    path = tmp_path / "h.cube"
    write_cube(np.zeros((64, 64, 8), dtype=np.float32), path)
    raw = path.read_bytes()
    assert struct.unpack("<IIII", raw[4:20]) == (64, 64, 8, 1)


def test_cube_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.cube"
    write_cube(np.zeros((2, 2, 2), dtype=np.float32), path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CubeFormatError):
        read_cube(path)


def test_cube_rejects_size_mismatch(tmp_path):
    path = tmp_path / "short.cube"
    header = struct.pack("<4sIIII", CUBE_MAGIC, 2, 2, 2, 1)
    path.write_bytes(header + b"\x00" * (4 * 7))  # 7 floats, header says 8
    with pytest.raises(CubeFormatError):
        read_cube(path)


def test_cube_rejects_non_finite():
    bad = np.zeros((2, 2, 2), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        write_cube(bad, "/dev/null")


# ---------------------------------------------------------------------------
# PPM / PGM
# ---------------------------------------------------------------------------

def test_ppm_roundtrip_on_representable_values(tmp_path):
    rng = np.random.default_rng(12)
    u8 = rng.integers(0, 256, size=(9, 7, 3), dtype=np.uint8)
    rgb = (u8.astype(np.float32) / 255.0) * 2.0 - 1.0
    path = tmp_path / "img.ppm"
    write_ppm(rgb, path)
    assert np.allclose(read_ppm(path), rgb, atol=1e-7)


def test_ppm_quantization_error_bounded(tmp_path):
    rng = np.random.default_rng(13)
    rgb = rng.uniform(-1.0, 1.0, size=(16, 16, 3)).astype(np.float32)
    path = tmp_path / "q.ppm"
    write_ppm(rgb, path)
    # one uint8 step spans 2/255 of the [-1, 1] range
    assert np.abs(read_ppm(path) - rgb).max() <= 1.0 / 255.0 + 1e-6


def test_pnm_reader_skips_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x00\x01\x02\x03")
    assert np.array_equal(read_pgm(path), [[0, 1], [2, 3]])


def test_pgm_roundtrip_and_range_check(tmp_path):
    mask = np.arange(12, dtype=np.int64).reshape(3, 4)
    path = tmp_path / "m.pgm"
    write_pgm(mask, path)
    assert np.array_equal(read_pgm(path), mask)
    with pytest.raises(ValueError):
        write_pgm(mask - 5, path)


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

def test_synth_scene_deterministic():
    a = synth_scene(7, 32, 40, 6, 3)
    b = synth_scene(7, 32, 40, 6, 3)
    assert np.array_equal(a.cube, b.cube)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.mask, b.mask)


def test_synth_scene_two_classes_label_set():
    s = synth_scene(5, 16, 16, 4, 2)
    assert set(np.unique(s.mask)) == {0, 1}


def test_synth_scene_class_means_match_signatures():
    s = synth_scene(7, 64, 64, 8, 4)
    sig = scene_signatures(7, 64, 64, 8, 4)
    for k in range(4):
        mean_spec = s.cube[s.mask == k].mean(axis=0)
        assert np.abs(mean_spec - sig[k]).max() < 0.03


def test_synth_scene_value_ranges():
    for seed in range(5):
        s = synth_scene(seed, 24, 24, 5, 4)
        validate_sample(s)
        assert s.cube.min() >= 0.0 and s.cube.max() <= 1.0
        assert s.rgb.min() >= -1.0 and s.rgb.max() <= 1.0


def test_synth_scene_rgb_follows_palette():
    # shading is in [0.7, 1.0], so each pixel's [0,1]-range color must sit
    # between 0.7*palette and palette for its class
    s = synth_scene(21, 32, 32, 8, 4)
    rgb01 = (s.rgb.astype(np.float64) + 1.0) / 2.0
    colors = PALETTE[:4][s.mask]
    assert (rgb01 <= colors + 1e-6).all()
    assert (rgb01 >= 0.7 * colors - 1e-6).all()


def test_synth_scene_validates_arguments():
    with pytest.raises(ValueError):
        synth_scene(0, 4, 16, 8, 4)
    with pytest.raises(ValueError):
        synth_scene(0, 16, 16, 1, 4)
    with pytest.raises(ValueError):
        synth_scene(0, 16, 16, 8, 1)
    with pytest.raises(ValueError):
        synth_scene(0, 16, 16, 8, MAX_CLASSES + 1)


def test_class_anchors_distinct_and_bounded():
    anchors = np.stack([class_anchor(k, 8) for k in range(MAX_CLASSES)])
    assert anchors.min() >= 0.21 - 1e-6 and anchors.max() <= 0.79 + 1e-6
    dist = np.abs(anchors[:, None] - anchors[None]).mean(-1)
    dist += np.eye(MAX_CLASSES)
    assert dist.min() > 0.05
    with pytest.raises(ValueError):
        class_anchor(MAX_CLASSES, 8)


def test_synth_dataset_uses_disjoint_seeds():
    train = synth_dataset(0, 3, 16, 16, 4, 4)
    val = synth_dataset(0, 2, 16, 16, 4, 4, start=3)
    seeds = [s.seed for s in train + val]
    assert len(set(seeds)) == 5
    assert seeds == [scene_seed(0, i) for i in range(5)]


# ---------------------------------------------------------------------------
# Patch and crop geometry
# ---------------------------------------------------------------------------

def test_patch_origins_worked_examples():
    assert patch_origins(512, 256, 0) == [0, 256]
    assert patch_origins(512, 256, 64) == [0, 256]
    assert patch_origins(256, 256, 64) == [0]
    assert patch_origins(64, 32, 8) == [0, 32]
    # non-divisible span: the nominal stride-24 grid would leave a gap
    # before the flush window, so origins respace to stay within patch
    assert patch_origins(100, 32, 8) == [0, 23, 45, 68]


def test_patch_origins_cover_axis():
    rng = np.random.default_rng(14)
    for _ in range(50):
        length = int(rng.integers(8, 100))
        patch = int(rng.integers(1, length + 1))
        overlap = int(rng.integers(0, patch))
        origins = patch_origins(length, patch, overlap)
        covered = np.zeros(length, dtype=bool)
        for o in origins:
            covered[o:o + patch] = True
        assert covered.all()
        assert origins[-1] == length - patch


def test_patch_origins_validation():
    with pytest.raises(ValueError):
        patch_origins(16, 32, 0)
    with pytest.raises(ValueError):
        patch_origins(16, 8, 8)


def test_extract_patches_are_views():
    s = synth_scene(3, 32, 32, 4, 3)
    cube = s.cube.copy()
    patches = extract_patches(cube, s.rgb, 16, 16, 4, mask=s.mask)
    assert len(patches) == 4  # origins [0, 16] per axis
    cube[0, 0, 0] = 0.123
    assert patches[0].cube[0, 0, 0] == np.float32(0.123)


def test_extract_patches_zero_mask_when_missing():
    s = synth_scene(3, 16, 16, 4, 3)
    patches = extract_patches(s.cube, s.rgb, 8, 8, 0)
    assert all((p.mask == 0).all() for p in patches)


def test_random_crop_alignment_and_determinism():
    s = synth_scene(9, 40, 48, 5, 4)
    a = random_crop_pair(s, 24, (4, 2))
    b = random_crop_pair(s, 24, (4, 2))
    assert np.array_equal(a.cube, b.cube)
    # locate the crop origin from the mask and check all three line up
    found = False
    for oy in range(40 - 24 + 1):
        for ox in range(48 - 24 + 1):
            if np.array_equal(s.mask[oy:oy + 24, ox:ox + 24], a.mask):
                if np.array_equal(s.cube[oy:oy + 24, ox:ox + 24], a.cube) and \
                        np.array_equal(s.rgb[oy:oy + 24, ox:ox + 24], a.rgb):
                    found = True
    assert found


def test_random_crop_uniform_origins():
    s = synth_scene(2, 64, 64, 4, 4)
    marker = np.arange(64 * 64, dtype=np.int64).reshape(64, 64)
    tagged = SceneSample(cube=s.cube, rgb=s.rgb, mask=marker)
    oys, oxs = [], []
    for i in range(1000):
        c = random_crop_pair(tagged, 32, (9, i))
        oys.append(int(c.mask[0, 0]) // 64)
        oxs.append(int(c.mask[0, 0]) % 64)
    for vals in (oys, oxs):
        counts = np.bincount(vals, minlength=33)
        assert counts.size == 33  # origins live in [0, 32]
        assert chisquare(counts).pvalue > 0.01


def test_random_crop_identity_and_validation():
    s = synth_scene(1, 16, 16, 4, 3)
    c = random_crop_pair(s, 16, 0)
    assert np.array_equal(c.cube, s.cube)
    with pytest.raises(ValueError):
        random_crop_pair(s, 17, 0)


def test_normalize_cube_cases():
    assert np.array_equal(normalize_cube(np.array([[[2.0, 4.0]]])), [[[0.0, 1.0]]])
    assert np.array_equal(normalize_cube(np.full((2, 2, 2), 5.0)), np.zeros((2, 2, 2)))
    rng = np.random.default_rng(15)
    x = normalize_cube(rng.normal(size=(6, 5, 4)))
    assert x.min() == 0.0 and x.max() == 1.0


# ---------------------------------------------------------------------------
# Dataset directories
# ---------------------------------------------------------------------------

def test_save_load_dataset_roundtrip(tmp_path):
    samples = synth_dataset(3, 3, 16, 16, 4, 4)
    save_dataset(samples, tmp_path)
    back = load_dataset(tmp_path)
    assert len(back) == 3
    for orig, got in zip(samples, back):
        assert np.array_equal(got.cube, orig.cube)  # cube path is bit-exact
        assert np.abs(got.rgb - orig.rgb).max() <= 1.0 / 255.0 + 1e-6
        assert np.array_equal(got.mask, orig.mask)


def test_load_dataset_missing_pieces(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)
    s = synth_scene(0, 16, 16, 4, 4)
    write_cube(s.cube, tmp_path / "pair_00000.cube")
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path)  # rgb missing
    write_ppm(s.rgb, tmp_path / "pair_00000.ppm")
    got = load_dataset(tmp_path)[0]  # pgm missing -> zero mask
    assert (got.mask == 0).all()


def test_validate_sample_rejects_bad_shapes_and_labels():
    s = synth_scene(0, 16, 16, 4, 4)
    with pytest.raises(ValueError):
        validate_sample(SceneSample(cube=s.cube, rgb=s.rgb[:8], mask=s.mask))
    with pytest.raises(ValueError):
        validate_sample(SceneSample(cube=s.cube, rgb=s.rgb,
                                    mask=np.full((16, 16), MAX_CLASSES)))
