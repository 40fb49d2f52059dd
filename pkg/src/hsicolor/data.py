"""Scene data: hyperspectral cube files, synthetic scenes, patch geometry.

A scene pairs a hyperspectral cube (H, W, L) float32 in [0, 1] with an RGB
target (H, W, 3) float32 in [-1, 1] and an integer label mask (H, W).
Cubes travel in a small band-sequential binary format; RGB and masks use
plain PPM/PGM so outputs open anywhere.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

CUBE_MAGIC = b"IHC1"
CUBE_DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sIIII")  # magic, height, width, bands, dtype code

MAX_CLASSES = 16

# One fixed color per class label, values in [0, 1].
PALETTE = np.array(
    [
        [0.12, 0.47, 0.71], [0.89, 0.47, 0.13], [0.17, 0.63, 0.17],
        [0.84, 0.15, 0.16], [0.58, 0.40, 0.74], [0.55, 0.34, 0.29],
        [0.89, 0.47, 0.76], [0.50, 0.50, 0.50], [0.74, 0.74, 0.13],
        [0.09, 0.75, 0.81], [0.68, 0.78, 0.91], [0.99, 0.73, 0.47],
        [0.60, 0.87, 0.54], [1.00, 0.60, 0.59], [0.77, 0.69, 0.84],
        [0.77, 0.61, 0.58],
    ],
    dtype=np.float32,
)


class CubeFormatError(ValueError):
    """Raised when a cube file violates the on-disk contract."""


@dataclass(frozen=True)
class SceneSample:
    """One paired training sample. Arrays may be views into larger buffers."""

    cube: np.ndarray   # (H, W, L) float32, values in [0, 1]
    rgb: np.ndarray    # (H, W, 3) float32, values in [-1, 1]
    mask: np.ndarray   # (H, W) int64 class labels
    seed: int = 0

    @property
    def height(self) -> int:
        return self.cube.shape[0]

    @property
    def width(self) -> int:
        return self.cube.shape[1]

    @property
    def bands(self) -> int:
        return self.cube.shape[2]


def validate_sample(sample: SceneSample) -> None:
    cube, rgb, mask = sample.cube, sample.rgb, sample.mask
    if cube.ndim != 3:
        raise ValueError(f"cube must be (H, W, L), got shape {cube.shape}")
    if rgb.shape != (cube.shape[0], cube.shape[1], 3):
        raise ValueError(f"rgb shape {rgb.shape} does not match cube {cube.shape}")
    if mask.shape != cube.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match cube {cube.shape}")
    if not np.isfinite(cube).all() or not np.isfinite(rgb).all():
        raise ValueError("sample contains non-finite values")
    if cube.min() < 0.0 or cube.max() > 1.0:
        raise ValueError("cube values must lie in [0, 1]")
    if rgb.min() < -1.0 or rgb.max() > 1.0:
        raise ValueError("rgb values must lie in [-1, 1]")
    if mask.min() < 0 or mask.max() >= MAX_CLASSES:
        raise ValueError(f"mask labels must lie in [0, {MAX_CLASSES})")


# ---------------------------------------------------------------------------
# Cube file format
# ---------------------------------------------------------------------------

def write_cube(values: np.ndarray, path) -> None:
    """Write an (H, W, L) float32 cube, band-sequential, little-endian.

    Layout: 4-byte magic, u32 height/width/bands/dtype-code header, then
    bands * height * width float32 payload (band-major, rows within band).
    """
    if values.ndim != 3:
        raise ValueError(f"cube must be 3-d, got shape {values.shape}")
    if not np.isfinite(values).all():
        raise ValueError("cube contains non-finite values")
    h, w, bands = values.shape
    payload = np.ascontiguousarray(values.transpose(2, 0, 1), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CUBE_MAGIC, h, w, bands, CUBE_DTYPE_FLOAT32))
        fh.write(payload.tobytes())


def read_cube(path) -> np.ndarray:
    """Inverse of :func:`write_cube`; returns an owned (H, W, L) float32 array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CubeFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, h, w, bands, dtype_code = _HEADER.unpack_from(raw)
    if magic != CUBE_MAGIC:
        raise CubeFormatError(f"{path}: bad magic {magic!r}")
    if dtype_code != CUBE_DTYPE_FLOAT32:
        raise CubeFormatError(f"{path}: unsupported dtype code {dtype_code}")
    expected = _HEADER.size + 4 * h * w * bands
    if len(raw) != expected:
        raise CubeFormatError(
            f"{path}: payload size mismatch, expected {expected} bytes got {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(bands, h, w).transpose(1, 2, 0).astype(np.float32)


# ---------------------------------------------------------------------------
# PPM / PGM
# ---------------------------------------------------------------------------

def rgb_to_bytes(rgb: np.ndarray) -> np.ndarray:
    """Map [-1, 1] float RGB to uint8, rounding half away from the clip edge."""
    return np.clip(np.rint((rgb + 1.0) * 0.5 * 255.0), 0, 255).astype(np.uint8)


def write_ppm(rgb: np.ndarray, path) -> None:
    """Write a [-1, 1] float (H, W, 3) image as binary PPM (P6, maxval 255)."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {rgb.shape}")
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb_to_bytes(rgb).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM back into [-1, 1] float32."""
    u8 = _read_pnm(path, b"P6", 3)
    return (u8.astype(np.float32) / 255.0) * 2.0 - 1.0


def write_pgm(mask: np.ndarray, path) -> None:
    """Write an integer label mask as binary PGM (P5, maxval 255)."""
    if mask.ndim != 2:
        raise ValueError(f"expected (H, W), got {mask.shape}")
    if mask.min() < 0 or mask.max() > 255:
        raise ValueError("mask labels must fit in a byte")
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(mask.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    return _read_pnm(path, b"P5", 1).astype(np.int64)


def _read_pnm(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:  # magic, width, height, maxval
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace before the raster
    if fields[0] != magic:
        raise ValueError(f"{path}: expected {magic!r}, got {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    data = np.frombuffer(raw, dtype=np.uint8, offset=pos, count=h * w * channels)
    if channels == 1:
        return data.reshape(h, w).copy()
    return data.reshape(h, w, channels).copy()


# ---------------------------------------------------------------------------
# Synthetic scenes
# ---------------------------------------------------------------------------

def class_anchor(k: int, bands: int) -> np.ndarray:
    """Fixed smooth spectrum for class k: a sinusoid in [0.21, 0.79].

    Anchors are the same in every scene so the class-to-spectrum mapping is
    identifiable across a dataset; frequency/phase pairs keep the first
    MAX_CLASSES anchors pairwise well separated.
    """
    if not 0 <= k < MAX_CLASSES:
        raise ValueError(f"class index must be in [0, {MAX_CLASSES})")
    t = np.linspace(0.0, 1.0, bands)
    freq = 0.5 + 0.5 * (k % 4)
    phase = 2.0 * np.pi * ((5 * k) % 17) / 17.0
    return (0.5 + 0.29 * np.sin(2.0 * np.pi * freq * t + phase)).astype(np.float32)


def _smooth_jitter(rng: np.random.Generator, bands: int) -> np.ndarray:
    """Per-scene smooth perturbation in [-0.06, 0.06] (cubic control spline)."""
    n_ctrl = min(max(2, bands // 3 + 1), bands)
    ctrl = rng.uniform(-0.06, 0.06, size=n_ctrl)
    if n_ctrl == bands:
        return ctrl.astype(np.float32)
    xs = np.linspace(0.0, bands - 1.0, n_ctrl)
    if n_ctrl >= 4:
        vals = CubicSpline(xs, ctrl)(np.arange(bands))
    else:
        vals = np.interp(np.arange(bands), xs, ctrl)
    return np.clip(vals, -0.06, 0.06).astype(np.float32)


def _draw_mask(rng: np.random.Generator, h: int, w: int,
               num_classes: int) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(64):
        sites = rng.uniform(0.0, 1.0, size=(num_classes, 2)) * [h - 1, w - 1]
        d2 = (yy[None] - sites[:, 0, None, None]) ** 2 \
            + (xx[None] - sites[:, 1, None, None]) ** 2
        mask = np.argmin(d2, axis=0)
        if np.unique(mask).size == num_classes:
            return mask
    # pragma: no cover - astronomically unlikely after 64 draws
    raise RuntimeError("could not place Voronoi sites with all classes present")


def _draw_signatures(rng: np.random.Generator, bands: int,
                     num_classes: int) -> np.ndarray:
    sigs = np.stack([class_anchor(k, bands) for k in range(num_classes)])
    jit = np.stack([_smooth_jitter(rng, bands) for _ in range(num_classes)])
    return sigs + jit


def _shading_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Low-frequency multiplicative field in [0.7, 1.0] (bilinear coarse grid)."""
    coarse = rng.uniform(0.7, 1.0, size=(4, 4))
    rows = np.empty((4, w))
    xs = np.linspace(0.0, 3.0, w)
    for i in range(4):
        rows[i] = np.interp(xs, np.arange(4), coarse[i])
    ys = np.linspace(0.0, 3.0, h)
    field = np.empty((h, w))
    for j in range(w):
        field[:, j] = np.interp(ys, np.arange(4), rows[:, j])
    return field.astype(np.float32)


def synth_scene(seed: int, h: int = 64, w: int = 64, bands: int = 8,
                num_classes: int = 4) -> SceneSample:
    """Deterministic synthetic scene: Voronoi regions with smooth spectra.

    Each class owns a spectral signature (its fixed anchor plus a per-scene
    smooth jitter; cube = signature + N(0, 0.02^2), clipped to [0, 1]) and a
    palette color; the RGB target is the palette image under a shared
    low-frequency shading field, mapped to [-1, 1]. Regeneration from the
    same seed is bit-identical.
    """
    if h < 8 or w < 8:
        raise ValueError(f"scene dims must be >= 8, got {h}x{w}")
    if bands < 2:
        raise ValueError(f"need at least 2 bands, got {bands}")
    if not 2 <= num_classes <= MAX_CLASSES:
        raise ValueError(f"num_classes must be in [2, {MAX_CLASSES}]")
    rng = np.random.default_rng(seed)

    mask = _draw_mask(rng, h, w, num_classes)
    signatures = _draw_signatures(rng, bands, num_classes)
    cube = signatures[mask] + rng.normal(0.0, 0.02, size=(h, w, bands))
    cube = np.clip(cube, 0.0, 1.0).astype(np.float32)

    shading = _shading_field(rng, h, w)
    rgb01 = PALETTE[:num_classes][mask] * shading[..., None]
    rgb = (2.0 * rgb01 - 1.0).astype(np.float32)

    sample = SceneSample(cube=cube, rgb=rgb, mask=mask.astype(np.int64), seed=seed)
    validate_sample(sample)
    return sample


def scene_signatures(seed: int, h: int = 64, w: int = 64, bands: int = 8,
                     num_classes: int = 4) -> np.ndarray:
    """The (num_classes, bands) signatures synth_scene(seed, ...) used.

    Replays the scene's generator stream up to the signature draw, so the
    result matches the cube construction exactly.
    """
    rng = np.random.default_rng(seed)
    _draw_mask(rng, h, w, num_classes)
    return _draw_signatures(rng, bands, num_classes)


def scene_seed(data_seed: int, index: int) -> int:
    """Stable per-sample seed derivation for dataset generation."""
    return (int(data_seed) << 20) + int(index)


def synth_dataset(data_seed: int, count: int, h: int = 64, w: int = 64,
                  bands: int = 8, num_classes: int = 4,
                  start: int = 0) -> list[SceneSample]:
    return [
        synth_scene(scene_seed(data_seed, start + i), h, w, bands, num_classes)
        for i in range(count)
    ]


# ---------------------------------------------------------------------------
# Patch and crop geometry
# ---------------------------------------------------------------------------

def patch_origins(length: int, patch: int, overlap: int) -> list[int]:
    """Window origins along one axis, last window flush against the edge.

    Origins follow the ideal stride = patch - overlap grid when that grid
    lands flush; otherwise they are respaced evenly (never more than patch
    apart), so the windows always cover the whole axis.
    """
    if patch <= 0 or patch > length:
        raise ValueError(f"patch {patch} must be in (0, {length}]")
    if not 0 <= overlap < patch:
        raise ValueError(f"overlap {overlap} must be in [0, patch)")
    stride = patch - overlap
    span = length - patch
    if span == 0:
        return [0]
    n = max(-((span + 1) // -stride), -(span // -patch) + 1, 2)
    return [round(i * span / (n - 1)) for i in range(n - 1)] + [span]


def extract_patches(cube: np.ndarray, rgb: np.ndarray, patch_h: int, patch_w: int,
                    overlap: int, mask: np.ndarray | None = None,
                    seed: int = 0) -> list[SceneSample]:
    """Overlapping patch views over a scene (row-major origin order).

    Views share memory with the inputs. When no mask is supplied the views
    carry slices of one shared all-zero mask.
    """
    h, w = cube.shape[:2]
    if rgb.shape[:2] != (h, w):
        raise ValueError("cube and rgb spatial dims disagree")
    if mask is None:
        mask = np.zeros((h, w), dtype=np.int64)
    elif mask.shape != (h, w):
        raise ValueError("mask spatial dims disagree")
    out = []
    for oy in patch_origins(h, patch_h, overlap):
        for ox in patch_origins(w, patch_w, overlap):
            out.append(SceneSample(
                cube=cube[oy:oy + patch_h, ox:ox + patch_w],
                rgb=rgb[oy:oy + patch_h, ox:ox + patch_w],
                mask=mask[oy:oy + patch_h, ox:ox + patch_w],
                seed=seed,
            ))
    return out


def random_crop_pair(sample: SceneSample, size: int, rng_state) -> SceneSample:
    """Aligned random square crop of cube/rgb/mask, uniform over valid origins."""
    h, w = sample.cube.shape[:2]
    if size > min(h, w):
        raise ValueError(f"crop {size} exceeds sample dims {h}x{w}")
    rng = np.random.default_rng(rng_state)
    oy = int(rng.integers(0, h - size + 1))
    ox = int(rng.integers(0, w - size + 1))
    return SceneSample(
        cube=sample.cube[oy:oy + size, ox:ox + size],
        rgb=sample.rgb[oy:oy + size, ox:ox + size],
        mask=sample.mask[oy:oy + size, ox:ox + size],
        seed=sample.seed,
    )


def normalize_cube(values: np.ndarray) -> np.ndarray:
    """Per-cube min-max normalization to [0, 1]; constant cubes map to zeros."""
    values = values.astype(np.float32)
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo < 1e-12:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# On-disk dataset of paired samples
# ---------------------------------------------------------------------------

def save_dataset(samples: list[SceneSample], out_dir) -> list[str]:
    """Write samples as cube/ppm/pgm triplets named pair_NNNNN.*"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stems = []
    for i, s in enumerate(samples):
        stem = f"pair_{i:05d}"
        write_cube(s.cube, out_dir / f"{stem}.cube")
        write_ppm(s.rgb, out_dir / f"{stem}.ppm")
        write_pgm(s.mask, out_dir / f"{stem}.pgm")
        stems.append(stem)
    return stems


def load_dataset(data_dir) -> list[SceneSample]:
    data_dir = Path(data_dir)
    cubes = sorted(data_dir.glob("*.cube"))
    if not cubes:
        raise FileNotFoundError(f"no .cube files under {data_dir}")
    samples = []
    for cube_path in cubes:
        stem = cube_path.stem
        rgb_path = data_dir / f"{stem}.ppm"
        mask_path = data_dir / f"{stem}.pgm"
        if not rgb_path.exists():
            raise FileNotFoundError(f"missing rgb pair for {cube_path}")
        cube = read_cube(cube_path)
        rgb = read_ppm(rgb_path)
        if mask_path.exists():
            mask = read_pgm(mask_path)
        else:
            mask = np.zeros(cube.shape[:2], dtype=np.int64)
        samples.append(SceneSample(cube=cube, rgb=rgb, mask=mask))
    return samples
