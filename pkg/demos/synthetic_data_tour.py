"""Tour of the synthetic scene generator and the on-disk pair format.

Generates one labeled hyperspectral scene, round-trips it through the cube
file format, and shows how full scenes are tiled into overlapping patches.
Outputs land in demo_out/data_tour/.
"""
from pathlib import Path

import numpy as np

from hsicolor.data import (extract_patches, patch_origins, read_cube,
                           synth_scene, write_cube, write_pgm, write_ppm)

out = Path("demo_out/data_tour")
out.mkdir(parents=True, exist_ok=True)

# one 48x48 scene with 6 bands and 4 material classes
scene = synth_scene(seed=7, h=48, w=48, bands=6, num_classes=4)
print(f"cube  {scene.cube.shape}  range [{scene.cube.min():.3f}, {scene.cube.max():.3f}]")
print(f"rgb   {scene.rgb.shape}  range [{scene.rgb.min():.3f}, {scene.rgb.max():.3f}]")
print(f"mask  {scene.mask.shape}  classes {sorted(int(v) for v in np.unique(scene.mask))}")

# the cube format is exact for float32 payloads
write_cube(scene.cube, out / "scene.cube")
back = read_cube(out / "scene.cube")
print("cube file round trip bitwise:", np.array_equal(back, scene.cube))

# companion images for eyeballing (any PPM/PGM viewer opens these)
write_ppm(scene.rgb, out / "scene_rgb.ppm")
write_pgm((scene.mask * (255 // 3)).astype(np.int64), out / "scene_mask.pgm")
print("wrote", out / "scene_rgb.ppm", "and", out / "scene_mask.pgm")

# tiling: origins are respaced so patches jointly cover every pixel
origins = patch_origins(length=48, patch=32, overlap=8)
print("patch origins for length 48, patch 32, overlap 8:", origins)
patches = extract_patches(scene.cube, scene.rgb, 32, 32, overlap=8,
                          mask=scene.mask)
print(f"extract_patches -> {len(patches)} patches of {patches[0].cube.shape}")

covered = np.zeros(48, dtype=bool)
for o in origins:
    covered[o:o + 32] = True
print("every pixel covered:", bool(covered.all()))
