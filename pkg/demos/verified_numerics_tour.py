"""Tour of the exactly-verifiable building blocks.

Each core operator ships with a degenerate configuration whose output is
known in closed form; this script exercises those identities the same way
the test suite does, just louder.
"""
import numpy as np
import torch
import torch.nn.functional as F

from hsicolor.attention import DeformableUnit, SaliencyMasks, sparsify_parts
from hsicolor.frequency import FrequencyEnhancement, dwt2, iwt2
from hsicolor.statespace import selective_scan

torch.manual_seed(0)

# --- orthonormal Haar analysis/synthesis -----------------------------------
x = torch.randn(1, 3, 32, 32)
ll, lh, hl, hh = dwt2(x)
back = iwt2(ll, lh, hl, hh)
energy = sum(b.pow(2).sum() for b in (ll, lh, hl, hh))
print(f"wavelet round trip max |err| {(back - x).abs().max():.2e}")
print(f"band energy / input energy   {energy / x.pow(2).sum():.9f}")

# --- selective scan degenerates ---------------------------------------------
u = torch.randint(-3, 4, (1, 32, 4)).float()
y = selective_scan(u, torch.ones_like(u), torch.zeros(4, 1),
                   torch.ones(1, 32, 1), torch.ones(1, 32, 1))
print("scan with A=0, delta=B=C=1 equals cumsum bitwise:",
      torch.equal(y, torch.cumsum(u, dim=1)))

u = torch.randn(1, 16, 3)
D = torch.randn(3)
y = selective_scan(u, torch.full_like(u, 0.2), -torch.rand(3, 2),
                   torch.randn(1, 16, 2), torch.zeros(1, 16, 2), D)
print("scan with C=0 reduces to the skip path bitwise:",
      torch.equal(y, D.view(1, 1, -1) * u))

# --- deformable conv with zero offsets is a dense conv ----------------------
unit = DeformableUnit(4).double()
x = torch.randn(2, 4, 12, 12, dtype=torch.float64)
with torch.no_grad():
    dense = F.conv2d(x, unit.weight, unit.bias, padding=1)
    print(f"zero-offset deformable vs dense conv max |err| "
          f"{(unit(x) - dense).abs().max():.2e}")

# --- saliency partition reassembles bitwise ---------------------------------
masks = SaliencyMasks(4)
f = torch.randn(1, 4, 16, 16) * 2.0 ** 30
with torch.no_grad():
    m_ch, m_spa = masks(f)
    p1, p2, p3, p4 = sparsify_parts(f, m_ch, m_spa)
print("four saliency subspaces sum back bitwise:",
      torch.equal((p1 + p2) + (p3 + p4), f))

# --- frequency enhancement has an exact identity configuration --------------
fem = FrequencyEnhancement(4, 16, 16)
fem.configure_identity()
x = torch.randn(1, 4, 16, 16)
with torch.no_grad():
    print(f"identity-configured enhancement max |out - x| "
          f"{(fem(x) - x).abs().max():.2e}")

# the same checks (plus schedules, gradients, metrics) run via: hsicolor selftest
