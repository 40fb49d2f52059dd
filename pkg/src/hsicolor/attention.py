"""Local refinement: CBAM attention, deformable sampling, mask sparsification.

The local gating module runs two branches over a depthwise-separable
projection of its input: a cascade of three deformable conv stages whose
outputs are densely fused, and an attention branch that decomposes the
feature into four complementary channel/spatial subspaces and sparsifies it
over three iterative stages. The branches are concatenated and fused back to
the input width.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class ChannelGate(nn.Module):
    """Channel attention: shared MLP over average- and max-pooled descriptors."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.mlp = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(hidden, channels, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        avg = self.mlp(F.adaptive_avg_pool2d(x, 1))
        mx = self.mlp(F.adaptive_max_pool2d(x, 1))
        return torch.sigmoid(avg + mx)


class SpatialGate(nn.Module):
    """Spatial attention: 7x7 conv over channel-mean and channel-max maps."""

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True),
                            x.amax(dim=1, keepdim=True)], dim=1)
        return torch.sigmoid(self.conv(pooled))


class Cbam(nn.Module):
    """Channel gate followed by spatial gate, both multiplicative."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        self.channel = ChannelGate(channels, reduction)
        self.spatial = SpatialGate()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x * self.channel(x)
        return x * self.spatial(x)


def deformable_sample(x: torch.Tensor, offsets: torch.Tensor,
                      weight: torch.Tensor,
                      bias: torch.Tensor | None = None) -> torch.Tensor:
    """3x3 deformable convolution (v1): per-tap offsets, bilinear sampling,
    zeros outside bounds. With all offsets zero this equals a dense 3x3 conv
    with padding 1.

    Args:
        x: (B, C_in, H, W) input.
        offsets: (B, 18, H, W), pairs (dy, dx) per kernel tap in row-major
            tap order.
        weight: (C_out, C_in, 3, 3) kernel.
        bias: optional (C_out,).
    """
    b, c_in, h, w = x.shape
    if weight.shape[1] != c_in or weight.shape[2:] != (3, 3):
        raise ValueError(f"weight must be (C_out, {c_in}, 3, 3), got {tuple(weight.shape)}")
    if offsets.shape != (b, 18, h, w):
        raise ValueError(f"offsets must be (B, 18, H, W), got {tuple(offsets.shape)}")
    ys = torch.arange(h, device=x.device, dtype=x.dtype).view(1, h, 1)
    xs = torch.arange(w, device=x.device, dtype=x.dtype).view(1, 1, w)
    sy = max(h - 1, 1)
    sx = max(w - 1, 1)
    out = None
    for tap in range(9):
        ky, kx = divmod(tap, 3)
        py = ys + (ky - 1) + offsets[:, 2 * tap]
        px = xs + (kx - 1) + offsets[:, 2 * tap + 1]
        grid = torch.stack([2.0 * px / sx - 1.0, 2.0 * py / sy - 1.0], dim=-1)
        sampled = F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros",
                                align_corners=True)
        term = torch.einsum("bchw,oc->bohw", sampled, weight[:, :, ky, kx])
        out = term if out is None else out + term
    if bias is not None:
        out = out + bias.view(1, -1, 1, 1)
    return out


class DeformableUnit(nn.Module):
    """Offset-predicting 3x3 conv (zero-initialized, so the unit starts as a
    dense conv) followed by deformable sampling."""

    def __init__(self, channels: int):
        super().__init__()
        self.offset_conv = nn.Conv2d(channels, 18, 3, padding=1)
        nn.init.zeros_(self.offset_conv.weight)
        nn.init.zeros_(self.offset_conv.bias)
        self.weight = nn.Parameter(torch.empty(channels, channels, 3, 3))
        nn.init.kaiming_uniform_(self.weight, a=5 ** 0.5)
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return deformable_sample(x, self.offset_conv(x), self.weight, self.bias)

    @torch.no_grad()
    def configure_identity(self):
        nn.init.zeros_(self.offset_conv.weight)
        nn.init.zeros_(self.offset_conv.bias)
        self.weight.zero_()
        n = self.weight.shape[0]
        self.weight[torch.arange(n), torch.arange(n), 1, 1] = 1.0
        self.bias.zero_()


class CascadeDeformable(nn.Module):
    """Three chained deformable units with dense 1x1 fusion of all stages."""

    def __init__(self, channels: int, stages: int = 3):
        super().__init__()
        self.units = nn.ModuleList(DeformableUnit(channels) for _ in range(stages))
        self.fuse = nn.Conv2d(stages * channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        outs = []
        d = x
        for unit in self.units:
            d = unit(d)
            outs.append(d)
        return self.fuse(torch.cat(outs, dim=1))


class SaliencyMasks(nn.Module):
    """Channel mask from pooled statistics and spatial mask from a 1x1 conv."""

    def __init__(self, channels: int):
        super().__init__()
        self.channel_conv = nn.Conv2d(channels, channels, 1)
        self.spatial_conv = nn.Conv2d(channels, 1, 1)

    def forward(self, x: torch.Tensor):
        m_ch = torch.sigmoid(self.channel_conv(F.adaptive_avg_pool2d(x, 1)))
        m_spa = torch.sigmoid(self.spatial_conv(x))
        return m_ch, m_spa


def _exact_split(total: torch.Tensor, m: torch.Tensor):
    """Split total into (total*m, total*(1-m)) so the pair sums back bitwise.

    The side whose weight is >= 0.5 takes the rounded product; the other side
    is total minus that product, which Sterbenz's lemma makes exactly
    representable (the product lies in [total/2, total]). The pair therefore
    sums to total with no rounding at all.
    """
    direct = total * m
    comp = total * (1 - m)
    hi = m >= 0.5
    a = torch.where(hi, direct, total - comp)
    b = torch.where(hi, total - direct, comp)
    return a, b


def sparsify_parts(f: torch.Tensor, m_ch: torch.Tensor, m_spa: torch.Tensor):
    """Four complementary subspaces of f under channel/spatial masks.

    Returns (p1, p2, p3, p4) weighted approximately by (m_ch*m_spa,
    m_ch*(1-m_spa), (1-m_ch)*m_spa, (1-m_ch)*(1-m_spa)); each split places
    the rounding on the heavier side so (p1 + p2) + (p3 + p4) == f bitwise.
    """
    fc, rest = _exact_split(f, m_ch)
    p1, p2 = _exact_split(fc, m_spa)
    p3, p4 = _exact_split(rest, m_spa)
    return p1, p2, p3, p4


class SparsifyStage(nn.Module):
    """One decomposition stage: masks, four subspaces, 1x1 fusion."""

    def __init__(self, channels: int):
        super().__init__()
        self.masks = SaliencyMasks(channels)
        self.fuse = nn.Conv2d(4 * channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        m_ch, m_spa = self.masks(x)
        return self.fuse(torch.cat(sparsify_parts(x, m_ch, m_spa), dim=1))


class DepthwiseSeparableConv(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.depthwise = nn.Conv2d(in_channels, in_channels, 3, padding=1,
                                   groups=in_channels)
        self.pointwise = nn.Conv2d(in_channels, out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pointwise(self.depthwise(x))


class LocalGating(nn.Module):
    """Deformable cascade + attention-sparsified branch, fused back to C.

    ``use_dcn=False`` replaces the deformable branch with the projected
    feature itself; ``use_asm=False`` does the same for the sparsified branch
    (keeping only CBAM). Each sparsification stage owns its parameters.
    """

    def __init__(self, channels: int, use_dcn: bool = True, use_asm: bool = True):
        super().__init__()
        self.use_dcn = use_dcn
        self.use_asm = use_asm
        self.proj = DepthwiseSeparableConv(channels, channels)
        self.dcn = CascadeDeformable(channels) if use_dcn else None
        self.cbam = Cbam(channels)
        if use_asm:
            self.stages = nn.ModuleList(SparsifyStage(channels) for _ in range(3))
            self.sparse_fuse = nn.Conv2d(3 * channels, channels, 1)
        self.out = DepthwiseSeparableConv(2 * channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        p = self.proj(x)
        h_dcn = self.dcn(p) if self.use_dcn else p
        f = self.cbam(p)
        if self.use_asm:
            outs = []
            for stage in self.stages:
                f = stage(f)
                outs.append(f)
            h_sparse = self.sparse_fuse(torch.cat(outs, dim=1))
        else:
            h_sparse = f
        return self.out(torch.cat([h_dcn, h_sparse], dim=1))
