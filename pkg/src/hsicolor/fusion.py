"""Generator assembly: fusion blocks, residual groups, reconstruction.

The generator embeds the input cube, halves resolution with a pixel
unshuffle, refines through cascaded residual groups of spatial-spectral
blocks, and reconstructs RGB at full resolution with a pixel shuffle and a
tanh head. Each block fuses a global path (2D state-space scan + frequency
enhancement), a local path (deformable/sparsified gating + frequency
enhancement) and a spectral scan path.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import LocalGating
from .frequency import FrequencyEnhancement
from .statespace import SpatialScan2D, SpectralScanBranch


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dim of (B, C, H, W) features."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return x * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class ResidualConvBlock(nn.Module):
    """x + conv(gelu(conv(x))); the closing conv starts near zero so the
    block is close to identity at init."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        with torch.no_grad():
            self.conv2.weight.mul_(1e-3)
            self.conv2.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(F.gelu(self.conv1(x)))

    @torch.no_grad()
    def configure_zero(self):
        """Zero the convolutions so the residual update vanishes and the
        block acts as the identity (used by structural tests)."""
        for conv in (self.conv1, self.conv2):
            conv.weight.zero_()
            conv.bias.zero_()
        return self


class MultiDomainFusion(nn.Module):
    """Convex per-channel blend of a spatial and a frequency feature.

    Pooled descriptors of both inputs produce paired logits; a two-way
    softmax (computed as sigmoid of the logit difference, so the pair sums
    to one exactly) weights each channel. The weighted concat is projected
    back to C and refined residually, then both inputs are re-injected with
    a fixed 0.1 gain.
    """

    GAMMA = 0.1

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.weight_dw = nn.Conv2d(2 * channels, 2 * channels, 3, padding=1,
                                   groups=2 * channels)
        self.weight_pw = nn.Conv2d(2 * channels, 2 * channels, 1)
        self.proj = nn.Conv2d(2 * channels, channels, 1)
        with torch.no_grad():  # near-zero fusion delta at init
            self.proj.weight.mul_(1e-3)
            self.proj.bias.fill_(1e-3)
        self.refine = ResidualConvBlock(channels)

    def domain_weights(self, x_spa: torch.Tensor, x_fre: torch.Tensor):
        pooled = torch.cat([F.adaptive_avg_pool2d(x_spa, 1),
                            F.adaptive_avg_pool2d(x_fre, 1)], dim=1)
        logits = self.weight_pw(self.weight_dw(pooled))
        l_spa, l_fre = logits.split(self.channels, dim=1)
        theta = torch.sigmoid(l_spa - l_fre)
        return theta, 1.0 - theta

    def forward(self, x_spa: torch.Tensor, x_fre: torch.Tensor) -> torch.Tensor:
        if x_spa.shape != x_fre.shape:
            raise ValueError(f"domain shapes disagree: {tuple(x_spa.shape)} vs "
                             f"{tuple(x_fre.shape)}")
        theta, eps = self.domain_weights(x_spa, x_fre)
        aligned = self.refine(self.proj(
            torch.cat([x_spa * theta, x_fre * eps], dim=1)))
        return aligned + self.GAMMA * x_spa + self.GAMMA * x_fre


class SpatialSpectralBlock(nn.Module):
    """Core block: global scan/frequency fusion, local gating/frequency
    fusion, then weighted recombination with a spectral scan of the input.

    alpha/beta scale the two fused residual updates (init 1); w_spa/w_spe
    are per-channel combination weights (init 0.5). Disabled sub-modules are
    replaced by identity on their input so the surrounding structure is
    unchanged.
    """

    def __init__(self, channels: int, height: int, width: int,
                 use_fem: bool = True, use_mdfm: bool = True,
                 use_dgm: bool = True, use_spectral: bool = True,
                 use_dcn: bool = True, use_asm: bool = True,
                 d_state: int = 8, spectral_group: int = 8):
        super().__init__()
        self.use_fem = use_fem
        self.use_mdfm = use_mdfm
        self.use_dgm = use_dgm
        self.use_spectral = use_spectral
        self.ln1 = ChannelLayerNorm(channels)
        self.ln2 = ChannelLayerNorm(channels)
        self.vssm = SpatialScan2D(channels, d_state=d_state)
        self.fem1 = FrequencyEnhancement(channels, height, width) if use_fem else None
        self.fem2 = FrequencyEnhancement(channels, height, width) if use_fem else None
        self.mdfm1 = MultiDomainFusion(channels) if use_mdfm else None
        self.mdfm2 = MultiDomainFusion(channels) if use_mdfm else None
        self.dgm = LocalGating(channels, use_dcn=use_dcn, use_asm=use_asm) \
            if use_dgm else None
        self.spectral = SpectralScanBranch(channels, group_size=spectral_group,
                                           d_state=d_state) if use_spectral else None
        self.spatial_block = ResidualConvBlock(channels)
        self.alpha = nn.Parameter(torch.tensor(1.0))
        self.beta = nn.Parameter(torch.tensor(1.0))
        self.w_spa = nn.Parameter(torch.full((channels,), 0.5))
        self.w_spe = nn.Parameter(torch.full((channels,), 0.5))

    def _fuse(self, mdfm, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return mdfm(a, b) if mdfm is not None else a + b

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n1 = self.ln1(x)
        g_spa = self.vssm(n1)
        g_fre = self.fem1(n1) if self.use_fem else n1
        x_global = x + self.alpha * self._fuse(self.mdfm1, g_spa, g_fre)

        n2 = self.ln2(x_global)
        l_spa = self.dgm(n2) if self.use_dgm else n2
        l_fre = self.fem2(n2) if self.use_fem else n2
        x_local = x_global + self.beta * self._fuse(self.mdfm2, l_spa, l_fre)

        x_spa = self.spatial_block(x_local)
        out = self.w_spa.view(1, -1, 1, 1) * x_spa
        if self.use_spectral:
            out = out + self.w_spe.view(1, -1, 1, 1) * self.spectral(x)
        return out


class ResidualGroup(nn.Module):
    """Sequential blocks, an optional tail residual conv block, and a group
    skip connection. ``use_fsb=False`` swaps every block for a plain
    residual conv block."""

    def __init__(self, channels: int, height: int, width: int,
                 blocks: int = 3, use_fsb: bool = True, use_rbs: bool = True,
                 **block_kwargs):
        super().__init__()
        if use_fsb:
            self.blocks = nn.ModuleList(
                SpatialSpectralBlock(channels, height, width, **block_kwargs)
                for _ in range(blocks))
        else:
            self.blocks = nn.ModuleList(
                ResidualConvBlock(channels) for _ in range(blocks))
        self.tail = ResidualConvBlock(channels) if use_rbs else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = x
        for block in self.blocks:
            y = block(y)
        if self.tail is not None:
            y = self.tail(y)
        return x + y


class Colorizer(nn.Module):
    """Hyperspectral-to-RGB generator.

    forward() accepts (B, L, H, W) cubes; spatial dims are reflect-padded to
    a multiple of 16 (2 for the pixel unshuffle, 8 for the wavelet levels at
    half resolution) and the output is cropped back. Output lies in [-1, 1].
    """

    PAD_MULTIPLE = 16

    def __init__(self, bands: int, base_channels: int = 48,
                 n_groups: int = 2, blocks_per_group: int = 3,
                 height: int = 256, width: int = 256,
                 use_fsb: bool = True, use_rbs: bool = True,
                 use_fem: bool = True, use_mdfm: bool = True,
                 use_dgm: bool = True, use_spectral: bool = True,
                 use_dcn: bool = True, use_asm: bool = True,
                 d_state: int = 8, spectral_group: int = 8):
        super().__init__()
        if base_channels % 4:
            raise ValueError("base_channels must be divisible by 4")
        self.bands = bands
        self.base_channels = base_channels
        head = base_channels // 4
        self.embed = nn.Conv2d(bands, head, 3, padding=1)
        self.down = nn.PixelUnshuffle(2)
        self.groups = nn.ModuleList(
            ResidualGroup(base_channels, height // 2, width // 2,
                          blocks=blocks_per_group, use_fsb=use_fsb,
                          use_rbs=use_rbs, use_fem=use_fem, use_mdfm=use_mdfm,
                          use_dgm=use_dgm, use_spectral=use_spectral,
                          use_dcn=use_dcn, use_asm=use_asm, d_state=d_state,
                          spectral_group=spectral_group)
            for _ in range(n_groups))
        self.up = nn.PixelShuffle(2)
        self.recon1 = ResidualConvBlock(head)
        self.recon2 = ResidualConvBlock(head)
        self.to_rgb = nn.Conv2d(head, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != self.bands:
            raise ValueError(
                f"expected (B, {self.bands}, H, W) input, got {tuple(x.shape)}")
        h, w = x.shape[-2], x.shape[-1]
        ph = (-h) % self.PAD_MULTIPLE
        pw = (-w) % self.PAD_MULTIPLE
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        f0 = self.down(self.embed(x))
        f = f0
        for group in self.groups:
            f = group(f)
        y = self.up(f + f0)
        y = torch.tanh(self.to_rgb(self.recon2(self.recon1(y))))
        return y[..., :h, :w]
