"""Wavelet / Fourier frequency path.

Orthonormal Haar analysis over 2x2 blocks (a, b top row; c, d bottom row):

    LL = (a+b+c+d)/2   LH = (a+b-c-d)/2   HL = (a-b+c-d)/2   HH = (a-b-c+d)/2

so energy is preserved exactly and ``iwt2`` inverts ``dwt2``. The enhancement
module runs a 3-level decomposition on the refined low band, gates each level's
low band in the Fourier domain, and reconstructs bottom-up, adding the gate
delta of each shallower level into the carried low band. With the refinement
at identity and zero gate weights the module reproduces its input exactly.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def dwt2(x: torch.Tensor):
    """Single-level orthonormal Haar transform over the trailing two dims."""
    if x.shape[-2] % 2 or x.shape[-1] % 2:
        raise ValueError(f"spatial dims must be even, got {tuple(x.shape[-2:])}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2
    lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2
    hh = (a - b - c + d) / 2
    return ll, lh, hl, hh


def iwt2(ll: torch.Tensor, lh: torch.Tensor, hl: torch.Tensor,
         hh: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`dwt2`."""
    if not (ll.shape == lh.shape == hl.shape == hh.shape):
        raise ValueError("sub-band shapes disagree")
    a = (ll + lh + hl + hh) / 2
    b = (ll + lh - hl - hh) / 2
    c = (ll - lh + hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    h, w = ll.shape[-2], ll.shape[-1]
    out = ll.new_empty(*ll.shape[:-2], 2 * h, 2 * w)
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = b
    out[..., 1::2, 0::2] = c
    out[..., 1::2, 1::2] = d
    return out


class SubbandRefine(nn.Module):
    """Joint refinement of the four sub-bands of one level.

    Concatenates the bands channel-wise and applies a dilated (rate 2)
    depthwise separable conv, then splits back. Dilation widens the support
    without touching the band resolution.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.depthwise = nn.Conv2d(4 * channels, 4 * channels, 3,
                                   padding=2, dilation=2, groups=4 * channels)
        self.pointwise = nn.Conv2d(4 * channels, 4 * channels, 1)

    def forward(self, ll, lh, hl, hh):
        y = self.pointwise(self.depthwise(torch.cat([ll, lh, hl, hh], dim=1)))
        return torch.split(y, self.channels, dim=1)

    @torch.no_grad()
    def configure_identity(self):
        self.depthwise.weight.zero_()
        self.depthwise.weight[:, 0, 1, 1] = 1.0
        self.depthwise.bias.zero_()
        self.pointwise.weight.zero_()
        n = self.pointwise.weight.shape[0]
        self.pointwise.weight[torch.arange(n), torch.arange(n), 0, 0] = 1.0
        self.pointwise.bias.zero_()


def complex_gelu(z: torch.Tensor) -> torch.Tensor:
    """GELU applied to real and imaginary parts independently."""
    return torch.complex(F.gelu(z.real), F.gelu(z.imag))


def gated_residual(base: torch.Tensor, y: torch.Tensor,
                   beta: torch.Tensor | float) -> torch.Tensor:
    """base + (2*sigmoid(beta*y) - 1) * y; beta == 0 leaves base unchanged."""
    if not torch.is_tensor(beta):
        beta = base.new_tensor(beta)
    return base + (2.0 * torch.sigmoid(beta * y) - 1.0) * y


class FourierGate(nn.Module):
    """Per-channel element-wise spectral gating of one level's low band.

    Y = irfft2(act(rfft2(x) * W1) * W2) with learnable complex W1, W2 stored
    as (real, imag) pairs laid out for the configured half-spectrum. When the
    runtime spatial size differs from the configured one the weight grids are
    bilinearly resized. ``activation`` may be swapped (e.g. for identity in
    round-trip tests); the default is GELU on real/imag parts.
    """

    def __init__(self, channels: int, height: int, width: int,
                 beta_init: float = 0.1):
        super().__init__()
        self.height = height
        self.width = width
        wf = width // 2 + 1
        w1 = torch.zeros(2, channels, height, wf)
        w1[0] = 1.0  # multiplicative identity at init so gradients flow
        self.weight1 = nn.Parameter(w1)
        self.weight2 = nn.Parameter(w1.clone())
        self.beta = nn.Parameter(torch.tensor(float(beta_init)))
        self.activation = complex_gelu

    def _grid(self, weight: torch.Tensor, height: int, wf: int) -> torch.Tensor:
        if weight.shape[-2:] == (height, wf):
            return torch.complex(weight[0], weight[1])
        resized = F.interpolate(weight, size=(height, wf), mode="bilinear",
                                align_corners=False)
        return torch.complex(resized[0], resized[1])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        spec = torch.fft.rfft2(x)
        wf = w // 2 + 1
        w1 = self._grid(self.weight1, h, wf)
        w2 = self._grid(self.weight2, h, wf)
        y = self.activation(spec * w1) * w2
        return torch.fft.irfft2(y, s=(h, w))

    def delta(self, x: torch.Tensor) -> torch.Tensor:
        """Gated enhancement added to the low band during reconstruction."""
        y = self.forward(x)
        return (2.0 * torch.sigmoid(self.beta * y) - 1.0) * y

    @torch.no_grad()
    def configure_zero(self):
        self.weight1.zero_()
        self.weight2.zero_()


def _pad_to_multiple(x: torch.Tensor, multiple: int):
    h, w = x.shape[-2], x.shape[-1]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, h, w
    return F.pad(x, (0, pw, 0, ph), mode="reflect"), h, w


class FrequencyEnhancement(nn.Module):
    """Multi-level wavelet decomposition with Fourier-gated low bands.

    Analysis refines each level's four bands and recurses on the refined low
    band. Reconstruction starts from the deepest refined low band plus its
    gate delta and works upward through the refined high bands, adding each
    shallower level's gate delta into the carried low band, so the gate's
    calibration propagates to full resolution. A 1x1 skip of the input is
    added to the reconstruction. Inputs whose dims are not divisible by
    2**levels are reflect-padded and cropped after.
    """

    def __init__(self, channels: int, height: int, width: int, levels: int = 3):
        super().__init__()
        if levels < 1:
            raise ValueError("need at least one level")
        self.levels = levels
        self.refine = nn.ModuleList()
        self.gates = nn.ModuleList()
        m = 2 ** levels
        lh = height + (-height) % m  # gate grids follow the padded layout
        lw = width + (-width) % m
        for _ in range(levels):
            lh //= 2
            lw //= 2
            self.refine.append(SubbandRefine(channels))
            self.gates.append(FourierGate(channels, lh, lw))
        self.skip = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        xp, h, w = _pad_to_multiple(x, 2 ** self.levels)
        ll = xp
        stack = []  # per level: (delta, refined high bands)
        for refine, gate in zip(self.refine, self.gates):
            ll, lh, hl, hh = dwt2(ll)
            ll, lh, hl, hh = refine(ll, lh, hl, hh)
            stack.append((gate.delta(ll), lh, hl, hh))
        delta, lh, hl, hh = stack[-1]
        z = iwt2(ll + delta, lh, hl, hh)
        for delta, lh, hl, hh in reversed(stack[:-1]):
            z = iwt2(z + delta, lh, hl, hh)
        out = self.skip(xp) + z
        return out[..., :h, :w]

    @torch.no_grad()
    def configure_identity(self):
        """Exact pass-through: identity refinement, zero gates, zero skip."""
        for refine in self.refine:
            refine.configure_identity()
        for gate in self.gates:
            gate.configure_zero()
        self.skip.weight.zero_()
        self.skip.bias.zero_()
